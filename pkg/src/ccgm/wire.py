"""Wire payloads shared by the CLI and the HTTP service, so both surfaces
emit bit-identical numbers. Floats are rendered with 17 significant digits,
which round-trips IEEE doubles exactly."""
from __future__ import annotations

import json

import numpy as np

from . import engine, graphs


def fmt_float(x: float) -> str:
    return f"{float(x):.17g}"


def dumps(obj) -> str:
    """JSON text with every float rendered via fmt_float."""
    return json.dumps(_render(obj), separators=(", ", ": "))


def _render(obj):
    if isinstance(obj, dict):
        return {k: _render(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_render(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_render(v) for v in obj.tolist()]
    if isinstance(obj, (float, np.floating)):
        return _RawFloat(fmt_float(obj))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    return obj


class _RawFloat(float):
    """A float that prints exactly the preformatted text."""

    def __new__(cls, text: str):
        self = super().__new__(cls, float(text))
        self.text = text
        return self

    def __repr__(self):
        return self.text


def states_payload(states: engine.NodeStateVector) -> dict:
    return {
        "nodes": list(states.dag.nodes),
        "probs": states.probs,
        "hard": states.hard,
        "provenance": list(states.provenance),
        "embedding": states.embedding,
    }


def spec_payload(actions: list[engine.Action]) -> list[dict]:
    return [a.to_dict() for a in actions]


def spec_from_payload(payload: list[dict]) -> list[engine.Action]:
    return [engine.Action.from_dict(d) for d in payload]


def graph_payload(model, x: np.ndarray | None = None) -> dict:
    """Nodes, weighted edges, topological order, and PNS-upper annotations
    (per edge and, as the max over outgoing edges, per node). Annotations
    need sample features `x`; without them they are null."""
    names = model.concept_names
    dag = graphs.extract_dag(model.adjacency_values(), names)
    edges = []
    node_pns: dict[str, float | None] = {n: None for n in names}
    for p, c, w in dag.edges:
        upper = None
        if x is not None:
            upper = engine.pns_bounds(model, x, names[p], names[c]).upper
            prev = node_pns[names[p]]
            node_pns[names[p]] = upper if prev is None else max(prev, upper)
        edges.append({"src": names[p], "dst": names[c], "weight": w, "pns_upper": upper})
    return {
        "nodes": [{"name": n, "pns_upper": node_pns[n]} for n in names],
        "edges": edges,
        "topo_order": [names[i] for i in dag.topo_order],
    }


def graph_dot(model, x: np.ndarray | None = None) -> str:
    payload = graph_payload(model, x)
    lines = ["digraph cgm {"]
    for node in payload["nodes"]:
        if node["pns_upper"] is None:
            lines.append(f'  "{node["name"]}";')
        else:
            lines.append(f'  "{node["name"]}" [pns_upper="{node["pns_upper"]:.4f}"];')
    for e in payload["edges"]:
        lines.append(f'  "{e["src"]}" -> "{e["dst"]}" [label="{e["weight"]:.4f}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def report_payload(report: engine.CausalReport) -> dict:
    return {
        "kind": report.kind,
        "nodes": list(report.nodes),
        "factual": report.factual,
        "counterfactual": report.counterfactual,
        "difference": report.difference,
    }


def pns_table(model, x: np.ndarray) -> list[dict]:
    """Upper/lower bounds for every connected ordered pair (cause set to 1)."""
    names = model.concept_names
    rows = []
    for cause in names:
        for effect in names:
            if cause == effect:
                continue
            res = engine.pns_bounds(model, x, cause, effect)
            rows.append({"cause": cause, "effect": effect, "value": res.upper,
                         "lower": res.lower, "upper": res.upper,
                         "connected": res.connected})
    return rows
