"""Unfolded DAG inference and causal operations: interventions,
counterfactuals, blocking, CaCE, PNS bounds, intervention curves, and
compositional model merging.

All operations are read-only with respect to the model. Inference follows
the extracted DAG in topological order; nodes pinned by do/blocking have
their incoming edges removed after extraction so that cycle-breaking (and
therefore every non-descendant's value) is identical across specs.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import graphs

VALID_KINDS = ("do", "ground_truth", "block")


@dataclass
class Action:
    node: str
    kind: str
    value: object = None  # 0/1 scalar, per-sample array, or None for block

    def to_dict(self) -> dict:
        v = self.value
        if isinstance(v, np.ndarray):
            v = [float(x) for x in v]
        elif v is not None:
            v = float(v)
        return {"node": self.node, "kind": self.kind, "value": v}

    @staticmethod
    def from_dict(d: dict) -> "Action":
        return Action(d["node"], d["kind"], d.get("value"))


@dataclass
class BatchStates:
    """Per-sample node states from one unfolded inference run."""

    probs: np.ndarray            # (B, k) soft probabilities
    hard: np.ndarray             # (B, k) in {0,1}; ties at 0.5 resolve to 1
    provenance: list[str]        # per node
    mixed: np.ndarray            # (B, k, m) state-weighted embeddings
    dag: graphs.Dag

    def single(self, row: int = 0) -> "NodeStateVector":
        return NodeStateVector(self.probs[row], self.hard[row], list(self.provenance),
                               self.mixed[row], self.dag)


@dataclass
class NodeStateVector:
    probs: np.ndarray
    hard: np.ndarray
    provenance: list[str]
    embedding: np.ndarray
    dag: graphs.Dag


@dataclass
class CausalReport:
    kind: str
    nodes: list[str]
    factual: np.ndarray
    counterfactual: np.ndarray

    @property
    def difference(self) -> np.ndarray:
        return self.counterfactual - self.factual


def validate_spec(names: list[str], actions: list[Action]) -> None:
    seen = set()
    for a in actions:
        if a.node not in names:
            raise KeyError(f"unknown node {a.node!r}")
        if a.node in seen:
            raise ValueError(f"multiple actions for node {a.node!r}")
        seen.add(a.node)
        if a.kind not in VALID_KINDS and a.kind != "blocked":
            raise ValueError(f"unknown action kind {a.kind!r}")
        if a.kind in ("do", "ground_truth"):
            vals = np.atleast_1d(np.asarray(a.value, dtype=np.float64))
            if not np.all(np.isin(vals, (0.0, 1.0))):
                raise ValueError(f"{a.kind} value for {a.node!r} must be binary")


def _expand_blocks(model, x: np.ndarray, actions: list[Action]) -> list[Action]:
    """Replace block actions by do-style pins of the blocked node's children
    at their currently predicted hard states (other actions applied first)."""
    blocks = [a for a in actions if a.kind == "block"]
    rest = [a for a in actions if a.kind != "block"]
    if not blocks:
        return rest
    states = unfold_batch(model, x, rest)
    pinned = {a.node for a in rest}
    out = list(rest)
    for blk in blocks:
        j = states.dag.index(blk.node)
        for child in states.dag.children_of(j):
            name = model.concept_names[child]
            if name in pinned:
                continue
            out.append(Action(name, "blocked", states.hard[:, child].copy()))
            pinned.add(name)
    return out


def unfold_batch(model, x: np.ndarray, actions: list[Action] | None = None,
                 sweeps: int = 1) -> BatchStates:
    """Topological message passing over the extracted DAG.

    Roots and orphaned nodes take their copies-predictor value; do/blocked
    nodes are pinned with incoming edges removed; ground-truth nodes are
    pinned to the supplied label; everything else runs the endogenous
    predictor over its parents' state-weighted embeddings.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    actions = list(actions or [])
    names = model.concept_names
    validate_spec(names, actions)
    acts = _expand_blocks(model, x, actions)
    dag = graphs.extract_dag(model.adjacency_values(), names)
    cut = {dag.index(a.node) for a in acts if a.kind in ("do", "blocked")}
    dag_cut = dag.drop_incoming(cut)
    return _unfold_on_dag(model, x, dag_cut, acts, sweeps)


def _unfold_on_dag(model, x: np.ndarray, dag_cut: graphs.Dag, acts: list[Action],
                   sweeps: int, extra=None) -> BatchStates:
    b, k, m = x.shape[0], model.config.k, model.config.embed_dim
    _, cp, cm = model.encode_t(x)
    copy_logits = model.copy_logits_t(cp, cm)
    adj = dag_cut.adjacency()
    pins: dict[int, np.ndarray] = {}
    provenance = ["predicted"] * k
    for a in acts:
        i = dag_cut.index(a.node)
        val = np.asarray(a.value, dtype=np.float64)
        pins[i] = np.full(b, float(val)) if val.ndim == 0 else val
        provenance[i] = a.kind if a.kind != "blocked" else "blocked"
    if extra is not None:
        # Composed models: bridge embeddings appended as extra parent columns.
        adj = np.concatenate([adj, extra["weights"]], axis=1)
    probs = np.zeros((b, k))
    mixed = np.zeros((b, k, m))
    adj_t = ad.constant(adj)
    for _ in range(max(1, sweeps)):
        for i in dag_cut.topo_order:
            if i in pins:
                probs[:, i] = pins[i]
            else:
                full = mixed if extra is None else np.concatenate([mixed, extra["mixed"]], axis=1)
                logits = model.endo_logits_t(adj_t, ad.constant(full), copy_logits).value
                probs[:, i] = ad.sigmoid_np(logits[:, i])
            w = probs[:, i, None]
            mixed[:, i, :] = w * cp.value[:, i, :] + (1.0 - w) * cm.value[:, i, :]
    hard = (probs >= 0.5).astype(np.float64)
    return BatchStates(probs, hard, provenance, mixed, dag_cut)


def unfold_predict(model, x: np.ndarray, actions: list[Action] | None = None,
                   sweeps: int = 1) -> NodeStateVector:
    return unfold_batch(model, np.atleast_2d(x), actions, sweeps).single(0)


def ground_truth_intervene(model, x: np.ndarray, labels: np.ndarray,
                           nodes: list[str]) -> tuple[BatchStates, BatchStates]:
    """Pin `nodes` to their true labels and repropagate; only descendants of
    the intervened nodes can change."""
    if not nodes:
        raise ValueError("nodes must be nonempty")
    x = np.atleast_2d(x)
    labels = np.atleast_2d(labels)
    before = unfold_batch(model, x, [])
    acts = [Action(n, "ground_truth", labels[:, model.concept_names.index(n)].copy())
            for n in nodes]
    after = unfold_batch(model, x, acts)
    return before, after


def counterfactual_query(model, x: np.ndarray, do_actions: list[Action]) -> CausalReport:
    """Abduction (deterministic encoding), action (edge removal), prediction."""
    for a in do_actions:
        if a.kind != "do":
            raise ValueError("counterfactual spec may contain only do actions")
    x = np.atleast_2d(x)
    factual = unfold_batch(model, x, [])
    counter = unfold_batch(model, x, do_actions)
    return CausalReport("counterfactual", list(model.concept_names),
                        factual.probs[0], counter.probs[0])


def block_actions(model, x: np.ndarray, node: str) -> list[Action]:
    """The do-pins a block of `node` expands to for this batch."""
    return _expand_blocks(model, np.atleast_2d(x), [Action(node, "block")])


def cace(model, x: np.ndarray, cause: str, effect: str) -> float:
    """Mean |p(effect | do(cause=1)) - p(effect | do(cause=0))| over samples."""
    if cause == effect:
        raise ValueError("cause and effect must differ")
    ei = model.concept_names.index(effect)
    s1 = unfold_batch(model, x, [Action(cause, "do", 1.0)])
    s0 = unfold_batch(model, x, [Action(cause, "do", 0.0)])
    return float(np.mean(np.abs(s1.probs[:, ei] - s0.probs[:, ei])))


@dataclass
class ResidualCace:
    before: float
    after: float
    percent: float
    degenerate: bool = False


def residual_cace(model, x: np.ndarray, cause: str, effect: str) -> ResidualCace:
    """Post-blocking CaCE as a percentage of pre-blocking CaCE."""
    x = np.atleast_2d(x)
    dag = graphs.extract_dag(model.adjacency_values(), model.concept_names)
    ci, ei = dag.index(cause), dag.index(effect)
    if ei not in graphs.reachability(dag, ci, "descendants"):
        raise ValueError(f"{cause!r} is not an ancestor of {effect!r}")
    before = cace(model, x, cause, effect)
    pins = block_actions(model, x, cause)
    s1 = unfold_batch(model, x, pins + [Action(cause, "do", 1.0)])
    s0 = unfold_batch(model, x, pins + [Action(cause, "do", 0.0)])
    after = float(np.mean(np.abs(s1.probs[:, ei] - s0.probs[:, ei])))
    if before < 1e-9:
        return ResidualCace(before, after, 0.0, degenerate=True)
    return ResidualCace(before, after, 100.0 * after / before)


@dataclass
class PnsResult:
    lower: float
    upper: float
    p_do1: float
    p_do0: float
    connected: bool = True


def pns_bounds(model, x: np.ndarray, cause: str, effect: str, cause_value: int = 1) -> PnsResult:
    """Interval bounds for the probability that `cause`=cause_value is both
    necessary and sufficient for `effect`=1, from interventional means:
    lower = max(0, p1 - p0), upper = min(p1, 1 - p0)."""
    x = np.atleast_2d(x)
    dag = graphs.extract_dag(model.adjacency_values(), model.concept_names)
    ci, ei = dag.index(cause), dag.index(effect)
    if ei not in graphs.reachability(dag, ci, "descendants"):
        return PnsResult(0.0, 0.0, 0.0, 0.0, connected=False)
    s1 = unfold_batch(model, x, [Action(cause, "do", float(cause_value))])
    s0 = unfold_batch(model, x, [Action(cause, "do", float(1 - cause_value))])
    p1 = float(np.mean(s1.probs[:, ei]))
    p0 = float(np.mean(s0.probs[:, ei]))
    return PnsResult(max(0.0, p1 - p0), min(p1, 1.0 - p0), p1, p0)


def descendant_rank(model) -> list[int]:
    """Node indices ordered by descendant count (desc), ties by index."""
    dag = graphs.extract_dag(model.adjacency_values(), model.concept_names)
    counts = [len(graphs.reachability(dag, i, "descendants")) for i in range(len(dag.nodes))]
    return sorted(range(len(counts)), key=lambda i: (-counts[i], i))


def intervention_curve(cgm, baselines: dict, eval_ds, max_steps: int) -> list[dict]:
    """Ground-truth intervention sweeps: the CGM intervenes on the nodes with
    most descendants first, baselines on their worst-predicted concepts.
    Records accuracy deltas on non-intervened labels (and concept-only)."""
    k = eval_ds.k
    max_steps = min(max_steps, k)
    rows = []
    order = descendant_rank(cgm)
    base = unfold_batch(cgm, eval_ds.features, [])
    base_correct = (base.hard == eval_ds.labels)
    for t in range(1, max_steps + 1):
        chosen = order[:t]
        names = [cgm.concept_names[i] for i in chosen]
        acts = [Action(n, "ground_truth", eval_ds.labels[:, cgm.concept_names.index(n)].copy())
                for n in names]
        after = unfold_batch(cgm, eval_ds.features, acts)
        keep = np.array([i not in chosen for i in range(k)])
        keep_c = keep.copy()
        keep_c[-1] = False  # concept-only view excludes the task column
        rows.append({
            "model": "cgm", "step": t, "intervened": ",".join(names),
            "delta_all": _delta(after.hard, base_correct, eval_ds.labels, keep),
            "delta_concepts": _delta(after.hard, base_correct, eval_ds.labels, keep_c),
        })
    for name, bl in baselines.items():
        if bl.kind == "blackbox":
            continue
        preds = bl.predict_all(eval_ds.features)
        base_ok = ((preds >= 0.5).astype(float) == eval_ds.labels)
        errs = np.mean(np.abs(preds[:, :-1] - eval_ds.labels[:, :-1]), axis=0)
        worst = sorted(range(k - 1), key=lambda i: (-errs[i], i))
        for t in range(1, max_steps + 1):
            chosen = worst[:min(t, k - 1)]
            corr = {bl.concept_names[i]: eval_ds.labels[:, i] for i in chosen}
            after = bl.intervene(eval_ds.features, corr)
            keep = np.array([i not in chosen for i in range(k)])
            keep_c = keep.copy()
            keep_c[-1] = False
            rows.append({
                "model": name, "step": t,
                "intervened": ",".join(bl.concept_names[i] for i in chosen),
                "delta_all": _delta((after >= 0.5).astype(float), base_ok, eval_ds.labels, keep),
                "delta_concepts": _delta((after >= 0.5).astype(float), base_ok, eval_ds.labels, keep_c),
            })
    return rows


def _delta(hard_after, base_correct, labels, keep: np.ndarray) -> float:
    if not keep.any():
        return 0.0
    after_acc = float(np.mean((hard_after == labels)[:, keep]))
    before_acc = float(np.mean(base_correct[:, keep]))
    return after_acc - before_acc


# ---- compositional merging ----

@dataclass
class ComposedModel:
    """Two independently trained models joined by bridge edges; the upstream
    model's mixed embeddings feed the downstream aggregators as extra
    parents. Sub-model parameters are untouched."""

    upstream: object
    downstream: object
    bridges: list[tuple[str, str, float]]
    bridge_srcs: list[str] = field(init=False)

    def __post_init__(self):
        up, down = self.upstream, self.downstream
        if set(up.concept_names) & set(down.concept_names):
            raise ValueError("concept name sets must be disjoint")
        if up.config.embed_dim != down.config.embed_dim:
            raise ValueError("embedding widths must match to bridge models")
        for src, dst, _ in self.bridges:
            if src not in up.concept_names or dst not in down.concept_names:
                raise ValueError(f"bridge {src}->{dst} does not span upstream->downstream")
        self.bridge_srcs = sorted({src for src, _, _ in self.bridges},
                                  key=up.concept_names.index)

    @property
    def concept_names(self) -> list[str]:
        return list(self.upstream.concept_names) + list(self.downstream.concept_names)

    def edge_count(self) -> int:
        up = len(graphs.extract_dag(self.upstream.adjacency_values()).edges)
        down = len(graphs.extract_dag(self.downstream.adjacency_values()).edges)
        return up + down + len(self.bridges)

    def bridge_matrix(self) -> np.ndarray:
        w = np.zeros((self.downstream.config.k, len(self.bridge_srcs)))
        for src, dst, weight in self.bridges:
            w[self.downstream.concept_names.index(dst), self.bridge_srcs.index(src)] = weight
        return w

    def unfold(self, x: np.ndarray, actions: list[Action] | None = None) -> BatchStates:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        actions = list(actions or [])
        up_names = set(self.upstream.concept_names)
        up_acts = [a for a in actions if a.node in up_names]
        down_acts = [a for a in actions if a.node not in up_names]
        up_states = unfold_batch(self.upstream, x, up_acts)
        src_idx = [self.upstream.concept_names.index(s) for s in self.bridge_srcs]
        extra = {"weights": self.bridge_matrix(), "mixed": up_states.mixed[:, src_idx, :]}
        validate_spec(self.downstream.concept_names, down_acts)
        down_acts = _expand_blocks(self.downstream, x, down_acts)
        dag = graphs.extract_dag(self.downstream.adjacency_values(), self.downstream.concept_names)
        cutset = {dag.index(a.node) for a in down_acts if a.kind in ("do", "blocked")}
        dag_cut = dag.drop_incoming(cutset)
        if cutset:
            extra = dict(extra)
            ew = extra["weights"].copy()
            ew[list(cutset), :] = 0.0
            extra["weights"] = ew
        down_states = _unfold_on_dag(self.downstream, x, dag_cut, down_acts, 1, extra=extra)
        names = self.concept_names
        return BatchStates(np.concatenate([up_states.probs, down_states.probs], axis=1),
                           np.concatenate([up_states.hard, down_states.hard], axis=1),
                           up_states.provenance + down_states.provenance,
                           np.concatenate([up_states.mixed, down_states.mixed], axis=1),
                           graphs.Dag(names, []))


def merge_models(m1, m2, bridges: list[tuple[str, str, float]]) -> ComposedModel:
    return ComposedModel(m1, m2, bridges)


def finetune_bridge_targets(composed: ComposedModel, x: np.ndarray, down_labels: np.ndarray,
                            bridge_labels: np.ndarray, steps: int = 200, lr: float = 0.05) -> None:
    """Briefly retrain the downstream aggregator/heads on paired data so the
    bridged embeddings become functional inputs. The bridged sources are
    teacher-forced to their paired labels (pure embeddings), mirroring how
    parents are forced during ordinary training."""
    from . import autodiff as adm
    from .model import bce_t
    down, up = composed.downstream, composed.upstream
    x = np.atleast_2d(x)
    down_labels = np.asarray(down_labels, dtype=np.float64)
    bl = np.atleast_2d(np.asarray(bridge_labels, dtype=np.float64))
    src_idx = [up.concept_names.index(s) for s in composed.bridge_srcs]
    _, cpu, cmu = up.encode_t(x)
    w = bl[..., None]
    mixed_src = w * cpu.value[:, src_idx, :] + (1.0 - w) * cmu.value[:, src_idx, :]
    dag = graphs.extract_dag(down.adjacency_values(), down.concept_names)
    adj = np.concatenate([dag.adjacency(), composed.bridge_matrix()], axis=1)
    params = [down.params[n] for n in ("agg_w", "agg_b", "head_w", "head_b")]
    for _ in range(steps):
        _, cp, cm = down.encode_t(x)
        copy_logits = down.copy_logits_t(cp, cm)
        mixed = down.mixed_t(down_labels, cp, cm)
        full = adm.constant(np.concatenate([mixed.value, mixed_src], axis=1))
        logits = down.endo_logits_t(adm.constant(adj), full, copy_logits)
        loss = bce_t(logits, down_labels)
        adm.zero_grads(list(down.params.values()))
        loss.backward()
        adm.sgd_step(params, lr)
