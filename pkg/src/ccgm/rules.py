"""Boolean structural-equation extraction: per-node truth tables from model
behaviour, minimised to sum-of-products form with Quine-McCluskey."""
from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from . import autodiff as ad
from . import graphs

ROOT_RULE = "ε"  # exogenous


@dataclass
class NodeRule:
    node: str
    parents: list[str]
    formula: str
    skipped: bool = False


def minimize_sop(minterms: set[int], n_vars: int, names: list[str]) -> str:
    """Classic Quine-McCluskey: prime implicants, essential selection, then a
    greedy cover for the rest. Terms and literals render in index order."""
    total = 1 << n_vars
    if not minterms:
        return "False"
    if len(minterms) == total:
        return "True"
    implicants = {(m, 0) for m in minterms}  # (bits, dash mask)
    primes: set[tuple[int, int]] = set()
    while implicants:
        merged: set[tuple[int, int]] = set()
        used: set[tuple[int, int]] = set()
        imp = sorted(implicants)
        by_mask: dict[int, list[tuple[int, int]]] = {}
        for item in imp:
            by_mask.setdefault(item[1], []).append(item)
        for mask, group in by_mask.items():
            for i, (ba, _) in enumerate(group):
                for bb, _ in group[i + 1:]:
                    diff = ba ^ bb
                    if diff and (diff & (diff - 1)) == 0:
                        merged.add((ba & bb, mask | diff))
                        used.add((ba, mask))
                        used.add((bb, mask))
        primes |= implicants - used
        implicants = merged
    cover: dict[tuple[int, int], set[int]] = {}
    for bits, mask in primes:
        covered = set()
        for m in minterms:
            if (m & ~mask) == (bits & ~mask):
                covered.add(m)
        cover[(bits, mask)] = covered
    chosen: list[tuple[int, int]] = []
    remaining = set(minterms)
    for m in sorted(minterms):
        holders = [p for p, cov in cover.items() if m in cov]
        if len(holders) == 1 and holders[0] not in chosen:
            chosen.append(holders[0])
            remaining -= cover[holders[0]]
    while remaining:
        best = max(sorted(cover), key=lambda p: (len(cover[p] & remaining), -p[1]))
        if not cover[best] & remaining:
            break
        chosen.append(best)
        remaining -= cover[best]
    terms = []
    for bits, mask in set(chosen):
        lits = []
        for v in range(n_vars):
            bit = 1 << (n_vars - 1 - v)
            if mask & bit:
                continue
            lits.append((v, bool(bits & bit)))
        terms.append(lits)
    terms.sort(key=lambda lits: ([v for v, _ in lits], [not pos for _, pos in lits]))
    rendered = [" & ".join(names[v] if pos else f"~{names[v]}" for v, pos in lits) or "True"
                for lits in terms]
    return " | ".join(rendered)


def extract_logic_rules(model, train_ds, max_parents: int = 12) -> list[NodeRule]:
    """Per non-root node: tabulate the model's majority hard prediction for
    every parent-value combination, then minimise. Combinations present in
    training take the majority over matching rows (parents forced to their
    labels); unseen ones are answered by direct queries with pure embeddings.
    Roots report the exogenous marker."""
    dag = graphs.extract_dag(model.adjacency_values(), model.concept_names)
    x, labels = train_ds.features, train_ds.labels
    _, cp, cm = model.encode_t(x)
    copy_logits = model.copy_logits_t(cp, cm)
    adj = ad.constant(dag.adjacency())

    def predict_hard(forced_labels: np.ndarray, node: int) -> np.ndarray:
        mixed = model.mixed_t(forced_labels, cp, cm)
        logits = model.endo_logits_t(adj, mixed, copy_logits).value
        return (ad.sigmoid_np(logits[:, node]) >= 0.5).astype(int)

    tf_hard = {}
    rules = []
    for i in dag.topo_order:
        name = model.concept_names[i]
        parents = sorted(p for p, _ in dag.parents_of(i))
        if not parents:
            rules.append(NodeRule(name, [], ROOT_RULE))
            continue
        if len(parents) > max_parents:
            rules.append(NodeRule(name, [model.concept_names[p] for p in parents],
                                  "", skipped=True))
            continue
        if i not in tf_hard:
            tf_hard[i] = predict_hard(labels, i)
        seen_combo = [tuple(int(v) for v in row) for row in labels[:, parents]]
        minterms = set()
        for combo in product((0, 1), repeat=len(parents)):
            rows = [r for r, c in enumerate(seen_combo) if c == combo]
            if rows:
                votes = tf_hard[i][rows]
            else:
                forced = labels.copy()
                for pos, p in enumerate(parents):
                    forced[:, p] = combo[pos]
                votes = predict_hard(forced, i)
            if votes.mean() >= 0.5:
                idx = 0
                for v in combo:
                    idx = (idx << 1) | v
                minterms.add(idx)
        formula = minimize_sop(minterms, len(parents), [model.concept_names[p] for p in parents])
        rules.append(NodeRule(name, [model.concept_names[p] for p in parents], formula))
    order = {model.concept_names[i]: i for i in range(len(model.concept_names))}
    rules.sort(key=lambda r: order[r.node])
    return rules
