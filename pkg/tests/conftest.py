import numpy as np
import pytest

from ccgm import data
from ccgm.model import CgmConfig, CgmModel, train


@pytest.fixture(scope="session")
def checkmark_quick():
    """A modestly trained clean-data model shared by behavioural tests."""
    ds = data.gen_checkmark(1200, seed=7)
    tr, va, te = data.split_dataset(ds, (0.8, 0.1, 0.1), seed=7)
    cfg = CgmConfig(k=4, d=3, epochs=250, seed=7)
    model, history = train(tr, va, cfg)
    return model, history, (tr, va, te)


def rigged_model(edges, k=5, d=4, seed=0, m=8, names=None):
    """Untrained model with a hand-set adjacency, for structural tests."""
    names = names or [f"v{i + 1}" for i in range(k)]
    cfg = CgmConfig(k=k, d=d, epochs=1, seed=seed, embed_dim=m)
    model = CgmModel(cfg, names)
    mat = np.zeros((k, k))
    for src, dst, w in edges:
        mat[names.index(dst), names.index(src)] = w
    model._adj_m.value[...] = mat
    model.adjacency.m = model._adj_m.value
    return model


def fig4_model(seed=0):
    """v1 -> v2 -> v3 -> v5, v4 -> v5 (the five-node worked example)."""
    edges = [("v1", "v2", 0.5), ("v2", "v3", 0.6), ("v3", "v5", 0.7), ("v4", "v5", 0.4)]
    return rigged_model(edges, seed=seed)


def tabular_chain_model():
    """Three-node chain with hand-set weights implementing known tabular
    mechanisms, so node probabilities have closed forms."""
    cfg = CgmConfig(k=3, d=2, hidden_dim=2, embed_dim=2, epochs=1, seed=0)
    model = CgmModel(cfg, ["v1", "v2", "v3"])
    p = model.params
    for name in p:
        p[name].value[...] = 0.0
    # Constant embeddings: c+_i = [a_i, 0], c-_i = [0, 1].
    amps = np.array([1.0, 2.0, 3.0])
    emb_pos = np.zeros(3 * 2)
    emb_pos[0::2] = amps
    p["emb_pos_b"].value[...] = emb_pos
    emb_neg = np.zeros(3 * 2)
    emb_neg[1::2] = 1.0
    p["emb_neg_b"].value[...] = emb_neg
    # Copy scorer: logit_i = a_i - 0.5.
    p["score_pos"].value[...] = np.array([1.0, 0.0])
    p["score_b"].value[...] = -0.5
    # Aggregator = identity, heads weigh [active, inactive] parts.
    p["agg_w"].value[...] = np.eye(2)
    p["head_w"].value[...] = np.array([[0.0, 0.0], [4.0, -4.0], [2.0, -6.0]])
    mat = np.zeros((3, 3))
    mat[1, 0] = 1.0  # v1 -> v2
    mat[2, 1] = 1.0  # v2 -> v3
    model._adj_m.value[...] = mat
    model.adjacency.m = model._adj_m.value
    return model, amps


def tabular_oracle(amps, p1):
    """Closed-form node probabilities for tabular_chain_model."""
    def sig(v):
        return 1.0 / (1.0 + np.exp(-v))

    # mixed_j = [p_j * a_j, 1 - p_j]; logits from head_w rows.
    p2 = sig(4.0 * (p1 * amps[0]) - 4.0 * (1.0 - p1))
    p3 = sig(2.0 * (p2 * amps[1]) - 6.0 * (1.0 - p2))
    return p2, p3


def has_cycle(pattern: np.ndarray) -> bool:
    """Brute-force cycle oracle: DFS over the nonzero pattern.

    pattern[i, j] nonzero means edge j -> i (parent j into child i).
    """
    k = pattern.shape[0]
    children = {j: [i for i in range(k) if pattern[i, j] != 0 and i != j] for j in range(k)}
    state = [0] * k  # 0 unseen, 1 on stack, 2 done

    def dfs(node: int) -> bool:
        state[node] = 1
        for child in children[node]:
            if state[child] == 1:
                return True
            if state[child] == 0 and dfs(child):
                return True
        state[node] = 2
        return False

    return any(state[v] == 0 and dfs(v) for v in range(k))


def all_digraph_patterns(k: int):
    """Every 0/1 off-diagonal adjacency pattern on k nodes."""
    cells = [(i, j) for i in range(k) for j in range(k) if i != j]
    for bits in range(1 << len(cells)):
        a = np.zeros((k, k))
        for idx, (i, j) in enumerate(cells):
            if bits >> idx & 1:
                a[i, j] = 1.0
        yield a
