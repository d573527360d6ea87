"""Concept graph model: exogenous encoder, copies predictor, embedding
mixture, masked endogenous predictor, and the joint training loop.

The same Tensor-building methods serve training (with gradients) and
inference (values only), so the teacher-forced path and the unfolded path
are literally the same functions applied to different parent values.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np

from . import autodiff as ad
from . import graphs
from .data import ConceptDataset


@dataclass
class CgmConfig:
    k: int
    d: int
    hidden_dim: int = 64
    embed_dim: int = 16
    lambda1: float = 1.0
    lambda2: float = 1.0
    lambda3: float = 0.05
    beta: float = 1.0
    lr: float = 0.01
    epochs: int = 500
    batch_size: int = 64
    seed: int = 1
    graph_mode: str = "learned"                 # learned | fixed
    fixed_edges: list = field(default_factory=list)  # (src, dst, weight) names
    gamma_init: float = 0.1
    mask_tau: float = 0.1
    orient_ties: bool = True

    def __post_init__(self):
        if min(self.k, self.d, self.hidden_dim, self.embed_dim) < 1:
            raise ValueError("all dimensions must be >= 1")
        if min(self.lambda1, self.lambda2, self.lambda3) < 0:
            raise ValueError("loss weights must be >= 0")
        if self.lr <= 0:
            raise ValueError("lr must be > 0")
        if self.graph_mode not in ("learned", "fixed"):
            raise ValueError(f"unknown graph_mode {self.graph_mode!r}")


class CgmModel:
    def __init__(self, config: CgmConfig, concept_names: list[str]):
        if len(concept_names) != config.k:
            raise ValueError("concept_names length must equal k")
        self.config = config
        self.concept_names = list(concept_names)
        rng = np.random.default_rng(config.seed)
        c, km = config, config.k * config.embed_dim
        self.params = {}
        for name, shape, fan in [
            ("enc_w", (c.d, c.hidden_dim), c.d), ("enc_b", (c.hidden_dim,), c.d),
            ("emb_pos_w", (c.hidden_dim, km), c.hidden_dim), ("emb_pos_b", (km,), c.hidden_dim),
            ("emb_neg_w", (c.hidden_dim, km), c.hidden_dim), ("emb_neg_b", (km,), c.hidden_dim),
            ("score_pos", (c.embed_dim,), 2 * c.embed_dim), ("score_neg", (c.embed_dim,), 2 * c.embed_dim),
            ("score_b", (), 2 * c.embed_dim),
            ("agg_w", (c.embed_dim, c.hidden_dim), c.embed_dim), ("agg_b", (c.hidden_dim,), c.embed_dim),
            ("head_w", (c.k, c.hidden_dim), c.hidden_dim), ("head_b", (c.k,), c.hidden_dim),
        ]:
            self.params[name] = ad.Param(name, ad.uniform_init(rng, shape, fan))
        self.adjacency = graphs.AdjacencyState(np.zeros((c.k, c.k)), c.gamma_init, tau=c.mask_tau)
        self._adj_m = ad.Param("adj_m", self.adjacency.m)
        self._adj_gamma = ad.Param("adj_gamma", np.asarray(c.gamma_init))
        self.metrics: dict = {}
        if c.graph_mode == "fixed":
            self._freeze_graph(c.fixed_edges)

    def _freeze_graph(self, edges) -> None:
        k = self.config.k
        constraints = np.zeros((k, k))
        m = np.zeros((k, k))
        for src, dst, *rest in edges:
            w = float(rest[0]) if rest else 1.0
            j, i = self.concept_names.index(src), self.concept_names.index(dst)
            constraints[i, j] = w
            m[i, j] = w
        self.adjacency = graphs.AdjacencyState(m, self.config.gamma_init,
                                               constraints=constraints, tau=self.config.mask_tau)
        self._adj_m.value = self.adjacency.m
        self._adj_m.grad = np.zeros_like(self.adjacency.m)

    def init_graph_from_labels(self, labels: np.ndarray) -> None:
        """Entropy-initialise M (learned mode), then canonically orient the
        observationally symmetric deterministic pairs."""
        if self.config.graph_mode != "learned":
            return
        m = graphs.entropy_init(labels)
        if self.config.orient_ties:
            m = graphs.orient_deterministic_pairs(m, self.config.gamma_init)
        self.adjacency.m = m
        self._adj_m.value = self.adjacency.m
        self._adj_m.grad = np.zeros_like(self.adjacency.m)

    def trainable_params(self) -> list[ad.Param]:
        out = list(self.params.values())
        if self.config.graph_mode == "learned":
            out += [self._adj_m, self._adj_gamma]
        return out

    # ---- forward builders (shared by training and inference) ----

    def encode_t(self, x: np.ndarray):
        """x (B,d) -> hidden, positive embeddings, negative embeddings."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.config.d:
            raise ad.ShapeError(f"expected features of dim {self.config.d}, got {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ValueError("non-finite features")
        b, c = x.shape[0], self.config
        xt = ad.constant(x)
        h = ad.dense(xt, ad.param_tensor(self.params["enc_w"]),
                     ad.param_tensor(self.params["enc_b"]), relu_out=True)
        cp = ad.dense(h, ad.param_tensor(self.params["emb_pos_w"]),
                      ad.param_tensor(self.params["emb_pos_b"]), out_shape=(b, c.k, c.embed_dim))
        cm = ad.dense(h, ad.param_tensor(self.params["emb_neg_w"]),
                      ad.param_tensor(self.params["emb_neg_b"]), out_shape=(b, c.k, c.embed_dim))
        return h, cp, cm

    def copy_logits_t(self, cp: ad.Tensor, cm: ad.Tensor) -> ad.Tensor:
        """Shared affine scorer over each concept's embedding pair."""
        return ad.pair_score(cp, cm, ad.param_tensor(self.params["score_pos"]),
                             ad.param_tensor(self.params["score_neg"]),
                             ad.param_tensor(self.params["score_b"]))

    def adjacency_t(self, soft: bool = False) -> ad.Tensor:
        free = self.adjacency.free_mask()
        masked = ad.threshold_mask(ad.param_tensor(self._adj_m), ad.param_tensor(self._adj_gamma),
                                   free, self.adjacency.tau, soft=soft)
        if self.adjacency.constraints is not None:
            forced = np.nan_to_num(self.adjacency.constraints) * (1.0 - np.eye(self.config.k))
            masked = ad.add(masked, ad.constant(forced))
        return masked

    def mixed_t(self, probs, cp: ad.Tensor, cm: ad.Tensor) -> ad.Tensor:
        """State-weighted mixture p*c+ + (1-p)*c- per concept."""
        if isinstance(probs, ad.Tensor):
            w = ad.expand_last(probs)
            one = ad.constant(np.ones(()))
            return ad.add(ad.mul(w, cp), ad.mul(ad.sub(one, w), cm))
        probs = np.asarray(probs, dtype=np.float64)
        if probs.min() < 0.0 or probs.max() > 1.0:
            raise ValueError("mixture weights must lie in [0,1]")
        return ad.mixture_const(probs, cp, cm)

    def endo_logits_t(self, adj: ad.Tensor, mixed: ad.Tensor, copy_logits: ad.Tensor) -> ad.Tensor:
        """Deepset over adjacency-weighted parent embeddings; nodes whose
        adjacency row is all zero fall back to the copies predictor."""
        b, c = mixed.value.shape[0], self.config
        z = ad.mix_parents(adj, mixed)
        g = ad.dense(z, ad.param_tensor(self.params["agg_w"]), ad.param_tensor(self.params["agg_b"]),
                     relu_out=True, in_shape=(b * c.k, c.embed_dim), out_shape=(b, c.k, c.hidden_dim))
        gate = (np.abs(adj.value).sum(axis=1) > 0).astype(np.float64)
        return ad.heads_gate(g, ad.param_tensor(self.params["head_w"]),
                             ad.param_tensor(self.params["head_b"]), copy_logits, gate)

    # ---- convenience value-level entry points ----

    def encode_exogenous(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Per-concept embedding pairs (c+, c-), each (B,k,m)."""
        _, cp, cm = self.encode_t(np.atleast_2d(x))
        return cp.value, cm.value

    def predict_copies(self, x: np.ndarray) -> np.ndarray:
        _, cp, cm = self.encode_t(np.atleast_2d(x))
        return ad.sigmoid_np(self.copy_logits_t(cp, cm).value)

    def adjacency_values(self) -> np.ndarray:
        return self.adjacency.masked()


def bce_t(logits: ad.Tensor, targets: np.ndarray) -> ad.Tensor:
    """Mean binary cross-entropy from logits: softplus(l) - y*l."""
    return ad.bce_mean(logits, targets)


@dataclass
class StepLosses:
    copies: float
    endogenous: float
    acyclicity: float
    cace: float
    total: float


def build_loss(model: CgmModel, x: np.ndarray, labels: np.ndarray,
               cace_index: np.ndarray | None = None, soft_mask: bool = False):
    """Joint objective as a Tensor plus its component values.

    total = BCE(copies) + l1*BCE(endogenous | parents forced to labels)
          + l2*acyclicity(A) - l3*CaCE.

    `cace_index` holds each sample's randomly drawn concept for the CaCE
    term (None disables it). `soft_mask` swaps the hard threshold for its
    sigmoid surrogate so finite differences match the analytic gradients.
    """
    if x.shape[0] == 0:
        raise ValueError("empty batch")
    c = model.config
    labels = np.asarray(labels, dtype=np.float64)
    _, cp, cm = model.encode_t(x)
    copy_logits = model.copy_logits_t(cp, cm)
    loss_copies = bce_t(copy_logits, labels)

    adj = model.adjacency_t(soft=soft_mask)
    loss_acyc = graphs.acyclicity_penalty(adj, c.beta)

    cace_val = 0.0
    if cace_index is not None and c.lambda3 > 0 and c.k > 1:
        # Concept-effect regulariser: one random concept per sample, forced to
        # 1 and to 0 inside the teacher-forced pass (binary weights select the
        # pure embeddings, so no extra edge surgery is needed for i != r).
        # Both settings ride in the same stacked batch as the forced pass.
        b = x.shape[0]
        rows = np.arange(b)
        lab1, lab0 = labels.copy(), labels.copy()
        lab1[rows, cace_index], lab0[rows, cace_index] = 1.0, 0.0
        all_labels = np.concatenate([labels, lab1, lab0], axis=0)
        stacked = model.endo_logits_t(
            adj, model.mixed_t(all_labels, ad.tile_rows(cp, 3), ad.tile_rows(cm, 3)),
            ad.tile_rows(copy_logits, 3))
        loss_endo = bce_t(ad.take_rows(stacked, 0, b), labels)
        w = np.full(labels.shape, 1.0 / (c.k - 1))
        w[rows, cace_index] = 0.0
        loss_cace = ad.abs_diff_weighted(ad.take_rows(stacked, b, 3 * b), w)
        cace_val = float(loss_cace.value)
        total = ad.sub(ad.add(ad.add(loss_copies, ad.scale(loss_endo, c.lambda1)),
                              ad.scale(loss_acyc, c.lambda2)),
                       ad.scale(loss_cace, c.lambda3))
    else:
        endo_logits = model.endo_logits_t(adj, model.mixed_t(labels, cp, cm), copy_logits)
        loss_endo = bce_t(endo_logits, labels)
        total = ad.add(ad.add(loss_copies, ad.scale(loss_endo, c.lambda1)),
                       ad.scale(loss_acyc, c.lambda2))

    losses = StepLosses(float(loss_copies.value), float(loss_endo.value),
                        float(loss_acyc.value), cace_val, float(total.value))
    return total, losses


def training_step(model: CgmModel, x: np.ndarray, labels: np.ndarray,
                  rng: np.random.Generator, apply_update: bool = True) -> StepLosses:
    """One mini-batch update of the joint objective (single SGD step)."""
    c = model.config
    r = None
    if c.lambda3 > 0 and c.k > 1:
        r = rng.integers(c.k, size=x.shape[0])
    total, losses = build_loss(model, x, labels, cace_index=r)
    if not math.isfinite(losses.total):
        raise ArithmeticError(f"non-finite loss, step aborted: {losses}")
    if apply_update:
        params = model.trainable_params()
        ad.zero_grads(params)
        total.backward()
        ad.sgd_step(params, c.lr)
        model.adjacency.m = model._adj_m.value
        model.adjacency.gamma = float(model._adj_gamma.value)
    return losses


def joint_accuracy(model: CgmModel, ds: ConceptDataset) -> float:
    """Fraction of correct (sample, node) cells under unfolded inference."""
    from . import engine
    states = engine.unfold_batch(model, ds.features, [])
    return float(np.mean((states.probs >= 0.5).astype(float) == ds.labels))


def train(train_ds: ConceptDataset, val_ds: ConceptDataset, config: CgmConfig,
          concept_names: list[str] | None = None):
    """Train a CGM, returning (model, history). The returned parameters are
    the snapshot from the epoch with the best validation joint accuracy."""
    if train_ds.n == 0:
        raise ValueError("empty training dataset")
    names = concept_names or train_ds.concept_names
    model = CgmModel(config, names)
    model.init_graph_from_labels(train_ds.labels)
    rng = np.random.default_rng(config.seed + 0x5EED)
    history = []
    best = (-1.0, None)
    for epoch in range(config.epochs):
        order = rng.permutation(train_ds.n)
        sums = np.zeros(5)
        batches = 0
        for start in range(0, train_ds.n, config.batch_size):
            idx = order[start:start + config.batch_size]
            losses = training_step(model, train_ds.features[idx], train_ds.labels[idx], rng)
            sums += (losses.copies, losses.endogenous, losses.acyclicity, losses.cace, losses.total)
            batches += 1
        val_acc = joint_accuracy(model, val_ds)
        rec = dict(zip(("copies", "endogenous", "acyclicity", "cace", "total"), sums / batches))
        rec.update(epoch=epoch, val_accuracy=val_acc)
        history.append(rec)
        if val_acc > best[0]:
            best = (val_acc, snapshot(model))
    if best[1] is not None:
        restore(model, best[1])
    model.metrics = {"best_val_accuracy": best[0], "epochs": config.epochs}
    return model, history


def snapshot(model: CgmModel) -> dict:
    state = {name: p.value.copy() for name, p in model.params.items()}
    state["adj_m"] = model._adj_m.value.copy()
    state["adj_gamma"] = model._adj_gamma.value.copy()
    return state


def restore(model: CgmModel, state: dict) -> None:
    for name, p in model.params.items():
        p.value[...] = state[name]
    model._adj_m.value[...] = state["adj_m"]
    model._adj_gamma.value = state["adj_gamma"].copy()
    model.adjacency.m = model._adj_m.value
    model.adjacency.gamma = float(model._adj_gamma.value)


def config_to_dict(config: CgmConfig) -> dict:
    d = asdict(config)
    d["fixed_edges"] = [list(e) for e in config.fixed_edges]
    return d


def config_from_dict(d: dict) -> CgmConfig:
    d = dict(d)
    d["fixed_edges"] = [tuple(e) for e in d.get("fixed_edges", [])]
    return CgmConfig(**d)
