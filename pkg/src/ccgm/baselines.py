"""Black-box, bottleneck, and embedding baselines with joint training and
their test-time concept-correction mechanics. The last label column is the
task; all other columns are concepts."""
from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .data import ConceptDataset
from .model import CgmConfig, bce_t


class BaselineModel:
    KINDS = ("blackbox", "cbm", "cem")

    def __init__(self, kind: str, config: CgmConfig, concept_names: list[str]):
        if kind not in self.KINDS:
            raise ValueError(f"unknown baseline kind {kind!r}")
        self.kind = kind
        self.config = config
        self.concept_names = list(concept_names)
        rng = np.random.default_rng(config.seed)
        c = config
        kc = c.k - 1  # concept columns
        spec = {
            "blackbox": [
                ("enc_w", (c.d, c.hidden_dim), c.d), ("enc_b", (c.hidden_dim,), c.d),
                ("out_w", (c.hidden_dim, c.k), c.hidden_dim), ("out_b", (c.k,), c.hidden_dim),
            ],
            "cbm": [
                ("enc_w", (c.d, c.hidden_dim), c.d), ("enc_b", (c.hidden_dim,), c.d),
                ("con_w", (c.hidden_dim, kc), c.hidden_dim), ("con_b", (kc,), c.hidden_dim),
                ("task_w", (kc, c.hidden_dim), kc), ("task_b", (c.hidden_dim,), kc),
                ("task_out_w", (c.hidden_dim, 1), c.hidden_dim), ("task_out_b", (1,), c.hidden_dim),
            ],
            "cem": [
                ("enc_w", (c.d, c.hidden_dim), c.d), ("enc_b", (c.hidden_dim,), c.d),
                ("emb_pos_w", (c.hidden_dim, kc * c.embed_dim), c.hidden_dim),
                ("emb_pos_b", (kc * c.embed_dim,), c.hidden_dim),
                ("emb_neg_w", (c.hidden_dim, kc * c.embed_dim), c.hidden_dim),
                ("emb_neg_b", (kc * c.embed_dim,), c.hidden_dim),
                ("score_pos", (c.embed_dim,), 2 * c.embed_dim),
                ("score_neg", (c.embed_dim,), 2 * c.embed_dim),
                ("score_b", (), 2 * c.embed_dim),
                ("task_w", (kc * c.embed_dim, c.hidden_dim), kc * c.embed_dim),
                ("task_b", (c.hidden_dim,), kc * c.embed_dim),
                ("task_out_w", (c.hidden_dim, 1), c.hidden_dim), ("task_out_b", (1,), c.hidden_dim),
            ],
        }[kind]
        self.params = {name: ad.Param(name, ad.uniform_init(rng, shape, fan))
                       for name, shape, fan in spec}
        self.metrics: dict = {}

    # ---- forward passes ----

    def _hidden(self, x: np.ndarray) -> ad.Tensor:
        xt = ad.constant(np.atleast_2d(np.asarray(x, dtype=np.float64)))
        return ad.dense(xt, ad.param_tensor(self.params["enc_w"]),
                        ad.param_tensor(self.params["enc_b"]), relu_out=True)

    def _concept_logits(self, h: ad.Tensor):
        c = self.config
        if self.kind == "cbm":
            return ad.dense(h, ad.param_tensor(self.params["con_w"]),
                            ad.param_tensor(self.params["con_b"])), None, None
        b = h.value.shape[0]
        kc = c.k - 1
        cp = ad.dense(h, ad.param_tensor(self.params["emb_pos_w"]),
                      ad.param_tensor(self.params["emb_pos_b"]), out_shape=(b, kc, c.embed_dim))
        cm = ad.dense(h, ad.param_tensor(self.params["emb_neg_w"]),
                      ad.param_tensor(self.params["emb_neg_b"]), out_shape=(b, kc, c.embed_dim))
        logits = ad.pair_score(cp, cm, ad.param_tensor(self.params["score_pos"]),
                               ad.param_tensor(self.params["score_neg"]),
                               ad.param_tensor(self.params["score_b"]))
        return logits, cp, cm

    def _task_logit(self, concept_input: ad.Tensor) -> ad.Tensor:
        th = ad.dense(concept_input, ad.param_tensor(self.params["task_w"]),
                      ad.param_tensor(self.params["task_b"]), relu_out=True)
        return ad.dense(th, ad.param_tensor(self.params["task_out_w"]),
                        ad.param_tensor(self.params["task_out_b"]))

    def _forward(self, x: np.ndarray, concept_override: dict[int, np.ndarray] | None = None):
        """Returns (concept_probs Tensor or None, task_prob Tensor, all logits)."""
        c = self.config
        h = self._hidden(x)
        if self.kind == "blackbox":
            logits = ad.dense(h, ad.param_tensor(self.params["out_w"]),
                              ad.param_tensor(self.params["out_b"]))
            return None, None, logits
        logits, cp, cm = self._concept_logits(h)
        probs = ad.sigmoid(logits)
        prob_vals = probs.value.copy()
        if concept_override:
            for idx, vals in concept_override.items():
                prob_vals[:, idx] = vals
            probs = ad.constant(prob_vals)
        if self.kind == "cbm":
            task = self._task_logit(probs)
        else:
            mixed = ad.add(ad.mul(ad.expand_last(probs), cp),
                           ad.mul(ad.sub(ad.constant(np.ones(())), ad.expand_last(probs)), cm))
            b = prob_vals.shape[0]
            task = self._task_logit(ad.reshape(mixed, (b, (c.k - 1) * c.embed_dim)))
        return probs, task, logits

    def predict_all(self, x: np.ndarray) -> np.ndarray:
        """(B, k) probabilities: concepts then task (blackbox: all heads)."""
        if self.kind == "blackbox":
            _, _, logits = self._forward(x)
            return ad.sigmoid_np(logits.value)
        probs, task, _ = self._forward(x)
        return np.concatenate([probs.value, ad.sigmoid_np(task.value)], axis=1)

    def intervene(self, x: np.ndarray, corrections: dict[str, np.ndarray]) -> np.ndarray:
        """Replace corrected concepts (probability for the bottleneck model,
        pure embedding state for the embedding model) and re-predict the
        task. Other concepts are never touched."""
        if self.kind == "blackbox":
            raise ValueError("black box has no concept interface")
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        override = {}
        for name, vals in corrections.items():
            idx = self.concept_names.index(name)
            if idx == self.config.k - 1:
                raise ValueError("cannot intervene on the task column")
            vals = np.asarray(vals, dtype=np.float64)
            vals = np.full(x.shape[0], float(vals)) if vals.ndim == 0 else vals
            if not np.all(np.isin(vals, (0.0, 1.0))):
                raise ValueError("corrections must be binary labels")
            override[idx] = vals
        probs, task, _ = self._forward(x, concept_override=override or None)
        return np.concatenate([probs.value, ad.sigmoid_np(task.value)], axis=1)

    def trainable_params(self):
        return list(self.params.values())

    def accuracy(self, ds: ConceptDataset) -> float:
        preds = self.predict_all(ds.features)
        return float(np.mean((preds >= 0.5).astype(float) == ds.labels))


def train_baseline(kind: str, train_ds: ConceptDataset, val_ds: ConceptDataset,
                   config: CgmConfig):
    """Joint training (concept and task losses equally weighted); returns the
    snapshot with the best validation joint accuracy, plus history."""
    model = BaselineModel(kind, config, train_ds.concept_names)
    rng = np.random.default_rng(config.seed + 0x5EED)
    history = []
    best = (-1.0, None)
    params = model.trainable_params()
    for epoch in range(config.epochs):
        order = rng.permutation(train_ds.n)
        total = 0.0
        batches = 0
        for start in range(0, train_ds.n, config.batch_size):
            idx = order[start:start + config.batch_size]
            x, y = train_ds.features[idx], train_ds.labels[idx]
            if model.kind == "blackbox":
                _, _, logits = model._forward(x)
                loss = bce_t(logits, y)
            else:
                probs, task, logits = model._forward(x)
                loss = ad.add(bce_t(logits, y[:, :-1]), bce_t(task, y[:, -1:]))
            ad.zero_grads(params)
            loss.backward()
            ad.sgd_step(params, config.lr)
            total += float(loss.value)
            batches += 1
        val_acc = model.accuracy(val_ds)
        history.append({"epoch": epoch, "total": total / batches, "val_accuracy": val_acc})
        if val_acc > best[0]:
            best = (val_acc, {n: p.value.copy() for n, p in model.params.items()})
    if best[1] is not None:
        for n, p in model.params.items():
            p.value[...] = best[1][n]
    model.metrics = {"best_val_accuracy": best[0], "epochs": config.epochs}
    return model, history


def baseline_cace(model: BaselineModel, x: np.ndarray, cause: str, effect: str = None,
                  pinned: dict[str, np.ndarray] | None = None) -> float:
    """|task prob after setting cause to 1 vs to 0|, other concepts free or
    pinned at the given values (the blocking analogue pins children at their
    own predictions, which changes nothing for these architectures)."""
    x = np.atleast_2d(x)
    base = dict(pinned or {})
    ones = dict(base, **{cause: np.ones(x.shape[0])})
    zeros = dict(base, **{cause: np.zeros(x.shape[0])})
    p1 = model.intervene(x, ones)[:, -1]
    p0 = model.intervene(x, zeros)[:, -1]
    return float(np.mean(np.abs(p1 - p0)))


def baseline_residual_cace(model: BaselineModel, x: np.ndarray, cause: str,
                           children: list[str]):
    """Residual CaCE analogue: pin the cause's children (per the reference
    graph) at their predicted hard states, then re-measure the cause's effect
    on the task."""
    from .engine import ResidualCace
    x = np.atleast_2d(x)
    before = baseline_cace(model, x, cause)
    preds = model.predict_all(x)
    pins = {c: (preds[:, model.concept_names.index(c)] >= 0.5).astype(float)
            for c in children}
    after = baseline_cace(model, x, cause, pinned=pins)
    if before < 1e-9:
        return ResidualCace(before, after, 0.0, degenerate=True)
    return ResidualCace(before, after, 100.0 * after / before)
