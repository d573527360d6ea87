"""Synthetic concept datasets: checkmark, SCM-backed generators, and the
concept-incompleteness benchmark, plus split/perturb/CSV utilities.

All generators are deterministic functions of their parameters and seed.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass
class ConceptDataset:
    features: np.ndarray            # n x d float
    labels: np.ndarray              # n x k in {0,1}
    concept_names: list[str]
    ground_truth_graph: list[tuple[str, str]] | None = None
    seed: int = 0
    generator: dict = field(default_factory=dict)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.float64)
        if self.features.shape[0] != self.labels.shape[0]:
            raise ValueError("features and labels row counts differ")
        if not np.all(np.isin(self.labels, (0.0, 1.0))):
            raise ValueError("labels must be binary")
        if len(set(self.concept_names)) != len(self.concept_names):
            raise ValueError("concept names must be unique")
        if self.labels.shape[1] != len(self.concept_names):
            raise ValueError("label width does not match concept names")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def k(self) -> int:
        return self.labels.shape[1]

    def take(self, idx: np.ndarray) -> "ConceptDataset":
        return ConceptDataset(self.features[idx], self.labels[idx], self.concept_names,
                              self.ground_truth_graph, self.seed, dict(self.generator))


@dataclass
class ScmEquation:
    parents: list[str]
    rule: object                    # callable(dict name -> 0/1) -> 0/1; None for a root
    noise: float = 0.0              # P(flip) for non-roots, P(value=1) for roots

    def __post_init__(self):
        if not (0.0 <= self.noise <= 1.0):
            raise ValueError("noise probability must be in [0,1]")


@dataclass
class GroundTruthScm:
    variables: list[str]
    equations: dict[str, ScmEquation]
    nuisance_dims: int = 4
    feature_noise: float = 0.3

    def __post_init__(self):
        order = []
        placed: set[str] = set()
        remaining = list(self.variables)
        while remaining:
            progress = False
            for v in list(remaining):
                if all(p in placed for p in self.equations[v].parents):
                    order.append(v)
                    placed.add(v)
                    remaining.remove(v)
                    progress = True
            if not progress:
                raise ValueError("cyclic structural equations")
        self.sample_order = order

    def edges(self) -> list[tuple[str, str]]:
        out = []
        for v in self.variables:
            for p in self.equations[v].parents:
                out.append((p, v))
        return out


def gen_checkmark(n: int, seed: int) -> ConceptDataset:
    """Three features a,b uniform in (-1,1) with c = -b; labels are the sign
    concepts plus d = [a>0 and b>0]. Ground-truth edges: b->c, a->d, b->d."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    a = rng.uniform(-1.0, 1.0, size=n)
    b = rng.uniform(-1.0, 1.0, size=n)
    c = -b
    features = np.stack([a, b, c], axis=1)
    la, lb = (a > 0).astype(float), (b > 0).astype(float)
    lc = (c > 0).astype(float)
    ld = la * lb
    labels = np.stack([la, lb, lc, ld], axis=1)
    return ConceptDataset(features, labels, ["a", "b", "c", "d"],
                          [("b", "c"), ("a", "d"), ("b", "d")], seed,
                          {"kind": "checkmark", "n": n})


def dsprites_lite() -> GroundTruthScm:
    """Symbolic stand-in for the five-attribute shapes dataset: a heart on the
    right is large, a heart at the top is red, the label is red-and-large."""
    eqs = {
        "shape": ScmEquation([], None, 0.5),
        "size": ScmEquation(["shape", "pos_x"], lambda v: v["shape"] & v["pos_x"]),
        "pos_y": ScmEquation([], None, 0.5),
        "pos_x": ScmEquation([], None, 0.5),
        "color": ScmEquation(["shape", "pos_y"], lambda v: v["shape"] & v["pos_y"]),
        "label": ScmEquation(["size", "color"], lambda v: v["size"] & v["color"]),
    }
    return GroundTruthScm(["shape", "size", "pos_y", "pos_x", "color", "label"], eqs)


def gen_scm_dataset(scm: GroundTruthScm, n: int, seed: int, label_noise: float = 0.0) -> ConceptDataset:
    """Ancestral sampling from `scm`; features are noisy +/-1 encodings of all
    variables plus Gaussian nuisance dimensions; labels optionally flipped."""
    if not (0.0 <= label_noise < 0.5):
        raise ValueError("label_noise must be in [0, 0.5)")
    rng = np.random.default_rng(seed)
    k = len(scm.variables)
    values = {v: np.zeros(n, dtype=int) for v in scm.variables}
    for v in scm.sample_order:
        eq = scm.equations[v]
        if eq.rule is None:
            values[v] = (rng.random(n) < eq.noise).astype(int)
        else:
            base = np.array([eq.rule({p: values[p][i] for p in eq.parents}) for i in range(n)])
            flips = rng.random(n) < eq.noise
            values[v] = np.where(flips, 1 - base, base)
    labels = np.stack([values[v] for v in scm.variables], axis=1).astype(float)
    signal = 2.0 * labels - 1.0
    features = signal + scm.feature_noise * rng.standard_normal((n, k))
    if scm.nuisance_dims:
        features = np.concatenate([features, rng.standard_normal((n, scm.nuisance_dims))], axis=1)
    if label_noise > 0:
        flips = rng.random(labels.shape) < label_noise
        labels = np.where(flips, 1.0 - labels, labels)
    return ConceptDataset(features, labels, list(scm.variables), scm.edges(), seed,
                          {"kind": "scm", "n": n, "label_noise": label_noise})


def gen_incompleteness(n: int, seed: int, ratio: float, m_factors: int = 10,
                       feature_noise: float = 0.5) -> ConceptDataset:
    """Majority-vote task over `m_factors` latent binary factors; only
    ceil((1-ratio)*m) of them are exposed as annotated concepts, while the
    features encode all of them."""
    if not (0.0 <= ratio < 1.0):
        raise ValueError("ratio must be in [0, 1)")
    rng = np.random.default_rng(seed)
    z = (rng.random((n, m_factors)) < 0.5).astype(float)
    task = (z.sum(axis=1) >= m_factors / 2.0).astype(float)
    features = (2.0 * z - 1.0) + feature_noise * rng.standard_normal((n, m_factors))
    features = np.concatenate([features, rng.standard_normal((n, 4))], axis=1)
    exposed = math.ceil((1.0 - ratio) * m_factors)
    labels = np.concatenate([z[:, :exposed], task[:, None]], axis=1)
    names = [f"f{i}" for i in range(exposed)] + ["task"]
    return ConceptDataset(features, labels, names, None, seed,
                          {"kind": "incompleteness", "n": n, "ratio": ratio, "m": m_factors})


def split_dataset(ds: ConceptDataset, fractions: tuple[float, float, float], seed: int):
    """Row-disjoint (train, val, test) partition, deterministic given seed."""
    if any(f <= 0 for f in fractions):
        raise ValueError("fractions must be positive")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"fractions must sum to 1, got {sum(fractions)}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(ds.n)
    n_train = int(round(fractions[0] * ds.n))
    n_val = int(round(fractions[1] * ds.n))
    return (ds.take(perm[:n_train]),
            ds.take(perm[n_train:n_train + n_val]),
            ds.take(perm[n_train + n_val:]))


def perturb_features(ds: ConceptDataset, strength: float, seed: int) -> ConceptDataset:
    """Add strength * standard Gaussian noise to the features; labels untouched."""
    if strength < 0:
        raise ValueError("strength must be >= 0")
    rng = np.random.default_rng(seed)
    noisy = ds.features + strength * rng.standard_normal(ds.features.shape)
    out = ds.take(np.arange(ds.n))
    out.features = noisy
    out.generator = dict(ds.generator, perturb_strength=strength, perturb_seed=seed)
    return out


def save_csv(ds: ConceptDataset, path: str | Path) -> None:
    path = Path(path)
    header = [f"x_{i}" for i in range(ds.d)] + [f"v_{i}" for i in range(ds.k)]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row_x, row_v in zip(ds.features, ds.labels):
            cells = [repr(float(x)) for x in row_x] + [str(int(v)) for v in row_v]
            fh.write(",".join(cells) + "\n")
    meta = {
        "concept_names": ds.concept_names,
        "seed": ds.seed,
        "generator": ds.generator,
        "ground_truth_graph": [f"{s}->{t}" for s, t in (ds.ground_truth_graph or [])],
    }
    with open(path.with_suffix(path.suffix + ".meta.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2)
        fh.write("\n")


def load_csv(path: str | Path) -> ConceptDataset:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        d = sum(1 for h in header if h.startswith("x_"))
        k = len(header) - d
        rows = [line.strip().split(",") for line in fh if line.strip()]
    features = np.array([[float(c) for c in r[:d]] for r in rows])
    labels = np.array([[float(c) for c in r[d:]] for r in rows])
    meta_path = path.with_suffix(path.suffix + ".meta.json")
    names = [f"v_{i}" for i in range(k)]
    graph = None
    seed = 0
    generator: dict = {}
    if meta_path.exists():
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        names = meta.get("concept_names", names)
        seed = meta.get("seed", 0)
        generator = meta.get("generator", {})
        raw = meta.get("ground_truth_graph") or []
        graph = [tuple(e.split("->")) for e in raw] or None
    return ConceptDataset(features, labels, names, graph, seed, generator)
