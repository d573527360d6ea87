"""Checkpoint container shared by the graph model and the baselines.

Structured text (JSON) with float arrays hex-encoded as little-endian
64-bit words, so parameters round-trip bit-exactly. A content hash guards
against truncation or corruption.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

FORMAT_VERSION = "1"


class CheckpointError(ValueError):
    pass


def encode_array(arr: np.ndarray) -> dict:
    arr = np.asarray(arr, dtype=np.float64)
    return {"shape": list(arr.shape), "hex": arr.astype("<f8").tobytes().hex()}


def decode_array(d: dict) -> np.ndarray:
    raw = bytes.fromhex(d["hex"])
    arr = np.frombuffer(raw, dtype="<f8").astype(np.float64)
    return arr.reshape(d["shape"])


def _digest(payload: dict) -> str:
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def save_checkpoint(path: str | Path, payload: dict) -> None:
    payload = dict(payload)
    payload["version"] = FORMAT_VERSION
    payload["integrity"] = _digest({k: v for k, v in payload.items() if k != "integrity"})
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")


def load_checkpoint(path: str | Path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"unreadable checkpoint {path}: {exc}") from exc
    version = payload.get("version")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version!r}")
    expected = payload.get("integrity")
    actual = _digest({k: v for k, v in payload.items() if k != "integrity"})
    if expected != actual:
        raise CheckpointError("checkpoint integrity check failed")
    return payload


def save_model(path: str | Path, model, extra: dict | None = None) -> None:
    """Serialise a CgmModel or BaselineModel with config, seed, and metrics."""
    from .model import CgmModel, config_to_dict

    payload = {
        "kind": "cgm" if isinstance(model, CgmModel) else model.kind,
        "concept_names": list(model.concept_names),
        "config": config_to_dict(model.config),
        "seed": model.config.seed,
        "metrics": model.metrics,
        "params": {name: encode_array(p.value) for name, p in model.params.items()},
    }
    if isinstance(model, CgmModel):
        payload["adjacency"] = {
            "m": encode_array(model.adjacency.m),
            "gamma": encode_array(np.asarray(model.adjacency.gamma)),
            "tau": model.adjacency.tau,
            "constraints": (encode_array(model.adjacency.constraints)
                            if model.adjacency.constraints is not None else None),
        }
    if extra:
        payload.update(extra)
    save_checkpoint(path, payload)


def load_model(path: str | Path):
    """Rebuild the model stored at `path` (graph model or baseline)."""
    from .baselines import BaselineModel
    from .model import CgmModel, config_from_dict

    payload = load_checkpoint(path)
    config = config_from_dict(payload["config"])
    names = payload["concept_names"]
    if payload["kind"] == "cgm":
        model = CgmModel(config, names)
        adj = payload["adjacency"]
        model._adj_m.value[...] = decode_array(adj["m"])
        model._adj_gamma.value = decode_array(adj["gamma"]).reshape(())
        model.adjacency.m = model._adj_m.value
        model.adjacency.gamma = float(model._adj_gamma.value)
        model.adjacency.tau = adj.get("tau", 0.1)
        if adj.get("constraints") is not None:
            model.adjacency.constraints = decode_array(adj["constraints"])
    else:
        model = BaselineModel(payload["kind"], config, names)
    for name, p in model.params.items():
        p.value[...] = decode_array(payload["params"][name])
    model.metrics = payload.get("metrics", {})
    return model
