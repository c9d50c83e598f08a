"""Canonical JSON serialization and the model/results file formats.

All files this package writes go through :func:`dumps_canonical`, which
formats floats with 17 significant digits so that float64 values round-trip
exactly and repeated runs produce byte-identical output.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .core import (
    ContextAwareParams,
    Factors,
    Hyperparams,
    RatingDominantParams,
)

__all__ = [
    "dumps_canonical",
    "save_model",
    "load_model",
    "save_results",
    "load_results",
]


def _format_float(x: float) -> str:
    if math.isnan(x) or math.isinf(x):
        raise ValueError(f"cannot serialize non-finite value {x!r}")
    return format(x, ".17g")


def _encode(obj, pieces: list[str]) -> None:
    if isinstance(obj, dict):
        pieces.append("{")
        for idx, (key, value) in enumerate(obj.items()):
            if idx:
                pieces.append(", ")
            if not isinstance(key, str):
                raise TypeError(f"JSON object keys must be strings, got {key!r}")
            pieces.append(json.dumps(key))
            pieces.append(": ")
            _encode(value, pieces)
        pieces.append("}")
    elif isinstance(obj, (list, tuple)) or isinstance(obj, np.ndarray):
        seq = obj.tolist() if isinstance(obj, np.ndarray) else obj
        pieces.append("[")
        for idx, value in enumerate(seq):
            if idx:
                pieces.append(", ")
            _encode(value, pieces)
        pieces.append("]")
    elif isinstance(obj, bool) or isinstance(obj, np.bool_):
        pieces.append("true" if obj else "false")
    elif isinstance(obj, (int, np.integer)):
        pieces.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        pieces.append(_format_float(float(obj)))
    elif isinstance(obj, str):
        pieces.append(json.dumps(obj))
    elif obj is None:
        pieces.append("null")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps_canonical(obj) -> str:
    """Serialize to JSON with exact-round-trip floats and a trailing newline."""
    pieces: list[str] = []
    _encode(obj, pieces)
    pieces.append("\n")
    return "".join(pieces)


# ---------------------------------------------------------------------------
# Model files
# ---------------------------------------------------------------------------

def _response_block(response) -> dict:
    if isinstance(response, RatingDominantParams):
        return {"mu_raw": response.mu_raw}
    if isinstance(response, ContextAwareParams):
        return {"delta": response.delta, "theta_u": response.theta_u,
                "theta_v": response.theta_v}
    raise TypeError(f"unknown response params {type(response).__name__}")


def save_model(model, path) -> None:
    """Write a trained model to a JSON file.

    Factor matrices are stored row-major per user / per item (n x k and
    m x k). The variant field dispatches loading.
    """
    from .pmf import PmfModel
    from .rapmf import RapmfModel

    doc = {
        "variant": None,
        "k": model.factors.k,
        "d_levels": model.d_levels,
        "u": model.factors.u.T,
        "v": model.factors.v.T,
        "hyper": asdict(model.hyper),
    }
    if isinstance(model, PmfModel):
        doc["variant"] = "pmf"
        doc["objective_trace"] = model.objective_trace
    elif isinstance(model, RapmfModel):
        doc["variant"] = model.response.variant
        doc["response"] = _response_block(model.response)
        doc["beta"] = model.hyper.beta
        doc["sigma_r"] = model.hyper.sigma_r
        doc["loglik_trace"] = model.loglik_trace
    else:
        raise TypeError(f"cannot serialize model of type {type(model).__name__}")
    Path(path).write_text(dumps_canonical(doc), encoding="utf-8", newline="\n")


def load_model(path):
    """Read back a model file written by :func:`save_model`."""
    from .pmf import PmfModel
    from .rapmf import RapmfModel

    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    variant = doc["variant"]
    factors = Factors(doc["k"], np.array(doc["u"], dtype=np.float64).T,
                      np.array(doc["v"], dtype=np.float64).T)
    hyper = Hyperparams(**doc["hyper"])
    if variant == "pmf":
        return PmfModel(factors, doc["d_levels"], hyper,
                        np.array(doc["objective_trace"], dtype=np.float64))
    if variant == "rapmf-r":
        response = RatingDominantParams(np.array(doc["response"]["mu_raw"]))
    elif variant == "rapmf-c":
        response = ContextAwareParams(
            np.array(doc["response"]["delta"]),
            np.array(doc["response"]["theta_u"]),
            np.array(doc["response"]["theta_v"]))
    else:
        raise ValueError(f"unknown model variant {variant!r}")
    return RapmfModel(factors, response, doc["d_levels"], hyper,
                      np.array(doc["loglik_trace"], dtype=np.float64))


# ---------------------------------------------------------------------------
# Results files
# ---------------------------------------------------------------------------

def save_results(records, path, provenance: dict | None = None) -> None:
    """Write evaluation records with enough provenance to regenerate them."""
    doc = {
        "version": __version__,
        "provenance": provenance or {},
        "records": [
            {
                "variant": r.variant,
                "protocol": r.protocol,
                "rmse": r.rmse,
                "n_test": r.n_test,
                "seed": r.seed,
                "hyper": asdict(r.hyper),
            }
            for r in records
        ],
    }
    Path(path).write_text(dumps_canonical(doc), encoding="utf-8", newline="\n")


def load_results(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))
