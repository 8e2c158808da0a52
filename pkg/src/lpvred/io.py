"""JSON load/save for models, Gramian pairs, projections and covariances."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .core import AffineLpvModel, ParameterProjection
from .errors import ConfigurationError
from .gramians import AffineGramian
from .sensitivity import CovarianceMatrix


def _default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    if hasattr(o, "to_dict"):
        return o.to_dict()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def dumps(obj) -> str:
    """Deterministic JSON text (sorted keys, fixed indentation)."""
    return json.dumps(obj, default=_default, indent=1, sort_keys=True)


def write_json(path, obj):
    Path(path).write_text(dumps(obj) + "\n")


def read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: not valid JSON ({exc})") from exc


def save_model(path, model: AffineLpvModel):
    write_json(path, {"type": "affine_lpv", **model.to_dict()})


def load_model(path, normalize=True) -> AffineLpvModel:
    d = read_json(path)
    if d.get("type", "affine_lpv") != "affine_lpv":
        raise ConfigurationError(f"{path}: expected a model file, found type {d.get('type')!r}")
    return AffineLpvModel.from_dict(d, normalize=normalize)


def save_gramians(path, gP: AffineGramian, gQ: AffineGramian, meta=None):
    write_json(path, {"type": "gramians", "P": gP.to_dict(), "Q": gQ.to_dict(), "meta": meta or {}})


def load_gramians(path) -> tuple[AffineGramian, AffineGramian]:
    d = read_json(path)
    if d.get("type") != "gramians":
        raise ConfigurationError(f"{path}: expected a Gramian file, found type {d.get('type')!r}")
    return AffineGramian.from_dict(d["P"]), AffineGramian.from_dict(d["Q"])


def save_projection(path, proj: ParameterProjection, meta=None):
    d = {"type": "projection", **proj.to_dict()}
    if meta:
        d["meta"] = meta
    write_json(path, d)


def load_projection(path) -> ParameterProjection:
    d = read_json(path)
    if d.get("type", "projection") != "projection":
        raise ConfigurationError(f"{path}: expected a projection file, found type {d.get('type')!r}")
    return ParameterProjection.from_dict(d)


def save_covariance(path, cov: CovarianceMatrix):
    write_json(path, {"type": "covariance", **cov.to_dict()})


def load_covariance(path) -> CovarianceMatrix:
    d = read_json(path)
    if d.get("type", "covariance") != "covariance":
        raise ConfigurationError(f"{path}: expected a covariance file, found type {d.get('type')!r}")
    return CovarianceMatrix.from_dict(d)
