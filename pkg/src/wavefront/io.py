"""Configuration loading and deterministic JSON/CSV output."""
from __future__ import annotations

import csv
import hashlib
import json
import math
from importlib import resources

import jsonschema
import numpy as np

from .errors import ConfigError
from .models import model_from_dict
from .settings import Tolerances


def _schema():
    with resources.files("wavefront").joinpath("schema/config.json").open() as fh:
        return json.load(fh)


def clean(obj):
    """Convert numpy types to plain Python and non-finite floats to ``None``."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist())
    if isinstance(obj, np.generic):
        return clean(obj.item())
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def dump_json(path, obj):
    """Sorted keys, shortest round-trip float repr, trailing newline."""
    with open(path, "w") as fh:
        json.dump(clean(obj), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def load_json(path):
    with open(path) as fh:
        return json.load(fh)


def write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([f"{float(v):.17g}" for v in row])


class RunConfig:
    """Validated run configuration.

    Attributes
    ----------
    raw : dict
        The configuration as read.
    model : DelayModel
    tol : Tolerances
    """

    def __init__(self, raw: dict):
        try:
            jsonschema.validate(raw, _schema())
        except jsonschema.ValidationError as exc:
            where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigError(f"config error at {where}: {exc.message}") from exc
        self.raw = raw
        try:
            self.tol = Tolerances.from_dict(raw.get("tolerances"))
            self.model = model_from_dict(raw["model"], self.tol)
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc
        pipe = raw.get("pipeline", {})
        self.speeds = [float(c) for c in pipe.get("speeds", [])]
        self.reuse = bool(pipe.get("reuse_artifacts", True))
        self.validate = dict(pipe.get("validate", {}))
        self.output = raw.get("output", "out")
        self.seed = int(raw.get("seed", 0))

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            raw = load_json(path)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        return cls(raw)

    def digest(self, *parts) -> str:
        """Hash of the model, tolerances and extra parts; keys upstream artifacts."""
        blob = json.dumps(clean([self.raw["model"], self.tol.to_dict(), list(parts)]), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]
