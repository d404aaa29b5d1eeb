"""Experiment configuration: a JSON document validated into plain dataclasses.

Schema (keys not listed are rejected)::

    {
      "trees":      [{"branching": <BranchingSpec config>, "depths": [3, 4]}, ...],
      "alphas":     [1.25, 2.0],            # each > 1
      "normalized": true,                   # optional, default true
      "size_cap":   100000,                 # optional vertex cap per tree
      "suites":     {"basis": {}, "cz": {"trials": 100, "seed": 7}, ...},
      "tolerances": {"gram": 1e-10, ...},   # optional overrides
      "out":        "reports"               # optional output directory
    }

``suites`` may also be a list of names when no suite needs parameters.
Randomized suites (cz, sparse, weights, endpoints) require an integer ``seed``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .tree import BranchingError, BranchingSpec

SUITES = ("basis", "kernels", "cz", "sparse", "weights", "endpoints")
RANDOMIZED = frozenset({"cz", "sparse", "weights", "endpoints"})

DEFAULT_TOLERANCES = {
    "gram": 1e-10,
    "identity": 1e-10,
    "constant": 1e-12,
    "dense": 1e-10,
    "cz": 1e-12,
    "sparse": 1e-12,
    "duality": 1e-10,
}

# allowed parameters per suite and their defaults
SUITE_DEFAULTS = {
    "basis": {"pairs": 10},
    "kernels": {"mode": "candidates", "controls": True},
    "cz": {"trials": 100},
    "sparse": {"trials": 100},
    "weights": {"p": [2.0], "weights": [{"kind": "constant"}], "tol": 1e-8, "max_iter": 5000, "candidates": 64},
    "endpoints": {"count": 16, "random_per_cube": 2, "kernel_constants": True},
}


class ConfigError(ValueError):
    """Schema violation; ``field`` is a dotted path into the document."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


@dataclass(frozen=True)
class TreeEntry:
    spec: BranchingSpec
    depths: tuple[int, ...]


@dataclass(frozen=True)
class ExperimentConfig:
    trees: tuple[TreeEntry, ...]
    alphas: tuple[float, ...]
    suites: dict
    normalized: bool = True
    size_cap: int = 100_000
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    out: str | None = None

    def grid(self):
        """Grid points ``(spec, alpha, depth)`` in a fixed order, with their indices."""
        for i, entry in enumerate(self.trees):
            for a_i, alpha in enumerate(self.alphas):
                for depth in entry.depths:
                    yield (i, a_i), entry.spec, alpha, depth

    def to_dict(self) -> dict:
        return {
            "trees": [{"branching": e.spec.to_config(), "depths": list(e.depths)} for e in self.trees],
            "alphas": list(self.alphas),
            "normalized": self.normalized,
            "size_cap": self.size_cap,
            "suites": self.suites,
            "tolerances": self.tolerances,
            "out": self.out,
        }


def _number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    return float(value)


def _integer(value, path: str, minimum: int | None = None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(path, f"expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(path, f"must be >= {minimum}, got {value}")
    return value


def _list(value, path: str) -> list:
    if not isinstance(value, list) or not value:
        raise ConfigError(path, "expected a non-empty list")
    return value


def _check_keys(obj: dict, allowed, path: str):
    for k in obj:
        if k not in allowed:
            raise ConfigError(f"{path}.{k}" if path else k, "unknown key")


def _suite_params(name: str, raw, path: str) -> dict:
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(path, "expected an object of suite parameters")
    allowed = set(SUITE_DEFAULTS[name]) | {"seed"}
    _check_keys(raw, allowed, path)
    params = json.loads(json.dumps(SUITE_DEFAULTS[name]))
    params.update(raw)
    if name in RANDOMIZED:
        if "seed" not in raw:
            raise ConfigError(f"{path}.seed", "a seed is required for randomized suites")
        _integer(raw["seed"], f"{path}.seed", 0)
    for key in ("trials", "pairs", "count", "candidates", "max_iter"):
        if key in params:
            _integer(params[key], f"{path}.{key}", 1)
    if "random_per_cube" in params:
        _integer(params["random_per_cube"], f"{path}.random_per_cube", 0)
    if name == "kernels" and params["mode"] not in ("candidates", "exhaustive"):
        raise ConfigError(f"{path}.mode", "expected 'candidates' or 'exhaustive'")
    if name == "weights":
        ps = params["p"] if isinstance(params["p"], list) else [params["p"]]
        for i, p in enumerate(ps):
            if not 1.0 < _number(p, f"{path}.p[{i}]") < float("inf"):
                raise ConfigError(f"{path}.p[{i}]", f"must lie in (1, inf), got {p}")
        params["p"] = [float(p) for p in ps]
        for i, w in enumerate(_list(params["weights"], f"{path}.weights")):
            _check_weight(w, f"{path}.weights[{i}]")
        if _number(params["tol"], f"{path}.tol") <= 0:
            raise ConfigError(f"{path}.tol", "must be positive")
    return params


_WEIGHT_KEYS = {
    "constant": ({"value"}, set()),
    "radial_geometric": ({"beta"}, {"beta"}),
    "sector_bump": ({"level", "child", "factor"}, {"level", "child", "factor"}),
    "random": ({"seed", "log_range"}, {"seed"}),
}


def _check_weight(w, path: str):
    if not isinstance(w, dict):
        raise ConfigError(path, "expected a weight object")
    kind = w.get("kind")
    if kind not in _WEIGHT_KEYS:
        raise ConfigError(f"{path}.kind", f"unknown weight kind {kind!r}")
    allowed, required = _WEIGHT_KEYS[kind]
    _check_keys(w, allowed | {"kind"}, path)
    for k in sorted(required - set(w)):
        raise ConfigError(f"{path}.{k}", "missing")
    for k in ("value", "beta", "factor", "log_range"):
        if k in w and _number(w[k], f"{path}.{k}") <= 0:
            raise ConfigError(f"{path}.{k}", "must be positive")
    for k in ("level", "child", "seed"):
        if k in w:
            _integer(w[k], f"{path}.{k}", 0)


def parse_config(doc) -> ExperimentConfig:
    """Validate a decoded JSON document."""
    if not isinstance(doc, dict):
        raise ConfigError("<root>", "expected an object")
    _check_keys(doc, {"trees", "alphas", "normalized", "size_cap", "suites", "tolerances", "out"}, "")
    if "trees" not in doc:
        raise ConfigError("trees", "missing")
    if "alphas" not in doc:
        raise ConfigError("alphas", "missing")
    if "suites" not in doc:
        raise ConfigError("suites", "missing")

    size_cap = _integer(doc.get("size_cap", 100_000), "size_cap", 1)
    trees = []
    for i, entry in enumerate(_list(doc["trees"], "trees")):
        path = f"trees[{i}]"
        if not isinstance(entry, dict):
            raise ConfigError(path, "expected an object")
        _check_keys(entry, {"branching", "depths"}, path)
        if "branching" not in entry:
            raise ConfigError(f"{path}.branching", "missing")
        try:
            spec = BranchingSpec.from_config(entry["branching"])
        except (BranchingError, KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"{path}.branching", str(exc)) from None
        depths = tuple(_integer(d, f"{path}.depths[{j}]", 1) for j, d in enumerate(_list(entry.get("depths"), f"{path}.depths")))
        trees.append(TreeEntry(spec, depths))

    alphas = []
    for i, a in enumerate(_list(doc["alphas"], "alphas")):
        a = _number(a, f"alphas[{i}]")
        if not a > 1.0:
            raise ConfigError(f"alphas[{i}]", f"alpha must be > 1, got {a}")
        alphas.append(a)

    normalized = doc.get("normalized", True)
    if not isinstance(normalized, bool):
        raise ConfigError("normalized", "expected true or false")

    raw_suites = doc["suites"]
    if isinstance(raw_suites, list):
        raw_suites = {name: {} for name in raw_suites}
    if not isinstance(raw_suites, dict) or not raw_suites:
        raise ConfigError("suites", "expected a non-empty object or list")
    suites = {}
    for name in SUITES:  # canonical order
        if name in raw_suites:
            suites[name] = _suite_params(name, raw_suites[name], f"suites.{name}")
    for name in raw_suites:
        if name not in SUITES:
            raise ConfigError(f"suites.{name}", f"unknown suite (choose from {', '.join(SUITES)})")

    tol = dict(DEFAULT_TOLERANCES)
    raw_tol = doc.get("tolerances", {})
    if not isinstance(raw_tol, dict):
        raise ConfigError("tolerances", "expected an object")
    _check_keys(raw_tol, DEFAULT_TOLERANCES, "tolerances")
    for k, v in raw_tol.items():
        if _number(v, f"tolerances.{k}") <= 0:
            raise ConfigError(f"tolerances.{k}", "must be positive")
        tol[k] = float(v)

    out = doc.get("out")
    if out is not None and not isinstance(out, str):
        raise ConfigError("out", "expected a path string")
    return ExperimentConfig(tuple(trees), tuple(alphas), suites, normalized, size_cap, tol, out)


def load_config(path) -> ExperimentConfig:
    """Read and validate a JSON config file; syntax errors report line and column."""
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {exc.lineno}, column {exc.colno}", exc.msg) from None
    return parse_config(doc)
