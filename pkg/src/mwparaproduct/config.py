"""JSON run configuration: parsing, validation and defaults."""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field

from .errors import ConfigError, ConfigVersionError
from .estimators import DEFAULT_THRESHOLDS, METHODS, OPERATORS
from .reducing import BACKENDS
from .weights import WeightFamily, as_exponent

SCHEMA_VERSION = 1
MAX_RESOLUTION = 14

_FAMILY_KEYS = ("family", "matrix", "alpha", "alphas", "x0", "n", "theta")
_KNOWN = set(_FAMILY_KEYS) | {
    "schema_version", "p", "N", "resolutions", "depth", "depths", "lambda", "lambda_factor",
    "max_generations", "backend", "seed", "thresholds", "out", "q_grid", "operator", "corpus_size",
    "method", "sampling", "starts", "max_iter", "tol", "input", "symbol", "samples", "blowup",
    "lambda_ladder", "cotlar_samples",
}


@dataclass
class Config:
    family: WeightFamily
    p: float = 2.0
    N: int = 10
    resolutions: list = field(default_factory=lambda: [8, 10, 12])
    depth: int = 8
    depths: list = field(default_factory=list)
    lam: float | None = None
    lambda_factor: float = 4.0
    lambda_ladder: list = field(default_factory=lambda: [1.5, 2, 4, 8, 16, 32, 64])
    max_generations: int | None = None
    backend: str = "auto"
    seed: int = 0
    thresholds: dict = field(default_factory=lambda: dict(DEFAULT_THRESHOLDS))
    out: str | None = None
    q_grid: list = field(default_factory=lambda: [1.5, 2.0, 2.5, 3.0, 4.0, 6.0])
    blowup: float = 1.1
    operator: str = "conjugated"
    corpus_size: int = 10
    method: str = "auto"
    sampling: str = "midpoint"
    starts: int = 16
    max_iter: int = 100
    tol: float = 1e-7
    samples: int = 100
    cotlar_samples: int = 0
    input: str | None = None
    symbol: str | None = None
    schema_version: int = SCHEMA_VERSION

    @property
    def n(self) -> int:
        return self.family.n

    def to_dict(self) -> dict:
        d = asdict(self)
        d["family"] = self.family.to_dict()
        d["n"] = self.n
        return d


def _int_list(v, name):
    if not isinstance(v, (list, tuple)) or not v:
        raise ConfigError(f"{name!r} must be a nonempty list")
    return [int(x) for x in v]


def parse_config(text: str, overrides: dict | None = None) -> Config:
    """Validate a JSON document and fill defaults.

    Raises
    ------
    InvalidExponentError, UnknownFamilyError, ConfigVersionError, ConfigError
    """
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f"config is not valid JSON: {err}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    raw = {**raw, **(overrides or {})}
    unknown = sorted(set(raw) - _KNOWN)
    if unknown:
        raise ConfigError(f"unknown config keys: {unknown}")

    version = raw.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigVersionError(f"schema_version {version!r} is not supported (expected {SCHEMA_VERSION})")

    p = as_exponent(raw.get("p", 2.0)).p
    family = WeightFamily.from_dict({k: raw[k] for k in _FAMILY_KEYS if k in raw})

    N = int(raw.get("N", 10))
    resolutions = _int_list(raw["resolutions"], "resolutions") if "resolutions" in raw else [8, 10, 12]
    depths = _int_list(raw["depths"], "depths") if "depths" in raw else []
    for r in [N, *resolutions, *depths]:
        if not 1 <= r <= MAX_RESOLUTION:
            raise ConfigError(f"resolution {r} outside 1..{MAX_RESOLUTION}")
    if "depth" in raw:
        depth = int(raw["depth"])
        if not 0 <= depth <= N:
            raise ConfigError(f"depth {depth} must lie in 0..N={N}")
    else:
        depth = min(8, N)

    backend = raw.get("backend", "auto")
    if backend not in BACKENDS:
        raise ConfigError(f"unknown backend {backend!r}; expected one of {BACKENDS}")
    method = raw.get("method", "auto")
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}; expected one of {METHODS}")
    operator = raw.get("operator", "conjugated")
    if operator not in OPERATORS + ("square", "maximal"):
        raise ConfigError(f"unknown operator {operator!r}")
    thresholds = {**DEFAULT_THRESHOLDS, **raw.get("thresholds", {})}
    if not thresholds["plateau"] < thresholds["growth"]:
        raise ConfigError("thresholds need plateau < growth")
    lam = raw.get("lambda")
    if lam is not None and not float(lam) > 0:
        raise ConfigError("lambda must be positive")
    sampling = raw.get("sampling", "midpoint")
    if sampling not in ("midpoint", "average"):
        raise ConfigError(f"unknown sampling {sampling!r}")
    out = raw.get("out")
    if out is not None:
        _check_writable(out)

    seed = int(raw.get("seed", 0))
    if seed < 0:
        raise ConfigError("seed must be nonnegative")
    return Config(
        family=family,
        p=p,
        N=N,
        resolutions=sorted(resolutions),
        depth=depth,
        depths=sorted(depths),
        lam=None if lam is None else float(lam),
        lambda_factor=float(raw.get("lambda_factor", 4.0)),
        lambda_ladder=[float(x) for x in raw.get("lambda_ladder", [1.5, 2, 4, 8, 16, 32, 64])],
        max_generations=raw.get("max_generations"),
        backend=backend,
        seed=seed,
        thresholds=thresholds,
        out=out,
        q_grid=[float(q) for q in raw.get("q_grid", [1.5, 2.0, 2.5, 3.0, 4.0, 6.0])],
        blowup=float(raw.get("blowup", 1.1)),
        operator=operator,
        corpus_size=int(raw.get("corpus_size", 10)),
        method=method,
        sampling=sampling,
        starts=int(raw.get("starts", 16)),
        max_iter=int(raw.get("max_iter", 100)),
        tol=float(raw.get("tol", 1e-7)),
        samples=int(raw.get("samples", 100)),
        cotlar_samples=int(raw.get("cotlar_samples", 0)),
        input=raw.get("input"),
        symbol=raw.get("symbol"),
        schema_version=version,
    )


def _check_writable(path):
    target = path
    while target and not os.path.exists(target):
        target = os.path.dirname(target)
    target = target or "."
    if not os.access(target, os.W_OK):
        raise ConfigError(f"output location {path!r} is not writable")
