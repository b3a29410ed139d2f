from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..counters import OpCounters


class AttentionError(ValueError):
    pass


class ShapeError(AttentionError):
    pass


class NumericDomainError(ArithmeticError):
    """A softmax denominator was not strictly positive."""


@dataclass(frozen=True)
class AttnConfig:
    m: int
    p: int
    e: int
    f: int
    m0: int | None = None
    precision: str = "double"

    def __post_init__(self):
        for name in ("m", "p", "e", "f"):
            if getattr(self, name) < 1:
                raise AttentionError(f"{name} must be at least 1")
        if self.m0 is not None and not 1 <= self.m0 <= self.m:
            raise AttentionError(f"m0 must lie in [1, m], got {self.m0}")
        if self.precision not in ("double", "single"):
            raise AttentionError(f"precision must be 'double' or 'single', got {self.precision!r}")

    @property
    def tile(self) -> int:
        return self.m if self.m0 is None else self.m0

    @property
    def m1(self) -> int:
        return math.ceil(self.m / self.tile)

    @property
    def single(self) -> bool:
        return self.precision == "single"

    @classmethod
    def from_arrays(cls, Q, K, V, m0: int | None = None, precision: str = "double") -> "AttnConfig":
        Q, K, V = np.asarray(Q), np.asarray(K), np.asarray(V)
        if Q.ndim != 2 or K.ndim != 2 or V.ndim != 2:
            raise ShapeError("Q, K and V must be 2-D (E x P, E x M, F x M)")
        return cls(m=K.shape[1], p=Q.shape[1], e=Q.shape[0], f=V.shape[0], m0=m0, precision=precision)


@dataclass
class AttentionResult:
    output: np.ndarray
    counters: OpCounters
    any_nan: bool
    any_inf: bool
    backend: str = "numpy"
    intermediates: dict[str, np.ndarray] | None = field(default=None, repr=False)

    @property
    def stable(self) -> bool:
        return not (self.any_nan or self.any_inf)


def check_inputs(Q, K, V, cfg: AttnConfig | None, m0: int | None = None):
    Q = np.ascontiguousarray(Q, dtype=np.float64)
    K = np.ascontiguousarray(K, dtype=np.float64)
    V = np.ascontiguousarray(V, dtype=np.float64)
    if cfg is None:
        cfg = AttnConfig.from_arrays(Q, K, V, m0=m0)
    if Q.shape != (cfg.e, cfg.p):
        raise ShapeError(f"Q must be {cfg.e}x{cfg.p}, got {Q.shape}")
    if K.shape != (cfg.e, cfg.m):
        raise ShapeError(f"K must be {cfg.e}x{cfg.m}, got {K.shape}")
    if V.shape != (cfg.f, cfg.m):
        raise ShapeError(f"V must be {cfg.f}x{cfg.m}, got {V.shape}")
    if cfg.single:
        Q, K, V = (x.astype(np.float32).astype(np.float64) for x in (Q, K, V))
    return Q, K, V, cfg


def finish(out: np.ndarray, counters: OpCounters, backend: str, inter=None) -> AttentionResult:
    return AttentionResult(
        output=out,
        counters=counters,
        any_nan=bool(np.isnan(out).any()),
        any_inf=bool(np.isinf(out).any()),
        backend=backend,
        intermediates=inter,
    )


def max_rel_error(a: np.ndarray, b: np.ndarray) -> float:
    """Normwise relative error ``max|a - b| / max|b|``."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    scale = np.max(np.abs(b)) if b.size else 0.0
    diff = np.max(np.abs(a - b)) if a.size else 0.0
    if not np.isfinite(diff):
        return math.inf
    return float(diff / scale) if scale > 0 else float(diff)
