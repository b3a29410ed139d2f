"""Reference attention with a materialized softmax and compensated sums.

Dot products and sums use the Dot2/Sum2 scheme (error-free TwoSum and a
Veltkamp-split TwoProduct), which behaves as if accumulated in roughly twice
the working precision.  The oracle shares no code with the kernels.
"""

from __future__ import annotations

import numpy as np

from ..counters import OpCounters
from .types import AttnConfig, AttentionResult, NumericDomainError, check_inputs, finish

_SPLITTER = 134217729.0  # 2**27 + 1


def _two_sum(a, b):
    s = a + b
    bb = s - a
    return s, (a - (s - bb)) + (b - bb)


def _split(a):
    c = _SPLITTER * a
    hi = c - (c - a)
    return hi, a - hi


def _two_prod(a, b):
    p = a * b
    ah, al = _split(a)
    bh, bl = _split(b)
    return p, ((ah * bh - p) + ah * bl + al * bh) + al * bl


def dot2(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Compensated dot product over axis 0 of broadcast ``x * y``."""
    x, y = np.broadcast_arrays(x, y)
    s = np.zeros(x.shape[1:])
    c = np.zeros(x.shape[1:])
    for i in range(x.shape[0]):
        p, pe = _two_prod(x[i], y[i])
        s, se = _two_sum(s, p)
        c += pe + se
    return s + c


def sum2(x: np.ndarray) -> np.ndarray:
    """Compensated sum over axis 0."""
    s = np.zeros(x.shape[1:])
    c = np.zeros(x.shape[1:])
    for i in range(x.shape[0]):
        s, se = _two_sum(s, x[i])
        c += se
    return s + c


def oracle_attention(Q, K, V, cfg: AttnConfig | None = None) -> AttentionResult:
    Q, K, V, cfg = check_inputs(Q, K, V, cfg)
    m, p, e, f = cfg.m, cfg.p, cfg.e, cfg.f
    QK = dot2(K[:, :, None], Q[:, None, :])  # (M, P)
    GM = QK.max(axis=0)
    SN = np.exp(QK - GM)
    SD = sum2(SN)
    if not np.all(SD > 0):
        raise NumericDomainError("softmax denominator is not positive")
    A = SN / SD
    AV = dot2(V.T[:, :, None], A[:, None, :])  # (F, P)
    counters = OpCounters(
        mul=e * m * p + f * m * p,
        add=e * m * p + 2 * m * p + f * m * p,
        div=m * p,
        exp=m * p,
        max=m * p,
    )
    inter = {"QK": QK, "GM": GM, "SN": SN, "SD": SD, "A": A}
    return finish(AV, counters, "oracle", inter)
