"""Public attention entry points.

Each variant has a numba loop kernel and a numpy kernel with identical
counters.  ``backend="jit"`` or ``"numpy"`` forces one; the default picks
the loop kernel unless ``CASCADESIM_DISABLE_JIT`` is set.  Requests for
intermediate tensors always use the numpy kernels, which keep them.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .. import _jit
from ..counters import OpCounters
from . import _vector
from .types import AttnConfig, AttentionError, AttentionResult, NumericDomainError, check_inputs, finish


def _backend(backend: str | None, keep: bool) -> str:
    if keep:
        return "numpy"
    if backend is None:
        return "jit" if _jit.use_jit() else "numpy"
    if backend not in ("jit", "numpy"):
        raise AttentionError(f"unknown backend {backend!r}")
    if backend == "jit" and not _jit.HAVE_NUMBA:
        raise AttentionError("numba is not available")
    return backend


def _from_loops(result, name: str) -> tuple[np.ndarray, OpCounters]:
    out, counts, status = result
    if status:
        raise NumericDomainError(f"{name} must be strictly positive")
    return out, OpCounters(*(int(x) for x in counts))


def attention_naive(Q, K, V, cfg: AttnConfig | None = None, *, backend=None, intermediates=False) -> AttentionResult:
    """Unstabilized softmax with the 1/sqrt(E) logit scale; may overflow."""
    Q, K, V, cfg = check_inputs(Q, K, V, cfg)
    b = _backend(backend, intermediates)
    if b == "jit":
        from . import _loops

        out, counters = _from_loops(_loops.naive_loop(Q, K, V, cfg.single), "SD")
        return finish(out, counters, b)
    out, counters, inter = _vector.naive(Q, K, V, cfg.single, intermediates)
    return finish(out, counters, b, inter)


def attention_3pass(
    Q, K, V, cfg: AttnConfig | None = None, defer_division: bool = False, *, backend=None, intermediates=False
) -> AttentionResult:
    """Global max, then numerator and denominator, then normalize."""
    Q, K, V, cfg = check_inputs(Q, K, V, cfg)
    b = _backend(backend, intermediates)
    if b == "jit":
        from . import _loops

        out, counters = _from_loops(_loops.three_pass_loop(Q, K, V, defer_division, cfg.single), "SD")
        return finish(out, counters, b)
    out, counters, inter = _vector.three_pass(Q, K, V, defer_division, cfg.single, intermediates)
    return finish(out, counters, b, inter)


def attention_2pass(
    Q, K, V, cfg: AttnConfig | None = None, defer_division: bool = False, *, backend=None, intermediates=False
) -> AttentionResult:
    """Per-tile local max and sums, then a correction pass against the global max."""
    Q, K, V, cfg = check_inputs(Q, K, V, cfg)
    b = _backend(backend, intermediates)
    if b == "jit":
        from . import _loops

        out, counters = _from_loops(_loops.two_pass_loop(Q, K, V, cfg.tile, defer_division, cfg.single), "SD")
        return finish(out, counters, b)
    out, counters, inter = _vector.two_pass(Q, K, V, cfg.tile, defer_division, cfg.single, intermediates)
    return finish(out, counters, b, inter)


def attention_1pass(Q, K, V, cfg: AttnConfig | None = None, *, backend=None, intermediates=False) -> AttentionResult:
    """Running max, denominator and numerator-times-V over M0 tiles."""
    Q, K, V, cfg = check_inputs(Q, K, V, cfg)
    b = _backend(backend, intermediates)
    if b == "jit":
        from . import _loops

        out, counters = _from_loops(_loops.one_pass_loop(Q, K, V, cfg.tile, cfg.single), "RD")
        return finish(out, counters, b)
    out, counters, inter = _vector.one_pass(Q, K, V, cfg.tile, cfg.single, intermediates)
    return finish(out, counters, b, inter)


VARIANTS: dict[str, Callable[..., AttentionResult]] = {
    "naive": attention_naive,
    "3pass": lambda Q, K, V, cfg=None, **kw: attention_3pass(Q, K, V, cfg, False, **kw),
    "3pass-deferred": lambda Q, K, V, cfg=None, **kw: attention_3pass(Q, K, V, cfg, True, **kw),
    "2pass": lambda Q, K, V, cfg=None, **kw: attention_2pass(Q, K, V, cfg, False, **kw),
    "2pass-deferred": lambda Q, K, V, cfg=None, **kw: attention_2pass(Q, K, V, cfg, True, **kw),
    "1pass": attention_1pass,
}

STABLE_VARIANTS = ("3pass", "3pass-deferred", "2pass", "2pass-deferred", "1pass")


def run_variant(name: str, Q, K, V, cfg: AttnConfig | None = None, **kw) -> AttentionResult:
    try:
        fn = VARIANTS[name]
    except KeyError:
        raise AttentionError(f"unknown variant {name!r}; choose from {', '.join(VARIANTS)}") from None
    return fn(Q, K, V, cfg, **kw)


def expected_divides(name: str, cfg: AttnConfig) -> int:
    """Division count law: F*P when the divide is deferred, M*P otherwise."""
    if name in ("3pass-deferred", "2pass-deferred", "1pass"):
        return cfg.f * cfg.p
    return cfg.m * cfg.p


def expected_counters(name: str, cfg: AttnConfig) -> OpCounters:
    """Closed-form counters for ``name``; used by the simulator cross-check."""
    m, p, e, f = cfg.m, cfg.p, cfg.e, cfg.f
    m1 = cfg.m1
    qk = OpCounters(mul=e * m * p, add=e * m * p)
    av = OpCounters(mul=f * m * p, add=f * m * p)
    if name == "1pass":
        return OpCounters(
            mul=e * m * p + f * m * p + m1 * p + f * m1 * p,
            add=e * m * p + 2 * m * p + f * m * p + 2 * m1 * p + f * m1 * p,
            div=f * p,
            exp=m * p + m1 * p,
            max=m * p + m1 * p,
        )
    if name == "naive":
        return qk + av + OpCounters(mul=m * p, add=m * p, div=m * p, exp=m * p)
    softmax = OpCounters(add=2 * m * p, exp=m * p, max=m * p, div=expected_divides(name, cfg))
    if name.startswith("2pass"):
        softmax = softmax + OpCounters(mul=m * p + m1 * p, add=2 * m1 * p, exp=m1 * p, max=m1 * p)
    return qk + av + softmax
