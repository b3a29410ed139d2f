"""Loop-level attention kernels compiled with numba.

Every kernel returns ``(AV, counts, status)`` where ``counts`` is
``[mul, add, div, exp, max]`` incremented at each scalar application and
``status`` is 0 on success or 1 when a softmax denominator was not positive.
Reductions start from their identity (0 or -inf), so a reduction over ``n``
points costs ``n`` operations.

Inner loops run along contiguous axes as independent accumulators (a row of
logits over ``m``, an output column over ``f``) so they vectorize without
reassociating any sum.
"""

from __future__ import annotations

import math

import numpy as np

from .._jit import njit

MUL, ADD, DIV, EXP, MAX = 0, 1, 2, 3, 4


@njit(cache=True, error_model="numpy")
def _st(x, single):
    if single:
        return np.float64(np.float32(x))
    return x


@njit(cache=True, error_model="numpy")
def _logits(Q, K, p, lo, hi, out):
    """out[j] = sum_e Q[e, p] * K[e, lo + j] for j < hi - lo."""
    n = hi - lo
    for j in range(n):
        out[j] = 0.0
    for e in range(Q.shape[0]):
        q = Q[e, p]
        for j in range(n):
            out[j] += q * K[e, lo + j]


@njit(cache=True, error_model="numpy")
def _weighted(w, VT, lo, hi, acc):
    """acc[f] = sum_j w[j] * V[f, lo + j]."""
    for f in range(acc.shape[0]):
        acc[f] = 0.0
    for j in range(hi - lo):
        wj = w[j]
        for f in range(acc.shape[0]):
            acc[f] += wj * VT[lo + j, f]


@njit(cache=True, error_model="numpy")
def naive_loop(Q, K, V, single):
    e_n, p_n = Q.shape
    f_n, m_n = V.shape
    VT = np.ascontiguousarray(V.T)
    counts = np.zeros(5, dtype=np.int64)
    scale = 1.0 / math.sqrt(e_n)
    S = np.empty(m_n)
    acc = np.empty(f_n)
    AV = np.empty((f_n, p_n))
    for p in range(p_n):
        _logits(Q, K, p, 0, m_n, S)
        sd = 0.0
        for m in range(m_n):
            S[m] = _st(math.exp(_st(_st(S[m], single) * scale, single)), single)
            sd += S[m]
        sd = _st(sd, single)
        counts[MUL] += e_n * m_n + m_n
        counts[ADD] += e_n * m_n + m_n
        counts[EXP] += m_n
        if sd != 0.0:
            for m in range(m_n):
                S[m] = _st(S[m] / sd, single)
            counts[DIV] += m_n
        else:
            S[:] = 0.0
        _weighted(S, VT, 0, m_n, acc)
        for f in range(f_n):
            AV[f, p] = _st(acc[f], single)
        counts[MUL] += f_n * m_n
        counts[ADD] += f_n * m_n
    return AV, counts, 0


@njit(cache=True, error_model="numpy")
def three_pass_loop(Q, K, V, defer, single):
    e_n, p_n = Q.shape
    f_n, m_n = V.shape
    VT = np.ascontiguousarray(V.T)
    counts = np.zeros(5, dtype=np.int64)
    SN = np.empty(m_n)
    acc = np.empty(f_n)
    AV = np.empty((f_n, p_n))
    for p in range(p_n):
        _logits(Q, K, p, 0, m_n, SN)
        gm = -math.inf
        for m in range(m_n):
            SN[m] = _st(SN[m], single)
            gm = max(gm, SN[m])
        gm = _st(gm, single)
        sd = 0.0
        for m in range(m_n):
            SN[m] = _st(math.exp(SN[m] - gm), single)
            sd += SN[m]
        sd = _st(sd, single)
        counts[MUL] += (e_n + f_n) * m_n
        counts[ADD] += (e_n + f_n) * m_n + 2 * m_n
        counts[MAX] += m_n
        counts[EXP] += m_n
        if not sd > 0.0:
            return AV, counts, 1
        if defer:
            _weighted(SN, VT, 0, m_n, acc)
            for f in range(f_n):
                AV[f, p] = _st(_st(acc[f], single) / sd, single)
            counts[DIV] += f_n
        else:
            for m in range(m_n):
                SN[m] = _st(SN[m] / sd, single)
            counts[DIV] += m_n
            _weighted(SN, VT, 0, m_n, acc)
            for f in range(f_n):
                AV[f, p] = _st(acc[f], single)
    return AV, counts, 0


@njit(cache=True, error_model="numpy")
def two_pass_loop(Q, K, V, m0, defer, single):
    e_n, p_n = Q.shape
    f_n, m_n = V.shape
    m1_n = (m_n + m0 - 1) // m0
    VT = np.ascontiguousarray(V.T)
    counts = np.zeros(5, dtype=np.int64)
    SLN = np.empty(m_n)
    LM = np.empty(m1_n)
    SLD = np.empty(m1_n)
    PLM = np.empty(m1_n)
    acc = np.empty(f_n)
    AV = np.empty((f_n, p_n))
    for p in range(p_n):
        # pass 1: per-tile max, numerator and denominator
        _logits(Q, K, p, 0, m_n, SLN)
        for t in range(m1_n):
            lo = t * m0
            hi = min(lo + m0, m_n)
            lm = -math.inf
            for m in range(lo, hi):
                SLN[m] = _st(SLN[m], single)
                lm = max(lm, SLN[m])
            lm = _st(lm, single)
            LM[t] = lm
            sld = 0.0
            for m in range(lo, hi):
                SLN[m] = _st(math.exp(SLN[m] - lm), single)
                sld += SLN[m]
            SLD[t] = _st(sld, single)
        counts[MUL] += e_n * m_n
        counts[ADD] += e_n * m_n + 2 * m_n
        counts[MAX] += m_n
        counts[EXP] += m_n
        gm = -math.inf
        for t in range(m1_n):
            gm = max(gm, LM[t])
        gm = _st(gm, single)
        counts[MAX] += m1_n
        # pass 2: correct by exp(LM - GM)
        sd = 0.0
        for t in range(m1_n):
            PLM[t] = _st(math.exp(LM[t] - gm), single)
            sd += SLD[t] * PLM[t]
        sd = _st(sd, single)
        counts[ADD] += 2 * m1_n
        counts[EXP] += m1_n
        counts[MUL] += m1_n
        for t in range(m1_n):
            lo = t * m0
            hi = min(lo + m0, m_n)
            for m in range(lo, hi):
                SLN[m] = _st(SLN[m] * PLM[t], single)
        counts[MUL] += m_n
        if not sd > 0.0:
            return AV, counts, 1
        if defer:
            _weighted(SLN, VT, 0, m_n, acc)
            for f in range(f_n):
                AV[f, p] = _st(_st(acc[f], single) / sd, single)
            counts[DIV] += f_n
        else:
            for m in range(m_n):
                SLN[m] = _st(SLN[m] / sd, single)
            counts[DIV] += m_n
            _weighted(SLN, VT, 0, m_n, acc)
            for f in range(f_n):
                AV[f, p] = _st(acc[f], single)
        counts[MUL] += f_n * m_n
        counts[ADD] += f_n * m_n
    return AV, counts, 0


@njit(cache=True, error_model="numpy")
def one_pass_loop(Q, K, V, m0, single):
    e_n, p_n = Q.shape
    f_n, m_n = V.shape
    m1_n = (m_n + m0 - 1) // m0
    VT = np.ascontiguousarray(V.T)
    counts = np.zeros(5, dtype=np.int64)
    SLN = np.empty(m0)
    RNV = np.empty(f_n)
    slnv = np.empty(f_n)
    AV = np.empty((f_n, p_n))
    status = 0
    for p in range(p_n):
        rm = -math.inf
        rd = 0.0
        for f in range(f_n):
            RNV[f] = 0.0
        for t in range(m1_n):
            lo = t * m0
            hi = min(lo + m0, m_n)
            n = hi - lo
            _logits(Q, K, p, lo, hi, SLN)
            lm = -math.inf
            for j in range(n):
                SLN[j] = _st(SLN[j], single)
                lm = max(lm, SLN[j])
            lm = _st(lm, single)
            rm_new = _st(max(rm, lm), single)
            sld = 0.0
            for j in range(n):
                SLN[j] = _st(math.exp(SLN[j] - rm_new), single)
                sld += SLN[j]
            sld = _st(sld, single)
            prm = _st(math.exp(rm - rm_new), single)
            spd = _st(rd * prm, single)
            rd = _st(sld + spd, single)
            _weighted(SLN, VT, lo, hi, slnv)
            for f in range(f_n):
                spnv = _st(RNV[f] * prm, single)
                RNV[f] = _st(_st(slnv[f], single) + spnv, single)
            rm = rm_new
            counts[MUL] += e_n * n + f_n * n + 1 + f_n
            counts[ADD] += e_n * n + 2 * n + f_n * n + 2 + f_n
            counts[MAX] += n + 1
            counts[EXP] += n + 1
        if not rd > 0.0:
            status = 1
            break
        for f in range(f_n):
            AV[f, p] = _st(RNV[f] / rd, single)
        counts[DIV] += f_n
    return AV, counts, status
