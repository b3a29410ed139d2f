"""Pure numpy attention kernels.

Counters follow Einsum semantics: one operation per iteration-space point of
each map action, and ``n`` operations for a reduction over ``n`` points
(reductions start from their identity).  Subtraction counts as an add;
negation is free.
"""

from __future__ import annotations

import math

import numpy as np

from ..counters import OpCounters
from .types import NumericDomainError


def _store(single: bool):
    if single:
        return lambda x: np.asarray(x, dtype=np.float32).astype(np.float64)
    return lambda x: x


def _tiles(m: int, m0: int):
    return [(s, min(s + m0, m)) for s in range(0, m, m0)]


def _require_positive(d: np.ndarray, name: str):
    if not np.all(d > 0):
        raise NumericDomainError(f"{name} must be strictly positive")


def naive(Q, K, V, single=False, keep=False):
    st = _store(single)
    e, p = Q.shape
    f, m = V.shape
    c = OpCounters()
    QK = st(K.T @ Q)
    c.mul += e * m * p
    c.add += e * m * p
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        S = st(QK * (1.0 / math.sqrt(e)))
        c.mul += m * p
        SN = st(np.exp(S))
        c.exp += m * p
        SD = st(SN.sum(axis=0))
        c.add += m * p
        nz = SD != 0
        A = st(np.divide(SN, SD, out=np.zeros_like(SN), where=nz))
        c.div += m * int(nz.sum())
        AV = st(V @ A)
    c.mul += f * m * p
    c.add += f * m * p
    inter = {"QK": QK, "SQK": S, "SN": SN, "SD": SD, "A": A} if keep else None
    return AV, c, inter


def three_pass(Q, K, V, defer=False, single=False, keep=False):
    st = _store(single)
    e, p = Q.shape
    f, m = V.shape
    c = OpCounters()
    QK = st(K.T @ Q)
    c.mul += e * m * p
    c.add += e * m * p
    GM = st(QK.max(axis=0))
    c.max += m * p
    SN = st(np.exp(QK - GM))
    c.add += m * p
    c.exp += m * p
    SD = st(SN.sum(axis=0))
    c.add += m * p
    _require_positive(SD, "SD")
    inter = {"QK": QK, "GM": GM, "SN": SN, "SD": SD} if keep else None
    if defer:
        SNV = st(V @ SN)
        c.mul += f * m * p
        c.add += f * m * p
        AV = st(SNV / SD)
        c.div += f * p
        if keep:
            inter["SNV"] = SNV
    else:
        A = st(SN / SD)
        c.div += m * p
        AV = st(V @ A)
        c.mul += f * m * p
        c.add += f * m * p
        if keep:
            inter["A"] = A
    return AV, c, inter


def two_pass(Q, K, V, m0, defer=False, single=False, keep=False):
    st = _store(single)
    e, p = Q.shape
    f, m = V.shape
    tiles = _tiles(m, m0)
    m1 = len(tiles)
    c = OpCounters()
    BQK, LM, SLN, SLD = [], [], [], []
    for s, t in tiles:
        b = st(K[:, s:t].T @ Q)
        lm = st(b.max(axis=0))
        sln = st(np.exp(b - lm))
        BQK.append(b)
        LM.append(lm)
        SLN.append(sln)
        SLD.append(st(sln.sum(axis=0)))
    c.mul += e * m * p
    c.add += e * m * p
    c.max += m * p
    c.add += 2 * m * p
    c.exp += m * p
    GM = st(np.max(np.stack(LM), axis=0))
    c.max += m1 * p
    PLM = [st(np.exp(lm - GM)) for lm in LM]
    c.add += m1 * p
    c.exp += m1 * p
    SN = [st(sln * plm) for sln, plm in zip(SLN, PLM)]
    c.mul += m * p
    SD = np.zeros(p)
    for sld, plm in zip(SLD, PLM):
        SD = SD + sld * plm
    SD = st(SD)
    c.mul += m1 * p
    c.add += m1 * p
    _require_positive(SD, "SD")
    inter = None
    if keep:
        inter = {
            "BQK": BQK, "LM": np.stack(LM), "SLN": SLN, "SLD": np.stack(SLD),
            "GM": GM, "PLM": np.stack(PLM), "SN": np.concatenate(SN, axis=0), "SD": SD,
        }
    if defer:
        SNV = np.zeros((f, p))
        for (s, t), sn in zip(tiles, SN):
            SNV = SNV + V[:, s:t] @ sn
        SNV = st(SNV)
        c.mul += f * m * p
        c.add += f * m * p
        AV = st(SNV / SD)
        c.div += f * p
    else:
        AV = np.zeros((f, p))
        for (s, t), sn in zip(tiles, SN):
            AV = AV + V[:, s:t] @ st(sn / SD)
        AV = st(AV)
        c.div += m * p
        c.mul += f * m * p
        c.add += f * m * p
    return AV, c, inter


def one_pass(Q, K, V, m0, single=False, keep=False):
    st = _store(single)
    e, p = Q.shape
    f, m = V.shape
    tiles = _tiles(m, m0)
    m1 = len(tiles)
    c = OpCounters()
    RM = np.full(p, -np.inf)
    RD = np.zeros(p)
    RNV = np.zeros((f, p))
    hist = {"RM": [RM], "RD": [RD], "PRM": [], "SLN": [], "LM": []}
    for s, t in tiles:
        BQK = st(K[:, s:t].T @ Q)
        LM = st(BQK.max(axis=0))
        RMn = st(np.maximum(RM, LM))
        SLN = st(np.exp(BQK - RMn))
        SLD = st(SLN.sum(axis=0))
        SLNV = st(V[:, s:t] @ SLN)
        PRM = st(np.exp(RM - RMn))
        SPD = st(RD * PRM)
        RD = st(SLD + SPD)
        SPNV = st(RNV * PRM)
        RNV = st(SLNV + SPNV)
        RM = RMn
        if keep:
            hist["RM"].append(RM)
            hist["RD"].append(RD)
            hist["PRM"].append(PRM)
            hist["SLN"].append(SLN)
            hist["LM"].append(LM)
    c.mul = e * m * p + f * m * p + m1 * p + f * m1 * p
    c.add = e * m * p + 2 * m * p + f * m * p + 2 * m1 * p + f * m1 * p
    c.exp = m * p + m1 * p
    c.max = m * p + m1 * p
    _require_positive(RD, "RD")
    AV = st(RNV / RD)
    c.div = f * p
    inter = None
    if keep:
        inter = {
            "RM": np.stack(hist["RM"]), "RD": np.stack(hist["RD"]), "PRM": np.stack(hist["PRM"]),
            "LM": np.stack(hist["LM"]), "SLN": hist["SLN"], "RNV": RNV,
        }
    return AV, c, inter
