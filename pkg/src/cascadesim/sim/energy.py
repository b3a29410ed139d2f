"""Energy as action counts times per-action picojoules."""

from __future__ import annotations

from typing import Mapping

ACTIONS = ("macc_2d", "op_1d", "buffer", "dram", "register")
COMPONENT_LABELS = {
    "macc_2d": "2D MACC",
    "op_1d": "1D ops",
    "buffer": "global buffer",
    "dram": "DRAM",
    "register": "PE registers",
}


def energy_breakdown(r, a) -> dict[str, float]:
    """Per-component picojoules for a SimResult (or a raw action-count mapping)."""
    actions: Mapping[str, float] = getattr(r, "actions", r)
    table = a.energy.as_dict()
    return {k: float(actions.get(k, 0.0)) * table[k] for k in ACTIONS}


def energy_shares(r, a) -> dict[str, float]:
    e = energy_breakdown(r, a)
    total = sum(e.values())
    return {k: (v / total if total else 0.0) for k, v in e.items()}
