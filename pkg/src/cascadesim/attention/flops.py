"""Closed-form MACC counts for one transformer encoder layer."""

from __future__ import annotations

from dataclasses import dataclass, replace


@dataclass(frozen=True)
class FlopBreakdown:
    attention_maccs: int
    linear_maccs: int

    @property
    def total(self) -> int:
        return self.attention_maccs + self.linear_maccs

    @property
    def attention_fraction(self) -> float:
        return self.attention_maccs / self.total if self.total else 0.0


def attention_maccs(b: int, h: int, e: int, f: int, m: int, p: int) -> int:
    """QK plus AV: ``B*H*(E+F)*M*P``."""
    return b * h * (e + f) * m * p


def linear_maccs(b: int, seq: int, d_model: int, h: int, e: int, f: int, d_ff: int) -> int:
    """Q/K/V projections, output projection and the two FFN layers."""
    per_token = 3 * d_model * h * e + h * f * d_model + 2 * d_model * d_ff
    return b * seq * per_token


def count_flops_transformer(w) -> FlopBreakdown:
    """``w`` is any object with b, h, e, f, seq, d_model and d_ff attributes."""
    return FlopBreakdown(
        attention_maccs=attention_maccs(w.b, w.h, w.e, w.f, w.seq, w.seq),
        linear_maccs=linear_maccs(w.b, w.seq, w.d_model, w.h, w.e, w.f, w.d_ff),
    )


def attention_crossover(w, limit: int = 1 << 24) -> int | None:
    """Smallest power-of-two sequence length where attention exceeds half the MACCs."""
    seq = 1
    while seq <= limit:
        if count_flops_transformer(replace(w, seq=seq)).attention_fraction > 0.5:
            return seq
        seq *= 2
    return None
