from .flops import FlopBreakdown, attention_crossover, count_flops_transformer
from .kernels import (
    STABLE_VARIANTS,
    VARIANTS,
    attention_1pass,
    attention_2pass,
    attention_3pass,
    attention_naive,
    expected_counters,
    expected_divides,
    run_variant,
)
from .oracle import oracle_attention
from .types import AttentionError, AttentionResult, AttnConfig, NumericDomainError, ShapeError, max_rel_error

__all__ = [
    "AttentionError",
    "AttentionResult",
    "AttnConfig",
    "FlopBreakdown",
    "NumericDomainError",
    "STABLE_VARIANTS",
    "ShapeError",
    "VARIANTS",
    "attention_1pass",
    "attention_2pass",
    "attention_3pass",
    "attention_crossover",
    "attention_naive",
    "count_flops_transformer",
    "expected_counters",
    "expected_divides",
    "max_rel_error",
    "oracle_attention",
    "run_variant",
]
