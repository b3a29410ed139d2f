from .config import (
    DESIGNS,
    FUSEMAX_EINSUMS,
    ArchConfig,
    BindingPlan,
    ConfigError,
    EnergyTable,
    WorkloadConfig,
    default_binding,
    find_config_root,
    list_models,
    load_arch,
    load_model,
)
from .designs import (
    Phase,
    SimResult,
    flat_footprint_bytes,
    fusemax_highwater,
    fusemax_op_counts,
    simulate,
    simulate_end_to_end,
    simulate_flat,
    simulate_fusemax,
    simulate_unfused,
)
from .energy import energy_breakdown, energy_shares

__all__ = [
    "ArchConfig", "BindingPlan", "ConfigError", "DESIGNS", "EnergyTable", "FUSEMAX_EINSUMS", "Phase",
    "SimResult", "WorkloadConfig", "default_binding", "energy_breakdown", "energy_shares",
    "find_config_root", "flat_footprint_bytes", "fusemax_highwater", "fusemax_op_counts", "list_models",
    "load_arch", "load_model", "simulate", "simulate_end_to_end", "simulate_flat", "simulate_fusemax",
    "simulate_unfused",
]
