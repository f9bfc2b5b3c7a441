"""Python bindings for the confounder_forge C++ library."""

from ._cforge import (
    ConfigError,
    SpecError,
    ess,
    fit_config,
    fit_preset,
    pooled_sd,
    preset_ids,
    prior_sensitivity,
    reproduce_catalog,
    simulate,
    split_rhat,
)

__all__ = [
    "ConfigError",
    "SpecError",
    "ess",
    "fit_config",
    "fit_preset",
    "pooled_sd",
    "preset_ids",
    "prior_sensitivity",
    "reproduce_catalog",
    "simulate",
    "split_rhat",
]
