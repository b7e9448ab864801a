"""Python bindings for the noisy-label training toolkit."""

from ._core import (
    ConfigError,
    DataError,
    NumericError,
    ce_loss,
    fit_gmm1d,
    gce_loss,
    generate_synthetic,
    posterior_low,
    run_config,
    select_clean,
    selection_purity,
)

__all__ = [
    "ConfigError",
    "DataError",
    "NumericError",
    "ce_loss",
    "fit_gmm1d",
    "gce_loss",
    "generate_synthetic",
    "posterior_low",
    "run_config",
    "select_clean",
    "selection_purity",
]
