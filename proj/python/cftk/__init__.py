"""Counterfactual fairness toolkit.

Thin bindings over the C++ library: divergence metrics, analytic bounds,
the data simulators and the experiment pipeline.
"""

from ._cftk import (
    ContractError,
    LoadError,
    __version__,
    accuracy,
    config_hash,
    coverage,
    delta_a,
    delta_b,
    mae,
    mmd,
    pairwise_cf_divergence,
    preset_config,
    rmse,
    run,
    simulate_csv,
    simulator_names,
    simulator_schema,
    spearman,
    verify_manifest,
    wasserstein1,
)

__all__ = [
    "ContractError",
    "LoadError",
    "accuracy",
    "config_hash",
    "coverage",
    "delta_a",
    "delta_b",
    "mae",
    "mmd",
    "pairwise_cf_divergence",
    "preset_config",
    "rmse",
    "run",
    "simulate_csv",
    "simulator_names",
    "simulator_schema",
    "spearman",
    "verify_manifest",
    "wasserstein1",
]
