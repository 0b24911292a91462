"""Python bindings for the hbl deep-linear-network Hessian toolkit."""

from ._core import (
    CheckFailure,
    ConfigError,
    Error,
    NetworkDims,
    NumericalFailure,
    WeightStack,
    assemble_hessian,
    balanced_init,
    block_norm_bound,
    closed_form_excess_loss,
    end_to_end,
    excess_loss_trace,
    finite_difference_hessian,
    gd_step,
    hf_norm_bound,
    kron,
    lambda_step,
    load_config,
    max_step_size,
    outer_gram,
    pad_embed,
    pair_eigenvalue,
    parse_config,
    population_excess_loss,
    population_gradient,
    population_loss,
    predict_spectrum,
    residual,
    run_experiment,
    run_scalar_dynamics,
    run_sweep,
    spectral_norm,
    spectral_state,
    svd,
    sym_eig,
    unvec_row,
    vec_row,
    whitened_data,
)

__all__ = [name for name in dir() if not name.startswith("_")]
