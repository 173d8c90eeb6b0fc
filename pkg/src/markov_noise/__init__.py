"""Spectral noise sensitivity and noise stability for finite reversible Markov chains."""

from .bottleneck import (
    CutReport,
    cheeger_check,
    exact_bottleneck,
    flip_bound_all_subsets,
    flip_bound_check,
    nondegenerate_minimizer,
    phi,
    spectral_identity_check,
    sweep_cut,
)
from .chain_models import (
    Chain,
    FamilySpec,
    build_graph_walk,
    load_chain,
    make_family,
    random_reversible_chain,
    stationary_from_generator,
    validate,
)
from .noise import (
    Observable,
    SpectralProfile,
    covariance_curve,
    expected_random_subset_cov,
    flip_curve,
    fourier_profile,
    random_subset_indicator,
    sensitive_existence_gap,
    sensitivity_band_mass,
    sharpness_bounds,
    stability_tail_mass,
)
from .spectral import (
    SpectralDecomposition,
    band_subspace,
    decompose,
    rayleigh_quotient,
    transition_kernel,
)
from .stability import (
    automorphism_invariance_check,
    band_amplitude_max,
    condition_b_probe,
    delocalization_bound_check,
    localization_report,
    make_threshold_function,
    threshold_sweep,
)

__version__ = "0.1.0"
