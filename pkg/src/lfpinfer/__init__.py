"""Finite-sample valid likelihood-ratio inference for incomplete discrete choice models."""

__version__ = "0.1.0"

from .capacity import (  # noqa: E402
    Capacity,
    OutcomeSpace,
    RandomSetDistribution,
    check_k_monotone,
    choquet_integral,
    conjugate,
    containment_from_random_set,
    core_membership,
    lower_envelope,
)
from .solvers import (  # noqa: E402
    GameEtas,
    entry_game_lfp,
    feasibility_density,
    kl_projection,
    lfp_density,
    lfp_pair,
)

__all__ = [
    "Capacity",
    "GameEtas",
    "OutcomeSpace",
    "RandomSetDistribution",
    "__version__",
    "check_k_monotone",
    "choquet_integral",
    "conjugate",
    "containment_from_random_set",
    "core_membership",
    "entry_game_lfp",
    "feasibility_density",
    "kl_projection",
    "lfp_density",
    "lfp_pair",
    "lower_envelope",
]
