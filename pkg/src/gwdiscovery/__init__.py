"""Topology discovery on supercritical Galton-Watson trees.

Simulation (``gw_core``, ``discovery``) and exact series (``analytics``)
for the number of nodes revealed when randomly selected nodes report
their path to the root.
"""

__version__ = "0.1.0"

from .analytics import (
    SeriesResult,
    discovered_moments,
    laplace_cumulative,
    mean_R_alpha,
    mean_R_alpha_exact,
    psi_harmonic_sum,
    rho2_deterministic_series,
    rho2_nondeterministic,
    rho2_series,
    rho_series,
    selected_count_bounds,
)
from .discovery import (
    DepthBiased,
    Uniform,
    discovered_size,
    mark_nodes,
    mc_depth_biased,
    mc_uniform,
    truncation_depth,
)
from .errors import (
    ConfigError,
    DeterministicOffspring,
    DomainError,
    GWDiscoveryError,
    OverflowGuard,
    RejectsBadMass,
    RejectsSubcritical,
    RejectsZeroOffspring,
)
from .gw_core import (
    LevelProfile,
    TreeArena,
    build_tree,
    cumulative_size,
    estimate_W_samples,
    simulate_profile,
    simulate_size_biased_profile,
    size_biased_mean,
)
from .offspring import OffspringDist, make_offspring, parse_offspring, pgf, sample, size_biased

__all__ = [name for name in dir() if not name.startswith("_")]
