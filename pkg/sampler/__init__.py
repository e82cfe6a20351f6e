"""Riemannian proximal sampler on circles, spheres and SPD matrices."""

from .errors import (
    AcceptanceExceededError,
    ConfigError,
    CutLocusError,
    DivergenceError,
    KernelNonpositiveError,
    ManifoldMismatchError,
    NoTruncationLevelError,
    NumericalError,
    RejectionCapError,
    SamplerError,
    UnsupportedManifoldError,
)
from .heat_kernel import HeatKernelSpec, choose_truncation, truncation_tail_bound
from .langevin import LmcConfig, rlmc_run, rlmc_step
from .manifolds import (
    SPD,
    Circle,
    Point,
    Sphere,
    TangentVector,
    distance,
    exp_map,
    grad_dist_sq,
    log_map,
    riemannian_grad,
    sample_tangent_gaussian,
)
from .proximal import (
    ChainTrace,
    SamplerConfig,
    TheoryParams,
    proximal_step,
    run_chain,
    run_chains,
)
from .targets import TargetSpec

__version__ = "0.1.0"
