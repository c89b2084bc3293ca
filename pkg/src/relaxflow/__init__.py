"""relaxflow: pseudo-spectral solver and verification harness for a
two-phase Euler/Navier-Stokes relaxation system and its diffusive
(Kramers-Smoluchowski) limit."""

__version__ = "0.1.0"

from .spectral_grid import (  # noqa: F401
    Grid,
    SpectralField,
    divergence,
    gradient,
    laplacian,
    project_compressible,
    project_leray,
    transform_forward,
    transform_inverse,
)
from .littlewood_paley import (  # noqa: F401
    BesovSpec,
    DyadicDecomposition,
    ThresholdConfig,
)
from .linear_spectrum import (  # noqa: F401
    SymbolEigenSet,
    SymbolPoint,
    asymptotic_eigenvalues,
    eigenvalues,
    propagator_B1,
    propagator_B2,
)
from .models import (  # noqa: F401
    DensityFloorError,
    EnsState,
    KsnsState,
    closure_h,
    damped_modes,
    darcy_velocity,
    diagnostics,
    rhs_ens,
    rhs_ksns,
    source_Y,
)
from .time_integrator import (  # noqa: F401
    StepperConfig,
    Trajectory,
    integrate,
    step_ens,
    step_ksns,
)
from .decay_quadrature import (  # noqa: F401
    DecayFit,
    RadialProfile,
    fit_decay,
    semigroup_norm,
)
