"""Monte Carlo and symplectic-integration toolkit for microcanonical ensembles."""

__version__ = "0.1.0"

from .errors import (
    BoundaryMassWarning,
    CriticalValueWarning,
    EmptyShellError,
    FlowBlowUpError,
    IntegratorError,
    InvertibilityError,
    MicrocanonError,
    NumericDomainError,
    RangeTooSmallError,
    ShellTruncationWarning,
    UsageError,
)
from .models import (
    BoundingBox,
    ModelSpec,
    PhasePoint,
    compose,
    doublewell1d,
    evaluate,
    gradient,
    harmonic,
    henon_heiles,
    make_model,
    quartic1d,
)
from .flow import FlowConfig, energy_drift, flow_jacobian, flow_jacobian_det, integrate
from .sampling import SampleConfig, ShellEnsemble, shell_ensemble
from .microcanonical import (
    DosTable,
    analytic_dos,
    convolve_omega,
    density_of_states,
    estimate_dos,
    microcanonical_average,
    omega_from_dos,
    omega_shell,
)
from .canonical import check_multiplicativity, partition_direct, partition_laplace
from .thermo import (
    TabulatedFunction,
    entropy,
    free_energy_exact,
    free_energy_legendre,
    laplace_approx,
    legendre,
    thermo_limit_report,
)
from .verify import (
    check_coarea,
    check_convolutivity,
    check_flow_preservation,
    check_invariance,
    check_liouville,
)
