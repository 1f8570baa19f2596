"""Support recovery with Orthogonal Matching Pursuit under the restricted isometry property.

The package runs OMP with full iteration traces, computes exact isometry
constants by enumeration, evaluates SNR conditions for exact and approximate
support recovery, and drives seeded Monte Carlo experiments.
"""

__version__ = "0.1.0"

from .errors import (
    CapacityError,
    ConsistencyError,
    DegenerateSystemError,
    HypothesisViolatedError,
    InputDomainError,
    OmpSupportError,
)
from .linalg import least_squares_on_support, project_orthogonal_complement, symmetric_eigen_extremes
from .metrics import (
    SparseSignal,
    compute_kappa,
    compute_mar,
    compute_snr,
    exact_rip_constant,
    lemma_property_checks,
    recovery_report,
    support_error_rate,
)
from .omp import (
    CorrelationNorm,
    FixedIterations,
    ResidualNorm,
    identify_index,
    omp_run,
    verify_iteration_inequalities,
)
from .conditions import (
    calibrate_c,
    classify_instance,
    necessary_snr_threshold,
    sufficient_snr_threshold,
    theorem3_error_rate_bound,
    theorem3_snr_floor,
)
from .synth import appendix_a_instance, gaussian_matrix, noise_at_snr, sparse_signal

__all__ = [name for name in dir() if not name.startswith("_")]
