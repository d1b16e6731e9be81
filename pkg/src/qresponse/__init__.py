"""Exact linear and nonlinear response of finite quantum systems.

Thermal states, Lehmann-sum correlators and response kernels, driven
unitary dynamics, work statistics and frequency-domain reference tools.
"""

__version__ = "0.1.0"

from .analytic import (  # noqa: E402
    FluidParams,
    FrequencyGrid,
    fluid_current_response,
    kramers_kronig,
    oscillator_response,
    rc_response,
    spectral_reconstruct,
)
from .correlators import (  # noqa: E402
    ResponseKernel,
    SpectralComb,
    generalized_covariance,
    heisenberg,
    linear_response,
    quadratic_response,
    relaxation_function,
    spectral_three_point,
    spectral_two_point,
)
from .dynamics import (  # noqa: E402
    DriveProtocol,
    SourceDrive,
    Trajectory,
    mean_work,
    propagate,
    volterra_kernels,
    volterra_predict,
)
from .model import (  # noqa: E402
    SourceCoupling,
    SystemSpec,
    TimeParity,
    build_qubit,
    build_transverse_ising,
    build_xxz_chain,
)
from .thermal import ThermalState, chi_S_N, chi_T_mu, gibbs, suzuki_limit  # noqa: E402
from .workstats import (  # noqa: E402
    WorkDistribution,
    characteristic_Zw,
    crooks_check,
    jarzynski_check,
    measurement_partition,
    time_reverse_protocol,
    work_distribution,
)
