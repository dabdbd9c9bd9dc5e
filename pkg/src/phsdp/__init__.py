"""Port-Hamiltonian systems with dissipation potentials and DPSC tracking."""
from .core import (ContractError, Dims, DomainError, Interconnection, PhsDpModel, State,
                   check_model, dissipated_power, energy_rate, output, power_balance_residual,
                   vector_field)
from .fields import ScalarField, check_scalar_field, fd_gradient, fd_jacobian
from .dpsc import (CouplingInverse, DpscController, InversionDomainError, ReferenceTrajectory,
                   reference_residual)
from .contraction import (CertificateError, ContractionCertificate, UnsupportedStructureError,
                          contraction_region_check, hierarchical_certificate, hurwitz_check,
                          jacobian_blocks, lyapunov_metric, solve_lyapunov)
from .tida import (StandardPhs, TidaTarget, standard_view, tida_control, tida_matching_residual,
                   trajectory_evolution_residual)
from .sim import DpscLoop, FunctionLoop, OpenLoop, TidaLoop, TrajectoryLog, fit_rate, simulate

__version__ = "0.1.0"
