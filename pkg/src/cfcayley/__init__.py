"""Structure-preserving propagators for controlled Schrödinger dynamics.

Commutator-free Cayley, Cayley-Magnus, commutator-free exponential and
Crank-Nicolson steppers for linear problems; the CaylPol and RKMK4
integrators for the Gross-Pitaevskii nonlinearity; and a Krotov optimizer
for state-to-state transfer.
"""

from .caylpol import caylpol_integrate, rkmk4_integrate
from .errors import (
    MonotonicityError,
    NumericalError,
    ParameterError,
    PropagationError,
    ShapeError,
    SingularMatrixError,
    StaleFactorizationError,
    StateError,
    UsageError,
)
from .integrators import CFC4, Scheme, propagate, propagate_backward
from .krotov import CostWeights, KrotovSettings, krotov_optimize, make_reference_target
from .linalg import BandedMatrix, commutator, matrix_exponential, solve_shifted
from .models import (
    ControlField,
    ControlledHamiltonian,
    Grid1D,
    LatticeParams,
    SmoothControl,
    TimeGrid,
    gaussian_state,
    gpe_model,
    lattice_model,
    rabi_model,
    synthetic_model,
)

__version__ = "0.1.0"
