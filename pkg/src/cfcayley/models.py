"""Grids, potentials, controlled Hamiltonians and states.

Units are dimensionless with hbar = 1; for the optical-lattice model energies
are in recoil units and lengths in lattice spacings.
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import ParameterError, ShapeError, UsageError
from .linalg import OP_COUNTS, BandedMatrix, dim, to_dense


@dataclass(frozen=True)
class Grid1D:
    x_min: float
    x_max: float
    n_points: int

    def __post_init__(self):
        if not self.x_min < self.x_max:
            raise ParameterError(f"need x_min < x_max, got [{self.x_min}, {self.x_max}]")
        if self.n_points < 8:
            raise ParameterError(f"need n_points >= 8, got {self.n_points}")

    @property
    def dx(self):
        return (self.x_max - self.x_min) / (self.n_points - 1)

    @cached_property
    def x(self):
        return np.linspace(self.x_min, self.x_max, self.n_points)


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_n = t0 + n * dt`` for ``n = 0 .. n_steps``."""

    t0: float
    T: float
    n_steps: int

    def __post_init__(self):
        if self.n_steps < 1:
            raise ParameterError(f"need n_steps >= 1, got {self.n_steps}")
        if not self.T > self.t0:
            raise ParameterError(f"need T > t0, got t0={self.t0}, T={self.T}")

    @property
    def dt(self):
        return (self.T - self.t0) / self.n_steps

    def time(self, n):
        return self.t0 + n * self.dt

    @cached_property
    def times(self):
        return self.t0 + self.dt * np.arange(self.n_steps + 1)


@dataclass(frozen=True)
class LatticeParams:
    v0: float = 10.0
    lattice_spacing: float = 1.0
    trap_strength: float = 0.00032
    control_scale: float = 0.00032

    def __post_init__(self):
        if self.v0 < 0:
            raise ParameterError("lattice depth v0 must be >= 0")
        if self.lattice_spacing <= 0:
            raise ParameterError("lattice_spacing must be > 0")
        if self.trap_strength < 0:
            raise ParameterError("trap_strength must be >= 0")


# --------------------------------------------------------------------------
# controls


class ControlField:
    """Piecewise-constant controls: ``u_j(t) = samples[j, n]`` on ``[t_n, t_{n+1})``."""

    def __init__(self, samples, grid):
        samples = np.array(samples, dtype=float, ndmin=2)
        if samples.shape[1] != grid.n_steps:
            raise ShapeError(
                f"control has {samples.shape[1]} samples per channel, grid has {grid.n_steps} steps"
            )
        if not np.all(np.isfinite(samples)):
            raise ParameterError("control samples must be finite")
        self.samples = samples
        self.grid = grid

    @classmethod
    def zeros(cls, grid, n_channels=1):
        return cls(np.zeros((n_channels, grid.n_steps)), grid)

    @classmethod
    def from_function(cls, func, grid, n_channels=1):
        """Sample ``func`` at the midpoint of every step."""
        mid = grid.times[:-1] + 0.5 * grid.dt
        values = np.array([np.broadcast_to(func(t), (n_channels,)) for t in mid], dtype=float)
        return cls(values.T, grid)

    @property
    def n_channels(self):
        return self.samples.shape[0]

    @property
    def n_steps(self):
        return self.samples.shape[1]

    def at(self, step, t=None):
        return self.samples[:, step]

    def copy(self):
        return ControlField(self.samples.copy(), self.grid)


class SmoothControl:
    """Controls given as a function of time, evaluated at every node."""

    def __init__(self, func, n_channels=1):
        self.func = func
        self.n_channels = n_channels

    def at(self, step, t):
        return np.broadcast_to(np.asarray(self.func(t), dtype=float), (self.n_channels,))


def control_values(u, step, t, n_channels):
    if u is None:
        return np.zeros(n_channels)
    values = u.at(step, t)
    if len(values) != n_channels:
        raise ShapeError(f"model has {n_channels} control operators, got {len(values)} values")
    return values


# --------------------------------------------------------------------------
# Hamiltonians


def _is_hermitian(m, tol):
    if isinstance(m, BandedMatrix):
        if m.lower != m.upper:
            return False
        diff = np.abs(m.data - m.conj_transpose().data).max(initial=0.0)
        scale = np.abs(m.data).max(initial=0.0)
    else:
        diff = np.abs(m - m.conj().T).max(initial=0.0)
        scale = np.abs(m).max(initial=0.0)
    return diff <= tol * max(1.0, scale)


@dataclass(frozen=True)
class ControlledHamiltonian:
    """``H(u, psi) = drift + sum_j u_j controls[j] + g diag(|psi|^2)``."""

    drift: object
    controls: tuple = ()
    g: float = 0.0
    grid: Grid1D = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "controls", tuple(self.controls))
        if self.g < 0:
            raise ParameterError(f"nonlinear coupling g must be >= 0, got {self.g}")
        n = dim(self.drift)
        if not _is_hermitian(self.drift, 1e-13):
            raise ParameterError("drift Hamiltonian is not Hermitian")
        for j, h in enumerate(self.controls):
            if dim(h) != n:
                raise ShapeError(f"control {j} has shape {h.shape}, drift is {n}x{n}")
            if not _is_hermitian(h, 1e-13):
                raise ParameterError(f"control operator {j} is not Hermitian")

    @property
    def dim(self):
        return dim(self.drift)

    @property
    def n_controls(self):
        return len(self.controls)

    @property
    def dx(self):
        return self.grid.dx if self.grid is not None else 1.0

    @property
    def is_linear(self):
        return self.g == 0.0

    def with_g(self, g):
        return ControlledHamiltonian(self.drift, self.controls, g, self.grid)

    def hamiltonian(self, u=None, psi=None):
        if u is None:
            u = np.zeros(self.n_controls)
        if len(u) != self.n_controls:
            raise ShapeError(f"model has {self.n_controls} control operators, got {len(u)} values")
        h = self.drift
        for uj, hj in zip(u, self.controls):
            if uj != 0.0:
                h = h + float(uj) * hj
        if self.g != 0.0:
            if psi is None:
                raise UsageError("a state is required to assemble a nonlinear Hamiltonian")
            density = np.abs(psi) ** 2
            if isinstance(h, BandedMatrix):
                h = h + BandedMatrix.diag(self.g * density)
            else:
                h = h + np.diag(self.g * density)
        return h


def assemble_A(h, u=None, psi=None):
    """Skew-Hermitian generator ``-i H(u, psi)``."""
    OP_COUNTS["assemble"] += 1
    return -1j * h.hamiltonian(u, psi)


def second_difference(n, dx):
    """Tridiagonal ``-d^2/dx^2`` with homogeneous Dirichlet boundaries."""
    inv = 1.0 / dx**2
    return BandedMatrix.from_diagonals(
        {-1: np.full(n - 1, -inv), 0: np.full(n, 2.0 * inv), 1: np.full(n - 1, -inv)}
    )


def laplacian_1d(grid):
    return second_difference(grid.n_points, grid.dx)


def lattice_potential(grid, p):
    s = grid.x / p.lattice_spacing
    return p.v0 * np.sin(np.pi * s) ** 2 + p.trap_strength * s**2


def lattice_model(grid, p=LatticeParams()):
    """Driven optical lattice: drift ``-Laplacian + V``, control ``W = c (x/d)^2``."""
    drift = laplacian_1d(grid) + BandedMatrix.diag(lattice_potential(grid, p))
    w = p.control_scale * (grid.x / p.lattice_spacing) ** 2
    return ControlledHamiltonian(drift, (BandedMatrix.diag(w),), 0.0, grid)


def gpe_potential(x):
    return x**4 - 10.0 * x**2


def gpe_control_operator(x):
    return 5.0 * x**2


def gpe_model(grid, g):
    """Gross-Pitaevskii model with quartic double well and ``W = 5 x^2``."""
    if g < 0:
        raise ParameterError(f"nonlinear coupling g must be >= 0, got {g}")
    drift = laplacian_1d(grid) + BandedMatrix.diag(gpe_potential(grid.x))
    return ControlledHamiltonian(
        drift, (BandedMatrix.diag(gpe_control_operator(grid.x)),), float(g), grid
    )


PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)


def rabi_model():
    """Two-level system ``sigma_z + u(t) sigma_x``."""
    return ControlledHamiltonian(PAULI_Z.copy(), (PAULI_X.copy(),))


def synthetic_model(n_levels=8, seed=0, coupling=0.5):
    """Small dense test system: random level energies, random Hermitian control."""
    rng = np.random.default_rng(seed)
    levels = np.sort(rng.uniform(-1.0, 1.0, n_levels))
    hop = 0.2 * rng.standard_normal(n_levels - 1)
    drift = np.diag(levels) + np.diag(hop, 1) + np.diag(hop, -1)
    c = rng.standard_normal((n_levels, n_levels)) + 1j * rng.standard_normal((n_levels, n_levels))
    control = coupling * (c + c.conj().T) / (2.0 * np.sqrt(n_levels))
    return ControlledHamiltonian(drift.astype(complex), (control,))


# --------------------------------------------------------------------------
# states


def inner(a, b, dx=1.0):
    """``<a, b>`` (antilinear in ``a``) with grid weight ``dx``."""
    return np.vdot(a, b) * dx


def norm(psi, dx=1.0):
    return float(np.sqrt(np.vdot(psi, psi).real * dx))


def normalize(psi, dx=1.0):
    psi = np.asarray(psi, dtype=complex)
    nrm = norm(psi, dx)
    if nrm == 0.0 or not np.isfinite(nrm):
        raise ParameterError("cannot normalize a zero or non-finite state")
    return psi / nrm


def gaussian_state(grid, center, width):
    if width <= 0:
        raise ParameterError(f"Gaussian width must be > 0, got {width}")
    if not grid.x_min <= center <= grid.x_max:
        raise ParameterError(f"center {center} lies outside [{grid.x_min}, {grid.x_max}]")
    psi = np.exp(-((grid.x - center) ** 2) / (2.0 * width**2)).astype(complex)
    return normalize(psi, grid.dx)


def basis_state(n, k):
    psi = np.zeros(n, dtype=complex)
    psi[k] = 1.0
    return psi


def as_dense_hamiltonian(h, u=None, psi=None):
    return to_dense(h.hamiltonian(u, psi))
