"""Nonlinear commutator-free Cayley integration (CaylPol) and the RKMK4 baseline.

Both integrate ``Y' = A(t, Y) Y`` where ``A(t, Y) = -i H(u(t), Y)`` comes from a
:class:`~cfcayley.models.ControlledHamiltonian` (``g > 0`` for the
Gross-Pitaevskii nonlinearity).
"""

from collections import deque

import numpy as np

from .errors import NumericalError, SingularMatrixError, PropagationError, StateError, UsageError
from .integrators import (
    CFC4,
    GAUSS_C1,
    GAUSS_C2,
    SQRT3,
    cayley_apply,
    cfc4_step,
    cfc_stages,
    step_sampler,
)
from .linalg import SolveWorkspace, commutator, matrix_exponential
from .models import assemble_A, control_values


class InterpolationWindow:
    """The most recent ``k`` uniformly spaced ``(t, Y)`` pairs."""

    def __init__(self, k):
        if k < 2:
            raise UsageError(f"window size k must be >= 2, got {k}")
        self.k = k
        self.times = deque(maxlen=k)
        self.states = deque(maxlen=k)

    def __len__(self):
        return len(self.times)

    @property
    def full(self):
        return len(self.times) == self.k

    @property
    def spacing(self):
        if len(self.times) < 2:
            return None
        return self.times[-1] - self.times[-2]

    def push(self, t, y):
        if self.times:
            if t <= self.times[-1]:
                raise UsageError("window times must be strictly increasing")
            h = self.spacing
            # spacing is checked to 1e-12 h, plus the rounding of the absolute times
            slack = 1e-12 * abs(h) + 8 * np.finfo(float).eps * abs(t) if h is not None else 0.0
            if h is not None and abs((t - self.times[-1]) - h) > slack:
                raise UsageError("window times must be uniformly spaced")
        self.times.append(float(t))
        self.states.append(np.array(y, dtype=complex))


def lagrange_interpolate(window, t_star):
    """Evaluate the degree ``k-1`` interpolant of the window at ``t_star``.

    Allowed range is the window itself plus one spacing beyond its last node.
    Written relative to the newest state so that constant data is reproduced
    exactly; the result is not renormalized.
    """
    if not window.full:
        raise StateError(f"window holds {len(window)} of {window.k} states")
    times = np.array(window.times)
    h = window.spacing
    if t_star < times[0] - 1e-12 * h or t_star > times[-1] + h * (1 + 1e-12):
        raise UsageError(
            f"t*={t_star} outside the permitted range [{times[0]}, {times[-1] + h}]"
        )
    k = window.k
    last = window.states[-1]
    out = last.copy()
    for i in range(k - 1):
        w = 1.0
        for j in range(k):
            if j != i:
                w *= (t_star - times[j]) / (times[i] - times[j])
        if w != 0.0:
            out += w * (window.states[i] - last)
    return out


def _generator(h_model, u, step):
    """``A(t, y)`` for time step ``step``."""
    return lambda t, y: assemble_A(h_model, control_values(u, step, t, h_model.n_controls), y)


def caylpol_step(h_model, u, step, t, window, v, dt, coeffs=CFC4, workspace=None):
    """Advance ``v`` from ``t`` to ``t + dt`` with interpolated stage states.

    The window's newest entry is expected at time ``t``.
    """
    p1 = lagrange_interpolate(window, t + GAUSS_C1 * dt)
    p2 = lagrange_interpolate(window, t + GAUSS_C2 * dt)
    if not (np.all(np.isfinite(p1)) and np.all(np.isfinite(p2))):
        raise NumericalError(f"non-finite stage prediction at step {step} (t={t:.17g})")
    gen = _generator(h_model, u, step)
    a1 = gen(t + GAUSS_C1 * dt, p1)
    a2 = gen(t + GAUSS_C2 * dt, p2)
    a_avg = (0.5 * dt) * (a1 + a2)
    a_diff = (0.5 * SQRT3 * dt) * (a2 - a1)
    ws = workspace if workspace is not None else SolveWorkspace()
    for omega in cfc_stages(a_avg, a_diff, coeffs):
        v = cayley_apply(omega, v, ws, time=t)
    return v


def rkmk4_step(h_model, u, step, t, v, dt):
    """Runge-Kutta-Munthe-Kaas step of order four.

    Classical RK4 stages in the Lie algebra with single-commutator dexpinv
    corrections; stage and final updates use dense matrix exponentials.
    """
    gen = _generator(h_model, u, step)
    if h_model.is_linear:
        # A does not depend on the state, so stage states are never formed
        k1 = dt * gen(t, None)
        k2 = dt * gen(t + 0.5 * dt, None)
        k3 = k2
        k4 = dt * gen(t + dt, None)
    else:
        k1 = dt * gen(t, v)
        k2 = dt * gen(t + 0.5 * dt, matrix_exponential(0.5 * k1) @ v)
        c12 = commutator(k1, k2)
        k3 = dt * gen(t + 0.5 * dt, matrix_exponential(0.5 * k2 - c12 / 8.0) @ v)
        k4 = dt * gen(t + dt, matrix_exponential(k3) @ v)
    omega = (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0 - commutator(k1, k4) / 12.0
    return matrix_exponential(omega) @ v


def startup(h_model, v0, grid, k, u=None, scheme="rkmk4", workspace=None):
    """Fill a window with the states at ``t0, t0 + dt, ..., t0 + (k-1) dt``."""
    window = InterpolationWindow(k)
    v = np.array(v0, dtype=complex)
    window.push(grid.time(0), v)
    dt = grid.dt
    for n in range(k - 1):
        t = grid.time(n)
        if scheme == "rkmk4":
            v = rkmk4_step(h_model, u, n, t, v, dt)
        elif scheme == "cfc4":
            if not h_model.is_linear:
                raise UsageError("cfc4 startup is only defined for linear models")
            v = cfc4_step(step_sampler(h_model, u, n), t, dt, v, workspace)
        else:
            raise UsageError(f"unknown startup scheme {scheme!r}")
        window.push(grid.time(n + 1), v)
    return window


def caylpol_integrate(h_model, v0, grid, u=None, k=4, startup_scheme="rkmk4", coeffs=CFC4):
    """CaylPol over ``grid``; returns the ``(n_steps + 1, dim)`` trajectory."""
    if grid.n_steps < k - 1:
        raise UsageError(f"need at least k-1={k - 1} steps, got {grid.n_steps}")
    ws = SolveWorkspace()
    window = startup(h_model, v0, grid, k, u, startup_scheme, ws)
    traj = np.empty((grid.n_steps + 1, len(v0)), dtype=complex)
    for n, y in enumerate(window.states):
        traj[n] = y
    v = traj[k - 1].copy()
    dt = grid.dt
    for n in range(k - 1, grid.n_steps):
        t = grid.time(n)
        try:
            v = caylpol_step(h_model, u, n, t, window, v, dt, coeffs, ws)
        except SingularMatrixError as exc:
            raise PropagationError(str(exc), step=n) from exc
        window.push(grid.time(n + 1), v)
        traj[n + 1] = v
    return traj


def rkmk4_integrate(h_model, v0, grid, u=None):
    traj = np.empty((grid.n_steps + 1, len(v0)), dtype=complex)
    v = np.array(v0, dtype=complex)
    traj[0] = v
    for n in range(grid.n_steps):
        v = rkmk4_step(h_model, u, n, grid.time(n), v, grid.dt)
        if not np.all(np.isfinite(v)):
            raise PropagationError("non-finite state", step=n)
        traj[n + 1] = v
    return traj
