"""One-step unitary propagators for ``psi' = A(t) psi`` with skew-Hermitian ``A``.

A *sampler* is any callable ``sample(t) -> A(t)``. Each stepper takes
``(sample, t, dt, v)`` and returns the state at ``t + dt``; a negative ``dt``
steps backwards. Every stepper here is time-symmetric, so stepping with
``(t + dt, -dt)`` undoes a step taken with ``(t, dt)``.
"""

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import PropagationError, SingularMatrixError, UsageError
from .linalg import (
    BandedMatrix,
    SolveWorkspace,
    apply,
    commutator,
    is_skew_hermitian,
    matmul,
    matrix_exponential,
    shifted_identity,
)
from .models import assemble_A, control_values

SQRT3 = math.sqrt(3.0)

#: Gauss-Legendre nodes on [0, 1].
GAUSS_C1 = 0.5 - SQRT3 / 6.0
GAUSS_C2 = 0.5 + SQRT3 / 6.0

#: Weights of the two-exponential fourth-order commutator-free scheme.
CFEXP_X1 = 0.25 + SQRT3 / 6.0
CFEXP_X2 = 0.25 - SQRT3 / 6.0


@dataclass(frozen=True)
class CfcCoefficients:
    """Nodes and stage weights of the three-stage commutator-free Cayley scheme.

    Stage ``l`` uses ``alpha[l][0] * A_avg + alpha[l][1] * A_diff`` where
    ``A_avg = (dt/2)(A1 + A2)`` and ``A_diff = (dt*sqrt(3)/2)(A2 - A1)`` are
    built from the samples at the two Gauss nodes.
    """

    c1: float
    c2: float
    a11: float
    a12: float
    a21: float
    a22: float
    a31: float
    a32: float

    @classmethod
    def fourth_order(cls):
        a11 = 2.0 ** (1.0 / 3.0) / 3.0 + 2.0 ** (2.0 / 3.0) / 6.0 + 2.0 / 3.0
        a12 = a11 - a11 * a11
        return cls(
            c1=GAUSS_C1, c2=GAUSS_C2,
            a11=a11, a12=a12,
            a21=1.0 - 2.0 * a11, a22=0.0,
            a31=a11, a32=-a12,
        )


CFC4 = CfcCoefficients.fourth_order()


class Scheme(str, enum.Enum):
    CN = "CN"
    CFC4 = "CFC4"
    CAYLEY_MAGNUS4 = "CayleyMagnus4"
    CF_EXP4 = "CFExp4"

    @classmethod
    def parse(cls, name):
        if isinstance(name, cls):
            return name
        for s in cls:
            if s.value.lower() == str(name).lower():
                return s
        raise UsageError(f"unknown scheme {name!r}; choose from {[s.value for s in cls]}")


# --------------------------------------------------------------------------
# Cayley transform


def cayley_apply(omega, v, workspace=None, time=None, check=False):
    """``(I - omega/2)^{-1} (I + omega/2) v``."""
    if check and not is_skew_hermitian(omega, 1e-10):
        raise UsageError("Cayley argument is not skew-Hermitian")
    ws = workspace if workspace is not None else SolveWorkspace()
    rhs = v + 0.5 * apply(omega, v)
    ws.factor(shifted_identity(omega, -0.5), time=time)
    return ws.solve(rhs, refine=True)


def _gauss_samples(sample, t, dt):
    a1 = sample(t + GAUSS_C1 * dt)
    a2 = sample(t + GAUSS_C2 * dt)
    return a1, a2


def _same(a, b):
    if a is b:
        return True
    if isinstance(a, BandedMatrix):
        return a.same_as(b)
    return isinstance(b, np.ndarray) and np.array_equal(a, b)


def _magnus_basis(a1, a2, dt):
    """``(dt/2)(A1 + A2)`` and ``(dt sqrt3/2)(A2 - A1)``; the latter is None if A1 == A2."""
    if _same(a1, a2):
        return dt * a1, None
    return (0.5 * dt) * (a1 + a2), (0.5 * SQRT3 * dt) * (a2 - a1)


def _combine(x, avg, y, diff):
    if diff is None or y == 0.0:
        return x * avg
    return x * avg + y * diff


# --------------------------------------------------------------------------
# steppers


def crank_nicolson_step(sample, t, dt, v, workspace=None):
    return cayley_apply(dt * sample(t + 0.5 * dt), v, workspace, time=t)


def cfc_stages(a_avg, a_diff, coeffs=CFC4):
    """The three Cayley arguments, in the order they act on the state."""
    return (
        _combine(coeffs.a31, a_avg, coeffs.a32, a_diff),
        _combine(coeffs.a21, a_avg, coeffs.a22, a_diff),
        _combine(coeffs.a11, a_avg, coeffs.a12, a_diff),
    )


def cfc4_step(sample, t, dt, v, workspace=None, coeffs=CFC4):
    """Fourth-order commutator-free Cayley step: three Cayley factors, no exponentials."""
    a_avg, a_diff = _magnus_basis(*_gauss_samples(sample, t, dt), dt)
    for omega in cfc_stages(a_avg, a_diff, coeffs):
        v = cayley_apply(omega, v, workspace, time=t)
    return v


def cayley_magnus4_step(sample, t, dt, v, workspace=None):
    """Fourth-order Cayley-Magnus step ``Cay(A1 - [A1, A2]/6 - A1^3/12)``."""
    a_avg, a_diff = _magnus_basis(*_gauss_samples(sample, t, dt), dt)
    cube = matmul(matmul(a_avg, a_avg), a_avg)
    omega = a_avg - cube / 12.0
    if a_diff is not None:
        omega = omega - commutator(a_avg, a_diff) / 6.0
    return cayley_apply(omega, v, workspace, time=t)


def cf_exp4_step(sample, t, dt, v, workspace=None):
    """Two-exponential fourth-order commutator-free step (dense exponentials)."""
    a1, a2 = _gauss_samples(sample, t, dt)
    if _same(a1, a2):
        e = matrix_exponential(0.5 * dt * a1)
        return e @ (e @ v)
    first = matrix_exponential(dt * (CFEXP_X1 * a1 + CFEXP_X2 * a2))
    second = matrix_exponential(dt * (CFEXP_X2 * a1 + CFEXP_X1 * a2))
    return second @ (first @ v)


STEPPERS = {
    Scheme.CN: crank_nicolson_step,
    Scheme.CFC4: cfc4_step,
    Scheme.CAYLEY_MAGNUS4: cayley_magnus4_step,
    Scheme.CF_EXP4: cf_exp4_step,
}


def stepper(scheme):
    return STEPPERS[Scheme.parse(scheme)]


# --------------------------------------------------------------------------
# propagation over a time grid


def step_sampler(h, u, step, psi=None):
    """Sampler for one step of the linear model ``h`` under control ``u``.

    Piecewise-constant controls give the same operator at every node of a
    step, so it is assembled once and reused.
    """
    if getattr(u, "samples", None) is not None or u is None:
        a = assemble_A(h, control_values(u, step, None, h.n_controls), psi)
        return lambda t: a
    return lambda t: assemble_A(h, control_values(u, step, t, h.n_controls), psi)


def _check_linear(h):
    if not h.is_linear:
        raise UsageError(
            "propagate handles linear models only; use caylpol for nonlinear (g > 0) dynamics"
        )


def propagate(scheme, h, v0, grid, u=None, store_trajectory=False, workspace=None):
    """Compose one-step maps of ``scheme`` over ``grid``.

    Returns the final state, or an ``(n_steps + 1, dim)`` array of every
    grid-time state when ``store_trajectory`` is set.
    """
    _check_linear(h)
    step_fn = stepper(scheme)
    ws = workspace if workspace is not None else SolveWorkspace()
    v = np.array(v0, dtype=complex)
    traj = None
    if store_trajectory:
        traj = np.empty((grid.n_steps + 1, v.shape[0]), dtype=complex)
        traj[0] = v
    dt = grid.dt
    for n in range(grid.n_steps):
        t = grid.time(n)
        try:
            v = step_fn(step_sampler(h, u, n), t, dt, v, ws)
        except SingularMatrixError as exc:
            raise PropagationError(str(exc), step=n) from exc
        if traj is not None:
            traj[n + 1] = v
    return traj if store_trajectory else v


def propagate_backward(scheme, h, vT, grid, u=None, workspace=None):
    """Step from ``T`` back to ``t0`` with negative steps; returns every grid-time state."""
    _check_linear(h)
    step_fn = stepper(scheme)
    ws = workspace if workspace is not None else SolveWorkspace()
    traj = np.empty((grid.n_steps + 1, len(vT)), dtype=complex)
    v = np.array(vT, dtype=complex)
    traj[-1] = v
    dt = grid.dt
    for n in range(grid.n_steps - 1, -1, -1):
        try:
            v = step_fn(step_sampler(h, u, n), grid.time(n + 1), -dt, v, ws)
        except SingularMatrixError as exc:
            raise PropagationError(str(exc), step=n) from exc
        traj[n] = v
    return traj
