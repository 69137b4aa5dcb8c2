"""Dense and banded complex matrices, shifted solves and the matrix exponential.

Operators are either plain ``numpy.ndarray`` (dense) or :class:`BandedMatrix`.
Every routine here accepts both and picks the cheaper code path.
"""

import warnings
from collections import Counter

import numpy as np
from scipy.linalg import LinAlgWarning, lapack, lu_factor, lu_solve

from .errors import ShapeError, SingularMatrixError, StaleFactorizationError

#: Relative pivot magnitude below which a factorization is declared singular.
PIVOT_THRESHOLD = 1e-14

#: Instrumentation: number of solves, exponentials and commutators performed.
OP_COUNTS = Counter()


class BandedMatrix:
    """Square complex matrix stored by diagonals.

    ``data[upper + i - j, j] == a[i, j]``, the layout used by LAPACK's
    general band routines and by :func:`scipy.linalg.solve_banded`.
    Entries outside the band are exactly zero by construction.
    """

    __slots__ = ("data", "lower", "upper")
    __array_ufunc__ = None

    def __init__(self, data, lower, upper):
        data = np.asarray(data, dtype=complex)
        if data.ndim != 2 or data.shape[0] != lower + upper + 1:
            raise ShapeError(
                f"band data must have {lower + upper + 1} rows, got shape {data.shape}"
            )
        if lower < 0 or upper < 0:
            raise ShapeError("bandwidths must be nonnegative")
        self.data = data
        self.lower = int(lower)
        self.upper = int(upper)

    @property
    def n(self):
        return self.data.shape[1]

    @property
    def shape(self):
        return (self.n, self.n)

    @property
    def bandwidth(self):
        return max(self.lower, self.upper)

    def __repr__(self):
        return f"BandedMatrix(n={self.n}, lower={self.lower}, upper={self.upper})"

    # construction -------------------------------------------------------

    @classmethod
    def zeros(cls, n, lower=0, upper=0):
        return cls(np.zeros((lower + upper + 1, n), dtype=complex), lower, upper)

    @classmethod
    def identity(cls, n):
        return cls(np.ones((1, n), dtype=complex), 0, 0)

    @classmethod
    def diag(cls, values):
        values = np.asarray(values, dtype=complex)
        return cls(values[np.newaxis, :].copy(), 0, 0)

    @classmethod
    def from_diagonals(cls, diagonals):
        """Build from ``{offset: values}`` where offset = column - row.

        Each value array has length ``n - abs(offset)`` (or is a scalar).
        """
        n = None
        for d, v in diagonals.items():
            if np.ndim(v):
                n = len(v) + abs(d)
                break
        if n is None:
            raise ShapeError("at least one diagonal must be an array")
        lower = max(0, -min(diagonals))
        upper = max(0, max(diagonals))
        out = cls.zeros(n, lower, upper)
        for d, v in diagonals.items():
            out._diag_view(d)[:] = v
        return out

    @classmethod
    def from_dense(cls, a, lower, upper, check=True):
        a = np.asarray(a, dtype=complex)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ShapeError(f"expected a square matrix, got shape {a.shape}")
        n = a.shape[0]
        out = cls.zeros(n, lower, upper)
        for d in range(-lower, upper + 1):
            out._diag_view(d)[:] = np.diagonal(a, d)
        if check:
            outside = a - out.to_dense()
            if np.any(outside != 0):
                raise ShapeError("matrix has nonzero entries outside the requested band")
        return out

    # element access -----------------------------------------------------

    def _diag_view(self, d):
        """View of the diagonal with offset ``d`` (column - row)."""
        n = self.n
        row = self.upper - d
        if d >= 0:
            return self.data[row, d:n]
        return self.data[row, 0 : n + d]

    def diagonal(self, d=0):
        if d > self.upper or d < -self.lower:
            return np.zeros(self.n - abs(d), dtype=complex)
        return self._diag_view(d).copy()

    def _row_diag(self, d):
        """Length-n array r with r[i] = a[i, i + d] (zero where out of range)."""
        n = self.n
        r = np.zeros(n, dtype=complex)
        if d > self.upper or d < -self.lower or abs(d) >= n:
            return r
        if d >= 0:
            r[: n - d] = self._diag_view(d)
        else:
            r[-d:] = self._diag_view(d)
        return r

    def to_dense(self):
        n = self.n
        a = np.zeros((n, n), dtype=complex)
        for d in range(-self.lower, self.upper + 1):
            if abs(d) < n:
                idx = np.arange(max(0, -d), n - max(0, d))
                a[idx, idx + d] = self._diag_view(d)
        return a

    def widen(self, lower, upper):
        """Same matrix re-stored with (at least) the given bandwidths."""
        lower = max(lower, self.lower)
        upper = max(upper, self.upper)
        if lower == self.lower and upper == self.upper:
            return self
        out = BandedMatrix.zeros(self.n, lower, upper)
        r0 = upper - self.upper
        out.data[r0 : r0 + self.lower + self.upper + 1] = self.data
        return out

    # arithmetic ---------------------------------------------------------

    def _check(self, other):
        if other.shape != self.shape:
            raise ShapeError(f"dimension mismatch: {self.shape} vs {other.shape}")

    def __add__(self, other):
        if isinstance(other, BandedMatrix):
            self._check(other)
            lo, up = max(self.lower, other.lower), max(self.upper, other.upper)
            out = self.widen(lo, up)
            out = BandedMatrix(out.data.copy(), lo, up)
            r0 = up - other.upper
            out.data[r0 : r0 + other.lower + other.upper + 1] += other.data
            return out
        if isinstance(other, np.ndarray) and other.ndim == 2:
            self._check(other)
            return self.to_dense() + other
        return NotImplemented

    __radd__ = __add__

    def __neg__(self):
        return BandedMatrix(-self.data, self.lower, self.upper)

    def __sub__(self, other):
        if isinstance(other, (BandedMatrix, np.ndarray)):
            return self + (-other)
        return NotImplemented

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, scalar):
        if np.ndim(scalar) != 0:
            return NotImplemented
        return BandedMatrix(self.data * scalar, self.lower, self.upper)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self * (1.0 / scalar)

    def matvec(self, x):
        x = np.asarray(x)
        n = self.n
        if x.shape[0] != n:
            raise ShapeError(f"dimension mismatch: matrix {self.shape}, operand {x.shape}")
        y = np.zeros(x.shape, dtype=complex)
        extra = (slice(None),) * (x.ndim - 1)
        for d in range(-self.lower, self.upper + 1):
            if abs(d) >= n:
                continue
            diag = self._diag_view(d)
            if x.ndim > 1:
                diag = diag[:, np.newaxis]
            if d >= 0:
                y[(slice(0, n - d),) + extra] += diag * x[(slice(d, n),) + extra]
            else:
                y[(slice(-d, n),) + extra] += diag * x[(slice(0, n + d),) + extra]
        return y

    def __matmul__(self, other):
        if isinstance(other, BandedMatrix):
            return _banded_product(self, other)
        if isinstance(other, np.ndarray):
            return self.matvec(other)
        return NotImplemented

    def __rmatmul__(self, other):
        if isinstance(other, np.ndarray):
            if other.ndim == 1:
                return self.conj_transpose().matvec(other.conj()).conj()
            return other @ self.to_dense()
        return NotImplemented

    def conj_transpose(self):
        n = self.n
        out = BandedMatrix.zeros(n, self.upper, self.lower)
        for d in range(-self.lower, self.upper + 1):
            if abs(d) < n:
                out._diag_view(-d)[:] = np.conj(self._diag_view(d))
        return out

    @property
    def H(self):
        return self.conj_transpose()

    def copy(self):
        return BandedMatrix(self.data.copy(), self.lower, self.upper)

    def same_as(self, other):
        """Exact equality of storage (used to detect repeated samples)."""
        return (
            isinstance(other, BandedMatrix)
            and other.lower == self.lower
            and other.upper == self.upper
            and np.array_equal(other.data, self.data)
        )


def _banded_product(a, b):
    a._check(b)
    n = a.n
    lo = min(a.lower + b.lower, n - 1)
    up = min(a.upper + b.upper, n - 1)
    out = BandedMatrix.zeros(n, lo, up)
    for p in range(-a.lower, a.upper + 1):
        ap = a._row_diag(p)
        if not ap.any():
            continue
        for q in range(-b.lower, b.upper + 1):
            s = p + q
            if abs(s) >= n:
                continue
            bq = b._row_diag(q)
            # c[i, i+s] += a[i, i+p] * b[i+p, i+p+q]
            shifted = np.zeros(n, dtype=complex)
            if p >= 0:
                shifted[: n - p] = bq[p:]
            else:
                shifted[-p:] = bq[: n + p]
            prod = ap * shifted
            view = out._diag_view(s)
            if s >= 0:
                view += prod[: n - s]
            else:
                view += prod[-s:]
    return compact(out)


def compact(m):
    """Return ``m`` densified if its band exceeds a quarter of the dimension."""
    if isinstance(m, BandedMatrix) and m.bandwidth > m.n // 4:
        return m.to_dense()
    return m


def to_dense(m):
    if isinstance(m, BandedMatrix):
        return m.to_dense()
    return np.asarray(m, dtype=complex)


def dim(m):
    if m.shape[0] != m.shape[1]:
        raise ShapeError(f"expected a square matrix, got shape {m.shape}")
    return m.shape[0]


def identity_like(m):
    if isinstance(m, BandedMatrix):
        return BandedMatrix.identity(m.n)
    return np.eye(dim(m), dtype=complex)


def shifted_identity(m, scale):
    """``I + scale * m`` in the storage of ``m``."""
    if isinstance(m, BandedMatrix):
        data = m.data * scale
        data[m.upper] += 1.0
        return BandedMatrix(data, m.lower, m.upper)
    out = np.asarray(m, dtype=complex) * scale
    out[np.diag_indices_from(out)] += 1.0
    return out


def matmul(a, b):
    """Product of two operators, keeping banded storage when possible."""
    if isinstance(a, BandedMatrix) or isinstance(b, BandedMatrix):
        if isinstance(a, BandedMatrix) and isinstance(b, BandedMatrix):
            return a @ b
        if dim(a) != dim(b):
            raise ShapeError(f"dimension mismatch: {a.shape} vs {b.shape}")
        return to_dense(a) @ to_dense(b)
    if a.shape != b.shape:
        raise ShapeError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return a @ b


def commutator(a, b):
    """``[a, b] = ab - ba``.

    Banded operands give a banded result whose bandwidth is at most the sum
    of the operand bandwidths (densified once that exceeds n/4).
    """
    if dim(a) != dim(b):
        raise ShapeError(f"dimension mismatch: {a.shape} vs {b.shape}")
    OP_COUNTS["commutator"] += 1
    return compact(matmul(a, b) - matmul(b, a))


def apply(m, v):
    """``m @ v`` for a vector or a stack of column vectors."""
    if isinstance(m, BandedMatrix):
        return m.matvec(v)
    return m @ v


def is_skew_hermitian(m, tol=1e-13):
    d = to_dense(m)
    scale = max(1.0, np.abs(d).max(initial=0.0))
    return np.abs(d + d.conj().T).max(initial=0.0) <= tol * scale


# --------------------------------------------------------------------------
# shifted solves


class SolveWorkspace:
    """Reusable LU factorization buffers.

    Each call to :meth:`factor` bumps :attr:`generation`; a solve against an
    older generation raises :class:`StaleFactorizationError`. Workspaces are
    single-owner and must not be shared between threads.
    """

    def __init__(self):
        self.generation = 0
        self._buffer = None
        self._kind = None
        self._factors = None
        self._matrix = None

    def _band_buffer(self, m):
        rows = 2 * m.lower + m.upper + 1
        buf = self._buffer
        if buf is None or buf.shape != (rows, m.n):
            buf = np.zeros((rows, m.n), dtype=complex, order="F")
            self._buffer = buf
        else:
            buf[: m.lower] = 0.0
        buf[m.lower :] = m.data
        return buf

    def factor(self, m, time=None):
        """Factor ``m`` with partial pivoting; returns the new generation."""
        self.generation += 1
        self._factors = None
        self._matrix = m
        if isinstance(m, BandedMatrix):
            ab = self._band_buffer(m)
            lu, piv, info = lapack.zgbtrf(ab, m.lower, m.upper, overwrite_ab=1)
            pivots = lu[m.lower + m.upper]
            self._kind = "banded"
            self._factors = (lu, piv, m.lower, m.upper)
        else:
            a = np.asarray(m, dtype=complex)
            if a.ndim != 2 or a.shape[0] != a.shape[1]:
                raise ShapeError(f"expected a square matrix, got shape {a.shape}")
            # singularity is reported through the pivot test below
            with np.errstate(all="ignore"), warnings.catch_warnings():
                warnings.simplefilter("ignore", LinAlgWarning)
                lu, piv = lu_factor(a, check_finite=False)
            info = 0
            pivots = np.diagonal(lu)
            self._kind = "dense"
            self._factors = (lu, piv)
        mags = np.abs(pivots)
        biggest = mags.max(initial=0.0)
        if info > 0 or not np.all(np.isfinite(mags)) or biggest == 0.0 or (
            mags.min() < PIVOT_THRESHOLD * biggest
        ):
            self._factors = None
            raise SingularMatrixError("shifted matrix is singular to working precision", time)
        return self.generation

    def solve(self, rhs, generation=None, refine=False):
        """Solve with the current factors.

        ``refine`` adds one step of iterative refinement against the stored
        matrix, which keeps long products of Cayley factors unitary to
        round-off instead of letting solve errors accumulate.
        """
        if self._factors is None:
            raise StaleFactorizationError("no valid factorization in this workspace")
        if generation is not None and generation != self.generation:
            raise StaleFactorizationError(
                f"factorization generation {generation} was replaced by {self.generation}"
            )
        rhs = np.asarray(rhs, dtype=complex)
        OP_COUNTS["solve"] += 1
        x = self._substitute(rhs)
        if refine:
            x = x + self._substitute(rhs - apply(self._matrix, x))
        return x

    def _substitute(self, rhs):
        if self._kind == "banded":
            lu, piv, kl, ku = self._factors
            b = rhs.reshape(rhs.shape[0], -1)
            x, info = lapack.zgbtrs(lu, kl, ku, b, piv)
            return x.reshape(rhs.shape)
        lu, piv = self._factors
        return lu_solve((lu, piv), rhs, check_finite=False)


def solve_shifted(m, rhs, time=None, workspace=None):
    """Solve ``m x = rhs`` by (banded or dense) LU with partial pivoting."""
    if rhs.shape[0] != dim(m):
        raise ShapeError(f"dimension mismatch: matrix {m.shape}, rhs {rhs.shape}")
    ws = workspace if workspace is not None else SolveWorkspace()
    ws.factor(m, time=time)
    return ws.solve(rhs)


# --------------------------------------------------------------------------
# matrix exponential (scaling and squaring, Higham 2005)

_THETA = {
    3: 1.495585217958292e-2,
    5: 2.539398330063230e-1,
    7: 9.504178996162932e-1,
    9: 2.097847961257068e0,
    13: 5.371920351148152e0,
}

_PADE = {
    3: (120.0, 60.0, 12.0, 1.0),
    5: (30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0),
    7: (17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0),
    9: (
        17643225600.0, 8821612800.0, 2075673600.0, 302702400.0, 30270240.0,
        2162160.0, 110880.0, 3960.0, 90.0, 1.0,
    ),
    13: (
        64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
        1187353796428800.0, 129060195264000.0, 10559470521600.0,
        670442572800.0, 33522128640.0, 1323241920.0, 40840800.0,
        960960.0, 16380.0, 182.0, 1.0,
    ),
}


def _pade_uv(a, m):
    b = _PADE[m]
    ident = np.eye(a.shape[0], dtype=a.dtype)
    a2 = a @ a
    if m == 13:
        a4 = a2 @ a2
        a6 = a4 @ a2
        u = a @ (a6 @ (b[13] * a6 + b[11] * a4 + b[9] * a2)
                 + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * ident)
        v = (a6 @ (b[12] * a6 + b[10] * a4 + b[8] * a2)
             + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * ident)
        return u, v
    powers = [ident, a2]
    for _ in range(2, m // 2 + 1):
        powers.append(powers[-1] @ a2)
    u = a @ sum(b[2 * k + 1] * powers[k] for k in range(m // 2 + 1))
    v = sum(b[2 * k] * powers[k] for k in range(m // 2 + 1))
    return u, v


def matrix_exponential(a):
    """``exp(a)`` by Padé scaling and squaring; always returns a dense array.

    The Padé degree is the smallest of 3, 5, 7, 9, 13 whose backward-error
    bound covers ``||a||_1``; beyond the degree-13 bound the matrix is scaled
    by a power of two and the result squared back.
    """
    a = to_dense(a)
    n = dim(a)
    OP_COUNTS["expm"] += 1
    if n == 0:
        return a.copy()
    norm = np.abs(a).sum(axis=0).max()
    if norm == 0.0:
        return np.eye(n, dtype=complex)
    s = 0
    for m in (3, 5, 7, 9):
        if norm <= _THETA[m]:
            break
    else:
        m = 13
        if norm > _THETA[13]:
            s = int(np.ceil(np.log2(norm / _THETA[13])))
            a = a / 2.0**s
    u, v = _pade_uv(a, m)
    r = np.linalg.solve(v - u, v + u)
    for _ in range(s):
        r = r @ r
    return r
