"""Truncated two-qubit + rotor Hilbert space and its elementary operators.

Basis ordering is qubit 1 (x) qubit 2 (x) rotor, row-major.  Each qubit uses
index 0 for the excited state (sigma_z = +1) and index 1 for the ground state,
so sigma_+ = |0><1|.  The rotor ladder runs over l = l_min ... l_max with the
local index l - l_min.  The composite index of (q1, q2, l) is

    (2 * q1 + q2) * n_rotor + (l - l_min)

The angle shift E = e^{i phi} raises l by one and annihilates |l_max>
(open boundary), which fixes [E, L_z] = -E on the interior of the ladder.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

QUBIT_DIM = 2
SUBSYSTEMS = ("q1", "q2", "rotor")


class TruncationError(ValueError):
    """Raised for an empty or inverted rotor ladder."""


@dataclass(frozen=True)
class SpaceSpec:
    """Truncated composite space: qubit 1, qubit 2, rotor ladder."""

    l_min: int
    l_max: int

    def __post_init__(self):
        if int(self.l_min) != self.l_min or int(self.l_max) != self.l_max:
            raise TruncationError("ladder bounds must be integers")
        if self.l_min >= self.l_max:
            raise TruncationError(
                f"need l_min < l_max, got ({self.l_min}, {self.l_max})")

    @property
    def n_rotor(self):
        return self.l_max - self.l_min + 1

    @property
    def dim(self):
        return 4 * self.n_rotor

    @property
    def dims(self):
        return (QUBIT_DIM, QUBIT_DIM, self.n_rotor)

    @property
    def ladder(self):
        return np.arange(self.l_min, self.l_max + 1)

    def index(self, q1, q2, l):
        """Composite basis index of qubit indices ``q1, q2`` and level ``l``."""
        if not self.l_min <= l <= self.l_max:
            raise IndexError(f"l={l} outside [{self.l_min}, {self.l_max}]")
        return (2 * q1 + q2) * self.n_rotor + (l - self.l_min)

    def labels(self, i):
        """Inverse of :meth:`index`."""
        block, r = divmod(int(i), self.n_rotor)
        q1, q2 = divmod(block, 2)
        return q1, q2, r + self.l_min

    @cached_property
    def charge(self):
        """Integer label 2 l - (s1 - s2) / 2 of each basis state.

        The mill term, both qubit baths and the rotor load all shift this
        label by a fixed amount, so generators never mix density-matrix
        elements with different row/column charge differences.
        """
        s = np.array([1, -1])
        s1 = np.repeat(s, 2 * self.n_rotor)
        s2 = np.tile(np.repeat(s, self.n_rotor), 2)
        l = np.tile(self.ladder, 4)
        return 2 * l - (s1 - s2) // 2

    @cached_property
    def sector(self):
        """Column-stacked vec indices of the charge-diagonal block."""
        q = self.charge
        rows, cols = np.nonzero(q[:, None] == q[None, :])
        return np.sort(rows + cols * self.dim)


def make_space(l_min, l_max):
    return SpaceSpec(int(l_min), int(l_max))


class QOperator:
    """Matrix on the composite space, or on a reduced product of its factors.

    ``matrix`` is a scipy sparse matrix for operators and is usually a dense
    array for density matrices; arithmetic works on either.
    """

    __array_priority__ = 100

    def __init__(self, matrix, space=None, dims=None, hermitian=False):
        if space is not None:
            dims = space.dims
        if dims is None:
            dims = (matrix.shape[0],)
        dims = tuple(int(d) for d in dims)
        n = int(np.prod(dims))
        if matrix.shape != (n, n):
            raise ValueError(f"matrix shape {matrix.shape} does not match dims {dims}")
        self.matrix = matrix
        self.space = space
        self.dims = dims
        self.hermitian = bool(hermitian)
        if self.hermitian:
            defect = _maxabs(self.matrix - self.matrix.conj().T)
            if defect > 1e-12 * max(_maxabs(self.matrix), 1e-300):
                raise ValueError(f"operator flagged hermitian but defect is {defect:.3e}")

    @property
    def shape(self):
        return self.matrix.shape

    @property
    def issparse(self):
        return sp.issparse(self.matrix)

    def _wrap(self, matrix, hermitian=False):
        return QOperator(matrix, self.space, self.dims, hermitian=hermitian)

    def _check(self, other):
        if self.dims != other.dims:
            raise ValueError(f"dimension mismatch {self.dims} vs {other.dims}")

    def dag(self):
        return self._wrap(self.matrix.conj().T.tocsr() if self.issparse
                          else self.matrix.conj().T, self.hermitian)

    def toarray(self):
        return self.matrix.toarray() if self.issparse else np.asarray(self.matrix)

    def tocsr(self):
        return self.matrix.tocsr() if self.issparse else sp.csr_matrix(self.matrix)

    def tr(self):
        return complex(self.matrix.diagonal().sum())

    def expect(self, rho):
        """Tr[rho A] for a density matrix ``rho`` (QOperator or array)."""
        return expect(self, rho)

    def __add__(self, other):
        if isinstance(other, QOperator):
            self._check(other)
            return self._wrap(self.matrix + other.matrix,
                              self.hermitian and other.hermitian)
        return NotImplemented

    def __sub__(self, other):
        if isinstance(other, QOperator):
            self._check(other)
            return self._wrap(self.matrix - other.matrix,
                              self.hermitian and other.hermitian)
        return NotImplemented

    def __neg__(self):
        return self._wrap(-self.matrix, self.hermitian)

    def __mul__(self, scalar):
        if np.isscalar(scalar):
            herm = self.hermitian and np.isreal(scalar)
            return self._wrap(self.matrix * scalar, herm)
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self * (1.0 / scalar)

    def __matmul__(self, other):
        if isinstance(other, QOperator):
            self._check(other)
            return self._wrap(self.matrix @ other.matrix)
        return NotImplemented

    def __repr__(self):
        kind = "sparse" if self.issparse else "dense"
        return f"QOperator(dims={self.dims}, {kind})"


def _maxabs(m):
    if sp.issparse(m):
        return float(abs(m).max()) if m.nnz else 0.0
    return float(np.max(np.abs(m))) if m.size else 0.0


def as_array(rho):
    if isinstance(rho, QOperator):
        return rho.toarray()
    if sp.issparse(rho):
        return rho.toarray()
    return np.asarray(rho)


def expect(op, rho):
    """Tr[rho A]; ``op`` sparse or dense, ``rho`` anything array-like."""
    a = op.matrix if isinstance(op, QOperator) else op
    r = rho.matrix if isinstance(rho, QOperator) else rho
    if sp.issparse(a):
        if sp.issparse(r):
            return complex(a.multiply(r.T).sum())
        a = a.tocoo()
        return complex(np.sum(a.data * np.asarray(r)[a.col, a.row]))
    if sp.issparse(r):
        return expect(r, a)
    return complex(np.einsum("ij,ji->", np.asarray(a), np.asarray(r)))


def commutator(a, b):
    return a @ b - b @ a


# single-factor building blocks

SIGMA_Z = sp.csr_matrix(np.diag([1.0, -1.0]).astype(complex))
SIGMA_PLUS = sp.csr_matrix(np.array([[0, 1], [0, 0]], dtype=complex))
SIGMA_MINUS = SIGMA_PLUS.T.tocsr()
_KINDS = {"z": SIGMA_Z, "plus": SIGMA_PLUS, "minus": SIGMA_MINUS}


def _embed(space, q1=None, q2=None, rotor=None):
    eye2 = sp.identity(2, dtype=complex, format="csr")
    factors = [q1 if q1 is not None else eye2,
               q2 if q2 is not None else eye2,
               rotor if rotor is not None else sp.identity(space.n_rotor, dtype=complex, format="csr")]
    out = sp.kron(sp.kron(factors[0], factors[1]), factors[2], format="csr")
    out.eliminate_zeros()
    return out


def identity(space):
    return QOperator(sp.identity(space.dim, dtype=complex, format="csr"), space, hermitian=True)


def embed_qubit_op(which, kind, space):
    """Pauli z or ladder operator on qubit ``which`` (1 or 2)."""
    if which not in (1, 2):
        raise ValueError(f"qubit index must be 1 or 2, got {which!r}")
    if kind not in _KINDS:
        raise ValueError(f"kind must be one of {sorted(_KINDS)}, got {kind!r}")
    m = _KINDS[kind]
    mat = _embed(space, q1=m) if which == 1 else _embed(space, q2=m)
    return QOperator(mat, space, hermitian=(kind == "z"))


def rotor_angular_momentum(n_levels, l_min):
    return sp.diags(np.arange(l_min, l_min + n_levels).astype(complex), format="csr")


def rotor_shift_matrix(n_levels):
    """e^{i phi} on a ladder of ``n_levels``: |l> -> |l+1>, top level annihilated."""
    return sp.diags(np.ones(n_levels - 1, dtype=complex), -1, format="csr")


def angular_momentum(space):
    return QOperator(_embed(space, rotor=rotor_angular_momentum(space.n_rotor, space.l_min)),
                     space, hermitian=True)


def rotor_shift(space):
    """E = e^{i phi}; its adjoint implements e^{-i phi}."""
    return QOperator(_embed(space, rotor=rotor_shift_matrix(space.n_rotor)), space)


def cos_phi(space):
    e = rotor_shift(space)
    return QOperator(((e.matrix + e.matrix.conj().T) * 0.5).tocsr(), space, hermitian=True)


def sin_phi(space):
    e = rotor_shift(space)
    return QOperator(((e.matrix - e.matrix.conj().T) / 2j).tocsr(), space, hermitian=True)


def rotor_operator(space, rotor_matrix, hermitian=False):
    """Embed an ``n_rotor`` x ``n_rotor`` matrix as identity (x) identity (x) M."""
    return QOperator(_embed(space, rotor=sp.csr_matrix(rotor_matrix)), space, hermitian=hermitian)


def tensor(*ops):
    """Kronecker product of dense or sparse factors, returned dense."""
    out = np.ones((1, 1), dtype=complex)
    for op in ops:
        out = np.kron(out, as_array(op))
    return out


_NAME_TO_AXIS = {"q1": 0, "q2": 1, "rotor": 2, 1: 0, 2: 1, "r": 2}


def partial_trace(rho, keep):
    """Reduced state on the factors in ``keep``.

    ``keep`` is a collection of subsystem names from ``("q1", "q2", "rotor")``
    (qubits may also be given as 1 and 2).  Kept factors stay in the fixed
    ordering regardless of the order they are listed in.
    """
    if isinstance(keep, (str, int)):
        keep = [keep]
    keep = list(keep)
    if not keep:
        raise ValueError("keep must name at least one subsystem")
    if isinstance(rho, QOperator):
        dims = rho.dims
        arr = rho.toarray()
    else:
        arr = np.asarray(rho)
        dims = None
    if dims is None or len(dims) != 3:
        raise ValueError("partial_trace expects a state on the full composite space")
    try:
        axes = sorted({_NAME_TO_AXIS[k] for k in keep})
    except KeyError as exc:
        raise ValueError(f"unknown subsystem {exc.args[0]!r}") from None
    t = arr.reshape(dims + dims)
    n = 3
    letters = "abc"
    upper = "ABC"
    row = "".join(letters[i] for i in range(n))
    col = "".join(upper[i] if i in axes else letters[i] for i in range(n))
    out_row = "".join(letters[i] for i in axes)
    out_col = "".join(upper[i] for i in axes)
    red = np.einsum(f"{row}{col}->{out_row}{out_col}", t)
    kept = tuple(dims[i] for i in axes)
    size = int(np.prod(kept))
    return QOperator(red.reshape(size, size), dims=kept)
