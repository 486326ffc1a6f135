"""Lindblad superoperators and the local (collision-limit) generator.

Density matrices are vectorized by column stacking, vec(rho)[i + j*d] =
rho[i, j], so vec(A rho B) = (B^T (x) A) vec(rho) and the Hamiltonian part
-i[H, rho] becomes 1 (x) (-iH) + (iH^T) (x) 1.
"""

import numpy as np
import scipy.sparse as sp

from .model import build_hamiltonians
from .operators import (
    QOperator, angular_momentum, as_array, cos_phi, embed_qubit_op, sin_phi,
)

HAMILTONIAN = "hamiltonian"
BATH1 = "dissipator-bath1"
BATH2 = "dissipator-bath2"
ROTOR = "dissipator-rotor"
KINDS = (HAMILTONIAN, BATH1, BATH2, ROTOR)


def vec(rho):
    return as_array(rho).reshape(-1, order="F")


def unvec(v, d=None):
    v = np.asarray(v)
    d = d or int(round(np.sqrt(v.size)))
    return v.reshape(d, d, order="F")


class Superoperator:
    """Sparse generator acting on column-stacked density matrices."""

    def __init__(self, matrix, space, kind=None):
        matrix = sp.csr_matrix(matrix)
        n = space.dim if space is not None else int(round(np.sqrt(matrix.shape[0])))
        if matrix.shape != (n * n, n * n):
            raise ValueError(f"superoperator shape {matrix.shape} does not match dim {n}")
        self.matrix = matrix
        self.space = space
        self.kind = kind

    @property
    def dim(self):
        return int(round(np.sqrt(self.matrix.shape[0])))

    def apply(self, rho):
        """L[rho] as a dense matrix."""
        return unvec(self.matrix @ vec(rho), self.dim)

    def __add__(self, other):
        if not isinstance(other, Superoperator):
            return NotImplemented
        if self.matrix.shape != other.matrix.shape:
            raise ValueError("dimension mismatch")
        return Superoperator(self.matrix + other.matrix, self.space)

    def __mul__(self, scalar):
        return Superoperator(self.matrix * scalar, self.space, self.kind)

    __rmul__ = __mul__

    def __repr__(self):
        return f"Superoperator(kind={self.kind!r}, dim={self.dim}, nnz={self.matrix.nnz})"


class Generator:
    """Master-equation generator kept as a sum of tagged parts.

    ``parts`` maps a kind tag to its :class:`Superoperator`; ``matrix`` is
    their sum.  ``hamiltonians`` holds ``(H0, HI, HS)`` used to build it.
    """

    def __init__(self, parts, params, space, hamiltonians, model):
        self.parts = dict(parts)
        self.params = params
        self.space = space
        self.hamiltonians = hamiltonians
        self.model = model
        total = None
        for part in self.parts.values():
            total = part.matrix if total is None else total + part.matrix
        self.matrix = sp.csr_matrix(total)

    def __getitem__(self, kind):
        return self.parts[kind]

    @property
    def dim(self):
        return self.space.dim

    def apply(self, rho):
        return unvec(self.matrix @ vec(rho), self.dim)

    def apply_part(self, kind, rho):
        return self.parts[kind].apply(rho)

    def as_superoperator(self):
        return Superoperator(self.matrix, self.space)

    def __repr__(self):
        return f"Generator(model={self.model!r}, dim={self.dim}, parts={list(self.parts)})"


def hamiltonian_super(H):
    h = H.tocsr() if isinstance(H, QOperator) else sp.csr_matrix(H)
    d = h.shape[0]
    eye = sp.identity(d, dtype=complex, format="csr")
    return (sp.kron(eye, -1j * h) + sp.kron(1j * h.T, eye)).tocsr()


def dissipator_matrix(o, d=None):
    """D[O] rho = O rho O^+ - {O^+ O, rho}/2 as a sparse matrix."""
    o = sp.csr_matrix(o)
    d = d or o.shape[0]
    if o.shape != (d, d):
        raise ValueError(f"jump operator shape {o.shape} does not match dim {d}")
    eye = sp.identity(d, dtype=complex, format="csr")
    odo = (o.conj().T @ o).tocsr()
    out = sp.kron(o.conj(), o) - 0.5 * sp.kron(eye, odo) - 0.5 * sp.kron(odo.T, eye)
    out = out.tocsr()
    out.eliminate_zeros()
    return out


def lindblad_sum(terms, d):
    """sum_k r_k D[O_k] for ``terms`` = [(r_k, O_k), ...], assembled in one pass."""
    rows, cols, vals = [], [], []
    odo = sp.csr_matrix((d, d), dtype=complex)
    for rate, o in terms:
        if rate == 0:
            continue
        o = sp.coo_matrix(o)
        if o.shape != (d, d):
            raise ValueError(f"jump operator shape {o.shape} does not match dim {d}")
        if o.nnz == 0:
            continue
        # kron(conj(O), O)[(p d + i), (q d + j)] = conj(O[p, q]) O[i, j]
        rows.append((o.row[:, None] * d + o.row[None, :]).ravel())
        cols.append((o.col[:, None] * d + o.col[None, :]).ravel())
        vals.append((rate * np.conj(o.data)[:, None] * o.data[None, :]).ravel())
        oc = o.tocsr()
        odo = odo + rate * (oc.conj().T @ oc)
    eye = sp.identity(d, dtype=complex, format="csr")
    anti = -0.5 * (sp.kron(eye, odo) + sp.kron(odo.T, eye))
    if rows:
        jump = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(d * d, d * d))
        out = (jump.tocsr() + anti).tocsr()
    else:
        out = anti.tocsr()
    out.sum_duplicates()
    out.eliminate_zeros()
    return out


def dissipator_super(O, space=None, kind=None):
    if isinstance(O, QOperator):
        space = space or O.space
        if space is not None and O.shape != (space.dim, space.dim):
            raise ValueError("jump operator does not act on the full space")
        mat = O.tocsr()
    else:
        mat = sp.csr_matrix(O)
    return Superoperator(dissipator_matrix(mat), space, kind)


def local_qubit_dissipators(p, space=None):
    """Thermal dissipators g_i^2 (n_i D[s_i^+] + (n_i + 1) D[s_i^-]) of both qubits."""
    space = space or p.space()
    out = []
    for which, g, n, kind in ((1, p.g1, p.n1, BATH1), (2, p.g2, p.n2, BATH2)):
        up = embed_qubit_op(which, "plus", space).matrix
        down = embed_qubit_op(which, "minus", space).matrix
        mat = lindblad_sum([(g ** 2 * n, up), (g ** 2 * (n + 1), down)], space.dim)
        out.append(Superoperator(mat, space, kind))
    return tuple(out)


def rotor_load_jumps(p, space=None):
    """The two jump operators of the dissipative load, literal ordering.

    cos(phi) - i beta_r sin(phi) L_z / 4I  and  sin(phi) + i beta_r cos(phi) L_z / 4I
    """
    space = space or p.space()
    lz = angular_momentum(space).matrix
    c = cos_phi(space).matrix
    s = sin_phi(space).matrix
    a = p.beta_r / (4.0 * p.inertia)
    return (c - 1j * a * (s @ lz)).tocsr(), (s + 1j * a * (c @ lz)).tocsr()


def rotor_load_dissipator(p, space=None):
    space = space or p.space()
    n2 = space.dim ** 2
    if p.gamma == 0:
        return Superoperator(sp.csr_matrix((n2, n2), dtype=complex), space, ROTOR)
    j1, j2 = rotor_load_jumps(p, space)
    pref = 2.0 * p.inertia * p.gamma / p.beta_r
    mat = lindblad_sum([(pref, j1), (pref, j2)], space.dim)
    return Superoperator(mat, space, ROTOR)


def assemble_local_liouvillian(p, space=None):
    """-i[H_S, .] + L_1 + L_2 + L_r with each part retrievable by tag."""
    space = space or p.space()
    hams = build_hamiltonians(p, space)
    l1, l2 = local_qubit_dissipators(p, space)
    parts = {
        HAMILTONIAN: Superoperator(hamiltonian_super(hams[2]), space, HAMILTONIAN),
        BATH1: l1,
        BATH2: l2,
        ROTOR: rotor_load_dissipator(p, space),
    }
    return Generator(parts, p, space, hams, "local")


def qubit_rates(p):
    """Upward/downward rates (g_i^2 n_i, g_i^2 (n_i + 1)) for each bath."""
    return ((p.g1 ** 2 * p.n1, p.g1 ** 2 * (p.n1 + 1)),
            (p.g2 ** 2 * p.n2, p.g2 ** 2 * (p.n2 + 1)))


__all__ = [
    "Superoperator", "Generator", "vec", "unvec", "hamiltonian_super",
    "dissipator_matrix", "lindblad_sum", "dissipator_super", "local_qubit_dissipators",
    "rotor_load_dissipator", "rotor_load_jumps", "assemble_local_liouvillian",
    "qubit_rates", "KINDS", "HAMILTONIAN", "BATH1",
    "BATH2", "ROTOR",
]
