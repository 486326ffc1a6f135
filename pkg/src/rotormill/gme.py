"""Semiglobal master equation: secular qubit dissipators in the eigenbasis of
H_S plus the local rotor load.

H_S only couples |down up, l> with |up down, l+1>, so it is diagonalized block
by block and the eigenvector matrix stays sparse.  Bath coupling operators are
split into eigenoperators A(omega) = sum over pairs with e_j - e_i = omega of
|i><i|A|j><j|, with frequencies merged within an absolute tolerance.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .liouvillian import (
    BATH1, BATH2, HAMILTONIAN, ROTOR, Generator, Superoperator,
    hamiltonian_super, lindblad_sum, rotor_load_dissipator,
)
from .model import build_hamiltonians
from .operators import QOperator, embed_qubit_op

ELEMENT_CUTOFF = 1e-12


class EigensolverError(RuntimeError):
    """Block diagonalization of H_S failed its accuracy checks."""


@dataclass
class Spectrum:
    energies: np.ndarray
    vectors: sp.csr_matrix
    clusters: list

    @property
    def dim(self):
        return len(self.energies)


@dataclass
class EigenoperatorSet:
    bath: int
    pairs: list  # (omega, QOperator)
    tol: float

    @property
    def frequencies(self):
        return np.array([w for w, _ in self.pairs])

    def total(self):
        mats = [op.tocsr() for _, op in self.pairs]
        return sum(mats[1:], mats[0]) if mats else None


def spectrum(H, degeneracy_tol=1e-9):
    """Eigen-decomposition of a Hermitian sparse H, one connected block at a time."""
    h = H.tocsr() if isinstance(H, QOperator) else sp.csr_matrix(H)
    d = h.shape[0]
    n_blocks, labels = connected_components(abs(h) > 0, directed=False)
    energies = np.empty(d)
    rows, cols, vals = [], [], []
    col = 0
    order = []
    for b in range(n_blocks):
        idx = np.flatnonzero(labels == b)
        w, v = la.eigh(h[idx][:, idx].toarray())
        for k in range(len(w)):
            energies[col] = w[k]
            nz = np.abs(v[:, k]) > 1e-15
            rows.extend(idx[nz])
            cols.extend([col] * int(nz.sum()))
            vals.extend(v[nz, k])
            order.append(col)
            col += 1
    V = sp.csr_matrix((vals, (rows, cols)), shape=(d, d), dtype=complex)
    perm = np.argsort(energies, kind="stable")
    energies = energies[perm]
    V = V[:, perm].tocsr()
    scale = max(abs(h).max() if h.nnz else 1.0, 1.0)
    unit_err = abs(V.conj().T @ V - sp.identity(d)).max()
    recon = abs(V @ sp.diags(energies) @ V.conj().T - h).max()
    if unit_err > 1e-10 or recon > 1e-10 * scale:
        raise EigensolverError(
            f"eigen-decomposition inaccurate: unitarity {unit_err:.2e}, "
            f"reconstruction {recon:.2e} (||H||_max = {scale:.2e})")
    clusters = _cluster(energies, degeneracy_tol * scale)
    return Spectrum(energies, V, clusters)


def _cluster(values, tol):
    """Group sorted-by-value indices whose neighbours are within ``tol``."""
    order = np.argsort(values, kind="stable")
    groups = []
    current = [order[0]] if len(order) else []
    for a, b in zip(order[:-1], order[1:]):
        if values[b] - values[a] <= tol:
            current.append(b)
        else:
            groups.append(current)
            current = [b]
    if current:
        groups.append(current)
    return groups


def eigenoperators(A, spec, tol, bath=0, space=None):
    """Split ``A`` into eigenoperators A(omega) of H_S.

    Pairs (i, j) with a non-negligible element <i|A|j> are binned by their
    Bohr frequency e_j - e_i; bins are formed by merging sorted frequencies
    closer than ``tol``.  The returned operators sum to ``A``.
    """
    a = A.tocsr() if isinstance(A, QOperator) else sp.csr_matrix(A)
    space = space or (A.space if isinstance(A, QOperator) else None)
    V = spec.vectors
    a_eig = (V.conj().T @ a @ V).tocoo()
    keep = np.abs(a_eig.data) > ELEMENT_CUTOFF
    i, j, val = a_eig.row[keep], a_eig.col[keep], a_eig.data[keep]
    omega = spec.energies[j] - spec.energies[i]
    d = spec.dim
    pairs = []
    for group in _cluster(omega, tol):
        group = np.asarray(group)
        w = float(np.mean(omega[group]))
        block = sp.csr_matrix((val[group], (i[group], j[group])), shape=(d, d))
        op = (V @ block @ V.conj().T).tocsr()
        op.data[np.abs(op.data) < 1e-15] = 0
        op.eliminate_zeros()
        pairs.append((w, QOperator(op, space) if space is not None else QOperator(op)))
    return EigenoperatorSet(bath, pairs, tol)


def _x_over_expm1(x):
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-8
    safe = np.where(small, 1.0, x)
    return np.where(small, 1.0 - x / 2, safe / np.expm1(safe))


def bath_rates(omega, i, p, cutoff):
    """(J n, J (n + 1)) for bath ``i`` at frequency ``omega``.

    J(w) = g_i^2 w Omega^2 / (w^2 + Omega^2) is Ohmic with cutoff
    ``cutoff``; n(w) = 1 / (exp(beta_i w) - 1).  Both rates are written
    through x / (e^x - 1), which stays finite at w = 0 where each rate tends
    to g_i^2 / beta_i.
    """
    if i not in (1, 2):
        raise ValueError(f"bath index must be 1 or 2, got {i!r}")
    g = p.g1 if i == 1 else p.g2
    beta = p.beta1 if i == 1 else p.beta2
    omega = np.asarray(omega, dtype=float)
    lorentz = g ** 2 * cutoff ** 2 / (omega ** 2 + cutoff ** 2)
    up = lorentz * _x_over_expm1(beta * omega) / beta
    down = up + lorentz * omega
    if up.ndim == 0:
        return float(up), float(down)
    return up, down


def cutoff_frequency(p, sets):
    """Omega: the configured value or the largest |omega| over the given sets."""
    if p.omega_cutoff != "auto":
        return float(p.omega_cutoff)
    wmax = max((abs(w) for s in sets for w, _ in s.pairs), default=0.0)
    if wmax <= 0:
        raise ValueError("no bath-coupled transitions to set the cutoff from")
    return wmax


def global_eigenoperators(p, space=None, hamiltonians=None):
    """Spectrum of H_S and eigenoperator sets of sigma_1^- and sigma_2^-.

    Depends only on fields, coupling, inertia and ladder, so it is cached
    across temperature and chi sweeps.
    """
    space = space or p.space()
    if hamiltonians is None:
        return _cached_eigenoperators(p.B1, p.B2, p.lam, p.inertia, space.l_min,
                                      space.l_max, p.eigencluster_tol)
    return _eigenoperators_from(p, space, hamiltonians)


@lru_cache(maxsize=16)
def _cached_eigenoperators(B1, B2, lam, inertia, l_min, l_max, tol):
    from .model import Params
    p = Params(B1=B1, B2=B2, lam=lam, inertia=inertia, l_min=l_min, l_max=l_max,
               eigencluster_tol=tol)
    space = p.space()
    return _eigenoperators_from(p, space, build_hamiltonians(p, space))


def _eigenoperators_from(p, space, hams):
    spec = spectrum(hams[2])
    # frequency tolerance relative to the transition scale
    scale = max(abs(spec.energies).max(), 2 * max(p.B1, p.B2))
    tol = p.eigencluster_tol * scale
    sets = [eigenoperators(embed_qubit_op(i, "minus", space), spec, tol, bath=i, space=space)
            for i in (1, 2)]
    return spec, sets


def assemble_global_liouvillian(p, space=None):
    """-i[H_S, .] + L1_glob + L2_glob + L_r (load kept local)."""
    space = space or p.space()
    hams = build_hamiltonians(p, space)
    spec, sets = global_eigenoperators(p, space)
    cutoff = cutoff_frequency(p, sets)
    parts = {HAMILTONIAN: Superoperator(hamiltonian_super(hams[2]), space, HAMILTONIAN)}
    for s, kind in zip(sets, (BATH1, BATH2)):
        terms = []
        for w, op in s.pairs:
            if abs(w) <= s.tol and not p.keep_zero_frequency:
                continue
            up, down = bath_rates(w, s.bath, p, cutoff)
            a = op.tocsr()
            terms += [(up, a.conj().T), (down, a)]
        parts[kind] = Superoperator(lindblad_sum(terms, space.dim), space, kind)
    parts[ROTOR] = rotor_load_dissipator(p, space)
    gen = Generator(parts, p, space, hams, "global")
    gen.spectrum = spec
    gen.eigenoperators = sets
    gen.cutoff = cutoff
    return gen
