"""Repeated-interaction (collision) model of the two qubit baths.

Each collision couples the system for a time tau to one fresh thermal
oscillator per bath (frequency 2 B_i, occupation truncated at ``n_fock``)
through g_i (s_i^- a_i^+ + s_i^+ a_i) / sqrt(tau), after which the
oscillators are traced out.  The joint Hamiltonian conserves both the total
excitation number and (qubit-1 + bath-1 excitations) - l, so the unitary is
block diagonal with small blocks and is exponentiated block by block.

The load on the rotor has no microscopic model; it is applied after every
collision as the exact map exp(tau L_r) on the rotor factor.
"""

from dataclasses import dataclass, field
import math
import warnings

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .liouvillian import lindblad_sum, unvec, vec
from .model import build_hamiltonians
from .operators import (
    QOperator, as_array, embed_qubit_op, rotor_angular_momentum, rotor_shift_matrix,
)

TAIL_TOL = 1e-8


class CollisionError(RuntimeError):
    """The collision unitary failed its accuracy check."""


class FockTruncationWarning(UserWarning):
    """Thermal weight discarded by the oscillator truncation exceeds the tolerance."""


@dataclass(frozen=True)
class CollisionConfig:
    """``n_fock=None`` picks, per bath, the smallest truncation with tail mass below 1e-8."""

    tau: float
    n_fock: int = None
    steps: int = 100
    expm_tol: float = 1e-12

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau!r}")
        if self.steps < 0:
            raise ValueError("steps must be non-negative")
        if self.n_fock is not None and self.n_fock < 1:
            raise ValueError("n_fock must be at least 1")
        if not self.expm_tol > 0:
            raise ValueError("expm_tol must be positive")


def thermal_tail(beta, B, n_fock):
    """Weight of Fock states k >= n_fock in the untruncated thermal state."""
    return math.exp(-2.0 * beta * B * n_fock)


def fock_size(beta, B, tail=TAIL_TOL):
    """Smallest truncation whose discarded thermal weight is below ``tail``."""
    return max(1, int(math.floor(-math.log(tail) / (2.0 * beta * B))) + 1)


def bath_oscillator_state(beta, B, n_fock):
    """Thermal state of a mode at frequency 2B, truncated and renormalized."""
    if n_fock < 1:
        raise ValueError("n_fock must be at least 1")
    k = np.arange(n_fock)
    w = np.zeros(n_fock)
    w[0] = 1.0
    w[1:] = np.exp(-2.0 * beta * B * k[1:])
    tail = thermal_tail(beta, B, n_fock)
    if tail > TAIL_TOL:
        warnings.warn(f"oscillator truncation at {n_fock} levels drops thermal weight "
                      f"{tail:.2e}", FockTruncationWarning, stacklevel=2)
    return QOperator(np.diag(w / w.sum()).astype(complex), dims=(n_fock,))


def _ladder_ops(n):
    a = sp.diags(np.sqrt(np.arange(1, n)).astype(complex), 1, format="csr")
    return a, sp.diags(np.arange(n).astype(float), format="csr")


def _block_expm(H, t, tol):
    """exp(-i t H) for sparse Hermitian H, one connected block at a time."""
    n_blocks, labels = connected_components(abs(H) > 0, directed=False)
    order = np.argsort(labels, kind="stable")
    bounds = np.searchsorted(labels[order], np.arange(n_blocks + 1))
    H = H.tocsr()
    rows, cols, vals = [], [], []
    worst = 0.0
    for b in range(n_blocks):
        idx = order[bounds[b]:bounds[b + 1]]
        u = la.expm(-1j * t * H[idx][:, idx].toarray())
        worst = max(worst, np.abs(u.conj().T @ u - np.eye(len(idx))).max())
        r, c = np.nonzero(np.abs(u) > 1e-16)
        rows.append(idx[r])
        cols.append(idx[c])
        vals.append(u[r, c])
    if worst > 1e3 * tol:
        raise CollisionError(f"collision unitary off by {worst:.2e} from unitarity")
    n = H.shape[0]
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(n, n))


def _rotor_load_map(p, space, tau):
    """exp(tau L_r) restricted to the rotor factor, as an n_rotor^2 matrix."""
    nr = space.n_rotor
    if p.gamma == 0:
        return np.eye(nr * nr, dtype=complex)
    lz = rotor_angular_momentum(nr, space.l_min)
    e = rotor_shift_matrix(nr)
    c = 0.5 * (e + e.conj().T)
    s = (e - e.conj().T) / 2j
    a = p.beta_r / (4.0 * p.inertia)
    pref = 2.0 * p.inertia * p.gamma / p.beta_r
    gen = lindblad_sum([(pref, c - 1j * a * (s @ lz)), (pref, s + 1j * a * (c @ lz))], nr)
    return la.expm(tau * gen.toarray())


@dataclass
class CollisionChannel:
    """Precomputed single-collision map and bath-energy functionals."""

    params: object
    space: object
    tau: float
    n_fock: tuple
    superop: sp.csr_matrix          # system map of one collision, on vec(rho)
    bath_energy_out: tuple          # F_i with <H_B,i> after = Tr[F_i rho]
    bath_energy_in: tuple
    load_map: np.ndarray            # exp(tau L_r) on the rotor factor
    hamiltonians: tuple

    def collide(self, rho):
        d = self.space.dim
        return unvec(self.superop @ vec(rho), d)

    def load(self, rho):
        nr = self.space.n_rotor
        r = np.asarray(rho).reshape(4, nr, 4, nr)
        # vec of each rotor block (column stacking): index l + l' nr
        blocks = r.transpose(0, 2, 3, 1).reshape(4, 4, nr * nr)
        out = blocks @ self.load_map.T
        return out.reshape(4, 4, nr, nr).transpose(0, 3, 1, 2).reshape(4 * nr, 4 * nr)


def build_channel(p, cfg, space=None):
    space = space or p.space()
    d = space.dim
    tau = cfg.tau
    if cfg.n_fock is None:
        n1, n2 = fock_size(p.beta1, p.B1), fock_size(p.beta2, p.B2)
    else:
        n1 = n2 = int(cfg.n_fock)
    rho_b1 = np.real(np.diag(bath_oscillator_state(p.beta1, p.B1, n1).matrix))
    rho_b2 = np.real(np.diag(bath_oscillator_state(p.beta2, p.B2, n2).matrix))
    nb = n1 * n2
    p_bath = np.kron(rho_b1, rho_b2)

    a1, num1 = _ladder_ops(n1)
    a2, num2 = _ladder_ops(n2)
    i1, i2, i_s = (sp.identity(n, format="csr") for n in (n1, n2, d))
    hams = build_hamiltonians(p, space)
    hs = hams[2].tocsr()
    hb1 = 2.0 * p.B1 * sp.kron(num1, i2)
    hb2 = 2.0 * p.B2 * sp.kron(i1, num2)
    sm1 = embed_qubit_op(1, "minus", space).matrix
    sm2 = embed_qubit_op(2, "minus", space).matrix
    couple = (p.g1 * sp.kron(sm1, sp.kron(a1.conj().T, i2))
              + p.g2 * sp.kron(sm2, sp.kron(i1, a2.conj().T)))
    h_tot = (sp.kron(hs, sp.identity(nb)) + sp.kron(i_s, hb1 + hb2)
             + (couple + couple.conj().T) / math.sqrt(tau)).tocsr()
    U = _block_expm(h_tot, tau, cfg.expm_tol).tocoo()

    # joint index = s * nb + k; split into system and bath parts
    t_out, k_out = np.divmod(U.row, nb)
    s_in, k_in = np.divmod(U.col, nb)
    weight = p_bath[k_in]
    keep = weight > 0
    t_out, k_out, s_in, k_in, v = (x[keep] for x in (t_out, k_out, s_in, k_in, U.data[keep]))
    weight = weight[keep]

    # bath energies after the collision: F_i = sum_k p_k K^+ E_i(k_out) K
    e1 = 2.0 * p.B1 * (k_out // n2)
    e2 = 2.0 * p.B2 * (k_out % n2)
    superop, f1, f2 = _assemble(t_out, s_in, k_out, k_in, v, weight, e1, e2, d, nb)
    e_in = (float(rho_b1 @ (2.0 * p.B1 * np.arange(n1))),
            float(rho_b2 @ (2.0 * p.B2 * np.arange(n2))))
    return CollisionChannel(p, space, tau, (n1, n2), superop, (f1, f2), e_in,
                            _rotor_load_map(p, space, tau), hams)


def _assemble(t_out, s_in, k_out, k_in, v, weight, e1, e2, d, nb):
    """Sum over Kraus operators K_(k_out, k_in) with weights p(k_in).

    rho'[t, t'] = sum p K[t, s] rho[s, s'] conj(K[t', s']), gathered group by
    group, where a group collects the elements sharing (k_out, k_in).
    """
    key = k_out.astype(np.int64) * nb + k_in
    order = np.argsort(key, kind="stable")
    key = key[order]
    t_out, s_in, v, weight, e1, e2 = (x[order] for x in (t_out, s_in, v, weight, e1, e2))
    starts = np.flatnonzero(np.r_[True, key[1:] != key[:-1]])
    ends = np.r_[starts[1:], len(key)]
    rows, cols, vals = [], [], []
    f1 = np.zeros((d, d), dtype=complex)
    f2 = np.zeros((d, d), dtype=complex)
    for a, b in zip(starts, ends):
        t, s, x, w = t_out[a:b], s_in[a:b], v[a:b], weight[a]
        rows.append((t[:, None] + d * t[None, :]).ravel())
        cols.append((s[:, None] + d * s[None, :]).ravel())
        vals.append((w * x[:, None] * x.conj()[None, :]).ravel())
        # K^+ K restricted to this group: sum_t conj(K[t, s']) K[t, s]
        same = t[:, None] == t[None, :]
        i, j = np.nonzero(same)
        contrib = w * x.conj()[i] * x[j]
        np.add.at(f1, (s[i], s[j]), e1[a] * contrib)
        np.add.at(f2, (s[i], s[j]), e2[a] * contrib)
    superop = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                            shape=(d * d, d * d)).tocsr()
    superop.sum_duplicates()
    return superop, f1, f2


def collision_step(rho, cfg, p, channel=None):
    """One collision followed by the load sub-step.

    Returns ``(rho_next, Q1, Q2, W, Q_r, W_r)``.  Q_i is minus the energy
    gained by oscillator i, W = Tr[(H_S + H_B) (rho_SB' - rho_SB)], so that
    the change of Tr[H_S rho] over the collision equals Q1 + Q2 + W.  Q_r and
    W_r split the load sub-step's energy change into its H_S0 and mill parts.
    """
    ch = channel or build_channel(p, cfg, rho.space if isinstance(rho, QOperator) else None)
    r0 = as_array(rho).astype(complex)
    h0, hi, hs = (h.tocsr() for h in ch.hamiltonians)
    r1 = ch.collide(r0)
    r1 = 0.5 * (r1 + r1.conj().T)
    q1 = -(_trace(ch.bath_energy_out[0], r0) - ch.bath_energy_in[0] * np.trace(r0).real)
    q2 = -(_trace(ch.bath_energy_out[1], r0) - ch.bath_energy_in[1] * np.trace(r0).real)
    w = _trace(hs, r1) - _trace(hs, r0) - q1 - q2
    r2 = ch.load(r1)
    r2 = 0.5 * (r2 + r2.conj().T)
    qr = _trace(h0, r2) - _trace(h0, r1)
    wr = _trace(hi, r2) - _trace(hi, r1)
    space = ch.space
    return QOperator(r2, space), q1, q2, w, qr, wr


def _trace(a, rho):
    if sp.issparse(a):
        a = a.tocoo()
        return float(np.real(np.sum(a.data * rho[a.col, a.row])))
    return float(np.real(np.einsum("ij,ji->", a, rho)))


@dataclass
class CollisionTrajectory:
    """States at t_k = k tau and per-collision rates.

    ``q1_rate[k]`` etc. belong to the collision that ends at ``times[k]``;
    entry 0 is NaN.
    """

    times: np.ndarray
    states: list
    q1_rate: np.ndarray
    q2_rate: np.ndarray
    w_rate: np.ndarray
    qr_rate: np.ndarray
    wr_rate: np.ndarray
    trace_drift: float = 0.0
    info: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.times)

    def expect(self, op):
        m = op.tocsr() if isinstance(op, QOperator) else op
        return np.array([_trace(m, as_array(r)) for r in self.states])


def run_collisions(rho0, cfg, p, space=None, channel=None):
    space = space or (rho0.space if isinstance(rho0, QOperator) and rho0.space else p.space())
    ch = channel or build_channel(p, cfg, space)
    n = cfg.steps
    rates = np.full((5, n + 1), np.nan)
    rho = QOperator(as_array(rho0).astype(complex), space)
    states = [rho]
    tr0 = np.trace(rho.matrix).real
    drift = 0.0
    for k in range(1, n + 1):
        rho, *flows = collision_step(rho, cfg, p, ch)
        rates[:, k] = np.array(flows) / cfg.tau
        step_drift = abs(np.trace(rho.matrix).real - tr0)
        drift = max(drift, step_drift)
        states.append(rho)
    times = cfg.tau * np.arange(n + 1)
    return CollisionTrajectory(times, states, *rates, trace_drift=drift,
                               info={"n_fock": ch.n_fock, "tau": cfg.tau})
