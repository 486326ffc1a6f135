"""Heat currents, work, rotor powers, ergotropy and machine classification.

Sign convention: energy flowing into the system is positive.
"""

from dataclasses import asdict, dataclass
import math

import numpy as np
import scipy.linalg as la

from .liouvillian import BATH1, BATH2, HAMILTONIAN, ROTOR, Generator
from .operators import (
    QOperator, angular_momentum, as_array, embed_qubit_op, expect, partial_trace, rotor_shift,
)

ENGINE = "Engine"
REFRIGERATOR = "Refrigerator"
ACCELERATOR = "Accelerator"
OTHER = "Other"

CROSSCHECK_RTOL = 1e-10


class ThermoError(ValueError):
    """Generator parts do not match the requested heat-flow formula."""


@dataclass
class ThermoReport:
    q1: float
    q2: float
    qr: float
    w_q: float
    w_r: float
    u_dot: float
    first_law_residual: float
    model: str
    classification: str = OTHER
    efficiency: float = math.nan
    cop: float = math.nan
    carnot_efficiency: float = math.nan
    carnot_cop: float = math.nan

    def as_dict(self):
        return asdict(self)


@dataclass
class PowerReport:
    w_kin: float
    w_int: float
    q_ba: float
    w_net: float
    time: float = math.nan


@dataclass
class Ergotropies:
    total: float
    two_qubits: float
    rotor: float
    qubit1: float
    qubit2: float


def _require(gen, model):
    if not isinstance(gen, Generator):
        raise ThermoError("expected a Generator with tagged parts")
    missing = {BATH1, BATH2, ROTOR, HAMILTONIAN} - set(gen.parts)
    if missing:
        raise ThermoError(f"generator lacks parts {sorted(missing)}")
    if model is not None and gen.model != model:
        raise ThermoError(f"expected a {model} generator, got {gen.model}")


def _close(a, b, scale):
    return abs(a - b) <= CROSSCHECK_RTOL * max(scale, 1e-300) + 1e-15


def _qubit_excitation_probs(rho, which, space):
    sp_ = embed_qubit_op(which, "plus", space).matrix
    sm_ = embed_qubit_op(which, "minus", space).matrix
    return expect(sm_ @ sp_, rho).real, expect(sp_ @ sm_, rho).real


def heat_flows_local(rho, gen, p=None):
    """(q1, q2, qr) under the local generator, with q_i = Tr[H_S0 L_i rho].

    Each qubit current is also evaluated from the closed form
    2 B_i g_i^2 (n_i <s-s+> - (n_i + 1) <s+s->) and the two must agree.
    """
    _require(gen, "local")
    p = p or gen.params
    h0 = gen.hamiltonians[0]
    rho_a = as_array(rho)
    q1 = expect(h0, gen.apply_part(BATH1, rho_a)).real
    q2 = expect(h0, gen.apply_part(BATH2, rho_a)).real
    qr = expect(h0, gen.apply_part(ROTOR, rho_a)).real
    for which, q, B, g, n in ((1, q1, p.B1, p.g1, p.n1), (2, q2, p.B2, p.g2, p.n2)):
        lower, upper = _qubit_excitation_probs(rho_a, which, gen.space)
        explicit = 2 * B * g ** 2 * (n * lower - (n + 1) * upper)
        scale = 2 * B * g ** 2 * (2 * n + 1)
        if not _close(q, explicit, scale):
            raise ThermoError(f"heat-flow cross-check failed for bath {which}: "
                              f"{q:.6e} vs {explicit:.6e}")
    return q1, q2, qr


def work_flows_local(rho, gen, p=None):
    """(w_q, w_r): hidden work of the local qubit baths and of the load."""
    _require(gen, "local")
    p = p or gen.params
    hi = gen.hamiltonians[1]
    rho_a = as_array(rho)
    qubit_part = gen.apply_part(BATH1, rho_a) + gen.apply_part(BATH2, rho_a)
    w_q = expect(hi, qubit_part).real
    w_r = expect(hi, gen.apply_part(ROTOR, rho_a)).real
    space = gen.space
    forward = (embed_qubit_op(1, "plus", space).matrix
               @ embed_qubit_op(2, "minus", space).matrix
               @ rotor_shift(space).matrix)
    corr = expect(forward, rho_a)
    pref = -0.5 * p.lam * (p.g1 ** 2 * (2 * p.n1 + 1) + p.g2 ** 2 * (2 * p.n2 + 1))
    explicit = (pref * (corr + np.conj(corr))).real
    if not _close(w_q, explicit, abs(pref) * 2):
        raise ThermoError(f"work cross-check failed: {w_q:.6e} vs {explicit:.6e}")
    return w_q, w_r


def heat_flows_global(rho, gen):
    """(q1, q2, qr) under the semiglobal generator; bath currents use the full H_S."""
    _require(gen, "global")
    h0, _, hs = gen.hamiltonians
    rho_a = as_array(rho)
    q1 = expect(hs, gen.apply_part(BATH1, rho_a)).real
    q2 = expect(hs, gen.apply_part(BATH2, rho_a)).real
    qr = expect(h0, gen.apply_part(ROTOR, rho_a)).real
    return q1, q2, qr


def energy_rate(rho, gen):
    return expect(gen.hamiltonians[2], gen.apply(rho)).real


def thermo_report(rho, gen, sign_deadband=1e-12):
    """Full energy bookkeeping of ``rho`` under ``gen`` (local or global).

    Under the global generator the qubit baths do no work, so ``w_q`` is 0
    and the qubit currents are measured against H_S.
    """
    p = gen.params
    u_dot = energy_rate(rho, gen)
    hi = gen.hamiltonians[1]
    if gen.model == "local":
        q1, q2, qr = heat_flows_local(rho, gen)
        w_q, w_r = work_flows_local(rho, gen)
    else:
        q1, q2, qr = heat_flows_global(rho, gen)
        w_q = 0.0
        w_r = expect(hi, gen.apply_part(ROTOR, as_array(rho))).real
    resid = u_dot - (q1 + q2 + qr + w_q + w_r)
    rep = ThermoReport(q1, q2, qr, w_q, w_r, u_dot, resid, gen.model)
    rep.classification = classify_operation(rep, sign_deadband)
    metrics = performance_metrics(rep, p)
    rep.efficiency, rep.cop, rep.carnot_efficiency, rep.carnot_cop = metrics
    return rep


def _sign(x, eps):
    if abs(x) <= eps:
        return 0
    return 1 if x > 0 else -1


def classify_operation(report, deadband=1e-12):
    """Engine / Refrigerator / Accelerator by the signs of (q1, q2, w_q).

    A flow whose magnitude is at most ``deadband`` times the largest of the
    three counts as zero, which always yields ``Other``.
    """
    q1, q2, w = report.q1, report.q2, report.w_q
    eps = deadband * max(abs(q1), abs(q2), abs(w))
    signs = (_sign(q1, eps), _sign(q2, eps), _sign(w, eps))
    return {(-1, 1, -1): ENGINE,
            (1, -1, 1): REFRIGERATOR,
            (-1, 1, 1): ACCELERATOR}.get(signs, OTHER)


def carnot_bounds(p):
    eta_c = 1.0 - p.beta2 / p.beta1
    cop_c = p.beta1 / (p.beta1 - p.beta2) if p.beta1 != p.beta2 else math.inf
    return eta_c, cop_c


def performance_metrics(report, p):
    """(efficiency, cop, carnot_efficiency, carnot_cop).

    Efficiency -w_q/q2 exists only for an engine and COP q1/w_q only for a
    refrigerator; otherwise the entry is NaN.
    """
    eta_c, cop_c = carnot_bounds(p)
    eta = cop = math.nan
    cls = report.classification
    if cls == ENGINE and report.q2 != 0:
        eta = -report.w_q / report.q2
    elif cls == REFRIGERATOR and report.w_q != 0:
        cop = report.q1 / report.w_q
    return eta, cop, eta_c, cop_c


def within_carnot(report, slack=1e-9):
    """True unless a defined efficiency or COP exceeds its Carnot value."""
    ok = True
    if not math.isnan(report.efficiency):
        ok &= report.efficiency <= report.carnot_efficiency + slack
    if not math.isnan(report.cop):
        ok &= report.cop <= report.carnot_cop + slack
    return bool(ok)


def rotor_powers(rho, gen, time=math.nan):
    """Kinetic, intrinsic, back-action and net power of the rotor.

    w_kin is assembled as w_int + q_ba from the same generator application,
    so the split is exact by construction.
    """
    p = gen.params
    space = gen.space
    lz = angular_momentum(space).matrix
    lz2 = lz @ lz
    rho_a = as_array(rho)
    two_i = 2.0 * p.inertia
    w_int = expect(lz2, gen.apply_part(HAMILTONIAN, rho_a)).real / two_i
    dissipative = sum(gen.apply_part(k, rho_a) for k in gen.parts if k != HAMILTONIAN)
    q_ba = expect(lz2, dissipative).real / two_i
    w_kin = w_int + q_ba
    drho = gen.apply(rho_a)
    w_net = expect(lz, rho_a).real * expect(lz, drho).real / p.inertia
    return PowerReport(w_kin, w_int, q_ba, w_net, time)


def ergotropy(rho, H):
    """Tr[rho H] minus the energy of the passive state with rho's spectrum."""
    r = as_array(rho)
    h = as_array(H)
    r = 0.5 * (r + r.conj().T)
    h = 0.5 * (h + h.conj().T)
    energy = np.einsum("ij,ji->", r, h).real
    pops = np.sort(la.eigvalsh(r))[::-1]
    levels = np.sort(la.eigvalsh(h))
    return max(float(energy - pops @ levels), 0.0)


def subsystem_ergotropies(rho, p, space=None, hamiltonian=None):
    """Ergotropy of the full state, the two-qubit and rotor reductions, and each qubit.

    Subsystems use their free Hamiltonians: B1 s1z + B2 s2z for the qubit pair,
    L_z^2 / 2I for the rotor.  ``hamiltonian='effective'`` adds the mill term
    with e^{i phi} replaced by its expectation value to the qubit-pair
    Hamiltonian.
    """
    from .model import build_hamiltonians
    space = space or p.space()
    hamiltonian = hamiltonian or p.qubit_ergotropy_hamiltonian
    hs = build_hamiltonians(p, space)[2]
    if not isinstance(rho, QOperator):
        rho = QOperator(np.asarray(rho), space)
    rho_q = partial_trace(rho, ["q1", "q2"])
    rho_r = partial_trace(rho, ["rotor"])
    sz = np.diag([1.0, -1.0])
    eye = np.eye(2)
    h_q = p.B1 * np.kron(sz, eye) + p.B2 * np.kron(eye, sz)
    if hamiltonian == "effective":
        shift = expect(rotor_shift(space), rho)
        splus = np.array([[0, 1], [0, 0]])
        fwd = np.kron(splus, splus.T)
        h_q = h_q + p.lam * (shift * fwd + np.conj(shift) * fwd.T)
    h_r = np.diag(space.ladder.astype(float) ** 2 / (2 * p.inertia))
    e1 = ergotropy(partial_trace(rho, ["q1"]), p.B1 * sz)
    e2 = ergotropy(partial_trace(rho, ["q2"]), p.B2 * sz)
    return Ergotropies(ergotropy(rho, hs), ergotropy(rho_q, h_q),
                       ergotropy(rho_r, h_r), e1, e2)


__all__ = [
    "ThermoReport", "PowerReport", "Ergotropies", "heat_flows_local",
    "work_flows_local", "heat_flows_global", "thermo_report", "rotor_powers",
    "ergotropy", "subsystem_ergotropies", "classify_operation",
    "performance_metrics", "within_carnot", "carnot_bounds",
    "ENGINE", "REFRIGERATOR", "ACCELERATOR", "OTHER",
]
