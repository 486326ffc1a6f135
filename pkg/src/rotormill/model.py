"""Physical parameters, Hamiltonians and thermal states."""

from dataclasses import asdict, dataclass, fields, replace
import json

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from .operators import (
    QOperator, angular_momentum, embed_qubit_op, make_space, rotor_shift,
)


class ParamsError(ValueError):
    """Invalid physical parameter or unknown configuration key."""


# JSON key -> attribute name, for keys that are not valid identifiers
_JSON_ALIASES = {"lambda": "lam"}
_ATTR_ALIASES = {v: k for k, v in _JSON_ALIASES.items()}


@dataclass(frozen=True)
class Params:
    """All physical and numerical parameters (hbar = 1).

    ``g1 = g (1 - chi)`` couples qubit 1 to the cold bath and
    ``g2 = g (1 + chi)`` couples qubit 2 to the hot bath.
    ``omega_cutoff`` is either a positive number or ``"auto"`` for the
    largest bath-coupled transition frequency.
    """

    B1: float = 4.0
    B2: float = 10.0
    lam: float = 0.1
    inertia: float = 1.0
    g: float = 1.0
    chi: float = 0.0
    beta1: float = 0.1
    beta2: float = 0.05
    beta_r: float = 0.09
    gamma: float = 5e-5
    l_min: int = -30
    l_max: int = 30
    omega_cutoff: object = "auto"
    keep_zero_frequency: bool = True
    eigencluster_tol: float = 1e-9
    steady_tol: float = 1e-10
    ode_tol: float = 1e-9
    qubit_ergotropy_hamiltonian: str = "free"

    def __post_init__(self):
        for name in ("B1", "B2", "inertia", "beta1", "beta2", "beta_r"):
            if not getattr(self, name) > 0:
                raise ParamsError(f"{name} must be positive, got {getattr(self, name)!r}")
        if self.gamma < 0 or self.lam < 0 or self.g < 0:
            raise ParamsError("g, gamma and lambda must be non-negative")
        if not -1 < self.chi < 1:
            raise ParamsError(f"chi must lie in (-1, 1), got {self.chi!r}")
        if self.l_min >= self.l_max:
            raise ParamsError(f"need l_min < l_max, got ({self.l_min}, {self.l_max})")
        oc = self.omega_cutoff
        if not (oc == "auto" or (isinstance(oc, (int, float)) and not isinstance(oc, bool) and oc > 0)):
            raise ParamsError(f"omega_cutoff must be 'auto' or a positive number, got {oc!r}")
        if self.qubit_ergotropy_hamiltonian not in ("free", "effective"):
            raise ParamsError("qubit_ergotropy_hamiltonian must be 'free' or 'effective'")
        for name in ("eigencluster_tol", "steady_tol", "ode_tol"):
            if not getattr(self, name) > 0:
                raise ParamsError(f"{name} must be positive")

    @property
    def g1(self):
        return self.g * (1.0 - self.chi)

    @property
    def g2(self):
        return self.g * (1.0 + self.chi)

    @property
    def n1(self):
        return thermal_occupation(self.beta1, self.B1)

    @property
    def n2(self):
        return thermal_occupation(self.beta2, self.B2)

    def space(self):
        return make_space(self.l_min, self.l_max)

    def replace(self, **changes):
        return replace(self, **changes)

    def to_dict(self):
        return {_ATTR_ALIASES.get(k, k): v for k, v in asdict(self).items()}

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, data):
        """Build from a JSON-style mapping; unknown keys are rejected."""
        known = {f.name for f in fields(cls)}
        kwargs = {}
        for key, value in data.items():
            attr = _JSON_ALIASES.get(key, key)
            if attr not in known:
                raise ParamsError(f"unknown parameter {key!r}")
            kwargs[attr] = value
        for key in ("l_min", "l_max"):
            if key in kwargs:
                if int(kwargs[key]) != kwargs[key]:
                    raise ParamsError(f"{key} must be an integer")
                kwargs[key] = int(kwargs[key])
        return cls(**kwargs)


def thermal_occupation(beta, B):
    """Bose occupation 1 / (exp(2 beta B) - 1) of a mode at frequency 2B."""
    if not (beta > 0 and B > 0):
        raise ParamsError(f"thermal_occupation needs beta > 0 and B > 0, got ({beta}, {B})")
    x = 2.0 * beta * B
    # e^{-x} / (1 - e^{-x}) does not overflow for large x
    return float(np.exp(-x) / -np.expm1(-x))


def build_hamiltonians(p, space=None):
    """Return ``(H0, HI, HS)``: free part, mill interaction and their sum."""
    space = space or p.space()
    sz1 = embed_qubit_op(1, "z", space)
    sz2 = embed_qubit_op(2, "z", space)
    lz = angular_momentum(space)
    h0 = p.B1 * sz1.matrix + p.B2 * sz2.matrix + (lz.matrix @ lz.matrix) / (2.0 * p.inertia)
    sp1 = embed_qubit_op(1, "plus", space).matrix
    sm2 = embed_qubit_op(2, "minus", space).matrix
    e = rotor_shift(space).matrix
    forward = sp1 @ sm2 @ e
    hi = p.lam * (forward + forward.conj().T)
    h0 = sp.csr_matrix(h0)
    hi = sp.csr_matrix(hi)
    hi.eliminate_zeros()
    return (QOperator(h0, space, hermitian=True),
            QOperator(hi, space, hermitian=True),
            QOperator((h0 + hi).tocsr(), space, hermitian=True))


def kinetic_operator(p, space):
    lz = angular_momentum(space).matrix
    return QOperator((lz @ lz / (2.0 * p.inertia)).tocsr(), space, hermitian=True)


def gibbs_state(H, beta):
    """exp(-beta H) / Z as a dense QOperator, via the spectrum of H."""
    h = H.toarray() if isinstance(H, QOperator) else np.asarray(H)
    w, v = la.eigh(h)
    p = np.exp(-beta * (w - w.min()))
    p /= p.sum()
    rho = (v * p) @ v.conj().T
    rho = 0.5 * (rho + rho.conj().T)
    if isinstance(H, QOperator):
        return QOperator(rho, H.space, H.dims)
    return QOperator(rho)


def product_gibbs(p, space=None):
    """Qubits at beta1/beta2 and rotor at beta_r, each with its free Hamiltonian."""
    space = space or p.space()
    q1 = _qubit_gibbs(p.beta1, p.B1)
    q2 = _qubit_gibbs(p.beta2, p.B2)
    ladder = space.ladder.astype(float)
    w = np.exp(-p.beta_r * (ladder ** 2 - np.min(ladder ** 2)) / (2 * p.inertia))
    rot = np.diag(w / w.sum())
    return QOperator(np.kron(np.kron(q1, q2), rot).astype(complex), space)


def _qubit_gibbs(beta, B):
    # excited population n / (2n + 1)
    n = thermal_occupation(beta, B)
    pe = n / (2 * n + 1)
    return np.diag([pe, 1 - pe])
