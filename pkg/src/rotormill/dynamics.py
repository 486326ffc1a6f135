"""Time evolution and steady states of vectorized density matrices.

Every generator built in this package is covariant under the rotor/qubit
charge of :attr:`SpaceSpec.charge`, so the charge-diagonal block of vec(rho)
is an invariant subspace.  When a generator is verified to respect that
block, solves run on it (a few hundred unknowns instead of d^2), which is
what makes long-time propagation and dense null-space checks affordable.
"""

from dataclasses import dataclass, field
import logging
import warnings

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import solve_ivp

from .liouvillian import Generator, Superoperator, unvec, vec
from .operators import QOperator, as_array

log = logging.getLogger(__name__)

DENSE_LIMIT = 4096


class SteadyStateError(RuntimeError):
    """The steady-state solve failed or left a large residual."""


class StiffnessError(RuntimeError):
    """Explicit integration stalled; use :func:`steady_state` or the exact propagator."""


class DegenerateSteadyStateWarning(UserWarning):
    """The generator's null space looks larger than one-dimensional."""


@dataclass
class SteadyInfo:
    residual: float
    gap: float
    null_dim_estimate: int
    method: str
    reduced_size: int


@dataclass
class Trajectory:
    times: np.ndarray
    states: list
    trace_drift: float = 0.0
    info: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.times)

    def __iter__(self):
        return iter(zip(self.times, self.states))

    def expect(self, op):
        from .operators import expect
        return np.array([expect(op, rho).real for rho in self.states])


def _matrix_space(L):
    if isinstance(L, (Generator, Superoperator)):
        return L.matrix.tocsr(), L.space
    return sp.csr_matrix(L), None


def _invariant_sector(M, space, tol=1e-13):
    """Indices of the charge-diagonal block if ``M`` leaves it invariant."""
    if space is None:
        return None
    idx = space.sector
    if len(idx) == M.shape[0]:
        return None
    mask = np.zeros(M.shape[0], dtype=bool)
    mask[idx] = True
    leak = M[~mask][:, idx]
    scale = abs(M).max() if M.nnz else 1.0
    if leak.nnz and abs(leak).max() > tol * scale:
        return None
    return idx


def _trace_row(d, idx=None):
    t = np.zeros(d * d)
    t[np.arange(d) * (d + 1)] = 1.0
    return t if idx is None else t[idx]


def _embed_vec(x, idx, n):
    if idx is None:
        return x
    out = np.zeros(n, dtype=complex)
    out[idx] = x
    return out


def _finish_state(x, d, space):
    rho = unvec(x, d)
    rho = 0.5 * (rho + rho.conj().T)
    rho /= np.trace(rho).real
    return QOperator(rho, space) if space is not None else QOperator(rho)


def steady_state(L, tol=1e-10, method="auto", guess=None, gap_tol=1e-12,
                 return_info=False):
    """Trace-one null vector of the generator ``L``.

    Solves the bordered system (one equation replaced by the trace
    functional) with a sparse LU and one refinement sweep; ``method='svd'``
    takes the smallest right singular vector of the dense matrix instead.
    On the reduced block the two smallest singular values are always
    inspected, and a degeneracy warning is raised when the second one falls
    below ``gap_tol`` times the largest.  In that case the state returned is
    ``guess`` (default: product Gibbs state) projected onto the null space.
    """
    M, space = _matrix_space(L)
    n = M.shape[0]
    d = int(round(np.sqrt(n)))
    idx = _invariant_sector(M, space)
    Ms = M if idx is None else M[idx][:, idx]
    m = Ms.shape[0]
    trace = _trace_row(d, idx)
    norm = spla.norm(Ms, 1) if Ms.nnz else 1.0

    gap = np.nan
    null_dim = 1
    dense = m <= DENSE_LIMIT
    if dense:
        A = Ms.toarray()
        s = la.svd(A, compute_uv=False)
        smax = s[0] if s[0] > 0 else 1.0
        gap = s[-2] / smax if m > 1 else 1.0
        null_dim = int(np.sum(s <= gap_tol * smax))
    if method == "auto":
        method = "lu"
    if dense and gap < gap_tol:
        warnings.warn(
            f"steady state not unique: second singular value {gap:.2e} relative "
            f"(about {null_dim} null directions); projecting the guess state",
            DegenerateSteadyStateWarning, stacklevel=2)
        if guess is None and isinstance(L, Generator):
            from .model import product_gibbs
            guess = product_gibbs(L.params, L.space)
        if guess is None:
            guess = np.eye(d) / d
        g0 = vec(guess)
        g0 = g0 if idx is None else g0[idx]
        x = g0 - la.lstsq(A, A @ g0, lapack_driver="gelsy")[0]
        method = "projected-guess"
    elif method == "svd":
        if not dense:
            raise ValueError("svd method needs a reduced block of at most "
                             f"{DENSE_LIMIT} unknowns, have {m}")
        _, _, vh = la.svd(A)
        x = vh[-1].conj()
        x = x / (trace @ x)
    elif method == "lu":
        x = _bordered_solve(Ms, trace, norm)
    else:
        raise ValueError(f"unknown steady-state method {method!r}")

    full = _embed_vec(x, idx, n)
    rho = _finish_state(full, d, space)
    residual = float(np.linalg.norm(M @ vec(rho), 1))
    if residual > tol * max(norm, 1.0) * max(1, np.sqrt(n)):
        raise SteadyStateError(
            f"steady-state residual {residual:.3e} exceeds tolerance {tol:.1e} "
            f"(||L||_1 = {norm:.3e}, method {method})")
    info = SteadyInfo(residual, float(gap), null_dim, method, m)
    return (rho, info) if return_info else rho


def _bordered_solve(Ms, trace, norm):
    m = Ms.shape[0]
    # replace the equation with the largest diagonal weight by the trace row
    r = int(np.argmax(trace))
    B = Ms.tolil(copy=True)
    B[r, :] = trace * norm
    B = B.tocsc()
    rhs = np.zeros(m, dtype=complex)
    rhs[r] = norm
    try:
        lu = spla.splu(B)
    except RuntimeError as exc:
        raise SteadyStateError(f"bordered system is singular: {exc}") from exc
    x = lu.solve(rhs)
    # one refinement sweep
    x = x + lu.solve(rhs - B @ x)
    return x


def _reduction(M, space, v0):
    idx = _invariant_sector(M, space)
    if idx is None:
        return M, None
    mask = np.ones(M.shape[0], dtype=bool)
    mask[idx] = False
    if np.any(np.abs(v0[mask]) > 1e-14 * max(np.abs(v0).max(), 1e-300)):
        return M, None
    return M[idx][:, idx], idx


def evolve(L, rho0, t_end, tol=1e-9, t_eval=None, points=101, method="rk45",
           max_steps=2_000_000):
    """Integrate d rho / dt = L rho from 0 to ``t_end``.

    ``method='rk45'`` (default) or ``'dop853'`` use an adaptive embedded
    explicit Runge-Kutta pair with relative and absolute local error
    ``tol``; ``method='exact'`` applies exp(dt L) on the emission grid and
    suits long, stiff horizons.  Emitted states are re-Hermitized and the
    cumulative trace drift is recorded in ``trajectory.trace_drift``.
    """
    M, space = _matrix_space(L)
    n = M.shape[0]
    d = int(round(np.sqrt(n)))
    v0 = vec(rho0).astype(complex)
    if t_eval is None:
        t_eval = np.linspace(0.0, t_end, points)
    t_eval = np.asarray(t_eval, dtype=float)
    if t_end == 0 or len(t_eval) == 0:
        return Trajectory(np.array([0.0]), [_wrap_state(unvec(v0, d), space)])
    Mr, idx = _reduction(M, space, v0)
    x0 = v0 if idx is None else v0[idx]

    if method == "exact":
        ys = _exact_propagate(Mr, x0, t_eval)
    elif method in ("rk45", "dop853"):
        solver = "RK45" if method == "rk45" else "DOP853"
        nfev = [0]

        def rhs(t, y):
            nfev[0] += 1
            if nfev[0] > max_steps:
                raise StiffnessError(
                    f"more than {max_steps} right-hand-side evaluations before "
                    f"t={t:.3g}; the problem is too stiff for explicit steps, "
                    "use steady_state() or method='exact'")
            return Mr @ y

        sol = solve_ivp(rhs, (0.0, float(t_end)), x0, method=solver,
                        t_eval=t_eval, rtol=tol, atol=tol)
        if sol.status != 0:
            raise StiffnessError(f"integration failed ({sol.message}); "
                                 "use steady_state() or method='exact'")
        ys = sol.y.T
    else:
        raise ValueError(f"unknown method {method!r}")

    states = []
    drift = 0.0
    for y in ys:
        rho = unvec(_embed_vec(y, idx, n), d)
        rho = 0.5 * (rho + rho.conj().T)
        drift = max(drift, abs(np.trace(rho).real - np.trace(unvec(v0, d)).real))
        states.append(_wrap_state(rho, space))
    if drift > 1e-8:
        log.warning("trace drift %.2e during evolution", drift)
    return Trajectory(t_eval, states, drift, {"method": method, "reduced": idx is not None})


def _wrap_state(rho, space):
    return QOperator(rho, space) if space is not None else QOperator(rho)


def _exact_propagate(M, x0, t_eval):
    out = []
    m = M.shape[0]
    t_prev = 0.0
    x = x0.copy()
    cache = {}
    for t in t_eval:
        dt = float(t - t_prev)
        if dt < 0:
            raise ValueError("t_eval must be non-decreasing")
        if dt > 0:
            if m <= DENSE_LIMIT:
                key = round(dt, 12)
                if key not in cache:
                    cache[key] = la.expm(M.toarray() * dt)
                x = cache[key] @ x
            else:
                x = spla.expm_multiply(M * dt, x)
        out.append(x.copy())
        t_prev = t
    return np.array(out)


def trace_distance(a, b):
    diff = as_array(a) - as_array(b)
    diff = 0.5 * (diff + diff.conj().T)
    return 0.5 * float(np.sum(np.abs(la.eigvalsh(diff))))
