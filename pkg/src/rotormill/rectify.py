"""Heat and angular-momentum rectification under a temperature swap.

The forward heat flow is the current of bath 2 at the given parameters and
the swapped one is the current of bath 1 after exchanging beta1 and beta2
(couplings, fields and the load are untouched).  Both are measured as the
rate of change of system energy attributable to that bath.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import logging
import math
import os

import numpy as np

from .dynamics import steady_state
from .gme import assemble_global_liouvillian
from .liouvillian import assemble_local_liouvillian
from .operators import angular_momentum, expect
from .thermo import heat_flows_global, heat_flows_local

log = logging.getLogger(__name__)

DEFAULT_GRID = np.linspace(0.0, 0.99, 101)


@dataclass
class RectPoint:
    chi: float
    q_fwd: float
    q_swap: float
    R: float
    J: float
    gammas: dict = field(default_factory=dict)
    overflow: bool = False
    sign_disagreement: bool = False
    failed: bool = False
    error: str = ""


@dataclass
class AngularRectPoint:
    chi: float
    Lz_fwd: float
    Lz_swap: float
    R_angular: float
    J_angular: float
    gammas: dict = field(default_factory=dict)
    overflow: bool = False
    sign_disagreement: bool = False
    failed: bool = False
    error: str = ""

    @property
    def R(self):
        return self.R_angular

    @property
    def J(self):
        return self.J_angular


@dataclass
class SweepResult:
    points: list
    argmax: dict  # alpha -> index into points (None if every point failed)

    def best(self, alpha):
        i = self.argmax.get(alpha)
        return None if i is None else self.points[i]


def swap_temperatures(p):
    """Same device with the two qubit-bath temperatures exchanged."""
    return p.replace(beta1=p.beta2, beta2=p.beta1)


def gamma_alpha(R, J, alpha):
    """alpha R + (1 - alpha) J."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha!r}")
    return alpha * R + (1.0 - alpha) * J


def rectification_ratio(fwd, swap):
    """(|fwd - swap| / |fwd + swap|, overflow flag, sign-disagreement flag).

    A denominator below 1e-12 max(|fwd|, |swap|, 1) is reported as +inf with
    the overflow flag set.
    """
    eps = 1e-12 * max(abs(fwd), abs(swap), 1.0)
    denom = abs(fwd + swap)
    disagree = fwd * swap < 0
    if denom < eps:
        return math.inf, True, disagree
    return abs(fwd - swap) / denom, False, disagree


def _generator(p, model):
    if model == "global":
        return assemble_global_liouvillian(p)
    if model == "local":
        return assemble_local_liouvillian(p)
    raise ValueError(f"model must be 'global' or 'local', got {model!r}")


def _steady(p, model):
    gen = _generator(p, model)
    return gen, steady_state(gen, tol=p.steady_tol)


def _observables(p, model):
    """(q1, q2, <L_z>) in the steady state of ``p``."""
    gen, rho = _steady(p, model)
    flows = heat_flows_global if model == "global" else heat_flows_local
    q1, q2, _ = flows(rho, gen)
    return q1, q2, expect(angular_momentum(gen.space), rho).real


def _heat_point(p, fwd, swap, alphas):
    q_fwd, q_swap = fwd[1], swap[0]
    R, overflow, disagree = rectification_ratio(q_fwd, q_swap)
    J = max(abs(q_fwd), abs(q_swap)) / (p.lam * p.g ** 2) if p.lam * p.g > 0 else math.inf
    gammas = {a: gamma_alpha(R, J, a) for a in alphas}
    return RectPoint(p.chi, q_fwd, q_swap, R, J, gammas, overflow, disagree)


def _angular_point(p, fwd, swap, alphas):
    lz_fwd, lz_swap = fwd[2], swap[2]
    R, overflow, disagree = rectification_ratio(lz_fwd, lz_swap)
    J = max(abs(lz_fwd), abs(lz_swap))
    gammas = {a: gamma_alpha(R, J, a) for a in alphas}
    return AngularRectPoint(p.chi, lz_fwd, lz_swap, R, J, gammas, overflow, disagree)


def rect_points(p, model="global", alphas=(0.0, 0.5, 1.0)):
    """Heat and angular points from one pair of steady-state solves."""
    fwd = _observables(p, model)
    swap = _observables(swap_temperatures(p), model)
    return _heat_point(p, fwd, swap, alphas), _angular_point(p, fwd, swap, alphas)


def heat_rect_point(p, model="global", alphas=(0.0, 0.5, 1.0)):
    """q_fwd = Q2 at ``p``, q_swap = Q1 with beta1 and beta2 exchanged."""
    return rect_points(p, model, alphas)[0]


def angular_rect_point(p, model="global", alphas=(0.0, 0.5, 1.0)):
    """Steady-state <L_z> at ``p`` and with beta1 and beta2 exchanged."""
    return rect_points(p, model, alphas)[1]


def worker_count():
    env = os.environ.get("QM_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ValueError(f"QM_THREADS must be an integer, got {env!r}") from None
        return max(n, 1)
    return os.cpu_count() or 1


def argmax_by_alpha(points, alphas):
    """Index of the largest Gamma_alpha per alpha; ties go to the smallest chi."""
    out = {}
    for a in alphas:
        best = None
        for i, pt in enumerate(points):
            if pt.failed:
                continue
            val = pt.gammas[a]
            if best is None:
                best = i
                continue
            cur = points[best].gammas[a]
            if val > cur or (val == cur and pt.chi < points[best].chi):
                best = i
        out[a] = best
    return out


def sweep_chi(p, grid=None, alphas=(0.0, 0.5, 1.0), kind="heat", model="global",
              workers=None):
    """Rectification figures of merit over a chi grid.

    ``kind`` is ``'heat'``, ``'angular'`` or ``'both'`` (a pair of results
    sharing the same solves).  Points are solved independently, in a thread
    pool of ``workers`` or QM_THREADS threads, and returned in grid order; a
    point whose solve fails is kept with ``failed=True``.
    """
    grid = DEFAULT_GRID if grid is None else np.asarray(grid, dtype=float)
    if np.any(grid < 0) or np.any(grid >= 1):
        raise ValueError("chi grid must lie in [0, 1)")
    if kind not in ("heat", "angular", "both"):
        raise ValueError(f"kind must be 'heat', 'angular' or 'both', got {kind!r}")
    alphas = tuple(float(a) for a in alphas)
    for a in alphas:
        gamma_alpha(0.0, 0.0, a)

    def failed(cls, chi, exc):
        nan = math.nan
        return cls(chi, nan, nan, nan, nan, {a: nan for a in alphas},
                   failed=True, error=str(exc))

    def solve(chi):
        chi = float(chi)
        try:
            return rect_points(p.replace(chi=chi), model, alphas)
        except (RuntimeError, ValueError, np.linalg.LinAlgError) as exc:
            log.warning("chi=%.6g failed: %s", chi, exc)
            return failed(RectPoint, chi, exc), failed(AngularRectPoint, chi, exc)

    n = workers or worker_count()
    if n == 1 or len(grid) == 1:
        pairs = [solve(c) for c in grid]
    else:
        with ThreadPoolExecutor(max_workers=n) as pool:
            pairs = list(pool.map(solve, grid))
    heat = [h for h, _ in pairs]
    ang = [a for _, a in pairs]
    results = (SweepResult(heat, argmax_by_alpha(heat, alphas)),
               SweepResult(ang, argmax_by_alpha(ang, alphas)))
    return {"heat": results[0], "angular": results[1], "both": results}[kind]


def is_loop(points):
    """True when J peaks strictly inside the sweep and R is still rising there.

    That is the shape where the parametric (R, J) curve turns back on itself:
    J climbs and falls while R keeps growing past the J maximum.
    """
    good = [pt for pt in points if not pt.failed]
    J = np.array([pt.J for pt in good])
    R = np.array([pt.R for pt in good])
    if len(J) < 3:
        return False
    k = int(np.argmax(J))
    if k == 0 or k == len(J) - 1:
        return False
    return bool(R[k + 1] > R[k] and R.max() > R[k] and R[-1] < R.max())


def local_maxima(values):
    """Indices of strict interior local maxima of a 1-D sequence."""
    v = np.asarray(values, dtype=float)
    return [i for i in range(1, len(v) - 1) if v[i] > v[i - 1] and v[i] > v[i + 1]]
