"""Command-line driver: JSON config in, CSV plus a metadata sidecar out.

Exit codes: 0 success, 2 bad usage or configuration, 3 numerical failure.
"""

import argparse
from concurrent.futures import ThreadPoolExecutor
import csv
from dataclasses import asdict, dataclass, field
from importlib import resources
import json
import logging
import os
import sys

import numpy as np

from .collision import CollisionConfig, CollisionError, build_channel, run_collisions
from .dynamics import SteadyStateError, StiffnessError, evolve, steady_state
from .gme import EigensolverError, assemble_global_liouvillian
from .liouvillian import assemble_local_liouvillian
from .model import Params, ParamsError, product_gibbs
from .operators import QOperator, angular_momentum, embed_qubit_op, expect, partial_trace
from .rectify import sweep_chi, worker_count
from .thermo import (
    heat_flows_local, rotor_powers, subsystem_ergotropies, thermo_report, work_flows_local,
)

log = logging.getLogger(__name__)

FLOAT_FMT = "%.11e"
COMMANDS = ("steady", "evolve", "sweep", "rectify", "rectify-angular", "ergotropy",
            "collision-verify", "converge")
# command-specific blocks allowed in a config file, with their keys
BLOCKS = {
    "sweep": {"param", "from", "to", "points", "model"},
    "ergotropy": {"param", "from", "to", "points", "model"},
    "evolve": {"t_end", "points", "method", "model", "spacing"},
    "steady": {"model"},
    "rectify": {"grid", "chi_max", "alphas", "model"},
    "collision": {"taus", "t_end", "l_min", "l_max"},
    "converge": {"widen", "model", "t_track"},
}
NUMERICAL_ERRORS = (SteadyStateError, StiffnessError, EigensolverError, CollisionError,
                    np.linalg.LinAlgError, ArithmeticError)


class ConfigError(ValueError):
    """Malformed configuration or command options."""


def load_config(path):
    """Params and command blocks from a JSON file; unknown keys are rejected.

    A bare name such as ``fig2.json`` that is not a file on disk is looked up
    among the bundled configs.
    """
    try:
        if not os.path.exists(path):
            bundled = resources.files("rotormill").joinpath("configs", os.path.basename(path))
            if os.path.basename(path) == str(path) and bundled.is_file():
                return parse_config(json.loads(bundled.read_text()))
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(data)


def parse_config(data):
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    blocks = {}
    params = {}
    for key, value in data.items():
        if key in BLOCKS:
            if not isinstance(value, dict):
                raise ConfigError(f"block {key!r} must be an object")
            unknown = set(value) - BLOCKS[key]
            if unknown:
                raise ConfigError(f"unknown keys in block {key!r}: {sorted(unknown)}")
            blocks[key] = value
        else:
            params[key] = value
    try:
        p = Params.from_dict(params)
    except (ParamsError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    return p, blocks


def apply_overrides(p, items):
    """Apply ``KEY=VALUE`` strings; values are parsed as JSON when possible."""
    if not items:
        return p
    data = p.to_dict()
    for item in items:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError(f"override {item!r} is not KEY=VALUE")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        data[key.strip()] = value
    try:
        return Params.from_dict(data)
    except (ParamsError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return FLOAT_FMT % v
    return str(v)


def write_csv(path, header, rows, meta):
    """CSV with a header row, plus ``<path>.meta.json``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(row[h]) for h in header])
    with open(str(path) + ".meta.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True, default=_json_default)


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def generator(p, model="local"):
    if model == "local":
        return assemble_local_liouvillian(p)
    if model == "global":
        return assemble_global_liouvillian(p)
    raise ConfigError(f"model must be 'local' or 'global', got {model!r}")


def with_param(p, name, value):
    """Params with ``name`` set; ``beta2_over_beta1`` sets beta2 = value * beta1."""
    if name == "beta2_over_beta1":
        return p.replace(beta2=value * p.beta1)
    if name in ("lambda", "lam"):
        return p.replace(lam=value)
    if name in ("l_min", "l_max"):
        return p.replace(**{name: int(value)})
    if name not in Params.__dataclass_fields__:
        raise ConfigError(f"unknown sweep parameter {name!r}")
    return p.replace(**{name: value})


def steady_row(p, model="local"):
    """Steady-state thermodynamics and ergotropies at ``p``."""
    gen = generator(p, model)
    rho = steady_state(gen, tol=p.steady_tol)
    rep = thermo_report(rho, gen)
    erg = subsystem_ergotropies(rho, p, gen.space)
    return {
        "beta2_over_beta1": p.beta2 / p.beta1,
        "q1": rep.q1, "q2": rep.q2, "qr": rep.qr, "w_q": rep.w_q, "w_r": rep.w_r,
        "u_dot": rep.u_dot, "first_law_residual": rep.first_law_residual,
        "classification": rep.classification, "efficiency": rep.efficiency,
        "cop": rep.cop, "eta_carnot": rep.carnot_efficiency, "cop_carnot": rep.carnot_cop,
        "erg_total": erg.total, "erg_qubits": erg.two_qubits, "erg_rotor": erg.rotor,
        "erg_qubit1": erg.qubit1, "erg_qubit2": erg.qubit2,
        "lz": expect(angular_momentum(gen.space), rho).real,
    }


SWEEP_COLUMNS = ["q1", "q2", "qr", "w_q", "w_r", "classification", "efficiency", "cop",
                 "eta_carnot", "cop_carnot", "erg_total", "erg_qubits", "erg_rotor"]
ERGOTROPY_COLUMNS = ["erg_total", "erg_qubits", "erg_rotor", "erg_qubit1", "erg_qubit2"]


def sweep(p, param, values, model="local", workers=None):
    """Steady-state rows over ``values`` of ``param``, in input order."""
    values = [float(v) for v in values]

    def one(v):
        row = steady_row(with_param(p, param, v), model)
        row[param] = v
        return row

    n = workers or worker_count()
    if n == 1 or len(values) < 2:
        return [one(v) for v in values]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(one, values))


# -- truncation report ------------------------------------------------------

@dataclass
class ConvergenceReport:
    l_min: int
    l_max: int
    ladder: list
    populations: list
    leak: float
    mode: int
    mode_interior: bool
    drift: dict
    converged: bool
    reason: str = ""
    mode_track: list = field(default_factory=list)


def rotor_populations(rho):
    return np.real(np.diag(partial_trace(rho, ["rotor"]).toarray()))


def boundary_leak(pops):
    """Population on the two outermost levels at each end of the ladder."""
    pops = np.asarray(pops)
    return float(pops[:2].sum() + pops[-2:].sum())


def track_rotor_mode(p, t_end=1e5, points=25, model="local"):
    """Most populated l along the evolution from the product Gibbs state.

    Returns ``([(time, l), ...], final_state)`` on a logarithmic time grid.
    """
    gen = generator(p, model)
    times = np.r_[0.0, np.logspace(0, np.log10(t_end), points - 1)]
    traj = evolve(gen, product_gibbs(p, gen.space), t_end, t_eval=times, method="exact")
    ladder = gen.space.ladder
    track = [(float(t), int(ladder[np.argmax(rotor_populations(r))])) for t, r in traj]
    return track, traj.states[-1]


def converge(p, widen_step=10, model="local", t_track=1e5, leak_tol=1e-6, drift_tol=1e-4):
    """Truncation check: boundary populations and drift under a wider ladder.

    Without a load (gamma = 0) there is no steady state on an unbounded
    ladder; the report is then non-convergent and carries the evolution of
    the most populated level instead.
    """
    space = p.space()
    ladder = space.ladder
    if p.gamma == 0:
        track, rho = track_rotor_mode(p, t_track, model=model)
        hit = any(m >= p.l_max - 1 or m <= p.l_min + 1 for _, m in track)
        pops = rotor_populations(rho)
        mode = int(ladder[np.argmax(pops)])
        reason = ("no dissipative load; most populated level reached the ladder edge"
                  if hit else "no dissipative load; no steady state on an unbounded ladder")
        return ConvergenceReport(p.l_min, p.l_max, ladder.tolist(), pops.tolist(),
                                 boundary_leak(pops), mode, p.l_min + 1 < mode < p.l_max - 1,
                                 {}, False, reason, track)

    def observables(q):
        gen = generator(q, model)
        rho = steady_state(gen, tol=q.steady_tol)
        if model == "local":
            q1, q2, _ = heat_flows_local(rho, gen)
        else:
            rep = thermo_report(rho, gen)
            q1, q2 = rep.q1, rep.q2
        return rho, {"q1": q1, "q2": q2, "lz": expect(angular_momentum(gen.space), rho).real}

    rho, obs = observables(p)
    wide = p.replace(l_min=p.l_min - widen_step, l_max=p.l_max + widen_step)
    _, obs_w = observables(wide)
    drift = {k: abs(obs_w[k] - obs[k]) / max(abs(obs_w[k]), 1e-300) for k in obs}
    pops = rotor_populations(rho)
    leak = boundary_leak(pops)
    mode = int(ladder[np.argmax(pops)])
    interior = p.l_min + 1 < mode < p.l_max - 1
    ok = leak < leak_tol and all(v < drift_tol for v in drift.values())
    reason = "" if ok else ("boundary leak too large" if leak >= leak_tol
                            else "observables move when the ladder is widened")
    return ConvergenceReport(p.l_min, p.l_max, ladder.tolist(), pops.tolist(), leak, mode,
                             interior, drift, ok, reason)


# -- collision-model check ---------------------------------------------------

def collision_verify(p, taus=(0.1, 0.05, 0.025), t_end=1.0, rho0=None):
    """Compare collision trajectories with the local master equation.

    Returns one row per tau with the sup-norm deviation of <s1z>, <s2z> and
    <L_z> from the exact LME propagation, and the largest deviation of the
    per-collision heat and work rates from the LME currents (evaluated as
    the average over the collision's end points), relative to the largest
    LME current.  Empirical orders from a log-log fit are in ``orders``.
    """
    space = p.space()
    gen = assemble_local_liouvillian(p, space)
    if rho0 is None:
        d = space.dim
        r = np.zeros((d, d), dtype=complex)
        i = space.index(1, 1, 0) if 0 in space.ladder else space.index(1, 1, space.l_min)
        r[i, i] = 1.0
        rho0 = QOperator(r, space)
    obs = {"s1z": embed_qubit_op(1, "z", space), "s2z": embed_qubit_op(2, "z", space),
           "lz": angular_momentum(space)}
    rows = []
    for tau in taus:
        cfg = CollisionConfig(tau=tau, steps=int(round(t_end / tau)))
        channel = build_channel(p, cfg, space)
        traj = run_collisions(rho0, cfg, p, space, channel)
        ref = evolve(gen, rho0, traj.times[-1], t_eval=traj.times, method="exact")
        row = {"tau": tau, "n_fock1": channel.n_fock[0], "n_fock2": channel.n_fock[1],
               "trace_drift": traj.trace_drift}
        for name, op in obs.items():
            row["err_" + name] = float(np.max(np.abs(traj.expect(op) - ref.expect(op))))
        lme = []
        for rho in traj.states:
            q1, q2, _ = heat_flows_local(rho, gen)
            w_q, _ = work_flows_local(rho, gen)
            lme.append((q1, q2, w_q))
        lme = np.array(lme)
        mid = 0.5 * (lme[1:] + lme[:-1])
        for j, name in enumerate(("q1", "q2", "w")):
            got = getattr(traj, name + "_rate")[1:]
            row["rate_err_" + name] = float(np.max(np.abs(got - mid[:, j]))
                                            / np.max(np.abs(mid[:, j])))
        rows.append(row)
    orders = {}
    if len(taus) > 1:
        lt = np.log(np.asarray(taus, dtype=float))
        for name in obs:
            errs = np.array([r["err_" + name] for r in rows])
            orders[name] = float(np.polyfit(lt, np.log(errs), 1)[0])
    return rows, orders


# -- command handlers --------------------------------------------------------

def _meta(args, p, **extra):
    opts = {k: v for k, v in vars(args).items() if k not in ("func",)}
    return {"command": args.command, "params": p.to_dict(), "options": opts, **extra}


def _opt(args, blocks, block, name, default):
    v = getattr(args, name, None)
    if v is not None:
        return v
    return blocks.get(block, {}).get(name, default)


def cmd_steady(args, p, blocks):
    model = _opt(args, blocks, "steady", "model", "local")
    row = steady_row(p, model)
    header = ["beta2_over_beta1", "q1", "q2", "qr", "w_q", "w_r", "u_dot",
              "first_law_residual", "classification", "efficiency", "cop", "eta_carnot",
              "cop_carnot", "lz"]
    write_csv(args.out, header, [row], _meta(args, p, model=model))


def _grid(args, blocks, block):
    start = float(_opt(args, blocks, block, "from", 0.05))
    stop = float(_opt(args, blocks, block, "to", 0.89))
    points = int(_opt(args, blocks, block, "points", 85))
    if points < 1:
        raise ConfigError("points must be at least 1")
    return np.linspace(start, stop, points)


def cmd_sweep(args, p, blocks, block="sweep", columns=SWEEP_COLUMNS):
    param = _opt(args, blocks, block, "param", "beta2_over_beta1")
    model = _opt(args, blocks, block, "model", "local")
    values = _grid(args, blocks, block)
    rows = sweep(p, param, values, model)
    write_csv(args.out, [param] + columns, rows, _meta(args, p, model=model, param=param))


def cmd_ergotropy(args, p, blocks):
    cmd_sweep(args, p, blocks, "ergotropy", ERGOTROPY_COLUMNS)


def cmd_evolve(args, p, blocks):
    model = _opt(args, blocks, "evolve", "model", "local")
    t_end = float(_opt(args, blocks, "evolve", "t_end", 1e5))
    points = int(_opt(args, blocks, "evolve", "points", 201))
    method = _opt(args, blocks, "evolve", "method", "exact")
    spacing = _opt(args, blocks, "evolve", "spacing", "linear")
    if spacing == "linear":
        times = np.linspace(0.0, t_end, points)
    elif spacing == "log":
        times = np.r_[0.0, np.logspace(np.log10(t_end) - 6, np.log10(t_end), points - 1)]
    else:
        raise ConfigError(f"spacing must be 'linear' or 'log', got {spacing!r}")
    gen = generator(p, model)
    traj = evolve(gen, product_gibbs(p, gen.space), t_end, tol=p.ode_tol,
                  t_eval=times, method=method)
    rows = []
    for t, rho in traj:
        pw = rotor_powers(rho, gen, t)
        rows.append({"time": t, "w_kin": pw.w_kin, "w_int": pw.w_int, "q_ba": pw.q_ba,
                     "w_net": pw.w_net})
    write_csv(args.out, ["time", "w_kin", "w_int", "q_ba", "w_net"], rows,
              _meta(args, p, model=model, trace_drift=traj.trace_drift))


def _chi_grid(args, blocks):
    n = int(_opt(args, blocks, "rectify", "grid", 101))
    chi_max = float(_opt(args, blocks, "rectify", "chi_max", 0.99))
    if n < 1 or not 0 <= chi_max < 1:
        raise ConfigError("grid must be >= 1 and chi_max in [0, 1)")
    return np.linspace(0.0, chi_max, n)


def _alphas(args, blocks):
    raw = _opt(args, blocks, "rectify", "alphas", "0,0.5,1")
    if isinstance(raw, str):
        try:
            raw = [float(a) for a in raw.split(",") if a.strip()]
        except ValueError as exc:
            raise ConfigError(f"bad alphas {raw!r}") from exc
    alphas = tuple(float(a) for a in raw)
    if any(not 0 <= a <= 1 for a in alphas):
        raise ConfigError("alphas must lie in [0, 1]")
    return alphas


def _rect(args, p, blocks, kind):
    model = _opt(args, blocks, "rectify", "model", "global")
    alphas = _alphas(args, blocks)
    res = sweep_chi(p, _chi_grid(args, blocks), alphas, kind=kind, model=model)
    names = (("q_fwd", "q_swap", "R", "J") if kind == "heat"
             else ("Lz_fwd", "Lz_swap", "R_angular", "J_angular"))
    header = ["chi", *names] + [f"gamma_{a:g}" for a in alphas] + [
        "overflow", "sign_disagreement", "failed"]
    rows = []
    for pt in res.points:
        row = {k: getattr(pt, k) for k in ("chi", *names, "overflow",
                                             "sign_disagreement", "failed")}
        row.update({f"gamma_{a:g}": pt.gammas[a] for a in alphas})
        rows.append(row)
    best = {}
    for a in alphas:
        pt = res.best(a)
        best[f"{a:g}"] = None if pt is None else {
            "chi": pt.chi, names[2]: getattr(pt, names[2]), names[3]: getattr(pt, names[3])}
    failed = sum(pt.failed for pt in res.points)
    write_csv(args.out, header, rows, _meta(args, p, model=model, argmax=best, failed=failed))
    if failed == len(res.points):
        raise SteadyStateError("every sweep point failed")


def cmd_rectify(args, p, blocks):
    _rect(args, p, blocks, "heat")


def cmd_rectify_angular(args, p, blocks):
    _rect(args, p, blocks, "angular")


def cmd_collision_verify(args, p, blocks):
    block = blocks.get("collision", {})
    taus = args.taus if args.taus is not None else block.get("taus", [0.1, 0.05, 0.025])
    if isinstance(taus, str):
        taus = [float(t) for t in taus.split(",")]
    t_end = float(args.t_end if args.t_end is not None else block.get("t_end", 1.0))
    l_min = int(block.get("l_min", -4))
    l_max = int(block.get("l_max", 8))
    q = p.replace(l_min=l_min, l_max=l_max)
    rows, orders = collision_verify(q, tuple(float(t) for t in taus), t_end)
    header = ["tau", "n_fock1", "n_fock2", "err_s1z", "err_s2z", "err_lz",
              "rate_err_q1", "rate_err_q2", "rate_err_w", "trace_drift"]
    write_csv(args.out, header, rows, _meta(args, q, orders=orders))


def cmd_converge(args, p, blocks):
    widen = int(_opt(args, blocks, "converge", "widen", 10))
    model = _opt(args, blocks, "converge", "model", "local")
    t_track = float(_opt(args, blocks, "converge", "t_track", 1e5))
    rep = converge(p, widen, model, t_track)
    rows = [{"l": l, "population": pop} for l, pop in zip(rep.ladder, rep.populations)]
    report = asdict(rep)
    report.pop("populations")
    report.pop("ladder")
    write_csv(args.out, ["l", "population"], rows, _meta(args, p, report=report))
    return rep


HANDLERS = {
    "steady": cmd_steady, "evolve": cmd_evolve, "sweep": cmd_sweep,
    "rectify": cmd_rectify, "rectify-angular": cmd_rectify_angular,
    "ergotropy": cmd_ergotropy, "collision-verify": cmd_collision_verify,
    "converge": cmd_converge,
}


def build_parser():
    ap = argparse.ArgumentParser(prog="rotormill", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True)
        s.add_argument("--out", required=True)
        s.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="KEY=VALUE", help="override a parameter (JSON value)")
        if name in ("steady", "evolve", "sweep", "ergotropy", "rectify", "rectify-angular",
                    "converge"):
            s.add_argument("--model", choices=("local", "global"))
        if name in ("sweep", "ergotropy"):
            s.add_argument("--param")
            s.add_argument("--from", dest="from", type=float)
            s.add_argument("--to", type=float)
            s.add_argument("--points", type=int)
        if name == "evolve":
            s.add_argument("--t-end", dest="t_end", type=float)
            s.add_argument("--points", type=int)
            s.add_argument("--method", choices=("rk45", "dop853", "exact"))
            s.add_argument("--spacing", choices=("linear", "log"))
        if name in ("rectify", "rectify-angular"):
            s.add_argument("--grid", type=int)
            s.add_argument("--chi-max", dest="chi_max", type=float)
            s.add_argument("--alphas")
        if name == "collision-verify":
            s.add_argument("--taus")
            s.add_argument("--t-end", dest="t_end", type=float)
        if name == "converge":
            s.add_argument("--widen", type=int)
            s.add_argument("--t-track", dest="t_track", type=float)
    return ap


def _fail(kind, message, code):
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)
    return code


def run_command(argv=None):
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        p, blocks = load_config(args.config)
        p = apply_overrides(p, args.overrides)
        HANDLERS[args.command](args, p, blocks)
    except (ConfigError, ParamsError) as exc:
        return _fail("config", str(exc), 2)
    except NUMERICAL_ERRORS as exc:
        return _fail("numerical", f"{type(exc).__name__}: {exc}", 3)
    return 0


def main():
    sys.exit(run_command())


if __name__ == "__main__":
    main()
