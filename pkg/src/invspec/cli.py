"""Command-line driver.

Every run writes ``summary.json`` and ``manifest.json`` plus command-specific
CSV fields, tables and PNG figures into one output directory.  Exit codes:
0 success, 2 verification failure, 3 solver failure, 4 configuration error.

    invspec inverse --q0 gaussian_well:depth=50 --lam 40 --p 2 --n 511
    invspec crosscheck --lam 19.7392088 --seed 7 --n 255
    invspec sweep-lambda --config run.json
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import crosscheck as cc
from . import experiments as ex
from . import logistic
from .errors import ConfigurationError, InvSpecError
from .inverse import objective_value, solve_inverse
from .mesh import build_grid, l2_norm, lp_norm, save_field_csv
from .potentials import PotentialDescriptor, make_potential, parse_descriptor
from .spectral import principal_eigenpair

log = logging.getLogger("invspec")

COMMANDS = ("eig", "forward", "inverse", "crosscheck", "sweep-q0", "sweep-lambda", "converge", "multi")

EXIT_OK, EXIT_VERIFY, EXIT_SOLVER, EXIT_CONFIG = 0, 2, 3, 4

OUTPUT_ROOT_ENV = "INVSPEC_OUTPUT_ROOT"


@dataclass
class RunConfig:
    command: str
    dim: int = 1
    extents: list = None
    n: object = 255
    q0: dict = field(default_factory=lambda: {"family": "constant", "value": 0.0})
    lam: float = None
    lam_offset: float = None
    p: float = 2.0
    tol: float = 1e-10
    eig_tol: float = 1e-10
    maxit: int = 60
    seed: int = None
    output: str = None
    plots: bool = True
    # sweep-q0
    direction: dict = None
    deltas: list = field(default_factory=lambda: [0.0, 1e-1, 1e-2, 1e-3, 1e-4])
    # sweep-lambda
    gaps: list = field(default_factory=lambda: [10.0**-k for k in range(7)])
    # converge
    ns: list = field(default_factory=lambda: [127, 255, 511])
    # crosscheck
    starts: int = 5
    start_amplitude: float = 5.0
    agree_tol: float = 1e-3
    al_tol: float = 1e-9
    al_maxit: int = 20000
    # multi
    targets: list = None
    exponent_mode: str = "matched"

    def to_dict(self):
        return dataclasses.asdict(self)

    def grid(self):
        return build_grid(self.dim, self.extents, self.n)


FIELDS = {f.name for f in dataclasses.fields(RunConfig)}
NEEDS_LAMBDA = ("forward", "inverse", "crosscheck", "sweep-q0", "converge")


def _descriptor(value, what):
    if isinstance(value, str):
        return parse_descriptor(value).to_dict()
    if isinstance(value, dict):
        return PotentialDescriptor.from_dict(value).to_dict()
    raise ConfigurationError(f"{what} must be a descriptor string or object")


def parse_config(data):
    """Validate a mapping of settings into a RunConfig with every default filled in.

    A saved ``manifest.json`` (which nests the settings under ``config``) is
    accepted as well.
    """
    if "config" in data and "config_hash" in data:
        data = data["config"]
    unknown = set(data) - FIELDS
    if unknown:
        raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
    if "command" not in data:
        raise ConfigurationError("config needs a 'command'")
    if data["command"] not in COMMANDS:
        raise ConfigurationError(f"unknown command {data['command']!r}; choose from {list(COMMANDS)}")
    cfg = RunConfig(**{k: v for k, v in data.items() if v is not None})
    if cfg.extents is None:
        cfg.extents = [[0.0, 1.0]] * cfg.dim
    cfg.extents = [[float(a), float(b)] for a, b in cfg.extents]
    cfg.n = int(cfg.n) if np.isscalar(cfg.n) else [int(m) for m in cfg.n]
    cfg.grid()
    cfg.q0 = _descriptor(cfg.q0, "q0")
    cfg.p = logistic.check_p(cfg.p, cfg.dim)
    for name in ("tol", "eig_tol", "agree_tol", "al_tol", "start_amplitude"):
        val = float(getattr(cfg, name))
        if not (val > 0 and math.isfinite(val)):
            raise ConfigurationError(f"{name} must be a positive number, got {val}")
        setattr(cfg, name, val)
    for name in ("maxit", "al_maxit", "starts"):
        if int(getattr(cfg, name)) < 1:
            raise ConfigurationError(f"{name} must be at least 1")
    if cfg.lam is not None and cfg.lam_offset is not None:
        raise ConfigurationError("give either lam or lam_offset, not both")
    if cfg.command in NEEDS_LAMBDA and cfg.lam is None and cfg.lam_offset is None:
        raise ConfigurationError(f"{cfg.command} needs lam or lam_offset")
    if cfg.command == "crosscheck" and cfg.seed is None:
        raise ConfigurationError("crosscheck uses random starts and needs an explicit seed")
    if cfg.command == "sweep-q0":
        if cfg.direction is None:
            if cfg.seed is None:
                raise ConfigurationError("the default random sweep direction needs an explicit seed")
            cfg.direction = {"family": "fourier_random", "amplitude": 1.0, "seed": int(cfg.seed)}
        cfg.direction = _descriptor(cfg.direction, "direction")
    ex.gap_schedule(0.0, cfg.gaps)
    ex.check_deltas(cfg.deltas)
    if cfg.command == "multi":
        if not cfg.targets:
            raise ConfigurationError("multi needs targets")
        if cfg.exponent_mode not in ("matched", "literal"):
            raise ConfigurationError("exponent_mode must be 'matched' or 'literal'")
        if any(b <= a for a, b in zip(cfg.targets, cfg.targets[1:])):
            raise ConfigurationError("targets must be strictly increasing")
    return cfg


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def _write_json(path, obj):
    Path(path).write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


class Run:
    """Output directory plus the bookkeeping shared by all commands."""

    def __init__(self, cfg):
        self.cfg = cfg
        # the output location does not change results, so it stays out of the hash
        self.hash = ex.config_hash({k: v for k, v in cfg.to_dict().items() if k != "output"})
        root = Path(os.environ.get(OUTPUT_ROOT_ENV, "invspec-runs"))
        out = Path(cfg.output) if cfg.output else Path(f"{cfg.command}-{self.hash}")
        self.dir = out if out.is_absolute() else root / out
        self.dir.mkdir(parents=True, exist_ok=True)
        self.figures = []

    def path(self, name):
        return self.dir / name

    def manifest(self):
        _write_json(self.path("manifest.json"), {
            "config": self.cfg.to_dict(), "config_hash": self.hash, "version": __version__, "seed": self.cfg.seed,
        })

    def figure(self, fn, name, *args, **kwargs):
        if not self.cfg.plots:
            return
        try:
            fn(self.path(name), *args, **kwargs)
        except ImportError:
            log.warning("matplotlib is not installed; skipping %s", name)
            return
        self.figures.append(name)

    def summary(self, payload):
        payload = {"command": self.cfg.command, "config_hash": self.hash, **payload}
        if self.figures:
            payload["figures"] = sorted(self.figures)
        _write_json(self.path("summary.json"), payload)


def _plotting():
    from . import plotting

    return plotting


def _target(cfg, q0):
    if cfg.lam is not None:
        return float(cfg.lam), None
    pair = principal_eigenpair(q0, tol=cfg.eig_tol)
    return pair.lambda1 + float(cfg.lam_offset), pair


def cmd_eig(cfg, run):
    q = make_potential(cfg.grid(), cfg.q0)
    pair = principal_eigenpair(q, tol=cfg.eig_tol, maxit=max(cfg.maxit, 500))
    save_field_csv(pair.phi1, run.path("phi1.csv"))
    run.figure(_plotting().plot_fields, "phi1.png", {"phi1": pair.phi1}, title=f"lambda1 = {pair.lambda1:.10g}")
    run.summary({
        "grid": q.grid.describe(), "lambda1": pair.lambda1, "eig_iterations": pair.report.iterations,
        "residual": pair.report.residual, "tol_effective": pair.report.tol_effective,
    })
    return EXIT_OK


def cmd_forward(cfg, run):
    q0 = make_potential(cfg.grid(), cfg.q0)
    lam, pair = _target(cfg, q0)
    problem = logistic.LogisticProblem.from_p(q0, lam, cfg.p)
    sol = logistic.solve(problem, tol=cfg.tol, maxit=cfg.maxit, pair=pair)
    save_field_csv(sol.u, run.path("u_hat.csv"))
    run.figure(_plotting().plot_fields, "u_hat.png", {"u": sol.u}, title=f"lambda = {lam:.8g}, gamma = {problem.gamma:.4g}")
    run.summary({
        "grid": q0.grid.describe(), "lambda": lam, "p": problem.p, "gamma": problem.gamma,
        "residual_norm": sol.residual_norm, "tol_effective": sol.tol_effective,
        "newton_iterations": sol.newton_iterations, "method": sol.method, "bracket_gap": sol.bracket_gap,
        "max_u": sol.u.max(), "max_principle_bound": logistic.max_principle_bound(problem),
    })
    return EXIT_OK


def cmd_inverse(cfg, run):
    q0 = make_potential(cfg.grid(), cfg.q0)
    lam, _ = _target(cfg, q0)
    res = solve_inverse(q0, lam, cfg.p, tol=cfg.tol, eig_tol=cfg.eig_tol, maxit=cfg.maxit)
    save_field_csv(res.q_hat, run.path("q_hat.csv"))
    save_field_csv(res.u_hat, run.path("u_hat.csv"))
    plots = _plotting()
    run.figure(plots.plot_fields, "q_hat.png", {"q0": q0, "q_hat": res.q_hat}, title=f"lambda = {lam:.8g}, p = {cfg.p:g}")
    run.figure(plots.plot_fields, "u_hat.png", {"u_hat": res.u_hat})
    run.summary({"grid": q0.grid.describe(), **res.summary()})
    return EXIT_OK if res.verify.passed else EXIT_VERIFY


def cmd_crosscheck(cfg, run):
    grid = cfg.grid()
    q0 = make_potential(grid, cfg.q0)
    lam, _ = _target(cfg, q0)
    ref = solve_inverse(q0, lam, cfg.p, tol=cfg.tol, eig_tol=cfg.eig_tol, maxit=cfg.maxit)
    save_field_csv(ref.q_hat, run.path("q_hat.csv"))
    save_field_csv(ref.u_hat, run.path("u_hat.csv"))
    rows, histories, finals = [], [], []
    status = EXIT_OK
    for k in range(cfg.starts):
        seed = int(cfg.seed) + k
        h = make_potential(grid, {"family": "fourier_random", "amplitude": cfg.start_amplitude, "seed": seed})
        start = cc.feasible_start(q0, lam, h, tol=cfg.eig_tol)
        try:
            st = cc.augmented_lagrangian_minimize(q0, lam, cfg.p, start, tol=cfg.al_tol, maxit=cfg.al_maxit)
            converged = True
        except InvSpecError as exc:
            st = getattr(exc, "state", None)
            if st is None:
                raise
            log.warning("start %d: %s", k, exc)
            converged = False
        dist = lp_norm(st.q - ref.q_hat, cfg.p)
        row = {
            "start": k, "seed": seed, "converged": converged, "iterations": len(st.history) - 1,
            "outer_iterations": st.outer_iterations, "dist_lp": dist, "dist_l2": l2_norm(st.q - ref.q_hat),
            "objective": objective_value(q0, st.q, cfg.p), "objective_gap": objective_value(q0, st.q, cfg.p) - ref.objective,
            "violation": st.violation, "nu_multiplier": cc.multiplier_nu(st, cfg.p) if st.mu_al < 0 else None,
            "stationarity_l1": cc.stationarity_residual(st, q0, cfg.p),
        }
        rows.append(row)
        histories.append(st.history)
        finals.append(st.q)
        cc.write_history_csv(st, run.path("history.csv" if k == 0 else f"history_{k}.csv"))
        if not converged or dist > cfg.agree_tol or row["objective_gap"] < -1e-6 or abs(st.violation) > 1e-6:
            status = EXIT_VERIFY
    pairwise = max((lp_norm(a - b, cfg.p) for i, a in enumerate(finals) for b in finals[i + 1:]), default=0.0)
    table = ex.Table(list(rows[0]), [list(r.values()) for r in rows], meta={"config_hash": run.hash, "seed": cfg.seed})
    table.write_csv(run.path("sweep.csv"))
    plots = _plotting()
    run.figure(plots.plot_history, "history.png", histories, title="augmented Lagrangian runs")
    run.figure(plots.plot_fields, "q_hat.png", {"closed form": ref.q_hat, "optimizer (start 0)": finals[0]})
    run.summary({
        "grid": grid.describe(), "reference": ref.summary(), "starts": rows, "pairwise_max_dist_lp": pairwise,
        "agree_tol": cfg.agree_tol, "agreed": status == EXIT_OK,
    })
    return status


def cmd_sweep_q0(cfg, run):
    grid = cfg.grid()
    lam, _ = _target(cfg, make_potential(grid, cfg.q0))
    g = {"dim": cfg.dim, "extents": cfg.extents, "n": cfg.n}
    spec = ex.SweepSpec(cfg.q0, cfg.direction, tuple(cfg.deltas), lam, cfg.p, g, seed=cfg.seed or 0, tol=cfg.tol)
    table = ex.stability_sweep_q0(spec)
    table.write_csv(run.path("sweep.csv"))
    table.write_json(run.path("sweep.json"))
    table.write_xy(run.path("stability_q_hat.csv"), "delta", "q_hat_dist_lp")
    table.write_xy(run.path("stability_u_hat.csv"), "delta", "u_hat_dist_h1")
    run.figure(_plotting().plot_table, "stability_q0.png", table, "delta", ["q_hat_dist_lp", "u_hat_dist_h1"],
               logx=True, logy=True, title="response to q0 + delta h")
    run.summary({"table": table.to_dict()})
    return EXIT_OK if table.meta["passed"] else EXIT_VERIFY


def cmd_sweep_lambda(cfg, run):
    q0 = make_potential(cfg.grid(), cfg.q0)
    lam1 = principal_eigenpair(q0, tol=cfg.eig_tol).lambda1
    table = ex.stability_sweep_lambda(q0, ex.gap_schedule(lam1, cfg.gaps), cfg.p, tol=cfg.tol, lambda1=lam1)
    table.write_csv(run.path("sweep.csv"))
    table.write_json(run.path("sweep.json"))
    table.write_xy(run.path("bifurcation.csv"), "lambda", "u_hat_l2")
    table.write_xy(run.path("stability_lambda.csv"), "gap", "q_hat_dist_lp")
    plots = _plotting()
    run.figure(plots.plot_table, "bifurcation.png", table, "lambda", ["u_hat_l2"], title="branch of positive solutions")
    run.figure(plots.plot_table, "stability_lambda.png", table, "gap", ["q_hat_dist_lp", "u_hat_l2"],
               logx=True, logy=True, title="lambda -> lambda1(q0)")
    run.summary({"table": table.to_dict()})
    return EXIT_OK if table.meta["passed"] else EXIT_VERIFY


def cmd_converge(cfg, run):
    q0 = make_potential(build_grid(cfg.dim, cfg.extents, cfg.ns[0]), cfg.q0)
    lam, _ = _target(cfg, q0)
    table = ex.convergence_study(cfg.q0, lam, cfg.p, ns=cfg.ns, extents=cfg.extents, dim=cfg.dim, tol=min(cfg.tol, 1e-11))
    table.write_csv(run.path("sweep.csv"))
    table.write_json(run.path("sweep.json"))
    run.figure(_plotting().plot_table, "convergence.png", table, "h", ["lambda1_diff", "u_hat_diff", "q_hat_diff"],
               logx=True, logy=True, title="successive differences")
    run.summary({"table": table.to_dict()})
    return EXIT_OK if min(table.meta["orders"].values()) >= 1.7 else EXIT_VERIFY


def cmd_multi(cfg, run):
    q0 = make_potential(cfg.grid(), cfg.q0)
    prob = ex.MultiEigProblem(q0, tuple(cfg.targets), cfg.p, cfg.exponent_mode)
    out = ex.multi_eigenvalue_solve(prob, tol=cfg.tol, maxit=cfg.maxit, eig_tol=min(cfg.eig_tol, 1e-11))
    q_hat, us = out.pop("q_hat"), out.pop("u")
    save_field_csv(q_hat, run.path("q_hat.csv"))
    for i, u in enumerate(us, 1):
        save_field_csv(u, run.path(f"u_{i}.csv"))
    plots = _plotting()
    run.figure(plots.plot_fields, "q_hat.png", {"q0": q0, "q_hat": q_hat}, title=f"exponent mode: {cfg.exponent_mode}")
    run.figure(plots.plot_fields, "u.png", {f"u_{i}": u for i, u in enumerate(us, 1)})
    run.summary({"grid": q0.grid.describe(), "findings": out})
    return EXIT_OK if out["status"] == "converged" else EXIT_SOLVER


HANDLERS = {
    "eig": cmd_eig, "forward": cmd_forward, "inverse": cmd_inverse, "crosscheck": cmd_crosscheck,
    "sweep-q0": cmd_sweep_q0, "sweep-lambda": cmd_sweep_lambda, "converge": cmd_converge, "multi": cmd_multi,
}


def run(cfg):
    """Execute a validated config; returns the exit status."""
    out = Run(cfg)
    out.manifest()
    return HANDLERS[cfg.command](cfg, out)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _extents(text):
    return [[float(v) for v in part.split(":")] for part in text.split("x")]


def _n(text):
    parts = [int(v) for v in text.split("x")]
    return parts[0] if len(parts) == 1 else parts


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config or a previous manifest.json")
    common.add_argument("--dim", type=int)
    common.add_argument("--extents", type=_extents, help="a:b per axis joined by x, e.g. 0:1x0:1")
    common.add_argument("--n", type=_n, help="interior nodes per axis, e.g. 255 or 63x63")
    common.add_argument("--q0", help="potential descriptor, e.g. gaussian_well:depth=50,width=0.1")
    common.add_argument("--lam", type=float, help="target eigenvalue")
    common.add_argument("--lam-offset", dest="lam_offset", type=float, help="target as lambda1(q0) + offset")
    common.add_argument("--p", type=float)
    common.add_argument("--tol", type=float)
    common.add_argument("--eig-tol", dest="eig_tol", type=float)
    common.add_argument("--maxit", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--out", dest="output", help=f"output directory (relative paths go under ${OUTPUT_ROOT_ENV})")
    common.add_argument("--no-plots", dest="plots", action="store_false", default=None)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="invspec", description="Closest potential with a prescribed principal eigenvalue.")
    parser.add_argument("--version", action="version", version=f"invspec {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("eig", parents=[common], help="principal eigenpair of q0")
    sub.add_parser("forward", parents=[common], help="positive logistic solution")
    sub.add_parser("inverse", parents=[common], help="reconstruct q_hat and verify it")
    s = sub.add_parser("crosscheck", parents=[common], help="direct optimization against the closed form")
    s.add_argument("--starts", type=int)
    s.add_argument("--start-amplitude", dest="start_amplitude", type=float)
    s.add_argument("--agree-tol", dest="agree_tol", type=float)
    s = sub.add_parser("sweep-q0", parents=[common], help="stability under q0 + delta h")
    s.add_argument("--direction")
    s.add_argument("--deltas", type=_floats)
    s = sub.add_parser("sweep-lambda", parents=[common], help="lambda decreasing to lambda1(q0)")
    s.add_argument("--gaps", type=_floats)
    s = sub.add_parser("converge", parents=[common], help="grid convergence study")
    s.add_argument("--ns", type=lambda t: [int(v) for v in t.split(",")])
    s = sub.add_parser("multi", parents=[common], help="coupled multi-eigenvalue system (exploratory)")
    s.add_argument("--targets", type=_floats)
    s.add_argument("--exponent-mode", dest="exponent_mode", choices=["matched", "literal"])
    return parser


def config_from_args(args):
    data = {}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read config {args.config}: {exc}") from exc
        if "config" in data and "config_hash" in data:
            data = dict(data["config"])
        if data.get("command", args.command) != args.command:
            raise ConfigurationError(f"config is for {data['command']!r}, not {args.command!r}")
    flags = {k: v for k, v in vars(args).items() if k not in ("config", "verbose") and v is not None}
    data.update(flags)
    return parse_config(data)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
    except ConfigurationError as exc:
        print(f"invspec: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        status = run(cfg)
    except ConfigurationError as exc:
        print(f"invspec: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvSpecError as exc:
        print(f"invspec: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    if status == EXIT_VERIFY:
        print("invspec: verification failed; see summary.json", file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
