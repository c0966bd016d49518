"""Command-line harness: configuration, eps-sweeps and CSV/JSON output.

Configuration is a flat ``key = value`` file (``#`` starts a comment);
every key can be overridden by the matching flag. Recognized keys::

    T_left, T_right     wall temperatures
    psi_left            "well_prepared" or an expression in mu (see below)
    psi_right           "well_prepared" or an expression in mu
    eps                 comma separated, strictly decreasing, in (0, 1)
    order               expansion order N
    delta               "auto" or a cutoff width
    mesh_bulk           bulk nodes of the physical mesh
    mesh_layer          graded nodes of the Milne mesh
    h_eta               bulk spacing of the Milne mesh
    n_aux               odd node count of the interior auxiliary grid
    quad                Gauss points per half range of mu
    L_eta               Milne truncation length
    tol                 nonlinear tolerance
    tau                 "auto" or the spectral weight rate
    jobs                concurrent eps points
    out                 output directory
    no_layer            true/false: headline errors without the layer corrector
    dump_kinetic        true/false: write every ordinate in solution CSVs

Inflow expressions use ``mu``, numbers, ``+ - * /``, non-negative integer
powers and ``exp(...)``; for instance ``1 + 0.5*mu`` or ``2*exp(-mu)``.

Exit codes: 0 success, 2 invalid configuration, 3 solver failure.
"""

from __future__ import annotations

import argparse
import ast
import csv
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields

import numpy as np

from .elliptic import DirichletBC
from .errors import InvalidArgumentError, RadDiffError, SolverFailure
from .expansion import (
    N_MAX,
    CutoffSpec,
    assemble_composite,
    auto_delta,
    composite_mesh,
    construct,
    evaluate_residuals,
)
from .fullsolver import error_norms, solve_contraction, solve_picard, write_solution_csv
from .mesh import gauss_quadrature
from .milne import EXACT, MilneDiscretization, milne_mesh, solve_nonlinear_milne
from .spectral import check_coercivity, check_spectral, tau_default
from .transport import InflowData

log = logging.getLogger("raddiff")

SCHEMA_VERSION = 1
EXIT_OK, EXIT_INVALID, EXIT_SOLVER = 0, 2, 3
WELL_PREPARED = "well_prepared"
EXACT_FLOOR = 1e-9

SWEEP_COLUMNS = [
    "eps", "status", "method", "iterations", "delta",
    "sup_T", "sup_psi", "L2_T", "L2_psi",
    "sup_T_no_layer", "sup_psi_no_layer", "L2_T_no_layer", "L2_psi_no_layer",
    "R1_sup", "R2_sup", "contraction_factor",
]


# ---------------------------------------------------------------------------
# inflow expressions


_BINOPS = {ast.Add: np.add, ast.Sub: np.subtract, ast.Mult: np.multiply, ast.Div: np.divide}


def _check_expr(node):
    if isinstance(node, ast.Expression):
        return _check_expr(node.body)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
        return
    if isinstance(node, ast.Name) and node.id == "mu":
        return
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.UAdd, ast.USub)):
        return _check_expr(node.operand)
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        _check_expr(node.left)
        return _check_expr(node.right)
    if isinstance(node, ast.BinOp) and isinstance(node.op, ast.Pow):
        e = node.right
        if not (isinstance(e, ast.Constant) and isinstance(e.value, int) and e.value >= 0):
            raise InvalidArgumentError("powers must be non-negative integer literals")
        return _check_expr(node.left)
    if (isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id == "exp"
            and len(node.args) == 1 and not node.keywords):
        return _check_expr(node.args[0])
    raise InvalidArgumentError(f"unsupported element in inflow expression: {ast.dump(node)[:60]}")


def _eval_expr(node, mu):
    if isinstance(node, ast.Expression):
        return _eval_expr(node.body, mu)
    if isinstance(node, ast.Constant):
        return np.full_like(mu, float(node.value))
    if isinstance(node, ast.Name):
        return mu
    if isinstance(node, ast.UnaryOp):
        v = _eval_expr(node.operand, mu)
        return -v if isinstance(node.op, ast.USub) else v
    if isinstance(node, ast.BinOp) and isinstance(node.op, ast.Pow):
        return _eval_expr(node.left, mu) ** int(node.right.value)
    if isinstance(node, ast.BinOp):
        return _BINOPS[type(node.op)](_eval_expr(node.left, mu), _eval_expr(node.right, mu))
    return np.exp(_eval_expr(node.args[0], mu))


def parse_inflow(text):
    """Compile an inflow expression in ``mu`` into a vectorized function."""
    try:
        tree = ast.parse(str(text).strip(), mode="eval")
    except SyntaxError as exc:
        raise InvalidArgumentError(f"cannot parse inflow expression {text!r}: {exc.msg}") from None
    _check_expr(tree)

    def fn(mu):
        mu = np.asarray(mu, dtype=float)
        with np.errstate(all="raise"):
            try:
                return _eval_expr(tree, mu)
            except FloatingPointError as exc:
                raise InvalidArgumentError(f"inflow expression {text!r} is not finite: {exc}") from None

    return fn


# ---------------------------------------------------------------------------
# configuration


def _bool(v):
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise InvalidArgumentError(f"expected a boolean, got {v!r}")


def _eps_list(v):
    if isinstance(v, (list, tuple)):
        return [float(e) for e in v]
    return [float(e) for e in str(v).replace(" ", "").split(",") if e]


@dataclass
class ExperimentConfig:
    """All user-facing parameters of a run."""

    T_left: float = 1.0
    T_right: float = 1.0
    psi_left: str = WELL_PREPARED
    psi_right: str = WELL_PREPARED
    eps: list = field(default_factory=lambda: [0.2, 0.1, 0.05, 0.025])
    order: int = 0
    delta: str = "auto"
    mesh_bulk: int = 401
    mesh_layer: int = 400
    h_eta: float = 0.05
    n_aux: int = 201
    quad: int = 8
    L_eta: float = 60.0
    tol: float = 1e-10
    tau: str = "auto"
    jobs: int = 1
    out: str = "out"
    no_layer: bool = False
    dump_kinetic: bool = False

    _CASTS = {
        "T_left": float, "T_right": float, "psi_left": str, "psi_right": str, "eps": _eps_list,
        "order": int, "delta": str, "mesh_bulk": int, "mesh_layer": int, "h_eta": float, "n_aux": int, "quad": int,
        "L_eta": float, "tol": float, "tau": str, "jobs": int, "out": str, "no_layer": _bool,
        "dump_kinetic": _bool,
    }

    @classmethod
    def from_mapping(cls, values):
        cfg = cls()
        for key, raw in values.items():
            if key not in cls._CASTS:
                raise InvalidArgumentError(f"unknown configuration key {key!r}")
            try:
                setattr(cfg, key, cls._CASTS[key](raw))
            except (TypeError, ValueError) as exc:
                raise InvalidArgumentError(f"bad value for {key}: {raw!r} ({exc})") from None
        cfg.validate()
        return cfg

    def validate(self):
        if not self.T_left > 0 or not self.T_right > 0:
            raise InvalidArgumentError("wall temperatures must be positive")
        if any(not 0 < e < 1 for e in self.eps):
            raise InvalidArgumentError("eps values must lie in (0, 1)")
        if any(b >= a for a, b in zip(self.eps, self.eps[1:])):
            raise InvalidArgumentError("eps values must be strictly decreasing")
        if not 0 <= self.order <= N_MAX:
            raise InvalidArgumentError(f"order must lie in 0..{N_MAX}")
        if self.delta != "auto":
            try:
                if not float(self.delta) > 0:
                    raise ValueError
            except ValueError:
                raise InvalidArgumentError(f"delta must be 'auto' or a positive number, got {self.delta!r}") from None
        if self.tau != "auto":
            try:
                float(self.tau)
            except ValueError:
                raise InvalidArgumentError(f"tau must be 'auto' or a number, got {self.tau!r}") from None
        if self.n_aux < 21 or self.n_aux % 2 == 0:
            raise InvalidArgumentError("n_aux must be odd and at least 21")
        if self.mesh_bulk < 11 or self.mesh_layer < 10 or self.quad < 1 or self.jobs < 1:
            raise InvalidArgumentError("mesh sizes, quadrature size and jobs are too small")
        if not self.L_eta > 0 or not self.h_eta > 0 or not self.tol > 0:
            raise InvalidArgumentError("L_eta, h_eta and tol must be positive")
        for side in ("psi_left", "psi_right"):
            v = getattr(self, side)
            if v != WELL_PREPARED:
                parse_inflow(v)

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


def read_config_file(path):
    """Parse a flat ``key = value`` file into a dict of strings."""
    values = {}
    try:
        fh = open(path)
    except OSError as exc:
        raise InvalidArgumentError(f"cannot read config {path}: {exc.strerror}") from None
    with fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InvalidArgumentError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            values[key] = value
    return values


# ---------------------------------------------------------------------------
# shared setup


class Setup:
    """Quadrature, Milne discretization and inflow data derived from a config."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.quad = gauss_quadrature(cfg.quad)
        self.disc = MilneDiscretization(milne_mesh(cfg.L_eta, cfg.h_eta, cfg.mesh_layer), self.quad)
        left = (lambda mu: np.full_like(mu, cfg.T_left**4)) if cfg.psi_left == WELL_PREPARED \
            else parse_inflow(cfg.psi_left)
        right = (lambda mu: np.full_like(mu, cfg.T_right**4)) if cfg.psi_right == WELL_PREPARED \
            else parse_inflow(cfg.psi_right)
        self.inflow = InflowData.from_function(self.quad, left, right)
        self.left_inflow = InflowData(self.inflow.left)
        self.bc = DirichletBC(cfg.T_left, cfg.T_right)
        self._construction = None

    @property
    def construction(self):
        if self._construction is None:
            self._construction = construct(self.cfg.order, self.cfg.T_left, self.cfg.T_right, self.left_inflow,
                                           disc=self.disc, n_aux=self.cfg.n_aux, tol=self.cfg.tol)
        return self._construction

    def delta(self, eps):
        if self.cfg.delta == "auto":
            c = self.construction
            return auto_delta(eps, self.cfg.order, c.decay_rate, c.L_eta)
        return float(self.cfg.delta)

    def composite(self, eps):
        mesh = composite_mesh(eps, self.disc, n_bulk=self.cfg.mesh_bulk)
        return assemble_composite(self.cfg.order, eps, self.construction, CutoffSpec(self.delta(eps)), mesh)

    def full_solve(self, eps, approx):
        """Contraction iteration, falling back to Picard when it diverges."""
        try:
            return solve_contraction(eps, approx, self.bc, self.inflow, tol=min(1e-11, self.cfg.tol))
        except SolverFailure as exc:
            log.warning("eps=%g: %s; falling back to Picard", eps, exc)
            return solve_picard(eps, self.bc, self.inflow, approx.mesh, self.quad, tol=min(1e-11, self.cfg.tol),
                                T_init=approx.T_a)


def _tag(eps):
    return f"{eps:.6g}"


def _json_value(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, np.generic):
        return v.item()
    return v


def _write_json(path, data):
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True, default=_json_value)
        fh.write("\n")


def fit_slope(eps, values, floor=EXACT_FLOOR):
    """Least-squares log-log slope of ``values`` against ``eps``.

    Returns ``"exact"`` when every value is at or below ``floor`` and
    ``None`` when fewer than three usable points remain.
    """
    e = np.asarray(eps, dtype=float)
    v = np.asarray(values, dtype=float)
    ok = np.isfinite(v)
    if np.count_nonzero(ok) < 3:
        return None
    if np.all(v[ok] <= floor):
        return EXACT
    ok &= v > 0
    if np.count_nonzero(ok) < 3:
        return None
    return float(np.polyfit(np.log(e[ok]), np.log(v[ok]), 1)[0])


# ---------------------------------------------------------------------------
# subcommands


def cmd_milne(cfg: ExperimentConfig):
    """Layer profiles ``milne_k.csv`` and far-field data ``farfield.json``."""
    s = Setup(cfg)
    c = s.construction
    records = []
    for k, m in enumerate(c.milne):
        m.write_csv(os.path.join(cfg.out, f"milne_{k}.csv"))
        T_inf, psi_inf = c.far_field(k)
        records.append({
            "order": k,
            "T_inf": m.T_inf,
            "psi_inf": [float(v) for v in m.psi_inf],
            "relation_defect": m.relation_defect,
            "decay_rate": m.decay_rate,
            "layer_amplitude": float(np.max(np.abs(m.T - m.T_inf))),
            "iterations": m.iterations,
        })
    data = {"schema_version": SCHEMA_VERSION, "L_eta": c.L_eta, "decay_rate_capped": c.decay_rate,
            "orders": records}
    _write_json(os.path.join(cfg.out, "farfield.json"), data)
    return data


def cmd_interior(cfg: ExperimentConfig):
    """Interior terms ``T_0..T_N`` on the auxiliary grid (``interior.csv``)."""
    s = Setup(cfg)
    inter = s.construction.interior
    path = os.path.join(cfg.out, "interior.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x"] + [f"T_{k}" for k in range(inter.order + 1)])
        for i, x in enumerate(inter.x):
            w.writerow([repr(float(x))] + [repr(float(inter.T[k][i])) for k in range(inter.order + 1)])
    return {"path": path, "orders": inter.order + 1}


def cmd_composite(cfg: ExperimentConfig):
    """Composite approximation and its residuals for every eps."""
    s = Setup(cfg)
    out = []
    for eps in cfg.eps:
        approx = s.composite(eps)
        res = evaluate_residuals(approx)
        approx.write_csv(os.path.join(cfg.out, f"composite_eps{_tag(eps)}.csv"), res)
        out.append({"eps": eps, "delta": approx.cutoff.delta, **res.norms})
    data = {"schema_version": SCHEMA_VERSION, "order": cfg.order, "points": out}
    _write_json(os.path.join(cfg.out, "composite.json"), data)
    return data


def cmd_solve(cfg: ExperimentConfig):
    """Full solve for every eps; ``solution_eps*.csv`` and ``solve_eps*.json``."""
    s = Setup(cfg)
    out = []
    for eps in cfg.eps:
        approx = s.composite(eps)
        T, psi, rep = s.full_solve(eps, approx)
        write_solution_csv(os.path.join(cfg.out, f"solution_eps{_tag(eps)}.csv"), approx.mesh, T, psi, s.quad,
                           kinetic=cfg.dump_kinetic)
        rep.write_json(os.path.join(cfg.out, f"solve_eps{_tag(eps)}.json"))
        out.append({"eps": eps, **rep.to_dict()})
    return out


def _sweep_point(s: Setup, eps):
    t0 = time.perf_counter()
    rec = {"eps": eps}
    try:
        approx = s.composite(eps)
        res = evaluate_residuals(approx)
        T, psi, rep = s.full_solve(eps, approx)
    except RadDiffError as exc:
        rec.update(status="failed", reason=str(exc), wall_time=time.perf_counter() - t0)
        return rec
    with_layer = error_norms(T, psi, approx, m=0, with_layer=True)
    no_layer = error_norms(T, psi, approx, m=0, with_layer=False)
    rec.update(status="ok", method=rep.method, iterations=rep.iterations, delta=approx.cutoff.delta,
               contraction_factor=rep.contraction_factor, R1_sup=res.norms["R1_sup"],
               R2_sup=res.norms["R2_sup"], wall_time=time.perf_counter() - t0)
    for k, v in with_layer.items():
        rec[k] = v
    for k, v in no_layer.items():
        rec[k + "_no_layer"] = v
    if s.cfg.dump_kinetic:
        write_solution_csv(os.path.join(s.cfg.out, f"sweep_solution_eps{_tag(eps)}.csv"), approx.mesh, T, psi,
                           s.quad, kinetic=True)
    # per-point record, merged afterwards
    _write_json(os.path.join(s.cfg.out, f"point_eps{_tag(eps)}.json"), rec)
    return rec


def _csv_cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def cmd_sweep(cfg: ExperimentConfig):
    """Error and residual norms over the eps list, with fitted log-log slopes.

    Returns the summary dict; ``summary["ok"]`` is false when fewer than
    three points succeeded.
    """
    if len(cfg.eps) < 3:
        raise InvalidArgumentError("a sweep needs at least three eps values")
    t0 = time.perf_counter()
    s = Setup(cfg)
    s.construction  # shared by all points, built before the workers start
    with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
        records = list(pool.map(lambda e: _sweep_point(s, e), cfg.eps))
    good = [r for r in records if r["status"] == "ok"]
    eps_ok = [r["eps"] for r in good]
    primary = "sup_T_no_layer" if cfg.no_layer else "sup_T"
    slopes = {}
    for key in (primary, "sup_T", "sup_T_no_layer", "sup_psi", "L2_T", "R1_sup", "R2_sup"):
        slopes[key] = fit_slope(eps_ok, [r[key] for r in good])
    with open(os.path.join(cfg.out, "sweep.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for r in records:
            w.writerow([_csv_cell(r.get(c)) for c in SWEEP_COLUMNS])
    summary = {
        "schema_version": SCHEMA_VERSION,
        "config": cfg.to_dict(),
        "error_norm": primary,
        "slope": slopes[primary],
        "slopes": slopes,
        "points": records,
        "failed": [{"eps": r["eps"], "reason": r["reason"]} for r in records if r["status"] != "ok"],
        "ok": len(good) >= 3,
        "wall_time": time.perf_counter() - t0,
    }
    _write_json(os.path.join(cfg.out, "summary.json"), summary)
    return summary


def cmd_spectral(cfg: ExperimentConfig):
    """Spectral check of the order-0 layer (``spectral.json``) and coercivity per eps (``coercivity.json``)."""
    s = Setup(cfg)
    m0 = solve_nonlinear_milne(cfg.T_left, s.left_inflow, disc=s.disc, tol=cfg.tol)
    lam = m0.decay_rate
    tau = tau_default(lam) if cfg.tau == "auto" else float(cfg.tau)
    rep = check_spectral(m0.T, tau, s.disc.mesh, lam=lam)
    rep.write_json(os.path.join(cfg.out, "spectral.json"))
    coer = []
    for eps in cfg.eps:
        coer.append(check_coercivity(s.composite(eps), eps).to_dict())
    _write_json(os.path.join(cfg.out, "coercivity.json"), {"schema_version": SCHEMA_VERSION, "points": coer})
    return {"spectral": rep.to_dict(), "coercivity": coer}


COMMANDS = {
    "milne": cmd_milne,
    "interior": cmd_interior,
    "composite": cmd_composite,
    "solve": cmd_solve,
    "sweep": cmd_sweep,
    "spectral": cmd_spectral,
}


# ---------------------------------------------------------------------------
# entry point


def build_parser():
    p = argparse.ArgumentParser(prog="raddiff", description=__doc__.split("\n\n")[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", metavar="PATH")
    p.add_argument("--eps", metavar="LIST", help="comma separated, strictly decreasing")
    p.add_argument("--order", type=int, metavar="N")
    p.add_argument("--delta", metavar="VALUE|auto")
    p.add_argument("--mesh-bulk", type=int, metavar="N")
    p.add_argument("--mesh-layer", type=int, metavar="N")
    p.add_argument("--n-aux", type=int, metavar="N", help="interior auxiliary grid size (odd)")
    p.add_argument("--quad", type=int, metavar="N", help="Gauss points per half range")
    p.add_argument("--L-eta", type=float, metavar="VALUE")
    p.add_argument("--tol", type=float, metavar="VALUE")
    p.add_argument("--jobs", type=int, metavar="N")
    p.add_argument("--out", metavar="DIR")
    p.add_argument("--T-left", type=float, metavar="VALUE")
    p.add_argument("--T-right", type=float, metavar="VALUE")
    p.add_argument("--psi-left", metavar="EXPR")
    p.add_argument("--psi-right", metavar="EXPR")
    p.add_argument("--tau", metavar="VALUE|auto")
    p.add_argument("--no-layer", action="store_true", default=None)
    p.add_argument("--dump-kinetic", action="store_true", default=None)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def config_from_args(args):
    values = read_config_file(args.config) if args.config else {}
    for f in fields(ExperimentConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = v
    return ExperimentConfig.from_mapping(values)


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
        os.makedirs(cfg.out, exist_ok=True)
        result = COMMANDS[args.command](cfg)
    except InvalidArgumentError as exc:
        print(f"raddiff: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except RadDiffError as exc:
        print(f"raddiff: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    if args.command == "sweep" and not result["ok"]:
        print("raddiff: fewer than three eps points succeeded", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
