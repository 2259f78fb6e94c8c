"""Command-line front end.

Usage::

    cirbubble check    --config params.cfg
    cirbubble price    --config params.cfg --out curve.csv
    cirbubble solve    --config params.cfg --sigma2 0.03 --out curve.csv
    cirbubble iterate  --config params.cfg --k_max 300
    cirbubble simulate --config params.cfg --d0 0.02 --paths 20000
    cirbubble figures  --out figures/ --plot-script

Exit codes: 0 success, 1 I/O failure, 2 invalid configuration or
parameter regime, 3 numerical failure (non-convergence or a failed
post-hoc check).
"""
import argparse
import io
import math
import os
import sys
from dataclasses import dataclass, replace

import numpy as np

from . import closed_form, hjb, mc
from .exceptions import CirBubbleError, DomainError, RegimeError
from .market_model import ModelParams, bubble_exists, group_value, intrinsic_value, normalize_params, thresholds

__all__ = ["RunConfig", "ConfigError", "parse_config", "emit_curve", "main", "REFERENCE_SETS"]

EXIT_OK, EXIT_IO, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

MODEL_KEYS = ("kappa1", "kappa2", "theta1", "theta2", "sigma1", "sigma2", "lambda")
_FLOAT_KEYS = MODEL_KEYS + ("d_max", "tol", "horizon", "dt")
_INT_KEYS = ("grid_n", "paths", "seed")
CONFIG_KEYS = _FLOAT_KEYS + _INT_KEYS
CURVE_HEADER = "D,intrinsic,price,bubble,relative"

# the three parameter sets of the reference figures
REFERENCE_SETS = {
    "initial1": dict(kappa1=0.2, kappa2=0.1, theta1=0.04, theta2=0.02, sigma1=0.02, sigma2=0.02, lam=0.02),
    "initial2": dict(kappa1=0.2, kappa2=0.1, theta1=0.015, theta2=0.02, sigma1=0.02, sigma2=0.02, lam=0.02),
    "initial3": dict(kappa1=0.2, kappa2=0.1, theta1=0.04, theta2=0.04, sigma1=0.02, sigma2=0.02, lam=0.02),
}


class ConfigError(DomainError):
    """Malformed or invalid configuration; the message names the key."""


@dataclass(frozen=True)
class RunConfig:
    params: ModelParams | None
    d_max: float | None = None
    grid_n: int = 1001
    tol: float = 1e-8
    horizon: float | None = None
    dt: float = 1e-2
    paths: int = 10_000
    seed: int = 0
    out: str | None = None
    command: str | None = None

    @property
    def swapped(self):
        return self.params is not None and self.params.swapped

    def grid(self):
        """Uniform dividend grid from 0 to ``d_max`` (default from the thresholds)."""
        d_max = self.d_max if self.d_max is not None else hjb.Grid.default_d_max(self.params)
        return np.linspace(0.0, d_max, self.grid_n)


def _parse_value(key, raw):
    text = str(raw).strip()
    try:
        if key in _INT_KEYS:
            value = int(text)
        else:
            value = float(text)
    except ValueError:
        kind = "an integer" if key in _INT_KEYS else "a number"
        raise ConfigError(f"{key}: expected {kind}, got {text!r}") from None
    if key in _FLOAT_KEYS and not math.isfinite(value):
        raise ConfigError(f"{key}: value must be finite, got {text!r}")
    return value


def _read_pairs(text):
    pairs = {}
    for lineno, line in enumerate(io.StringIO(text), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ConfigError(f"{key}: unknown configuration key (line {lineno})")
        if key in pairs:
            raise ConfigError(f"{key}: duplicate key (line {lineno})")
        pairs[key] = value
    return pairs


def parse_config(text=None, overrides=None, out=None, command=None, require_model=True):
    """Build a validated :class:`RunConfig` from ``key=value`` text and overrides.

    Parameters
    ----------
    text : str, optional
        Config file contents: one ``key=value`` per line, ``#`` starts a
        comment.
    overrides : dict, optional
        Values (strings or numbers) that replace those from ``text``,
        typically command-line flags. ``None`` entries are ignored.
    require_model : bool
        If False, the seven model keys may all be absent and
        ``params`` is None.

    Raises
    ------
    ConfigError
        On unknown, duplicate, malformed, missing or out-of-range keys.
    """
    pairs = _read_pairs(text) if text else {}
    for key, value in (overrides or {}).items():
        if key not in CONFIG_KEYS:
            raise ConfigError(f"{key}: unknown configuration key")
        if value is not None:
            pairs[key] = value
    values = {key: _parse_value(key, raw) for key, raw in pairs.items()}

    present = [k for k in MODEL_KEYS if k in values]
    params = None
    if present or require_model:
        missing = [k for k in MODEL_KEYS if k not in values]
        if missing:
            raise ConfigError(f"{missing[0]}: required model parameter is missing")
        for key in MODEL_KEYS:
            if values[key] <= 0:
                raise ConfigError(f"{key}: must be strictly positive, got {values[key]}")
        for i in (1, 2):
            k, th, s = values[f"kappa{i}"], values[f"theta{i}"], values[f"sigma{i}"]
            ratio = 2 * k * th / s**2
            if ratio < 1:
                raise ConfigError(f"sigma{i}: Feller condition fails, 2*kappa{i}*theta{i}/sigma{i}**2 "
                                  f"= {ratio:.6g} < 1")
        params = normalize_params(*(values[k] for k in MODEL_KEYS))

    kwargs = {}
    for key in ("d_max", "tol", "horizon", "dt"):
        if key in values:
            if values[key] <= 0:
                raise ConfigError(f"{key}: must be positive, got {values[key]}")
            kwargs[key] = values[key]
    if "grid_n" in values:
        if values["grid_n"] < 2:
            raise ConfigError(f"grid_n: need at least 2 nodes, got {values['grid_n']}")
        kwargs["grid_n"] = values["grid_n"]
    if "paths" in values:
        if values["paths"] < 1:
            raise ConfigError(f"paths: must be at least 1, got {values['paths']}")
        kwargs["paths"] = values["paths"]
    if "seed" in values:
        if not 0 <= values["seed"] < 2**64:
            raise ConfigError(f"seed: must be a 64-bit unsigned integer, got {values['seed']}")
        kwargs["seed"] = values["seed"]
    return RunConfig(params=params, out=out, command=command, **kwargs)


def format_curve(curve):
    """CSV text of ``curve``: fixed header, 12 significant digits, ``\\n`` endings."""
    if len(curve) == 0:
        raise DomainError("cannot emit an empty curve")
    order = np.argsort(curve.grid, kind="stable")
    cols = (curve.grid, curve.intrinsic, curve.price, curve.bubble, curve.relative)
    lines = [CURVE_HEADER]
    for j in order:
        lines.append(",".join(f"{float(c[j]):.12g}" for c in cols))
    return "\n".join(lines) + "\n"


def emit_curve(curve, destination):
    """Write ``curve`` as CSV to a path or a text stream.

    The text is fully formatted before the file is opened, so a failure
    leaves no partial file behind.
    """
    text = format_curve(curve)
    if hasattr(destination, "write"):
        destination.write(text)
        return
    with open(destination, "w", encoding="ascii", newline="\n") as fh:
        fh.write(text)


def _fmt(value):
    if value is None:
        return "undefined"
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{float(value):.12g}"


def _emit_report(pairs, out):
    text = "".join(f"{k}={_fmt(v)}\n" for k, v in pairs)
    if out:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _note_swap(cfg):
    if cfg.swapped:
        print("note: groups were relabelled so that kappa1 >= kappa2", file=sys.stderr)


def check_report(params):
    """``(key, value)`` pairs of the regime report."""
    th = thresholds(params)
    pairs = [("swapped", params.swapped), ("bubble_exists", bubble_exists(params)),
             ("d_bar", th.d_bar), ("d_tilde", th.d_tilde)]
    E = F = nonneg = ratio = bound = None
    if bubble_exists(params) and params.equal_volatility:
        consts = closed_form.compute_paste_constants(params)
        chk = closed_form.check_e_nonneg(params)
        E, F, nonneg, ratio, bound = consts.E, consts.F, chk.holds, chk.ratio, chk.bound
    pairs += [("E", E), ("F", F), ("E_nonneg", nonneg), ("u_ratio", ratio),
              ("u_ratio_bound", None if bound is None or math.isinf(bound) else bound)]
    return pairs


def _cmd_check(cfg, args):
    _note_swap(cfg)
    _emit_report(check_report(cfg.params), cfg.out)
    return EXIT_OK


def _write_curve(curve, cfg):
    emit_curve(curve, cfg.out if cfg.out else sys.stdout)


def _cmd_price(cfg, args):
    _note_swap(cfg)
    p = cfg.params
    if bubble_exists(p) and not p.equal_volatility:
        raise RegimeError("the closed form needs sigma1 == sigma2 in the bubble regime; use 'solve'")
    _write_curve(closed_form.price_curve(p, cfg.grid()), cfg)
    return EXIT_OK


def _grid_for(cfg):
    d_max = cfg.d_max if cfg.d_max is not None else hjb.Grid.default_d_max(cfg.params)
    grid = hjb.Grid(d_max, cfg.grid_n)
    grid.validate_for(cfg.params)
    return grid


def _finish_solve(report, cfg, what):
    if not report.converged:
        print(f"error: {what} did not converge after {report.iterations} iterations "
              f"(last residual {report.final_residual:.3g})", file=sys.stderr)
        return EXIT_NUMERIC
    _write_curve(report.curve(), cfg)
    return EXIT_OK


def _cmd_solve(cfg, args):
    _note_swap(cfg)
    report = hjb.solve_hjb(cfg.params, _grid_for(cfg), tol=cfg.tol, max_iter=args.max_iter)
    return _finish_solve(report, cfg, "policy iteration")


def _cmd_iterate(cfg, args):
    _note_swap(cfg)
    report = hjb.resale_fixed_point(cfg.params, _grid_for(cfg), horizon=cfg.horizon,
                                    steps=args.steps, k_max=args.k_max, tol=cfg.tol,
                                    keep_iterates=False)
    return _finish_solve(report, cfg, "resale iteration")


def _cmd_simulate(cfg, args):
    _note_swap(cfg)
    p = cfg.params
    d0 = args.d0
    horizon = cfg.horizon if cfg.horizon is not None else 12.0 / p.lam
    sim = mc.SimConfig(horizon=horizon, dt=cfg.dt, paths=cfg.paths, seed=cfg.seed)
    pairs = [("d0", d0), ("paths", cfg.paths), ("seed", cfg.seed), ("horizon", horizon), ("dt", sim.dt)]
    within = True
    for g in (1, 2):
        est = mc.mc_intrinsic(p, g, d0, replace(sim, seed=cfg.seed + g - 1), workers=args.workers)
        exact = float(group_value(p, g, d0))
        within &= est.within(exact)
        pairs += [(f"group{g}_mc", est.mean), (f"group{g}_se", est.std_error), (f"group{g}_exact", exact)]
    pairs.append(("intrinsic", intrinsic_value(p, d0)))
    t = min(5.0, horizon)
    cm = mc.conditional_mean_check(p, 1, d0, t, replace(sim, seed=cfg.seed + 2), workers=args.workers)
    within &= cm.within(0.0)
    pairs += [("cond_mean_t", t), ("cond_mean_diff", cm.mean), ("cond_mean_se", cm.std_error)]
    if args.stopping:
        if not (bubble_exists(p) and p.equal_volatility):
            raise RegimeError("--stopping needs the equal-volatility bubble regime")
        consts = closed_form.compute_paste_constants(p)
        holder = closed_form.owner(p, d0)
        est = mc.mc_stopping_value(p, holder, d0, lambda x: closed_form.phi(p, consts, x),
                                   replace(sim, seed=cfg.seed + 3), workers=args.workers)
        exact = closed_form.phi(p, consts, d0)
        within &= est.within(exact)
        pairs += [("stopping_holder", holder), ("stopping_mc", est.mean),
                  ("stopping_se", est.std_error), ("stopping_exact", exact)]
    pairs.append(("all_within_3se", within))
    _emit_report(pairs, cfg.out)
    return EXIT_OK


_PLOT_STUB = '''"""Plot the curves written by `cirbubble figures` (needs matplotlib)."""
import csv
import sys

import matplotlib.pyplot as plt

for name in sys.argv[1:] or ["initial1.csv", "initial2.csv", "initial3.csv"]:
    with open(name) as fh:
        rows = list(csv.DictReader(fh))
    d = [float(r["D"]) for r in rows]
    fig, (left, right) = plt.subplots(1, 2, figsize=(10, 4))
    left.plot(d, [float(r["price"]) for r in rows], label="price")
    left.plot(d, [float(r["intrinsic"]) for r in rows], "--", label="intrinsic")
    left.set_xlabel("D")
    left.legend()
    right.plot(d, [float(r["relative"]) for r in rows])
    right.set_xlabel("D")
    right.set_ylabel("relative bubble")
    fig.suptitle(name)
    fig.savefig(name.rsplit(".", 1)[0] + ".png", dpi=120)
'''


def figure_summary(params, consts):
    """Relative bubble at ``0``, ``d_tilde`` and ``d_bar`` (``None`` when negative)."""
    th = thresholds(params)
    at = lambda d: None if d is None or d < 0 else float(closed_form.relative_bubble(params, consts, d))
    return [("R0", at(0.0)), ("R_d_tilde", at(th.d_tilde)), ("R_d_bar", at(th.d_bar)),
            ("d_bar", th.d_bar), ("d_tilde", th.d_tilde), ("E", consts.E), ("F", consts.F)]


def _cmd_figures(cfg, args):
    out_dir = cfg.out or "."
    os.makedirs(out_dir, exist_ok=True)
    d_max = cfg.d_max if cfg.d_max is not None else 0.5
    grid = np.linspace(0.0, d_max, cfg.grid_n)
    lines = []
    for name, raw in REFERENCE_SETS.items():
        p = normalize_params(**raw)
        consts = closed_form.compute_paste_constants(p)
        curve = closed_form.price_curve(p, grid)
        emit_curve(curve, os.path.join(out_dir, f"{name}.csv"))
        lines += [(f"{name}.{k}", v) for k, v in figure_summary(p, consts)]
    with open(os.path.join(out_dir, "summary.txt"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("".join(f"{k}={_fmt(v)}\n" for k, v in lines))
    if args.plot_script:
        with open(os.path.join(out_dir, "plot_figures.py"), "w", encoding="utf-8", newline="\n") as fh:
            fh.write(_PLOT_STUB)
    return EXIT_OK


_COMMANDS = {
    "check": _cmd_check,
    "price": _cmd_price,
    "solve": _cmd_solve,
    "iterate": _cmd_iterate,
    "simulate": _cmd_simulate,
    "figures": _cmd_figures,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="FILE", help="key=value configuration file")
    common.add_argument("--out", metavar="PATH", help="output file (directory for 'figures')")
    for key in CONFIG_KEYS:
        common.add_argument(f"--{key}", dest=f"cfg_{key}", metavar="VALUE", default=None)

    parser = argparse.ArgumentParser(prog="cirbubble", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("check", parents=[common], help="bubble predicate, thresholds and paste constants")
    sub.add_parser("price", parents=[common], help="closed-form price curve as CSV")
    solve = sub.add_parser("solve", parents=[common], help="grid solution for any volatilities")
    solve.add_argument("--max_iter", type=int, default=200)
    it = sub.add_parser("iterate", parents=[common], help="resale fixed-point iteration")
    it.add_argument("--k_max", type=int, default=50)
    it.add_argument("--steps", type=int, default=240)
    sim = sub.add_parser("simulate", parents=[common], help="Monte Carlo verification report")
    sim.add_argument("--d0", type=float, default=0.02)
    sim.add_argument("--stopping", action="store_true",
                     help="also estimate the stopping value with the closed-form continuation")
    sim.add_argument("--workers", type=int, default=1)
    fig = sub.add_parser("figures", parents=[common], help="curves and summary for the three reference sets")
    fig.add_argument("--plot-script", action="store_true", help="also write a matplotlib script stub")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    overrides = {key: getattr(args, f"cfg_{key}") for key in CONFIG_KEYS}
    try:
        text = None
        if args.config:
            with open(args.config, encoding="utf-8") as fh:
                text = fh.read()
        cfg = parse_config(text, overrides, out=args.out, command=args.command,
                           require_model=args.command != "figures")
        return _COMMANDS[args.command](cfg, args)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (DomainError, RegimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CirBubbleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
