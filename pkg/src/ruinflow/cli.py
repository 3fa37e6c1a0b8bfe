"""Batch experiment driver.

Subcommands cover simulation (`simulate`, `curve`, `fit`, `gamma-test`),
bound machinery (`bounds`, `classify`, `profile-export`), the heavy-tail
regime (`heavy`), and closed-form validation (`validate-expexp`).  Output is
CSV with '#'-prefixed metadata headers (config echo, seed, version) written
to stdout or ``--out``; with ``--figdir`` the report subcommands also render
matplotlib figures next to the delimited output.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import io
import json
import math
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import __version__
from .chain import Caps
from .closedform import ExpExpParams, psi_ratio
from .heavytail import (
    HeavyCalibration,
    heavy_envelope,
    karamata_integral,
    truncated_diagnostics,
)
from .lyapunov import (
    Classification,
    bound_envelope,
    build_profile_inverse,
    classify,
    drift_check,
    profile_table,
)
from .models import (
    ClaimModel,
    ConstantRate,
    CriticalInverseRate,
    CriticalPowerRate,
    Deterministic,
    Exponential,
    GammaDist,
    ParetoType,
    RiskModel,
    TabulatedRate,
    derived_constants,
)
from .montecarlo import decay_exponent_fit, estimate_ruin, gamma_limit_test, ruin_curve

__all__ = ["main", "run"]

SUBCOMMANDS = (
    "simulate",
    "curve",
    "fit",
    "bounds",
    "classify",
    "gamma-test",
    "heavy",
    "validate-expexp",
    "profile-export",
)


class ConfigError(Exception):
    """Invalid or missing configuration (exit code 2)."""


# ---------------------------------------------------------------------------
# Config parsing
# ---------------------------------------------------------------------------

def _require(cfg: dict, key: str, context: str):
    if key not in cfg:
        raise ConfigError(f"missing key {key!r} in {context}")
    return cfg[key]


def _build_distribution(cfg: dict, context: str):
    family = str(_require(cfg, "family", context)).lower()
    try:
        if family == "exponential":
            return Exponential(rate=float(_require(cfg, "rate", context)))
        if family == "gamma":
            return GammaDist(
                shape=float(_require(cfg, "shape", context)),
                rate=float(_require(cfg, "rate", context)),
            )
        if family == "pareto":
            return ParetoType(
                beta=float(_require(cfg, "beta", context)),
                scale=float(cfg.get("scale", 1.0)),
            )
        if family == "deterministic":
            return Deterministic(value=float(_require(cfg, "value", context)))
    except ValueError as exc:
        raise ConfigError(f"invalid {context}: {exc}") from exc
    raise ConfigError(f"unknown distribution family {family!r} in {context}")


def _build_rate(cfg: dict):
    kind = str(_require(cfg, "kind", "model.rate")).lower()
    try:
        if kind == "constant":
            return ConstantRate(v=float(_require(cfg, "v", "model.rate")))
        if kind == "critical_inverse":
            return CriticalInverseRate(
                v_c=float(_require(cfg, "v_c", "model.rate")),
                theta=float(_require(cfg, "theta", "model.rate")),
                z_min=float(cfg.get("z_min", 1.0)),
            )
        if kind == "critical_power":
            return CriticalPowerRate(
                v_c=float(_require(cfg, "v_c", "model.rate")),
                theta=float(_require(cfg, "theta", "model.rate")),
                alpha=float(_require(cfg, "alpha", "model.rate")),
                z_min=float(cfg.get("z_min", 1.0)),
            )
        if kind == "tabulated":
            bps = _require(cfg, "breakpoints", "model.rate")
            return TabulatedRate(breakpoints=tuple((float(z), float(v)) for z, v in bps))
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"invalid model.rate: {exc}") from exc
    raise ConfigError(f"unknown rate kind {kind!r}")


def _build_model(cfg: dict) -> RiskModel:
    model_cfg = _require(cfg, "model", "config")
    claims_cfg = _require(model_cfg, "claims", "model")
    claims = ClaimModel(
        xi=_build_distribution(_require(claims_cfg, "xi", "model.claims"), "model.claims.xi"),
        tau=_build_distribution(_require(claims_cfg, "tau", "model.claims"), "model.claims.tau"),
    )
    rate = _build_rate(_require(model_cfg, "rate", "model"))
    try:
        return RiskModel(rate=rate, claims=claims)
    except ValueError as exc:
        raise ConfigError(f"inconsistent model: {exc}") from exc


def _build_caps(cfg: dict) -> Caps:
    caps_cfg = cfg.get("caps", {})
    if not isinstance(caps_cfg, dict):
        raise ConfigError("caps must be an object")
    level_cap = caps_cfg.get("level_cap")
    return Caps(
        max_steps=int(caps_cfg.get("max_steps", 1_000_000)),
        level_cap=None if level_cap is None else float(level_cap),
    )


def _grid(cfg: dict, key: str = "grid") -> List[float]:
    grid = _require(cfg, key, "config")
    if not isinstance(grid, (list, tuple)) or not grid:
        raise ConfigError(f"{key} must be a non-empty list of levels")
    return [float(g) for g in grid]


def _load_config(path: Optional[str]) -> dict:
    if path is None:
        raise ConfigError("--config is required for this subcommand")
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not text.strip():
        raise ConfigError(f"config file {path} is empty")
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    return cfg


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------

class _Report:
    """Accumulates metadata comments and CSV rows; written once at the end."""

    def __init__(self, cfg: dict, seed: int, subcommand: str) -> None:
        self.lines: List[str] = [
            f"# ruinflow {__version__}",
            f"# subcommand: {subcommand}",
            f"# seed: {seed}",
            f"# config: {json.dumps(cfg, sort_keys=True, separators=(',', ':'))}",
        ]

    def comment(self, text: str) -> None:
        self.lines.append(f"# {text}")

    def header(self, *cols: str) -> None:
        self.lines.append(",".join(cols))

    def row(self, *vals) -> None:
        self.lines.append(",".join(_fmt(v) for v in vals))

    def write(self, out: Optional[str]) -> None:
        text = "\n".join(self.lines) + "\n"
        if out is None:
            sys.stdout.write(text)
        else:
            Path(out).write_text(text)


def _fmt(v) -> str:
    if isinstance(v, float):
        return format(v, ".10g")
    return str(v)


def _estimate_row(report: _Report, est) -> None:
    report.row(
        est.x, est.p_hat, est.half_width, est.n_paths,
        est.censored_cap, est.censored_horizon, est.p_hat_pessimistic,
    )


_ESTIMATE_COLS = (
    "x", "p_hat", "half_width", "n_paths",
    "censored_cap", "censored_horizon", "p_hat_pessimistic",
)


def _figpath(figdir: Optional[str], name: str) -> Optional[Path]:
    if figdir is None:
        return None
    d = Path(figdir)
    d.mkdir(parents=True, exist_ok=True)
    return d / name


# ---------------------------------------------------------------------------
# Subcommand implementations
# ---------------------------------------------------------------------------

def _cmd_simulate(cfg: dict, seed: int, report: _Report, figdir) -> None:
    model = _build_model(cfg)
    x = float(_require(cfg, "x", "config"))
    n_paths = int(cfg.get("n_paths", 10_000))
    est = estimate_ruin(model, x, n_paths, _build_caps(cfg), seed)
    report.header(*_ESTIMATE_COLS)
    _estimate_row(report, est)


def _cmd_curve(cfg: dict, seed: int, report: _Report, figdir, fit: bool = False) -> None:
    model = _build_model(cfg)
    grid = _grid(cfg)
    n_paths = int(cfg.get("n_paths", 10_000))
    curve = ruin_curve(model, grid, n_paths, _build_caps(cfg), seed)
    report.header(*_ESTIMATE_COLS)
    for est in curve:
        _estimate_row(report, est)
    if fit:
        rho_hat, stderr = decay_exponent_fit(curve)
        report.comment(f"rho_hat: {_fmt(rho_hat)}")
        report.comment(f"rho_stderr: {_fmt(stderr)}")
    fig = _figpath(figdir, "curve.png")
    if fig is not None:
        from .report import ruin_curve_figure

        ruin_curve_figure(curve, fig)


def _cmd_classify(cfg: dict, seed: int, report: _Report, figdir) -> None:
    model = _build_model(cfg)
    verdict = classify(model)
    consts = derived_constants(model)
    if not model.is_critical_family:
        detail = "non-critical rate family"
    else:
        theta = model.theta
        rel = ">" if theta > consts.threshold else ("<" if theta < consts.threshold else "=")
        detail = f"theta={theta:g} {rel} threshold={consts.threshold:g}"
        if consts.rho is not None:
            detail += f", rho={consts.rho:g}"
    report.lines.append(f"{verdict.value} ({detail})")


def _cmd_gamma(cfg: dict, seed: int, report: _Report, figdir) -> None:
    model = _build_model(cfg)
    gcfg = cfg.get("gamma", {})
    res = gamma_limit_test(
        model,
        n=int(gcfg.get("n_steps", 10_000)),
        n_paths=int(gcfg.get("n_paths", 10_000)),
        seed=seed,
    )
    report.comment(f"n_steps: {res.n_steps}  n_surviving: {res.n_surviving}")
    report.comment(
        f"empirical_mean: {_fmt(res.empirical_mean)}  reference_mean: {_fmt(res.reference_mean)}"
    )
    report.comment(
        f"empirical_variance: {_fmt(res.empirical_variance)}  "
        f"reference_variance: {_fmt(res.reference_variance)}"
    )
    report.header("prob", "empirical_quantile", "reference_quantile")
    for p, e, r in zip(res.quantile_probs, res.empirical_quantiles, res.reference_quantiles):
        report.row(float(p), float(e), float(r))
    fig = _figpath(figdir, "gamma.png")
    if fig is not None:
        from .report import gamma_figure

        gamma_figure(res, fig)


def _cmd_bounds(cfg: dict, seed: int, report: _Report, figdir) -> None:
    model = _build_model(cfg)
    profile = build_profile_inverse(model)
    drift_grid = [float(v) for v in cfg.get("drift_grid", [5, 10, 20, 40, 80])]
    n_draws = int(cfg.get("n_draws", 100_000))
    dr = drift_check(profile, model, drift_grid, n_draws, seed)
    if dr.x_hat is None:
        raise RuntimeError("drift check established no super/submartingale threshold")
    report.comment(f"x_hat: {_fmt(dr.x_hat)}")
    grid = [x for x in _grid(cfg) if x > dr.x_hat]
    report.header("x", "lower", "upper")
    rows = []
    for x in grid:
        lo, hi = bound_envelope(profile, model, x, caps=_build_caps(cfg), seed=seed)
        rows.append((x, lo, hi))
        report.row(x, lo, hi)
    fig = _figpath(figdir, "bounds.png")
    if fig is not None:
        import matplotlib.pyplot as plt

        f, ax = plt.subplots(figsize=(5.0, 3.2))
        xs = [r[0] for r in rows]
        ax.loglog(xs, [r[1] for r in rows], "o-", ms=3, lw=1, label="lower")
        ax.loglog(xs, [r[2] for r in rows], "s-", ms=3, lw=1, label="upper")
        ax.set_xlabel("initial reserve $x$")
        ax.set_title("Bound envelope")
        ax.legend(fontsize=8)
        f.savefig(fig)
        plt.close(f)


def _cmd_heavy(cfg: dict, seed: int, report: _Report, figdir) -> None:
    model = _build_model(cfg)
    grid = _grid(cfg)
    n_paths = int(cfg.get("n_paths", 10_000))
    caps = _build_caps(cfg)
    anchors = cfg.get("anchors", [grid[0], grid[-1]])
    calib = HeavyCalibration(
        anchors=(float(anchors[0]), float(anchors[1])), n_paths=n_paths,
        caps=caps, seed=seed,
    )
    xi = model.claims.xi
    report.header(
        "x", "psi_hat", "psi_tilde_hat", "envelope_lo", "envelope_hi",
        "karamata", "x2_tail",
    )
    rows = []
    for i, x in enumerate(grid):
        est = estimate_ruin(model, x, n_paths, caps, seed, stream_offset=(i + 2) * n_paths)
        _stats, decomp = truncated_diagnostics(
            model, x, max(n_paths // 10, 1000), caps, seed + 1
        )
        lo, hi = heavy_envelope(model, x, calib)
        row = {
            "x": x,
            "psi_hat": est.p_hat,
            "psi_tilde_hat": decomp["psi_tilde_hat"],
            "envelope_lo": lo,
            "envelope_hi": hi,
            "karamata": karamata_integral(model.claims, x),
            "x2_tail": x * x * xi.tail(x),
        }
        rows.append(row)
        report.row(*row.values())
    fig = _figpath(figdir, "heavy.png")
    if fig is not None:
        from .report import heavy_figure

        heavy_figure(rows, fig)


def _cmd_validate(cfg: dict, seed: int, report: _Report, figdir) -> None:
    model = _build_model(cfg)
    params = ExpExpParams.from_model(model)
    grid = _grid(cfg)
    n_paths = int(cfg.get("n_paths", 20_000))
    curve = ruin_curve(model, grid, n_paths, _build_caps(cfg), seed)
    ref = curve[0]
    if ref.p_hat <= 0:
        raise RuntimeError("reference level observed no ruin; cannot form ratios")
    report.header("x", "mc_ratio", "closed_form_ratio", "z_score")
    for est in curve:
        mc_ratio = est.p_hat / ref.p_hat
        cf = psi_ratio(params, est.x, ref.x)
        if est.x == ref.x:
            z = 0.0
        else:
            rse = math.hypot(est.rel_half_width, ref.rel_half_width) / 1.96
            z = (mc_ratio - cf) / (mc_ratio * rse) if mc_ratio > 0 else math.inf
        report.row(est.x, mc_ratio, cf, z)


def _cmd_profile(cfg: dict, seed: int, report: _Report, figdir) -> None:
    model = _build_model(cfg)
    profile = build_profile_inverse(model)
    grid = cfg.get("grid")
    xs = [float(v) for v in grid] if grid else list(np.geomspace(0.5, 1000.0, 60))
    table = profile_table(profile, xs)
    report.header("x", "q", "Q", "U", "U_plus", "U_minus")
    for row in table:
        report.row(*[float(v) for v in row])
    fig = _figpath(figdir, "profile.png")
    if fig is not None:
        from .report import profile_figure

        profile_figure(table, fig)


_HANDLERS = {
    "simulate": _cmd_simulate,
    "curve": _cmd_curve,
    "fit": lambda cfg, seed, rep, figdir: _cmd_curve(cfg, seed, rep, figdir, fit=True),
    "bounds": _cmd_bounds,
    "classify": _cmd_classify,
    "gamma-test": _cmd_gamma,
    "heavy": _cmd_heavy,
    "validate-expexp": _cmd_validate,
    "profile-export": _cmd_profile,
}


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ruinflow",
        description="Ruin-probability experiments for level-dependent premium rates",
    )
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", help="JSON experiment configuration")
    parser.add_argument("--seed", type=int, default=0, help="64-bit master seed")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker threads (default: hardware)")
    parser.add_argument("--out", help="output CSV path (default: stdout)")
    parser.add_argument("--figdir", help="directory for rendered figures")
    return parser


def run(argv: Sequence[str]) -> int:
    """Parse arguments, run one subcommand, and return the exit code."""
    parser = _build_parser()
    try:
        args = parser.parse_args(list(argv))
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.seed < 0 or args.seed >= 2**64:
        sys.stderr.write("error: --seed must be an unsigned 64-bit integer\n")
        return 2
    if args.threads is not None:
        if args.threads < 1:
            sys.stderr.write("error: --threads must be >= 1\n")
            return 2
        import numba

        # Results are thread-count independent by construction; clamp the
        # request to what the runtime allows.
        numba.set_num_threads(min(args.threads, numba.config.NUMBA_NUM_THREADS))
    try:
        cfg = _load_config(args.config)
        report = _Report(cfg, args.seed, args.subcommand)
        _HANDLERS[args.subcommand](cfg, args.seed, report, args.figdir)
        report.write(args.out)
    except ConfigError as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return 2
    except (ValueError, RuntimeError, ArithmeticError) as exc:
        sys.stderr.write(f"numerical failure: {exc}\n")
        return 3
    return 0


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
