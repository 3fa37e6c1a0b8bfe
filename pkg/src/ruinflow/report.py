"""Figure rendering for the CLI report paths (matplotlib, file output only)."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from scipy import stats as sps

from .montecarlo import GammaLimitReport, RuinEstimate

__all__ = [
    "ruin_curve_figure",
    "gamma_figure",
    "heavy_figure",
    "profile_figure",
]

plt.rcParams["figure.dpi"] = 150
plt.rcParams["savefig.bbox"] = "tight"
plt.rcParams["font.family"] = "serif"


def ruin_curve_figure(
    estimates: Sequence[RuinEstimate],
    out_path: Path,
    reference: Optional[Sequence[float]] = None,
    envelope: Optional[Sequence[tuple]] = None,
    title: str = "Ruin probability",
) -> None:
    """Log-log ruin curve with 95% CIs, optional reference and envelope."""
    xs = np.array([e.x for e in estimates])
    ps = np.array([e.p_hat for e in estimates])
    hw = np.array([e.half_width for e in estimates])
    fig, ax = plt.subplots(figsize=(5.0, 3.2))
    ax.errorbar(xs, ps, yerr=hw, fmt="o-", ms=3, lw=1, capsize=2, label=r"MC $\hat\psi(x)$")
    if reference is not None:
        ax.plot(xs, reference, "--", lw=1, label="closed form (anchored)")
    if envelope is not None:
        lo = [e[0] for e in envelope]
        hi = [e[1] for e in envelope]
        ax.fill_between(xs, lo, hi, alpha=0.2, label="bound envelope")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("initial reserve $x$")
    ax.set_ylabel(r"$\psi(x)$")
    ax.set_title(title)
    ax.legend(fontsize=8)
    fig.savefig(out_path)
    plt.close(fig)


def gamma_figure(report: GammaLimitReport, out_path: Path) -> None:
    """Empirical vs reference quantiles of R_n^2/n plus the Gamma density."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(7.5, 3.0))
    ax1.plot(report.reference_quantiles, report.empirical_quantiles, "o", ms=3)
    lims = [0.0, max(report.reference_quantiles.max(), report.empirical_quantiles.max())]
    ax1.plot(lims, lims, "k--", lw=0.8)
    ax1.set_xlabel("Gamma reference quantile")
    ax1.set_ylabel("empirical quantile")
    ax1.set_title(r"$R_n^2/n$ Q-Q")
    shape = report.reference_mean**2 / report.reference_variance
    scale = report.reference_variance / report.reference_mean
    grid = np.linspace(0, report.reference_quantiles.max() * 1.5, 300)
    ax2.plot(grid, sps.gamma.pdf(grid, a=shape, scale=scale), lw=1.2, label="Gamma limit")
    ax2.axvline(report.empirical_mean, color="C1", lw=1, label="empirical mean")
    ax2.set_xlabel(r"$R_n^2/n$")
    ax2.set_title(
        f"mean {report.empirical_mean:.2f} (ref {report.reference_mean:.1f}), "
        f"var {report.empirical_variance:.1f} (ref {report.reference_variance:.1f})"
    )
    ax2.legend(fontsize=8)
    fig.savefig(out_path)
    plt.close(fig)


def heavy_figure(rows: Sequence[dict], out_path: Path) -> None:
    """psi-hat against the x^2 tail(x) shape and its calibrated envelope."""
    xs = np.array([r["x"] for r in rows])
    fig, ax = plt.subplots(figsize=(5.0, 3.2))
    ax.loglog(xs, [r["psi_hat"] for r in rows], "o-", ms=3, lw=1, label=r"$\hat\psi(x)$")
    ax.loglog(xs, [r["x2_tail"] for r in rows], ":", lw=1, label=r"$x^2\,P\{\xi>x\}$")
    ax.fill_between(
        xs,
        [r["envelope_lo"] for r in rows],
        [r["envelope_hi"] for r in rows],
        alpha=0.2,
        label="calibrated envelope",
    )
    ax.set_xlabel("initial reserve $x$")
    ax.set_title("Heavy-tail bracketing")
    ax.legend(fontsize=8)
    fig.savefig(out_path)
    plt.close(fig)


def profile_figure(table: np.ndarray, out_path: Path) -> None:
    """Test functions q, Q, U, U_pm from a profile export table."""
    x = table[:, 0]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(7.5, 3.0))
    ax1.plot(x, table[:, 1], lw=1.2, label="$q$")
    ax1.plot(x, table[:, 2], lw=1.2, label="$Q$")
    ax1.set_xscale("log")
    ax1.set_xlabel("$x$")
    ax1.legend(fontsize=8)
    ax2.plot(x, table[:, 3], lw=1.2, label="$U$")
    if not np.isnan(table[:, 4]).all():
        ax2.plot(x, table[:, 4], "--", lw=1, label="$U_+$")
        ax2.plot(x, table[:, 5], "--", lw=1, label="$U_-$")
    ax2.set_xscale("log")
    ax2.set_yscale("log")
    ax2.set_xlabel("$x$")
    ax2.legend(fontsize=8)
    fig.savefig(out_path)
    plt.close(fig)
