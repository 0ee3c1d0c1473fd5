"""Figures written next to the CSV outputs."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .sweeps import LadderResult, ScalingResult, SweepResult  # noqa: E402

STYLE = {
    "font.size": 10,
    "axes.labelsize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "figure.dpi": 120,
}


def _figure(width: float = 5.0):
    golden = (5**0.5 - 1) / 2
    return plt.subplots(figsize=(width, width * golden))


def plot_mcs_sweep(sweep: SweepResult, path: str | Path, title: str = "") -> Path:
    """Mean/median loss and success rate against M_CS."""
    with plt.rc_context(STYLE):
        fig, ax = _figure()
        x = sweep.axis_values
        ax.plot(x, [p.mean_loss_db for p in sweep.points], "o-", label="mean loss (strongest)")
        ax.plot(x, [p.mean_loss_all_paths_db for p in sweep.points], "s--", label="mean loss (all paths)")
        ax.plot(x, [p.median_loss_db for p in sweep.points], "^:", label="median loss")
        ax.set_xlabel(r"$M_{CS}$")
        ax.set_ylabel("beamforming loss [dB]")
        ax2 = ax.twinx()
        ax2.plot(x, [p.success_rate for p in sweep.points], "k.-", alpha=0.5, label="P(loss <= 1 dB)")
        ax2.set_ylim(0, 1.05)
        ax2.set_ylabel("success rate")
        ax2.grid(False)
        lines = ax.get_lines() + ax2.get_lines()
        ax.legend(lines, [ln.get_label() for ln in lines], loc="best")
        if title:
            ax.set_title(title)
        fig.tight_layout()
        path = Path(path)
        fig.savefig(path)
        plt.close(fig)
    return path


def plot_scaling(result: ScalingResult, path: str | Path) -> Path:
    """Required M against N, one line per K (and the coherent baseline if present)."""
    with plt.rc_context(STYLE):
        fig, ax = _figure()
        for k in sorted({r.k for r in result.rows}):
            rows = sorted((r for r in result.rows if r.k == k), key=lambda r: r.n)
            ax.plot([r.n for r in rows], [r.m_star or float("nan") for r in rows], "o-", label=f"K={k}")
            if any(r.m_star_coherent for r in rows):
                ax.plot(
                    [r.n for r in rows],
                    [r.m_star_coherent or float("nan") for r in rows],
                    "x--",
                    label=f"K={k} coherent",
                )
        ax.set_xscale("log", base=2)
        ax.set_xlabel("array size N")
        ax.set_ylabel("required M")
        ax.legend(loc="best")
        fig.tight_layout()
        path = Path(path)
        fig.savefig(path)
        plt.close(fig)
    return path


def plot_ladder(ladder: LadderResult, path: str | Path) -> Path:
    """Wilson lower bound of the success rate at each tested M."""
    with plt.rc_context(STYLE):
        fig, ax = _figure()
        steps = sorted(ladder.steps, key=lambda s: s.m)
        ax.plot([s.m for s in steps], [s.wilson_lo for s in steps], "o-")
        if ladder.m_star is not None:
            ax.axvline(ladder.m_star, color="k", ls=":", label=f"M* = {ladder.m_star}")
            ax.legend(loc="best")
        ax.set_xscale("log", base=2)
        ax.set_xlabel("M")
        ax.set_ylabel("Wilson lower bound")
        fig.tight_layout()
        path = Path(path)
        fig.savefig(path)
        plt.close(fig)
    return path
