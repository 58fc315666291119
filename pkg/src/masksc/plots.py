"""Figure rendering for sweep, training, and verification outputs.

Everything draws to files through the Agg backend; the CSV/JSON outputs stay
the primary interface and these figures are the quick-look companions.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

ALG_STYLE = {"baseline": dict(color="tab:red", marker="o"),
             "masked": dict(color="tab:blue", marker="s")}


def render_sweep_figure(aggregates, axis_name, out_path, title=None) -> Path:
    """Mean +- one standard deviation of the final cosine error, one panel per init."""
    inits = sorted({a["init"] for a in aggregates})
    fig, axes = plt.subplots(1, len(inits), figsize=(5.2 * len(inits), 4.0), squeeze=False)
    for ax, init in zip(axes[0], inits):
        for alg in sorted({a["algorithm"] for a in aggregates}):
            pts = sorted(
                (a for a in aggregates if a["init"] == init and a["algorithm"] == alg),
                key=lambda a: a["axis_value"],
            )
            if not pts:
                continue
            x = [a["axis_value"] for a in pts]
            mean = [a["mean_final_d_r_cosine"] for a in pts]
            std = [a["std_final_d_r_cosine"] for a in pts]
            style = ALG_STYLE.get(alg, {})
            ax.plot(x, mean, label=alg, **style)
            ax.fill_between(
                x,
                [m - s for m, s in zip(mean, std)],
                [m + s for m, s in zip(mean, std)],
                alpha=0.2, color=style.get("color"),
            )
        ax.set_xlabel(axis_name)
        ax.set_ylabel("final recovery error (cosine)")
        ax.set_title(f"{init} init")
        ax.legend()
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def render_training_figure(result, out_path) -> Path:
    """Loss and recovery-error trajectories of a single run."""
    epochs = range(len(result.loss_history))
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    ax1.plot(epochs, result.loss_history, color="tab:gray")
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("training loss")
    ax1.set_yscale("log")
    ax2.plot(epochs, result.d_r_cosine_history, color="tab:blue", label="cosine")
    ax2.plot(epochs, result.d_r_euclidean_history, color="tab:red", label="euclidean")
    ax2.set_xlabel("epoch")
    ax2.set_ylabel("recovery error")
    ax2.legend()
    fig.suptitle(f"{result.config.algorithm}, {result.config.init} init, p'={result.config.p_prime}")
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def render_masking_figure(report, out_path) -> Path:
    """OMP-vs-oracle risk gap and support recovery along the signal-scale grid."""
    grid = [r["sigma_z"] for r in report["curve"]]
    gap = [r["gap"] for r in report["curve"]]
    gap_se = [r["gap_se"] for r in report["curve"]]
    rate = [r["recovery_rate"] for r in report["curve"]]
    fig, ax1 = plt.subplots(figsize=(6, 4))
    ax1.errorbar(grid, gap, yerr=[2 * s for s in gap_se], color="tab:blue",
                 marker="o", label="risk gap (OMP - LS oracle)")
    ax1.set_xscale("log")
    ax1.set_xlabel(r"signal scale $\sigma_z$")
    ax1.set_ylabel("risk gap")
    ax2 = ax1.twinx()
    ax2.plot(grid, rate, color="tab:green", marker="s", linestyle="--",
             label="support recovery rate")
    ax2.set_ylabel("recovery rate")
    ax2.set_ylim(0, 1.05)
    lines1, labels1 = ax1.get_legend_handles_labels()
    lines2, labels2 = ax2.get_legend_handles_labels()
    ax1.legend(lines1 + lines2, labels1 + labels2, loc="center right")
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def render_overfit_figure(report, out_path) -> Path:
    """Loss comparison between the ground truth and the constructed dictionary."""
    fig, ax = plt.subplots(figsize=(5, 4))
    vals = [report["L_emp_A"], report["L_emp_B"]]
    ax.bar(["ground truth", "constructed"], vals, color=["tab:red", "tab:blue"],
           yerr=[report["gap_se"]] * 2, capsize=4)
    ax.set_ylabel("empirical reconstruction loss")
    ax.set_title(
        f"gap = {report['gap']:.4f} ({report['gap'] / max(report['gap_se'], 1e-300):.1f} se), "
        f"recovery error = {report['d_R_AB']:.4f}"
    )
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path
