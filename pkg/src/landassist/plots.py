"""Report figures rendered to files next to the delimited outputs."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def plot_validation_sweep(aggregates: list[dict], out_path: str | Path, title: str = "") -> Path:
    out_path = Path(out_path)
    betas = [a["beta"] for a in aggregates]
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.5))
    axes[0].plot(betas, [a["mean_landing_error"] for a in aggregates], "o-", color="tab:blue")
    axes[0].set_xlabel("pilot proficiency (beta)")
    axes[0].set_ylabel("mean landing error [m]")
    axes[1].plot(betas, [a["success_rate"] for a in aggregates], "o-", color="tab:green")
    axes[1].set_xlabel("pilot proficiency (beta)")
    axes[1].set_ylabel("success rate")
    axes[1].set_ylim(-0.05, 1.05)
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def plot_training_curves(log_rows: list[dict], out_path: str | Path, title: str = "") -> Path:
    out_path = Path(out_path)
    its = [r["iteration"] for r in log_rows]
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.2))
    axes[0].plot(its, [r["mean_reward"] for r in log_rows], lw=0.8)
    axes[0].set_xlabel("iteration")
    axes[0].set_ylabel("mean episode reward")
    axes[1].plot(its, [r["successes"] / max(r["episodes"], 1) for r in log_rows], lw=0.8)
    axes[1].set_xlabel("iteration")
    axes[1].set_ylabel("exploration success rate")
    ev = [(r["iteration"], r["eval"]) for r in log_rows if "eval" in r]
    if ev:
        axes[2].plot([e[0] for e in ev], [e[1].get("success_rate", np.nan) for e in ev], "o-")
        axes[2].set_ylabel("validation success rate")
    axes[2].set_xlabel("iteration")
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def plot_comparison(summary: list[dict], out_path: str | Path) -> Path:
    out_path = Path(out_path)
    names = [s["strategy"] for s in summary]
    fig, axes = plt.subplots(1, 3, figsize=(11, 3.2))
    for ax, key, label in zip(
        axes,
        ("mean_landing_error", "mean_efficiency", "mean_exerted_control"),
        ("landing error [m]", "efficiency (t*d/d0^2)", "exerted control [m/s]"),
    ):
        ax.bar(names, [s[key] for s in summary], color=["tab:blue", "tab:orange", "tab:gray"][: len(names)])
        ax.set_ylabel(label)
        ax.tick_params(axis="x", rotation=15)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def plot_assist_profile(table: list[dict], out_path: str | Path) -> Path:
    out_path = Path(out_path)
    centers = [(r["bin_lo"] + r["bin_hi"]) / 2 for r in table]
    means = [r["mean_assistance"] for r in table]
    q25 = [r["q25"] for r in table]
    q75 = [r["q75"] for r in table]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.fill_between(centers, q25, q75, alpha=0.3, color="tab:green", label="IQR")
    ax.plot(centers, means, "k-o", label="mean")
    ax.set_xlabel("XY distance to goal [m]")
    ax.set_ylabel("|a_u - a_a| [m/s]")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def plot_vae_log(log_rows: list[dict], out_path: str | Path) -> Path:
    out_path = Path(out_path)
    its = [r["iteration"] for r in log_rows]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for key in ("total", "mse", "bce", "kl"):
        ax.plot(its, [r[key] for r in log_rows], lw=0.9, label=key)
    ax.set_yscale("log")
    ax.set_xlabel("iteration")
    ax.set_ylabel("loss")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path
