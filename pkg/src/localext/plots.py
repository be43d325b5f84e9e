"""Report figures: set geometry with its cube family, an extension example,
measured constants, and cross-resolution drift."""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
from matplotlib.patches import Rectangle


def plot_set_and_cubes(ctx, path: Path, max_cubes: int = 4000):
    grid = ctx.grid
    W = ctx.W
    fig, ax = plt.subplots(figsize=(7, 6) if grid.n == 2 else (8, 3.2))
    if grid.n == 2:
        extent = [grid.origin[0], grid.box_max[0], grid.origin[1], grid.box_max[1]]
        ax.imshow(
            ctx.S.cells.mask.T,
            origin="lower",
            extent=extent,
            cmap="Greys",
            alpha=0.55,
            interpolation="nearest",
        )
        order = np.argsort(-W.radii)[:max_cubes]
        for row in order:
            c = W.centers[row]
            r = W.radii[row]
            color = "tab:orange" if W.flagged[row] else "tab:blue"
            ax.add_patch(
                Rectangle(
                    (c[0] - r, c[1] - r), 2 * r, 2 * r, fill=False, lw=0.4, color=color
                )
            )
        ax.set_xlim(extent[0], extent[1])
        ax.set_ylim(extent[2], extent[3])
        ax.set_aspect("equal")
    else:
        xs = grid.axis_centers(0)
        ax.fill_between(xs, 0, ctx.S.cells.mask.astype(float) * 0.2, color="0.3", step="mid")
        c = W.centers[:, 0]
        r = W.radii
        ax.scatter(c, r, s=4, c=np.where(W.flagged, "tab:orange", "tab:blue"))
        ax.set_yscale("log")
        ax.set_ylabel("cube radius")
        ax.set_xlabel("x")
    ax.set_title(f"{ctx.name} ({ctx.resolution}): {len(W)} cubes, eps={ctx.H.epsilon:g}")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def plot_extension_example(ctx, fname: str, path: Path):
    grid = ctx.grid
    f = ctx.functions[fname]
    tf = ctx.extensions[fname]
    if grid.n == 2:
        fig, axes = plt.subplots(1, 2, figsize=(10, 4.4))
        extent = [grid.origin[0], grid.box_max[0], grid.origin[1], grid.box_max[1]]
        shown = np.where(ctx.S.cells.mask, f.values, np.nan)
        im0 = axes[0].imshow(shown.T, origin="lower", extent=extent, interpolation="nearest")
        axes[0].set_title(f"{fname} on S")
        fig.colorbar(im0, ax=axes[0], shrink=0.8)
        im1 = axes[1].imshow(tf.values.T, origin="lower", extent=extent, interpolation="nearest")
        axes[1].set_title("extension")
        fig.colorbar(im1, ax=axes[1], shrink=0.8)
    else:
        fig, ax = plt.subplots(figsize=(8, 3.2))
        xs = grid.axis_centers(0)
        ax.plot(xs, tf.values, lw=0.8, label="extension", color="tab:blue")
        m = ctx.S.cells.mask
        ax.plot(xs[m], f.values[m], ".", ms=2, color="tab:red", label=f"{fname} on S")
        ax.legend(loc="best", fontsize=8)
    fig.suptitle(f"{ctx.name} ({ctx.resolution})")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def plot_constants(report, path: Path):
    rows = [
        r
        for r in report
        if r.status == "pass"
        and r.measured_constant is not None
        and 0 < r.measured_constant < math.inf
        and not r.name.startswith("stability:")
    ]
    if not rows:
        return
    by_name = {}
    for r in rows:
        by_name.setdefault(r.name.split(":")[0], []).append(r.measured_constant)
    names = sorted(by_name)
    worst = [max(by_name[n]) for n in names]
    fig, ax = plt.subplots(figsize=(9, 0.32 * len(names) + 1.6))
    ax.barh(range(len(names)), worst, color="tab:blue")
    ax.set_yticks(range(len(names)), names, fontsize=7)
    ax.set_xscale("log")
    ax.set_xlabel("worst measured constant (corpus-wide)")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def plot_drift(report, path: Path):
    pts = [
        (r.details.get("coarse"), r.details.get("fine"), r.status)
        for r in report
        if r.name.startswith("stability:") and r.details.get("coarse")
    ]
    if not pts:
        return
    fig, ax = plt.subplots(figsize=(5.2, 5))
    for c, f, status in pts:
        ax.plot([c], [f], "o", ms=4, color="tab:green" if status == "pass" else "tab:red")
    lo = min(min(p[0] for p in pts), min(p[1] for p in pts)) * 0.5
    hi = max(max(p[0] for p in pts), max(p[1] for p in pts)) * 2
    xs = np.geomspace(max(lo, 1e-12), hi, 50)
    ax.fill_between(xs, xs * 0.5, xs * 2.0, alpha=0.15, color="tab:green", lw=0)
    ax.plot(xs, xs, "--", lw=0.8, color="0.4")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("constant at coarse resolution")
    ax.set_ylabel("constant at fine resolution")
    ax.set_title("constant stability under grid refinement")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def render_all(report, contexts: dict, out_dir) -> list:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for tag, ctx in contexts.items():
        if ctx.resolution != "fine":
            continue
        p = out_dir / f"set_{ctx.name}.png"
        plot_set_and_cubes(ctx, p)
        written.append(p)
        fname = "cusp05" if "cusp05" in ctx.fnames else ctx.fnames[-1]
        p = out_dir / f"extension_{ctx.name}_{fname}.png"
        plot_extension_example(ctx, fname, p)
        written.append(p)
    p = out_dir / "constants.png"
    plot_constants(report, p)
    written.append(p)
    p = out_dir / "drift.png"
    plot_drift(report, p)
    written.append(p)
    return [str(p) for p in written]
