"""Figure rendering for run directories written by the command line.

Each renderer reads the delimited files a subcommand emitted and saves
PNG files next to them; nothing here refits models.  The Agg backend is
forced so rendering works headless, and the PNG metadata is pinned so
reruns produce identical bytes.
"""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

from .errors import InputError
from .fdbasis import BasisSystem

_PNG_METADATA = {"Software": "robarch"}
_MAX_CURVES = 60


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=150, metadata=_PNG_METADATA)
    plt.close(fig)
    return path


def _read_manifest(run_dir: Path) -> dict:
    path = run_dir / "manifest.json"
    if not path.is_file():
        raise InputError(f"{run_dir} has no manifest.json")
    with open(path) as fh:
        return json.load(fh)


def _alpha_heatmap(alpha: np.ndarray, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    image = ax.imshow(alpha, aspect="auto", cmap="viridis", vmin=0.0, vmax=1.0)
    fig.colorbar(image, ax=ax, label="mixture weight")
    ax.set_xlabel("archetype")
    ax.set_ylabel("record")
    ax.set_xticks(range(alpha.shape[1]))
    ax.set_xticklabels([str(j + 1) for j in range(alpha.shape[1])])
    return _save(fig, path)


def render_fit(run_dir) -> list[Path]:
    """Archetype profiles and the alpha heatmap from a fit run."""
    run_dir = Path(run_dir)
    with open(run_dir / "model.json") as fh:
        model = json.load(fh)
    archetypes = np.asarray(model["archetypes"], dtype=float)
    alpha = pd.read_csv(run_dir / "alpha.csv", index_col=0).to_numpy(dtype=float)

    fig, ax = plt.subplots(figsize=(7.0, 4.0))
    for j, row in enumerate(archetypes):
        ax.plot(row, marker="o", markersize=3, label=f"archetype {j + 1}")
    ax.set_xlabel("variable index")
    ax.set_ylabel("value")
    ax.legend(fontsize="small")
    out = [_save(fig, run_dir / "archetypes.png")]
    out.append(_alpha_heatmap(alpha, run_dir / "alpha.png"))
    return out


def _render_waveform(run_dir: Path) -> list[Path]:
    curves = pd.read_csv(run_dir / "curves.csv", index_col=0)
    components = pd.read_csv(run_dir / "components.csv", index_col=0)
    grid = np.array([float(c) for c in curves.columns])
    fig, ax = plt.subplots(figsize=(7.0, 4.0))
    for _, row in curves.head(_MAX_CURVES).iterrows():
        ax.plot(grid, row.to_numpy(), color="0.75", linewidth=0.6)
    for name, row in components.iterrows():
        ax.plot(grid, row.to_numpy(), linewidth=2.0, label=str(name))
    ax.set_xlabel("t")
    ax.set_ylabel("value")
    ax.legend(fontsize="small")
    return [_save(fig, run_dir / "curves.png")]


def _render_rate_table(run_dir: Path, filename: str) -> list[Path]:
    table = pd.read_csv(run_dir / filename)
    fig, ax = plt.subplots(figsize=(7.0, 4.0))
    labels = [
        f"{row.policy}\n{row.metric}" if table["metric"].nunique() > 1 else str(row.policy)
        for row in table.itertuples()
    ]
    positions = np.arange(len(table))
    ax.bar(positions, table["mean"].to_numpy(), yerr=table["sd"].to_numpy(),
           capsize=3, color="steelblue")
    ax.set_xticks(positions)
    ax.set_xticklabels(labels, fontsize="small")
    ax.set_ylabel("mean over replicates")
    stem = filename.rsplit(".", 1)[0]
    return [_save(fig, run_dir / f"{stem}.png")]


def render_simulate(run_dir) -> list[Path]:
    """Dispatch on whichever experiment table the run emitted."""
    run_dir = Path(run_dir)
    if (run_dir / "curves.csv").is_file():
        return _render_waveform(run_dir)
    if (run_dir / "inclusion.csv").is_file():
        return _render_rate_table(run_dir, "inclusion.csv")
    if (run_dir / "metrics.csv").is_file():
        return _render_rate_table(run_dir, "metrics.csv")
    raise InputError(f"{run_dir} holds no experiment table to render")


def render_detect(run_dir) -> list[Path]:
    """Residual norms against the box-plot fence, flags in red."""
    run_dir = Path(run_dir)
    table = pd.read_csv(run_dir / "detection.csv")
    manifest = _read_manifest(run_dir)
    fence = float(manifest["fence"])
    norms = table["residual_norm"].to_numpy(dtype=float)
    flagged = table["flagged"].to_numpy(dtype=bool)
    positions = np.arange(len(table))

    fig, ax = plt.subplots(figsize=(7.0, 4.0))
    ax.scatter(positions[~flagged], norms[~flagged], s=14, color="steelblue",
               label="kept")
    if flagged.any():
        ax.scatter(positions[flagged], norms[flagged], s=20, color="crimson",
                   label="flagged")
    ax.axhline(fence, color="0.3", linestyle="--", linewidth=1.0,
               label="fence")
    ax.set_xlabel("record")
    ax.set_ylabel("residual norm")
    ax.legend(fontsize="small")
    return [_save(fig, run_dir / "detection.png")]


def render_smooth(run_dir) -> list[Path]:
    """Reconstruct the smoothed records on a dense grid and plot them."""
    run_dir = Path(run_dir)
    with open(run_dir / "basis.json") as fh:
        sidecar = json.load(fh)
    basis = BasisSystem.from_dict(sidecar["basis"])
    coefficients = pd.read_csv(run_dir / "coeffs.csv", index_col=0)
    n_variables = int(sidecar.get("n_variables", 1))
    grid = np.linspace(basis.domain[0], basis.domain[1], 200)
    design = basis.evaluate(grid)

    out = []
    for p in range(n_variables):
        block = coefficients.to_numpy(dtype=float)[:, p * basis.m:(p + 1) * basis.m]
        fig, ax = plt.subplots(figsize=(7.0, 4.0))
        for row in block[:_MAX_CURVES]:
            ax.plot(grid, design @ row, linewidth=0.8)
        ax.set_xlabel("t")
        ax.set_ylabel("value")
        suffix = f"_{p}" if n_variables > 1 else ""
        out.append(_save(fig, run_dir / f"smoothed{suffix}.png"))
    return out


def _sector_weight_heatmap(run_dir: Path) -> Path:
    weights = pd.read_csv(run_dir / "sector_weights.csv", index_col=0)
    fig, ax = plt.subplots(figsize=(6.5, 4.5))
    image = ax.imshow(weights.to_numpy(dtype=float), aspect="auto", cmap="magma")
    fig.colorbar(image, ax=ax, label="normalized weight")
    ax.set_yticks(range(len(weights.index)))
    ax.set_yticklabels([str(s) for s in weights.index], fontsize="small")
    ax.set_xticks(range(len(weights.columns)))
    ax.set_xticklabels([str(c) for c in weights.columns], fontsize="small")
    ax.set_xlabel("archetypoid")
    return _save(fig, run_dir / "sector_weights.png")


def render_taxonomy(run_dir) -> list[Path]:
    """Cluster-kind counts plus the sector weight heatmap if present."""
    run_dir = Path(run_dir)
    assignments = pd.read_csv(run_dir / "assignments.csv")
    counts = assignments["kind"].value_counts().sort_index()
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.bar(range(len(counts)), counts.to_numpy(), color="steelblue")
    ax.set_xticks(range(len(counts)))
    ax.set_xticklabels(list(counts.index))
    ax.set_ylabel("records")
    out = [_save(fig, run_dir / "clusters.png")]
    if (run_dir / "sector_weights.csv").is_file():
        out.append(_sector_weight_heatmap(run_dir))
    return out


def render_finance(run_dir) -> list[Path]:
    """Objective-versus-k curve plus the taxonomy figures."""
    run_dir = Path(run_dir)
    summary = pd.read_csv(run_dir / "summary.csv")
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot(summary["k"].to_numpy(), summary["objective"].to_numpy(), marker="o")
    ax.set_xlabel("k")
    ax.set_ylabel("objective")
    ax.set_xticks(summary["k"].to_numpy())
    out = [_save(fig, run_dir / "elbow.png")]
    out.extend(render_taxonomy(run_dir))
    return out


_RENDERERS = {
    "fit": render_fit,
    "simulate": render_simulate,
    "detect": render_detect,
    "smooth": render_smooth,
    "taxonomy": render_taxonomy,
    "finance": render_finance,
}


def render_run(run_dir) -> list[Path]:
    """Render every figure a run directory supports, via its manifest."""
    run_dir = Path(run_dir)
    manifest = _read_manifest(run_dir)
    subcommand = manifest.get("subcommand")
    renderer = _RENDERERS.get(subcommand)
    if renderer is None:
        raise InputError(f"no figures defined for subcommand {subcommand!r}")
    return renderer(run_dir)
