"""Seeded synthetic data generators used by the experiments.

Two families: a three-class waveform model (pairwise mixtures of shifted
triangular components plus white noise) and a contaminated functional
model (one Gaussian-process band of curves with a fraction of the records
swapped to a mirrored mean shape).  All randomness flows from one explicit
seed; equal seeds give bit-identical output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import InputError


def _default_waveform_grid() -> np.ndarray:
    return np.linspace(1.0, 21.0, 101)


@dataclass(frozen=True)
class WaveformSpec:
    n_per_class: int = 150
    noise_sd: float = 1.0
    grid: np.ndarray = field(default_factory=_default_waveform_grid)

    def __post_init__(self):
        if int(self.n_per_class) != self.n_per_class or self.n_per_class < 1:
            raise InputError("n_per_class must be a positive integer")
        if self.noise_sd < 0:
            raise InputError("noise_sd must be nonnegative")
        grid = np.asarray(self.grid, dtype=float)
        if grid.ndim != 1 or grid.size < 2 or np.any(np.diff(grid) <= 0):
            raise InputError("grid must be strictly increasing")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "n_per_class", int(self.n_per_class))


def waveform_components(grid) -> np.ndarray:
    """The three noiseless triangle components, rows h1, h2, h3."""
    t = np.asarray(grid, dtype=float)
    h1 = np.maximum(6.0 - np.abs(t - 11.0), 0.0)
    h2 = np.maximum(6.0 - np.abs(t - 15.0), 0.0)  # h1 shifted right by 4
    h3 = np.maximum(6.0 - np.abs(t - 7.0), 0.0)   # h1 shifted left by 4
    return np.vstack([h1, h2, h3])


@dataclass(frozen=True)
class WaveformSample:
    curves: np.ndarray
    class_labels: np.ndarray
    components: np.ndarray
    grid: np.ndarray


# Class c mixes components pair_c with weight u ~ U[0, 1].
_CLASS_PAIRS = ((0, 1), (0, 2), (1, 2))


def gen_waveform(spec: WaveformSpec, seed: int) -> WaveformSample:
    """Draw 3 * n_per_class waveform curves (classes in order 1, 2, 3)."""
    rng = np.random.default_rng(seed)
    comps = waveform_components(spec.grid)
    n = spec.n_per_class
    g = spec.grid.size
    curves = np.empty((3 * n, g))
    labels = np.empty(3 * n, dtype=int)
    for c, (a, b) in enumerate(_CLASS_PAIRS):
        u = rng.uniform(size=(n, 1))
        noise = spec.noise_sd * rng.standard_normal((n, g))
        curves[c * n:(c + 1) * n] = u * comps[a] + (1.0 - u) * comps[b] + noise
        labels[c * n:(c + 1) * n] = c + 1
    return WaveformSample(curves=curves, class_labels=labels,
                          components=comps, grid=spec.grid.copy())


@dataclass(frozen=True)
class ContaminationSpec:
    n: int = 100
    contamination_rate: float = 0.0
    grid_size: int = 50
    gp_scale: float = 0.3
    gp_range: float = 0.3

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise InputError("n must be a positive integer")
        if not 0.0 <= self.contamination_rate <= 1.0:
            raise InputError("contamination_rate must lie in [0, 1]")
        if int(self.grid_size) != self.grid_size or self.grid_size < 2:
            raise InputError("grid_size must be an integer >= 2")
        if self.gp_scale <= 0 or self.gp_range <= 0:
            raise InputError("gp_scale and gp_range must be positive")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "grid_size", int(self.grid_size))

    @property
    def n_outliers(self) -> int:
        return math.ceil(self.contamination_rate * self.n)


@dataclass(frozen=True)
class ContaminatedSample:
    curves: np.ndarray
    outlier_flags: np.ndarray
    grid: np.ndarray


def main_mean(t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    return 30.0 * t * (1.0 - t) ** 1.5


def contaminated_mean(t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    return 30.0 * t ** 1.5 * (1.0 - t)


def gp_covariance(grid, scale: float, corr_range: float) -> np.ndarray:
    t = np.asarray(grid, dtype=float)
    return scale * np.exp(-np.abs(t[:, None] - t[None, :]) / corr_range)


def gen_contaminated(spec: ContaminationSpec, seed: int) -> ContaminatedSample:
    """Draw n curves on [0, 1]; exactly ceil(cr * n) carry the outlier mean.

    Outlier positions are a seeded shuffle; the zero-mean noise process is
    drawn through the Cholesky factor of the exponential covariance (with
    1e-10 jitter on the diagonal).
    """
    rng = np.random.default_rng(seed)
    grid = np.linspace(0.0, 1.0, spec.grid_size)
    flags = np.zeros(spec.n, dtype=bool)
    flags[rng.permutation(spec.n)[:spec.n_outliers]] = True
    cov = gp_covariance(grid, spec.gp_scale, spec.gp_range)
    chol = np.linalg.cholesky(cov + 1e-10 * np.eye(spec.grid_size))
    noise = rng.standard_normal((spec.n, spec.grid_size)) @ chol.T
    means = np.where(flags[:, None], contaminated_mean(grid), main_mean(grid))
    return ContaminatedSample(curves=means + noise, outlier_flags=flags, grid=grid)


def curves_to_csv(curves, grid, path, labels=None) -> None:
    """Records-by-grid CSV; header holds the grid points."""
    curves = np.asarray(curves, dtype=float)
    if labels is None:
        labels = [f"r{i}" for i in range(curves.shape[0])]
    frame = pd.DataFrame(curves, index=labels, columns=[f"{t:g}" for t in grid])
    frame.to_csv(path, index_label="record")


def curves_from_csv(path):
    """Inverse of :func:`curves_to_csv`; returns (curves, grid, labels)."""
    try:
        frame = pd.read_csv(path, index_col=0)
        grid = np.array([float(c) for c in frame.columns])
    except (OSError, ValueError, pd.errors.ParserError) as exc:
        raise InputError(f"cannot read curves from {path}: {exc}") from exc
    return frame.to_numpy(dtype=float), grid, [str(r) for r in frame.index]


def waveform_manifest(spec: WaveformSpec, seed: int, sample: WaveformSample) -> dict:
    return {
        "generator": "waveform",
        "spec": {
            "n_per_class": spec.n_per_class,
            "noise_sd": spec.noise_sd,
            "grid": [float(t) for t in spec.grid],
        },
        "seed": seed,
        "class_labels": [int(c) for c in sample.class_labels],
    }


def contamination_manifest(spec: ContaminationSpec, seed: int,
                           sample: ContaminatedSample) -> dict:
    return {
        "generator": "contaminated",
        "spec": {
            "n": spec.n,
            "contamination_rate": spec.contamination_rate,
            "grid_size": spec.grid_size,
            "gp_scale": spec.gp_scale,
            "gp_range": spec.gp_range,
        },
        "seed": seed,
        "outlier_flags": [bool(f) for f in sample.outlier_flags],
    }
