"""Basis expansion for functional data and functional archetype fitting.

Curves enter as coefficient vectors in a fixed basis; the integrated
squared error between curves is then a quadratic form in coefficient
space,

    integral (x(t) - y(t))^2 dt = (a - b)' W (a - b),

with W the basis Gram matrix.  Fourier bases are orthonormal (W = I), so
fitting on coefficients is the plain multivariate problem; for B-splines
W comes from composite Simpson quadrature.  Fitting folds W in through
its Cholesky factor: rotating every coefficient block b -> b L (W = L L')
turns W-norms into Euclidean norms, so the multivariate solvers apply
unchanged, and archetypes are mapped back to original coordinates through
their beta weights.  With P variables per record, blocks are concatenated
and the objective adds across blocks.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.interpolate import BSpline

from .archetypes import ArchetypalModel, FitOptions, fit_aa
from .errors import InputError
from .losses import LossSpec

_FAMILIES = ("fourier", "cubic_bspline")
_DEFAULT_QUAD_NODES = 2001


@dataclass(frozen=True)
class BasisSystem:
    """A univariate basis: family, size m, domain and Gram matrix."""

    family: str
    m: int
    domain: tuple[float, float]
    gram: np.ndarray = field(repr=False)
    quad_nodes: int = _DEFAULT_QUAD_NODES

    @classmethod
    def create(cls, family: str, m: int, domain,
               quad_nodes: int = _DEFAULT_QUAD_NODES) -> "BasisSystem":
        if family not in _FAMILIES:
            raise InputError(f"unknown basis family {family!r}")
        lo, hi = float(domain[0]), float(domain[1])
        if not lo < hi:
            raise InputError("domain must satisfy lower < upper")
        if int(m) != m or m < 1:
            raise InputError("m must be a positive integer")
        m = int(m)
        if family == "cubic_bspline" and m < 4:
            raise InputError("cubic B-spline basis needs m >= 4")
        if quad_nodes < 2001:
            raise InputError("quadrature needs at least 2001 nodes")
        if quad_nodes % 2 == 0:
            quad_nodes += 1
        basis = cls(family=family, m=m, domain=(lo, hi),
                    gram=np.empty((0, 0)), quad_nodes=quad_nodes)
        gram = basis._compute_gram()
        sym_gap = float(np.abs(gram - gram.T).max())
        if sym_gap > 1e-10:
            raise InputError("gram matrix failed the symmetry check")
        gram = 0.5 * (gram + gram.T)
        try:
            np.linalg.cholesky(gram)
        except np.linalg.LinAlgError as exc:
            raise InputError("gram matrix is not positive definite") from exc
        object.__setattr__(basis, "gram", gram)
        return basis

    def _knots(self) -> np.ndarray:
        lo, hi = self.domain
        breaks = np.linspace(lo, hi, self.m - 2)
        return np.concatenate([[lo] * 4, breaks[1:-1], [hi] * 4])

    def evaluate(self, t) -> np.ndarray:
        """Basis design matrix at the given points, shape (len(t), m)."""
        t = np.asarray(t, dtype=float)
        lo, hi = self.domain
        if t.ndim != 1 or t.size == 0:
            raise InputError("evaluation points must be a nonempty 1-d array")
        if t.min() < lo - 1e-12 or t.max() > hi + 1e-12:
            raise InputError("evaluation points fall outside the basis domain")
        t = np.clip(t, lo, hi)
        if self.family == "fourier":
            width = hi - lo
            out = np.empty((t.size, self.m))
            out[:, 0] = 1.0 / np.sqrt(width)
            amp = np.sqrt(2.0 / width)
            for col in range(1, self.m):
                h = (col + 1) // 2
                phase = 2.0 * np.pi * h * (t - lo) / width
                out[:, col] = amp * (np.sin(phase) if col % 2 == 1 else np.cos(phase))
            return out
        design = BSpline.design_matrix(t, self._knots(), 3, extrapolate=False)
        return design.toarray()

    def _compute_gram(self) -> np.ndarray:
        # Fourier bases are orthonormal on a full period, exactly.
        if self.family == "fourier":
            return np.eye(self.m)
        lo, hi = self.domain
        xs = np.linspace(lo, hi, self.quad_nodes)
        B = self.evaluate(xs)
        h = (hi - lo) / (self.quad_nodes - 1)
        w = np.full(self.quad_nodes, 2.0)
        w[1::2] = 4.0
        w[0] = w[-1] = 1.0
        w *= h / 3.0
        return (B * w[:, None]).T @ B

    def describe(self) -> dict:
        return {
            "family": self.family,
            "m": self.m,
            "domain": [self.domain[0], self.domain[1]],
            "quad_nodes": self.quad_nodes,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "BasisSystem":
        return cls.create(
            payload["family"], payload["m"], payload["domain"],
            payload.get("quad_nodes", _DEFAULT_QUAD_NODES),
        )


def gram_matrix(basis: BasisSystem) -> np.ndarray:
    """The (m, m) matrix of pairwise basis inner products."""
    return basis.gram.copy()


@dataclass
class FunctionalDataset:
    """n records, each P coefficient blocks of length m, side by side.

    Column layout: variable p occupies columns [p*m, (p+1)*m).  The
    standardization record, when present, holds per-variable centering
    vectors and scales so the transform can be inverted exactly.
    """

    coefficients: np.ndarray
    basis: BasisSystem
    n_variables: int = 1
    record_labels: list[str] = field(default_factory=list)
    variable_labels: list[str] = field(default_factory=list)
    standardization: dict | None = None

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        if self.coefficients.ndim != 2:
            raise InputError("coefficients must be 2-d")
        if not np.all(np.isfinite(self.coefficients)):
            raise InputError("coefficients must be finite")
        if self.coefficients.shape[1] != self.n_variables * self.basis.m:
            raise InputError("coefficient width must equal n_variables * m")
        n = self.coefficients.shape[0]
        if not self.record_labels:
            self.record_labels = [str(i) for i in range(n)]
        if len(self.record_labels) != n:
            raise InputError("record_labels length mismatch")
        if not self.variable_labels:
            self.variable_labels = [f"var{p}" for p in range(self.n_variables)]
        if len(self.variable_labels) != self.n_variables:
            raise InputError("variable_labels length mismatch")

    @property
    def n_records(self) -> int:
        return self.coefficients.shape[0]

    def block(self, p: int) -> np.ndarray:
        m = self.basis.m
        return self.coefficients[:, p * m:(p + 1) * m]

    def to_csv(self, path, sidecar_path) -> None:
        cols = [
            f"{self.variable_labels[p]}_{j}"
            for p in range(self.n_variables)
            for j in range(self.basis.m)
        ]
        frame = pd.DataFrame(self.coefficients, index=self.record_labels, columns=cols)
        frame.to_csv(path, index_label="record")
        sidecar = {
            "basis": self.basis.describe(),
            "n_variables": self.n_variables,
            "variable_labels": self.variable_labels,
            "standardization": self.standardization,
        }
        with open(sidecar_path, "w") as fh:
            json.dump(sidecar, fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_csv(cls, path, sidecar_path) -> "FunctionalDataset":
        try:
            with open(sidecar_path) as fh:
                sidecar = json.load(fh)
            frame = pd.read_csv(path, index_col=0)
        except (OSError, ValueError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read functional dataset: {exc}") from exc
        return cls(
            coefficients=frame.to_numpy(dtype=float),
            basis=BasisSystem.from_dict(sidecar["basis"]),
            n_variables=int(sidecar.get("n_variables", 1)),
            record_labels=[str(r) for r in frame.index],
            variable_labels=list(sidecar.get("variable_labels", [])),
            standardization=sidecar.get("standardization"),
        )


def smooth(samples, basis: BasisSystem, labels=None) -> FunctionalDataset:
    """Least-squares projection of sampled records onto the basis.

    ``samples`` is a sequence of (points, values) pairs, one per record,
    each fit by ordinary least squares on its own observation points.  A
    record with fewer than m points (or points outside the domain) is an
    error that names the record.
    """
    rows = []
    labels = list(labels) if labels is not None else None
    for r, (points, values) in enumerate(samples):
        name = labels[r] if labels else str(r)
        points = np.asarray(points, dtype=float)
        values = np.asarray(values, dtype=float)
        if points.shape != values.shape or points.ndim != 1:
            raise InputError(f"record {name}: points and values disagree")
        if points.size < basis.m:
            raise InputError(
                f"record {name}: {points.size} points cannot support m={basis.m}"
            )
        try:
            design = basis.evaluate(points)
        except InputError as exc:
            raise InputError(f"record {name}: {exc}") from exc
        coef, *_ = np.linalg.lstsq(design, values, rcond=None)
        rows.append(coef)
    if not rows:
        raise InputError("no records to smooth")
    return FunctionalDataset(
        coefficients=np.vstack(rows), basis=basis,
        record_labels=labels or [],
    )


def select_basis_count(samples, family: str, m_range) -> tuple[int, list[tuple[int, float]]]:
    """Pick a basis size by pooled-variance flattening.

    For every m in the (contiguous, ascending) range the pooled unbiased
    residual variance sum(res^2) / sum(points_i - m) is computed; the
    selected m is the smallest whose relative decrease versus m - 1 falls
    below 5% (an already-negligible previous variance counts as
    converged).  Returns (selected_m, full curve); if the curve never
    flattens the largest m is returned.
    """
    m_list = [int(m) for m in m_range]
    if not m_list or any(b - a != 1 for a, b in zip(m_list, m_list[1:])):
        raise InputError("m_range must be a contiguous ascending range")
    pts = [np.asarray(p, dtype=float) for p, _ in samples]
    if not pts:
        raise InputError("no records given")
    lo = min(float(p.min()) for p in pts)
    hi = max(float(p.max()) for p in pts)
    curve = []
    for m in m_list:
        basis = BasisSystem.create(family, m, (lo, hi))
        rss = 0.0
        dof = 0
        for r, (points, values) in enumerate(samples):
            points = np.asarray(points, dtype=float)
            values = np.asarray(values, dtype=float)
            if points.size <= m:
                raise InputError(
                    f"record {r}: needs more than m={m} points for the variance pool"
                )
            design = basis.evaluate(points)
            coef, *_ = np.linalg.lstsq(design, values, rcond=None)
            res = values - design @ coef
            rss += float(res @ res)
            dof += points.size - m
        curve.append((m, rss / dof))
    first = max(curve[0][1], 1e-300)
    for i in range(1, len(curve)):
        prev, cur = curve[i - 1][1], curve[i][1]
        if prev <= 1e-12 * first:
            return curve[i][0], curve
        if (prev - cur) / prev < 0.05:
            return curve[i][0], curve
    return curve[-1][0], curve


def standardize(dataset: FunctionalDataset) -> FunctionalDataset:
    """Center each variable and scale it to unit mean integrated squared
    deviation, recording the transform for exact inversion.

    A variable with zero variance cannot be scaled and raises an error
    naming it.  Applying the function twice is a (floating point) no-op.
    """
    W = dataset.basis.gram
    blocks = []
    means = []
    scales = []
    for p in range(dataset.n_variables):
        A = dataset.block(p)
        mean = A.mean(axis=0)
        centered = A - mean
        msd = float(np.einsum("ij,jk,ik->", centered, W, centered)) / A.shape[0]
        if msd <= 0.0:
            raise InputError(
                f"variable {dataset.variable_labels[p]!r} has zero variance"
            )
        scale = float(np.sqrt(msd))
        blocks.append(centered / scale)
        means.append(mean.tolist())
        scales.append(scale)
    return FunctionalDataset(
        coefficients=np.hstack(blocks),
        basis=dataset.basis,
        n_variables=dataset.n_variables,
        record_labels=list(dataset.record_labels),
        variable_labels=list(dataset.variable_labels),
        standardization={"means": means, "scales": scales},
    )


def unstandardize(dataset: FunctionalDataset) -> FunctionalDataset:
    """Invert :func:`standardize` using the recorded transform."""
    if dataset.standardization is None:
        raise InputError("dataset carries no standardization record")
    means = dataset.standardization["means"]
    scales = dataset.standardization["scales"]
    blocks = [
        dataset.block(p) * scales[p] + np.asarray(means[p])
        for p in range(dataset.n_variables)
    ]
    return FunctionalDataset(
        coefficients=np.hstack(blocks),
        basis=dataset.basis,
        n_variables=dataset.n_variables,
        record_labels=list(dataset.record_labels),
        variable_labels=list(dataset.variable_labels),
    )


def combine_variables(datasets, variable_labels=None) -> FunctionalDataset:
    """Concatenate per-variable datasets that share basis and records."""
    if not datasets:
        raise InputError("no datasets to combine")
    base = datasets[0]
    for ds in datasets[1:]:
        if ds.basis.describe() != base.basis.describe():
            raise InputError("datasets use different bases")
        if ds.record_labels != base.record_labels:
            raise InputError("datasets disagree on records")
        if ds.n_variables != 1:
            raise InputError("combine_variables expects univariate inputs")
    return FunctionalDataset(
        coefficients=np.hstack([ds.coefficients for ds in datasets]),
        basis=base.basis,
        n_variables=len(datasets),
        record_labels=list(base.record_labels),
        variable_labels=list(variable_labels) if variable_labels else [],
    )


def _rotation(basis: BasisSystem) -> np.ndarray | None:
    """Cholesky factor L with W = L L', or None when W is the identity."""
    if np.array_equal(basis.gram, np.eye(basis.m)):
        return None
    return np.linalg.cholesky(basis.gram)


def _rotate_blocks(dataset: FunctionalDataset, L) -> np.ndarray:
    if L is None:
        return dataset.coefficients.copy()
    return np.hstack([dataset.block(p) @ L for p in range(dataset.n_variables)])


def functional_fit(dataset: FunctionalDataset, k, options: FitOptions | None = None,
                   loss: LossSpec | None = None, mode: str = "aa") -> ArchetypalModel:
    """Fit archetypes or archetypoids to functional data.

    The coefficient blocks are rotated by the Gram Cholesky factor so the
    multivariate fitters minimize the integrated squared error exactly;
    the returned archetypes are expressed in original coefficient
    coordinates (beta-mixtures of the raw coefficient rows), while alpha,
    beta and the objective are those of the rotated fit.
    """
    if mode not in ("aa", "ada"):
        raise InputError(f"mode must be 'aa' or 'ada', got {mode!r}")
    loss = loss or LossSpec.squared()
    options = options or FitOptions()
    L = _rotation(dataset.basis)
    rotated = _rotate_blocks(dataset, L)

    if mode == "aa" and loss.family == "squared":
        model = fit_aa(rotated, k, options)
    elif mode == "aa":
        from .robust import fit_robust_aa

        model = fit_robust_aa(rotated, k, options, loss)
    else:
        from .archetypoids import fit_ada

        model = fit_ada(rotated, k, options, loss)

    if L is None:
        return model
    if model.member_indices is not None:
        archetypes = dataset.coefficients[list(model.member_indices)].copy()
    else:
        archetypes = model.beta @ dataset.coefficients
    return ArchetypalModel(
        k=model.k,
        archetypes=archetypes,
        alpha=model.alpha,
        beta=model.beta,
        objective=model.objective,
        loss=model.loss,
        member_indices=model.member_indices,
        trajectory=model.trajectory,
    )


def functional_residual_norms(dataset: FunctionalDataset,
                              model: ArchetypalModel) -> np.ndarray:
    """Per-record W-norm residuals against the model's alpha mixtures."""
    resid = dataset.coefficients - model.alpha @ model.archetypes
    W = dataset.basis.gram
    m = dataset.basis.m
    sq = np.zeros(dataset.n_records)
    for p in range(dataset.n_variables):
        block = resid[:, p * m:(p + 1) * m]
        sq += np.einsum("ij,jk,ik->i", block, W, block)
    return np.sqrt(np.clip(sq, 0.0, None))


def functional_rss(dataset: FunctionalDataset, model: ArchetypalModel) -> float:
    """Integrated squared reconstruction error, summed over records."""
    norms = functional_residual_norms(dataset, model)
    return float((norms * norms).sum())
