"""Archetypal analysis by alternating constrained least squares.

A k-archetype model approximates each case as a convex combination of
archetypes (rows of Z), each archetype itself a convex combination of the
cases:

    RSS = sum_i || x_i - sum_j alpha_ij z_j ||^2,    z_j = sum_l beta_jl x_l

with every alpha row and beta row on the probability simplex.  Both half
steps reduce to sum-to-one constrained NNLS.  The beta half step updates
one archetype at a time (exact block coordinate descent), which keeps the
objective monotonically non-increasing; an explicit keep-if-better guard
makes that unconditional under floating point.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import json

import numpy as np
import scipy.optimize

from .data import DataMatrix
from .errors import InputError
from .losses import LossSpec
from .nnls import (
    DEFAULT_PENALTY_WEIGHT,
    SimplexLsProblem,
    batch_simplex_lstsq,
    solve_simplex_ls,
)

_SIMPLEX_TOL = 1e-6


@dataclass
class FitOptions:
    """Knobs shared by every fitting entry point.

    restarts : independent random initializations, best objective wins.
    max_iters : alternating iterations per restart.
    rel_tol : stop when the relative objective change drops below this.
    seed : root seed for all randomness in the fit.
    penalty_weight : sum-to-one penalty passed to the subproblem solver.
    """

    restarts: int = 10
    max_iters: int = 100
    rel_tol: float = 1e-6
    seed: int = 0
    penalty_weight: float = DEFAULT_PENALTY_WEIGHT

    def __post_init__(self):
        if int(self.restarts) != self.restarts or self.restarts < 1:
            raise InputError("restarts must be an integer >= 1")
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise InputError("max_iters must be an integer >= 1")
        if not self.rel_tol >= 0:
            raise InputError("rel_tol must be nonnegative")
        if not self.penalty_weight > 0:
            raise InputError("penalty_weight must be positive")
        self.restarts = int(self.restarts)
        self.max_iters = int(self.max_iters)


@dataclass
class ArchetypalModel:
    """Fitted archetype (or archetypoid) model.

    member_indices is set only for archetypoid models, where every
    archetype is one of the observed cases and beta rows are indicators.
    trajectory holds the per-iteration objective of the winning restart.
    """

    k: int
    archetypes: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    objective: float
    loss: LossSpec
    member_indices: list[int] | None = None
    trajectory: list[float] = field(default_factory=list)

    def __post_init__(self):
        self.archetypes = np.asarray(self.archetypes, dtype=float)
        self.alpha = np.asarray(self.alpha, dtype=float)
        self.beta = np.asarray(self.beta, dtype=float)
        k = self.k
        if self.archetypes.shape[0] != k or self.alpha.shape[1] != k \
                or self.beta.shape[0] != k:
            raise InputError("model blocks disagree on k")
        if self.alpha.shape[0] != self.beta.shape[1]:
            raise InputError("alpha and beta disagree on the number of cases")
        for name, mat in (("alpha", self.alpha), ("beta", self.beta)):
            if mat.min() < -_SIMPLEX_TOL or \
                    np.abs(mat.sum(axis=1) - 1.0).max() > _SIMPLEX_TOL:
                raise InputError(f"{name} rows are off the simplex")

    @property
    def n_cases(self) -> int:
        return self.alpha.shape[0]


def as_values(data) -> np.ndarray:
    if isinstance(data, DataMatrix):
        return data.values
    arr = np.asarray(data, dtype=float)
    if arr.ndim != 2:
        raise InputError("data must be a DataMatrix or 2-d array")
    if not np.all(np.isfinite(arr)):
        raise InputError("data must be finite")
    return arr


def _check_k(k, n) -> int:
    if int(k) != k or not 1 <= k <= n:
        raise InputError(f"k must be an integer in [1, {n}], got {k!r}")
    return int(k)


def _alpha_step(X, Z, alpha_old, penalty):
    """Refit alpha rows; never accept a per-case regression."""
    result = batch_simplex_lstsq(Z, X, penalty)
    alpha, case_rss = result.weights, result.sq_residuals
    if alpha_old is not None:
        old_resid = X - alpha_old @ Z
        old_rss = np.einsum("ij,ij->i", old_resid, old_resid)
        worse = case_rss > old_rss
        if worse.any():
            alpha[worse] = alpha_old[worse]
            case_rss[worse] = old_rss[worse]
    return alpha, case_rss


def _beta_step(X, alpha, beta, case_weights, penalty):
    """Exact block update of each beta row; returns (beta, Z).

    With case weights w the block target for archetype j is
    v_j = sum_i w_i alpha_ij R_i / sum_i w_i alpha_ij^2 over the residual
    matrix R that excludes archetype j; weighting scales residual rows
    only, the atoms stay the observed cases.
    """
    n = X.shape[0]
    k = beta.shape[0]
    w = np.ones(n) if case_weights is None else case_weights
    beta = beta.copy()
    Z = beta @ X
    R = X - alpha @ Z
    design = X.T
    for j in range(k):
        aj = alpha[:, j]
        waj = w * aj
        s = float(waj @ aj)
        if s <= 1e-12:
            continue
        Rj = R + np.outer(aj, Z[j])
        v = (waj @ Rj) / s
        beta_j = solve_simplex_ls(SimplexLsProblem(design, v, penalty))
        z_new = beta_j @ X
        old_gap = Z[j] - v
        new_gap = z_new - v
        if new_gap @ new_gap < old_gap @ old_gap:
            beta[j] = beta_j
            Z[j] = z_new
        R = Rj - np.outer(aj, Z[j])
    return beta, Z


def _weighted_pass(X, alpha, beta, case_weights, penalty):
    """One alternating pass (alpha then beta) under fixed case weights."""
    Z = beta @ X
    alpha, _ = _alpha_step(X, Z, alpha, penalty)
    beta, Z = _beta_step(X, alpha, beta, case_weights, penalty)
    return alpha, beta, Z


def _total_rss(X, alpha, Z) -> float:
    resid = X - alpha @ Z
    return float(np.einsum("ij,ij->", resid, resid))


def _run_restart(X, k, options, beta_init):
    alpha = None
    beta = beta_init
    Z = beta @ X
    trajectory = []
    prev = np.inf
    for _ in range(options.max_iters):
        alpha, _ = _alpha_step(X, Z, alpha, options.penalty_weight)
        beta, Z = _beta_step(X, alpha, beta, None, options.penalty_weight)
        rss = _total_rss(X, alpha, Z)
        trajectory.append(rss)
        if prev < np.inf and abs(prev - rss) <= options.rel_tol * max(prev, 1e-300):
            break
        prev = rss
    alpha, case_rss = _alpha_step(X, Z, alpha, options.penalty_weight)
    rss = float(case_rss.sum())
    trajectory.append(rss)
    return alpha, beta, Z, rss, trajectory


def _dirichlet_rows(rng, rows, n) -> np.ndarray:
    return rng.dirichlet(np.ones(n), size=rows)


def _fit_aa_core(X, k, options, warm_beta=None, seed_seq=None):
    n = X.shape[0]
    if seed_seq is None:
        seed_seq = np.random.SeedSequence(options.seed)
    children = seed_seq.spawn(options.restarts)
    best = None
    for r in range(options.restarts):
        rng = np.random.default_rng(children[r])
        if r == 0 and warm_beta is not None:
            beta0 = warm_beta
        else:
            beta0 = _dirichlet_rows(rng, k, n)
        alpha, beta, Z, rss, traj = _run_restart(X, k, options, beta0)
        if best is None or rss < best[3]:
            best = (alpha, beta, Z, rss, traj)
    return best


def fit_aa(data, k, options: FitOptions | None = None) -> ArchetypalModel:
    """Fit a k-archetype model under squared loss.

    Runs ``options.restarts`` random starts (flat Dirichlet beta rows) and
    returns the best.  The reported objective is the residual sum of
    squares of the returned alpha and Z, identical to
    ``compute_rss(data, model)``.
    """
    X = as_values(data)
    k = _check_k(k, X.shape[0])
    options = options or FitOptions()
    alpha, beta, Z, rss, traj = _fit_aa_core(X, k, options)
    return ArchetypalModel(
        k=k, archetypes=Z, alpha=alpha, beta=beta, objective=rss,
        loss=LossSpec.squared(), trajectory=traj,
    )


def compute_rss(data, model: ArchetypalModel) -> float:
    """Residual sum of squares of the model on the data."""
    X = as_values(data)
    if X.shape[0] != model.alpha.shape[0] or X.shape[1] != model.archetypes.shape[1]:
        raise InputError("data shape does not match the model")
    return _total_rss(X, model.alpha, model.archetypes)


def elbow_scan(data, k_min: int, k_max: int,
               options: FitOptions | None = None) -> list[tuple[int, float]]:
    """Objective curve over a k range with warm-started restarts.

    The k-archetype solution seeds one restart at k + 1 (its beta plus one
    fresh Dirichlet row), so the curve is non-increasing in k.  Use
    :func:`suggest_elbow` on the result; no k is selected silently.
    """
    X = as_values(data)
    n = X.shape[0]
    k_min = _check_k(k_min, n)
    k_max = _check_k(k_max, n)
    if k_min > k_max:
        raise InputError("k_min must not exceed k_max")
    options = options or FitOptions()
    root = np.random.SeedSequence(options.seed)
    curve = []
    warm = None
    for k in range(k_min, k_max + 1):
        alpha, beta, Z, rss, _ = _fit_aa_core(
            X, k, options, warm_beta=warm, seed_seq=root.spawn(1)[0]
        )
        curve.append((k, rss))
        extra = _dirichlet_rows(np.random.default_rng(root.spawn(1)[0]), 1, n)
        warm = np.vstack([beta, extra])
    return curve


def suggest_elbow(curve: list[tuple[int, float]]) -> int | None:
    """k with the largest second difference of the objective curve.

    Needs at least three points; returns None otherwise.  This is a
    suggestion for inspection, not an automatic selection.
    """
    if len(curve) < 3:
        return None
    ks = [k for k, _ in curve]
    obj = [o for _, o in curve]
    second = [obj[i - 1] - 2.0 * obj[i] + obj[i + 1] for i in range(1, len(obj) - 1)]
    return ks[1 + int(np.argmax(second))]


def model_distance(a: ArchetypalModel, b: ArchetypalModel) -> float:
    """Frobenius distance between archetype sets after optimal matching.

    Rows are matched one-to-one by minimum-cost assignment on pairwise
    Euclidean distances, then the Frobenius norm of the aligned difference
    is returned.
    """
    if a.k != b.k:
        raise InputError("models have different k")
    if a.archetypes.shape[1] != b.archetypes.shape[1]:
        raise InputError("models have different variable counts")
    diff = a.archetypes[:, None, :] - b.archetypes[None, :, :]
    cost = np.sqrt(np.einsum("ijm,ijm->ij", diff, diff))
    rows, cols = scipy.optimize.linear_sum_assignment(cost)
    aligned = a.archetypes[rows] - b.archetypes[cols]
    return float(np.linalg.norm(aligned))


def model_to_json(model: ArchetypalModel, row_labels=None) -> dict:
    """JSON-ready description: k, loss, objective, weights, members."""
    payload = {
        "k": model.k,
        "loss": model.loss.describe(),
        "objective": model.objective,
        "alpha": model.alpha.tolist(),
        "beta": model.beta.tolist(),
        "archetypes": model.archetypes.tolist(),
    }
    if model.member_indices is not None:
        payload["member_indices"] = list(model.member_indices)
        if row_labels is not None:
            payload["member_labels"] = [row_labels[i] for i in model.member_indices]
    return payload


def write_model_json(model: ArchetypalModel, path, row_labels=None) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_json(model, row_labels), fh, indent=2, sort_keys=True)
        fh.write("\n")


def model_from_json(payload: dict) -> ArchetypalModel:
    loss = LossSpec.from_dict(payload.get("loss", {"family": "squared"}))
    return ArchetypalModel(
        k=int(payload["k"]),
        archetypes=np.asarray(payload["archetypes"], dtype=float),
        alpha=np.asarray(payload["alpha"], dtype=float),
        beta=np.asarray(payload["beta"], dtype=float),
        objective=float(payload["objective"]),
        loss=loss,
        member_indices=(
            [int(i) for i in payload["member_indices"]]
            if "member_indices" in payload else None
        ),
    )
