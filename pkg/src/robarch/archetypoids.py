"""Archetypoid analysis: archetypes constrained to observed cases.

The mixed-integer problem (beta rows become indicator rows) is attacked
the way partitioning-around-medoids attacks clustering: a BUILD phase
derives three candidate member sets from a fitted archetype model, and a
SWAP phase refines each by single-member exchanges, keeping the best of
the three refined sets.

Candidate sets (one index per archetype j):
  nearest  - the case closest to archetype j in Euclidean norm
  alpha    - the case leaning hardest on archetype j (argmax_i alpha_ij)
  beta     - the case contributing most to archetype j (argmax_l beta_jl)
with within-set duplicates repaired by the next-best index.

SWAP is first-improvement: slots are scanned in archetypoid order, trial
replacements in ascending case order, the first strict objective drop is
taken and the scan restarts; exchanges that tie are never taken.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .archetypes import (
    ArchetypalModel,
    FitOptions,
    _alpha_step,
    as_values,
    _check_k,
    fit_aa,
)
from .errors import InputError
from .losses import LossSpec, bisquare_loss, loss_values, resolve_tuning
from .nnls import enumerate_support_solutions


@dataclass(frozen=True)
class CandidateSets:
    """Three BUILD candidate member sets, one index per archetype."""

    nearest: tuple[int, ...]
    alpha: tuple[int, ...]
    beta: tuple[int, ...]

    def as_dict(self) -> dict:
        return {"nearest": self.nearest, "alpha": self.alpha, "beta": self.beta}


def _pick_unique(ordered_rows) -> tuple[int, ...]:
    """First unused index per row, rows processed in archetype order."""
    chosen: list[int] = []
    for order in ordered_rows:
        pick = next(int(i) for i in order if int(i) not in chosen)
        chosen.append(pick)
    return tuple(chosen)


def candidate_sets(data, model: ArchetypalModel) -> CandidateSets:
    """Derive the three candidate member sets from an archetype model."""
    X = as_values(data)
    if X.shape[0] != model.n_cases:
        raise InputError("data and model disagree on the number of cases")
    if X.shape[0] < model.k:
        raise InputError("fewer cases than archetypes")
    diff = X[None, :, :] - model.archetypes[:, None, :]
    dist = np.einsum("kim,kim->ki", diff, diff)
    nearest = _pick_unique(np.argsort(dist, axis=1, kind="stable"))
    alpha = _pick_unique(np.argsort(-model.alpha.T, axis=1, kind="stable"))
    beta = _pick_unique(np.argsort(-model.beta, axis=1, kind="stable"))
    return CandidateSets(nearest=nearest, alpha=alpha, beta=beta)


def _self_scaled_objective(norms: np.ndarray, policy) -> float:
    """Bisquare objective with c re-resolved from these very norms.

    An exact-fit set (all norms zero) leaves c undefined; its objective
    is zero, which no other set can beat.
    """
    if float(np.max(norms)) == 0.0:
        return 0.0
    c = resolve_tuning(norms, policy)
    return float(bisquare_loss(norms, c).sum())


class _SetEvaluator:
    """Objective of a member set, via the precomputed data Gram matrix.

    Alpha refits against a member set reuse the shared Gram, so one
    evaluation costs a handful of small KKT solves regardless of the data
    width.  Values are cached per unordered member set.

    With a resolve_policy the tuning constant is re-resolved from each
    candidate set's own residual-norm distribution, so the objective is
    self-scaled: sets that fit the bulk tightly get a small c and a small
    loss ceiling, which is what makes the swap resistant to parking an
    archetypoid on an outlier.
    """

    def __init__(self, X: np.ndarray, loss: LossSpec, resolve_policy=None):
        self.X = X
        self.gram = X @ X.T
        self.sq_norms = np.diag(self.gram).copy()
        self.loss = loss
        self.resolve_policy = resolve_policy
        self._cache: dict[tuple[int, ...], float] = {}

    def case_sq_residuals(self, members) -> np.ndarray:
        idx = np.asarray(members, dtype=int)
        sub_gram = self.gram[np.ix_(idx, idx)]
        cross = self.gram[idx, :]
        _, obj = enumerate_support_solutions(sub_gram, cross, self.sq_norms)
        bad = ~np.isfinite(obj)
        if bad.any():
            # Extreme degeneracy: recompute the affected cases directly.
            from .nnls import batch_simplex_lstsq

            direct = batch_simplex_lstsq(self.X[idx], self.X[bad])
            obj[bad] = direct.sq_residuals
        return np.clip(obj, 0.0, None)

    def objective(self, members) -> float:
        key = tuple(sorted(int(i) for i in members))
        if key not in self._cache:
            norms = np.sqrt(self.case_sq_residuals(key))
            if self.resolve_policy is not None:
                self._cache[key] = _self_scaled_objective(norms, self.resolve_policy)
            else:
                self._cache[key] = float(loss_values(norms, self.loss).sum())
        return self._cache[key]


def _swap(evaluator: _SetEvaluator, members, n: int):
    """First-improvement SWAP refinement of one member set."""
    members = [int(i) for i in members]
    obj = evaluator.objective(members)
    trace = [obj]
    while True:
        taken = False
        for slot in range(len(members)):
            current = set(members)
            for cand in range(n):
                if cand in current:
                    continue
                trial = list(members)
                trial[slot] = cand
                trial_obj = evaluator.objective(trial)
                if trial_obj < obj - 1e-10 * (1.0 + abs(obj)):
                    members, obj = trial, trial_obj
                    trace.append(obj)
                    taken = True
                    break
            if taken:
                break
        if not taken:
            return members, obj, trace


def _finalize(X, members, loss: LossSpec, options: FitOptions, trace,
              resolve_policy=None) -> ArchetypalModel:
    """Exact alpha refit against the chosen rows and model assembly."""
    k = len(members)
    n = X.shape[0]
    atoms = X[list(members)]
    alpha, _ = _alpha_step(X, atoms, None, options.penalty_weight)
    resid = X - alpha @ atoms
    norms = np.sqrt(np.clip(np.einsum("ij,ij->i", resid, resid), 0.0, None))
    if resolve_policy is not None and float(np.max(norms)) > 0.0:
        loss = loss.with_resolved_c(resolve_tuning(norms, resolve_policy))
        objective = float(bisquare_loss(norms, loss.resolved_c).sum())
    elif resolve_policy is not None:
        objective = 0.0
    else:
        objective = float(loss_values(norms, loss).sum())
    beta = np.zeros((k, n))
    for j, idx in enumerate(members):
        beta[j, idx] = 1.0
    return ArchetypalModel(
        k=k,
        archetypes=X[list(members)].copy(),
        alpha=alpha,
        beta=beta,
        objective=objective,
        loss=loss,
        member_indices=[int(i) for i in members],
        trajectory=list(trace),
    )


def build_swap(data, k, options: FitOptions, source_model: ArchetypalModel,
               loss: LossSpec, resolve_policy=None) -> ArchetypalModel:
    """Run BUILD (candidate sets from source_model) and SWAP under loss.

    Without a resolve_policy the loss must already be fully resolved
    (squared, or bisquare with a concrete c) and is held fixed through
    every exchange.  With one, c is re-resolved from each candidate
    set's own residuals and the final model carries the winning set's c.
    """
    X = as_values(data)
    if source_model.k != k:
        raise InputError("source model k does not match the requested k")
    cands = candidate_sets(X, source_model)
    evaluator = _SetEvaluator(X, loss, resolve_policy)
    best = None
    for members in (cands.nearest, cands.alpha, cands.beta):
        refined, obj, trace = _swap(evaluator, members, X.shape[0])
        if best is None or obj < best[1]:
            best = (refined, obj, trace)
    return _finalize(X, best[0], loss, options, best[2], resolve_policy)


def fit_ada(data, k, options: FitOptions | None = None,
            loss: LossSpec | None = None) -> ArchetypalModel:
    """Fit a k-archetypoid model.

    Internally fits archetypes with the same k to derive the candidate
    sets, then refines by SWAP.  A bisquare loss delegates to the robust
    pipeline, which resolves the tuning constant before the SWAP phase.
    """
    loss = loss or LossSpec.squared()
    if loss.family == "bisquare":
        from .robust import fit_robust_ada

        return fit_robust_ada(data, k, options, loss)
    X = as_values(data)
    k = _check_k(k, X.shape[0])
    options = options or FitOptions()
    aa_model = fit_aa(X, k, options)
    return build_swap(X, k, options, aa_model, loss)
