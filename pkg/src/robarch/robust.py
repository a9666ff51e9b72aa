"""Robust archetype and archetypoid fitting with the bisquare loss.

The squared objective is replaced by sum_i rho_c(||r_i||), which flattens
past the tuning constant c so far-away cases stop steering the archetypes.
Fitting is iteratively reweighted: each outer iteration resolves c from
the current residual norms, turns norms into case weights through
phi = rho'(x)/x, and runs one weighted alternating pass.  Because rho is
concave in the squared norm, the weighted pass decreases a majorizer of
sum rho, so the robust objective cannot increase while c stays put.

Every restart runs its own reweighted chain from a fresh random init and
the best final robust objective wins.  Seeding one chain from the
converged squared fit instead is tempting but wrong: when that fit has
built an archetype out of outliers, those cases carry small residuals,
get full weight, and the chain never leaves the contaminated fixed
point.  Independent chains leave it to the objective to reject such
solutions.

For archetypoids the default schedule re-resolves the tuning constant
from each candidate member set's own residual norms while SWAP compares
exchanges; since c tracks the residual distribution, a set that fits the
bulk tightly gets a small loss ceiling and beats any set that parks an
archetypoid on an outlier.  A frozen schedule (c resolved once from the
robust archetype fit that seeds BUILD) is also available.
"""

from __future__ import annotations

import numpy as np

from .archetypes import (
    ArchetypalModel,
    FitOptions,
    _alpha_step,
    _check_k,
    _dirichlet_rows,
    _weighted_pass,
    as_values,
)
from .errors import InputError
from .losses import (  # noqa: F401  (re-exported: this module is the robust API)
    LossSpec,
    TuningPolicy,
    bisquare_loss,
    bisquare_weight,
    loss_values,
    resolve_tuning,
)

_MAX_OUTER_ITERS = 50

# Residual norms below this fraction of the data scale mean the squared
# fit is already exact and reweighting has nothing to do.
_EXACT_FIT_REL_TOL = 1e-12


def _case_norms(X, alpha, Z) -> np.ndarray:
    resid = X - alpha @ Z
    return np.sqrt(np.clip(np.einsum("ij,ij->i", resid, resid), 0.0, None))


def _require_bisquare(loss: LossSpec | None) -> LossSpec:
    if loss is None:
        raise InputError("robust fitting needs a bisquare LossSpec")
    if loss.family != "bisquare":
        raise InputError(f"robust fitting expects bisquare loss, got {loss.family}")
    return loss


def _robust_chain(X, k, options, loss, beta_init, exact_floor):
    """One reweighted chain from a beta init; returns the final state.

    Each outer iteration resolves c from the current residual norms,
    reweights, and runs one alternating pass.  A chain that reaches an
    exact fit stops immediately: c is undefined on all-zero norms and
    the objective can only be zero.
    """
    beta = beta_init
    Z = beta @ X
    alpha, _ = _alpha_step(X, Z, None, options.penalty_weight)
    norms = _case_norms(X, alpha, Z)
    trajectory = []
    prev_obj = None
    for _ in range(_MAX_OUTER_ITERS):
        if norms.max() <= exact_floor:
            trajectory.append(0.0)
            break
        c = resolve_tuning(norms, loss.policy)
        weights = bisquare_weight(norms, c)
        alpha, beta, Z = _weighted_pass(X, alpha, beta, weights, options.penalty_weight)
        norms = _case_norms(X, alpha, Z)
        obj = float(bisquare_loss(norms, c).sum())
        trajectory.append(obj)
        if prev_obj is not None and \
                abs(prev_obj - obj) <= options.rel_tol * max(prev_obj, 1e-300):
            break
        prev_obj = obj
    return alpha, beta, Z, trajectory


def fit_robust_aa(data, k, options: FitOptions | None = None,
                  loss: LossSpec | None = None) -> ArchetypalModel:
    """Fit k archetypes under the bisquare loss by IRLS.

    Runs ``options.restarts`` independent reweighted chains from random
    inits (at most 50 outer iterations each, stopping when the relative
    change of sum rho_c falls below ``options.rel_tol``) and keeps the
    chain whose final alpha-synced robust objective is lowest.  An exact
    fit short-circuits its chain with objective zero and an unresolved c.
    """
    loss = _require_bisquare(loss)
    X = as_values(data)
    k = _check_k(k, X.shape[0])
    options = options or FitOptions()
    exact_floor = _EXACT_FIT_REL_TOL * max(float(np.abs(X).max()), 1.0)

    children = np.random.SeedSequence(options.seed).spawn(options.restarts)
    best = None
    for r in range(options.restarts):
        rng = np.random.default_rng(children[r])
        beta0 = _dirichlet_rows(rng, k, X.shape[0])
        alpha, beta, Z, trajectory = _robust_chain(
            X, k, options, loss, beta0, exact_floor)
        alpha, _ = _alpha_step(X, Z, alpha, options.penalty_weight)
        norms = _case_norms(X, alpha, Z)
        if norms.max() <= exact_floor:
            objective, final_loss = 0.0, loss
        else:
            c_final = resolve_tuning(norms, loss.policy)
            objective = float(bisquare_loss(norms, c_final).sum())
            final_loss = loss.with_resolved_c(c_final)
        trajectory.append(objective)
        if best is None or objective < best[0]:
            best = (objective, alpha, beta, Z, final_loss, trajectory)
    objective, alpha, beta, Z, final_loss, trajectory = best
    return ArchetypalModel(
        k=k, archetypes=Z, alpha=alpha, beta=beta, objective=objective,
        loss=final_loss, trajectory=trajectory,
    )


def fit_robust_ada(data, k, options: FitOptions | None = None,
                   loss: LossSpec | None = None,
                   c_schedule: str = "per-evaluation") -> ArchetypalModel:
    """Fit k archetypoids under the bisquare loss.

    BUILD candidates come from :func:`fit_robust_aa`; SWAP accepts an
    exchange only if it strictly lowers sum rho_c.  Under the default
    ``c_schedule="per-evaluation"`` the tuning constant is re-resolved
    from each candidate set's own residual norms (the objective is a pure
    function of the member set, so the descent still terminates); under
    ``"frozen"`` c is resolved once from the BUILD model's residuals.
    """
    from .archetypoids import build_swap

    loss = _require_bisquare(loss)
    if c_schedule not in ("per-evaluation", "frozen"):
        raise InputError(
            f"c_schedule must be 'per-evaluation' or 'frozen', got {c_schedule!r}"
        )
    X = as_values(data)
    k = _check_k(k, X.shape[0])
    options = options or FitOptions()

    source = fit_robust_aa(X, k, options, loss)
    if c_schedule == "per-evaluation":
        return build_swap(X, k, options, source, loss, resolve_policy=loss.policy)
    if source.loss.resolved_c is not None:
        resolved = loss.with_resolved_c(source.loss.resolved_c)
    else:
        # Squared fit was exact: every rho_c objective is zero, so the
        # concrete c is immaterial; keep SWAP well-defined with c = 1.
        resolved = loss.with_resolved_c(1.0)
    return build_swap(X, k, options, source, resolved)
