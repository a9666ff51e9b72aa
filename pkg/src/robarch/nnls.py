"""Sum-to-one constrained nonnegative least squares.

Every convex subproblem in this package has the same shape: approximate a
target vector by a combination of atoms whose weights are nonnegative and
sum to one.  The constraint is enforced through an appended penalty row
(every atom gets ``penalty_weight`` in that row, the target gets
``penalty_weight``), which keeps the problem inside plain nonnegative least
squares, followed by an equality-constrained refinement of the active
support so the returned sum is exact rather than penalty-approximate.

A vectorised companion, :func:`batch_simplex_lstsq`, solves many instances
against a shared small atom set by enumerating supports; it is used for the
per-case mixture weights inside the fitting loops.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.optimize

from .errors import InputError, NumericError

DEFAULT_PENALTY_WEIGHT = 200.0

# Enumerating all supports costs 2^k - 1 linear solves; past this size the
# batch path defers to the per-problem active-set solver.
_MAX_ENUM_ATOMS = 12


@dataclass(frozen=True)
class SimplexLsProblem:
    """One constrained least-squares instance.

    Parameters
    ----------
    design : ndarray, shape (rows, atoms)
        Atom matrix; column ``j`` is atom ``j``.
    target : ndarray, shape (rows,)
        Vector to approximate.
    penalty_weight : float, optional
        Weight of the appended sum-to-one penalty row.
    """

    design: np.ndarray
    target: np.ndarray
    penalty_weight: float = DEFAULT_PENALTY_WEIGHT

    def __post_init__(self):
        design = np.asarray(self.design, dtype=float)
        target = np.asarray(self.target, dtype=float)
        if design.ndim != 2 or design.shape[1] < 1:
            raise InputError("design must be 2-d with at least one column")
        if target.ndim != 1 or target.shape[0] != design.shape[0]:
            raise InputError(
                "target length %r does not match design row count %r"
                % (target.shape, design.shape)
            )
        if not np.all(np.isfinite(design)) or not np.all(np.isfinite(target)):
            raise InputError("design and target must be finite")
        if not self.penalty_weight > 0:
            raise InputError("penalty_weight must be positive")
        object.__setattr__(self, "design", design)
        object.__setattr__(self, "target", target)

    @property
    def n_atoms(self) -> int:
        return self.design.shape[1]


def iteration_cap(n_atoms: int) -> int:
    """Active-set iteration budget used by both solver phases."""
    return 3 * n_atoms + 30


def solve_simplex_ls(problem: SimplexLsProblem) -> np.ndarray:
    """Solve one sum-to-one constrained NNLS instance.

    Returns
    -------
    ndarray, shape (atoms,)
        Nonnegative weights summing to one (within 1e-6; the refinement
        normally leaves the sum exact to machine precision).

    Raises
    ------
    NumericError
        If the active-set iteration cap (3 * atoms + 30) is exhausted.
    """
    A = problem.design
    y = problem.target
    k = problem.n_atoms
    cap = iteration_cap(k)

    if not A.any():
        warnings.warn(
            "all-zero design: returning uniform weights", RuntimeWarning, stacklevel=2
        )
        return np.full(k, 1.0 / k)

    aug = np.vstack([A, np.full((1, k), problem.penalty_weight)])
    aug_target = np.concatenate([y, [problem.penalty_weight]])
    try:
        w, _ = scipy.optimize.nnls(aug, aug_target, maxiter=cap)
    except RuntimeError as exc:
        raise NumericError(
            f"penalized NNLS did not converge within {cap} iterations",
            iterations=cap,
        ) from exc

    total = w.sum()
    if total <= 0.0:
        # Penalty row guarantees a strictly positive sum unless the solve
        # degenerated; fall back to uniform weights in that case.
        warnings.warn(
            "degenerate penalized solve: returning uniform weights",
            RuntimeWarning,
            stacklevel=2,
        )
        return np.full(k, 1.0 / k)
    w = w / total
    return _refine_support(A, y, w, cap)


def _refine_support(A: np.ndarray, y: np.ndarray, w0: np.ndarray, cap: int) -> np.ndarray:
    """Exact active-set polish of a feasible starting point.

    Runs Lawson-Hanson style iterations for ``min ||A w - y||`` subject to
    ``w >= 0`` and ``sum(w) = 1``, starting from the support of the
    penalized solution.  Each passive-set solve is the KKT system of the
    equality-constrained subproblem, so the sum constraint holds exactly.
    """
    k = A.shape[1]
    gram = A.T @ A
    aty = A.T @ y
    scale = max(1.0, float(np.abs(aty).max()), float(np.abs(gram).max()))
    dual_tol = 1e-10 * scale

    w = w0.copy()
    support = w > 1e-12
    if not support.any():
        support[int(np.argmax(w))] = True

    for _ in range(cap):
        ws = _equality_solve(gram, aty, support)
        if ws.min() >= -1e-12:
            w = np.zeros(k)
            w[support] = np.clip(ws, 0.0, None)
            w /= w.sum()
            # Multiplier of the sum constraint, from any support atom.
            resid_grad = gram @ w - aty
            idx = np.flatnonzero(support)
            mu = -resid_grad[idx].mean()
            duals = resid_grad + mu
            outside = ~support
            if not outside.any() or duals[outside].min() >= -dual_tol:
                return w
            enter = np.flatnonzero(outside)[int(np.argmin(duals[outside]))]
            support[enter] = True
        else:
            # Step from the current feasible point toward the solve until
            # the first coordinate hits zero, then shrink the support.
            full = np.zeros(k)
            full[support] = ws
            direction = full - w
            neg = (full < -1e-12) & support
            steps = w[neg] / (w[neg] - full[neg])
            t = float(steps.min())
            w = np.clip(w + t * direction, 0.0, None)
            drop = support & (w <= 1e-12)
            if not drop.any():
                drop_idx = np.flatnonzero(neg)[int(np.argmin(steps))]
                drop = np.zeros(k, dtype=bool)
                drop[drop_idx] = True
            support &= ~drop
            if not support.any():
                support[int(np.argmax(w0))] = True
            total = w.sum()
            if total > 0:
                w /= total
    raise NumericError(
        f"support refinement did not converge within {cap} iterations",
        iterations=cap,
    )


def _equality_solve(gram: np.ndarray, aty: np.ndarray, support: np.ndarray) -> np.ndarray:
    """Solve the sum-to-one equality-constrained LS on one support."""
    idx = np.flatnonzero(support)
    s = idx.size
    kkt = np.zeros((s + 1, s + 1))
    kkt[:s, :s] = gram[np.ix_(idx, idx)]
    kkt[:s, s] = 1.0
    kkt[s, :s] = 1.0
    rhs = np.concatenate([aty[idx], [1.0]])
    try:
        sol = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError:
        sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
    if not np.all(np.isfinite(sol)):
        sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
    return sol[:s]


@dataclass
class BatchSolveResult:
    """Weights and squared residuals for a batch of shared-atom problems."""

    weights: np.ndarray
    sq_residuals: np.ndarray
    fallback_cases: list[int] = field(default_factory=list)


def batch_simplex_lstsq(
    atoms: np.ndarray,
    targets: np.ndarray,
    penalty_weight: float = DEFAULT_PENALTY_WEIGHT,
) -> BatchSolveResult:
    """Solve ``targets[i] ~ weights[i] @ atoms`` for every row at once.

    For at most ``2**k - 1`` candidate supports (``k`` = number of atoms)
    the equality-constrained KKT system is factored once and applied to all
    targets; the best feasible support per case is the exact constrained
    optimum.  Above 12 atoms, or for cases where degeneracy leaves no
    feasible support, the per-problem solver is used instead.

    Parameters
    ----------
    atoms : ndarray, shape (k, m)
    targets : ndarray, shape (n, m)

    Returns
    -------
    BatchSolveResult
        ``weights`` has shape (n, k); ``sq_residuals`` holds the exact
        squared Euclidean residual of each case, recomputed from the
        residual vectors.
    """
    atoms = np.asarray(atoms, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if atoms.ndim != 2 or targets.ndim != 2 or atoms.shape[1] != targets.shape[1]:
        raise InputError("atoms and targets must be 2-d with matching widths")
    n = targets.shape[0]
    k = atoms.shape[0]

    if k > _MAX_ENUM_ATOMS or not atoms.any():
        return _batch_fallback(atoms, targets, penalty_weight, range(n))

    gram = atoms @ atoms.T
    cross = atoms @ targets.T  # (k, n)
    sq_norm_targets = np.einsum("ij,ij->i", targets, targets)
    weights, best_obj = enumerate_support_solutions(gram, cross, sq_norm_targets)

    unsolved = [i for i in range(n) if not np.isfinite(best_obj[i])]
    if unsolved:
        fb = _batch_fallback(atoms, targets, penalty_weight, unsolved)
        weights[unsolved, :] = fb.weights[unsolved, :]

    sums = weights.sum(axis=1)
    sums[sums <= 0] = 1.0
    weights = weights / sums[:, None]
    residuals = targets - weights @ atoms
    sq_residuals = np.einsum("ij,ij->i", residuals, residuals)
    return BatchSolveResult(weights=weights, sq_residuals=sq_residuals,
                            fallback_cases=unsolved)


def enumerate_support_solutions(gram, cross, sq_norm_targets):
    """Exact shared-atom solves from Gram blocks alone.

    ``gram`` is the (k, k) atom Gram matrix, ``cross`` the (k, n) atom by
    target inner products and ``sq_norm_targets`` the squared target norms.
    Every nonempty atom support is solved through its equality-constrained
    KKT system; per target the best nonnegative solution wins.  Returns
    ``(weights, objectives)`` where objectives are the quadratic-form
    residuals (exact up to Gram round-off).  Targets with no feasible
    support (possible only under extreme degeneracy) keep objective inf.
    """
    k, n = cross.shape
    best_obj = np.full(n, np.inf)
    weights = np.zeros((n, k))
    for size in range(1, k + 1):
        for subset in itertools.combinations(range(k), size):
            idx = np.array(subset)
            kkt = np.zeros((size + 1, size + 1))
            kkt[:size, :size] = gram[np.ix_(idx, idx)]
            kkt[:size, size] = 1.0
            kkt[size, :size] = 1.0
            rhs = np.vstack([cross[idx, :], np.ones((1, n))])
            try:
                sol = np.linalg.solve(kkt, rhs)
            except np.linalg.LinAlgError:
                continue
            ws = sol[:size, :]  # (size, n)
            feasible = (ws >= -1e-12).all(axis=0)
            if not feasible.any():
                continue
            quad = np.einsum("sn,st,tn->n", ws, gram[np.ix_(idx, idx)], ws)
            lin = np.einsum("sn,sn->n", ws, cross[idx, :])
            obj = sq_norm_targets - 2.0 * lin + quad
            better = feasible & (obj < best_obj - 1e-14)
            if better.any():
                best_obj[better] = obj[better]
                weights[better, :] = 0.0
                cols = np.flatnonzero(better)
                weights[np.ix_(cols, idx)] = np.clip(ws[:, cols].T, 0.0, None)
    return weights, best_obj


def _batch_fallback(atoms, targets, penalty_weight, cases) -> BatchSolveResult:
    n, k = targets.shape[0], atoms.shape[0]
    weights = np.zeros((n, k))
    design = atoms.T
    for i in cases:
        problem = SimplexLsProblem(design, targets[i], penalty_weight)
        weights[i] = solve_simplex_ls(problem)
    residuals = targets - weights @ atoms
    sq_residuals = np.einsum("ij,ij->i", residuals, residuals)
    return BatchSolveResult(weights=weights, sq_residuals=sq_residuals,
                            fallback_cases=list(cases))
