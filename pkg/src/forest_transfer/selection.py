"""Lasso screening of predictors followed by random-forest importance ranking."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import DataError, INDICATOR_NAMES, PlotTable, one_hot_encode, standardizer_from_array
from .forest import Hyperparameters, fit_forest, permutation_importance

MAX_SWEEPS = 10_000
TOL = 1e-8
# sweeps between attempts to solve the stationarity equations on the current support
POLISH_EVERY = 50
N_LAMBDA = 100
LAMBDA_RATIO = 1e-3


class ConvergenceError(RuntimeError):
    pass


def soft_threshold(z: float, t: float) -> float:
    if z > t:
        return z - t
    if z < -t:
        return z + t
    return 0.0


def lasso_coordinate_descent(X, y, lam: float, beta0=None, tol: float = TOL,
                             max_sweeps: int = MAX_SWEEPS) -> np.ndarray:
    """Minimize ``(1/2n)||y - X b||² + lam * ||b||_1`` by cyclic coordinate descent.

    X is expected standardized and y centered (no intercept is fitted).
    Sweeps stop when the largest coefficient change falls below `tol`. On
    ill-conditioned designs plain sweeps crawl, so every POLISH_EVERY sweeps
    the stationarity equations are solved on the current support; that
    candidate is returned early when it satisfies the optimality conditions
    to rounding level. The converged support is polished the same way.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if not (np.isfinite(X).all() and np.isfinite(y).all() and np.isfinite(lam)):
        raise DataError("non-finite input to lasso")
    if lam < 0:
        raise DataError("lambda must be >= 0")
    n, p = X.shape
    lmax = lambda_max(X, y)
    if lam >= lmax:
        return np.zeros(p)
    exact = 1e-12 * max(1.0, lmax)
    beta = np.zeros(p) if beta0 is None else np.array(beta0, dtype=float)
    r = y - X @ beta
    norms = np.einsum("ij,ij->j", X, X) / n
    for sweep in range(max_sweeps):
        delta = 0.0
        for j in range(p):
            if norms[j] == 0:
                continue
            old = beta[j]
            z = X[:, j] @ r / n + norms[j] * old
            new = soft_threshold(z, lam) / norms[j]
            if new != old:
                r -= X[:, j] * (new - old)
                beta[j] = new
                delta = max(delta, abs(new - old))
        if delta < tol:
            return _polish(X, y, beta, lam)
        if sweep % POLISH_EVERY == POLISH_EVERY - 1:
            cand = _support_solution(X, y, beta, lam)
            if cand is not None and kkt_violation(X, y, cand, lam) <= exact:
                return cand
    raise ConvergenceError(f"lasso did not converge in {max_sweeps} sweeps (lambda={lam})")


def _support_solution(X, y, beta, lam):
    """Solve the stationarity equations on beta's support with its signs, or None."""
    active = np.flatnonzero(beta)
    if active.size == 0:
        return None
    n = X.shape[0]
    Xa = X[:, active]
    s = np.sign(beta[active])
    try:
        ba = np.linalg.solve(Xa.T @ Xa, Xa.T @ y - n * lam * s)
    except np.linalg.LinAlgError:
        return None
    if np.any(np.sign(ba) != s):
        return None
    cand = np.zeros_like(beta)
    cand[active] = ba
    return cand


def _polish(X, y, beta, lam):
    cand = _support_solution(X, y, beta, lam)
    if cand is None:
        return beta
    return cand if kkt_violation(X, y, cand, lam) <= kkt_violation(X, y, beta, lam) else beta


def kkt_violation(X, y, beta, lam: float) -> float:
    """Largest deviation from the lasso optimality conditions."""
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    grad = X.T @ (np.asarray(y, dtype=float) - X @ beta) / n
    nz = beta != 0
    viol = np.where(nz, np.abs(grad - lam * np.sign(beta)), np.maximum(np.abs(grad) - lam, 0.0))
    return float(viol.max()) if viol.size else 0.0


def lambda_max(X, y) -> float:
    n = X.shape[0]
    return float(np.max(np.abs(X.T @ y)) / n)


def lambda_grid(lmax: float, n: int = N_LAMBDA, ratio: float = LAMBDA_RATIO) -> np.ndarray:
    return lmax * np.geomspace(1.0, ratio, n)


def lasso_path(X, y, lambdas) -> np.ndarray:
    """Coefficients (len(lambdas), p) with warm starts down the grid."""
    beta = np.zeros(X.shape[1])
    out = np.empty((len(lambdas), X.shape[1]))
    for i, lam in enumerate(lambdas):
        beta = lasso_coordinate_descent(X, y, lam, beta0=beta)
        out[i] = beta
    return out


@dataclass(frozen=True)
class LassoPath:
    names: tuple[str, ...]
    lambdas: np.ndarray
    coefs: np.ndarray
    cv_mean: np.ndarray
    cv_se: np.ndarray
    folds: np.ndarray

    @property
    def i_min(self) -> int:
        return int(np.argmin(self.cv_mean))

    @property
    def i_1se(self) -> int:
        bound = self.cv_mean[self.i_min] + self.cv_se[self.i_min]
        # lambdas decrease, so the first index under the bound is the largest lambda
        return int(np.flatnonzero(self.cv_mean <= bound)[0])

    @property
    def lambda_min(self) -> float:
        return float(self.lambdas[self.i_min])

    @property
    def lambda_1se(self) -> float:
        return float(self.lambdas[self.i_1se])

    def nonzero(self, index: int) -> list[str]:
        return [n for n, b in zip(self.names, self.coefs[index]) if b != 0]


def _standardize(X, y, names):
    st = standardizer_from_array(X, names)
    return st.apply(X), y - y.mean(), st


def fold_assignment(n: int, k: int, seed: int) -> np.ndarray:
    """Seeded shuffle, then position modulo k."""
    perm = np.random.default_rng(seed).permutation(n)
    folds = np.empty(n, dtype=int)
    folds[perm] = np.arange(n) % k
    return folds


def cv_lasso_arrays(X, y, names: Sequence[str], k: int = 10, seed: int = 7) -> LassoPath:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(y)
    if k < 2:
        raise DataError("need at least 2 folds")
    if n < 2 * k:
        raise DataError(f"need at least {2 * k} plots for {k}-fold CV, got {n}")
    Xs, yc, _ = _standardize(X, y, names)
    lambdas = lambda_grid(lambda_max(Xs, yc))
    coefs = lasso_path(Xs, yc, lambdas)

    folds = fold_assignment(n, k, seed)
    errors = np.empty((k, len(lambdas)))
    for f in range(k):
        tr, te = folds != f, folds == f
        Xt, yt, st = _standardize(X[tr], y[tr], names)
        path = lasso_path(Xt, yt, lambdas)
        pred = y[tr].mean() + st.apply(X[te]) @ path.T
        errors[f] = np.mean((y[te][:, None] - pred) ** 2, axis=0)
    return LassoPath(tuple(names), lambdas, coefs, errors.mean(axis=0),
                     errors.std(axis=0, ddof=1) / np.sqrt(k), folds)


def cv_lasso(table: PlotTable, k: int = 10, seed: int = 7,
             predictors: Sequence[str] | None = None) -> LassoPath:
    """k-fold cross-validated lasso path over the table's continuous predictors.

    The grid holds 100 lambdas spaced geometrically from the smallest value
    that zeroes every coefficient down to 1e-3 of it. Each fold refits
    standardization on its own training part.
    """
    names = tuple(table.schema if predictors is None else predictors)
    return cv_lasso_arrays(table.features(names), table.ba, names, k, seed)


@dataclass(frozen=True)
class SelectionResult:
    retained: tuple[str, ...]
    lambda_chosen: float
    lambda_min: float
    lambda_1se: float
    rule: str
    importance: dict
    cap_applied: bool
    lasso_nonzero: tuple[str, ...]

    @property
    def design_columns(self) -> tuple[str, ...]:
        return self.retained + INDICATOR_NAMES

    def to_dict(self) -> dict:
        return {
            "retained": list(self.retained),
            "design_columns": list(self.design_columns),
            "rule": self.rule,
            "lambda": self.lambda_chosen,
            "lambda_min": self.lambda_min,
            "lambda_1se": self.lambda_1se,
            "lasso_nonzero": list(self.lasso_nonzero),
            "cap_applied": self.cap_applied,
            "importance": self.importance,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "SelectionResult":
        return cls(tuple(d["retained"]), d["lambda"], d["lambda_min"], d["lambda_1se"], d["rule"],
                   dict(d["importance"]), d["cap_applied"], tuple(d["lasso_nonzero"]))


def select_with_forest(table: PlotTable, k: int = 10, seed: int = 7, cap: int = 5,
                       rule: str = "1se", hp: Hyperparameters | None = None, threads: int = 1):
    """Like `select_predictors`, also returning the forest fitted on the retained design."""
    if rule not in ("1se", "min"):
        raise DataError("rule must be '1se' or 'min'")
    if cap < 1:
        raise DataError("cap must be >= 1")
    path = cv_lasso(table, k, seed)
    idx = path.i_1se if rule == "1se" else path.i_min
    nonzero = path.nonzero(idx)
    chosen = list(nonzero)
    if not chosen:
        first = next(i for i in range(len(path.lambdas)) if path.nonzero(i))
        chosen = path.nonzero(first)
    hp = hp or Hyperparameters(seed=seed)

    def importance_of(names):
        design = one_hot_encode(table, names)
        forest = fit_forest(design.X, table.ba, hp, columns=design.columns, row_keys=table.ids,
                            threads=threads)
        imp = permutation_importance(forest, design.X, table.ba, seed)
        return dict(zip(design.columns, imp)), forest

    cap_applied = len(chosen) > cap
    if cap_applied:
        imp, _ = importance_of(chosen)
        ranked = sorted(chosen, key=lambda n: (-imp[n], table.schema.index(n)))
        keep = set(ranked[:cap])
        chosen = [n for n in chosen if n in keep]
    importance, forest = importance_of(chosen)
    result = SelectionResult(
        retained=tuple(chosen),
        lambda_chosen=float(path.lambdas[idx]),
        lambda_min=path.lambda_min,
        lambda_1se=path.lambda_1se,
        rule=rule,
        importance={n: float(v) for n, v in importance.items()},
        cap_applied=cap_applied,
        lasso_nonzero=tuple(nonzero),
    )
    return result, forest


def select_predictors(table: PlotTable, k: int = 10, seed: int = 7, cap: int = 5,
                      rule: str = "1se", hp: Hyperparameters | None = None,
                      threads: int = 1) -> SelectionResult:
    """Keep lasso-nonzero predictors, truncate to `cap` by RF permutation importance.

    Forest-type indicators are never screened; they are appended to every
    model design. If the chosen lambda keeps no predictor, the first
    predictor(s) to enter the path are kept so the model is never empty.
    Importance ties are broken by schema order.
    """
    return select_with_forest(table, k, seed, cap, rule, hp, threads)[0]
