"""Convex-hull calibration envelope and Inside/Near/Far extrapolation classes.

All geometry happens in the space of the calibration set's standardized
continuous predictors. A single tolerance, ``EPS = 1e-9``, governs
hull-membership and rank decisions.
"""

from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, QhullError, cKDTree
from scipy.spatial.distance import pdist

from .core import DataError, PlotTable, Standardizer, fit_standardizer

EPS = 1e-9
# facet-test band (standardized units) outside which the Qhull answer is
# trusted; queries inside the band are settled by the LP
FACET_MARGIN = 1e-7
FORMAT_VERSION = 1


class ExtrapolationClass(enum.IntEnum):
    INSIDE = 0
    NEAR = 1
    FAR = 2


@dataclass(frozen=True)
class Classification:
    cls: ExtrapolationClass
    distance: float | None = None


class CalibrationEnvelope:
    """Standardized calibration points with their hull, MCD and a k-d tree."""

    def __init__(self, points, standardizer: Standardizer):
        points = np.asarray(points, dtype=float)
        if points.ndim != 2 or points.shape[0] < 2:
            raise DataError("an envelope needs at least 2 calibration points")
        if points.shape[1] != len(standardizer.names):
            raise DataError("point dimension does not match the standardizer")
        self.standardizer = standardizer
        self.points = points
        self.points.setflags(write=False)
        self.mcd = float(pdist(points).mean())
        self.center = points.mean(axis=0)
        centered = points - self.center
        sv = np.linalg.svd(centered, compute_uv=False)
        self.rank = int(np.sum(sv > EPS * sv[0])) if sv.size and sv[0] > 0 else 0
        self._tree = cKDTree(points)
        self._facets = None
        self._affine = None

    # -- construction ------------------------------------------------------
    @classmethod
    def from_raw(cls, raw_points, standardizer: Standardizer | None = None) -> "CalibrationEnvelope":
        raw = np.asarray(raw_points, dtype=float)
        st = standardizer or Standardizer.identity(raw.shape[1])
        return cls(st.apply(raw), st)

    @property
    def names(self) -> tuple[str, ...]:
        return self.standardizer.names

    @property
    def dimension(self) -> int:
        return self.points.shape[1]

    @property
    def degenerate(self) -> bool:
        return self.rank < self.dimension

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    def to_dict(self) -> dict:
        return {
            "format": "forest-transfer/envelope",
            "version": FORMAT_VERSION,
            "standardizer": self.standardizer.to_dict(),
            "points": self.points.tolist(),
            "mcd": self.mcd,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict) -> "CalibrationEnvelope":
        if d.get("format") != "forest-transfer/envelope" or d.get("version") != FORMAT_VERSION:
            raise DataError("not an envelope document of a supported version")
        env = cls(np.array(d["points"], dtype=float), Standardizer.from_dict(d["standardizer"]))
        env.mcd = float(d["mcd"])
        return env

    @classmethod
    def from_json(cls, text: str) -> "CalibrationEnvelope":
        return cls.from_dict(json.loads(text))

    @property
    def id(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]

    # -- internals ---------------------------------------------------------
    def _check(self, Z: np.ndarray) -> np.ndarray:
        Z = np.asarray(Z, dtype=float)
        if Z.shape[-1] != self.dimension:
            raise DataError(f"query has {Z.shape[-1]} predictors, envelope has {self.dimension}")
        return Z

    def _affine_basis(self):
        if self._affine is None:
            _, _, vt = np.linalg.svd(self.points - self.center, full_matrices=False)
            self._affine = vt[: self.rank]
        return self._affine

    def _facet_equations(self):
        """Hull facet equations in the reduced coordinates, or None when unavailable."""
        if self._facets is None:
            basis = self._affine_basis()
            reduced = (self.points - self.center) @ basis.T
            eq = False
            if self.rank >= 2:
                try:
                    eq = ConvexHull(reduced).equations
                except QhullError:
                    eq = False
            elif self.rank == 1:
                lo, hi = reduced[:, 0].min(), reduced[:, 0].max()
                eq = np.array([[1.0, -hi], [-1.0, lo]])
            self._facets = eq
        return None if self._facets is False else self._facets


def build_envelope(calib: PlotTable, predictors: Sequence[str]) -> CalibrationEnvelope:
    """Envelope of the calibration plots over the retained continuous predictors."""
    if len(calib) < 2:
        raise DataError("an envelope needs at least 2 calibration plots")
    st = fit_standardizer(calib, predictors)
    return CalibrationEnvelope(st.apply(calib.features(predictors)), st)


def lp_hull_distance(points: np.ndarray, z: np.ndarray) -> float:
    """Smallest L1 norm of ``z - points.T @ lam`` over the simplex ``lam >= 0, sum lam = 1``.

    Zero exactly when `z` lies in the convex hull of the rows of `points`.
    """
    n, d = points.shape
    A = np.zeros((d + 1, n + 2 * d))
    A[:d, :n] = points.T
    A[:d, n:n + d] = np.eye(d)
    A[:d, n + d:] = -np.eye(d)
    A[d, :n] = 1.0
    c = np.concatenate([np.zeros(n), np.ones(2 * d)])
    res = linprog(c, A_eq=A, b_eq=np.append(z, 1.0), bounds=(0, None), method="highs",
                  options={"primal_feasibility_tolerance": 1e-10,
                           "dual_feasibility_tolerance": 1e-10})
    if res.status != 0:
        raise RuntimeError(f"hull LP failed: {res.message}")
    return max(float(res.fun), 0.0)


def in_hull_standardized(env: CalibrationEnvelope, z) -> bool:
    z = env._check(z)
    return lp_hull_distance(env.points, z) <= EPS


def in_hull(env: CalibrationEnvelope, x) -> bool:
    """True when the raw predictor vector `x` lies in the calibration hull.

    Decided by LP feasibility of a convex combination of the calibration
    points; points within EPS of the hull count as inside.
    """
    return in_hull_standardized(env, env.standardizer.apply(env._check(x)))


def nearest_calib_distance(env: CalibrationEnvelope, x) -> float:
    """Euclidean distance, in standardized space, to the closest calibration plot."""
    z = env.standardizer.apply(env._check(x))
    d, _ = env._tree.query(z)
    return float(d)


def classify(env: CalibrationEnvelope, x) -> Classification:
    x = env._check(x)
    cls, dist = classify_many(env, np.asarray(x, dtype=float)[None, :])
    return Classification(ExtrapolationClass(int(cls[0])),
                          None if cls[0] == ExtrapolationClass.INSIDE else float(dist[0]))


def inside_mask(env: CalibrationEnvelope, Z: np.ndarray) -> np.ndarray:
    """Hull membership of standardized queries, vectorized.

    Queries are projected on the affine hull of the calibration points;
    those off it by more than EPS are outside. The rest are tested against
    the Qhull facet planes, and queries within FACET_MARGIN of the boundary
    (or every query, when Qhull cannot build the hull) go to the LP.
    """
    Z = env._check(Z)
    m = Z.shape[0]
    inside = np.zeros(m, dtype=bool)
    if m == 0:
        return inside
    basis = env._affine_basis()
    rel = Z - env.center
    reduced = rel @ basis.T
    off = np.linalg.norm(rel - reduced @ basis, axis=1)
    on_plane = off <= EPS
    cand = np.flatnonzero(on_plane)
    if cand.size == 0:
        return inside
    if env.rank == 0:
        inside[cand] = True
        return inside

    lo = env.points.min(axis=0) - EPS
    hi = env.points.max(axis=0) + EPS
    in_box = np.all((Z[cand] >= lo) & (Z[cand] <= hi), axis=1)
    cand = cand[in_box]

    eq = env._facet_equations()
    undecided = cand
    if eq is not None and cand.size:
        normals, offsets = eq[:, :-1], eq[:, -1]
        worst = np.empty(cand.size)
        for s in range(0, cand.size, 4096):
            blk = reduced[cand[s:s + 4096]]
            worst[s:s + 4096] = (blk @ normals.T + offsets).max(axis=1)
        inside[cand[worst < -FACET_MARGIN]] = True
        undecided = cand[np.abs(worst) <= FACET_MARGIN]
    for i in undecided:
        inside[i] = lp_hull_distance(env.points, Z[i]) <= EPS
    return inside


def classify_many(env: CalibrationEnvelope, X, standardized: bool = False):
    """Classes (0 Inside, 1 Near, 2 Far) and nearest-plot distances for raw rows.

    Distances are NaN for Inside rows.
    """
    X = np.asarray(X, dtype=float)
    X = env._check(X.reshape(-1, env.dimension))
    Z = X if standardized else env.standardizer.apply(X)
    dist, _ = env._tree.query(Z) if len(Z) else (np.empty(0), None)
    inside = inside_mask(env, Z)
    cls = np.where(inside, ExtrapolationClass.INSIDE,
                   np.where(dist <= env.mcd, ExtrapolationClass.NEAR, ExtrapolationClass.FAR))
    return cls.astype(np.int8), np.where(inside, np.nan, dist)


@dataclass(frozen=True)
class ExtrapolationSummary:
    n: int
    inside: float
    near: float
    far: float
    mean_distance: float | None

    @property
    def exterior(self) -> float:
        return self.near + self.far

    @classmethod
    def from_classes(cls, classes, distances) -> "ExtrapolationSummary":
        classes = np.asarray(classes)
        n = classes.size
        if n == 0:
            raise DataError("no queries to summarize")
        counts = np.bincount(classes.astype(int), minlength=3)
        ext = classes != ExtrapolationClass.INSIDE
        mean = float(np.mean(np.asarray(distances)[ext])) if ext.any() else None
        near, far = counts[1] / n, counts[2] / n
        return cls(int(n), 1.0 - near - far, float(near), float(far), mean)


def extrapolation_summary(env: CalibrationEnvelope, queries) -> ExtrapolationSummary:
    """Class proportions and mean nearest-plot distance over hull-exterior queries.

    `mean_distance` is None when no query is exterior.
    """
    classes, dist = classify_many(env, queries)
    return ExtrapolationSummary.from_classes(classes, dist)

