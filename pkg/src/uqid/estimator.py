"""Minimum-distance density estimation over a Yatracos comparison class.

The comparison class is the family of sets {x : p_theta(x) > p_eta(x)}
ranging over parameter pairs. The estimator picks the candidate whose model
measures best match the empirical measures uniformly over the class. The sup
over the infinite class is replaced by a max over pairs drawn from a finite
candidate mesh; the covering radius of the mesh is tracked separately so the
estimation-error bound stays honest.

Also here: brute-force shatter-coefficient counting and a randomized
shattering check used as test oracles for the VC bounds.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import CapacityError, ConfigError, DomainError
from .sources import (
    Family,
    MixtureFamily,
    QuadratureGrid,
    SourceModel,
    as_param,
    densities_at,
    variational_distance,
)

DEFAULT_PAIR_CAP = 4096
#: candidate meshes never go finer than this per-axis step
DEFAULT_MIN_AXIS_STEP = 1.0 / 64
SHATTER_POINT_CAP = 20
_PAIR_CHUNK = 512


@dataclass(frozen=True)
class YatracosSet:
    """The set {x : p_theta(x) > p_eta(x)} for one ordered parameter pair."""

    family: Family
    theta: np.ndarray
    eta: np.ndarray
    quad: Optional[QuadratureGrid] = None

    def __post_init__(self):
        object.__setattr__(self, "theta", as_param(self.family, self.theta))
        object.__setattr__(self, "eta", as_param(self.family, self.eta))
        if np.array_equal(self.theta, self.eta):
            raise DomainError("Yatracos set needs theta != eta")

    def contains(self, x) -> np.ndarray:
        dens = densities_at(
            self.family, np.stack([self.theta, self.eta]), np.atleast_1d(x), self.quad
        )
        return dens[0] > dens[1]


def set_member(yset: YatracosSet, x: float) -> bool:
    """Strict pointwise density comparison; ties resolve to False."""
    if not yset.family.support.contains(x):
        raise DomainError("point outside the family support")
    return bool(yset.contains(x)[0])


def empirical_measure(sample, yset: YatracosSet) -> float:
    """Exact fraction of sample points inside the set."""
    sample = np.asarray(sample, dtype=float).reshape(-1)
    return float(yset.contains(sample).mean())


def model_measure(model: SourceModel, yset: YatracosSet, quad: QuadratureGrid) -> float:
    """P_model(A) by indicator-on-grid trapezoid quadrature (tolerance ~1e-3)."""
    dens = densities_at(model.family, model.theta, quad.points, quad)[0]
    mask = yset.contains(quad.points)
    return float((dens * quad.weights)[mask].sum())


# ---------------------------------------------------------------------------
# candidate meshes
# ---------------------------------------------------------------------------


def _simplex_mesh(k: int, subdivisions: int) -> np.ndarray:
    pts = [
        np.array(c, dtype=float) / subdivisions
        for c in _compositions(subdivisions, k)
    ]
    return np.array(pts)


def _compositions(total: int, parts: int):
    if parts == 1:
        yield (total,)
        return
    for head in range(total + 1):
        for tail in _compositions(total - head, parts - 1):
            yield (head,) + tail


def _box_mesh(theta_box, step: float) -> np.ndarray:
    axes = []
    for lo, hi in theta_box:
        vals = list(np.arange(lo, hi + 1e-12, step))
        if vals[-1] < hi - 1e-9:
            vals.append(hi)
        axes.append(np.asarray(vals))
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


@dataclass(frozen=True)
class CandidateGrid:
    """Finite estimation mesh over the parameter space plus the searched pairs."""

    points: np.ndarray  # (m, k)
    pairs: np.ndarray  # (P, 2) int
    pair_cap: int
    subdivisions: int  # per-unit mesh resolution actually used

    @property
    def all_pairs_searched(self) -> bool:
        m = len(self.points)
        return len(self.pairs) == m * (m - 1) // 2

    @classmethod
    def build(
        cls,
        family: Family,
        n: int,
        pair_cap: int = DEFAULT_PAIR_CAP,
        subsample_seed: int = 0,
        min_axis_step: float = DEFAULT_MIN_AXIS_STEP,
    ) -> "CandidateGrid":
        """Mesh with per-axis step max(1/ceil(sqrt(n)), min_axis_step).

        All candidate pairs are searched when their number fits under
        pair_cap; otherwise a seeded uniform subsample of pair_cap pairs.
        """
        if n < 1:
            raise ConfigError("block length must be >= 1")
        q = min(math.isqrt(n - 1) + 1, round(1.0 / min_axis_step))
        if isinstance(family, MixtureFamily):
            points = _simplex_mesh(family.k, q)
        else:
            points = _box_mesh(family.theta_box, 1.0 / q)
        m = len(points)
        if m > 200_000:
            raise ConfigError(f"candidate mesh has {m} points; coarsen the step")
        total = m * (m - 1) // 2
        if total <= pair_cap:
            i, j = np.triu_indices(m, k=1)
            pairs = np.stack([i, j], axis=1).astype(np.int64)
        else:
            rng = np.random.default_rng(subsample_seed)
            seen = set()
            picked = []
            while len(picked) < pair_cap:
                a, b = rng.integers(0, m, size=2)
                if a == b:
                    continue
                pair = (min(a, b), max(a, b))
                if pair not in seen:
                    seen.add(pair)
                    picked.append(pair)
            pairs = np.array(sorted(picked), dtype=np.int64)
        return cls(points=points, pairs=pairs, pair_cap=pair_cap, subdivisions=q)


# ---------------------------------------------------------------------------
# fast measure evaluation over a fixed pair list
# ---------------------------------------------------------------------------


class YatracosMeasures:
    """Precomputed quadrature masks and model measures for a candidate grid.

    Model measures of the candidates are cached; empirical measures cost one
    density evaluation per sample. All maxima run over the fixed pair list,
    so results do not depend on evaluation order.
    """

    def __init__(self, family: Family, grid: CandidateGrid, quad: QuadratureGrid):
        self.family = family
        self.grid = grid
        self.quad = quad
        self._cand_quad = densities_at(family, grid.points, quad.points, quad)
        n_pairs, n_quad = len(grid.pairs), quad.n
        self.masks = np.empty((n_pairs, n_quad), dtype=bool)
        ii, jj = grid.pairs[:, 0], grid.pairs[:, 1]
        for lo in range(0, n_pairs, _PAIR_CHUNK):
            hi = lo + _PAIR_CHUNK
            np.greater(
                self._cand_quad[ii[lo:hi]], self._cand_quad[jj[lo:hi]], out=self.masks[lo:hi]
            )
        self._model_cand: Optional[np.ndarray] = None

    def model_measures(self, thetas) -> np.ndarray:
        """P_theta(A) for every searched pair A; shape (len(thetas), P)."""
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        dens_w = densities_at(self.family, thetas, self.quad.points, self.quad)
        dens_w = dens_w * self.quad.weights
        out = np.empty((len(thetas), len(self.masks)))
        for lo in range(0, len(self.masks), _PAIR_CHUNK):
            hi = lo + _PAIR_CHUNK
            out[:, lo:hi] = dens_w @ self.masks[lo:hi].T
        return out

    @property
    def model_candidates(self) -> np.ndarray:
        if self._model_cand is None:
            self._model_cand = self.model_measures(self.grid.points)
        return self._model_cand

    @property
    def candidate_densities(self) -> np.ndarray:
        """Candidate densities on the quadrature grid, shape (m, N)."""
        return self._cand_quad

    def empirical_measures(self, sample) -> np.ndarray:
        """Empirical measure of every searched pair; shape (P,)."""
        sample = np.asarray(sample, dtype=float).reshape(-1)
        dens = densities_at(self.family, self.grid.points, sample, self.quad)
        m, ns = dens.shape
        # all-pairs comparison in row chunks beats gathering the pair list:
        # no large fancy-index copies, one vectorized compare per chunk
        fracs = np.empty((m, m))
        rows = max(1, int(64e6 // max(m * ns, 1)))
        for lo in range(0, m, rows):
            hi = lo + rows
            fracs[lo:hi] = (dens[lo:hi, None, :] > dens[None, :, :]).mean(axis=2)
        return fracs[self.grid.pairs[:, 0], self.grid.pairs[:, 1]]

    def deltas_all_candidates(self, emp: np.ndarray) -> np.ndarray:
        """Uniform deviation of every candidate from the empirical measures."""
        return np.abs(self.model_candidates - emp[None, :]).max(axis=1)


@dataclass(frozen=True)
class MinDistResult:
    index: int
    theta: np.ndarray
    delta: float  # deviation at the chosen candidate
    deltas: np.ndarray  # (m,)
    empirical: np.ndarray  # (P,)


def delta_stat(
    family: Family,
    eta,
    sample,
    grid: CandidateGrid,
    quad: QuadratureGrid,
    measures: Optional[YatracosMeasures] = None,
) -> float:
    """max over searched pairs of |P_eta(A) - P_emp(A)|; eta need not be a candidate."""
    if len(grid.pairs) == 0:
        raise ConfigError("candidate grid has no pairs")
    eta = as_param(family, eta)
    if measures is None:
        measures = YatracosMeasures(family, grid, quad)
    emp = measures.empirical_measures(sample)
    model = measures.model_measures(eta)[0]
    return float(np.abs(model - emp).max())


def min_distance_estimate(
    family: Family,
    sample,
    grid: CandidateGrid,
    quad: QuadratureGrid,
    measures: Optional[YatracosMeasures] = None,
) -> np.ndarray:
    """Candidate minimizing the uniform deviation; ties break to the lowest index."""
    return min_distance_estimate_full(family, sample, grid, quad, measures).theta


def min_distance_estimate_full(
    family: Family,
    sample,
    grid: CandidateGrid,
    quad: QuadratureGrid,
    measures: Optional[YatracosMeasures] = None,
) -> MinDistResult:
    if len(grid.points) == 0:
        raise ConfigError("candidate grid has no points")
    if measures is None:
        measures = YatracosMeasures(family, grid, quad)
    emp = measures.empirical_measures(sample)
    deltas = measures.deltas_all_candidates(emp)
    idx = int(np.argmin(deltas))
    return MinDistResult(
        index=idx,
        theta=grid.points[idx],
        delta=float(deltas[idx]),
        deltas=deltas,
        empirical=emp,
    )


def grid_covering_slack(
    family: Family,
    grid: CandidateGrid,
    quad: QuadratureGrid,
    refine: int = 4,
) -> float:
    """Covering radius of the candidate mesh in d_V, over a refine-times-finer mesh."""
    q = grid.subdivisions * refine
    if isinstance(family, MixtureFamily):
        fine = _simplex_mesh(family.k, q)
    else:
        fine = _box_mesh(family.theta_box, 1.0 / q)
    dens_c = densities_at(family, grid.points, quad.points, quad)
    worst = 0.0
    for theta in fine:
        dens_f = densities_at(family, theta, quad.points, quad)[0]
        dv = 0.5 * (np.abs(dens_c - dens_f[None, :]) @ quad.weights)
        worst = max(worst, float(dv.min()))
    return worst


# ---------------------------------------------------------------------------
# VC machinery (brute force, test oracles)
# ---------------------------------------------------------------------------


def shatter_coefficient(sets: Sequence, points: Sequence[float]) -> int:
    """Number of distinct binary patterns the sets induce on the points.

    Any objects with a vectorized `.contains(x)` qualify as sets. The empty
    class yields 0 by convention.
    """
    points = np.asarray(points, dtype=float).reshape(-1)
    if points.size > SHATTER_POINT_CAP:
        raise CapacityError(f"brute-force shattering capped at {SHATTER_POINT_CAP} points")
    if len(sets) == 0:
        return 0
    patterns = {tuple(np.asarray(s.contains(points), dtype=bool).tolist()) for s in sets}
    return len(patterns)


@dataclass(frozen=True)
class VcCheckResult:
    passed: bool
    trials: int
    counterexample: Optional[np.ndarray] = None
    trial_index: Optional[int] = None

    def __bool__(self) -> bool:
        return self.passed


def _random_parameters(family: Family, rng: np.random.Generator, count: int) -> np.ndarray:
    if isinstance(family, MixtureFamily):
        return rng.dirichlet(np.ones(family.k), size=count)
    lows = np.array([lo for lo, _ in family.theta_box])
    highs = np.array([hi for _, hi in family.theta_box])
    return lows + rng.random((count, len(lows))) * (highs - lows)


def vc_upper_check(
    family: Family,
    trials: int,
    points_per_trial: int,
    seed: int,
    pairs_per_trial: int = 256,
    quad: QuadratureGrid = None,
) -> VcCheckResult:
    """Randomized refutation check that no point set of the given size is shattered.

    Each trial draws points uniformly on the support and a dense random
    subfamily of Yatracos sets (parameter pairs), then brute-force counts the
    membership patterns. Finding all 2^s patterns disproves the VC upper
    bound and the offending point set is returned.
    """
    if points_per_trial > SHATTER_POINT_CAP:
        raise CapacityError(f"brute-force shattering capped at {SHATTER_POINT_CAP} points")
    if quad is None and not isinstance(family, MixtureFamily):
        # normalizers only shift the comparison threshold; a coarse grid is
        # plenty for sign decisions at random points and far cheaper
        from .sources import MIN_QUAD_POINTS

        quad = QuadratureGrid.build(family.support, MIN_QUAD_POINTS)
    rng = np.random.default_rng(seed)
    sup = family.support
    full = 2 ** points_per_trial
    for t in range(trials):
        pts = sup.lo + rng.random(points_per_trial) * (sup.hi - sup.lo)
        params = _random_parameters(family, rng, 2 * pairs_per_trial)
        dens = densities_at(family, params, pts, quad)
        member = dens[0::2] > dens[1::2]  # (pairs, points)
        patterns = {row.tobytes() for row in np.packbits(member, axis=1)}
        if len(patterns) >= full:
            return VcCheckResult(
                passed=False, trials=trials, counterexample=pts, trial_index=t
            )
    return VcCheckResult(passed=True, trials=trials)


def yatracos_sets_from_mesh(
    family: Family, mesh: np.ndarray, quad: QuadratureGrid = None, limit: int = 2000
) -> list:
    """Materialized YatracosSet objects for all mesh pairs (test helper)."""
    sets = []
    for i, j in itertools.combinations(range(len(mesh)), 2):
        if np.array_equal(mesh[i], mesh[j]):
            continue
        sets.append(YatracosSet(family, mesh[i], mesh[j], quad))
        if len(sets) >= limit:
            break
    return sets
