"""Parametric i.i.d. source families on a compact interval of the real line.

Two family kinds are supported: finite mixtures of closed-form component
densities (parameter = mixing weights on the probability simplex) and
exponential tilts of a reference density (parameter in a compact box).
Densities are evaluated pointwise in closed form; integral quantities
(normalizers, variational distance, relative entropy) use trapezoid
quadrature on a fixed grid.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import ConfigError, DivergenceError, DomainError, NumericError

DEFAULT_QUAD_POINTS = 2 ** 14
MIN_QUAD_POINTS = 2 ** 10
SIMPLEX_TOL = 1e-12
NORMALIZATION_TOL = 1e-4
COMPONENT_NORM_TOL = 1e-6
#: validator rejects exponential families whose grid estimate of
#: sup_theta ||ln p/p_theta||_inf exceeds this (smoothness would be useless)
LOG_RATIO_CAP = 50.0


@dataclass(frozen=True)
class Support:
    """Closed interval [lo, hi] serving as the source alphabet."""

    lo: float
    hi: float

    def __post_init__(self):
        if not (np.isfinite(self.lo) and np.isfinite(self.hi)):
            raise ConfigError("support endpoints must be finite")
        if not self.lo < self.hi:
            raise ConfigError(f"support needs lo < hi, got [{self.lo}, {self.hi}]")

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x)
        return (x >= self.lo) & (x <= self.hi)


# ---------------------------------------------------------------------------
# component density catalog (closed-form pdf and inverse cdf)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Uniform:
    a: float
    b: float

    def __post_init__(self):
        if not self.a < self.b:
            raise ConfigError(f"uniform needs a < b, got ({self.a}, {self.b})")

    def pdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.where((x >= self.a) & (x <= self.b), 1.0 / (self.b - self.a), 0.0)

    def cdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.clip((x - self.a) / (self.b - self.a), 0.0, 1.0)

    def ppf(self, u) -> np.ndarray:
        return self.a + np.asarray(u, dtype=float) * (self.b - self.a)


@dataclass(frozen=True)
class TruncatedGaussian:
    """Gaussian(mu, sigma) restricted and renormalized to [lo, hi]."""

    mu: float
    sigma: float
    lo: float
    hi: float

    def __post_init__(self):
        if self.sigma <= 0:
            raise ConfigError("truncated gaussian needs sigma > 0")
        if not self.lo < self.hi:
            raise ConfigError("truncated gaussian needs lo < hi")

    def _cdf_bounds(self):
        alpha = ndtr((self.lo - self.mu) / self.sigma)
        beta = ndtr((self.hi - self.mu) / self.sigma)
        if beta - alpha <= 0:
            raise NumericError("truncation window carries no gaussian mass")
        return alpha, beta

    def pdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        alpha, beta = self._cdf_bounds()
        z = (x - self.mu) / self.sigma
        dens = np.exp(-0.5 * z * z) / (self.sigma * np.sqrt(2 * np.pi) * (beta - alpha))
        return np.where((x >= self.lo) & (x <= self.hi), dens, 0.0)

    def cdf(self, x) -> np.ndarray:
        alpha, beta = self._cdf_bounds()
        x = np.asarray(x, dtype=float)
        out = (ndtr((x - self.mu) / self.sigma) - alpha) / (beta - alpha)
        return np.clip(out, 0.0, 1.0)

    def ppf(self, u) -> np.ndarray:
        alpha, beta = self._cdf_bounds()
        u = np.asarray(u, dtype=float)
        out = self.mu + self.sigma * ndtri(alpha + u * (beta - alpha))
        return np.clip(out, self.lo, self.hi)


@dataclass(frozen=True)
class Triangular:
    """Triangular density on [a, b] with mode c (a <= c <= b allowed degenerate)."""

    a: float
    c: float
    b: float

    def __post_init__(self):
        if not (self.a <= self.c <= self.b and self.a < self.b):
            raise ConfigError(f"triangular needs a <= c <= b, a < b, got {self}")

    def pdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        a, c, b = self.a, self.c, self.b
        out = np.zeros_like(x)
        if c > a:
            left = (x >= a) & (x <= c)
            out[left] = 2.0 * (x[left] - a) / ((b - a) * (c - a))
        if b > c:
            right = (x > c) & (x <= b)
            out[right] = 2.0 * (b - x[right]) / ((b - a) * (b - c))
        if c == a:
            out = np.where(x == a, 2.0 / (b - a), out)
        return out

    def cdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        a, c, b = self.a, self.c, self.b
        out = np.zeros_like(x)
        if c > a:
            left = (x >= a) & (x <= c)
            out[left] = (x[left] - a) ** 2 / ((b - a) * (c - a))
        if b > c:
            right = (x > c) & (x <= b)
            out[right] = 1.0 - (b - x[right]) ** 2 / ((b - a) * (b - c))
        out[x > b] = 1.0
        return out

    def ppf(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        a, c, b = self.a, self.c, self.b
        fc = (c - a) / (b - a)
        left = a + np.sqrt(np.clip(u, 0, 1) * (b - a) * (c - a)) if c > a else np.full_like(u, a)
        right = b - np.sqrt(np.clip(1 - u, 0, 1) * (b - a) * (b - c)) if b > c else np.full_like(u, b)
        return np.where(u <= fc, left, right)


Component = Union[Uniform, TruncatedGaussian, Triangular]


# ---------------------------------------------------------------------------
# sufficient-statistic catalog for exponential families
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Poly:
    coeffs: tuple  # low order first: c0 + c1*x + ...

    def values(self, x) -> np.ndarray:
        return np.polynomial.polynomial.polyval(np.asarray(x, dtype=float), self.coeffs)


@dataclass(frozen=True)
class Cos:
    freq: float
    phase: float = 0.0

    def values(self, x) -> np.ndarray:
        return np.cos(self.freq * np.asarray(x, dtype=float) + self.phase)


@dataclass(frozen=True)
class Sin:
    freq: float
    phase: float = 0.0

    def values(self, x) -> np.ndarray:
        return np.sin(self.freq * np.asarray(x, dtype=float) + self.phase)


Stat = Union[Poly, Cos, Sin]


# ---------------------------------------------------------------------------
# families and models
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MixtureFamily:
    """p_theta = sum_i theta_i p_i with theta on the probability k-simplex."""

    components: tuple
    support: Support
    name: str = "mixture"

    def __post_init__(self):
        if len(self.components) < 2:
            raise ConfigError("mixture family needs k >= 2 components")

    @property
    def k(self) -> int:
        return len(self.components)


@dataclass(frozen=True)
class ExpFamily:
    """p_theta = p * exp(theta . h - g(theta)) with theta in a compact box."""

    reference: Component
    stats: tuple
    theta_box: tuple  # ((lo_1, hi_1), ..., (lo_k, hi_k))
    support: Support
    name: str = "exponential"

    def __post_init__(self):
        if len(self.stats) < 1:
            raise ConfigError("exponential family needs k >= 1 statistics")
        if len(self.theta_box) != len(self.stats):
            raise ConfigError("theta_box dimension must match number of statistics")
        for lo, hi in self.theta_box:
            if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
                raise ConfigError("theta_box axes must be finite with lo < hi")

    @property
    def k(self) -> int:
        return len(self.stats)


Family = Union[MixtureFamily, ExpFamily]


def as_param(family: Family, coords) -> np.ndarray:
    """Validate a parameter vector for `family` and return it as an array.

    Mixtures require a point of the probability simplex (sum 1 within 1e-12),
    exponential families a point of the theta box.
    """
    theta = np.asarray(coords, dtype=float).reshape(-1)
    if theta.size != family.k:
        raise DomainError(f"parameter has {theta.size} coords, family has k={family.k}")
    if isinstance(family, MixtureFamily):
        if np.any(theta < -SIMPLEX_TOL) or abs(theta.sum() - 1.0) > SIMPLEX_TOL:
            raise DomainError(f"{theta} is not on the probability simplex")
        theta = np.clip(theta, 0.0, None)
    else:
        for j, (lo, hi) in enumerate(family.theta_box):
            if not (lo - 1e-12 <= theta[j] <= hi + 1e-12):
                raise DomainError(f"coordinate {j} of {theta} outside theta_box")
    theta.flags.writeable = False
    return theta


@dataclass(frozen=True)
class SourceModel:
    family: Family
    theta: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "theta", as_param(self.family, self.theta))

    @property
    def support(self) -> Support:
        return self.family.support


@dataclass(frozen=True)
class QuadratureGrid:
    """Equispaced points on the support with trapezoid weights."""

    points: np.ndarray
    weights: np.ndarray

    @classmethod
    def build(cls, support: Support, n: int = DEFAULT_QUAD_POINTS) -> "QuadratureGrid":
        if n < MIN_QUAD_POINTS:
            raise ConfigError(f"quadrature grid needs at least {MIN_QUAD_POINTS} points")
        pts = np.linspace(support.lo, support.hi, n)
        h = (support.hi - support.lo) / (n - 1)
        w = np.full(n, h)
        w[0] = w[-1] = h / 2
        return cls(points=pts, weights=w)

    @property
    def n(self) -> int:
        return self.points.size


# ---------------------------------------------------------------------------
# density evaluation
# ---------------------------------------------------------------------------


def component_matrix(family: MixtureFamily, x) -> np.ndarray:
    """Component densities stacked as a (k, len(x)) matrix."""
    x = np.asarray(x, dtype=float)
    return np.stack([c.pdf(x) for c in family.components])


def stat_matrix(family: ExpFamily, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.stack([h.values(x) for h in family.stats])


def exp_normalizers(family: ExpFamily, thetas: np.ndarray, quad: QuadratureGrid) -> np.ndarray:
    """log integral of exp(theta . h) p over the support, one value per row of thetas."""
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    hmat = stat_matrix(family, quad.points)
    ref = family.reference.pdf(quad.points)
    integrals = np.exp(thetas @ hmat) @ (ref * quad.weights)
    if not np.all(np.isfinite(integrals)) or np.any(integrals <= 0):
        raise NumericError("exponential-family normalizer is not finite and positive")
    return np.log(integrals)


def exp_normalizer(family: ExpFamily, theta, quad: QuadratureGrid) -> float:
    theta = as_param(family, theta)
    return float(exp_normalizers(family, theta, quad)[0])


def densities_at(family: Family, thetas, x, quad: QuadratureGrid = None) -> np.ndarray:
    """Densities p_theta(x) as an (m, len(x)) matrix for m parameter rows.

    Exponential families need `quad` to evaluate the normalizer.
    """
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    x = np.asarray(x, dtype=float)
    if isinstance(family, MixtureFamily):
        return thetas @ component_matrix(family, x)
    if quad is None:
        quad = default_grid(family)
    g = exp_normalizers(family, thetas, quad)
    ref = family.reference.pdf(x)
    return ref[None, :] * np.exp(thetas @ stat_matrix(family, x) - g[:, None])


_GRID_CACHE: dict = {}


def default_grid(family: Family, n: int = DEFAULT_QUAD_POINTS) -> QuadratureGrid:
    key = (family.support.lo, family.support.hi, n)
    grid = _GRID_CACHE.get(key)
    if grid is None:
        grid = QuadratureGrid.build(family.support, n)
        _GRID_CACHE[key] = grid
    return grid


def density(model: SourceModel, x, quad: QuadratureGrid = None):
    """Density of the model at x (scalar or array); x must lie in the support."""
    arr = np.asarray(x, dtype=float)
    if not np.all(model.support.contains(arr)):
        raise DomainError(f"point outside support [{model.support.lo}, {model.support.hi}]")
    out = densities_at(model.family, model.theta, arr.reshape(-1), quad)[0]
    return float(out[0]) if arr.ndim == 0 else out.reshape(arr.shape)


def sample(model: SourceModel, seed: int, n: int) -> np.ndarray:
    """n i.i.d. draws from the model, deterministic given the seed.

    Mixtures: component selection then per-component inverse CDF.
    Exponential families: inverse of the quadrature-tabulated CDF with
    linear interpolation between grid points.
    """
    if n < 1:
        raise DomainError("sample size must be >= 1")
    rng = np.random.default_rng(int(seed))
    fam = model.family
    if isinstance(fam, MixtureFamily):
        weights = model.theta / model.theta.sum()
        comps = rng.choice(fam.k, size=n, p=weights)
        u = rng.random(n)
        out = np.empty(n)
        for i, comp in enumerate(fam.components):
            mask = comps == i
            if mask.any():
                out[mask] = comp.ppf(u[mask])
        return out
    quad = default_grid(fam)
    dens = densities_at(fam, model.theta, quad.points, quad)[0]
    cdf = np.concatenate([[0.0], np.cumsum((dens[1:] + dens[:-1]) / 2 * np.diff(quad.points))])
    cdf += np.linspace(0, 1e-12, cdf.size)  # strictly increasing for interp
    cdf /= cdf[-1]
    return np.interp(rng.random(n), cdf, quad.points)


# ---------------------------------------------------------------------------
# distances
# ---------------------------------------------------------------------------


def variational_distance(family: Family, theta, eta, quad: QuadratureGrid) -> float:
    """d_V = half the L1 distance between the two densities, clamped to [0, 1]."""
    theta = as_param(family, theta)
    eta = as_param(family, eta)
    dens = densities_at(family, np.stack([theta, eta]), quad.points, quad)
    val = 0.5 * float(np.abs(dens[0] - dens[1]) @ quad.weights)
    return min(max(val, 0.0), 1.0)


def relative_entropy(family: Family, theta, eta, quad: QuadratureGrid) -> float:
    """D(P_theta || P_eta) in nats by trapezoid quadrature.

    Raises DivergenceError if p_eta vanishes on a grid point where p_theta
    does not (the integral is +infinity).
    """
    theta = as_param(family, theta)
    eta = as_param(family, eta)
    dens = densities_at(family, np.stack([theta, eta]), quad.points, quad)
    p, q = dens[0], dens[1]
    mask = p > 0
    if np.any(q[mask] <= 0):
        raise DivergenceError("support mismatch: relative entropy is infinite")
    val = float((p[mask] * np.log(p[mask] / q[mask])) @ quad.weights[mask])
    if not np.isfinite(val):
        raise NumericError("relative entropy quadrature produced a non-finite value")
    return val


# ---------------------------------------------------------------------------
# validation and smoothness constants
# ---------------------------------------------------------------------------


def _theta_mesh(family: ExpFamily, per_axis: int = 3) -> np.ndarray:
    axes = [np.linspace(lo, hi, per_axis) for lo, hi in family.theta_box]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def validate_family(family: Family, quad: QuadratureGrid = None) -> None:
    """Check the family invariants at quadrature resolution; raise ConfigError.

    Mixtures: every component integrates to one over the support and the
    components are linearly independent (Gram-matrix rank). Exponential
    families: {1, h_i} linearly independent, normalizer finite over the box,
    and the grid estimate of sup ||ln p/p_theta||_inf below LOG_RATIO_CAP.
    """
    if quad is None:
        quad = default_grid(family)
    lo, hi = family.support.lo, family.support.hi
    if isinstance(family, MixtureFamily):
        for i, c in enumerate(family.components):
            mass = float(c.cdf(hi) - c.cdf(lo))  # closed-form, exact
            if abs(mass - 1.0) > COMPONENT_NORM_TOL:
                raise ConfigError(
                    f"component {i} carries mass {mass:.8f} on the support, not 1"
                )
        comp = component_matrix(family, quad.points)
        gram = (comp * quad.weights) @ comp.T
        if np.linalg.matrix_rank(gram, tol=1e-9) < family.k:
            raise ConfigError("mixture components are not linearly independent")
        return
    ref_mass = float(family.reference.cdf(hi) - family.reference.cdf(lo))
    if abs(ref_mass - 1.0) > COMPONENT_NORM_TOL:
        raise ConfigError("reference density does not carry mass 1 on the support")
    ref = family.reference.pdf(quad.points)
    hmat = stat_matrix(family, quad.points)
    basis = np.vstack([np.ones_like(quad.points), hmat])
    gram = (basis * (ref * quad.weights)) @ basis.T
    if not np.all(np.isfinite(gram)):
        raise ConfigError("statistics are not square-integrable w.r.t. the reference")
    if np.linalg.matrix_rank(gram, tol=1e-9) < family.k + 1:
        raise ConfigError("{1, h_i} are not linearly independent")
    mesh = _theta_mesh(family)
    g = exp_normalizers(family, mesh, quad)
    log_ratio = np.abs(mesh @ hmat - g[:, None])  # |ln(p_theta/p)| on the grid
    worst = float(log_ratio.max())
    if worst > LOG_RATIO_CAP:
        raise ConfigError(
            f"sup |ln p/p_theta| estimated at {worst:.2f} > {LOG_RATIO_CAP}; "
            "shrink theta_box or rescale the statistics"
        )


def validate_model(model: SourceModel, quad: QuadratureGrid = None) -> None:
    """Check the model density is nonnegative and integrates to 1 within 1e-4."""
    if quad is None:
        quad = default_grid(model.family)
    dens = densities_at(model.family, model.theta, quad.points, quad)[0]
    if np.any(dens < -1e-12):
        raise ConfigError("model density is negative somewhere on the grid")
    mass = float(dens @ quad.weights)
    if abs(mass - 1.0) > NORMALIZATION_TOL:
        raise ConfigError(f"model density integrates to {mass:.6f}, not 1")


def expfamily_smoothness_constants(family: ExpFamily, quad: QuadratureGrid = None):
    """Numerical estimates (m0, A_k) controlling d_V <= m0 e^{A_k r} r.

    m0 comes from the grid sup of |ln p/p_theta| over a theta mesh; A_k is
    the largest sup-norm over the L2(P) unit ball of span{1, h}, computed by
    orthonormalizing the basis against the reference measure.
    """
    if quad is None:
        quad = default_grid(family)
    ref = family.reference.pdf(quad.points)
    hmat = stat_matrix(family, quad.points)
    mesh = _theta_mesh(family)
    g = exp_normalizers(family, mesh, quad)
    sup_log_ratio = float(np.abs(mesh @ hmat - g[:, None]).max())
    m0 = 0.5 * np.exp(0.5 * sup_log_ratio)
    basis = np.vstack([np.ones_like(quad.points), hmat])
    gram = (basis * (ref * quad.weights)) @ basis.T
    chol = np.linalg.cholesky(gram)
    ortho = np.linalg.solve(chol, basis)  # rows orthonormal in L2(P)
    a_k = float(np.sqrt((ortho ** 2).sum(axis=0)).max())
    return m0, a_k


def mixture_lipschitz_constant(family: MixtureFamily) -> float:
    """Global Lipschitz constant of theta -> P_theta in d_V: sqrt(k)/2."""
    return float(np.sqrt(family.k) / 2.0)
