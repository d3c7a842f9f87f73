import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from uqid import sources as src
from uqid.errors import ConfigError, DivergenceError, DomainError

E = math.e


# ---------------------------------------------------------------------------
# density evaluation
# ---------------------------------------------------------------------------


def test_density_identical_components():
    # degenerate on purpose: both components the same density, any theta gives 1
    fam = src.MixtureFamily((src.Uniform(0, 1), src.Uniform(0, 1)), src.Support(0, 1))
    model = src.SourceModel(fam, [0.5, 0.5])
    assert src.density(model, 0.3) == pytest.approx(1.0, abs=1e-12)


def test_density_component_support(overlap_mixture):
    model = src.SourceModel(overlap_mixture, [1.0, 0.0])
    assert src.density(model, 1.2) == 0.0
    assert src.density(model, 0.2) == pytest.approx(1.0)


def test_density_expfam_closed_form(linear_expfam):
    # independent oracle: g(1) = ln(e - 1), density = e^x / (e - 1)
    model = src.SourceModel(linear_expfam, [1.0])
    expect = math.exp(0.5) / (E - 1)
    assert src.density(model, 0.5) == pytest.approx(expect, abs=1e-6)


def test_density_outside_support_raises(overlap_mixture):
    model = src.SourceModel(overlap_mixture, [0.5, 0.5])
    with pytest.raises(DomainError):
        src.density(model, 1.6)
    with pytest.raises(DomainError):
        src.density(model, np.array([0.2, -0.1]))


def test_density_vectorized_matches_scalar(mixture3):
    model = src.SourceModel(mixture3, [0.2, 0.5, 0.3])
    xs = np.linspace(0, 1, 17)
    vec = src.density(model, xs)
    assert vec == pytest.approx([src.density(model, float(x)) for x in xs])


# ---------------------------------------------------------------------------
# normalizers
# ---------------------------------------------------------------------------


def test_exp_normalizer_zero_theta(linear_expfam):
    quad = src.default_grid(linear_expfam)
    assert src.exp_normalizer(linear_expfam, [0.0], quad) == pytest.approx(0.0, abs=1e-10)


@pytest.mark.parametrize(
    "theta,expect",
    [(1.0, math.log(E - 1)), (-1.0, math.log(1 - math.exp(-1)))],
)
def test_exp_normalizer_closed_forms(linear_expfam, theta, expect):
    quad = src.default_grid(linear_expfam)
    assert src.exp_normalizer(linear_expfam, [theta], quad) == pytest.approx(expect, abs=1e-6)


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------


def test_sample_deterministic(overlap_mixture, linear_expfam):
    for fam, theta in ((overlap_mixture, [0.7, 0.3]), (linear_expfam, [0.5])):
        model = src.SourceModel(fam, theta)
        a = src.sample(model, 12345, 257)
        b = src.sample(model, 12345, 257)
        assert np.array_equal(a, b)
        c = src.sample(model, 12346, 257)
        assert not np.array_equal(a, c)


def test_sample_support(overlap_mixture):
    model = src.SourceModel(overlap_mixture, [1.0, 0.0])
    xs = src.sample(model, 7, 5000)
    assert xs.min() >= 0.0 and xs.max() <= 1.0


def test_sample_mean_clt():
    fam = src.MixtureFamily((src.Uniform(0, 1), src.Uniform(0, 1)), src.Support(0, 1))
    model = src.SourceModel(fam, [1.0, 0.0])
    xs = src.sample(model, 99, 100_000)
    # 3 sigma with sigma = (1/sqrt(12))/sqrt(n) ~ 0.0009; spec budget 0.005
    assert abs(xs.mean() - 0.5) < 0.005


def test_sample_expfam_mean_matches_quadrature(linear_expfam):
    quad = src.default_grid(linear_expfam)
    model = src.SourceModel(linear_expfam, [1.0])
    dens = src.densities_at(linear_expfam, model.theta, quad.points, quad)[0]
    oracle_mean = float((dens * quad.points) @ quad.weights)
    xs = src.sample(model, 5, 200_000)
    assert xs.mean() == pytest.approx(oracle_mean, abs=0.003)


def test_sample_triangular_matches_cdf(mixture3):
    model = src.SourceModel(mixture3, [0.0, 0.0, 1.0])
    xs = src.sample(model, 11, 100_000)
    tri = mixture3.components[2]
    for q in (0.1, 0.5, 0.9):
        assert np.mean(xs <= tri.ppf(q)) == pytest.approx(q, abs=0.01)


# ---------------------------------------------------------------------------
# distances
# ---------------------------------------------------------------------------


def test_dv_identical(overlap_mixture, quad15):
    assert src.variational_distance(overlap_mixture, [0.3, 0.7], [0.3, 0.7], quad15) == 0.0


def test_dv_disjoint_supports(disjoint_mixture):
    quad = src.default_grid(disjoint_mixture)
    dv = src.variational_distance(disjoint_mixture, [1, 0], [0, 1], quad)
    assert dv == pytest.approx(1.0, abs=1e-4)


def test_dv_half_overlap(overlap_mixture, quad15):
    dv = src.variational_distance(overlap_mixture, [1, 0], [0, 1], quad15)
    assert dv == pytest.approx(0.5, abs=1e-4)


def test_dv_triangle_inequality(overlap_mixture, quad15):
    rng = np.random.default_rng(2024)
    for _ in range(100):
        a, b, c = (rng.dirichlet([1, 1]) for _ in range(3))
        dab = src.variational_distance(overlap_mixture, a, b, quad15)
        dbc = src.variational_distance(overlap_mixture, b, c, quad15)
        dac = src.variational_distance(overlap_mixture, a, c, quad15)
        assert dac <= dab + dbc + 1e-6


def test_relative_entropy_zero(linear_expfam):
    quad = src.default_grid(linear_expfam)
    assert src.relative_entropy(linear_expfam, [0.4], [0.4], quad) == pytest.approx(0.0, abs=1e-10)


def test_relative_entropy_closed_form(linear_expfam):
    # D(P_0 || P_1) = g(1) - g(0) - (1 - 0) * E_0[x] = ln(e-1) - 1/2
    quad = src.default_grid(linear_expfam)
    val = src.relative_entropy(linear_expfam, [0.0], [1.0], quad)
    assert val == pytest.approx(math.log(E - 1) - 0.5, abs=1e-6)


def test_relative_entropy_support_mismatch(disjoint_mixture):
    quad = src.default_grid(disjoint_mixture)
    with pytest.raises(DivergenceError):
        src.relative_entropy(disjoint_mixture, [1, 0], [0, 1], quad)


def test_pinsker_on_seeded_pairs(overlap_mixture, linear_expfam):
    rng = np.random.default_rng(7)
    quad_m = src.default_grid(overlap_mixture)
    for _ in range(50):
        a = 0.05 + 0.9 * rng.random()
        b = 0.05 + 0.9 * rng.random()
        theta, eta = [a, 1 - a], [b, 1 - b]
        dv = src.variational_distance(overlap_mixture, theta, eta, quad_m)
        kl = src.relative_entropy(overlap_mixture, theta, eta, quad_m)
        assert kl >= -1e-8
        assert dv <= math.sqrt(kl / 2) + 1e-4
    quad_e = src.default_grid(linear_expfam)
    for _ in range(50):
        t, e = rng.uniform(-1, 1, size=2)
        dv = src.variational_distance(linear_expfam, [t], [e], quad_e)
        kl = src.relative_entropy(linear_expfam, [t], [e], quad_e)
        assert dv <= math.sqrt(kl / 2) + 1e-4


def test_mixture_lipschitz_bound(mixture3):
    quad = src.default_grid(mixture3)
    lip = src.mixture_lipschitz_constant(mixture3)
    assert lip == pytest.approx(math.sqrt(3) / 2)
    rng = np.random.default_rng(42)
    for _ in range(200):
        theta = rng.dirichlet([1, 1, 1])
        eta = rng.dirichlet([1, 1, 1])
        dv = src.variational_distance(mixture3, theta, eta, quad)
        assert dv <= lip * np.linalg.norm(theta - eta) + 1e-4


def test_expfam_smoothness_bound(expfam2):
    quad = src.default_grid(expfam2)
    m0, a_k = src.expfamily_smoothness_constants(expfam2, quad)
    assert m0 > 0 and a_k >= 1.0
    rng = np.random.default_rng(3)
    for _ in range(100):
        theta = rng.uniform(-0.5, 0.5, size=2)
        eta = rng.uniform(-0.5, 0.5, size=2)
        dv = src.variational_distance(expfam2, theta, eta, quad)
        r = np.linalg.norm(theta - eta)
        assert dv <= m0 * math.exp(a_k * r) * r + 1e-3


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------


def test_model_normalization(overlap_mixture, mixture3, expfam2):
    rng = np.random.default_rng(1)
    for fam in (overlap_mixture, mixture3):
        for _ in range(10):
            src.validate_model(src.SourceModel(fam, rng.dirichlet(np.ones(fam.k))))
    for _ in range(10):
        theta = rng.uniform(-0.5, 0.5, size=2)
        src.validate_model(src.SourceModel(expfam2, theta))


def test_validate_rejects_leaking_component():
    fam = src.MixtureFamily(
        (src.Uniform(0, 1), src.Uniform(0.5, 1.5)), src.Support(0, 1.2)
    )
    with pytest.raises(ConfigError, match="mass"):
        src.validate_family(fam)


def test_validate_rejects_dependent_components():
    fam = src.MixtureFamily((src.Uniform(0, 1), src.Uniform(0, 1)), src.Support(0, 1))
    with pytest.raises(ConfigError, match="independent"):
        src.validate_family(fam)


def test_validate_rejects_wild_expfam():
    fam = src.ExpFamily(
        reference=src.Uniform(0, 1),
        stats=(src.Poly((0.0, 60.0)),),  # theta*h reaches 60 on the box corner
        theta_box=((-1.0, 1.0),),
        support=src.Support(0, 1),
    )
    with pytest.raises(ConfigError, match="ln p"):
        src.validate_family(fam)


def test_param_validation(overlap_mixture, linear_expfam):
    with pytest.raises(DomainError):
        src.as_param(overlap_mixture, [0.6, 0.6])
    with pytest.raises(DomainError):
        src.as_param(overlap_mixture, [1.2, -0.2])
    with pytest.raises(DomainError):
        src.as_param(linear_expfam, [1.5])
    with pytest.raises(DomainError):
        src.as_param(overlap_mixture, [1.0])  # wrong length


# ---------------------------------------------------------------------------
# properties
# ---------------------------------------------------------------------------


@given(st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_dv_symmetric_and_bounded(a, b):
    fam = src.MixtureFamily(
        (src.Uniform(0.0, 1.0), src.Uniform(0.5, 1.5)), src.Support(0.0, 1.5)
    )
    quad = src.default_grid(fam, 2 ** 10)
    theta, eta = [a, 1 - a], [b, 1 - b]
    d1 = src.variational_distance(fam, theta, eta, quad)
    d2 = src.variational_distance(fam, eta, theta, quad)
    assert d1 == pytest.approx(d2, abs=1e-12)
    assert 0.0 <= d1 <= 1.0


@given(st.integers(0, 2 ** 63 - 1), st.integers(1, 64))
def test_sample_determinism_property(seed, n):
    fam = src.MixtureFamily(
        (src.Uniform(0.0, 1.0), src.Uniform(0.5, 1.5)), src.Support(0.0, 1.5)
    )
    model = src.SourceModel(fam, [0.4, 0.6])
    assert np.array_equal(src.sample(model, seed, n), src.sample(model, seed, n))
