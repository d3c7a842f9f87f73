import math

import numpy as np
import pytest

from uqid import estimator as est, sources as src
from uqid.errors import CapacityError, DomainError


class HalfLine:
    """{x >= a}; the classic VC-dimension-1 hand class."""

    def __init__(self, a):
        self.a = a

    def contains(self, x):
        return np.asarray(x) >= self.a


# ---------------------------------------------------------------------------
# set membership and measures
# ---------------------------------------------------------------------------


def test_set_member_disjoint(disjoint_mixture):
    ys = est.YatracosSet(disjoint_mixture, [1, 0], [0, 1])
    assert est.set_member(ys, 0.5) is True
    assert est.set_member(ys, 2.5) is False
    with pytest.raises(DomainError):
        est.set_member(ys, 3.5)


def test_set_member_tie_is_false(overlap_mixture):
    # densities agree on [0.5, 1]; strict comparison keeps ties out
    ys = est.YatracosSet(overlap_mixture, [1, 0], [0, 1])
    assert est.set_member(ys, 0.75) is False
    assert est.set_member(ys, 0.2) is True


def test_yatracos_requires_distinct_params(overlap_mixture):
    with pytest.raises(DomainError):
        est.YatracosSet(overlap_mixture, [0.5, 0.5], [0.5, 0.5])


def test_empirical_measure_counting(disjoint_mixture):
    ys = est.YatracosSet(disjoint_mixture, [1, 0], [0, 1])
    assert est.empirical_measure([0.5, 2.1, 2.5, 2.9], ys) == 0.25
    assert est.empirical_measure([0.1, 0.2], ys) == 1.0


def test_empirical_measure_binomial(overlap_mixture):
    # A = [0, 0.5) under theta=(1,0) vs eta=(0,1); P(X in A) = 0.5 for U(0,1)
    ys = est.YatracosSet(overlap_mixture, [1, 0], [0, 1])
    model = src.SourceModel(overlap_mixture, [1.0, 0.0])
    xs = src.sample(model, 31, 20_000)
    p_hat = est.empirical_measure(xs, ys)
    assert abs(p_hat - 0.5) < 3 * math.sqrt(0.25 / 20_000)


def test_model_measure_interval(overlap_mixture, quad15):
    ys = est.YatracosSet(overlap_mixture, [1, 0], [0, 1])  # the set [0, 0.5)
    model = src.SourceModel(overlap_mixture, [1.0, 0.0])
    assert est.model_measure(model, ys, quad15) == pytest.approx(0.5, abs=1e-3)
    model2 = src.SourceModel(overlap_mixture, [0.6, 0.4])
    assert est.model_measure(model2, ys, quad15) == pytest.approx(0.3, abs=1e-3)


def test_model_measure_empty_and_partition(overlap_mixture, quad15):
    ys = est.YatracosSet(overlap_mixture, [1, 0], [0, 1])
    ys_swapped = est.YatracosSet(overlap_mixture, [0, 1], [1, 0])
    model = src.SourceModel(overlap_mixture, [0.35, 0.65])
    a = est.model_measure(model, ys, quad15)
    b = est.model_measure(model, ys_swapped, quad15)
    tie_dens = src.densities_at(overlap_mixture, model.theta, quad15.points, quad15)[0]
    mask_tie = ~ys.contains(quad15.points) & ~ys_swapped.contains(quad15.points)
    tie = float((tie_dens * quad15.weights)[mask_tie].sum())
    assert a + b + tie == pytest.approx(1.0, abs=2e-3)


# ---------------------------------------------------------------------------
# delta statistic and the estimator
# ---------------------------------------------------------------------------


def test_delta_stat_empty_set_pair():
    # identical component densities make every Yatracos set empty
    fam = src.MixtureFamily((src.Uniform(0, 1), src.Uniform(0, 1)), src.Support(0, 1))
    quad = src.default_grid(fam)
    grid = est.CandidateGrid(
        points=np.array([[1.0, 0.0], [0.0, 1.0]]),
        pairs=np.array([[0, 1]]),
        pair_cap=1,
        subdivisions=1,
    )
    xs = src.sample(src.SourceModel(fam, [1.0, 0.0]), 3, 50)
    assert est.delta_stat(fam, [0.5, 0.5], xs, grid, quad) == 0.0


def test_delta_stat_hand_oracle(overlap_mixture, quad15):
    # candidates c0=(1,0), c1=(0,1), c2=(.5,.5); pairs (c0,c1) and (c1,c2).
    # A_{c0,c1} = [0,0.5): P_{c0} = 0.5, empirical on {0.1, 0.6, 1.2} = 1/3.
    # A_{c1,c2} = (1,1.5]: P_{c0} = 0,   empirical = 1/3.
    # Delta_{c0} = max(|0.5 - 1/3|, |0 - 1/3|) = 1/3.
    grid = est.CandidateGrid(
        points=np.array([[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]]),
        pairs=np.array([[0, 1], [1, 2]]),
        pair_cap=4,
        subdivisions=2,
    )
    sample = np.array([0.1, 0.6, 1.2])
    val = est.delta_stat(overlap_mixture, [1.0, 0.0], sample, grid, quad15)
    assert val == pytest.approx(1.0 / 3.0, abs=1e-3)


def test_delta_stat_permutation_invariance(overlap_mixture, quad15):
    grid = est.CandidateGrid.build(overlap_mixture, 64)
    xs = src.sample(src.SourceModel(overlap_mixture, [0.6, 0.4]), 17, 200)
    meas = est.YatracosMeasures(overlap_mixture, grid, quad15)
    a = est.delta_stat(overlap_mixture, [0.3, 0.7], xs, grid, quad15, meas)
    rng = np.random.default_rng(0)
    b = est.delta_stat(overlap_mixture, [0.3, 0.7], rng.permutation(xs), grid, quad15, meas)
    assert a == b


def test_min_distance_singleton(overlap_mixture, quad15):
    grid = est.CandidateGrid(
        points=np.array([[0.25, 0.75]]),
        pairs=np.zeros((0, 2), dtype=np.int64),
        pair_cap=4,
        subdivisions=1,
    )
    # with no pairs the deviation is vacuously zero everywhere
    grid = est.CandidateGrid(
        points=np.array([[0.25, 0.75], [0.25, 0.75]]),
        pairs=np.array([[0, 1]]),
        pair_cap=4,
        subdivisions=1,
    )
    xs = src.sample(src.SourceModel(overlap_mixture, [0.7, 0.3]), 5, 64)
    res = est.min_distance_estimate(overlap_mixture, xs, grid, quad15)
    assert np.array_equal(res, [0.25, 0.75])


def test_min_distance_deterministic(overlap_mixture, quad15):
    grid = est.CandidateGrid.build(overlap_mixture, 256)
    xs = src.sample(src.SourceModel(overlap_mixture, [0.7, 0.3]), 21, 256)
    a = est.min_distance_estimate(overlap_mixture, xs, grid, quad15)
    b = est.min_distance_estimate(overlap_mixture, xs, grid, quad15)
    assert np.array_equal(a, b)


def test_min_distance_simulation_oracle(overlap_mixture, quad15):
    # mesh step 0.05 (n=400 gives ceil(sqrt(n))=20), samples of 2000:
    # the 95th percentile of d_V(P_theta, P_theta*) over 20 seeds stays <= 0.06
    grid = est.CandidateGrid.build(overlap_mixture, 400)
    assert grid.subdivisions == 20
    meas = est.YatracosMeasures(overlap_mixture, grid, quad15)
    model = src.SourceModel(overlap_mixture, [0.7, 0.3])
    errs = []
    for seed in range(20):
        xs = src.sample(model, 1000 + seed, 2000)
        theta_star = est.min_distance_estimate(overlap_mixture, xs, grid, quad15, meas)
        errs.append(src.variational_distance(overlap_mixture, model.theta, theta_star, quad15))
    assert np.percentile(errs, 95) <= 0.06


def test_min_distance_key_property(overlap_mixture, quad15):
    # finite-grid restatement of the estimation bound:
    # d_V(theta, theta*) <= 2 Delta_theta + 3/(2n) + 3 * covering radius
    n = 512
    grid = est.CandidateGrid.build(overlap_mixture, n)
    meas = est.YatracosMeasures(overlap_mixture, grid, quad15)
    slack = 3.0 * est.grid_covering_slack(overlap_mixture, grid, quad15)
    rng = np.random.default_rng(8)
    for trial in range(20):
        theta = rng.dirichlet([1, 1])
        model = src.SourceModel(overlap_mixture, theta)
        xs = src.sample(model, 5000 + trial, n)
        res = est.min_distance_estimate_full(overlap_mixture, xs, grid, quad15, meas)
        delta_theta = est.delta_stat(overlap_mixture, theta, xs, grid, quad15, meas)
        dv = src.variational_distance(overlap_mixture, theta, res.theta, quad15)
        assert dv <= 2 * delta_theta + 1.5 / n + slack + 2e-3


def test_vc_deviation_bound(overlap_mixture, quad15):
    # 95th percentile of Delta_theta at n=4096 under the VC budget
    # sqrt(128 V ln n / n) with V = k = 2
    n = 4096
    grid = est.CandidateGrid.build(overlap_mixture, n)
    meas = est.YatracosMeasures(overlap_mixture, grid, quad15)
    model = src.SourceModel(overlap_mixture, [0.7, 0.3])
    model_pairs = meas.model_measures(model.theta)[0]
    deltas = []
    for seed in range(100):
        xs = src.sample(model, 77000 + seed, n)
        emp = meas.empirical_measures(xs)
        deltas.append(float(np.abs(model_pairs - emp).max()))
    budget = math.sqrt(128 * 2 * math.log(n) / n)
    assert np.percentile(deltas, 95) <= budget


# ---------------------------------------------------------------------------
# candidate grids
# ---------------------------------------------------------------------------


def test_candidate_grid_step_floor(overlap_mixture):
    g = est.CandidateGrid.build(overlap_mixture, 2 ** 20)
    assert g.subdivisions == 64  # the 1/64 floor binds for huge n
    g2 = est.CandidateGrid.build(overlap_mixture, 64)
    assert g2.subdivisions == 8


def test_candidate_grid_pair_subsampling(mixture3):
    g = est.CandidateGrid.build(mixture3, 4096, pair_cap=500, subsample_seed=5)
    assert len(g.pairs) == 500
    assert not g.all_pairs_searched
    assert len({(int(i), int(j)) for i, j in g.pairs}) == 500
    assert np.all(g.pairs[:, 0] < g.pairs[:, 1])
    g_again = est.CandidateGrid.build(mixture3, 4096, pair_cap=500, subsample_seed=5)
    assert np.array_equal(g.pairs, g_again.pairs)


def test_candidate_grid_box(expfam2):
    g = est.CandidateGrid.build(expfam2, 64)
    lows = np.array([lo for lo, _ in expfam2.theta_box])
    highs = np.array([hi for _, hi in expfam2.theta_box])
    assert np.all(g.points >= lows - 1e-12) and np.all(g.points <= highs + 1e-12)
    # endpoints present on each axis
    assert np.isclose(g.points[:, 0].max(), 0.5)
    assert np.isclose(g.points[:, 0].min(), -0.5)


# ---------------------------------------------------------------------------
# VC machinery
# ---------------------------------------------------------------------------


def test_shatter_single_point():
    sets = [HalfLine(0.0), HalfLine(2.0)]
    assert est.shatter_coefficient(sets, [1.0]) == 2


def test_shatter_empty_class():
    assert est.shatter_coefficient([], [0.1, 0.2]) == 0


def test_shatter_point_cap():
    with pytest.raises(CapacityError):
        est.shatter_coefficient([HalfLine(0.0)], list(np.linspace(0, 1, 21)))


def test_halfline_patterns_match_hand_enumeration():
    # x1 < x2: patterns (0,0), (0,1), (1,1) are achievable, (1,0) is not
    sets = [HalfLine(a) for a in np.linspace(-1, 3, 101)]
    pts = [0.5, 1.5]
    assert est.shatter_coefficient(sets, pts) == 3
    patterns = {tuple(s.contains(np.array(pts)).tolist()) for s in sets}
    assert patterns == {(False, False), (True, True), (False, True)}


def test_shatter_monotone_in_class():
    rng = np.random.default_rng(0)
    pts = rng.uniform(0, 1, size=6)
    sets = [HalfLine(a) for a in rng.uniform(0, 1, size=12)]
    counts = [est.shatter_coefficient(sets[:m], pts) for m in range(len(sets) + 1)]
    assert all(a <= b for a, b in zip(counts, counts[1:]))


def test_mixture_yatracos_never_shatters_three(overlap_mixture, quad15):
    # V(A_Theta) <= k = 2, so 3 points can never see all 8 patterns
    mesh = est._simplex_mesh(2, 12)
    sets = est.yatracos_sets_from_mesh(overlap_mixture, mesh, quad15, limit=500)
    rng = np.random.default_rng(9)
    for _ in range(25):
        pts = rng.uniform(0, 1.5, size=3)
        assert est.shatter_coefficient(sets, pts) < 8


def test_vc_upper_check_mixtures(overlap_mixture, mixture3):
    assert est.vc_upper_check(overlap_mixture, trials=200, points_per_trial=3, seed=11)
    assert est.vc_upper_check(mixture3, trials=200, points_per_trial=4, seed=12)


def test_vc_upper_check_expfam(expfam2):
    # V <= k + 1 for k statistics; point sets of size k + 2 never shatter
    res = est.vc_upper_check(expfam2, trials=200, points_per_trial=4, seed=13)
    assert res.passed and res.counterexample is None


def test_vc_upper_check_finds_shattering():
    # one linear statistic spans {a0 + a1 x}: half-lines both ways, V = 2;
    # pairs of points ARE shattered at size 2
    fam = src.ExpFamily(
        reference=src.Uniform(0, 1),
        stats=(src.Poly((0.0, 1.0)),),
        theta_box=((-1.0, 1.0),),
        support=src.Support(0, 1),
    )
    res = est.vc_upper_check(fam, trials=50, points_per_trial=2, seed=3)
    assert not res.passed
    assert res.counterexample is not None and len(res.counterexample) == 2
