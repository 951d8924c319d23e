import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gcfk.errors import TrimTooLarge, WeightDimensionMismatch
from gcfk.linalg import QuadraticGame, build_sanction
from gcfk.manipulation import manip_index, solve_manipulation
from gcfk.mechanism import (
    AggregatorSpec,
    ContaminationModel,
    MixPolicy,
    aggregate,
    candidate_seed,
    empirical_sensitivity,
    mixed_index,
    mixing_bound,
    n_eff,
    non_dominated,
    optimal_reward_direction,
    pareto_frontier,
    triangular_weights,
    variance_mc,
)

from oracles import random_game

E1 = QuadraticGame(u=[1.0, 0.0], r=[0.0, 1.0], H=np.eye(2), q=0.5)


def test_optimal_direction_isotropic():
    np.testing.assert_allclose(optimal_reward_direction(E1), [1.0, 0.0])


def test_optimal_direction_anisotropic():
    g = QuadraticGame(u=np.array([1.0, 1.0]) / math.sqrt(2), r=[1.0, 0.0], H=np.diag([1.0, 3.0]), q=0.0)
    np.testing.assert_allclose(optimal_reward_direction(g), np.array([1.0, 3.0]) / math.sqrt(10), atol=1e-15)


@pytest.mark.parametrize("seed", range(30))
def test_optimal_direction_activates_constraint(seed):
    g = random_game(np.random.default_rng(seed))
    w = optimal_reward_direction(g)
    for a in (0.0, 1.0, 5.0):
        sol = solve_manipulation(g.with_reward(w), build_sanction(g, a))
        assert sol.constraint_active
        assert abs(sol.welfare_change) <= 1e-9


@pytest.mark.parametrize("seed", range(20))
def test_optimal_direction_zero_index_when_u_is_eigenvector(seed):
    rng = np.random.default_rng(seed)
    p = int(rng.integers(2, 6))
    Q, _ = np.linalg.qr(rng.normal(size=(p, p)))
    H = Q @ np.diag(rng.uniform(0.1, 3, size=p)) @ Q.T
    g = QuadraticGame(u=Q[:, 0] * rng.uniform(0.5, 2), r=rng.normal(size=p), H=H, q=0.3)
    w = optimal_reward_direction(g)
    for a in (0.0, 1.0, 5.0):
        assert manip_index(g.with_reward(w), a) <= 1e-9


def test_optimal_direction_can_leave_gain_for_anisotropic_curvature():
    # K u is not parallel to u here, so part of the reward stays orthogonal
    g = QuadraticGame(u=[1.0, 1.0], r=[1.0, 0.0], H=np.diag([1.0, 3.0]), q=0.0)
    w = optimal_reward_direction(g)
    m = manip_index(g.with_reward(w), 0.0)
    # direct: r = (1,3)/sqrt10, M = diag(1, 1/3); r'Mr = 4/10, u'Mr = 2/sqrt10, u'Mu = 4/3
    assert m == pytest.approx(0.5 * (0.4 - 0.4 / (4 / 3)), rel=1e-12)
    assert m > 0.05


@pytest.mark.parametrize("seed", range(20))
def test_optimal_direction_minimizes_response_norm(seed):
    # among r with u.r fixed, r = c K u minimizes r^T M r
    rng = np.random.default_rng(seed)
    g = random_game(rng)
    M = np.linalg.inv(g.K)
    w = optimal_reward_direction(g)
    w = w / (g.u @ w)
    base = w @ M @ w
    for _ in range(20):
        d = rng.normal(size=g.dim)
        d -= (g.u @ d) / (g.u @ g.u) * g.u
        r = w + d
        assert r @ M @ r >= base - 1e-12


def test_mixed_index_examples():
    s = build_sanction(E1, 0.0)
    assert mixed_index(E1, s, MixPolicy(0.0)) == pytest.approx(0.25)
    assert mixed_index(E1, s, MixPolicy(1.0)) == pytest.approx(0.0, abs=1e-15)
    assert mixed_index(E1, s, MixPolicy(0.5)) == pytest.approx(0.0625)


def test_mixing_bound_examples():
    m0 = manip_index(E1, 0.0)
    assert mixing_bound(E1, MixPolicy(0.5), m0) == pytest.approx(0.125)
    assert mixing_bound(E1, MixPolicy(0.0), m0) == pytest.approx(m0)
    assert mixing_bound(E1, MixPolicy(1.0), m0) == 0.0


@pytest.mark.parametrize("seed", range(40))
def test_mixing_bound_dominates(seed):
    rng = np.random.default_rng(seed)
    g = random_game(rng)
    eta = float(rng.uniform(0.2, 2))
    s = build_sanction(g, 0.0)
    m0 = manip_index(g, 0.0)
    for pi in np.linspace(0, 1, 11):
        mix = MixPolicy(float(pi), eta=eta)
        assert mixed_index(g, s, mix) <= mixing_bound(g, mix, m0) + 1e-10


def test_mixing_bound_not_monotone_for_aligned_reward():
    # with zero unmixed index the bound starts at 0 and rises before falling back
    g = E1.with_reward([1.0, 0.0])
    vals = [mixing_bound(g, MixPolicy(p), manip_index(g, 0.0)) for p in (0.0, 0.5, 1.0)]
    assert vals[0] == 0.0 and vals[1] > 0 and vals[2] == 0.0


def test_mix_policy_validation():
    with pytest.raises(ValueError):
        MixPolicy(1.5)
    with pytest.raises(ValueError):
        MixPolicy(0.5, sigma_c=0.0)


def test_aggregate_examples():
    assert aggregate(AggregatorSpec("mean"), [1, 2, 3]) == 2.0
    assert aggregate(AggregatorSpec("median"), [1, 2, 100]) == 2.0
    assert aggregate(AggregatorSpec("trimmed", trim_k=1), [1, 2, 100]) == 2.0
    assert aggregate(AggregatorSpec("median"), [4, 1, 3, 2]) == 2.5


def test_aggregate_errors():
    with pytest.raises(TrimTooLarge):
        aggregate(AggregatorSpec("trimmed", trim_k=2), [1, 2, 3, 4])
    with pytest.raises(WeightDimensionMismatch):
        aggregate(AggregatorSpec("sorted_weighted", weights=(0.5, 0.5)), [1, 2, 3])
    with pytest.raises(ValueError):
        AggregatorSpec("sorted_weighted", weights=(0.5, 0.6))
    with pytest.raises(ValueError):
        AggregatorSpec("mode")


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=1, max_size=40))
def test_aggregator_identities(xs):
    x = np.asarray(xs)
    n = x.size
    mean = aggregate(AggregatorSpec("mean"), x)
    assert mean == float(x.mean())
    assert aggregate(AggregatorSpec("trimmed", trim_k=0), x) == pytest.approx(mean, abs=1e-12 * max(1, np.abs(x).max()))
    uniform = tuple(np.full(n, 1.0 / n))
    assert aggregate(AggregatorSpec("sorted_weighted", weights=uniform), x) == pytest.approx(
        mean, abs=1e-12 * max(1, np.abs(x).max())
    )
    lo, hi = x.min(), x.max()
    for spec in (AggregatorSpec("median"), AggregatorSpec("sorted_weighted")):
        assert lo - 1e-9 <= aggregate(spec, x) <= hi + 1e-9


def test_triangular_weights():
    w = triangular_weights(5)
    np.testing.assert_allclose(w, np.array([1, 2, 3, 2, 1]) / 9)
    assert w.sum() == pytest.approx(1.0)


def test_n_eff():
    assert n_eff(AggregatorSpec("mean"), 50) == pytest.approx(50)
    assert n_eff(AggregatorSpec("trimmed", trim_k=5), 50) == pytest.approx(40)
    assert n_eff(AggregatorSpec("median"), 50) == pytest.approx(100 / math.pi)
    for spec in (AggregatorSpec("sorted_weighted"), AggregatorSpec("trimmed", trim_k=3)):
        assert n_eff(spec, 20) <= 20


def test_sensitivity_examples():
    one = ContaminationModel(rho=0.1, attack_magnitude=10.0)
    assert empirical_sensitivity(AggregatorSpec("mean"), 10, one) == pytest.approx(1.0)
    one11 = ContaminationModel(rho=1 / 11, attack_magnitude=10.0)
    assert one11.corrupted_count(11) == 1
    assert empirical_sensitivity(AggregatorSpec("median"), 11, one11) == 0.0
    assert empirical_sensitivity(AggregatorSpec("trimmed", trim_k=1), 10, one) == 0.0
    assert empirical_sensitivity(AggregatorSpec("mean"), 10, ContaminationModel(rho=0.0)) == 0.0


def test_sensitivity_exhaustive_matches_brute_force_on_noisy_baseline():
    model = ContaminationModel(rho=0.2, sigma_s=1.0, attack_magnitude=5.0)
    x0 = np.random.default_rng(4).normal(size=10)
    spec = AggregatorSpec("trimmed", trim_k=2)
    ref = aggregate(spec, x0)
    best = 0.0
    import itertools

    for idx in itertools.combinations(range(10), 2):
        for sg in itertools.product((1, -1), repeat=2):
            x = x0.copy()
            x[list(idx)] += 5.0 * np.asarray(sg)
            best = max(best, abs(aggregate(spec, x) - ref))
    assert empirical_sensitivity(spec, 10, model, baseline=x0) == pytest.approx(best, abs=1e-15)


def test_sensitivity_greedy_is_deterministic():
    model = ContaminationModel(rho=0.3, sigma_s=1.0)
    spec = AggregatorSpec("sorted_weighted")
    a = empirical_sensitivity(spec, 20, model, seed=3, baseline="noisy")
    b = empirical_sensitivity(spec, 20, model, seed=3, baseline="noisy")
    assert a == b > 0


def test_contamination_validation():
    with pytest.raises(ValueError):
        ContaminationModel(rho=0.5)
    assert ContaminationModel(sigma_s=2.0).attack_magnitude == 20.0


def _mc_se(var, reps):
    # standard error of a sample variance of roughly normal values
    return var * math.sqrt(2.0 / (reps - 1))


def test_variance_of_mean():
    reps = 20_000
    v = variance_mc(AggregatorSpec("mean"), 100, ContaminationModel(), reps, seed=1)
    assert abs(v - 0.01) <= 3 * _mc_se(0.01, reps)


def test_variance_of_median():
    reps = 20_000
    target = math.pi / 2 * 0.01
    v = variance_mc(AggregatorSpec("median"), 100, ContaminationModel(), reps, seed=2)
    # finite-n median variance sits slightly above the asymptote
    assert abs(v - target) <= 3 * _mc_se(target, reps) + 0.02 * target


def test_trimmed_variance_between_mean_and_median():
    m = ContaminationModel()
    vm = variance_mc(AggregatorSpec("mean"), 100, m, 20_000, seed=5)
    vt = variance_mc(AggregatorSpec("trimmed", trim_k=10), 100, m, 20_000, seed=5)
    vd = variance_mc(AggregatorSpec("median"), 100, m, 20_000, seed=5)
    assert vm < vt < vd


def test_variance_reps_floor():
    with pytest.raises(ValueError):
        variance_mc(AggregatorSpec("mean"), 10, ContaminationModel(), 999, seed=0)


def test_frontier_clean_regime_keeps_mean():
    front = pareto_frontier([AggregatorSpec("mean"), AggregatorSpec("median")], 50, ContaminationModel(0.0), 4000, 9)
    assert [p.spec.kind for p in front] == ["mean"]


def test_frontier_contaminated_regime_prefers_robust():
    model = ContaminationModel(0.3, 1.0, 10.0)
    cands = [AggregatorSpec("mean"), AggregatorSpec("median"), AggregatorSpec("trimmed", trim_k=20)]
    front = pareto_frontier(cands, 50, model, 4000, 9)
    kinds = {p.spec.label for p in front}
    assert "mean" not in kinds
    assert kinds & {"median", "trimmed_k20"}


def test_frontier_single_candidate_and_determinism():
    spec = AggregatorSpec("trimmed", trim_k=2)
    a = pareto_frontier([spec], 20, ContaminationModel(0.1), 2000, 4)
    b = pareto_frontier([spec], 20, ContaminationModel(0.1), 2000, 4)
    assert len(a) == 1 and a[0].spec == spec
    assert a == b
    with pytest.raises(ValueError):
        pareto_frontier([], 20, ContaminationModel(0.1), 2000, 4)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 10), st.floats(0, 10)), min_size=1, max_size=15))
def test_non_dominated_property(points):
    keep = non_dominated(points)
    assert keep
    for i in keep:
        a, b = points[i]
        assert not any(c <= a and d <= b and (c < a or d < b) for c, d in points)
    for j in set(range(len(points))) - set(keep):
        a, b = points[j]
        assert any(c <= a and d <= b and (c < a or d < b) for c, d in points)


def test_candidate_seeds_distinct_and_stable():
    seeds = [candidate_seed(42, i) for i in range(100)]
    assert len(set(seeds)) == 100
    assert seeds == [candidate_seed(42, i) for i in range(100)]
