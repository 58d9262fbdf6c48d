import itertools
import math
import warnings
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from splab.bayes_mixture import MixtureModel
from splab.conjugate import DirichletMixture, DirichletPrior
from splab.divergence import (
    bernoulli_divergence,
    compositions,
    continuous_bound_check,
    exact_divergence_iid,
    extended_precision_check,
    mc_divergence,
    step_distances,
    step_distances_batch,
    universal_vs_continuous,
)
from splab.env_models import Bernoulli, Markov, Multinomial
from splab.errors import DomainError, InputError
from splab.machine import enumerate_programs

HALF = Fraction(1, 2)
MU = Bernoulli(Fraction(3, 10))
XI = MixtureModel((MU, Bernoulli(Fraction(7, 10))), (HALF, HALF))

# regression value produced by the exact count DP (cross-checked below by MC and mpmath)
D_100_GOLDEN = 0.6931036926


def test_step_distances_by_hand():
    s = step_distances((0.5, 0.5), (0.6, 0.4))
    assert s.sq_euclid == pytest.approx(0.02)
    assert s.absolute == pytest.approx(0.1)
    assert s.hellinger == pytest.approx((math.sqrt(0.5) - math.sqrt(0.6)) ** 2 + (math.sqrt(0.5) - math.sqrt(0.4)) ** 2)
    assert s.kl == pytest.approx(0.5 * math.log(0.5 / 0.6) + 0.5 * math.log(0.5 / 0.4))


def test_squared_euclidean_can_exceed_hellinger():
    # e <= h is not a valid ordering; this pair is a counterexample
    s = step_distances((0.5, 0.5), (0.6, 0.4))
    assert s.sq_euclid > s.hellinger


def test_kl_is_infinite_off_support():
    s = step_distances((0.5, 0.5), (1.0, 0.0))
    assert s.infinite_kl
    assert step_distances((1.0, 0.0), (0.5, 0.5)).kl == pytest.approx(math.log(2))


def test_step_distance_validation():
    with pytest.raises(InputError):
        step_distances((0.5, 0.5), (0.2, 0.2, 0.6))
    with pytest.raises(InputError):
        step_distances((0.5, 0.6), (0.5, 0.5))


simplex_pairs = st.integers(2, 5).flatmap(lambda d: st.tuples(
    st.lists(st.floats(0.0, 1.0), min_size=d, max_size=d).filter(lambda v: sum(v) > 1e-3),
    st.lists(st.floats(0.0, 1.0), min_size=d, max_size=d).filter(lambda v: sum(v) > 1e-3),
))


@settings(max_examples=300, deadline=None)
@given(simplex_pairs)
def test_valid_distance_chain(pair):
    p = np.asarray(pair[0]) / sum(pair[0])
    q = np.asarray(pair[1]) / sum(pair[1])
    r = step_distances_batch(p, q)
    slack = 1e-12
    assert r["e"] <= 2 * r["a"] ** 2 + slack
    assert 2 * r["a"] ** 2 <= r["k"] + slack
    assert r["h"] <= r["k"] + slack
    assert r["h"] <= 2 * r["a"] + slack


def test_compositions():
    assert sorted(compositions(2, 2).tolist()) == [[0, 2], [1, 1], [2, 0]]
    assert len(compositions(4, 3)) == math.comb(6, 2)


def _brute_force(mu, xi, n):
    """D_t and cumulative E[h_t] by summing over all strings."""
    D, sum_h, h_acc = [], [], 0.0
    for t in range(1, n + 1):
        Dt, ht = 0.0, 0.0
        for bits in itertools.product((0, 1), repeat=t):
            pm = float(mu.prob(bits))
            if pm == 0:
                continue
            Dt += pm * math.log(pm / float(xi.prob(bits)))
            prefix = bits[:-1]
            if bits[-1] == 0:  # one visit per prefix
                pp = float(mu.prob(prefix))
                q = [float(xi.prob(prefix + (a,)) / xi.prob(prefix)) for a in (0, 1)]
                p = [float(v) for v in mu.conditional(prefix)]
                ht += pp * sum((math.sqrt(p[a]) - math.sqrt(q[a])) ** 2 for a in (0, 1))
        h_acc += ht
        D.append(Dt)
        sum_h.append(h_acc)
    return np.asarray(D), np.asarray(sum_h)


@pytest.mark.parametrize("xi", [XI, DirichletMixture(DirichletPrior((1, 1)))])
def test_exact_dp_matches_enumeration(xi):
    curve = exact_divergence_iid(MU, xi, 9)
    D, sum_h = _brute_force(MU, xi, 9)
    assert curve.D == pytest.approx(D, abs=1e-13)
    assert curve.sum_h == pytest.approx(sum_h, abs=1e-13)


def test_chain_rule_sum_kl_equals_divergence():
    curve = exact_divergence_iid(MU, XI, 150)
    assert np.max(np.abs(curve.sum_k - curve.D)) < 1e-12


def test_two_coin_bound_chain_and_golden():
    curve = exact_divergence_iid(MU, XI, 200)
    assert curve.bound == pytest.approx(math.log(2))
    assert curve.satisfied().all()
    assert np.all(curve.D <= math.log(2))
    assert curve.D[99] == pytest.approx(D_100_GOLDEN, abs=1e-10)


def test_extended_precision_agrees_with_float_dp():
    recs = extended_precision_check(MU, XI, 40, dps=40)
    curve = exact_divergence_iid(MU, XI, 40)
    assert all(r["chain_ok"] for r in recs)
    assert [float(r["D_n"]) for r in recs] == pytest.approx(curve.D, abs=1e-13)
    assert [float(r["sum_h"]) for r in recs] == pytest.approx(curve.sum_h, abs=1e-13)


def test_mc_agrees_with_exact_within_standard_errors():
    exact = exact_divergence_iid(MU, XI, 30)
    mc = mc_divergence(MU, XI, 30, samples=40_000, seed=5)
    z = (mc.D - exact.D) / np.maximum(mc.D_se, 1e-15)
    assert np.all(np.abs(z[5:]) < 4.5)
    assert mc.sum_h[-1] == pytest.approx(exact.sum_h[-1], rel=0.05)


def test_mc_independent_of_worker_count():
    a = mc_divergence(MU, XI, 10, samples=6000, chunk=1000, seed=3, workers=1)
    b = mc_divergence(MU, XI, 10, samples=6000, chunk=1000, seed=3, workers=2)
    assert np.array_equal(a.D, b.D)
    assert np.array_equal(a.sum_h, b.sum_h)


def test_markov_truth_falls_back_to_monte_carlo():
    mu = Markov([[Fraction(9, 10), Fraction(1, 10)], [HALF, HALF]])
    xi = MixtureModel((mu, Bernoulli(HALF)), (HALF, HALF))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        curve = exact_divergence_iid(mu, xi, 12, samples=5000)
    assert curve.method != "exact"
    assert any("Monte Carlo" in str(w.message) for w in caught)
    assert np.all(curve.D <= math.log(2) + 3 * curve.D_se + 1e-12)


def test_multinomial_truth_three_symbols():
    mu = Multinomial((Fraction(1, 5), Fraction(3, 10), HALF))
    xi = MixtureModel((mu, Multinomial((Fraction(1, 3),) * 3)), (HALF, HALF))
    curve = exact_divergence_iid(mu, xi, 25)
    assert curve.satisfied().all()


def test_bernoulli_divergence_matches_enumeration():
    xi = DirichletMixture(DirichletPrior((1, 1)))
    theta0 = 0.3
    n = 8
    brute = sum(
        theta0 ** sum(b) * (1 - theta0) ** (n - sum(b))
        * math.log(theta0 ** sum(b) * (1 - theta0) ** (n - sum(b)) / float(xi.prob(b)))
        for b in itertools.product((0, 1), repeat=n))
    assert bernoulli_divergence(theta0, xi, n) == pytest.approx(brute, rel=1e-12)


def test_divergence_at_one_half_is_zero_after_one_step():
    xi = DirichletMixture(DirichletPrior((1, 1)))
    assert bernoulli_divergence(0.5, xi, 1) == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("prior", ["uniform", "jeffreys"])
def test_continuous_bound_and_slope(prior):
    rep = continuous_bound_check(Fraction(3, 10), prior=prior)
    assert rep.satisfied.all()
    assert 0.45 <= rep.slope <= 0.55


def test_continuous_rejects_boundary_theta():
    with pytest.raises(DomainError):
        continuous_bound_check(1.0)


def test_universal_vs_continuous_report():
    table = enumerate_programs(3, 50)
    rows = universal_vs_continuous(Bernoulli(HALF), DirichletMixture(DirichletPrior((1, 1))), table, 3)
    assert [r["n"] for r in rows] == [1, 2, 3]
    for r in rows:
        assert r["gap"] == pytest.approx(r["D_M"] - r["D_xi"])
        assert 0 <= r["excluded_mass"] <= 1
