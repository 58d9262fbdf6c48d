import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from splab.env_models import (
    Bernoulli,
    Deterministic,
    Markov,
    Multinomial,
    as_symbols,
    env_conditional,
    env_logprob,
    is_exact,
    sample_sequence,
)
from splab.errors import DomainError, InputError


def test_fair_coin_logprob():
    assert env_logprob(Bernoulli(Fraction(1, 2)), "101") == pytest.approx(math.log(1 / 8), abs=1e-15)


def test_multinomial_logprob_is_product_of_counts():
    env = Multinomial((0.2, 0.8))
    assert env_logprob(env, "011") == pytest.approx(math.log(0.2 * 0.8 * 0.8), abs=1e-14)


def test_exact_probability_is_rational():
    env = Bernoulli(Fraction(3, 10))
    assert env.prob("110") == Fraction(3, 10) ** 2 * Fraction(7, 10)


def test_deterministic_logprob_on_and_off_sequence():
    env = Deterministic(pattern="01")
    assert env_logprob(env, "010") == 0
    assert env_logprob(env, "011") == -math.inf


def test_conditionals_match_definitions():
    assert env_conditional(Bernoulli(0.3), "0101") == pytest.approx((0.7, 0.3))
    m = Markov([[0.1, 0.9], [0.5, 0.5]])
    assert env_conditional(m, "110") == pytest.approx((0.1, 0.9))
    d = Deterministic(pattern="011")
    assert env_conditional(d, "01") == (0, 1)
    assert env_conditional(d, "011") == (1, 0)


def test_conditioning_on_impossible_prefix_is_domain_error():
    with pytest.raises(DomainError):
        env_conditional(Deterministic(pattern="0"), "1")
    with pytest.raises(DomainError):
        env_conditional(Bernoulli(Fraction(1)), "0")


def test_symbol_out_of_range():
    with pytest.raises(InputError):
        env_logprob(Bernoulli(0.5), "102")
    with pytest.raises(InputError):
        as_symbols([0, 3], 3)


@pytest.mark.parametrize("bad", [
    lambda: Bernoulli(Fraction(3, 2)),
    lambda: Multinomial((Fraction(1, 2), Fraction(1, 3))),
    lambda: Markov([[1, 0]]),
    lambda: Deterministic(),
    lambda: Deterministic(generator="pi"),
])
def test_invalid_parameters(bad):
    with pytest.raises(InputError):
        bad()


def test_markov_default_start_is_uniform():
    m = Markov([[Fraction(9, 10), Fraction(1, 10)], [Fraction(1, 2), Fraction(1, 2)]])
    assert m.prob("0") == Fraction(1, 2)
    assert m.prob("01") == Fraction(1, 20)


def test_degenerate_samples():
    assert sample_sequence(Bernoulli(1), 5, seed=0) == (1,) * 5
    assert sample_sequence(Bernoulli(0), 3, seed=9) == (0,) * 3


def test_sampling_is_seeded_and_frequencies_converge():
    env = Bernoulli(0.3)
    a = sample_sequence(env, 100_000, seed=11)
    assert a == sample_sequence(env, 100_000, seed=11)
    assert abs(np.mean(a) - 0.3) < 0.01


def test_markov_sampling_matches_transition_frequencies():
    env = Markov([[0.9, 0.1], [0.5, 0.5]])
    x = np.asarray(sample_sequence(env, 50_000, seed=2))
    after0 = x[1:][x[:-1] == 0]
    assert abs(after0.mean() - 0.1) < 0.01


def test_generators_produce_known_prefixes():
    assert Deterministic(generator="sqrt2").sequence(8) == (0, 1, 1, 0, 1, 0, 1, 0)
    assert Deterministic(generator="thue_morse").sequence(8) == (0, 1, 1, 0, 1, 0, 0, 1)
    assert Deterministic(generator="champernowne").sequence(6) == (1, 1, 0, 1, 1, 1)
    assert Deterministic(pattern="1", prefix="00").sequence(4) == (0, 0, 1, 1)


def test_exactness_detection():
    assert is_exact(Bernoulli(Fraction(1, 3)))
    assert not is_exact(Bernoulli(0.3))
    assert is_exact(Deterministic(pattern="1"))


# ------------------------------------------------------------ properties

envs = st.one_of(
    st.fractions(0, 1, max_denominator=20).map(Bernoulli),
    st.lists(st.integers(1, 9), min_size=3, max_size=3).map(
        lambda w: Multinomial([Fraction(v, sum(w)) for v in w])),
    st.tuples(st.fractions(0, 1, max_denominator=10), st.fractions(0, 1, max_denominator=10)).map(
        lambda t: Markov([[1 - t[0], t[0]], [1 - t[1], t[1]]])),
    st.text("01", min_size=1, max_size=4).map(lambda p: Deterministic(pattern=p)),
)


@settings(max_examples=150, deadline=None)
@given(envs, st.data())
def test_measure_mass_is_conserved(env, data):
    x = data.draw(st.lists(st.integers(0, env.alphabet_size - 1), max_size=12))
    px = env.prob(x)
    children = sum(env.prob(list(x) + [a]) for a in range(env.alphabet_size))
    assert px == children


@settings(max_examples=150, deadline=None)
@given(envs, st.data())
def test_log_probability_telescopes(env, data):
    x = data.draw(st.lists(st.integers(0, env.alphabet_size - 1), max_size=12))
    total = env_logprob(env, x)
    steps = 0.0
    for t in range(len(x)):
        if env.prob(x[:t]) == 0:
            break
        steps += math.log(env_conditional(env, x[:t])[x[t]]) if env_conditional(env, x[:t])[x[t]] else -math.inf
    if total == -math.inf:
        assert steps == -math.inf
    else:
        assert steps == pytest.approx(total, abs=1e-12)


@given(st.text("01", min_size=1, max_size=5), st.integers(0, 40))
def test_deterministic_mass_one_along_sequence(pattern, n):
    env = Deterministic(pattern=pattern)
    assert env.prob(env.sequence(n)) == 1
