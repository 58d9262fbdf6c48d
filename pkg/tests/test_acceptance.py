"""Acceptance criteria, one test each.

Every criterion prints a line ``[PASS]`` or ``[FAIL]`` with its measured
quantities and runtime. Run ``python3 tests/test_acceptance.py`` to get just
those lines without pytest.
"""

import itertools
import math
import time
from fractions import Fraction

import mpmath
import numpy as np
import pytest

from splab.bayes_mixture import MixtureModel, deterministic_bound_run
from splab.conjugate import Counts, DirichletPrior, confirmation_table, induced_marginal_density, laplace_predict
from splab.divergence import continuous_bound_check, exact_divergence_iid, mc_divergence, step_distances_batch
from splab.env_models import Bernoulli, Deterministic
from splab.machine import approx_Km, approx_M, enumerate_programs, km_bound_check
from splab.universal import grid_bound_run, rational_code_length, rational_grid_prior

HALF = Fraction(1, 2)


def acc1():
    t0 = time.perf_counter()
    doom = 1 - laplace_predict(Counts.binary(1826213, 0))
    elapsed = time.perf_counter() - t0
    ok = doom == Fraction(1, 1826215) and elapsed < 1e-3
    return ok, f"doom={doom}", elapsed, 1e-3


def acc2():
    t0 = time.perf_counter()
    eps, n_max = Fraction(1, 10), 10_000
    rows = list(confirmation_table(n_max, eps))
    bad, first_999 = [], None
    nine, ten = 9, 10  # (1 - eps)^(n+1) = 9^(n+1) / 10^(n+1), kept as integers
    for r in rows:
        n = r["n"]
        heps = r["P_Heps"]
        if heps.numerator != ten - nine or heps.denominator != ten:
            bad.append(("P_Heps", n))
        if r["P_Hprime_uniform"] != 0 or r["P_H2prime_uniform"] != 0:
            bad.append(("uniform", n))
        if r["P_H2prime_mixed"] != Fraction(n + 1, n + 2):
            bad.append(("P_H2prime_mixed", n))
        if r["xi_0_given_1n"] != Fraction(1, (n + 2) ** 2):
            bad.append(("xi_0", n))
        if first_999 is None and r["P_H2prime_mixed"] > Fraction(999, 1000):
            first_999 = n
        nine *= 9
        ten *= 10
    elapsed = time.perf_counter() - t0
    ok = not bad and len(rows) == n_max + 1 and first_999 is not None and first_999 <= 999 and elapsed < 1
    return ok, f"rows={len(rows)} mismatches={len(bad)} mixed P_H2prime>0.999 from n={first_999}", elapsed, 1


def acc3():
    t0 = time.perf_counter()
    patterns = ("0", "1", "01", "10")
    m = MixtureModel.uniform([Deterministic(pattern=p) for p in patterns])
    worst = Fraction(0)
    ok = True
    for p in patterns:
        rep = deterministic_bound_run(m, Deterministic(pattern=p), 10_000, exact=True)
        ok &= rep.satisfied
        worst = max(worst, max(rep.cumulative))
    # exact comparison of the rational sum with ln 4 at 50 digits
    with mpmath.workdps(50):
        ok &= mpmath.mpf(worst.numerator) / worst.denominator <= mpmath.log(4)
    elapsed = time.perf_counter() - t0
    return ok and elapsed < 1, f"max cumulative={worst} <= ln 4={math.log(4):.6f}", elapsed, 1


def acc4():
    t0 = time.perf_counter()
    mu = Bernoulli(Fraction(3, 10))
    xi = MixtureModel((mu, Bernoulli(Fraction(7, 10))), (HALF, HALF))
    curve = exact_divergence_iid(mu, xi, 200)
    chain = bool(np.all(curve.sum_h <= curve.D + 1e-12) and np.all(curve.D <= math.log(2) + 1e-12))
    mc = mc_divergence(mu, xi, 100, samples=1_000_000, seed=2024, distances=False)
    z = (mc.D[99] - curve.D[99]) / mc.D_se[99]
    elapsed = time.perf_counter() - t0
    ok = chain and abs(z) <= 3 and elapsed < 30
    return ok, (f"chain ok for n<=200: {chain}; D_100 exact={curve.D[99]:.10f} "
                f"MC={mc.D[99]:.10f}+-{mc.D_se[99]:.2e} (z={z:+.2f})"), elapsed, 30


def acc5():
    t0 = time.perf_counter()
    rep = continuous_bound_check(Fraction(3, 10), prior="uniform", n_grid=(100, 1000, 10000), slack=1.0)
    elapsed = time.perf_counter() - t0
    ok = bool(rep.satisfied.all()) and 0.45 <= rep.slope <= 0.55 and elapsed < 10
    pairs = ", ".join(f"{d:.4f}<={b:.4f}" for d, b in zip(rep.D, rep.bound))
    return ok, f"D_n vs bound: {pairs}; slope={rep.slope:.4f}", elapsed, 10


def acc6():
    t0 = time.perf_counter()
    table = enumerate_programs(6, 500)
    semi_bad = kraft_bad = 0
    for length in range(9):
        for bits in itertools.product("01", repeat=length):
            x = "".join(bits)
            m = approx_M(table, x)
            kraft_bad += m > 1
            semi_bad += m < approx_M(table, x + "0") + approx_M(table, x + "1")
    km_ones = max(approx_Km(table, "1" * n) for n in range(1, 33))
    rows = km_bound_check(table)
    km_bad = sum(not r["ok"] for r in rows)
    elapsed = time.perf_counter() - t0
    ok = semi_bad == 0 and kraft_bad == 0 and km_ones <= 12 and km_bad == 0 and elapsed < 300
    return ok, (f"semimeasure violations={semi_bad}, M>1: {kraft_bad}, max Km(1^n<=32)={km_ones} bits, "
                f"Km-bound violations={km_bad}/{len(rows)}"), elapsed, 300


def acc7():
    t0 = time.perf_counter()
    kraft = sum(w for _, w in rational_grid_prior(50))
    rep = grid_bound_run(50, 1, 10_000)
    bits = rational_code_length(1)
    bound = bits * math.log(2)
    elapsed = time.perf_counter() - t0
    ok = kraft <= 1 and rep.satisfied and max(rep.cumulative) <= bound and elapsed < 10
    return ok, f"Kraft={kraft}; max cumulative={max(rep.cumulative):.6f} <= {bits} ln 2={bound:.6f}", elapsed, 10


def acc8():
    t0 = time.perf_counter()
    grid = np.linspace(0, 1, 101)
    dens = induced_marginal_density(DirichletPrior((1, 1, 1)), 0, grid)
    err = float(np.max(np.abs(dens - 2 * (1 - grid))))
    elapsed = time.perf_counter() - t0
    return err <= 1e-6 and elapsed < 5, f"max |density - 2(1-theta)|={err:.2e}", elapsed, 5


def acc9():
    t0 = time.perf_counter()
    rng = np.random.default_rng(9)
    slack = 1e-12
    counts = {"e<=h": 0, "h<=k": 0, "2a^2<=k": 0}
    for _ in range(10_000):
        d = int(rng.integers(2, 6))
        p, q = rng.dirichlet(np.ones(d)), rng.dirichlet(np.ones(d))
        r = step_distances_batch(p, q)
        counts["e<=h"] += r["e"] > r["h"] + slack
        counts["h<=k"] += r["h"] > r["k"] + slack
        counts["2a^2<=k"] += 2 * r["a"] ** 2 > r["k"] + slack
    elapsed = time.perf_counter() - t0
    ok = not any(counts.values()) and elapsed < 5
    return ok, "violations " + ", ".join(f"{k}: {v}" for k, v in counts.items()), elapsed, 5


CRITERIA = [
    (1, "Laplace rule: doom probability after 1826213 sunrises", acc1),
    (2, "confirmation table n=0..10^4", acc2),
    (3, "deterministic class of 4 patterns: sum |1-xi| <= ln 4", acc3),
    (4, "two-coin class: sum E[h] <= D_n <= ln 2, DP vs 10^6-sample MC", acc4),
    (5, "Bernoulli(0.3), uniform prior: D_n below the asymptotic bound", acc5),
    (6, "enumeration at L=6, T=500", acc6),
    (7, "rational grid b_max=50, truth theta=1", acc7),
    (8, "Dirichlet(1,1,1) marginal equals 2(1-theta)", acc8),
    (9, "distance ordering on 10^4 random pairs", acc9),
]


def run_criterion(number, title, fn):
    ok, detail, elapsed, limit = fn()
    status = "PASS" if ok else "FAIL"
    return ok, f"[{status}] criterion {number}: {title} | {detail} | {elapsed:.3f}s (limit {limit}s)"


@pytest.mark.parametrize("number,title,fn", CRITERIA, ids=[f"criterion_{c[0]}" for c in CRITERIA])
def test_criterion(number, title, fn, acceptance):
    ok, line = run_criterion(number, title, fn)
    acceptance(line)
    assert ok, line


if __name__ == "__main__":
    for number, title, fn in CRITERIA:
        print(run_criterion(number, title, fn)[1], flush=True)
