"""Per-step prediction distances and the relative entropy D_n(mu || xi).

``exact_divergence_iid`` takes expectations exactly by summing over count
vectors (valid when mu is i.i.d. and xi is exchangeable); ``mc_divergence``
estimates the same quantities by sampling paths from mu.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations

import mpmath
import numpy as np
from scipy.special import gammaln, logsumexp

from splab.bayes_mixture import MixtureModel
from splab.conjugate import DirichletMixture, DirichletPrior, beta_density, jeffreys_density
from splab.env_models import safe_log
from splab.errors import DomainError, InputError

# ---------------------------------------------------------------- distances


@dataclass(frozen=True)
class StepDistances:
    """Distances between one-step predictive distributions p (truth) and q (predictor)."""

    sq_euclid: float
    hellinger: float
    absolute: float
    kl: float

    @property
    def infinite_kl(self) -> bool:
        return math.isinf(self.kl)


def step_distances_batch(p: np.ndarray, q: np.ndarray) -> dict[str, np.ndarray]:
    """Vectorized distances along the last axis.

    e = sum (p-q)^2, h = sum (sqrt p - sqrt q)^2, a = 1/2 sum |p-q|,
    k = sum p ln(p/q) with 0 ln 0 = 0 (``inf`` where q_a = 0 < p_a).
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    diff = p - q
    e = np.sum(diff * diff, axis=-1)
    h = np.sum((np.sqrt(p) - np.sqrt(q)) ** 2, axis=-1)
    a = 0.5 * np.sum(np.abs(diff), axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * (np.log(p) - np.log(q)), 0.0)
    k = np.sum(terms, axis=-1)
    return {"e": e, "h": h, "a": a, "k": k}


def step_distances(p, q) -> StepDistances:
    p = np.asarray([float(v) for v in p])
    q = np.asarray([float(v) for v in q])
    if p.shape != q.shape:
        raise InputError("distributions over different alphabets")
    for v in (p, q):
        if np.any(v < 0) or abs(v.sum() - 1) > 1e-9:
            raise InputError("arguments must be probability vectors")
    r = step_distances_batch(p, q)
    return StepDistances(float(r["e"]), float(r["h"]), float(r["a"]), float(r["k"]))


# ------------------------------------------------------------ curves


@dataclass
class DivergenceCurve:
    """D_n and cumulative expected distances for n = 1..N.

    ``sum_a2`` accumulates E[a_t^2]; the bound chain uses 2 * sum_a2.
    """

    n: np.ndarray
    D: np.ndarray
    sum_e: np.ndarray
    sum_h: np.ndarray
    sum_a2: np.ndarray
    sum_k: np.ndarray
    bound: float | None = None
    method: str = "exact"
    D_se: np.ndarray | None = None
    samples: int = 0
    excluded: int = 0
    info: dict = field(default_factory=dict)

    def satisfied(self, slack: float = 0.0) -> np.ndarray:
        """Row-wise check of sum_s <= D_n <= bound for s in {e, h, 2a^2}."""
        ok = (self.sum_h <= self.D + slack) & (self.sum_e <= self.D + slack)
        ok &= 2 * self.sum_a2 <= self.D + slack
        if self.bound is not None:
            ok &= self.D <= self.bound + slack
        return ok

    def rows(self):
        sat = self.satisfied()
        for i, n in enumerate(self.n):
            yield {
                "n": int(n), "D_n": float(self.D[i]), "sum_e": float(self.sum_e[i]),
                "sum_h": float(self.sum_h[i]), "sum_a2": float(self.sum_a2[i]),
                "sum_k": float(self.sum_k[i]),
                "bound": float(self.bound) if self.bound is not None else math.nan,
                "satisfied": bool(sat[i]),
            }


def compositions(t: int, d: int) -> np.ndarray:
    """All count vectors of length ``d`` summing to ``t`` as an (S, d) int array."""
    if d == 1:
        return np.array([[t]])
    rows = []
    for bars in combinations(range(t + d - 1), d - 1):
        prev, row = -1, []
        for b in bars:
            row.append(b - prev - 1)
            prev = b
        row.append(t + d - 2 - prev)
        rows.append(row)
    return np.asarray(rows, dtype=np.int64)


def _log_multinomial(counts: np.ndarray) -> np.ndarray:
    n = counts.sum(axis=-1)
    return gammaln(n + 1) - gammaln(counts + 1).sum(axis=-1)


def _dominance_log_ratio(xi: MixtureModel, k: int, counts: np.ndarray) -> np.ndarray:
    """ln(xi(x) / (w_k nu_k(x))) >= 0, computed without cancellation."""
    terms = np.stack([safe_log(w) + c.log_count_prob(counts) for c, w in zip(xi.components, xi.weights)])
    rel = terms - terms[k]
    rel[k] = -np.inf
    big = rel.max(axis=0)
    with np.errstate(over="ignore"):
        small = np.log1p(np.exp(rel).sum(axis=0))
    # when another component dominates by a lot fall back to logsumexp
    return np.where(big > 30, np.logaddexp(0.0, logsumexp(rel, axis=0)), small)


def _truth_index(mu, xi) -> int | None:
    if isinstance(xi, MixtureModel):
        for i, c in enumerate(xi.components):
            if c == mu:
                return i
    return None


def exact_divergence_iid(mu, xi, n: int, **mc_kwargs) -> DivergenceCurve:
    """Exact D_t(mu||xi) and cumulative E[s_t] for t = 1..n.

    ``mu`` must be i.i.d.; ``xi`` must be exchangeable, i.e. expose
    ``log_count_prob`` (an i.i.d. mixture or a Dirichlet mixture). Otherwise a
    warning is issued and the Monte-Carlo estimator is used with ``mc_kwargs``.
    When mu is a component of xi the bound ln(1/w_mu) is attached and D_n is
    computed as ln(1/w_mu) - E[ln(xi / (w_mu mu))] so that rounding cannot push
    it over the bound.
    """
    exchangeable = hasattr(xi, "log_count_prob") and (not isinstance(xi, MixtureModel) or xi.iid)
    if not getattr(mu, "iid", False) or not exchangeable:
        warnings.warn("xi is not exchangeable (or mu not i.i.d.); falling back to Monte Carlo",
                      stacklevel=2)
        return mc_divergence(mu, xi, n, **mc_kwargs)
    d = mu.alphabet_size
    theta = np.asarray([float(p) for p in mu.probs])
    with np.errstate(divide="ignore"):
        log_theta = np.log(theta)
    k = _truth_index(mu, xi)
    bound = -safe_log(xi.weights[k]) if k is not None else None
    eye = np.eye(d, dtype=np.int64)

    D = np.zeros(n)
    step = {s: np.zeros(n) for s in ("e", "h", "a2", "k")}
    for t in range(n + 1):
        C = compositions(t, d)
        logp = _log_multinomial(C) + np.where(C > 0, C * log_theta, 0.0).sum(axis=1)
        prob = np.exp(logp)
        live = prob > 0
        C, prob = C[live], prob[live]
        if t > 0:
            if k is not None:
                D[t - 1] = bound - float(prob @ _dominance_log_ratio(xi, k, C))
            else:
                lmu = np.where(C > 0, C * log_theta, 0.0).sum(axis=1)
                D[t - 1] = float(prob @ (lmu - xi.log_count_prob(C)))
        if t == n:
            break
        # predictive of xi after each count vector, for step t + 1
        base = xi.log_count_prob(C)
        Q = np.stack([np.exp(xi.log_count_prob(C + eye[a]) - base) for a in range(d)], axis=1)
        dist = step_distances_batch(np.broadcast_to(theta, Q.shape), Q)
        step["e"][t] = prob @ dist["e"]
        step["h"][t] = prob @ dist["h"]
        step["a2"][t] = prob @ dist["a"] ** 2
        step["k"][t] = prob @ dist["k"]
    return DivergenceCurve(
        n=np.arange(1, n + 1), D=D,
        sum_e=np.cumsum(step["e"]), sum_h=np.cumsum(step["h"]),
        sum_a2=np.cumsum(step["a2"]), sum_k=np.cumsum(step["k"]),
        bound=bound, method="exact",
    )


# ---------------------------------------------------- extended precision


def _exact_count_prob(model, n: int, d: int):
    """Return counts -> exact rational probability of one sequence with those counts."""
    if isinstance(model, DirichletMixture):
        alpha = model.prior.alpha
        rising = []
        for a in alpha:
            r = [Fraction(1)]
            for j in range(n + 1):
                r.append(r[-1] * (a + j))
            rising.append(r)
        total = sum(alpha)
        den = [Fraction(1)]
        for j in range(n + 1):
            den.append(den[-1] * (total + j))
        return lambda c: math.prod(rising[i][c[i]] for i in range(d)) / den[sum(c)]
    if isinstance(model, MixtureModel):
        parts = [(w, _exact_count_prob(comp, n, d)) for comp, w in zip(model.components, model.weights)]
        return lambda c: sum(w * f(c) for w, f in parts)
    powers = []
    for p in model.probs:
        row = [Fraction(1)]
        for _ in range(n + 1):
            row.append(row[-1] * p)
        powers.append(row)
    return lambda c: math.prod(powers[i][c[i]] for i in range(d))


def extended_precision_check(mu, xi, n: int, dps: int = 50) -> list[dict]:
    """Recompute D_t and sum_{s<=t} E[h_s] with rational probabilities and ``dps``-digit logs.

    Needs rational parameters throughout. Returns one record per t = 1..n with
    the values as mpmath numbers and ``chain_ok`` for sum_h <= D_t (<= bound when
    mu is a component of xi).
    """
    if not getattr(mu, "iid", False) or not hasattr(xi, "log_count_prob"):
        raise InputError("extended precision needs i.i.d. mu and exchangeable xi")
    d = mu.alphabet_size
    fmu = _exact_count_prob(mu, n, d)
    fxi = _exact_count_prob(xi, n, d)
    k = _truth_index(mu, xi)
    out = []
    with mpmath.workdps(dps):
        bound = -mpmath.log(mpmath.mpf(xi.weights[k].numerator) / xi.weights[k].denominator) if k is not None else None
        sum_h = mpmath.mpf(0)
        mu_sqrt = [mpmath.sqrt(mpmath.mpf(p.numerator) / p.denominator) for p in map(Fraction, mu.probs)]
        for t in range(n + 1):
            C = [tuple(int(v) for v in row) for row in compositions(t, d)]
            D = mpmath.mpf(0)
            h_t = mpmath.mpf(0)
            for c in C:
                mult = math.factorial(t) // math.prod(math.factorial(v) for v in c)
                pm = fmu(c)
                if pm == 0:
                    continue
                px = fxi(c)
                weight = mpmath.mpf(mult * pm.numerator) / pm.denominator
                if t > 0:
                    ratio = Fraction(pm) / px
                    D += weight * (mpmath.log(ratio.numerator) - mpmath.log(ratio.denominator))
                if t < n:
                    for a in range(d):
                        up = list(c)
                        up[a] += 1
                        q = Fraction(fxi(tuple(up))) / px
                        q_sqrt = mpmath.sqrt(mpmath.mpf(q.numerator) / q.denominator)
                        h_t += weight * (mu_sqrt[a] - q_sqrt) ** 2
            if t > 0:
                ok = sum_h <= D and (bound is None or D <= bound)
                out.append({"n": t, "D_n": D, "sum_h": sum_h, "bound": bound, "chain_ok": bool(ok)})
            sum_h += h_t
    return out


# ------------------------------------------------------------ Monte Carlo


def _mc_chunk(mu, xi, n, size, seed_seq, distances=True):
    rng = np.random.default_rng(seed_seq)
    X = mu.sample_batch(n, size, rng)
    pm, px = mu.batch_predictor(size), xi.batch_predictor(size)
    rows = np.arange(size)
    lr = np.zeros(size)
    lr_sum = np.zeros(n)
    lr_sq = np.zeros(n)
    s_sum = {s: np.zeros(n) for s in ("e", "h", "a2", "k")}
    bad = np.zeros(size, dtype=bool)
    for t in range(n):
        P, Q = np.asarray(pm.predict()), np.asarray(px.predict())
        a = X[:, t]
        with np.errstate(divide="ignore", invalid="ignore"):
            inc = np.log(P[rows, a]) - np.log(Q[rows, a])
        bad |= ~np.isfinite(inc)
        lr = lr + np.where(np.isfinite(inc), inc, 0.0)
        good = ~bad
        lr_sum[t] = lr[good].sum()
        lr_sq[t] = (lr[good] ** 2).sum()
        if distances:
            dist = step_distances_batch(P[good], Q[good])
            s_sum["e"][t] = dist["e"].sum()
            s_sum["h"][t] = dist["h"].sum()
            s_sum["a2"][t] = (dist["a"] ** 2).sum()
            s_sum["k"][t] = dist["k"].sum()
        pm.update(a)
        px.update(a)
    return lr_sum, lr_sq, s_sum, int(bad.sum())


def mc_divergence(mu, xi, n: int, samples: int = 100_000, seed: int = 0,
                  chunk: int = 50_000, workers: int = 1, distances: bool = True) -> DivergenceCurve:
    """Monte-Carlo estimate of D_t and cumulative E[s_t] for t = 1..n with standard errors.

    ``distances=False`` skips the per-step distance sums (they are then zero)
    and roughly halves the cost. Samples are split into fixed-size chunks with independent child seeds, so
    the result does not depend on ``workers``. Paths on which xi assigns zero
    probability are excluded and counted in ``excluded``.
    """
    if samples < 1 or n < 1:
        raise InputError("need at least one sample and n >= 1")
    sizes = [min(chunk, samples - i) for i in range(0, samples, chunk)]
    seeds = np.random.SeedSequence(seed).spawn(len(sizes))
    args = [(mu, xi, n, s, ss, distances) for s, ss in zip(sizes, seeds)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            parts = list(ex.map(_mc_chunk, *zip(*args)))
    else:
        parts = [_mc_chunk(*a) for a in args]
    excluded = sum(p[3] for p in parts)
    used = samples - excluded
    if used == 0:
        raise DomainError("xi assigns zero probability to every sampled path")
    lr_sum = sum(p[0] for p in parts)
    lr_sq = sum(p[1] for p in parts)
    mean = lr_sum / used
    var = np.maximum(lr_sq / used - mean**2, 0.0) * used / max(used - 1, 1)
    s = {key: sum(p[2][key] for p in parts) / used for key in ("e", "h", "a2", "k")}
    k = _truth_index(mu, xi)
    return DivergenceCurve(
        n=np.arange(1, n + 1), D=mean,
        sum_e=np.cumsum(s["e"]), sum_h=np.cumsum(s["h"]),
        sum_a2=np.cumsum(s["a2"]), sum_k=np.cumsum(s["k"]),
        bound=-safe_log(xi.weights[k]) if k is not None else None,
        method="mc", D_se=np.sqrt(var / used), samples=samples, excluded=excluded,
        info={"seed": seed, "chunk": chunk},
    )


# --------------------------------------------------- continuous classes


@dataclass
class ContinuousReport:
    theta0: float
    prior: str
    n: np.ndarray
    D: np.ndarray
    bound: np.ndarray
    slack: float
    slope: float

    @property
    def satisfied(self) -> np.ndarray:
        return self.D <= self.bound

    def rows(self):
        for i, n in enumerate(self.n):
            yield {"n": int(n), "D_n": float(self.D[i]), "bound": float(self.bound[i]),
                   "slack": self.slack, "satisfied": bool(self.satisfied[i])}


def _continuous_prior(prior) -> tuple[DirichletMixture, callable, str]:
    if isinstance(prior, DirichletPrior):
        a, b = (float(v) for v in prior.alpha[::-1])  # alpha indexed by symbol: (zero, one)
        return DirichletMixture(prior), lambda th: float(beta_density(th, a, b)), f"beta({a},{b})"
    if prior == "uniform":
        return DirichletMixture(DirichletPrior((1, 1))), lambda th: 1.0, "uniform"
    if prior == "jeffreys":
        half = Fraction(1, 2)
        return (DirichletMixture(DirichletPrior((half, half))),
                lambda th: float(jeffreys_density(th)), "jeffreys")
    raise InputError(f"unknown prior {prior!r}; use 'uniform', 'jeffreys' or a DirichletPrior")


def bernoulli_divergence(theta0: float, xi: DirichletMixture, n: int) -> float:
    """Exact D_n(Ber(theta0) || xi) by summing over the number of ones."""
    n1 = np.arange(n + 1)
    C = np.stack([n - n1, n1], axis=1)
    with np.errstate(divide="ignore"):
        lmu = n1 * math.log(theta0) + (n - n1) * math.log1p(-theta0)
    logp = _log_multinomial(C) + lmu
    return float(np.exp(logp) @ (lmu - xi.log_count_prob(C)))


def continuous_bound_check(theta0, prior="uniform", n_grid=(100, 1000, 10000),
                           slack: float = 1.0) -> ContinuousReport:
    """Compare exact D_n for a Bernoulli(theta0) truth with the asymptotic bound

    ln(1/w(theta0)) + (1/2) ln(n / 2 pi) + (1/2) ln j(theta0) + slack,

    where j is the Bernoulli Fisher information and ``slack`` stands in for the
    o(1) term. Also fits the slope of D_n against ln n.
    """
    theta0 = float(Fraction(theta0)) if not isinstance(theta0, float) else theta0
    if not 0 < theta0 < 1:
        raise DomainError("theta0 must lie in the open interval (0, 1)")
    xi, density, name = _continuous_prior(prior)
    grid = np.asarray(sorted(int(v) for v in n_grid))
    if grid.size == 0 or grid[0] < 1:
        raise InputError("n grid must contain positive horizons")
    D = np.asarray([bernoulli_divergence(theta0, xi, int(n)) for n in grid])
    fisher = 1.0 / (theta0 * (1.0 - theta0))
    bound = (-math.log(density(theta0)) + 0.5 * np.log(grid / (2 * math.pi))
             + 0.5 * math.log(fisher) + slack)
    slope = float(np.polyfit(np.log(grid), D, 1)[0]) if grid.size > 1 else math.nan
    return ContinuousReport(theta0, name, grid, D, bound, slack, slope)


# ------------------------------------------- universal vs continuous


def _support(mu, n: int, limit: int):
    """All length-n strings with mu(x) > 0 and their exact-or-float probabilities."""
    frontier = [((), 1)]
    for _ in range(n):
        nxt = []
        for x, p in frontier:
            cond = mu.conditional(x)
            for a, q in enumerate(cond):
                if q:
                    nxt.append((x + (a,), p * q))
        frontier = nxt
        if len(frontier) > limit:
            raise InputError(f"support of mu at length {n} exceeds {limit} strings")
    return frontier


def universal_vs_continuous(mu, xi, m_hat, n: int, support_limit: int = 1 << 16) -> list[dict]:
    """D_t(mu||xi), the budgeted D_t(mu||M) and their gap for t = 1..n.

    ``m_hat`` is any object with ``approx_M(x)`` (an enumeration table). Strings
    with M(x) = 0 at the budget are excluded from the M average; their number and
    mu-mass are reported. Nothing is asserted about the gap.
    """
    out = []
    for t in range(1, n + 1):
        D_xi = 0.0
        D_m = 0.0
        excluded, excluded_mass = 0, 0.0
        for x, p in _support(mu, t, support_limit):
            p = float(p)
            lmu = math.log(p)
            D_xi += p * (lmu - xi.logprob(x))
            m = m_hat.approx_M(x)
            if m == 0:
                excluded += 1
                excluded_mass += p
                continue
            D_m += p * (lmu - safe_log(m))
        out.append({"n": t, "D_xi": D_xi, "D_M": D_m, "gap": D_m - D_xi,
                    "excluded": excluded, "excluded_mass": excluded_mass})
    return out

