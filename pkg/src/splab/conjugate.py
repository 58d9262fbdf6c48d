"""Closed-form Bayesian predictors for i.i.d. data: Beta/Dirichlet priors,
priors with a point mass, confirmation of universal hypotheses, and
regrouping of categories.

Everything that is a rational function of the counts is returned as an exact
``Fraction``. Only densities are floats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy.special import gammaln

from splab.env_models import Number, as_symbols
from splab.errors import DomainError, InputError


class Counts(tuple):
    """Symbol counts indexed by symbol: ``Counts((n_0, n_1))`` for binary data."""

    def __new__(cls, values: Sequence[int]):
        values = tuple(int(v) for v in values)
        if len(values) < 2:
            raise InputError("counts need at least two symbols")
        if any(v < 0 for v in values):
            raise InputError(f"negative count in {values}")
        return super().__new__(cls, values)

    @classmethod
    def binary(cls, n1: int, n0: int = 0) -> "Counts":
        return cls((n0, n1))

    @classmethod
    def of(cls, x, alphabet_size: int = 2) -> "Counts":
        c = [0] * alphabet_size
        for a in as_symbols(x, alphabet_size):
            c[a] += 1
        return cls(c)

    @property
    def n(self) -> int:
        return sum(self)

    @property
    def n0(self) -> int:
        return self[0]

    @property
    def n1(self) -> int:
        return self[1]


def _binary(c) -> Counts:
    c = c if isinstance(c, Counts) else Counts(c)
    if len(c) != 2:
        raise InputError("binary counts expected")
    return c


def laplace_predict(c) -> Fraction:
    """Laplace's rule: probability that the next symbol is 1, (n_1 + 1) / (n + 2)."""
    c = _binary(c)
    return Fraction(c.n1 + 1, c.n + 2)


def uniform_evidence(c, exact: bool = True) -> Number:
    """Evidence of a binary string under the uniform prior: n_1! n_0! / (n + 1)!."""
    c = _binary(c)
    if exact:
        return Fraction(1, (c.n + 1) * math.comb(c.n, c.n1))
    return math.exp(uniform_log_evidence(c))


def uniform_log_evidence(c) -> float:
    c = _binary(c)
    return float(gammaln(c.n1 + 1) + gammaln(c.n0 + 1) - gammaln(c.n + 2))


def uniform_confirm_eps(n: int, eps) -> Fraction:
    """Posterior of theta >= 1 - eps after n ones under the uniform prior: 1 - (1 - eps)^(n+1)."""
    eps = Fraction(eps)
    if not 0 <= eps <= 1:
        raise InputError(f"eps={eps} outside [0, 1]")
    if n < 0:
        raise InputError("n must be non-negative")
    return 1 - (1 - eps) ** (n + 1)


def uniform_multistep(n: int, k) -> Fraction:
    """xi(1^k | 1^n) = (n + 1) / (n + k + 1) under the uniform prior; ``k=math.inf`` gives the limit 0."""
    if n < 0 or k < 0:
        raise InputError("n and k must be non-negative")
    if k == math.inf:
        return Fraction(0)
    return Fraction(n + 1, n + k + 1)


def finite_population_confirm(N: int, n: int) -> Fraction:
    """All-black posterior for a population of N after n black draws: (n + 1) / (N + 1)."""
    if not 0 <= n <= N:
        raise InputError(f"need 0 <= n <= N, got n={n}, N={N}")
    return Fraction(n + 1, N + 1)


@dataclass(frozen=True)
class MixedDiracPrior:
    """Point mass ``atom_mass`` at ``atom`` plus ``1 - atom_mass`` spread uniformly on [0, 1]."""

    atom: Fraction = Fraction(1)
    atom_mass: Fraction = Fraction(1, 2)

    def __post_init__(self):
        object.__setattr__(self, "atom", Fraction(self.atom))
        object.__setattr__(self, "atom_mass", Fraction(self.atom_mass))
        if not 0 <= self.atom <= 1:
            raise InputError("atom location outside [0, 1]")
        if not 0 <= self.atom_mass <= 1:
            raise InputError("atom mass outside [0, 1]")


def mixed_evidence(c, prior: MixedDiracPrior = MixedDiracPrior()) -> Fraction:
    """Evidence under the mixed prior; for the default prior 1/2 [n_1! n_0!/(n+1)! + [n_0 = 0]]."""
    c = _binary(c)
    atom_lik = prior.atom**c.n1 * (1 - prior.atom) ** c.n0
    return (1 - prior.atom_mass) * uniform_evidence(c) + prior.atom_mass * atom_lik


def mixed_predict(c, prior: MixedDiracPrior = MixedDiracPrior()) -> Fraction:
    """Probability that the next symbol is 1 under the mixed prior."""
    c = _binary(c)
    return mixed_evidence(Counts.binary(c.n1 + 1, c.n0), prior) / mixed_evidence(c, prior)


def mixed_multistep(n: int, k, prior: MixedDiracPrior = MixedDiracPrior()) -> Fraction:
    """xi(1^k | 1^n) under the mixed prior; ``k=math.inf`` gives the limit."""
    base = mixed_evidence(Counts.binary(n), prior)
    if k == math.inf:
        # the uniform part of xi(1^m) = 1/(m+1) vanishes; only an atom at 1 survives
        return prior.atom_mass / base if prior.atom == 1 else Fraction(0)
    return mixed_evidence(Counts.binary(n + k), prior) / base


@dataclass(frozen=True)
class ConfirmationRecord:
    n: int
    p_universal: Fraction  # P[H''|1^n]: all future observations are 1
    xi_0_next: Fraction  # xi(0|1^n)
    p_atom: Fraction  # P[H'|1^n]: theta equals the atom


def mixed_confirmation(n: int, prior: MixedDiracPrior = MixedDiracPrior()) -> ConfirmationRecord:
    """Confirmation quantities after observing ``1^n`` under the mixed prior."""
    if n < 0:
        raise InputError("n must be non-negative")
    ones = Counts.binary(n)
    base = mixed_evidence(ones, prior)
    return ConfirmationRecord(
        n=n,
        p_universal=mixed_multistep(n, math.inf, prior),
        xi_0_next=mixed_evidence(Counts.binary(n, 1), prior) / base,
        p_atom=prior.atom_mass * prior.atom**n / base,
    )


def confirmation_table(n_max: int, eps=Fraction(1, 10), prior: MixedDiracPrior = MixedDiracPrior()):
    """Rows of confirmation quantities for n = 0..n_max after observing ``1^n``.

    Same values as ``uniform_confirm_eps``, ``mixed_confirmation`` and
    ``laplace_predict``, but the powers are carried from row to row so a table
    of 10^4 rows stays cheap.
    """
    eps = Fraction(eps)
    if not 0 <= eps <= 1:
        raise InputError(f"eps={eps} outside [0, 1]")
    w, a = prior.atom_mass, prior.atom
    keep = 1 - eps
    miss = keep  # (1 - eps)^(n+1)
    atom_pow = Fraction(1)  # atom^n
    for n in range(n_max + 1):
        base = (1 - w) / (n + 1) + w * atom_pow
        p_atom = w * atom_pow / base
        yield {
            "n": n,
            "P_Heps": 1 - miss,
            "P_Hprime_uniform": Fraction(0),
            "P_Hprime_mixed": p_atom,
            "P_H2prime_uniform": Fraction(0),
            "P_H2prime_mixed": p_atom if a == 1 else Fraction(0),
            "xi_0_given_1n": ((1 - w) / ((n + 1) * (n + 2)) + w * atom_pow * (1 - a)) / base,
            "laplace_1_given_1n": Fraction(n + 1, n + 2),
        }
        miss *= keep
        atom_pow *= a


@dataclass(frozen=True)
class DirichletPrior:
    """Dirichlet(alpha) over the probability simplex; all-zero alpha is Haldane's improper prior."""

    alpha: tuple

    def __post_init__(self):
        alpha = tuple(Fraction(a) for a in self.alpha)
        if len(alpha) < 2:
            raise InputError("Dirichlet prior needs at least two symbols")
        if any(a < 0 for a in alpha):
            raise InputError("Dirichlet parameters must be >= 0")
        if any(a == 0 for a in alpha) and any(a != 0 for a in alpha):
            raise InputError("alpha_i = 0 is only allowed for all i (Haldane)")
        object.__setattr__(self, "alpha", alpha)

    @classmethod
    def symmetric(cls, d: int, a) -> "DirichletPrior":
        return cls((Fraction(a),) * d)

    @property
    def haldane(self) -> bool:
        return all(a == 0 for a in self.alpha)

    @property
    def d(self) -> int:
        return len(self.alpha)


def dirichlet_predict(c, prior: DirichletPrior, a: int) -> Fraction:
    """Dirichlet/Carnap rule: (n_a + alpha_a) / (n + sum alpha)."""
    c = c if isinstance(c, Counts) else Counts(c)
    if len(c) != prior.d:
        raise InputError("counts and prior disagree on the alphabet size")
    if not 0 <= a < prior.d:
        raise InputError(f"symbol {a} outside alphabet")
    den = c.n + sum(prior.alpha)
    if den == 0:
        raise DomainError("Haldane prior with no data: predictive undefined")
    return (c[a] + prior.alpha[a]) / den


def _check_partition(groups, d: int) -> list[list[int]]:
    groups = [list(g) for g in groups]
    flat = sorted(i for g in groups for i in g)
    if flat != list(range(d)) or any(not g for g in groups):
        raise InputError(f"{groups} is not a partition of symbols 0..{d - 1}")
    return groups


def dirichlet_group(prior: DirichletPrior, groups) -> DirichletPrior:
    """Merge symbol groups; the merged parameter is the sum of its members' parameters."""
    groups = _check_partition(groups, prior.d)
    return DirichletPrior(tuple(sum((prior.alpha[i] for i in g), Fraction(0)) for g in groups))


def group_counts(c, groups) -> Counts:
    c = c if isinstance(c, Counts) else Counts(c)
    groups = _check_partition(groups, len(c))
    return Counts([sum(c[i] for i in g) for g in groups])


class DirichletMixture:
    """The continuous mixture xi(x) = integral of prod theta_i^{n_i} under Dirichlet(alpha).

    Exchangeable, so it can be evaluated from counts alone. With rational alpha
    ``prob`` is exact: xi(x) = prod_a alpha_a^(n_a rising) / A^(n rising).
    """

    iid = False

    def __init__(self, prior: DirichletPrior):
        if prior.haldane:
            raise DomainError("Haldane's improper prior has no normalized evidence")
        self.prior = prior
        self.alphabet_size = prior.d
        self._alpha = np.asarray([float(a) for a in prior.alpha])

    def __repr__(self):
        return f"DirichletMixture({', '.join(str(a) for a in self.prior.alpha)})"

    def prob(self, x) -> Fraction:
        c = Counts.of(x, self.alphabet_size)
        num = Fraction(1)
        for n_a, a in zip(c, self.prior.alpha):
            for j in range(n_a):
                num *= a + j
        total = sum(self.prior.alpha)
        den = Fraction(1)
        for j in range(c.n):
            den *= total + j
        return num / den

    def logprob(self, x) -> float:
        return float(self.log_count_prob(np.asarray(Counts.of(x, self.alphabet_size))))

    def log_count_prob(self, counts: np.ndarray) -> np.ndarray:
        counts = np.asarray(counts, dtype=float)
        a = self._alpha
        n = counts.sum(axis=-1)
        return (gammaln(a.sum()) - gammaln(n + a.sum())
                + (gammaln(counts + a) - gammaln(a)).sum(axis=-1))

    def conditional(self, x) -> tuple:
        c = Counts.of(x, self.alphabet_size)
        return tuple(dirichlet_predict(c, self.prior, a) for a in range(self.alphabet_size))

    def next_prob(self, x, a) -> Fraction:
        return self.conditional(x)[a]

    def batch_predictor(self, n_samples: int):
        return _DirichletBatch(self._alpha, n_samples)


class _DirichletBatch:
    def __init__(self, alpha, n):
        self._alpha = alpha
        self._counts = np.zeros((n, len(alpha)))

    def predict(self):
        c = self._counts + self._alpha
        return c / c.sum(axis=1, keepdims=True)

    def update(self, symbols):
        self._counts[np.arange(len(symbols)), symbols] += 1


QUAD_NODES = 48  # Gauss-Legendre nodes per simplex dimension


def _dirichlet_log_norm(alpha: np.ndarray) -> float:
    return float(gammaln(alpha.sum()) - gammaln(alpha).sum())


def induced_marginal_density(prior: DirichletPrior, component: int, theta, nodes: int = QUAD_NODES) -> np.ndarray:
    """Density of coordinate ``component`` of a Dirichlet(alpha) vector, by quadrature.

    For each grid value the remaining coordinates are integrated out over the
    slice of the simplex with nested Gauss-Legendre rules (``nodes`` per
    dimension, so the cost is ``nodes**(d-2)`` per point). The rule is exact for
    integer alpha >= 1 with d - 2 <= ``nodes`` degrees; parameters below one put
    integrable singularities on the slice boundary and converge slowly.
    """
    if prior.haldane:
        raise DomainError("Haldane's prior is improper")
    alpha = np.asarray([float(a) for a in prior.alpha])
    d = len(alpha)
    if not 0 <= component < d:
        raise InputError("component outside alphabet")
    if d > 5:
        raise InputError("quadrature limited to d <= 5")
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if np.any((theta < 0) | (theta > 1)):
        raise InputError("theta grid must lie in [0, 1]")
    rest = np.delete(alpha, component)
    log_norm = _dirichlet_log_norm(alpha)
    x, w = np.polynomial.legendre.leggauss(nodes)
    x01, w01 = (x + 1) / 2, w / 2

    out = np.empty_like(theta)
    for idx, th in enumerate(theta):
        r = 1.0 - th
        # points (free coordinates) and weights on {u >= 0, sum u <= r}
        pts = np.zeros((1, 0))
        wts = np.ones(1)
        left = np.full(1, r)
        for _ in range(d - 2):
            new = left[:, None] * x01[None, :]
            pts = np.concatenate([np.repeat(pts, nodes, axis=0), new.reshape(-1, 1)], axis=1)
            wts = (wts[:, None] * left[:, None] * w01[None, :]).ravel()
            left = (left[:, None] - new).ravel()
        coords = np.concatenate([pts, left[:, None]], axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            integrand = np.prod(np.power(coords, rest - 1), axis=1)
            val = np.power(th, alpha[component] - 1) * np.sum(wts * integrand)
        out[idx] = math.exp(log_norm) * val if np.isfinite(val) else val
    return out


def beta_density(theta, a: float, b: float) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    with np.errstate(divide="ignore"):
        logb = gammaln(a) + gammaln(b) - gammaln(a + b)
        return np.exp((a - 1) * np.log(theta) + (b - 1) * np.log1p(-theta) - logb)


def jeffreys_density(theta) -> np.ndarray:
    """Jeffreys prior for the Bernoulli family: 1 / (pi sqrt(theta (1 - theta)))."""
    theta = np.asarray(theta, dtype=float)
    if np.any((theta <= 0) | (theta >= 1)):
        raise DomainError("Jeffreys density is defined on the open interval (0, 1)")
    return 1.0 / (math.pi * np.sqrt(theta * (1.0 - theta)))


def bernoulli_fisher_information(theta) -> np.ndarray:
    """Per-observation Fisher information 1/theta + 1/(1 - theta)."""
    theta = np.asarray(theta, dtype=float)
    if np.any((theta <= 0) | (theta >= 1)):
        raise DomainError("Fisher information is defined on the open interval (0, 1)")
    return 1.0 / theta + 1.0 / (1.0 - theta)
