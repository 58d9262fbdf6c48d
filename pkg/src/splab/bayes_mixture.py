"""Finite Bayes mixtures xi(x) = sum_nu w_nu nu(x), posteriors and convergence bounds.

Weights are never renormalized: a total below one gives a strict semimeasure,
which the bounds allow. Arithmetic is exact (Fractions) whenever all weights and
component parameters are rationals, unless ``exact=False`` is requested.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import mpmath
import numpy as np
from scipy.special import logsumexp

from splab.env_models import Number, as_symbols, is_exact, safe_log
from splab.errors import DomainError, InputError

BOUND_DPS = 60  # mpmath digits for comparing exact rationals with log bounds


@dataclass(frozen=True)
class MixtureModel:
    """Finite truncation of a countable model class with prior weights."""

    components: tuple
    weights: tuple

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        object.__setattr__(self, "weights", tuple(self.weights))
        if not self.components:
            raise InputError("mixture needs at least one component")
        if len(self.components) != len(self.weights):
            raise InputError("one weight per component required")
        if any(not w > 0 for w in self.weights):
            raise InputError("mixture weights must be positive")
        total = sum(self.weights)
        if total > 1 and not (isinstance(total, float) and total - 1 <= 1e-12):
            raise InputError(f"mixture weights sum to {total} > 1")
        sizes = {c.alphabet_size for c in self.components}
        if len(sizes) != 1:
            raise InputError("components must share one alphabet")

    @classmethod
    def uniform(cls, components: Sequence) -> "MixtureModel":
        k = len(components)
        return cls(tuple(components), (Fraction(1, k),) * k)

    @property
    def alphabet_size(self) -> int:
        return self.components[0].alphabet_size

    @property
    def iid(self) -> bool:
        return all(getattr(c, "iid", False) for c in self.components)

    @property
    def exact(self) -> bool:
        return all(isinstance(w, (Fraction, int)) for w in self.weights) and all(
            is_exact(c) for c in self.components
        )

    def index(self, env) -> int:
        for i, c in enumerate(self.components):
            if c == env:
                return i
        raise InputError(f"{env!r} is not a component of the mixture")

    def prob(self, x) -> Number:
        x = as_symbols(x, self.alphabet_size)
        return sum(w * c.prob(x) for c, w in zip(self.components, self.weights))

    def logprob(self, x) -> float:
        x = as_symbols(x, self.alphabet_size)
        terms = [safe_log(w) + c.logprob(x) for c, w in zip(self.components, self.weights)]
        return float(logsumexp(terms))

    def conditional(self, x) -> tuple:
        return mixture_predict(self, x)

    def next_prob(self, x, a) -> Number:
        return mixture_predict(self, x)[a]

    def log_count_prob(self, counts: np.ndarray) -> np.ndarray:
        """ln xi for count vectors; requires i.i.d. components."""
        if not self.iid:
            raise InputError("count-based evaluation needs i.i.d. components")
        terms = np.stack(
            [safe_log(w) + c.log_count_prob(counts) for c, w in zip(self.components, self.weights)]
        )
        return logsumexp(terms, axis=0)

    def theta_matrix(self) -> np.ndarray:
        """(K, d) float array of i.i.d. component probabilities."""
        return np.asarray([[float(p) for p in c.probs] for c in self.components])

    def batch_predictor(self, n_samples: int):
        return _MixtureBatch(self, n_samples)

    def sample_batch(self, n, size, rng):
        if not all(float(w) for w in self.weights) or abs(float(sum(self.weights)) - 1) > 1e-12:
            raise InputError("sampling needs a proper mixture (weights summing to 1)")
        w = np.asarray([float(v) for v in self.weights])
        pick = rng.choice(len(w), size=size, p=w / w.sum())
        out = np.empty((size, n), dtype=np.int64)
        for k, comp in enumerate(self.components):
            rows = np.flatnonzero(pick == k)
            if rows.size:
                out[rows] = comp.sample_batch(n, rows.size, rng)
        return out


class _MixtureBatch:
    """Vectorized posterior-weighted predictor over many sample paths.

    Posteriors are kept as probabilities and renormalized every step.
    """

    def __init__(self, m: MixtureModel, n):
        self._parts = [c.batch_predictor(n) for c in m.components]
        w = np.asarray([float(v) for v in m.weights])
        self._post = np.tile(w / w.sum(), (n, 1))
        self._last = None

    def _component_preds(self):
        return np.stack([p.predict() for p in self._parts], axis=1)  # (N, K, d)

    def predict(self):
        self._last = self._component_preds()
        return np.einsum("nk,nkd->nd", self._post, self._last)

    def update(self, symbols):
        preds = self._last if self._last is not None else self._component_preds()
        post = self._post * preds[np.arange(len(symbols)), :, symbols]
        total = post.sum(axis=1, keepdims=True)
        # paths with zero evidence keep their old posterior; callers exclude them
        self._post = np.divide(post, total, out=self._post.copy(), where=total > 0)
        for p in self._parts:
            p.update(symbols)
        self._last = None


@dataclass(frozen=True)
class PosteriorState:
    """Per-component evidence after observing ``prefix``.

    In exact mode ``values`` holds the likelihoods nu(x) as rationals; in float
    mode it holds ln nu(x).
    """

    prefix: tuple
    values: tuple
    exact: bool

    def evidence_terms(self, m: MixtureModel):
        if self.exact:
            return [w * v for w, v in zip(m.weights, self.values)]
        return [safe_log(w) + v for w, v in zip(m.weights, self.values)]

    def log_evidence(self, m: MixtureModel) -> float:
        """ln xi(prefix)."""
        if self.exact:
            return safe_log(sum(self.evidence_terms(m)))
        return float(logsumexp(self.evidence_terms(m)))

    def weights(self, m: MixtureModel) -> tuple:
        """Posterior weights w_nu(x) = w_nu nu(x) / xi(x)."""
        terms = self.evidence_terms(m)
        if self.exact:
            total = sum(terms)
            if total == 0:
                raise DomainError("zero evidence: posterior undefined")
            return tuple(Fraction(t) / total for t in terms)
        z = logsumexp(terms)
        if z == -math.inf:
            raise DomainError("zero evidence: posterior undefined")
        return tuple(math.exp(t - z) for t in terms)


def _resolve_exact(m: MixtureModel, exact: bool | None) -> bool:
    if exact is None:
        return m.exact
    if exact and not m.exact:
        raise InputError("exact arithmetic requested but the mixture has float parameters")
    return exact


def initial_state(m: MixtureModel, exact: bool | None = None) -> PosteriorState:
    exact = _resolve_exact(m, exact)
    k = len(m.components)
    return PosteriorState((), (1,) * k if exact else (0.0,) * k, exact)


def update_posterior(m: MixtureModel, state: PosteriorState, a: int) -> PosteriorState:
    """Condition ``state`` on one more symbol ``a``."""
    x = state.prefix
    if state.exact:
        vals = tuple(v * c.next_prob(x, a) if v else v for c, v in zip(m.components, state.values))
    else:
        vals = tuple(
            v + safe_log(c.next_prob(x, a)) if v != -math.inf else v
            for c, v in zip(m.components, state.values)
        )
    return PosteriorState(x + (a,), vals, state.exact)


def posterior_weights(m: MixtureModel, x, exact: bool | None = None) -> PosteriorState:
    """Posterior state after ``x``, built one symbol at a time."""
    state = initial_state(m, exact)
    for a in as_symbols(x, m.alphabet_size):
        state = update_posterior(m, state, a)
    state.weights(m)  # raises on zero evidence
    return state


def state_predict(m: MixtureModel, state: PosteriorState) -> tuple:
    """xi(. | prefix) as the posterior-weighted average of component conditionals."""
    post = state.weights(m)
    d = m.alphabet_size
    x = state.prefix
    return tuple(
        sum(p * c.next_prob(x, a) for p, c in zip(post, m.components) if p) for a in range(d)
    )


def mixture_logprob(m: MixtureModel, x) -> float:
    """ln xi(x); ``-inf`` only if every component assigns zero."""
    if m.exact:
        return safe_log(m.prob(x))
    return m.logprob(x)


def mixture_predict(m: MixtureModel, x, exact: bool | None = None) -> tuple:
    """Predictive distribution xi(. | x) = xi(x.) / xi(x)."""
    return state_predict(m, posterior_weights(m, x, exact))


def multistep_predict(m: MixtureModel, x, y) -> Number:
    """xi(y | x) = xi(xy) / xi(x)."""
    x = as_symbols(x, m.alphabet_size)
    y = as_symbols(y, m.alphabet_size)
    if m.exact:
        den = m.prob(x)
        if den == 0:
            raise DomainError("zero evidence prefix")
        return Fraction(m.prob(x + y)) / den
    den = m.logprob(x)
    if den == -math.inf:
        raise DomainError("zero evidence prefix")
    return math.exp(m.logprob(x + y) - den)


@dataclass
class BoundReport:
    """Per-step left-hand side terms, their running sum and the bound they must respect."""

    terms: list
    cumulative: list
    bound: object
    satisfied: bool
    first_violation: int | None = None
    info: dict = field(default_factory=dict)

    @property
    def total(self):
        return self.cumulative[-1] if self.cumulative else 0

    @property
    def margin(self) -> float:
        return float(self.bound) - float(self.total)


def _leq_bound(value, bound: mpmath.mpf) -> bool:
    if isinstance(value, Fraction):
        value = mpmath.mpf(value.numerator) / value.denominator
    return mpmath.mpf(value) <= bound


def check_dominance(m: MixtureModel, index: int, xs) -> BoundReport:
    """Check xi(x) >= w_nu nu(x) on every string in ``xs``.

    ``terms`` holds the ratios xi(x) / (w_nu nu(x)) (``None`` where nu(x) = 0);
    the report records the worst (smallest) ratio.
    """
    comp, w = m.components[index], m.weights[index]
    ratios = []
    worst = None
    for x in xs:
        x = as_symbols(x, m.alphabet_size)
        if m.exact:
            nu = comp.prob(x)
            r = None if nu == 0 else Fraction(m.prob(x)) / (w * nu)
        else:
            lnu = comp.logprob(x)
            r = None if lnu == -math.inf else math.exp(m.logprob(x) - safe_log(w) - lnu)
        ratios.append(r)
        if r is not None and (worst is None or r < worst):
            worst = r
    ok = worst is None or worst >= 1 or (not m.exact and worst >= 1 - 1e-12)
    first = None if ok else next(i for i, r in enumerate(ratios) if r is not None and r < 1)
    return BoundReport(ratios, [], 1, ok, first, {"worst_ratio": worst})


def deterministic_bound_run(m: MixtureModel, alpha, horizon: int, exact: bool | None = None) -> BoundReport:
    """Run xi along the deterministic sequence of component ``alpha`` (index or env).

    Records |1 - xi(alpha_t | alpha_<t)| for t = 1..horizon, the running sum, and
    the bound ln(1/w_alpha). ``satisfied`` means the sum stays under the bound at
    every horizon. Exact mode keeps all conditionals as rationals and compares
    with the bound at ``BOUND_DPS`` digits.
    """
    idx = alpha if isinstance(alpha, int) else m.index(alpha)
    exact = _resolve_exact(m, exact)
    seq = _deterministic_sequence(m.components[idx], horizon)
    w = m.weights[idx]
    if exact:
        with mpmath.workdps(BOUND_DPS):
            bound = -mpmath.log(mpmath.mpf(Fraction(w).numerator) / Fraction(w).denominator)
            terms, cum = _exact_det_run(m, seq)
            violation = next((i + 1 for i, c in enumerate(cum) if not _leq_bound(c, bound)), None)
    else:
        bound = -safe_log(w)
        terms = _float_det_run(m, seq)
        cum = list(np.cumsum(terms))
        violation = next((i + 1 for i, c in enumerate(cum) if c > bound), None)
    return BoundReport(terms, cum, bound, violation is None, violation,
                       {"weight": w, "horizon": horizon, "exact": exact})


def _deterministic_sequence(truth, horizon: int):
    """The sequence of a deterministic truth; point-mass i.i.d. models count as deterministic."""
    if hasattr(truth, "sequence"):
        return truth.sequence(horizon)
    if getattr(truth, "iid", False):
        hits = [a for a, p in enumerate(truth.probs) if p == 1]
        if hits:
            return (hits[0],) * horizon
    raise InputError("the truth component must be deterministic")


class _PrefixView:
    """Length and last symbol of ``seq[:t]`` without copying; enough for ``next_prob``."""

    __slots__ = ("seq", "t")

    def __init__(self, seq, t):
        self.seq, self.t = seq, t

    def __len__(self):
        return self.t

    def __getitem__(self, i):
        if i != -1 or self.t == 0:
            raise IndexError(i)
        return self.seq[self.t - 1]


def _exact_det_run(m: MixtureModel, seq) -> tuple[list, list]:
    comps, weights = m.components, m.weights
    lik = [1] * len(comps)
    prev = sum(weights)
    total = Fraction(0)
    terms, cum = [], []
    for t, a in enumerate(seq):
        x = _PrefixView(seq, t)
        for k, c in enumerate(comps):
            if lik[k]:
                lik[k] = lik[k] * c.next_prob(x, a)
        cur = sum(wk * lk for wk, lk in zip(weights, lik) if lk)
        term = abs(1 - Fraction(cur) / prev)
        prev = cur
        total += term
        terms.append(term)
        cum.append(total)
    return terms, cum


def _float_det_run(m: MixtureModel, seq) -> list:
    logw = np.asarray([safe_log(w) for w in m.weights])
    post = np.exp(logw - logsumexp(logw))
    terms = []
    if m.iid:
        theta = m.theta_matrix()
        for a in seq:
            p_a = float(post @ theta[:, a])
            # 1 - xi(a|x) summed term by term so it stays non-negative
            terms.append(float(post @ (1.0 - theta[:, a])))
            post = post * theta[:, a] / p_a
        return terms
    for t, a in enumerate(seq):
        x = _PrefixView(seq, t)
        cond = np.asarray([float(c.next_prob(x, a)) for c in m.components])
        p_a = float(post @ cond)
        terms.append(float(post @ (1.0 - cond)))
        post = post * cond / p_a
    return terms


def proof_step_check(m: MixtureModel, x) -> tuple:
    """Return (sum_t (1 - xi(x_t|x_<t)), -ln xi(x_1:n)); the first never exceeds the second."""
    x = as_symbols(x, m.alphabet_size)
    state = initial_state(m)
    total = 0
    for a in x:
        p = state_predict(m, state)[a]
        total += 1 - p
        state = update_posterior(m, state, a)
    return total, -mixture_logprob(m, x)
