"""Concrete environments over a finite alphabet.

Every environment is an immutable (semi)measure ``nu`` over strings: ``prob(x)``
is the probability that a sequence starts with ``x``. Parameters may be
``fractions.Fraction`` (exact mode) or ``float``; probabilities come back in the
same arithmetic, log-probabilities are always floats in nats.

Strings are tuples of integer symbols ``0..d-1``. Functions also accept
character strings such as ``"0110"`` (one character per symbol, d <= 10).
"""

from __future__ import annotations

import math
from fractions import Fraction
from math import isqrt
from typing import Sequence, Union

import numpy as np

from splab.errors import DomainError, InputError

Number = Union[Fraction, float, int]
Symbols = tuple

GENERATORS = ("sqrt2", "thue_morse", "champernowne")


def as_symbols(x, alphabet_size: int = 2) -> Symbols:
    """Normalize ``x`` (str or iterable of ints) to a tuple of symbol indices."""
    if isinstance(x, str):
        try:
            out = tuple(int(ch) for ch in x)
        except ValueError:
            raise InputError(f"non-digit symbol in string {x!r}") from None
    else:
        out = tuple(int(a) for a in x)
    for a in out:
        if not 0 <= a < alphabet_size:
            raise InputError(f"symbol {a} outside alphabet of size {alphabet_size}")
    return out


def symbols_to_str(x: Sequence[int]) -> str:
    return "".join(str(int(a)) for a in x)


def safe_log(p: Number) -> float:
    """Natural log with ``log 0 = -inf``; works for Fractions of any size."""
    if p == 0:
        return -math.inf
    if isinstance(p, Fraction):
        # math.log(Fraction) goes through float and underflows for tiny values
        return math.log(p.numerator) - math.log(p.denominator)
    return math.log(p)


def _check_distribution(probs: Sequence[Number], what: str) -> tuple:
    probs = tuple(probs)
    if len(probs) < 2:
        raise InputError(f"{what}: alphabet size must be >= 2, got {len(probs)}")
    for p in probs:
        if not 0 <= p <= 1:
            raise InputError(f"{what}: probability {p} outside [0, 1]")
    total = sum(probs)
    exact = all(isinstance(p, (Fraction, int)) for p in probs)
    if (exact and total != 1) or (not exact and abs(total - 1) > 1e-12):
        raise InputError(f"{what}: probabilities sum to {total}, not 1")
    return probs


class _ConstantBatch:
    """Batch predictor for i.i.d. environments: the same vector at every step."""

    def __init__(self, probs, n):
        self._p = np.broadcast_to(np.asarray([float(p) for p in probs]), (n, len(probs)))

    def predict(self):
        return self._p

    def update(self, symbols):
        pass


class Multinomial:
    """i.i.d. source with symbol probabilities ``probs``: nu(x) = prod_i theta_i^{n_i}."""

    iid = True
    kind = "multinomial"

    def __init__(self, probs: Sequence[Number]):
        self.probs = _check_distribution(probs, self.kind)
        self.alphabet_size = len(self.probs)

    def __repr__(self):
        return f"{type(self).__name__}({', '.join(str(p) for p in self.probs)})"

    def __eq__(self, other):
        return type(other) is type(self) and other.probs == self.probs

    def __hash__(self):
        return hash((type(self).__name__, self.probs))

    @property
    def spec(self) -> str:
        return "multinomial:[" + ",".join(str(p) for p in self.probs) + "]"

    def counts(self, x) -> list[int]:
        c = [0] * self.alphabet_size
        for a in as_symbols(x, self.alphabet_size):
            c[a] += 1
        return c

    def prob(self, x) -> Number:
        out = 1
        for theta, n in zip(self.probs, self.counts(x)):
            if n:
                out = out * theta**n
        return out

    def logprob(self, x) -> float:
        total = 0.0
        for theta, n in zip(self.probs, self.counts(x)):
            if n:
                if theta == 0:
                    return -math.inf
                total += n * safe_log(theta)
        return total

    def log_count_prob(self, counts: np.ndarray) -> np.ndarray:
        """ln nu(x) for every row of a (S, d) count array (order-free by exchangeability)."""
        counts = np.asarray(counts)
        out = np.zeros(counts.shape[:-1])
        for i, theta in enumerate(self.probs):
            c = counts[..., i]
            if theta == 0:
                out = np.where(c > 0, -np.inf, out)
            else:
                out = out + c * safe_log(theta)
        return out

    def conditional(self, x) -> tuple:
        as_symbols(x, self.alphabet_size)
        return self.probs

    def next_prob(self, x: Symbols, a: int) -> Number:
        """nu(a | x) without re-checking nu(x) > 0; used by incremental updates."""
        return self.probs[a]

    def batch_predictor(self, n_samples: int):
        return _ConstantBatch(self.probs, n_samples)

    def sample_batch(self, n: int, size: int, rng: np.random.Generator) -> np.ndarray:
        cum = np.cumsum([float(p) for p in self.probs])[:-1]
        u = rng.random((size, n))
        return np.searchsorted(cum, u, side="right").astype(np.int64)


class Bernoulli(Multinomial):
    """Binary i.i.d. source with ``P(1) = theta``."""

    kind = "bernoulli"

    def __init__(self, theta: Number):
        if not 0 <= theta <= 1:
            raise InputError(f"bernoulli: theta={theta} outside [0, 1]")
        self.theta = theta
        super().__init__((1 - theta, theta))

    def __repr__(self):
        return f"Bernoulli({self.theta})"

    @property
    def spec(self) -> str:
        return f"bernoulli:{self.theta}"

    def sample_batch(self, n, size, rng):
        return (rng.random((size, n)) < float(self.theta)).astype(np.int64)


class _MarkovBatch:
    def __init__(self, env: "Markov", n):
        self._init = np.asarray([float(p) for p in env.init])
        self._rows = np.asarray([[float(p) for p in row] for row in env.matrix])
        self._last = None
        self._n = n

    def predict(self):
        if self._last is None:
            return np.broadcast_to(self._init, (self._n, len(self._init)))
        return self._rows[self._last]

    def update(self, symbols):
        self._last = np.asarray(symbols)


class Markov:
    """First-order stationary Markov chain with transition ``matrix`` and initial law ``init``.

    ``matrix[i][j]`` is P(next = j | current = i). When ``init`` is omitted the
    first symbol is uniform over the alphabet.
    """

    iid = False
    kind = "markov"

    def __init__(self, matrix: Sequence[Sequence[Number]], init: Sequence[Number] | None = None):
        rows = tuple(_check_distribution(r, "markov row") for r in matrix)
        d = len(rows)
        if any(len(r) != d for r in rows):
            raise InputError("markov: transition matrix must be square")
        self.matrix = rows
        self.alphabet_size = d
        if init is None:
            exact = all(isinstance(p, (Fraction, int)) for r in rows for p in r)
            init = [Fraction(1, d) if exact else 1.0 / d] * d
        self.init = _check_distribution(init, "markov init")
        if len(self.init) != d:
            raise InputError("markov: init length must match the alphabet size")

    def __repr__(self):
        return f"Markov({self.matrix}, init={self.init})"

    def __eq__(self, other):
        return type(other) is Markov and (other.matrix, other.init) == (self.matrix, self.init)

    def __hash__(self):
        return hash(("Markov", self.matrix, self.init))

    @property
    def spec(self) -> str:
        rows = ",".join("[" + ",".join(str(p) for p in r) + "]" for r in self.matrix)
        return f"markov:[{rows}];init=[" + ",".join(str(p) for p in self.init) + "]"

    def prob(self, x) -> Number:
        x = as_symbols(x, self.alphabet_size)
        if not x:
            return 1
        out = self.init[x[0]]
        for prev, cur in zip(x, x[1:]):
            out = out * self.matrix[prev][cur]
        return out

    def logprob(self, x) -> float:
        x = as_symbols(x, self.alphabet_size)
        if not x:
            return 0.0
        total = safe_log(self.init[x[0]])
        for prev, cur in zip(x, x[1:]):
            total += safe_log(self.matrix[prev][cur])
        return total

    def conditional(self, x) -> tuple:
        x = as_symbols(x, self.alphabet_size)
        if self.prob(x) == 0:
            raise DomainError("conditioning on a zero-probability prefix")
        return self.init if not x else self.matrix[x[-1]]

    def next_prob(self, x: Symbols, a: int) -> Number:
        return self.init[a] if not x else self.matrix[x[-1]][a]

    def batch_predictor(self, n_samples):
        return _MarkovBatch(self, n_samples)

    def sample_batch(self, n, size, rng):
        out = np.zeros((size, n), dtype=np.int64)
        if n == 0:
            return out
        init_cum = np.cumsum([float(p) for p in self.init])[:-1]
        row_cum = np.cumsum([[float(p) for p in r] for r in self.matrix], axis=1)[:, :-1]
        u = rng.random((size, n))
        out[:, 0] = np.searchsorted(init_cum, u[:, 0], side="right")
        for t in range(1, n):
            cum = row_cum[out[:, t - 1]]
            out[:, t] = (u[:, t, None] >= cum).sum(axis=1)
        return out


def _sqrt2_bits(n: int) -> tuple:
    # fractional binary digits of sqrt(2)
    r = isqrt(2 << (2 * n))
    return tuple((r >> (n - 1 - i)) & 1 for i in range(n))


def _champernowne_bits(n: int) -> tuple:
    out: list[int] = []
    k = 1
    while len(out) < n:
        out.extend(int(b) for b in bin(k)[2:])
        k += 1
    return tuple(out[:n])


class _DeterministicBatch:
    def __init__(self, env: "Deterministic", n):
        self._env = env
        self._n = n
        self._t = 0

    def predict(self):
        p = np.zeros((self._n, self._env.alphabet_size))
        p[:, self._env.symbol(self._t)] = 1.0
        return p

    def update(self, symbols):
        self._t += 1


class Deterministic:
    """Deterministic environment: mass 1 on the sequence ``prefix + pattern^inf``.

    Alternatively ``generator`` names a built-in computable binary sequence
    (``sqrt2``, ``thue_morse``, ``champernowne``).
    """

    iid = False
    kind = "det"

    def __init__(self, pattern: Sequence[int] = (), prefix: Sequence[int] = (),
                 generator: str | None = None, alphabet_size: int = 2):
        self.alphabet_size = alphabet_size
        if alphabet_size < 2:
            raise InputError("alphabet size must be >= 2")
        if generator is not None:
            if generator not in GENERATORS:
                raise InputError(f"unknown generator {generator!r}; choose from {GENERATORS}")
            if pattern or prefix or alphabet_size != 2:
                raise InputError("generator sequences are binary and take no pattern/prefix")
        elif not pattern:
            raise InputError("deterministic environment needs a non-empty pattern or a generator")
        self.generator = generator
        self.pattern = as_symbols(pattern, alphabet_size)
        self.prefix = as_symbols(prefix, alphabet_size)
        self._cache: tuple = ()

    def __repr__(self):
        if self.generator:
            return f"Deterministic(generator={self.generator!r})"
        return f"Deterministic(pattern={symbols_to_str(self.pattern)!r}, prefix={symbols_to_str(self.prefix)!r})"

    def __eq__(self, other):
        return type(other) is Deterministic and self._key() == other._key()

    def __hash__(self):
        return hash(self._key())

    def _key(self):
        return (self.generator, self.pattern, self.prefix, self.alphabet_size)

    @property
    def spec(self) -> str:
        if self.generator:
            return f"det:gen={self.generator}"
        s = f"det:pattern={symbols_to_str(self.pattern)}"
        return s + (f",prefix={symbols_to_str(self.prefix)}" if self.prefix else "")

    def sequence(self, n: int) -> Symbols:
        """The first ``n`` symbols of the sequence."""
        if self.generator is None:
            k = len(self.prefix)
            if n <= k:
                return self.prefix[:n]
            reps = (n - k) // len(self.pattern) + 1
            return (self.prefix + self.pattern * reps)[:n]
        if len(self._cache) < n:
            size = max(n, 2 * len(self._cache), 64)
            if self.generator == "sqrt2":
                bits = _sqrt2_bits(size)
            elif self.generator == "thue_morse":
                bits = tuple(bin(i).count("1") & 1 for i in range(size))
            else:
                bits = _champernowne_bits(size)
            self._cache = bits
        return self._cache[:n]

    def symbol(self, t: int) -> int:
        """Symbol at 0-based position ``t``."""
        if self.generator is None:
            k = len(self.prefix)
            return self.prefix[t] if t < k else self.pattern[(t - k) % len(self.pattern)]
        return self.sequence(t + 1)[t]

    def prob(self, x) -> int:
        x = as_symbols(x, self.alphabet_size)
        return 1 if x == self.sequence(len(x)) else 0

    def logprob(self, x) -> float:
        return 0.0 if self.prob(x) else -math.inf

    def conditional(self, x) -> tuple:
        x = as_symbols(x, self.alphabet_size)
        if not self.prob(x):
            raise DomainError("conditioning on an off-sequence prefix")
        out = [0] * self.alphabet_size
        out[self.symbol(len(x))] = 1
        return tuple(out)

    def next_prob(self, x: Symbols, a: int) -> int:
        return 1 if self.symbol(len(x)) == a else 0

    def batch_predictor(self, n_samples):
        return _DeterministicBatch(self, n_samples)

    def sample_batch(self, n, size, rng):
        return np.tile(np.asarray(self.sequence(n), dtype=np.int64), (size, 1))


Environment = Union[Multinomial, Markov, Deterministic]


def is_exact(env) -> bool:
    """True when every parameter of ``env`` is an exact rational."""
    if isinstance(env, Deterministic):
        return True
    if isinstance(env, Markov):
        values = [p for r in env.matrix for p in r] + list(env.init)
    else:
        values = list(env.probs)
    return all(isinstance(p, (Fraction, int)) for p in values)


def env_logprob(env, x) -> float:
    """ln nu(x); ``-inf`` for impossible prefixes."""
    return env.logprob(x)


def env_conditional(env, x) -> tuple:
    """Predictive distribution nu(. | x) as a tuple over the alphabet."""
    x = as_symbols(x, env.alphabet_size)
    if env.prob(x) == 0:
        raise DomainError("conditioning on a zero-probability prefix")
    return env.conditional(x)


def sample_sequence(env, n: int, seed: int) -> Symbols:
    """Draw one length-``n`` sequence from ``env``; a pure function of ``seed``."""
    rng = np.random.default_rng(seed)
    return tuple(int(a) for a in env.sample_batch(n, 1, rng)[0])
