"""Cheap stand-ins for Kolmogorov complexity: LZ78 code length, a prefix code for
rationals, the resulting universal prior on a rational grid, and a report on
how that prior behaves under reparametrization and regrouping.
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

from splab.bayes_mixture import BoundReport, MixtureModel, deterministic_bound_run
from splab.env_models import Bernoulli, as_symbols
from splab.errors import InputError, MappingError


def lz78_phrases(x, alphabet_size: int = 2) -> int:
    """Number of phrases in the LZ78 incremental parse (a trailing repeat counts once)."""
    seen = set()
    phrase = ()
    count = 0
    for a in as_symbols(x, alphabet_size):
        phrase += (a,)
        if phrase not in seen:
            seen.add(phrase)
            count += 1
            phrase = ()
    return count + (1 if phrase else 0)


def lz78_complexity(x, alphabet_size: int = 2) -> int:
    """LZ78 code length in bits: c * (ceil(log2 c) + ceil(log2 d))."""
    c = lz78_phrases(x, alphabet_size)
    if c == 0:
        return 0
    return c * (math.ceil(math.log2(c)) + math.ceil(math.log2(alphabet_size)))


# ------------------------------------------------------------ rational code


def elias_gamma(n: int) -> str:
    if n < 1:
        raise InputError("Elias gamma needs n >= 1")
    body = bin(n)[2:]
    return "0" * (len(body) - 1) + body


def elias_gamma_length(n: int) -> int:
    return 2 * (n.bit_length() - 1) + 1


def _fixed_width(count: int) -> int:
    """Bits needed to index ``count`` alternatives."""
    return math.ceil(math.log2(count)) if count > 1 else 0


@dataclass(frozen=True)
class RationalCode:
    """Codeword for a/b in [0, 1]: Elias-gamma(b) followed by a in ceil(log2(b+1)) bits.

    The code is prefix-free over all pairs 0 <= a <= b, so the reduced
    fractions satisfy Kraft with room to spare.
    """

    theta: Fraction

    def __post_init__(self):
        theta = Fraction(self.theta)
        if not 0 <= theta <= 1:
            raise InputError(f"theta={theta} outside [0, 1]")
        object.__setattr__(self, "theta", theta)

    @property
    def bits(self) -> int:
        b = self.theta.denominator
        return elias_gamma_length(b) + _fixed_width(b + 1)

    @property
    def weight(self) -> Fraction:
        return Fraction(1, 2**self.bits)

    def encode(self) -> str:
        a, b = self.theta.numerator, self.theta.denominator
        width = _fixed_width(b + 1)
        return elias_gamma(b) + (format(a, f"0{width}b") if width else "")

    @staticmethod
    def decode(code: str) -> tuple[Fraction, int]:
        """Decode one codeword from the front of ``code``; returns (theta, bits used)."""
        zeros = len(code) - len(code.lstrip("0"))
        end = 2 * zeros + 1
        if end > len(code):
            raise InputError("truncated codeword")
        b = int(code[zeros:end], 2)
        width = _fixed_width(b + 1)
        if end + width > len(code):
            raise InputError("truncated codeword")
        a = int(code[end:end + width], 2) if width else 0
        if a > b:
            raise InputError("numerator exceeds denominator")
        return Fraction(a, b), end + width


def rational_code_length(theta) -> int:
    return RationalCode(Fraction(theta)).bits


def grid_points(b_max: int) -> list[Fraction]:
    """Reduced fractions a/b in [0, 1] with b <= b_max, ordered by (b, a)."""
    if b_max < 1:
        raise InputError("b_max must be >= 1")
    return [Fraction(a, b) for b in range(1, b_max + 1) for a in range(b + 1)
            if math.gcd(a, b) == 1]


def rational_grid_prior(b_max: int) -> list[tuple[Fraction, Fraction]]:
    """(theta, 2^-K(theta)) for every reduced grid rational."""
    return [(t, RationalCode(t).weight) for t in grid_points(b_max)]


def grid_mixture(b_max: int, exact: bool = True) -> MixtureModel:
    """Bernoulli mixture over the grid with universal-prior weights."""
    prior = rational_grid_prior(b_max)
    if exact:
        return MixtureModel(tuple(Bernoulli(t) for t, _ in prior), tuple(w for _, w in prior))
    return MixtureModel(tuple(Bernoulli(float(t)) for t, _ in prior),
                        tuple(float(w) for _, w in prior))


def grid_bound_run(b_max: int, truth, horizon: int, exact: bool = False) -> BoundReport:
    """Deterministic-truth bound on the grid mixture: sum |1 - xi| <= K(truth) ln 2.

    ``truth`` must be 0 or 1 (the deterministic Bernoulli sources).
    """
    truth = Fraction(truth)
    if truth not in (0, 1):
        raise InputError("grid bound run needs a deterministic truth (theta 0 or 1)")
    m = grid_mixture(b_max, exact)
    idx = grid_points(b_max).index(truth)
    report = deterministic_bound_run(m, idx, horizon, exact=exact)
    report.info["code_bits"] = rational_code_length(truth)
    return report


# ------------------------------------------------------- invariance report


def _square(t: Fraction) -> Fraction:
    return t * t


def _sqrt_rounded(b_max: int) -> Callable[[Fraction], Fraction]:
    grid = grid_points(b_max)

    def f(t: Fraction) -> Fraction:
        target = math.sqrt(t)
        return min(grid, key=lambda g: (abs(float(g) - target), g.denominator, g))

    return f


def simplex_code_length(b: int) -> int:
    """Bits for a 3-outcome grid point (a1, a2, a3)/b: Elias-gamma(b) + index among the simplex points."""
    return elias_gamma_length(b) + _fixed_width((b + 1) * (b + 2) // 2)


def simplex_points(b_max: int):
    """Reduced 3-outcome grid points as (theta1, theta2, theta3, b)."""
    for b in range(1, b_max + 1):
        for a1 in range(b + 1):
            for a2 in range(b + 1 - a1):
                a3 = b - a1 - a2
                if math.gcd(math.gcd(a1, a2), math.gcd(a3, b)) == 1:
                    yield Fraction(a1, b), Fraction(a2, b), Fraction(a3, b), b


@dataclass
class InvarianceReport:
    mapping: str
    b_max: int
    rows: list  # (theta, prior weight, preimage weight, ratio, preimages)
    skipped: int

    @property
    def ratios(self) -> list[Fraction]:
        return [r[3] for r in self.rows]

    def summary(self) -> dict:
        ratios = self.ratios
        if not ratios:
            return {"min": None, "max": None, "median": None, "count": 0, "skipped": self.skipped}
        return {"min": min(ratios), "max": max(ratios), "median": statistics.median(ratios),
                "count": len(ratios), "skipped": self.skipped}


BUILTIN_MAPPINGS = ("identity", "square", "sqrt", "group3")


def invariance_report(b_max: int, f="identity", strict: bool = False) -> InvarianceReport:
    """Compare the pushed-forward universal prior with the universal prior on the image.

    For each theta in the image of ``f`` the row holds
    sum_{theta': f(theta')=theta} 2^-K(theta') divided by 2^-K(theta). Points
    whose image falls off the grid are skipped and counted; with ``strict``
    they raise ``MappingError``. ``group3`` starts from the 3-outcome grid and
    merges outcomes 2 and 3, i.e. maps (t1, t2, t3) to t1.
    """
    grid = set(grid_points(b_max))
    pushed: dict = {}
    counts: dict = {}
    skipped = 0
    if f == "group3":
        name = "group3"
        source = ((t1, Fraction(1, 2 ** simplex_code_length(b))) for t1, _, _, b in simplex_points(b_max))
    else:
        if callable(f):
            name, fn = getattr(f, "__name__", "custom"), f
        elif f == "identity":
            name, fn = f, (lambda t: t)
        elif f == "square":
            name, fn = f, _square
        elif f == "sqrt":
            name, fn = f, _sqrt_rounded(b_max)
        else:
            raise InputError(f"unknown mapping {f!r}; choose from {BUILTIN_MAPPINGS}")
        source = ((fn(t), w) for t, w in rational_grid_prior(b_max))
    for image, w in source:
        image = Fraction(image)
        if image not in grid:
            if strict:
                raise MappingError(f"{name}: image {image} is off the grid b_max={b_max}")
            skipped += 1
            continue
        pushed[image] = pushed.get(image, 0) + w
        counts[image] = counts.get(image, 0) + 1
    rows = []
    for theta in sorted(pushed):
        prior = RationalCode(theta).weight
        rows.append((theta, prior, pushed[theta], pushed[theta] / prior, counts[theta]))
    report = InvarianceReport(name, b_max, rows, skipped)
    if name == "identity" and any(r != 1 for r in report.ratios):
        raise AssertionError("identity mapping must reproduce the prior exactly")
    return report
