"""A tiny monotone machine and exhaustive enumeration of its programs.

The machine reads a program of 3-bit opcodes and has a binary work tape that
is unbounded in both directions (all cells start at 0):

    code  mnemonic  effect
    0     <         move head left
    1     >         move head right
    2     ^         flip the current cell
    3     o         append the current cell to the output
    4     [         if the cell is 0 jump past the matching ]
    5     ]         jump back to the matching [
    6     h         halt
    7     n         no-op

Programs with unbalanced brackets are invalid. Every executed opcode costs one
step. A program that runs past its last opcode stops without halting
("ended"); its output is whatever was written. Output is only ever appended, so
the machine is monotone.

Enumeration runs every program up to ``lmax`` opcodes for ``tmax`` steps and
derives budgeted versions of algorithmic probability M, monotone complexity Km
and prefix complexity K. All weights are exact dyadic rationals.
"""

from __future__ import annotations

import csv
import gzip
import hashlib
import io
import json
import math
import os
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import mpmath

from splab.errors import DomainError, InputError, ResourceError

MACHINE_VERSION = 1
MNEMONICS = "<>^o[]hn"
BITS_PER_OP = 3
DEFAULT_MAX_OUTPUT = 256
DEFAULT_MAX_PROGRAMS = 3_000_000

HALTED = "halted"
ENDED = "ended"
BUDGET = "budget-exhausted"
TRUNCATED = "truncated"
INVALID = "invalid"

_LEFT, _RIGHT, _FLIP, _OUT, _OPEN, _CLOSE, _HALT, _NOP = range(8)


def parse_program(text: str) -> str:
    """Canonical octal-digit form of a program given as digits or mnemonics (spaces ignored)."""
    out = []
    for ch in text:
        if ch.isspace():
            continue
        if ch in "01234567":
            out.append(ch)
        elif ch in MNEMONICS:
            out.append(str(MNEMONICS.index(ch)))
        else:
            raise InputError(f"unknown opcode {ch!r}")
    return "".join(out)


def mnemonic(program: str) -> str:
    return "".join(MNEMONICS[int(c)] for c in program)


def program_bits(program: str) -> int:
    return BITS_PER_OP * len(program)


def bracket_match(code) -> list[int] | None:
    """Matching-bracket table, or ``None`` if brackets are unbalanced."""
    match = [-1] * len(code)
    stack = []
    for i, op in enumerate(code):
        if op == _OPEN:
            stack.append(i)
        elif op == _CLOSE:
            if not stack:
                return None
            j = stack.pop()
            match[i], match[j] = j, i
    return None if stack else match


@dataclass
class MachineState:
    """Snapshot of a run. ``tape`` holds the positions of cells set to 1."""

    program: str
    tape: frozenset = frozenset()
    head: int = 0
    pc: int = 0
    output: str = ""
    steps: int = 0
    status: str = "running"

    @property
    def halted(self) -> bool:
        return self.status == HALTED


class _Run:
    """Mutable interpreter state; the tape is a bytearray centred on cell 0."""

    __slots__ = ("tape", "origin", "head", "pc", "out", "steps", "flips")

    def __init__(self, tmax):
        self.tape = bytearray(2 * tmax + 3)
        self.origin = tmax + 1
        self.head = self.origin
        self.pc = 0
        self.out = []
        self.steps = 0
        self.flips = 0

    def copy(self):
        c = _Run.__new__(_Run)
        c.tape = bytearray(self.tape)
        c.origin, c.head, c.pc = self.origin, self.head, self.pc
        c.out = list(self.out)
        c.steps, c.flips = self.steps, self.flips
        return c


def _execute(code, match, run: _Run, tmax: int, max_output: int, skip_cycles: bool = True) -> str:
    """Advance ``run`` until it halts, leaves the program, or exhausts a budget.

    A silent repeat of (pc, head, tape) at a ``[`` proves the run is periodic;
    whole periods are then skipped, which keeps tight loops cheap.
    """
    n = len(code)
    tape, out = run.tape, run.out
    head, pc, steps, flips = run.head, run.pc, run.steps, run.flips
    seen = {}
    status = None
    while True:
        if pc >= n:
            status = ENDED
            break
        if steps >= tmax:
            status = BUDGET
            break
        op = code[pc]
        steps += 1
        if op == _OUT:
            out.append(tape[head])
            if len(out) >= max_output:
                pc += 1
                status = TRUNCATED
                break
            pc += 1
        elif op == _OPEN:
            prev = seen.get(pc)
            if skip_cycles and prev is not None and prev[1] == head and prev[2] == flips:
                period = steps - prev[0]
                emitted = out[prev[3]:]
                cycles = (tmax - steps) // period
                if cycles and len(out) + cycles * len(emitted) < max_output:
                    out.extend(emitted * cycles)
                    steps += cycles * period
                seen.clear()
            seen[pc] = (steps, head, flips, len(out))
            pc = pc + 1 if tape[head] else match[pc] + 1
        elif op == _CLOSE:
            pc = match[pc]
        elif op == _FLIP:
            tape[head] ^= 1
            flips += 1
            pc += 1
        elif op == _LEFT:
            head -= 1
            pc += 1
        elif op == _RIGHT:
            head += 1
            pc += 1
        elif op == _HALT:
            status = HALTED
            break
        else:
            pc += 1
    run.head, run.pc, run.steps, run.flips = head, pc, steps, flips
    return status


def _output_str(out) -> str:
    return "".join("1" if b else "0" for b in out)


def run_program(program: str, tmax: int, max_output: int = DEFAULT_MAX_OUTPUT,
                skip_cycles: bool = True) -> MachineState:
    """Run one program for at most ``tmax`` steps.

    ``skip_cycles=False`` forces plain step-by-step execution.
    """
    program = parse_program(program)
    if tmax < 0:
        raise InputError("step budget must be non-negative")
    code = [int(c) for c in program]
    match = bracket_match(code)
    if match is None:
        return MachineState(program, status=INVALID)
    run = _Run(tmax)
    status = _execute(code, match, run, tmax, max_output, skip_cycles)
    tape = frozenset(i - run.origin for i, v in enumerate(run.tape) if v)
    return MachineState(program, tape, run.head - run.origin, run.pc, _output_str(run.out),
                        run.steps, status)


def count_valid_programs(length: int) -> int:
    """Number of bracket-balanced opcode strings of exactly ``length`` opcodes."""
    total = 0
    for pairs in range(length // 2 + 1):
        catalan = math.comb(2 * pairs, pairs) // (pairs + 1)
        total += math.comb(length, 2 * pairs) * catalan * 6 ** (length - 2 * pairs)
    return total


@dataclass
class EnumerationTable:
    """All valid programs up to ``lmax`` opcodes run for ``tmax`` steps.

    ``records`` holds (program, status, output, steps, blocked) tuples in
    canonical (length, lexicographic) order, where ``blocked`` is the output
    length of the longest proper valid prefix (-1 if there is none). A program
    is a minimal program for target x iff its output starts with x and
    ``len(x) > blocked``.
    """

    lmax: int
    tmax: int
    max_output: int
    records: list
    n_invalid: int
    partial: bool = False
    machine_version: int = MACHINE_VERSION
    _mass: dict = field(default=None, repr=False)
    _km: dict = field(default=None, repr=False)
    _k: dict = field(default=None, repr=False)
    _kraft_halting: int = field(default=None, repr=False)

    def __post_init__(self):
        self._aggregate()

    @property
    def denominator(self) -> int:
        return 8**self.lmax

    @property
    def n_programs(self) -> int:
        return len(self.records) + self.n_invalid

    def weight(self, program: str) -> int:
        """Numerator of 2^-l(p) over ``denominator``."""
        return 8 ** (self.lmax - len(program))

    def _aggregate(self):
        groups: dict = {}
        best_len: dict = {}
        halting: dict = {}
        kraft = 0
        by_program = {}
        for prog, status, out, steps, blocked in self.records:
            by_program[prog] = status
            key = (out, blocked)
            groups[key] = groups.get(key, 0) + self.weight(prog)
            if best_len.get(out, 99) > len(prog):
                best_len[out] = len(prog)
            if status == HALTED:
                if halting.get(out, 99) > len(prog):
                    halting[out] = len(prog)
        for prog, status, out, steps, blocked in self.records:
            if status == HALTED and not _has_halting_prefix(prog, by_program):
                kraft += self.weight(prog)
        mass: dict = {}
        for (out, blocked), w in groups.items():
            for j in range(blocked + 1, len(out) + 1):
                x = out[:j]
                mass[x] = mass.get(x, 0) + w
        km: dict = {}
        for out, length in best_len.items():
            for j in range(len(out) + 1):
                x = out[:j]
                if km.get(x, 99) > length:
                    km[x] = length
        self._mass, self._km, self._k, self._kraft_halting = mass, km, halting, kraft

    # -------------------------------------------------------------- queries

    def strings(self):
        """Every string with positive M at this budget, shortest first."""
        return sorted(self._mass, key=lambda s: (len(s), s))

    def approx_M(self, x) -> Fraction:
        return Fraction(self._mass.get(_bits(x), 0), self.denominator)

    def approx_Km(self, x):
        length = self._km.get(_bits(x))
        return math.inf if length is None else BITS_PER_OP * length

    def approx_K(self, x):
        length = self._k.get(_bits(x))
        return math.inf if length is None else BITS_PER_OP * length

    def halting_kraft_sum(self) -> Fraction:
        """Sum of 2^-l over halting programs with no halting proper prefix."""
        return Fraction(self._kraft_halting, self.denominator)

    # ------------------------------------------------------------- export

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["program", "mnemonic", "length_bits", "status", "halted", "steps", "output"])
        for prog, status, out, steps, blocked in self.records:
            w.writerow([prog, mnemonic(prog), program_bits(prog), status,
                        int(status == HALTED), steps, out])
        return buf.getvalue()

    def digest(self) -> str:
        return hashlib.sha256(self.to_csv().encode()).hexdigest()

    def to_json(self) -> dict:
        return {"machine_version": self.machine_version, "lmax": self.lmax, "tmax": self.tmax,
                "max_output": self.max_output, "n_invalid": self.n_invalid,
                "partial": self.partial, "records": [list(r) for r in self.records]}

    @classmethod
    def from_json(cls, data: dict) -> "EnumerationTable":
        if data["machine_version"] != MACHINE_VERSION:
            raise InputError("enumeration cache was built by another machine version")
        return cls(data["lmax"], data["tmax"], data["max_output"],
                   [tuple(r) for r in data["records"]], data["n_invalid"], data["partial"])


def _bits(x) -> str:
    if isinstance(x, str):
        if x.strip("01"):
            raise InputError(f"not a bit string: {x!r}")
        return x
    return "".join("1" if int(b) else "0" for b in x)


def _has_halting_prefix(prog: str, status_of: dict) -> bool:
    for j in range(1, len(prog)):
        if status_of.get(prog[:j]) == HALTED:
            return True
    return False


def enumerate_programs(lmax: int, tmax: int, max_output: int = DEFAULT_MAX_OUTPUT,
                       max_programs: int = DEFAULT_MAX_PROGRAMS,
                       allow_partial: bool = False) -> EnumerationTable:
    """Run every opcode string of 1..``lmax`` opcodes with budget ``tmax``.

    Programs are visited depth-first. A valid program p = q s, where q is its
    longest proper valid prefix, behaves exactly like q until q's code is
    exhausted, so the run resumes from q's final state. If the number of valid
    programs would exceed ``max_programs`` a ``ResourceError`` is raised, or
    with ``allow_partial`` the largest complete length is used instead and the
    table is flagged partial.
    """
    if lmax < 1 or tmax < 1:
        raise InputError("need lmax >= 1 and tmax >= 1")
    if lmax > 10:
        raise ResourceError("lmax above 10 opcodes is beyond desk scale")
    partial = False
    total = 0
    usable = 0
    for length in range(1, lmax + 1):
        total += count_valid_programs(length)
        if total <= max_programs:
            usable = length
    if usable < lmax:
        if not allow_partial or usable == 0:
            raise ResourceError(f"{total} valid programs exceed max_programs={max_programs}")
        lmax, partial = usable, True

    records = []
    n_invalid = sum(8**length for length in range(1, lmax + 1)) - sum(
        count_valid_programs(length) for length in range(1, lmax + 1))

    root = _Run(tmax)
    # stack entries: (program, code, balance, valid-ancestor info)
    # ancestor info: (status, run, output, steps, out_len_for_blocking)
    def visit(prog, code, balance, anc):
        for op in range(8):
            nb = balance + (op == _OPEN) - (op == _CLOSE)
            if nb < 0 or nb > lmax - len(code) - 1:
                continue
            p = prog + str(op)
            c = code + [op]
            info = anc
            if nb == 0:
                a_status, a_run, a_out, a_steps, a_blocked = anc
                blocked = len(a_out) if prog_has_content(anc) else -1
                if a_status == ENDED:
                    run = a_run.copy()
                    status = _execute(c, bracket_match(c), run, tmax, max_output)
                    out = _output_str(run.out)
                    records.append((p, status, out, run.steps, blocked))
                    info = (status, run if status == ENDED else None, out, run.steps, True)
                else:
                    records.append((p, a_status, a_out, a_steps, blocked))
                    info = (a_status, None, a_out, a_steps, True)
            if len(c) < lmax:
                visit(p, c, nb, info)

    def prog_has_content(anc):
        return anc[4]

    visit("", [], 0, (ENDED, root, "", 0, False))
    records.sort(key=lambda r: (len(r[0]), r[0]))
    return EnumerationTable(lmax, tmax, max_output, records, n_invalid, partial)


def cache_path(cache_dir, lmax: int, tmax: int, max_output: int) -> Path:
    return Path(cache_dir) / f"enum-v{MACHINE_VERSION}-L{lmax}-T{tmax}-O{max_output}.json.gz"


def load_or_enumerate(lmax: int, tmax: int, max_output: int = DEFAULT_MAX_OUTPUT,
                      cache_dir=None, **kwargs) -> EnumerationTable:
    """Enumerate, reusing a cached table keyed by (machine version, lmax, tmax, max_output)."""
    cache_dir = cache_dir or os.environ.get("SPLAB_CACHE")
    if cache_dir:
        path = cache_path(cache_dir, lmax, tmax, max_output)
        if path.exists():
            with gzip.open(path, "rt") as fh:
                return EnumerationTable.from_json(json.load(fh))
    table = enumerate_programs(lmax, tmax, max_output, **kwargs)
    if cache_dir and not table.partial:
        path = cache_path(cache_dir, lmax, tmax, max_output)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp")
        with gzip.open(tmp, "wt") as fh:
            json.dump(table.to_json(), fh)
        os.replace(tmp, path)
    return table


# ------------------------------------------------------------ operations


def approx_M(table: EnumerationTable, x) -> Fraction:
    """Budgeted algorithmic probability: sum of 2^-l(p) over minimal programs with output starting with x."""
    return table.approx_M(x)


def approx_Km(table: EnumerationTable, x):
    """Budgeted monotone complexity in bits (``inf`` if no program reaches x)."""
    return table.approx_Km(x)


def approx_K(table: EnumerationTable, x):
    """Budgeted prefix complexity in bits: shortest halting program printing exactly x."""
    return table.approx_K(x)


@dataclass(frozen=True)
class MPrediction:
    probs: tuple  # (M(0|x), M(1|x)) as Fractions
    deficit: Fraction  # 1 - sum: mass lost by the semimeasure


def predict_M(table: EnumerationTable, x) -> MPrediction:
    """M(a|x) = M(xa) / M(x) for a in {0, 1}."""
    x = _bits(x)
    base = table.approx_M(x)
    if base == 0:
        raise DomainError(f"M({x!r}) = 0 at this budget")
    probs = tuple(table.approx_M(x + a) / base for a in "01")
    return MPrediction(probs, 1 - sum(probs))


def km_bound_check(table: EnumerationTable, strings=None) -> list[dict]:
    """For each x compare sum_t (1 - M(x_t|x_<t)) with Km(x) ln 2.

    The sums are exact rationals; the comparison with the irrational bound is
    done at 50 digits.
    """
    strings = table.strings() if strings is None else [_bits(s) for s in strings]
    cum: dict = {"": Fraction(0)}
    out = []
    with mpmath.workdps(50):
        ln2 = mpmath.log(2)
        for x in sorted(set(strings), key=lambda s: (len(s), s)):
            if table.approx_M(x) == 0:
                continue
            total = _cum_loss(table, x, cum)
            km = table.approx_Km(x)
            bound = km * ln2
            lhs = mpmath.mpf(total.numerator) / total.denominator
            out.append({"x": x, "loss": total, "km_bits": km, "bound": float(bound),
                        "ok": bool(lhs <= bound)})
    return out


def _cum_loss(table, x, cum):
    if x in cum:
        return cum[x]
    prev = _cum_loss(table, x[:-1], cum)
    total = prev + 1 - table.approx_M(x) / table.approx_M(x[:-1])
    cum[x] = total
    return total
