"""Experiment configuration files.

Grammar (one item per line)::

    # comment
    [section]
    key = value

Every file has an ``[experiment]`` section naming the experiment and a section
of the same name holding its parameters. List values are comma separated;
lists of environment specs are separated by ``|``. Environment specs look like
``bernoulli:3/10``, ``multinomial:[1/5,4/5]``,
``markov:[[9/10,1/10],[1/2,1/2]];init=[1/2,1/2]``, ``det:pattern=01``,
``det:pattern=1,prefix=0`` or ``det:gen=sqrt2``. A weighted mixture can be
given in one line as ``mix = [ (det:pattern=1, 1/2), (bernoulli:1/2, 1/2) ]``
instead of separate ``models`` and ``weights`` keys.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from splab.env_models import Bernoulli, Deterministic, Markov, Multinomial
from splab.errors import ConfigError, InputError

EXPERIMENTS = ("confirm", "bounds", "continuous", "universal", "invariance", "predict")
REQUIRED = object()


def parse_number(text: str, exact: bool = True):
    """A rational like ``3/10``, ``0.3`` or ``2``; exact mode keeps it as a Fraction."""
    text = text.strip()
    if not re.fullmatch(r"[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?(/\d+)?", text):
        raise InputError(f"malformed number {text!r}")
    try:
        value = Fraction(text)
    except ZeroDivisionError:
        raise InputError(f"zero denominator in {text!r}") from None
    return value if exact else float(value)


def _parse_vector(text: str, exact: bool) -> list:
    text = text.strip()
    if not (text.startswith("[") and text.endswith("]")):
        raise InputError(f"expected [..] vector, got {text!r}")
    inner = text[1:-1].strip()
    return [parse_number(v, exact) for v in inner.split(",")] if inner else []


def _parse_matrix(text: str, exact: bool) -> list:
    text = text.strip()
    if not (text.startswith("[") and text.endswith("]")):
        raise InputError(f"expected [[..],..] matrix, got {text!r}")
    rows = re.findall(r"\[[^\[\]]*\]", text[1:-1])
    if not rows:
        raise InputError(f"empty matrix {text!r}")
    return [_parse_vector(r, exact) for r in rows]


def parse_env(text: str, exact: bool = True):
    """Build an environment from its textual spec."""
    text = text.strip()
    kind, sep, body = text.partition(":")
    if not sep:
        raise InputError(f"environment spec {text!r} lacks 'kind:'")
    kind = kind.strip().lower()
    body = body.strip()
    if kind == "bernoulli":
        return Bernoulli(parse_number(body, exact))
    if kind == "multinomial":
        return Multinomial(_parse_vector(body, exact))
    if kind == "markov":
        matrix_text, _, rest = body.partition(";")
        init = None
        if rest:
            key, _, value = rest.partition("=")
            if key.strip() != "init":
                raise InputError(f"unknown markov option {key.strip()!r}")
            init = _parse_vector(value, exact)
        return Markov(_parse_matrix(matrix_text, exact), init)
    if kind == "det":
        opts = {}
        for part in body.split(","):
            key, eq, value = part.partition("=")
            if not eq:
                raise InputError(f"det option {part!r} is not key=value")
            opts[key.strip()] = value.strip()
        unknown = set(opts) - {"pattern", "prefix", "gen"}
        if unknown:
            raise InputError(f"unknown det options {sorted(unknown)}")
        if "gen" in opts:
            return Deterministic(generator=opts["gen"])
        if "pattern" not in opts:
            raise InputError("det needs pattern= or gen=")
        return Deterministic(pattern=opts["pattern"], prefix=opts.get("prefix", ""))
    raise InputError(f"unknown environment kind {kind!r}")


def _split_top(text: str, sep: str = ",") -> list[str]:
    """Split on ``sep`` outside any brackets or parentheses."""
    parts, depth, start = [], 0, 0
    for i, ch in enumerate(text):
        if ch in "([":
            depth += 1
        elif ch in ")]":
            depth -= 1
            if depth < 0:
                raise InputError(f"unbalanced brackets in {text!r}")
        elif ch == sep and depth == 0:
            parts.append(text[start:i])
            start = i + 1
    if depth:
        raise InputError(f"unbalanced brackets in {text!r}")
    parts.append(text[start:])
    return parts


def parse_mixture(text: str, exact: bool = True) -> tuple[list, list]:
    """``[ (spec, weight), ... ]`` -> (environments, weights)."""
    text = text.strip()
    if not (text.startswith("[") and text.endswith("]")):
        raise InputError(f"expected [ (spec, weight), ... ], got {text!r}")
    models, weights = [], []
    for item in _split_top(text[1:-1]):
        item = item.strip()
        if not item:
            continue
        if not (item.startswith("(") and item.endswith(")")):
            raise InputError(f"mixture entry {item!r} is not (spec, weight)")
        spec, sep, weight = item[1:-1].rpartition(",")
        if not sep:
            raise InputError(f"mixture entry {item!r} lacks a weight")
        models.append(parse_env(spec, exact))
        weights.append(parse_number(weight, exact))
    if not models:
        raise InputError("empty mixture")
    return models, weights


# ----------------------------------------------------------------- values


def _int(text, exact):
    if not re.fullmatch(r"[+-]?\d+", text.strip()):
        raise InputError(f"expected an integer, got {text!r}")
    return int(text)


def _nonneg_int(text, exact):
    v = _int(text, exact)
    if v < 0:
        raise InputError(f"expected a non-negative integer, got {v}")
    return v


def _pos_int(text, exact):
    v = _int(text, exact)
    if v < 1:
        raise InputError(f"expected a positive integer, got {v}")
    return v


def _int_list(text, exact):
    return [_pos_int(v, exact) for v in text.split(",") if v.strip()]


def _number(text, exact):
    return parse_number(text, exact)


def _exact_number(text, exact):
    return parse_number(text, True)


def _number_list(text, exact):
    return [parse_number(v, exact) for v in text.split("|")]


def _env(text, exact):
    return parse_env(text, exact)


def _env_list(text, exact):
    return [parse_env(v, exact) for v in text.split("|")]


def _mix(text, exact):
    return parse_mixture(text, exact)


def _choice(*options):
    def parse(text, exact):
        value = text.strip().lower()
        if value not in options:
            raise InputError(f"expected one of {options}, got {text.strip()!r}")
        return value
    return parse


def _bool(text, exact):
    value = text.strip().lower()
    if value in ("true", "yes", "1", "on"):
        return True
    if value in ("false", "no", "0", "off"):
        return False
    raise InputError(f"expected true/false, got {text!r}")


def _bitstrings(text, exact):
    out = [v.strip() for v in text.split(",") if v.strip()]
    for s in out:
        if s.strip("01"):
            raise InputError(f"not a bit string: {s!r}")
    return out


def _symbols(text, exact):
    s = text.strip()
    if not s.isdigit():
        raise InputError(f"expected a digit string, got {text!r}")
    return s


def _names(text, exact):
    return [v.strip() for v in text.split(",") if v.strip()]


def _path(text, exact):
    return text.strip()


SCHEMA = {
    "experiment": {
        "name": (_choice(*EXPERIMENTS), REQUIRED),
        "mode": (_choice("exact", "float"), "exact"),
        "seed": (_nonneg_int, 0),
        "out": (_path, "out"),
    },
    "confirm": {
        "n_max": (_nonneg_int, REQUIRED),
        "eps": (_exact_number, Fraction(1, 10)),
        "atom_mass": (_exact_number, Fraction(1, 2)),
    },
    "bounds": {
        "kind": (_choice("divergence", "deterministic"), "divergence"),
        "truth": (_env, REQUIRED),
        "models": (_env_list, None),
        "weights": (_number_list, None),
        "mix": (_mix, None),
        "n": (_pos_int, REQUIRED),
        "method": (_choice("auto", "exact", "mc"), "auto"),
        "samples": (_pos_int, 100_000),
        "workers": (_pos_int, 1),
    },
    "continuous": {
        "theta0": (_number, REQUIRED),
        "prior": (_choice("uniform", "jeffreys"), "uniform"),
        "n_grid": (_int_list, [100, 1000, 10000]),
        "slack": (_number, 1),
    },
    "universal": {
        "lmax": (_pos_int, 6),
        "tmax": (_pos_int, 500),
        "max_output": (_pos_int, 256),
        "max_len": (_nonneg_int, 8),
        "strings": (_bitstrings, []),
        "b_max": (_pos_int, 50),
        "horizon": (_pos_int, 10_000),
        "compare_truth": (_env, None),
        "compare_n": (_pos_int, 8),
        "export_programs": (_bool, True),
    },
    "invariance": {
        "b_max": (_pos_int, 20),
        "mappings": (_names, ["identity", "square", "sqrt", "group3"]),
    },
    "predict": {
        "models": (_env_list, None),
        "weights": (_number_list, None),
        "mix": (_mix, None),
        "sequence": (_symbols, None),
        "truth": (_env, None),
        "n": (_pos_int, 20),
    },
}


@dataclass
class ExperimentConfig:
    name: str
    mode: str
    seed: int
    out: str
    params: dict
    text: str = field(repr=False, default="")

    @property
    def exact(self) -> bool:
        return self.mode == "exact"

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.text.encode()).hexdigest()


def _raw_sections(text: str) -> tuple[dict, dict]:
    sections: dict = {}
    headers: dict = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = re.fullmatch(r"\[\s*([A-Za-z_]\w*)\s*\]", line)
        if m:
            current = m.group(1).lower()
            if current not in SCHEMA:
                raise ConfigError(f"unknown section [{current}]", line=lineno)
            if current in sections:
                raise ConfigError(f"duplicate section [{current}]", line=lineno)
            sections[current] = {}
            headers[current] = lineno
            continue
        key, eq, value = line.partition("=")
        key = key.strip().lower()
        if not eq or not key:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", line=lineno)
        if current is None:
            raise ConfigError("key outside of any section", line=lineno, field=key)
        if key not in SCHEMA[current]:
            raise ConfigError(f"unknown key in [{current}]", line=lineno, field=key)
        if key in sections[current]:
            raise ConfigError("duplicate key", line=lineno, field=key)
        sections[current][key] = (value.strip(), lineno)
    return sections, headers


def _resolve(section: str, raw: dict, exact: bool, header_line=None) -> dict:
    out = {}
    for key, (parser, default) in SCHEMA[section].items():
        if key in raw:
            value, lineno = raw[key]
            try:
                out[key] = parser(value, exact)
            except (InputError, ValueError) as exc:
                raise ConfigError(str(exc), line=lineno, field=key) from None
        elif default is REQUIRED:
            raise ConfigError(f"missing required key in [{section}]", line=header_line, field=key)
        else:
            out[key] = default
    return out


def parse_config(text: str, overrides: dict | None = None) -> ExperimentConfig:
    """Parse and validate a configuration document.

    ``overrides`` may replace ``mode``, ``seed`` or ``out`` (as the CLI flags do).
    """
    sections, headers = _raw_sections(text)
    if "experiment" not in sections:
        raise ConfigError("missing section [experiment]")
    overrides = overrides or {}
    mode_raw = sections["experiment"].get("mode", ("exact", None))[0]
    mode = overrides.get("mode") or mode_raw.strip().lower()
    head = _resolve("experiment", sections["experiment"], True, headers["experiment"])
    head["mode"] = mode if mode in ("exact", "float") else head["mode"]
    name = head["name"]
    if name not in sections:
        raise ConfigError(f"missing section [{name}]")
    extra = set(sections) - {"experiment", name}
    if extra:
        raise ConfigError(f"sections {sorted(extra)} do not belong to experiment {name!r}")
    params = _resolve(name, sections[name], head["mode"] == "exact", headers[name])
    _validate(name, params, sections[name])
    seed = overrides.get("seed")
    out = overrides.get("out")
    return ExperimentConfig(name, head["mode"], head["seed"] if seed is None else seed,
                            head["out"] if out is None else out, params, text)


def _validate(name: str, params: dict, raw: dict):
    def line(key):
        return raw.get(key, (None, None))[1]

    if name in ("bounds", "predict"):
        if params["mix"] is not None:
            if params["models"] is not None or params["weights"] is not None:
                raise ConfigError("give either 'mix' or 'models'/'weights', not both",
                                  line=line("mix"), field="mix")
            params["models"], params["weights"] = params.pop("mix")
        else:
            params.pop("mix")
            if params["models"] is None:
                raise ConfigError(f"missing required key in [{name}]", field="models")
    if params.get("weights") is not None:
        if len(params["weights"]) != len(params["models"]):
            raise ConfigError("needs one weight per model", line=line("weights"), field="weights")
        if any(w <= 0 for w in params["weights"]) or sum(params["weights"]) > 1:
            raise ConfigError("weights must be positive with sum <= 1", line=line("weights"),
                              field="weights")
    if name == "predict" and params["sequence"] is None and params["truth"] is None:
        raise ConfigError("predict needs 'sequence' or 'truth'", field="sequence")
    if name == "continuous" and not 0 < params["theta0"] < 1:
        raise ConfigError("theta0 must lie strictly inside (0, 1)", line=line("theta0"), field="theta0")
    if name == "universal" and params["lmax"] > 10:
        raise ConfigError("lmax must be <= 10", line=line("lmax"), field="lmax")


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    return parse_config(Path(path).read_text(), overrides)
