from fractions import Fraction
from pathlib import Path

import pytest

from splab.config import load_config, parse_config, parse_env, parse_mixture, parse_number
from splab.env_models import Bernoulli, Deterministic, Markov, Multinomial
from splab.errors import ConfigError, InputError

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

MINIMAL = """
[experiment]
name = confirm

[confirm]
n_max = 100
"""


def test_minimal_confirm_parses():
    cfg = parse_config(MINIMAL)
    assert cfg.name == "confirm" and cfg.exact and cfg.seed == 0
    assert cfg.params == {"n_max": 100, "eps": Fraction(1, 10), "atom_mass": Fraction(1, 2)}


def test_bernoulli_spec_is_exact():
    env = parse_env("bernoulli:3/10")
    assert isinstance(env, Bernoulli) and env.theta == Fraction(3, 10)
    assert parse_env("bernoulli:3/10", exact=False).theta == 0.3


def test_zero_denominator_names_the_field():
    text = "[experiment]\nname = bounds\n[bounds]\ntruth = bernoulli:3/0\nmodels = bernoulli:1/2\nn = 3\n"
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert exc.value.line == 4 and exc.value.field == "truth"
    assert "line 4" in str(exc.value) and "'truth'" in str(exc.value)


def test_other_environment_specs():
    assert isinstance(parse_env("multinomial:[1/5, 4/5]"), Multinomial)
    m = parse_env("markov:[[9/10,1/10],[1/2,1/2]];init=[1,0]")
    assert isinstance(m, Markov) and m.prob("0") == 1
    d = parse_env("det:pattern=1,prefix=00")
    assert isinstance(d, Deterministic) and d.sequence(3) == (0, 0, 1)
    assert parse_env("det:gen=thue_morse").sequence(4) == (0, 1, 1, 0)


@pytest.mark.parametrize("bad", ["bernoulli", "coin:1/2", "bernoulli:x", "markov:[[1,0]];start=[1]",
                                 "det:pattern", "det:seed=1", "multinomial:1/2"])
def test_bad_environment_specs(bad):
    with pytest.raises(InputError):
        parse_env(bad)


def test_number_forms():
    assert parse_number("0.25") == Fraction(1, 4)
    assert parse_number("2") == 2
    assert parse_number("1e-3", exact=False) == 0.001
    for bad in ("1/", "a", "1//2", ""):
        with pytest.raises(InputError):
            parse_number(bad)


def test_mixture_literal():
    models, weights = parse_mixture("[ (det:pattern=1, 1/2), (bernoulli:1/2, 1/2) ]")
    assert weights == [Fraction(1, 2)] * 2
    assert models[0].sequence(2) == (1, 1) and models[1].theta == Fraction(1, 2)
    models, _ = parse_mixture("[(markov:[[1/2,1/2],[1,0]], 1/3)]")
    assert isinstance(models[0], Markov)
    for bad in ("(bernoulli:1/2, 1)", "[bernoulli:1/2]", "[(bernoulli:1/2)]", "[]", "[(det:pattern=1, 1/2]"):
        with pytest.raises(InputError):
            parse_mixture(bad)


def test_mix_key_fills_models_and_weights():
    cfg = parse_config("[experiment]\nname = bounds\n[bounds]\ntruth = bernoulli:1/2\n"
                       "mix = [ (det:pattern=1, 1/2), (bernoulli:1/2, 1/2) ]\nn = 5\n")
    assert len(cfg.params["models"]) == 2 and cfg.params["weights"] == [Fraction(1, 2)] * 2
    with pytest.raises(ConfigError, match="either"):
        parse_config("[experiment]\nname = bounds\n[bounds]\ntruth = bernoulli:1/2\n"
                     "mix = [ (bernoulli:1/2, 1/2) ]\nmodels = bernoulli:1/2\nn = 5\n")


@pytest.mark.parametrize("text,line,field", [
    ("[experiment]\nname = confirm\n[confirm]\nn_max = 10\ncolour = red\n", 5, "colour"),
    ("[experiment]\nname = confirm\n[confirm]\nn_max = ten\n", 4, "n_max"),
    ("[experiment]\nname = confirm\n[confirm]\nn_max = 1\nn_max = 2\n", 5, "n_max"),
    ("[experiment]\nname = confirm\n[confirm]\n", 3, "n_max"),
    ("n_max = 3\n", 1, "n_max"),
    ("[experiment]\nname = bounds\n[bounds]\ntruth = bernoulli:1/2\nmodels = bernoulli:1/2 | bernoulli:1/3\n"
     "weights = 3/4 | 1/2\nn = 3\n", 6, "weights"),
    ("[experiment]\nname = continuous\n[continuous]\ntheta0 = 1\n", 4, "theta0"),
    ("[experiment]\nname = universal\n[universal]\nlmax = 12\n", 4, "lmax"),
])
def test_errors_carry_line_and_field(text, line, field):
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert (exc.value.line, exc.value.field) == (line, field)


@pytest.mark.parametrize("text,match", [
    ("[confirm]\nn_max = 1\n", "missing section \\[experiment\\]"),
    ("[experiment]\nname = confirm\n", "missing section \\[confirm\\]"),
    ("[experiment]\nname = confirm\n[confirm]\nn_max=1\n[bounds]\nn=1\n", "do not belong"),
    ("[experiment]\nname = confirm\n[wat]\n", "unknown section"),
    ("[experiment]\nname = nope\n", "expected one of"),
    ("[experiment]\nname = confirm\njust words\n", "key = value"),
    ("[experiment]\nname = predict\n[predict]\nmodels = bernoulli:1/2\n", "sequence"),
])
def test_structural_errors(text, match):
    with pytest.raises(ConfigError, match=match):
        parse_config(text)


def test_overrides_and_digest():
    cfg = parse_config(MINIMAL, {"mode": "float", "seed": 9, "out": "elsewhere"})
    assert (cfg.mode, cfg.seed, cfg.out) == ("float", 9, "elsewhere")
    assert cfg.digest == parse_config(MINIMAL).digest
    assert cfg.digest != parse_config(MINIMAL + "# changed\n").digest


def test_comments_and_case():
    cfg = parse_config("# top\n[Experiment]\nNAME = confirm  # trailing\n[confirm]\nn_max = 3\n")
    assert cfg.params["n_max"] == 3


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.cfg")), ids=lambda p: p.stem)
def test_shipped_configs_parse(path):
    cfg = load_config(path)
    assert cfg.name in path.read_text()
