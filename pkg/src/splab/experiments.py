"""Experiment runner: turns a parsed config into CSV tables plus a JSON manifest."""

from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import io
import itertools
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import mpmath
import numpy as np

from splab import __version__
from splab.bayes_mixture import (
    MixtureModel,
    deterministic_bound_run,
    initial_state,
    state_predict,
    update_posterior,
)
from splab.config import ExperimentConfig
from splab.conjugate import DirichletMixture, DirichletPrior, MixedDiracPrior, confirmation_table
from splab.divergence import continuous_bound_check, exact_divergence_iid, mc_divergence, universal_vs_continuous
from splab.env_models import as_symbols, sample_sequence, symbols_to_str
from splab.machine import km_bound_check, load_or_enumerate, predict_M
from splab.universal import (
    grid_bound_run,
    invariance_report,
    lz78_complexity,
    rational_grid_prior,
)

EXIT_OK = 0
EXIT_VIOLATION = 2
EXIT_CONFIG = 3
EXIT_RESOURCE = 4


@dataclass
class Check:
    """One asserted invariant; ``detail`` names the inequality and the offending values."""

    name: str
    ok: bool
    detail: str = ""


@dataclass
class RunManifest:
    experiment: str
    config_sha256: str
    code_version: str
    mode: str
    seed: int
    budgets: dict
    started: str
    finished: str
    out_dir: str
    files: list = field(default_factory=list)
    checks: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)

    @property
    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.ok]

    def to_json(self) -> dict:
        return {
            "experiment": self.experiment, "config_sha256": self.config_sha256,
            "code_version": self.code_version, "mode": self.mode, "seed": self.seed,
            "budgets": self.budgets, "started": self.started, "finished": self.finished,
            "files": self.files, "ok": self.ok,
            "checks": [{"name": c.name, "ok": c.ok, "detail": c.detail} for c in self.checks],
            "summary": _jsonable(self.summary),
        }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, Fraction):
        return str(obj)
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


# ------------------------------------------------------------------ output


def format_cell(value, exact: bool) -> str:
    """Exact mode writes rationals as p/q; float mode writes shortest round-trip decimals."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, Fraction):
        return str(value) if exact else repr(float(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, mpmath.mpf):
        return repr(float(value))
    return str(value)


def render_csv(header, rows, exact: bool) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([format_cell(row.get(h), exact) for h in header])
    return buf.getvalue()


def write_atomic(path: Path, text: str):
    """Write via a temporary file in the same directory and rename over the target."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class _Writer:
    def __init__(self, out_dir: Path, exact: bool):
        self.out_dir = out_dir
        self.exact = exact
        self.files: list = []

    def table(self, name: str, header, rows):
        text = render_csv(header, rows, self.exact)
        self.raw(name, text, rows=text.count("\n") - 1)

    def raw(self, name: str, text: str, rows=None):
        write_atomic(self.out_dir / name, text)
        self.files.append({"name": name, "sha256": hashlib.sha256(text.encode()).hexdigest(),
                           "rows": rows})


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _mixture(params, exact: bool) -> MixtureModel:
    models = tuple(params["models"])
    weights = params.get("weights")
    if weights is None:
        return MixtureModel.uniform(models) if exact else MixtureModel(
            models, tuple(1.0 / len(models) for _ in models))
    return MixtureModel(models, tuple(weights))


# ------------------------------------------------------------- experiments


def _run_confirm(cfg: ExperimentConfig, out: _Writer) -> tuple[list, dict]:
    p = cfg.params
    prior = MixedDiracPrior(1, p["atom_mass"])
    header = ["n", "P_Heps", "P_Hprime_uniform", "P_Hprime_mixed", "P_H2prime_uniform",
              "P_H2prime_mixed", "xi_0_given_1n", "laplace_1_given_1n"]
    rows = list(confirmation_table(p["n_max"], p["eps"], prior))
    bad = []
    if prior.atom_mass == Fraction(1, 2):
        for row in rows:
            n = row["n"]
            expect = (Fraction(n + 1, n + 2), Fraction(1, (n + 2) ** 2))
            got = (row["P_H2prime_mixed"], row["xi_0_given_1n"])
            if got != expect:
                bad.append(f"n={n}: (P_H2prime, xi_0)={got} != {expect}")
    out.table("confirm.csv", header, rows)
    checks = [Check("mixed-prior closed forms P_H2prime=(n+1)/(n+2), xi_0=1/(n+2)^2",
                    not bad, "; ".join(bad[:5]))]
    last = rows[-1]
    return checks, {"P_H2prime_mixed_last": last["P_H2prime_mixed"], "n_max": p["n_max"]}


def _run_bounds(cfg: ExperimentConfig, out: _Writer) -> tuple[list, dict]:
    p = cfg.params
    m = _mixture(p, cfg.exact)
    truth = p["truth"]
    if p["kind"] == "deterministic":
        rep = deterministic_bound_run(m, truth, p["n"], exact=cfg.exact)
        header = ["n", "abs_1_minus_xi", "cumulative", "ln_w_alpha_inv", "satisfied"]
        rows = [{"n": t + 1, "abs_1_minus_xi": rep.terms[t], "cumulative": rep.cumulative[t],
                 "ln_w_alpha_inv": float(rep.bound), "satisfied": rep.first_violation is None
                 or t + 1 < rep.first_violation} for t in range(p["n"])]
        out.table("bounds.csv", header, rows)
        detail = "" if rep.satisfied else (
            f"sum |1-xi| = {float(rep.cumulative[rep.first_violation - 1])} > "
            f"ln(1/w) = {float(rep.bound)} at n={rep.first_violation}")
        return [Check("sum_t |1 - xi(alpha_t|alpha_<t)| <= ln(1/w_alpha)", rep.satisfied, detail)], {
            "total": rep.total, "bound": float(rep.bound)}

    method = p["method"]
    exchangeable = getattr(truth, "iid", False) and m.iid
    if method == "exact" or (method == "auto" and exchangeable):
        curve = exact_divergence_iid(truth, m, p["n"], samples=p["samples"], seed=cfg.seed,
                                     workers=p["workers"])
    else:
        curve = mc_divergence(truth, m, p["n"], samples=p["samples"], seed=cfg.seed,
                              workers=p["workers"])
    slack = 0.0 if curve.D_se is None else 3 * curve.D_se
    sat = curve.satisfied(slack)
    header = ["n", "D_n", "sum_e", "sum_h", "sum_a2", "sum_kl", "ln_w_mu_inv", "satisfied"]
    if curve.D_se is not None:
        header.insert(2, "D_n_se")
    rows = []
    for i, n in enumerate(curve.n):
        row = {"n": int(n), "D_n": float(curve.D[i]), "sum_e": float(curve.sum_e[i]),
               "sum_h": float(curve.sum_h[i]), "sum_a2": float(curve.sum_a2[i]),
               "sum_kl": float(curve.sum_k[i]),
               "ln_w_mu_inv": None if curve.bound is None else float(curve.bound),
               "satisfied": bool(sat[i])}
        if curve.D_se is not None:
            row["D_n_se"] = float(curve.D_se[i])
        rows.append(row)
    out.table("bounds.csv", header, rows)
    checks = []
    if not sat.all():
        i = int(np.argmin(sat))
        detail = (f"n={int(curve.n[i])}: sum_h={curve.sum_h[i]:.6g}, sum_e={curve.sum_e[i]:.6g}, "
                  f"2 sum_a2={2 * curve.sum_a2[i]:.6g}, D_n={curve.D[i]:.6g}, "
                  f"ln(1/w_mu)={curve.bound}")
    else:
        detail = ""
    checks.append(Check("sum_t E[s_t] <= D_n <= ln(1/w_mu) for s = e, h, 2a^2", bool(sat.all()), detail))
    return checks, {"method": curve.method, "D_n_last": float(curve.D[-1]),
                    "bound": curve.bound, "excluded": curve.excluded}


def _run_continuous(cfg: ExperimentConfig, out: _Writer) -> tuple[list, dict]:
    p = cfg.params
    rep = continuous_bound_check(p["theta0"], p["prior"], p["n_grid"], float(p["slack"]))
    out.table("continuous.csv", ["n", "D_n", "bound", "slack", "satisfied"], list(rep.rows()))
    bad = [f"n={r['n']}: D_n={r['D_n']:.6g} > {r['bound']:.6g}" for r in rep.rows() if not r["satisfied"]]
    return [Check("D_n <= ln(1/w(theta0)) + 1/2 ln(n/2pi) + 1/2 ln j(theta0) + slack",
                  not bad, "; ".join(bad))], {"slope_vs_ln_n": rep.slope, "prior": rep.prior}


def _all_strings(max_len: int):
    for length in range(max_len + 1):
        for bits in itertools.product("01", repeat=length):
            yield "".join(bits)


def _run_universal(cfg: ExperimentConfig, out: _Writer, cache_dir=None) -> tuple[list, dict]:
    p = cfg.params
    table = load_or_enumerate(p["lmax"], p["tmax"], p["max_output"], cache_dir=cache_dir)
    if p["export_programs"]:
        out.raw("programs.csv", table.to_csv(), rows=len(table.records))
    checks = []

    semimeasure_bad, kraft_bad, dominance_bad = [], [], []
    candidates = list(_all_strings(p["max_len"])) + list(p["strings"])
    for x in _all_strings(p["max_len"]):
        mx = table.approx_M(x)
        if mx > 1:
            kraft_bad.append(f"M({x!r})={mx}")
        if len(x) < p["max_len"]:
            children = table.approx_M(x + "0") + table.approx_M(x + "1")
            if children > mx:
                semimeasure_bad.append(f"M({x!r})={mx} < M({x!r}0)+M({x!r}1)={children}")
    km_rows = {r["x"]: r for r in km_bound_check(table)}
    km_bad = [f"x={x!r}: loss={float(r['loss']):.6g} > Km ln2={r['bound']:.6g}"
              for x, r in km_rows.items() if not r["ok"]]
    extra = km_bound_check(table, [x for x in candidates if x not in km_rows])
    km_rows.update({r["x"]: r for r in extra})
    km_bad += [f"x={r['x']!r}: loss={float(r['loss']):.6g} > Km ln2={r['bound']:.6g}"
               for r in extra if not r["ok"]]

    rows = []
    seen = set()
    for x in candidates:
        if x in seen:
            continue
        seen.add(x)
        mx = table.approx_M(x)
        if mx == 0:
            continue
        km = table.approx_Km(x)
        if mx < Fraction(1, 2 ** km):
            dominance_bad.append(f"M({x!r})={mx} < 2^-Km={Fraction(1, 2 ** km)}")
        pred = predict_M(table, x)
        r = km_rows.get(x)
        k = table.approx_K(x)
        rows.append({"x": x, "M_hat": mx, "Km_bits": km, "K_bits": "inf" if k == math.inf else k,
                     "M_0_given_x": pred.probs[0], "M_1_given_x": pred.probs[1],
                     "deficit": pred.deficit, "cum_loss": r["loss"] if r else None,
                     "Km_ln2": r["bound"] if r else None, "km_bound_ok": r["ok"] if r else None,
                     "lz78_bits": lz78_complexity(x)})
    out.table("strings.csv", ["x", "M_hat", "Km_bits", "K_bits", "M_0_given_x", "M_1_given_x",
                              "deficit", "cum_loss", "Km_ln2", "km_bound_ok", "lz78_bits"], rows)

    halting = table.halting_kraft_sum()
    checks += [
        Check("M(x) >= M(x0) + M(x1)", not semimeasure_bad, "; ".join(semimeasure_bad[:5])),
        Check("M(x) <= 1", not kraft_bad, "; ".join(kraft_bad[:5])),
        Check("M(x) >= 2^-Km(x)", not dominance_bad, "; ".join(dominance_bad[:5])),
        Check("sum_t (1 - M(x_t|x_<t)) <= Km(x) ln 2", not km_bad, "; ".join(km_bad[:5])),
        Check("sum over minimal halting programs 2^-l <= 1", halting <= 1, f"sum={halting}"),
    ]

    trend = []
    for n in range(1, 2 ** min(p["max_len"], 12)):
        k = table.approx_K(bin(n)[2:])
        if k != math.inf:
            trend.append({"n": n, "binary": bin(n)[2:], "K_bits": k,
                          "log2n_plus_2log2log2n": math.log2(n) + 2 * math.log2(max(math.log2(n), 1))})
    out.table("k_of_n.csv", ["n", "binary", "K_bits", "log2n_plus_2log2log2n"], trend)

    prior = rational_grid_prior(p["b_max"])
    kraft = sum(w for _, w in prior)
    out.table("grid_prior.csv", ["theta", "code_bits", "weight"],
              [{"theta": t, "code_bits": -int(math.log2(w)), "weight": w} for t, w in prior])
    run = grid_bound_run(p["b_max"], 1, p["horizon"], exact=False)
    out.table("grid_bound.csv", ["n", "abs_1_minus_xi", "cumulative", "Khat_ln2", "satisfied"],
              [{"n": t + 1, "abs_1_minus_xi": run.terms[t], "cumulative": run.cumulative[t],
                "Khat_ln2": float(run.bound), "satisfied": run.cumulative[t] <= run.bound}
               for t in range(p["horizon"])])
    checks += [
        Check("grid prior Kraft sum <= 1", kraft <= 1, f"sum={kraft}"),
        Check("grid mixture sum |1 - xi| <= K(1/1) ln 2", run.satisfied,
              "" if run.satisfied else f"cumulative {run.total} > {run.bound}"),
    ]

    summary = {"programs": table.n_programs, "valid_programs": len(table.records),
               "strings_with_mass": len(table.strings()), "halting_kraft": halting,
               "grid_kraft": kraft, "grid_cumulative": run.total, "table_sha256": table.digest()}
    if p["compare_truth"] is not None:
        xi = DirichletMixture(DirichletPrior((1, 1)))
        comp = universal_vs_continuous(p["compare_truth"], xi, table, p["compare_n"])
        out.table("universal_vs_continuous.csv", list(comp[0].keys()), comp)
    return checks, summary


def _run_invariance(cfg: ExperimentConfig, out: _Writer) -> tuple[list, dict]:
    p = cfg.params
    summary = {}
    checks = []
    for name in p["mappings"]:
        rep = invariance_report(p["b_max"], name)
        out.table(f"invariance_{rep.mapping}.csv",
                  ["theta", "prior_weight", "pushforward_weight", "ratio", "preimages"],
                  [dict(zip(["theta", "prior_weight", "pushforward_weight", "ratio", "preimages"], r))
                   for r in rep.rows])
        summary[rep.mapping] = rep.summary()
        if rep.mapping == "identity":
            checks.append(Check("identity mapping ratio == 1", all(r == 1 for r in rep.ratios)))
    return checks, summary


def _run_predict(cfg: ExperimentConfig, out: _Writer) -> tuple[list, dict]:
    p = cfg.params
    m = _mixture(p, cfg.exact)
    if p["sequence"] is not None:
        x = as_symbols(p["sequence"], m.alphabet_size)
    else:
        x = sample_sequence(p["truth"], p["n"], cfg.seed)
    d = m.alphabet_size
    header = ["t", "x_t"] + [f"xi_{a}" for a in range(d)] + ["loss", "cum_loss", "ln_xi_inv"]
    state = initial_state(m, cfg.exact)
    rows = []
    cum = 0
    log_xi = 0.0
    stopped = None
    for t, a in enumerate(x, start=1):
        if state.log_evidence(m) == -math.inf:
            stopped = t - 1  # every model is falsified; xi(x_<t) = 0
            break
        pred = state_predict(m, state)
        loss = 1 - pred[a]
        cum += loss
        log_xi += -math.log(pred[a]) if pred[a] > 0 else math.inf
        row = {"t": t, "x_t": a, "loss": loss, "cum_loss": cum, "ln_xi_inv": log_xi}
        row.update({f"xi_{b}": pred[b] for b in range(d)})
        rows.append(row)
        state = update_posterior(m, state, a)
    out.table("predict.csv", header, rows)
    bad = [f"t={r['t']}: sum loss {float(r['cum_loss']):.6g} > -ln xi {r['ln_xi_inv']:.6g}"
           for r in rows if float(r["cum_loss"]) > r["ln_xi_inv"] + 1e-12]
    summary = {"sequence": symbols_to_str(x), "zero_evidence_after": stopped}
    if stopped is None:
        summary["posterior"] = [str(w) for w in state.weights(m)]
    return [Check("sum_t (1 - xi(x_t|x_<t)) <= ln(1/xi(x))", not bad, "; ".join(bad[:5]))], summary


RUNNERS = {
    "confirm": _run_confirm,
    "bounds": _run_bounds,
    "continuous": _run_continuous,
    "universal": _run_universal,
    "invariance": _run_invariance,
    "predict": _run_predict,
}


def run_experiment(cfg: ExperimentConfig, out_dir=None, cache_dir=None, plot: bool = False) -> RunManifest:
    """Run ``cfg``, write its CSVs and ``manifest.json`` into ``out_dir``; return the manifest."""
    out_path = Path(out_dir if out_dir is not None else cfg.out)
    writer = _Writer(out_path, cfg.exact)
    started = _now()
    if cfg.name == "universal":
        checks, summary = _run_universal(cfg, writer, cache_dir)
    else:
        checks, summary = RUNNERS[cfg.name](cfg, writer)
    if plot:
        from splab.plotting import plot_outputs

        for fig in plot_outputs(cfg.name, out_path):
            writer.files.append({"name": fig, "sha256": None, "rows": None})
    budgets = {k: cfg.params[k] for k in ("lmax", "tmax", "max_output", "samples", "n", "n_max", "horizon")
               if k in cfg.params}
    manifest = RunManifest(cfg.name, cfg.digest, __version__, cfg.mode, cfg.seed, budgets,
                           started, _now(), str(out_path), writer.files, checks, summary)
    write_atomic(out_path / "manifest.json", json.dumps(manifest.to_json(), indent=2) + "\n")
    return manifest
