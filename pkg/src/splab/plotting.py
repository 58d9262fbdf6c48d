"""Figures rendered from experiment CSVs (never from in-memory state)."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def _read(path: Path) -> dict[str, list[str]]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return {k: [r[k] for r in rows] for k in (rows[0].keys() if rows else [])}


def _num(values) -> list[float]:
    out = []
    for v in values:
        if v in ("", "inf"):
            out.append(float("nan") if v == "" else float("inf"))
        elif "/" in v:
            a, b = v.split("/")
            out.append(int(a) / int(b))
        else:
            out.append(float(v))
    return out


def _save(fig, path: Path) -> str:
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path.name


def plot_confirm(out_dir: Path) -> list[str]:
    data = _read(out_dir / "confirm.csv")
    n = _num(data["n"])
    fig, ax = plt.subplots(figsize=(6, 4))
    for col, label in [("P_Heps", "P[H_eps | 1^n], uniform"),
                       ("P_H2prime_mixed", "P[H'' | 1^n], mixed prior"),
                       ("P_H2prime_uniform", "P[H'' | 1^n], uniform")]:
        ax.plot(n, _num(data[col]), label=label)
    ax.set_xscale("symlog")
    ax.set_xlabel("n (ones observed)")
    ax.set_ylabel("posterior probability")
    ax.legend()
    return [_save(fig, out_dir / "confirm.png")]


def plot_bounds(out_dir: Path) -> list[str]:
    data = _read(out_dir / "bounds.csv")
    n = _num(data["n"])
    fig, ax = plt.subplots(figsize=(6, 4))
    if "D_n" in data:
        for col in ("D_n", "sum_h", "sum_e", "sum_kl"):
            ax.plot(n, _num(data[col]), label=col)
        bound = _num(data["ln_w_mu_inv"])
    else:
        ax.plot(n, _num(data["cumulative"]), label="sum |1 - xi|")
        bound = _num(data["ln_w_alpha_inv"])
    ax.plot(n, bound, "k--", label="ln 1/w")
    ax.set_xlabel("n")
    ax.legend()
    return [_save(fig, out_dir / "bounds.png")]


def plot_continuous(out_dir: Path) -> list[str]:
    data = _read(out_dir / "continuous.csv")
    n = _num(data["n"])
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(n, _num(data["D_n"]), "o-", label="D_n")
    ax.plot(n, _num(data["bound"]), "k--", label="bound")
    ax.set_xscale("log")
    ax.set_xlabel("n")
    ax.legend()
    return [_save(fig, out_dir / "continuous.png")]


def plot_universal(out_dir: Path) -> list[str]:
    files = []
    data = _read(out_dir / "grid_bound.csv")
    fig, ax = plt.subplots(figsize=(6, 4))
    n = _num(data["n"])
    ax.plot(n, _num(data["cumulative"]), label="sum |1 - xi|")
    ax.plot(n, _num(data["Khat_ln2"]), "k--", label="K(1) ln 2")
    ax.set_xscale("log")
    ax.set_xlabel("n")
    ax.legend()
    files.append(_save(fig, out_dir / "grid_bound.png"))

    data = _read(out_dir / "strings.csv")
    ones = [(len(x), p) for x, p in zip(data["x"], _num(data["M_1_given_x"])) if set(x) <= {"1"}]
    if ones:
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot([a for a, _ in ones], [b for _, b in ones], "o-")
        ax.set_xlabel("n")
        ax.set_ylabel("M(1 | 1^n)")
        files.append(_save(fig, out_dir / "m_on_ones.png"))
    return files


def plot_invariance(out_dir: Path) -> list[str]:
    files = []
    for path in sorted(out_dir.glob("invariance_*.csv")):
        data = _read(path)
        if not data:
            continue
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.semilogy(_num(data["theta"]), _num(data["ratio"]), "o", ms=3)
        ax.set_xlabel("theta")
        ax.set_ylabel("pushforward / prior")
        files.append(_save(fig, path.with_suffix(".png")))
    return files


def plot_predict(out_dir: Path) -> list[str]:
    data = _read(out_dir / "predict.csv")
    t = _num(data["t"])
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(t, _num(data["cum_loss"]), label="sum (1 - xi(x_t|x_<t))")
    ax.plot(t, _num(data["ln_xi_inv"]), label="ln 1/xi(x_1:t)")
    ax.set_xlabel("t")
    ax.legend()
    return [_save(fig, out_dir / "predict.png")]


PLOTTERS = {
    "confirm": plot_confirm,
    "bounds": plot_bounds,
    "continuous": plot_continuous,
    "universal": plot_universal,
    "invariance": plot_invariance,
    "predict": plot_predict,
}


def plot_outputs(experiment: str, out_dir) -> list[str]:
    """Render the figures for ``experiment`` from the CSVs in ``out_dir``; returns file names."""
    return PLOTTERS[experiment](Path(out_dir))
