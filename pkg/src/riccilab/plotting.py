"""Static figures from run artifacts (Agg backend, no display needed)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .report import read_csv  # noqa: E402

__all__ = ["PlotInputError", "emit_plots", "PLOTS"]

# figure name -> CSV files it is drawn from
PLOTS = {
    "rvol.png": ("rvol.csv",),
    "residual_trend.png": ("stages.csv",),
    "lfield.png": ("lfield.csv",),
}

# fixed metadata keeps PNG bytes reproducible
_META = {"Software": None}


class PlotInputError(FileNotFoundError):
    """Artifacts needed for a figure are missing."""


def _rvol(d: Path, dest: Path):
    c = read_csv(d / "rvol.csv")
    fig, ax = plt.subplots(figsize=(6, 4))
    for i in np.unique(c["i"]):
        m = c["i"] == i
        label = "flow" if i < 0 else f"stage {int(i)}"
        ax.plot(c["tau"][m], c["V"][m], marker="o", ms=3, label=label)
    ax.axhline(1.0, color="0.6", lw=0.8, ls="--")
    ax.set_xlabel("tau")
    ax.set_ylabel("reduced volume V")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(dest, metadata=_META)
    plt.close(fig)


def _trend(d: Path, dest: Path):
    st = read_csv(d / "stages.csv")
    ids = [int(i) for i in st["i"]]
    missing = [f"residuals_{i}.csv" for i in ids if not (d / f"residuals_{i}.csv").exists()]
    if missing:
        raise PlotInputError(f"{d}: missing {', '.join(missing)}")
    names = ("soliton", "conjheat", "v", "lll1", "lll2")
    series = {k: [] for k in names}
    for i in ids:
        r = read_csv(d / f"residuals_{i}.csv")
        for k in names:
            series[k].append(np.nanmax(np.abs(r[k])))
    fig, ax = plt.subplots(figsize=(6, 4))
    for k in names:
        ax.semilogy(ids, np.maximum(series[k], 1e-300), marker="o", label=k)
    ax.set_xlabel("stage i")
    ax.set_ylabel("max residual on window")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(dest, metadata=_META)
    plt.close(fig)


def _lfield(d: Path, dest: Path):
    c = read_csv(d / "lfield.csv")
    taus = np.unique(c["tau"])
    rs = np.unique(c["r"])
    Z = np.full((taus.size, rs.size), np.nan)
    it = np.searchsorted(taus, c["tau"])
    ir = np.searchsorted(rs, c["r"])
    Z[it, ir] = c["l"]
    fig, ax = plt.subplots(figsize=(6, 4))
    mesh = ax.pcolormesh(rs, taus, Z, shading="nearest")
    fig.colorbar(mesh, ax=ax, label="l")
    ax.set_xlabel("r")
    ax.set_ylabel("tau")
    fig.tight_layout()
    fig.savefig(dest, metadata=_META)
    plt.close(fig)


_DRAW = {"rvol.png": _rvol, "residual_trend.png": _trend, "lfield.png": _lfield}


def emit_plots(directory, which=None) -> list:
    """Draw the requested figures (default: every figure) into ``directory``.

    Raises :class:`PlotInputError` naming the missing CSV files; with
    nothing present the message lists every expected file.
    """
    d = Path(directory)
    names = list(PLOTS) if which is None else list(which)
    needed = sorted({f for n in names for f in PLOTS[n]})
    missing = [f for f in needed if not (d / f).exists()]
    if missing:
        raise PlotInputError(f"{d}: missing {', '.join(missing)} "
                             f"(expected {', '.join(needed)})")
    out = []
    for n in names:
        _DRAW[n](d, d / n)
        out.append(d / n)
    return out
