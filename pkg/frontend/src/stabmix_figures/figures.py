"""Render the five experiment figure kinds from harness CSV files.

All figures are deterministic: fixed style, fixed ordering (rows are
re-sorted, files processed in sorted order), and constant PNG metadata, so
re-running on identical inputs produces byte-identical images.
"""

from __future__ import annotations

import glob as globlib
from dataclasses import dataclass, field

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

__all__ = [
    "FigureSpec",
    "MissingColumn",
    "EmptyData",
    "load_rows",
    "plot_convergence",
    "plot_stability",
    "plot_stages",
    "plot_spacetime",
    "plot_qorder",
    "render",
    "FIGURE_KINDS",
]

CSV_COLUMNS = ("scheme", "problem", "N", "dt", "s", "m", "eta", "eps",
               "low_prec", "error_abs", "error_rel_u", "slope",
               "norm_ratio_final", "n_high_evals", "n_low_evals", "wall_ms")

# deterministic metadata: no timestamps, no library version strings
PNG_METADATA = {"Software": "stabmix-figures"}

_STYLE = {
    "figure.figsize": (6.0, 4.5),
    "figure.dpi": 100,
    "savefig.dpi": 100,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.markersize": 5,
    "font.size": 10,
}


class MissingColumn(KeyError):
    """A required CSV column is absent from the input."""


class EmptyData(ValueError):
    """The input CSVs contain no data rows usable for the figure."""


@dataclass
class FigureSpec:
    kind: str
    csv_paths: list[str]
    out_path: str
    title: str | None = None
    required_columns: tuple = field(default=())


def load_rows(csv_paths) -> pd.DataFrame:
    """Concatenate the schema-versioned CSVs, skipping comment lines."""
    paths = sorted(csv_paths)
    if not paths:
        raise EmptyData("no input CSV files")
    frames = []
    for path in paths:
        df = pd.read_csv(path, comment="#")
        missing = [c for c in CSV_COLUMNS if c not in df.columns]
        if missing:
            raise MissingColumn(f"{path} lacks column(s) {missing}")
        frames.append(df)
    data = pd.concat(frames, ignore_index=True)
    if data.empty:
        raise EmptyData("input CSVs contain no data rows")
    return data


def _require(data: pd.DataFrame, columns) -> pd.DataFrame:
    out = data.dropna(subset=list(columns))
    if out.empty:
        raise EmptyData(f"no rows with values in {list(columns)}")
    return out


def _save(fig, out_path: str):
    fig.savefig(out_path, format="png", metadata=PNG_METADATA)
    plt.close(fig)
    return out_path


def _order_guides(ax, dts, errs, orders=(1, 2)):
    """Dashed O(dt^p) reference lines anchored at the coarsest point."""
    dts = np.asarray(dts, float)
    anchor_dt, anchor_err = dts.max(), np.max(errs)
    xs = np.array([dts.min(), dts.max()])
    for p in orders:
        ax.loglog(xs, anchor_err * (xs / anchor_dt) ** p, "k--", lw=0.8,
                  label=f"order {p}")


def plot_convergence(spec: FigureSpec) -> str:
    data = _require(load_rows(spec.csv_paths), ("dt", "error_abs"))
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        for scheme, sub in sorted(data.groupby("scheme")):
            sub = sub.sort_values("dt")
            if len(sub) == 1:
                ax.loglog(sub["dt"], sub["error_abs"], "o", label=scheme)
            else:
                ax.loglog(sub["dt"], sub["error_abs"], "o-", label=scheme)
        _order_guides(ax, data["dt"], data["error_abs"])
        ax.set_xlabel("step size")
        ax.set_ylabel("error")
        ax.set_title(spec.title or "convergence")
        ax.legend(fontsize=8)
        return _save(fig, spec.out_path)


def plot_stability(spec: FigureSpec) -> str:
    data = _require(load_rows(spec.csv_paths), ("s", "norm_ratio_final"))
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        for scheme, sub in sorted(data.groupby("scheme")):
            sub = sub.sort_values("s")
            style = "o" if len(sub) == 1 else "o-"
            ax.semilogy(sub["s"], sub["norm_ratio_final"], style, label=scheme)
        ax.axhline(1.0, color="k", ls="--", lw=0.8, label="growth threshold")
        ax.set_xlabel("stages")
        ax.set_ylabel("final / initial norm")
        ax.set_title(spec.title or "stability at the step-size limit")
        ax.legend(fontsize=8)
        return _save(fig, spec.out_path)


def plot_stages(spec: FigureSpec) -> str:
    """Rounding/discretization error ratio vs stage count; pairs each
    scheme's rows with its '<scheme>:disc' twin rows."""
    data = _require(load_rows(spec.csv_paths), ("s", "error_abs"))
    schemes = sorted(set(data["scheme"]) - {s for s in data["scheme"]
                                            if s.endswith(":disc")})
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        plotted = False
        for scheme in schemes:
            own = data[data["scheme"] == scheme].set_index("s")["error_abs"]
            disc = data[data["scheme"] == f"{scheme}:disc"] \
                .set_index("s")["error_abs"]
            common = own.index.intersection(disc.index).sort_values()
            if common.empty:
                continue
            ratio = own.loc[common] / disc.loc[common]
            style = "o" if len(common) == 1 else "o-"
            ax.semilogy(common, ratio, style, label=scheme)
            plotted = True
        if not plotted:
            raise EmptyData("no scheme has matching ':disc' rows")
        ax.set_xlabel("stages")
        ax.set_ylabel("rounding / discretization error")
        ax.set_title(spec.title or "rounding vs discretization error")
        ax.legend(fontsize=8)
        return _save(fig, spec.out_path)


def plot_spacetime(spec: FigureSpec) -> str:
    data = _require(load_rows(spec.csv_paths), ("dt", "error_abs"))
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        for scheme, sub in sorted(data.groupby("scheme")):
            sub = sub.sort_values("dt")
            style = "o" if len(sub) == 1 else "o-"
            ax.loglog(sub["dt"], sub["error_abs"], style, label=scheme)
        _order_guides(ax, data["dt"], data["error_abs"])
        ax.set_xlabel("step size (with mesh refined jointly)")
        ax.set_ylabel("error vs steady profile")
        ax.set_title(spec.title or "coupled space-time refinement")
        ax.legend(fontsize=8)
        return _save(fig, spec.out_path)


def plot_qorder(spec: FigureSpec) -> str:
    data = _require(load_rows(spec.csv_paths), ("dt", "error_abs"))
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        for scheme, sub in sorted(data.groupby("scheme")):
            sub = sub.sort_values("dt")
            style = "o" if len(sub) == 1 else "o-"
            ax.loglog(sub["dt"], sub["error_abs"], style, label=scheme)
        _order_guides(ax, data["dt"], data["error_abs"], orders=(1, 2, 3, 4))
        ax.set_xlabel("step size")
        ax.set_ylabel("error")
        ax.set_title(spec.title or "high-precision evaluation count study")
        ax.legend(fontsize=8)
        return _save(fig, spec.out_path)


FIGURE_KINDS = {
    "convergence": plot_convergence,
    "stability": plot_stability,
    "stages": plot_stages,
    "spacetime": plot_spacetime,
    "qorder": plot_qorder,
}


def render(kind: str, csv_glob: str, out_path: str,
           title: str | None = None) -> str:
    try:
        plotter = FIGURE_KINDS[kind]
    except KeyError:
        raise ValueError(f"unknown figure kind {kind!r}; "
                         f"known: {sorted(FIGURE_KINDS)}") from None
    paths = globlib.glob(csv_glob)
    spec = FigureSpec(kind=kind, csv_paths=paths, out_path=out_path,
                      title=title)
    return plotter(spec)
