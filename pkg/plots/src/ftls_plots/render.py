"""Deterministic matplotlib rendering for the four figure kinds.

Same CSVs in, pixel-identical raster out: fixed style, fixed colors, no
timestamps in the image metadata.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .recipes import REQUIRED_COLUMNS, FigureRecipe, RecipeError

# overlay palette; trajectory bands are green with red terminal markers to
# match the source figures
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
BAND_GREEN = "#2ca02c"
MARKER_RED = "#d62728"

STYLE = {
    "figure.figsize": (6.4, 4.0),
    "font.size": 10,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "svg.hashsalt": "ftls-plots",
}


def read_table(path, kind):
    """CSV to a structured array, checking the kind's required columns."""
    data = np.genfromtxt(path, delimiter=",", names=True)
    names = data.dtype.names or ()
    for col in REQUIRED_COLUMNS[kind]:
        if col not in names:
            raise RecipeError(f"{path}: missing column {col!r} "
                              f"(found: {', '.join(names) or 'none'})")
    return np.atleast_1d(data)


def _per_car(data):
    for i in np.unique(data["i"]):
        yield data[data["i"] == i]


def _draw_profile_overlay(ax, recipe):
    for k, series in enumerate(recipe.inputs):
        data = read_table(series.path, recipe.kind)
        ax.plot(data["x"], data["P"], color=PALETTE[k % len(PALETTE)],
                linewidth=1.2, label=series.label)


def _draw_trajectory_band(ax, recipe):
    for series in recipe.inputs:
        data = read_table(series.path, recipe.kind)
        for car in _per_car(data):
            order = np.argsort(car["t"])
            ax.plot(car["z"][order], car["rho"][order], color=BAND_GREEN,
                    linewidth=0.5, alpha=0.7)
        t_end = data["t"].max()
        final = data[data["t"] == t_end]
        ax.plot(final["z"], final["rho"], ".", color=MARKER_RED,
                markersize=3, label=series.label)


def _draw_convergence(ax, recipe):
    for k, series in enumerate(recipe.inputs):
        data = read_table(series.path, recipe.kind)
        names = [n for n in data.dtype.names if n != "sup_error"]
        x_col = recipe.x_column or (names[0] if names else None)
        if x_col not in (data.dtype.names or ()):
            raise RecipeError(f"{series.path}: missing column {x_col!r} "
                              f"for the log-log abscissa")
        ax.loglog(data[x_col], data["sup_error"], "o-",
                  color=PALETTE[k % len(PALETTE)], label=series.label)
        ax.set_xlabel(x_col)


def _draw_crash_snapshot(ax, recipe):
    for series in recipe.inputs:
        data = read_table(series.path, recipe.kind)
        t_end = data["t"].max()
        final = data[data["t"] == t_end]
        order = np.argsort(final["z"])
        z, rho = final["z"][order], final["rho"][order]
        ax.plot(z, rho, "-", color=BAND_GREEN, linewidth=0.8,
                label=series.label)
        over = rho > 1.0
        if over.any():
            ax.plot(z[over], rho[over], ".", color=MARKER_RED, markersize=5)
    ax.axhline(1.0, color="black", linewidth=0.8, linestyle="--")


DRAWERS = {
    "profile-overlay": _draw_profile_overlay,
    "trajectory-band": _draw_trajectory_band,
    "convergence-loglog": _draw_convergence,
    "crash-snapshot": _draw_crash_snapshot,
}


def render(recipe: FigureRecipe, out_path) -> None:
    """Draw one figure and write it to out_path."""
    recipe.validate_inputs()
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        try:
            DRAWERS[recipe.kind](ax, recipe)
            if recipe.kind != "convergence-loglog":
                ax.set_xlabel(recipe.xlabel)
            ax.set_ylabel(recipe.ylabel)
            if recipe.title:
                ax.set_title(recipe.title)
            if recipe.xlim:
                ax.set_xlim(recipe.xlim)
            if recipe.ylim:
                ax.set_ylim(recipe.ylim)
            if any(s.label for s in recipe.inputs):
                ax.legend(loc="best")
            fig.savefig(out_path, dpi=recipe.dpi,
                        metadata={"Software": "ftls-plots"})
        finally:
            plt.close(fig)
