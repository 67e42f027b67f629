"""Figure recipes: what to read, how to draw it, where to write it.

A recipe is a small JSON file checked into the repository.  Input CSV paths
are resolved against a data directory supplied at render time, so the same
recipe works on any output directory produced by the data-generation CLI.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

KINDS = ("profile-overlay", "trajectory-band", "convergence-loglog",
         "crash-snapshot")

# columns each kind expects in its input CSVs
REQUIRED_COLUMNS = {
    "profile-overlay": ("x", "P"),
    "trajectory-band": ("t", "i", "z", "rho"),
    "convergence-loglog": ("sup_error",),
    "crash-snapshot": ("t", "i", "z", "rho"),
}


class RecipeError(Exception):
    """Invalid recipe or input data; carries a list of problems."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass
class InputSeries:
    path: Path
    label: str = None


@dataclass
class FigureRecipe:
    kind: str
    inputs: list
    title: str = None
    xlabel: str = "x"
    ylabel: str = "density"
    xlim: tuple = None
    ylim: tuple = None
    x_column: str = None     # convergence-loglog abscissa, e.g. "ell" or "h"
    dpi: int = 100

    def validate_inputs(self):
        problems = [f"missing input file: {s.path}"
                    for s in self.inputs if not s.path.exists()]
        if problems:
            raise RecipeError(problems)


def _pair(value, key, problems):
    if value is None:
        return None
    try:
        a, b = (float(v) for v in value)
        return (a, b)
    except (TypeError, ValueError):
        problems.append(f"{key}: expected a [min, max] pair, got {value!r}")
        return None


def load_recipe(path, data_dir=None) -> FigureRecipe:
    """Parse and validate a recipe file.

    Relative input paths resolve against data_dir when given, else against
    the recipe's own directory.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise RecipeError(str(e))
    except json.JSONDecodeError as e:
        raise RecipeError(f"{path}: line {e.lineno} column {e.colno}: {e.msg}")

    problems = []
    kind = raw.get("kind")
    if kind not in KINDS:
        problems.append(f"kind: must be one of {', '.join(KINDS)}; got {kind!r}")
    raw_inputs = raw.get("inputs")
    if not isinstance(raw_inputs, list) or not raw_inputs:
        problems.append("inputs: a non-empty list of CSV entries is required")
        raw_inputs = []

    base = Path(data_dir) if data_dir is not None else path.parent
    inputs = []
    for k, entry in enumerate(raw_inputs):
        if isinstance(entry, str):
            entry = {"path": entry}
        if not isinstance(entry, dict) or "path" not in entry:
            problems.append(f"inputs/{k}: needs a \"path\"")
            continue
        p = Path(entry["path"])
        if not p.is_absolute():
            p = base / p
        inputs.append(InputSeries(path=p, label=entry.get("label")))

    xlim = _pair(raw.get("xlim"), "xlim", problems)
    ylim = _pair(raw.get("ylim"), "ylim", problems)
    if problems:
        raise RecipeError(problems)
    return FigureRecipe(
        kind=kind,
        inputs=inputs,
        title=raw.get("title"),
        xlabel=raw.get("xlabel", "x"),
        ylabel=raw.get("ylabel", "density"),
        xlim=xlim,
        ylim=ylim,
        x_column=raw.get("x_column"),
        dpi=int(raw.get("dpi", 100)),
    )
