"""Batch figure generation from the traffic laboratory's CSV artifacts."""

from .recipes import FigureRecipe, InputSeries, RecipeError, load_recipe
from .render import read_table, render

__version__ = "0.1.0"
