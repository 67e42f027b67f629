"""Deterministic tabular results and CSV serialization.

CSV output is byte-reproducible: UTF-8, header row, '.' decimal separator,
repr-exact floats, rows in insertion order (callers insert in a fixed order).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

from .errors import ValidationError


def format_number(v):
    if isinstance(v, float):
        return repr(float(v))   # plain float repr, also for numpy scalars
    return str(v)


@dataclass
class ResultTable:
    """Ordered rows of named numeric columns."""

    columns: tuple
    rows: list = field(default_factory=list)

    def add_row(self, **kwargs):
        if set(kwargs) != set(self.columns):
            raise ValidationError(
                f"row keys {sorted(kwargs)} do not match columns {list(self.columns)}"
            )
        self.rows.append(tuple(kwargs[c] for c in self.columns))

    def column(self, name):
        idx = self.columns.index(name)
        return [row[idx] for row in self.rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow([format_number(v) for v in row])
        return buf.getvalue()

    def write_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="") as f:
            f.write(self.to_csv())
