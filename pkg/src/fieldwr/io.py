"""Tables of probe traces and their CSV form."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np


def format_value(v):
    return f"{v:.12g}"


@dataclass
class Table:
    columns: list
    data: np.ndarray

    def column(self, name):
        return self.data[:, self.columns.index(name)]

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.data:
            writer.writerow([format_value(v) for v in row])
        return buf.getvalue()

    def write(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())


def read_csv(text):
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise ValueError("empty CSV")
    columns = rows[0]
    data = np.array([[float(v) for v in row] for row in rows[1:]], dtype=float).reshape(-1, len(columns))
    return Table(columns, data)


def read_csv_file(path):
    with open(path) as fh:
        return read_csv(fh.read())
