"""Reading and validating the analysis CSV exports.

Every export starts with one ``# key=value ...`` metadata line followed by a
header row. Reference values carried in the metadata (near-optimality
threshold, config stamp) are display inputs here, never recomputed.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class CSVContractError(ValueError):
    """An input CSV does not match the documented analysis contract."""


@dataclass(frozen=True)
class Table:
    path: Path
    metadata: dict[str, str]
    header: tuple[str, ...]
    rows: tuple[tuple[str, ...], ...]

    def column(self, name: str) -> list[str]:
        idx = self.header.index(name)
        return [row[idx] for row in self.rows]

    def floats(self, name: str) -> np.ndarray:
        return np.array([float(v) for v in self.column(name)])


def read_table(path) -> Table:
    path = Path(path)
    if not path.exists():
        raise CSVContractError(f"{path}: input CSV does not exist")
    with open(path, newline="") as fh:
        first = fh.readline()
        metadata = {}
        if first.startswith("#"):
            for pair in first[1:].split():
                key, _, value = pair.partition("=")
                metadata[key] = value
            header_line = fh.readline()
        else:
            header_line = first
        reader = csv.reader([header_line])
        header = tuple(next(reader))
        rows = tuple(tuple(row) for row in csv.reader(fh) if row)
    if not header or header == ("",):
        raise CSVContractError(f"{path}: missing header row")
    return Table(path=path, metadata=metadata, header=header, rows=rows)


def require_columns(table: Table, columns: tuple[str, ...], kind: str) -> None:
    for name in columns:
        if name not in table.header:
            raise CSVContractError(
                f"{table.path}: missing column '{name}' required by "
                f"{kind} (header has {', '.join(table.header)})")
