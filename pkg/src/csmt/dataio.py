"""CSV ingestion for real-data analyses.

Input files are UTF-8, comma separated, with a header row and ``.`` as the
decimal mark. An empty cell is a missing value; anything else that does not
parse as a float is an error.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from .errors import ConfigError, InsufficientDataError, MissingColumnError, ParseError
from .regress import Dataset

log = logging.getLogger(__name__)


@dataclass
class Table:
    """Parsed numeric columns; missing cells are NaN."""

    columns: Dict[str, np.ndarray]
    ids: Optional[List[str]]
    n_rows: int


@dataclass
class PairData:
    mediator: str
    outcome: str
    dataset: Dataset
    n_dropped: int


def _parse(value: str, row: int, column: str) -> float:
    text = value.strip()
    if not text:
        return np.nan
    try:
        out = float(text)
    except ValueError:
        raise ParseError(row, column, value) from None
    if not np.isfinite(out):
        raise ParseError(row, column, value)
    return out


def read_table(path, columns: Sequence[str], id_column: Optional[str] = None) -> Table:
    """Read the named numeric columns of a CSV file.

    Rows are numbered from 1 starting with the first line after the header;
    parse errors report that number and the column name.
    """
    columns = list(dict.fromkeys(columns))
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise MissingColumnError(f"{path}: empty file, expected a header row") from None
        wanted = columns + ([id_column] if id_column else [])
        missing = [c for c in wanted if c not in header]
        if missing:
            raise MissingColumnError(f"{path}: missing column(s) {', '.join(map(repr, missing))}")
        pos = {c: header.index(c) for c in wanted}
        values = {c: [] for c in columns}
        ids = [] if id_column else None
        n_rows = 0
        for n_rows, record in enumerate(reader, start=1):
            if not record:
                n_rows -= 1
                continue
            for c in columns:
                cell = record[pos[c]] if pos[c] < len(record) else ""
                values[c].append(_parse(cell, n_rows, c))
            if ids is not None:
                ids.append(record[pos[id_column]] if pos[id_column] < len(record) else "")
    return Table({c: np.array(v, dtype=float) for c, v in values.items()}, ids, n_rows)


def _check_roles(exposure, mediators, outcomes, covariates):
    roles = [exposure, *mediators, *outcomes, *covariates]
    if len(set(roles)) != len(roles):
        raise ConfigError("exposure, mediator, outcome and covariate columns must be distinct")


def pair_dataset(table: Table, exposure: str, mediator: str, outcome: str, covariates: Sequence[str] = ()):
    """Dataset for one (mediator, outcome) pair after listwise deletion.

    Returns ``(dataset, n_dropped)``.
    """
    cols = [exposure, mediator, outcome, *covariates]
    block = np.column_stack([table.columns[c] for c in cols]) if table.n_rows else np.empty((0, len(cols)))
    keep = ~np.isnan(block).any(axis=1)
    dropped = int((~keep).sum())
    if dropped:
        log.info("pair (%s, %s): dropped %d row(s) with missing values", mediator, outcome, dropped)
    n = int(keep.sum())
    need = len(covariates) + 4
    if n < need:
        raise InsufficientDataError(
            f"pair ({mediator}, {outcome}): {n} complete row(s), need at least {need} for the outcome regression"
        )
    rows = block[keep]
    ids = None if table.ids is None else [i for i, k in zip(table.ids, keep) if k]
    ds = Dataset(rows[:, 0], rows[:, 1], rows[:, 2], rows[:, 3:], ids, tuple(covariates))
    return ds, dropped


def load_csv(path, exposure, mediators, outcomes, covariates=(), id_column=None) -> List[PairData]:
    """One dataset per (mediator, outcome) pair, outcomes outermost.

    ``mediators`` and ``outcomes`` may be single column names or sequences.
    """
    mediators = [mediators] if isinstance(mediators, str) else list(mediators)
    outcomes = [outcomes] if isinstance(outcomes, str) else list(outcomes)
    covariates = list(covariates)
    _check_roles(exposure, mediators, outcomes, covariates)
    table = read_table(path, [exposure, *mediators, *outcomes, *covariates], id_column)
    out = []
    for outcome in outcomes:
        for mediator in mediators:
            ds, dropped = pair_dataset(table, exposure, mediator, outcome, covariates)
            out.append(PairData(mediator, outcome, ds, dropped))
    return out


def load_dataset(path, exposure, mediator, outcome, covariates=(), id_column=None) -> Dataset:
    return load_csv(path, exposure, [mediator], [outcome], covariates, id_column)[0].dataset


def write_dataset_csv(ds: Dataset, path, names=("S", "G", "Y")) -> None:
    """Write a dataset as CSV with round-trip exact number formatting."""
    header = list(names) + list(ds.covariate_names)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(ds.n):
            w.writerow([repr(float(v)) for v in (ds.s[i], ds.g[i], ds.y[i], *ds.x[i])])
