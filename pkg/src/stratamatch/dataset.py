"""Loading, validation, and min-max normalization of observational datasets."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import (
    EmptyInput,
    NamedColumnAbsent,
    ParseFailure,
    PositivityViolation,
)

logger = logging.getLogger(__name__)


def _frozen(a: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(a)
    if out is a:
        out = a.copy()
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Dataset:
    """A treatment indicator vector, feature matrix, and outcome vector.

    Instances are immutable: the arrays are marked read-only at construction
    and every operation returns a new object. ``row_ids`` tracks the original
    row index of each unit so that subsets keep a stable identity.

    ``scaling`` holds the per-feature ``(min, max)`` pairs recorded by
    :func:`normalize_min_max`, or ``None`` for raw data.
    """

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    feature_names: tuple[str, ...]
    scaling: tuple[tuple[float, float], ...] | None = None
    row_ids: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    @property
    def n_treated(self) -> int:
        return int(np.sum(self.t == 1))

    @property
    def n_control(self) -> int:
        return int(np.sum(self.t == 0))

    def rows(self) -> np.ndarray:
        if self.row_ids is not None:
            return self.row_ids
        return np.arange(self.n)


def make_dataset(
    t: np.ndarray,
    x: np.ndarray,
    y: np.ndarray,
    feature_names: tuple[str, ...] | list[str],
    scaling: tuple[tuple[float, float], ...] | None = None,
    row_ids: np.ndarray | None = None,
) -> Dataset:
    """Validate raw arrays and assemble an immutable :class:`Dataset`.

    Checks shape agreement, finiteness, a strictly binary treatment vector,
    and the presence of at least one treated and one control unit.

    Raises:
        EmptyInput: if there are no rows or no feature columns.
        ParseFailure: if any entry is missing or non-finite.
        PositivityViolation: if either treatment group is empty.
    """
    t = np.asarray(t, dtype=np.int64)
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2:
        raise EmptyInput("feature matrix must be two-dimensional")
    n, p = x.shape
    if n == 0 or p == 0:
        raise EmptyInput("dataset has no rows or no feature columns")
    if t.shape != (n,) or y.shape != (n,):
        raise EmptyInput("treatment, outcome, and feature row counts disagree")
    if len(feature_names) != p:
        raise EmptyInput("feature name count does not match feature columns")
    if not np.all(np.isfinite(x)):
        i, j = np.argwhere(~np.isfinite(x))[0]
        raise ParseFailure(int(i), str(feature_names[j]), "non-finite")
    if not np.all(np.isfinite(y)):
        i = int(np.argwhere(~np.isfinite(y))[0])
        raise ParseFailure(i, "outcome", "non-finite")
    if not np.all((t == 0) | (t == 1)):
        raise PositivityViolation("treatment vector contains values other than 0 and 1")
    if not np.any(t == 1) or not np.any(t == 0):
        raise PositivityViolation("dataset needs at least one treated and one control unit")
    if row_ids is None:
        row_ids = np.arange(n)
    return Dataset(
        t=_frozen(t),
        x=_frozen(x),
        y=_frozen(y),
        feature_names=tuple(feature_names),
        scaling=scaling,
        row_ids=_frozen(np.asarray(row_ids, dtype=np.int64)),
    )


def _read_table(path: str | Path, delimiter: str) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyInput(f"{path}: file is empty") from None
        header = [h.strip() for h in header]
        rows = [row for row in reader if row and any(cell.strip() for cell in row)]
    if not rows:
        raise EmptyInput(f"{path}: no data rows")
    return header, rows


def _is_number(cell: str) -> bool:
    try:
        v = float(cell)
    except ValueError:
        return False
    return math.isfinite(v)


def encode_categoricals(
    header: list[str],
    rows: list[list[str]],
    skip: tuple[str, ...] = (),
) -> tuple[list[str], list[list[str]]]:
    """Expand non-numeric columns into one 0/1 indicator column per level.

    Columns named in ``skip`` are left untouched. Indicator columns are named
    ``"<col>=<level>"`` with levels in sorted order; no level is dropped.
    """
    cat_cols = []
    for j, name in enumerate(header):
        if name in skip:
            continue
        col = [row[j].strip() if j < len(row) else "" for row in rows]
        if any(not _is_number(c) for c in col):
            cat_cols.append(j)
    if not cat_cols:
        return list(header), [list(r) for r in rows]

    new_header: list[str] = []
    plan: list[tuple[int, list[str] | None]] = []
    for j, name in enumerate(header):
        if j in cat_cols:
            levels = sorted({row[j].strip() for row in rows})
            plan.append((j, levels))
            new_header.extend(f"{name}={lvl}" for lvl in levels)
        else:
            plan.append((j, None))
            new_header.append(name)
    new_rows = []
    for row in rows:
        out: list[str] = []
        for j, levels in plan:
            if levels is None:
                out.append(row[j] if j < len(row) else "")
            else:
                val = row[j].strip()
                out.extend("1" if val == lvl else "0" for lvl in levels)
        new_rows.append(out)
    logger.info("one-hot encoded %d categorical column(s)", len(cat_cols))
    return new_header, new_rows


def load_dataset(
    path: str | Path,
    treatment_col: str,
    outcome_col: str,
    delimiter: str = ",",
    encode: bool = False,
) -> Dataset:
    """Load a delimited table with a header row into a :class:`Dataset`.

    Every column other than the treatment and outcome columns becomes a
    feature. Cells must parse as finite numbers; missing values are rejected
    rather than imputed. With ``encode=True``, non-numeric feature columns are
    first expanded into one indicator column per level.

    Args:
        path: file to read.
        treatment_col: name of the 0/1 treatment column.
        outcome_col: name of the numeric outcome column.
        delimiter: cell separator, comma by default (pass "\\t" for tab).
        encode: one-hot encode non-numeric feature columns before validation.

    Raises:
        NamedColumnAbsent: treatment or outcome column missing.
        ParseFailure: a cell does not parse as a finite number.
        PositivityViolation: either treatment group is empty.
    """
    header, rows = _read_table(path, delimiter)
    for required in (treatment_col, outcome_col):
        if required not in header:
            raise NamedColumnAbsent(required, tuple(header))
    if encode:
        header, rows = encode_categoricals(header, rows, skip=(treatment_col, outcome_col))

    t_idx = header.index(treatment_col)
    y_idx = header.index(outcome_col)
    feat_idx = [j for j in range(len(header)) if j not in (t_idx, y_idx)]
    feature_names = tuple(header[j] for j in feat_idx)
    if not feature_names:
        raise EmptyInput("input has no feature columns")

    n = len(rows)
    t = np.empty(n, dtype=np.int64)
    y = np.empty(n, dtype=np.float64)
    x = np.empty((n, len(feat_idx)), dtype=np.float64)
    for i, row in enumerate(rows):
        line_no = i + 2  # 1-based, after the header line
        if len(row) != len(header):
            raise ParseFailure(line_no, "<row>", f"{len(row)} cells, expected {len(header)}")
        for k, j in enumerate(feat_idx):
            cell = row[j].strip()
            if not _is_number(cell):
                raise ParseFailure(line_no, header[j], cell)
            x[i, k] = float(cell)
        cell = row[y_idx].strip()
        if not _is_number(cell):
            raise ParseFailure(line_no, outcome_col, cell)
        y[i] = float(cell)
        cell = row[t_idx].strip()
        if not _is_number(cell) or float(cell) not in (0.0, 1.0):
            raise ParseFailure(line_no, treatment_col, cell)
        t[i] = int(float(cell))

    d = make_dataset(t, x, y, feature_names)
    logger.info(
        "loaded %s: n=%d (treated=%d, control=%d), p=%d",
        path, d.n, d.n_treated, d.n_control, d.p,
    )
    return d


def normalize_min_max(d: Dataset) -> Dataset:
    """Rescale every feature to [0, 1] using the min and max over all units.

    Constant columns map to all zeros. The outcome is left untouched. The
    per-feature ``(min, max)`` pairs are recorded on the result so
    :func:`denormalize_min_max` can invert the transform. A dataset that
    already carries scaling passes through unchanged.
    """
    if d.scaling is not None:
        return d
    lo = d.x.min(axis=0)
    hi = d.x.max(axis=0)
    span = hi - lo
    out = np.zeros_like(d.x)
    nonconst = span > 0
    out[:, nonconst] = (d.x[:, nonconst] - lo[nonconst]) / span[nonconst]
    scaling = tuple((float(a), float(b)) for a, b in zip(lo, hi))
    return replace(d, x=_frozen(out), scaling=scaling)


def denormalize_min_max(d: Dataset) -> Dataset:
    """Invert :func:`normalize_min_max` using the recorded scaling pairs."""
    if d.scaling is None:
        raise EmptyInput("dataset carries no scaling metadata")
    lo = np.array([a for a, _ in d.scaling])
    hi = np.array([b for _, b in d.scaling])
    out = d.x * (hi - lo) + lo
    const = hi == lo
    out[:, const] = lo[const]
    return replace(d, x=_frozen(out), scaling=None)


def split_by_treatment(d: Dataset) -> tuple[Dataset, Dataset]:
    """Partition into (control, treated) subsets sharing the parent's scaling.

    The two parts keep the parent's row identities, and their sizes always
    sum to ``d.n``.
    """
    cmask = d.t == 0
    tmask = ~cmask
    rows = d.rows()

    def _take(mask: np.ndarray) -> Dataset:
        return Dataset(
            t=_frozen(d.t[mask]),
            x=_frozen(d.x[mask]),
            y=_frozen(d.y[mask]),
            feature_names=d.feature_names,
            scaling=d.scaling,
            row_ids=_frozen(rows[mask]),
        )

    return _take(cmask), _take(tmask)
