"""Blinded two-arm trial datasets, input validation and the CSV schema.

CSV schema: header ``id,a,s,b,y,l`` where the ``s`` and ``l`` columns are
present only when the data carry them.  A stacked multi-replicate file has
an additional leading ``replicate`` column.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import DataSchemaError, NotAssessableError

_REQUIRED = ("a", "b", "y")
_OPTIONAL = ("s", "l")


def _as_binary(values, name):
    arr = np.asarray(values)
    if arr.ndim != 1:
        raise DataSchemaError(f"column {name!r} must be one-dimensional")
    if arr.dtype == bool:
        return arr.astype(np.int8)
    try:
        as_float = arr.astype(float)
    except (TypeError, ValueError):
        raise DataSchemaError(f"column {name!r} is not numeric") from None
    bad = np.flatnonzero((as_float != 0) & (as_float != 1))
    if bad.size:
        i = int(bad[0])
        raise DataSchemaError(f"column {name!r}, row {i}: value {arr[i]!r} is not 0 or 1")
    return as_float.astype(np.int8)


def _as_category(values, name):
    arr = np.asarray(values)
    try:
        as_float = arr.astype(float)
    except (TypeError, ValueError):
        raise DataSchemaError(f"column {name!r} is not numeric") from None
    bad = np.flatnonzero((as_float < 0) | (as_float != np.floor(as_float)))
    if bad.size:
        i = int(bad[0])
        raise DataSchemaError(
            f"column {name!r}, row {i}: value {arr[i]!r} is not a non-negative integer code"
        )
    return as_float.astype(np.int64)


def _lock(arr):
    if arr is not None:
        arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class TrialDataset:
    """Records from a blinded two-arm trial; every record has M = -1.

    Columns are read-only numpy arrays.  ``s`` and ``l`` are ``None`` when the
    trial did not record them.
    """

    a: np.ndarray
    b: np.ndarray
    y: np.ndarray
    s: np.ndarray | None = None
    l: np.ndarray | None = None
    master_seed: int | None = None
    replicate: int | None = None
    scm_fingerprint: str | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        a = _as_binary(self.a, "a")
        n = a.shape[0]
        cols = {"a": a, "b": _as_binary(self.b, "b"), "y": _as_binary(self.y, "y")}
        if self.s is not None:
            cols["s"] = _as_binary(self.s, "s")
        if self.l is not None:
            cols["l"] = _as_category(self.l, "l")
        for name, col in cols.items():
            if col.shape[0] != n:
                raise DataSchemaError(
                    f"column {name!r} has {col.shape[0]} rows, expected {n}"
                )
            object.__setattr__(self, name, _lock(col))

    @property
    def n(self):
        return int(self.a.shape[0])

    @property
    def n0(self):
        return int(self.n - self.a.sum())

    @property
    def n1(self):
        return int(self.a.sum())

    @property
    def has_s(self):
        return self.s is not None

    @property
    def has_l(self):
        return self.l is not None

    def __len__(self):
        return self.n

    def s_or_zero(self):
        return self.s if self.s is not None else np.zeros(self.n, dtype=np.int8)

    def l_codes(self):
        """Dense covariate codes 0..k-1 and the number of observed levels."""
        if self.l is None:
            return np.zeros(self.n, dtype=np.int64), 1
        levels, codes = np.unique(self.l, return_inverse=True)
        return codes, len(levels)

    def require_s(self):
        if self.s is None:
            raise NotAssessableError(
                "dataset has no side-effect column 's'; S-adjusted estimands are not assessable"
            )

    def take(self, idx):
        """Subset (or resample) records by integer index."""
        return replace(
            self,
            a=self.a[idx],
            b=self.b[idx],
            y=self.y[idx],
            s=None if self.s is None else self.s[idx],
            l=None if self.l is None else self.l[idx],
        )

    def columns(self):
        cols = ["id", "a"]
        if self.has_s:
            cols.append("s")
        cols += ["b", "y"]
        if self.has_l:
            cols.append("l")
        return cols

    def to_frame(self):
        import pandas as pd

        data = {"id": np.arange(self.n)}
        for name in self.columns()[1:]:
            data[name] = getattr(self, name)
        return pd.DataFrame(data)

    def to_csv(self, path_or_buf=None, replicate_column=None):
        """Write the CSV schema; returns the text when ``path_or_buf`` is None."""
        buf = io.StringIO()
        cols = self.columns()
        header = (["replicate"] if replicate_column is not None else []) + cols
        buf.write(",".join(header) + "\n")
        data = [np.arange(self.n)] + [getattr(self, c) for c in cols[1:]]
        prefix = "" if replicate_column is None else f"{int(replicate_column)},"
        for row in zip(*data):
            buf.write(prefix + ",".join(str(int(v)) for v in row) + "\n")
        text = buf.getvalue()
        if path_or_buf is None:
            return text
        if hasattr(path_or_buf, "write"):
            path_or_buf.write(text)
        else:
            with open(path_or_buf, "w", newline="") as fh:
                fh.write(text)
        return None


def check_trial_data(X, y=None):
    """Coerce estimator input into a :class:`TrialDataset`.

    ``X`` may be a TrialDataset, a pandas DataFrame or a mapping of columns
    with at least ``a`` and ``b`` (and ``y`` unless passed separately).
    """
    if isinstance(X, TrialDataset):
        if y is not None:
            return replace(X, y=y)
        return X
    if hasattr(X, "columns") and hasattr(X, "to_numpy"):
        cols = {str(c): X[c].to_numpy() for c in X.columns}
    elif isinstance(X, dict):
        cols = {k: np.asarray(v) for k, v in X.items()}
    else:
        raise DataSchemaError(
            f"expected a TrialDataset, DataFrame or column mapping, got {type(X).__name__}"
        )
    if y is not None:
        cols["y"] = np.asarray(y)
    missing = [c for c in _REQUIRED if c not in cols]
    if missing:
        raise DataSchemaError(f"missing required column(s): {', '.join(missing)}")
    if len(cols["a"]) == 0:
        raise DataSchemaError("dataset has no records")
    return TrialDataset(
        a=cols["a"], b=cols["b"], y=cols["y"], s=cols.get("s"), l=cols.get("l")
    )


def _parse_table(text, source):
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise DataSchemaError(f"{source}: empty file, expected a header row") from None
    header = [h.strip() for h in header]
    allowed = {"replicate", "id", *_REQUIRED, *_OPTIONAL}
    unknown = [h for h in header if h not in allowed]
    if unknown:
        raise DataSchemaError(f"{source}: unknown column(s) {unknown}")
    if len(set(header)) != len(header):
        raise DataSchemaError(f"{source}: duplicated column names in header")
    missing = [c for c in ("id", *_REQUIRED) if c not in header]
    if missing:
        raise DataSchemaError(f"{source}: missing required column(s) {missing}")
    rows = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise DataSchemaError(
                f"{source}, line {lineno}: expected {len(header)} fields, got {len(row)}"
            )
        parsed = []
        for name, cell in zip(header, row):
            try:
                parsed.append(int(cell))
            except ValueError:
                raise DataSchemaError(
                    f"{source}, line {lineno}, column {name!r}: {cell!r} is not an integer"
                ) from None
        rows.append(parsed)
    if not rows:
        raise DataSchemaError(f"{source}: no data rows")
    table = np.array(rows, dtype=np.int64)
    return {name: table[:, j] for j, name in enumerate(header)}


def read_csv(path_or_buf):
    """Read a single-replicate dataset CSV."""
    datasets = read_stacked_csv(path_or_buf)
    if len(datasets) != 1:
        raise DataSchemaError(
            f"file holds {len(datasets)} replicates; estimate one replicate at a time"
        )
    return next(iter(datasets.values()))


def read_stacked_csv(path_or_buf):
    """Read a dataset CSV, returning ``{replicate: TrialDataset}``."""
    if hasattr(path_or_buf, "read"):
        text, source = path_or_buf.read(), "<stream>"
    else:
        with open(path_or_buf, newline="") as fh:
            text = fh.read()
        source = str(path_or_buf)
    cols = _parse_table(text, source)
    reps = cols.pop("replicate", None)
    cols.pop("id")
    out = {}
    keys = [None] if reps is None else list(dict.fromkeys(reps.tolist()))
    for rep in keys:
        mask = slice(None) if rep is None else reps == rep
        try:
            ds = TrialDataset(
                a=cols["a"][mask],
                b=cols["b"][mask],
                y=cols["y"][mask],
                s=cols["s"][mask] if "s" in cols else None,
                l=cols["l"][mask] if "l" in cols else None,
                replicate=rep,
            )
        except DataSchemaError as err:
            raise DataSchemaError(f"{source}: {err}") from None
        if ds.n0 == 0 or ds.n1 == 0:
            raise DataSchemaError(f"{source}: both arms need at least one record")
        out[rep] = ds
    return out
