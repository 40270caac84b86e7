"""Dataset representation, CSV ingestion, and subset drawing."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError

# Cell contents treated as missing (case-insensitive, after stripping).
_NA_TOKENS = frozenset({"", "na", "nan", "null"})


@dataclass(frozen=True)
class ObservationTable:
    """Immutable (outcome, treatment, covariates) table.

    ``y`` is the observed outcome, ``w`` the 0/1 treatment indicator and
    ``x`` the n-by-p confounder matrix.  Row order is load order and all
    downstream determinism is defined relative to it.  Arrays are frozen
    after validation so tables can be shared across worker threads.
    """

    y: np.ndarray
    w: np.ndarray
    x: np.ndarray
    covariate_names: tuple[str, ...] = ()
    dropped_rows: int = 0

    def __post_init__(self):
        y = np.ascontiguousarray(self.y, dtype=np.float64)
        w = np.ascontiguousarray(self.w, dtype=np.int64)
        x = np.ascontiguousarray(self.x, dtype=np.float64)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        if y.ndim != 1 or w.ndim != 1 or x.ndim != 2:
            raise DataError("y and w must be vectors and x a matrix")
        n = y.shape[0]
        if w.shape[0] != n or x.shape[0] != n:
            raise DataError(
                f"length mismatch: y={n}, w={w.shape[0]}, x rows={x.shape[0]}"
            )
        if n == 0:
            raise DataError("empty table")
        if not np.isin(w, (0, 1)).all():
            bad = w[~np.isin(w, (0, 1))][0]
            raise DataError(f"non-binary treatment value {bad!r}")
        if not np.isfinite(y).all() or not np.isfinite(x).all():
            raise DataError("non-finite outcome or covariate value")
        names = tuple(self.covariate_names) or tuple(
            f"x{j + 1}" for j in range(x.shape[1])
        )
        if len(names) != x.shape[1]:
            raise DataError("covariate_names length does not match x columns")
        for arr in (y, w, x):
            arr.flags.writeable = False
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "covariate_names", names)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def n1(self) -> int:
        return int(self.w.sum())

    @property
    def n0(self) -> int:
        return self.n - self.n1

    @property
    def p(self) -> int:
        return self.x.shape[1]


def _parse_cell(raw: str, col: str, row: int, na_policy: str) -> float | None:
    """Parse one CSV cell; None marks a row to drop under the drop policy."""
    text = raw.strip() if raw is not None else ""
    if text.lower() in _NA_TOKENS:
        if na_policy == "drop":
            return None
        raise DataError(f"missing value in column {col!r} at data row {row}")
    try:
        return float(text)
    except ValueError:
        if na_policy == "drop":
            return None
        raise DataError(
            f"non-numeric value {text!r} in column {col!r} at data row {row}"
        ) from None


def load_csv(
    path,
    outcome_col: str,
    treatment_col: str,
    covariate_cols: list[str],
    na_policy: str = "reject",
) -> ObservationTable:
    """Load an observation table from a header-first CSV file.

    Rows with missing or unparseable cells in the used columns are
    rejected (default) or dropped and counted, per ``na_policy``.  A
    treatment value other than 0 or 1 is always an error: it indicates a
    miscoded column, not missingness.
    """
    if na_policy not in ("reject", "drop"):
        raise ConfigError(f"na_policy must be 'reject' or 'drop', got {na_policy!r}")
    if not covariate_cols:
        raise ConfigError("at least one covariate column is required")

    ys: list[float] = []
    ws: list[int] = []
    xs: list[list[float]] = []
    dropped = 0
    used = [outcome_col, treatment_col, *covariate_cols]

    try:
        handle = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    with handle:
        reader = csv.DictReader(handle)
        header = reader.fieldnames or []
        missing = [c for c in used if c not in header]
        if missing:
            raise DataError(f"missing column(s) {missing} in {path}")
        for i, record in enumerate(reader, start=1):
            row: list[float] = []
            bad = False
            for col in used:
                val = _parse_cell(record.get(col), col, i, na_policy)
                if val is None:
                    bad = True
                    break
                row.append(val)
            if bad:
                dropped += 1
                continue
            w_val = row[1]
            if w_val not in (0.0, 1.0):
                raise DataError(
                    f"non-binary treatment value {w_val!r} at data row {i}"
                )
            ys.append(row[0])
            ws.append(int(w_val))
            xs.append(row[2:])

    if not ys:
        raise DataError(f"no usable rows in {path} (dropped {dropped})")
    return ObservationTable(
        y=np.asarray(ys),
        w=np.asarray(ws),
        x=np.asarray(xs),
        covariate_names=tuple(covariate_cols),
        dropped_rows=dropped,
    )


def subset_size(n: int, gamma: float) -> int:
    """Subset size b = n**gamma, rounded half-up and clamped to [2, n]."""
    if n < 2:
        raise ConfigError(f"n must be at least 2, got {n}")
    if not 0.0 < gamma <= 1.0:
        raise ConfigError(f"gamma must be in (0, 1], got {gamma}")
    b = int(math.floor(n**gamma + 0.5))
    return max(2, min(b, n))


def draw_subset(table: ObservationTable, b: int, stream: np.random.Generator) -> np.ndarray:
    """Draw ``b`` distinct row indices uniformly, returned sorted ascending."""
    n = table.n
    if not 2 <= b <= n:
        raise ConfigError(f"subset size {b} outside [2, {n}]")
    idx = stream.choice(n, size=b, replace=False)
    idx.sort()
    return idx
