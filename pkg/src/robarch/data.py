"""Labeled numeric matrix used as the common input type for fitting."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import InputError


@dataclass
class DataMatrix:
    """Cases by variables matrix with row and column labels.

    ``values`` is an (n, m) float array; labels default to stringified
    positional indices when omitted.
    """

    values: np.ndarray
    row_labels: list[str] = field(default_factory=list)
    col_labels: list[str] = field(default_factory=list)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise InputError("values must be a 2-d array")
        if not np.all(np.isfinite(values)):
            raise InputError("values must be finite")
        self.values = values
        n, m = values.shape
        if not self.row_labels:
            self.row_labels = [str(i) for i in range(n)]
        if not self.col_labels:
            self.col_labels = [str(j) for j in range(m)]
        self.row_labels = [str(r) for r in self.row_labels]
        self.col_labels = [str(c) for c in self.col_labels]
        if len(self.row_labels) != n:
            raise InputError("row_labels length does not match values")
        if len(self.col_labels) != m:
            raise InputError("col_labels length does not match values")

    @property
    def n_cases(self) -> int:
        return self.values.shape[0]

    @property
    def n_variables(self) -> int:
        return self.values.shape[1]

    def to_csv(self, path) -> None:
        """Write as CSV: header row of column labels, first column of row labels."""
        frame = pd.DataFrame(self.values, index=self.row_labels, columns=self.col_labels)
        frame.to_csv(path, index_label="row")

    @classmethod
    def from_csv(cls, path) -> "DataMatrix":
        try:
            frame = pd.read_csv(path, index_col=0)
        except (OSError, ValueError, pd.errors.ParserError) as exc:
            raise InputError(f"cannot read data matrix from {path}: {exc}") from exc
        try:
            values = frame.to_numpy(dtype=float)
        except (TypeError, ValueError) as exc:
            raise InputError(f"non-numeric cells in {path}: {exc}") from exc
        return cls(
            values=values,
            row_labels=[str(r) for r in frame.index],
            col_labels=[str(c) for c in frame.columns],
        )
