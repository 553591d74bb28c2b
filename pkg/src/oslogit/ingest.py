"""Streaming access to labeled design matrices.

Two backings share one contract: an in-memory array pair, and a
delimited text file read in fixed-size row blocks.  Both expose the
same block iterator with the same default block size, so every
downstream computation (probability passes, gathers, inclusion scans)
consumes identical values in an identical order regardless of backing.

Files are parsed with round-trip float precision; a file produced by
:func:`write_csv` therefore reproduces the source arrays bit for bit.

Every source carries a :class:`ReadCounter`.  A "pass" is counted each
time a scan over the rows begins, whether or not the consumer walks it
to the end; the row counter adds up the rows actually delivered.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterator, Sequence

import numpy as np
import pandas as pd

from .errors import ConfigError, DataError

DEFAULT_BLOCK_SIZE = 1000


@dataclass
class Schema:
    """Column layout of a delimited text file.

    ``covariate_columns`` is a list of zero-based column indexes; when
    omitted, every column except the label is a covariate, in file
    order.  ``add_intercept`` prepends a constant-one coordinate, which
    then occupies position 0 of every covariate row.
    """

    label_column: int = 0
    covariate_columns: Sequence[int] | None = None
    add_intercept: bool = False
    delimiter: str = ","
    has_header: bool = False

    def validate(self) -> None:
        if self.label_column < 0:
            raise ConfigError("label_column must be nonnegative")
        if self.covariate_columns is not None:
            cols = list(self.covariate_columns)
            if len(cols) == 0:
                raise ConfigError("covariate_columns must not be empty")
            if len(set(cols)) != len(cols):
                raise ConfigError("covariate_columns contains duplicates")
            if self.label_column in cols:
                raise ConfigError("label_column also listed as a covariate")
            if min(cols) < 0:
                raise ConfigError("covariate_columns must be nonnegative")
        if len(self.delimiter) != 1:
            raise ConfigError("delimiter must be a single character")


@dataclass
class ReadCounter:
    """Accounting for data traffic."""

    rows: int = 0
    passes: int = 0
    max_block_rows: int = 0

    def snapshot(self) -> "ReadCounter":
        return ReadCounter(self.rows, self.passes, self.max_block_rows)


class DataSource:
    """Common interface over the two backings."""

    n_rows: int
    dim: int
    block_size: int
    reads: ReadCounter

    def iter_blocks(self, block_size: int | None = None) -> Iterator[tuple[int, np.ndarray, np.ndarray]]:
        """Yield ``(start_row, X_block, y_block)`` in row order.

        Counts one pass when iteration begins and adds each delivered
        block to the row counter.  At most one block is materialized at
        a time.
        """
        raise NotImplementedError

    def scan(self, visitor: Callable[[int, np.ndarray, float], None], block_size: int | None = None) -> None:
        """Call ``visitor(row_index, x, y)`` for every row, in order."""
        for start, X, y in self.iter_blocks(block_size):
            for j in range(len(y)):
                visitor(start + j, X[j], y[j])

    def _account(self, n: int) -> None:
        self.reads.rows += n
        if n > self.reads.max_block_rows:
            self.reads.max_block_rows = n


def _check_labels(y: np.ndarray, start: int) -> None:
    bad = np.nonzero((y != 0.0) & (y != 1.0))[0]
    if bad.size:
        raise DataError(f"label must be 0 or 1, got {y[bad[0]]!r} at row {start + int(bad[0])}")


class InMemorySource(DataSource):
    """A design matrix held in RAM, served block by block."""

    def __init__(self, X: np.ndarray, y: np.ndarray, block_size: int = DEFAULT_BLOCK_SIZE):
        X = np.ascontiguousarray(np.asarray(X, dtype=float))
        y = np.asarray(y, dtype=float).ravel()
        if X.ndim != 2:
            raise DataError("X must be a 2-d array")
        if len(y) != X.shape[0]:
            raise DataError("X and y row counts differ")
        _check_labels(y, 0)
        if block_size <= 0:
            raise ConfigError("block_size must be positive")
        self._X = X
        self._y = y
        self.n_rows = X.shape[0]
        self.dim = X.shape[1]
        self.block_size = block_size
        self.reads = ReadCounter()

    def iter_blocks(self, block_size: int | None = None):
        size = block_size or self.block_size
        self.reads.passes += 1
        for start in range(0, self.n_rows, size):
            stop = min(start + size, self.n_rows)
            self._account(stop - start)
            yield start, self._X[start:stop], self._y[start:stop]

    @property
    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Direct array access for oracle computations in tests."""
        return self._X, self._y


class CsvSource(DataSource):
    """Delimited text file, streamed in row blocks.

    At most one block of parsed rows is resident at any time.  Each
    pass reopens the file, so a source supports any number of passes.
    """

    def __init__(self, path: str, schema: Schema | None = None,
                 block_size: int = DEFAULT_BLOCK_SIZE, n_rows: int | None = None):
        schema = schema or Schema()
        schema.validate()
        if block_size <= 0:
            raise ConfigError("block_size must be positive")
        self.path = str(path)
        self.schema = schema
        self.block_size = block_size
        self.reads = ReadCounter()
        self._n_columns = self._probe_width()
        if schema.label_column >= self._n_columns:
            raise DataError(
                f"label column {schema.label_column} out of range; file has {self._n_columns} columns"
            )
        if schema.covariate_columns is None:
            cov = [c for c in range(self._n_columns) if c != schema.label_column]
        else:
            cov = list(schema.covariate_columns)
            if max(cov) >= self._n_columns:
                raise DataError(
                    f"covariate column {max(cov)} out of range; file has {self._n_columns} columns"
                )
        self._covariate_columns = cov
        self.dim = len(cov) + (1 if schema.add_intercept else 0)
        if n_rows is None:
            # Dedicated counting pass, recorded like any other pass.
            self.reads.passes += 1
            n_rows = self._count_rows()
        self.n_rows = int(n_rows)

    def _probe_width(self) -> int:
        with open(self.path, "r", encoding="utf-8") as fh:
            for line in fh:
                if line.strip("\r\n"):
                    return len(line.rstrip("\r\n").split(self.schema.delimiter))
        raise DataError(f"{self.path}: no data rows")

    def _count_rows(self) -> int:
        count = 0
        with open(self.path, "r", encoding="utf-8") as fh:
            for line in fh:
                if line.strip("\r\n"):
                    count += 1
        if self.schema.has_header:
            count -= 1
        if count <= 0:
            raise DataError(f"{self.path}: no data rows")
        return count

    def _reader(self, size: int):
        return pd.read_csv(
            self.path,
            sep=self.schema.delimiter,
            header=0 if self.schema.has_header else None,
            chunksize=size,
            dtype=float,
            float_precision="round_trip",
            skip_blank_lines=True,
            engine="c",
        )

    def _diagnose(self, err: Exception) -> DataError:
        # The fast parser failed somewhere; walk the file row by row to
        # name the first offending data row.
        with open(self.path, "r", encoding="utf-8") as fh:
            rows = (line for line in fh if line.strip("\r\n"))
            if self.schema.has_header:
                next(rows, None)
            for i, line in enumerate(rows):
                fields = line.rstrip("\r\n").split(self.schema.delimiter)
                if len(fields) != self._n_columns:
                    return DataError(
                        f"row {i}: expected {self._n_columns} fields, got {len(fields)}"
                    )
                for c in (self.schema.label_column, *self._covariate_columns):
                    try:
                        float(fields[c])
                    except ValueError:
                        return DataError(f"row {i}: cannot parse {fields[c]!r} in column {c}")
        return DataError(f"{self.path}: parse failure: {err}")

    def iter_blocks(self, block_size: int | None = None):
        size = block_size or self.block_size
        self.reads.passes += 1
        start = 0
        try:
            for chunk in self._reader(size):
                values = chunk.to_numpy()
                if not np.isfinite(values).all():
                    bad = np.nonzero(~np.isfinite(values).all(axis=1))[0]
                    raise DataError(f"row {start + int(bad[0])}: non-finite or missing value")
                y = np.ascontiguousarray(values[:, self.schema.label_column])
                _check_labels(y, start)
                # Canonical row-major layout: dot kernels are sensitive to
                # memory order, and file-backed blocks must score bitwise
                # identically to in-memory blocks of the same rows.
                X = np.ascontiguousarray(values[:, self._covariate_columns])
                if self.schema.add_intercept:
                    X = np.hstack([np.ones((len(y), 1)), X])
                self._account(len(y))
                yield start, X, y
                start += len(y)
        except DataError:
            raise
        except Exception as exc:  # pandas raises parser-specific types
            raise self._diagnose(exc) from exc


def open_csv(path: str, schema: Schema | None = None,
             block_size: int = DEFAULT_BLOCK_SIZE, n_rows: int | None = None) -> CsvSource:
    """Open a delimited text file as a streaming source.

    When ``n_rows`` is not supplied, one dedicated counting pass runs
    immediately and is recorded in the pass accounting.
    """
    return CsvSource(path, schema, block_size=block_size, n_rows=n_rows)


def write_csv(X: np.ndarray, y: np.ndarray, path: str, delimiter: str = ",",
              header: bool = False) -> str:
    """Write label + covariates as delimited text that round-trips exactly.

    The label occupies column 0.  Floats are rendered with shortest
    round-trip representations, so reading the file back with
    :func:`open_csv` reproduces the arrays bit for bit.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim != 2 or len(y) != X.shape[0]:
        raise DataError("X must be 2-d with one label per row")
    frame = pd.DataFrame(np.column_stack([y, X]))
    frame.columns = ["y"] + [f"x{j}" for j in range(X.shape[1])]
    frame.to_csv(path, sep=delimiter, header=header, index=False)
    return str(path)
