"""CSV ingestion and run configuration."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import EmptyData, MissingColumn, NonNumeric, ParseError
from .regress import Dataset

log = logging.getLogger(__name__)

INTERCEPT = "intercept"


@dataclass(frozen=True)
class RunConfig:
    """Settings for one engine run.

    ``focus`` maps covariate names to values (the intercept slot is implied);
    ``ensemble`` is ``"equal"``, ``"pred:<column><op><value>"``, or
    ``"file:<path>"``.  ``scale`` chooses between squared relative risk
    (``rr``) and its square root (``rrr``) in emitted tables and plots.
    """

    data_path: str
    response: str
    covariates: tuple[str, ...]
    forced: tuple[str, ...] = ()
    focus: dict[str, float] | None = None
    ensemble: str = "equal"
    sort: str = "fric"
    scale: str = "rr"
    level: float = 0.80
    out_dir: str = "."
    seed: int = 20260810
    replicates: int = 20000

    def __post_init__(self):
        if not 0.0 < self.level < 1.0:
            raise ValueError("level must lie strictly in (0, 1)")
        if self.scale not in ("rr", "rrr"):
            raise ValueError("scale must be 'rr' or 'rrr'")
        if self.sort not in ("fric", "conf", "afric"):
            raise ValueError("sort must be 'fric', 'conf' or 'afric'")


def bundled_fixture_path() -> Path:
    """Location of the bundled birthweight fixture CSV."""
    return Path(str(resources.files("fricsel").joinpath("data/birthweight.csv")))


def _read_rows(path: str | Path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyData(f"{path}: file is empty") from None
        rows = [row for row in reader if row]
    if not rows:
        raise EmptyData(f"{path}: header only, no data rows")
    return [h.strip() for h in header], rows


def load_csv(path: str | Path, cfg: RunConfig) -> Dataset:
    """Load a dataset per the run configuration.

    The file must be UTF-8, comma-separated with a header row; quoted fields
    are accepted, embedded newlines are not.  An all-ones intercept column is
    prepended and forced, along with any covariates named in ``cfg.forced``.

    Raises
    ------
    MissingColumn
        If the response or a configured covariate is absent from the header.
    NonNumeric
        If a needed cell fails to parse; the message carries the 1-based data
        row and the column name.
    EmptyData
        If the file has no data rows.
    """
    header, rows = _read_rows(path)
    pos = {name: i for i, name in enumerate(header)}
    for name in (cfg.response, *cfg.covariates, *cfg.forced):
        if name not in pos:
            raise MissingColumn(f"{path}: column {name!r} not in header {header}")

    n = len(rows)
    names = (INTERCEPT,) + tuple(cfg.covariates)
    X = np.ones((n, len(names)))
    y = np.empty(n)

    def cell(row_idx: int, col: str) -> float:
        raw = rows[row_idx][pos[col]].strip()
        try:
            return float(raw)
        except ValueError:
            raise NonNumeric(
                f"{path}: non-numeric value {raw!r} at data row {row_idx + 1}, column {col!r}",
                row=row_idx + 1,
                column=col,
            ) from None

    for i in range(n):
        if len(rows[i]) != len(header):
            raise ParseError(
                f"{path}: data row {i + 1} has {len(rows[i])} fields, expected {len(header)}",
                row=i + 1,
            )
        y[i] = cell(i, cfg.response)
        for j, cov in enumerate(cfg.covariates):
            X[i, j + 1] = cell(i, cov)

    forced = np.zeros(len(names), dtype=bool)
    forced[0] = True
    for name in cfg.forced:
        forced[names.index(name)] = True

    log.info("loaded %s: %d rows, %d columns (%s)", path, n, len(names), ", ".join(names))
    return Dataset(X=X, y=y, names=names, forced=forced)


def focus_vector(data: Dataset, focus: dict[str, float]) -> np.ndarray:
    """Assemble the focus covariate vector from named values.

    Every non-intercept covariate must receive a value; the intercept slot
    is fixed at one.
    """
    x0 = np.ones(data.p)
    given = dict(focus)
    for j, name in enumerate(data.names):
        if j == 0:
            continue
        if name not in given:
            raise MissingColumn(f"focus value for covariate {name!r} is missing")
        x0[j] = float(given.pop(name))
    if given:
        raise MissingColumn(f"focus names not among the covariates: {sorted(given)}")
    return x0


_PRED_OPS = ("<=", ">=", "!=", "==", "<", ">")


def parse_predicate(expr: str, data: Dataset):
    """Parse a row predicate like ``age<20`` into a callable on data rows.

    The grammar is a single comparison ``<covariate><op><number>`` with op
    in <, <=, >, >=, ==, != (no arbitrary expressions).
    """
    for op in _PRED_OPS:
        if op in expr:
            name, val = expr.split(op, 1)
            name = name.strip()
            if name not in data.names:
                raise MissingColumn(f"predicate column {name!r} not among the covariates")
            j = data.names.index(name)
            v = float(val)
            table = {
                "<": lambda row: row[j] < v,
                "<=": lambda row: row[j] <= v,
                ">": lambda row: row[j] > v,
                ">=": lambda row: row[j] >= v,
                "==": lambda row: row[j] == v,
                "!=": lambda row: row[j] != v,
            }
            return table[op]
    raise ParseError(f"cannot parse predicate {expr!r}; expected <column><op><value>")


def load_ensemble_file(path: str | Path, data: Dataset) -> np.ndarray:
    """Read explicit ensemble points from a CSV with the covariate columns.

    Returns the point matrix with the intercept slot prepended; an optional
    ``weight`` column is returned alongside (ones when absent).
    """
    header, rows = _read_rows(path)
    pos = {name: i for i, name in enumerate(header)}
    for name in data.names[1:]:
        if name not in pos:
            raise MissingColumn(f"{path}: ensemble file lacks covariate {name!r}")
    k = len(rows)
    pts = np.ones((k, data.p))
    w = np.ones(k)
    for i, row in enumerate(rows):
        for j, name in enumerate(data.names[1:], start=1):
            try:
                pts[i, j] = float(row[pos[name]])
            except ValueError:
                raise NonNumeric(
                    f"{path}: non-numeric value at data row {i + 1}, column {name!r}",
                    row=i + 1,
                    column=name,
                ) from None
        if "weight" in pos:
            w[i] = float(row[pos["weight"]])
    return pts, w
