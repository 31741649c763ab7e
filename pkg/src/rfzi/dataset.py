"""Typed tabular data for the learners and the count models.

CSV files carry a header row; a companion schema file declares each
column as ``name:kind`` with kind one of ``continuous``, ``binary``,
``categorical`` or ``group``.  Categorical columns are expanded to one
binary indicator per level at load time, named ``column_level``; a cell
may list several levels separated by ``;`` (several alleles scored at one
locus).  Missing cells are rejected unless ``drop_incomplete_rows`` is set.
"""

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

CONTINUOUS = "continuous"
BINARY = "binary"
CATEGORICAL = "categorical"
GROUP = "group"
SCHEMA_KINDS = (CONTINUOUS, BINARY, CATEGORICAL, GROUP)
MISSING = {"", "na", "nan", "null"}
LEVEL_SEP = ";"


class DataError(ValueError):
    """Input data violates a declared type or a structural requirement."""


@dataclass(frozen=True)
class ColumnMeta:
    name: str
    kind: str = CONTINUOUS
    source: str = "raw"  # raw | onehot | derived
    parent: str | None = None  # onehot: the categorical column
    level: str | None = None  # onehot: the level it indicates
    rule: str | None = None  # derived: rule name

    def __post_init__(self):
        if self.kind not in (CONTINUOUS, BINARY):
            raise ValueError(f"learner columns are continuous or binary, not {self.kind!r}")


def _freeze(a):
    a = np.array(a, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    columns: list
    values: np.ndarray
    response: np.ndarray | None = None
    response_name: str = "y"
    group_id: np.ndarray | None = None
    group_name: str = "group"

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape[1] != len(self.columns):
            raise DataError(f"values shape {values.shape} does not match {len(self.columns)} columns")
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise DataError("duplicate column names")
        if not np.all(np.isfinite(values)):
            raise DataError("non-finite covariate values")
        for j, col in enumerate(self.columns):
            if col.kind == BINARY and not np.all((values[:, j] == 0) | (values[:, j] == 1)):
                raise DataError(f"foreign value in binary column {col.name!r}")
        object.__setattr__(self, "columns", list(self.columns))
        object.__setattr__(self, "values", _freeze(values))
        if self.response is not None:
            response = np.asarray(self.response, dtype=float)
            if response.shape != (values.shape[0],):
                raise DataError(f"response length {response.size} != {values.shape[0]} rows")
            if not np.all(np.isfinite(response)):
                raise DataError("non-finite response values")
            object.__setattr__(self, "response", _freeze(response))
        if self.group_id is not None:
            group = np.asarray(self.group_id)
            if group.shape != (values.shape[0],):
                raise DataError("group_id length does not match the number of rows")
            object.__setattr__(self, "group_id", _freeze(group))

    @property
    def n_rows(self):
        return self.values.shape[0]

    @property
    def n_cols(self):
        return self.values.shape[1]

    @property
    def names(self):
        return [c.name for c in self.columns]

    def index(self, name):
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"unknown column {name!r}") from None

    def column(self, name):
        if name == self.response_name and self.response is not None:
            return self.response
        return self.values[:, self.index(name)]

    def groups(self):
        """Group labels; each row is its own group when none were given."""
        return np.arange(self.n_rows) if self.group_id is None else self.group_id

    def with_column(self, meta, values):
        values = np.asarray(values, dtype=float).reshape(self.n_rows, 1)
        return replace(self, columns=self.columns + [meta], values=np.hstack([self.values, values]))

    def with_response(self, name):
        """Promote covariate ``name`` to the response."""
        j = self.index(name)
        keep = [k for k in range(self.n_cols) if k != j]
        return replace(self, columns=[self.columns[k] for k in keep],
                       values=self.values[:, keep], response=self.values[:, j],
                       response_name=name)

    def select(self, names):
        idx = [self.index(n) for n in names]
        return replace(self, columns=[self.columns[k] for k in idx], values=self.values[:, idx])

    def summary(self):
        def stats(v):
            return {"mean": float(np.mean(v)), "sd": float(np.std(v, ddof=1)) if v.size > 1 else 0.0,
                    "min": float(np.min(v)), "max": float(np.max(v))}

        out = {"n_rows": self.n_rows, "n_cols": self.n_cols, "columns": []}
        for j, col in enumerate(self.columns):
            entry = {"name": col.name, "kind": col.kind, "source": col.source}
            if col.parent is not None:
                entry["parent"] = col.parent
            if col.rule is not None:
                entry["rule"] = col.rule
            entry.update(stats(self.values[:, j]) if self.n_rows else {})
            out["columns"].append(entry)
        if self.response is not None:
            out["response"] = {"name": self.response_name, **stats(self.response)}
        if self.group_id is not None:
            out["n_groups"] = int(np.unique(self.group_id).size)
        return out


def read_schema(path):
    """Parse ``name:kind`` lines; blank lines and ``#`` comments are skipped."""
    schema = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        name, sep, kind = line.rpartition(":")
        kind = kind.strip().lower()
        if not sep or not name.strip() or kind not in SCHEMA_KINDS:
            raise DataError(f"{path}:{lineno}: expected 'name:kind' with kind in {SCHEMA_KINDS}")
        schema[name.strip()] = kind
    return schema


def write_schema(dataset, path):
    lines = [f"{c.name}:{c.kind}" for c in dataset.columns]
    if dataset.response is not None:
        lines.append(f"{dataset.response_name}:{CONTINUOUS}")
    if dataset.group_id is not None:
        lines.append(f"{dataset.group_name}:{GROUP}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _parse_number(cell, name, lineno):
    try:
        v = float(cell)
    except ValueError:
        raise DataError(f"line {lineno}: non-numeric cell {cell!r} in column {name!r}") from None
    if not math.isfinite(v):
        raise DataError(f"line {lineno}: non-finite cell {cell!r} in column {name!r}")
    return v


def load_csv(path, schema, response=None, drop_incomplete_rows=False):
    """Read ``path`` into a :class:`Dataset`.

    ``schema`` is a mapping or a schema-file path.  ``response`` names the
    continuous column to hold out as the response.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    if not isinstance(schema, dict):
        schema = read_schema(schema)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows = [(lineno, r) for lineno, r in enumerate(reader, 2) if r]
    undeclared = [h for h in header if h not in schema]
    if undeclared:
        raise DataError(f"columns without a declared type: {undeclared}")
    groups = [h for h in header if schema[h] == GROUP]
    if len(groups) > 1:
        raise DataError("at most one group column is allowed")
    if response is not None and (response not in header or schema[response] != CONTINUOUS):
        raise DataError(f"response {response!r} must be a declared continuous column")

    kept = []
    for lineno, row in rows:
        if len(row) != len(header):
            raise DataError(f"line {lineno}: {len(row)} cells, header has {len(header)}")
        cells = [c.strip() for c in row]
        if any(c.lower() in MISSING for c in cells):
            if drop_incomplete_rows:
                continue
            raise DataError(f"line {lineno}: missing value (use drop_incomplete_rows to skip)")
        kept.append((lineno, cells))

    columns, blocks = [], []
    resp = group = None
    for k, name in enumerate(header):
        kind = schema[name]
        raw = [(lineno, cells[k]) for lineno, cells in kept]
        if kind == GROUP:
            group = np.array([c for _, c in raw], dtype=object)
        elif kind == CATEGORICAL:
            sets = [frozenset(v.strip() for v in c.split(LEVEL_SEP) if v.strip()) for _, c in raw]
            for level in sorted(set().union(*sets)):
                columns.append(ColumnMeta(f"{name}_{level}", BINARY, "onehot", parent=name, level=level))
                blocks.append([1.0 if level in s else 0.0 for s in sets])
        else:
            vals = [_parse_number(c, name, lineno) for lineno, c in raw]
            if kind == BINARY:
                bad = [v for v in vals if v not in (0.0, 1.0)]
                if bad:
                    raise DataError(f"foreign value in binary column {name!r}: {bad[0]!r}")
            if name == response:
                resp = np.array(vals)
            else:
                columns.append(ColumnMeta(name, kind))
                blocks.append(vals)
    values = np.array(blocks, dtype=float).T if blocks else np.empty((len(kept), 0))
    values = values.reshape(len(kept), len(columns))
    return Dataset(columns, values, resp, response or "y", group,
                   groups[0] if groups else "group")


def _fmt(v, kind):
    if kind == BINARY:
        return str(int(v))
    return repr(float(v))


def write_csv(dataset, path):
    """Write covariates, then the response, then the group column."""
    header = dataset.names[:]
    kinds = [c.kind for c in dataset.columns]
    if dataset.response is not None:
        header.append(dataset.response_name)
        kinds.append(CONTINUOUS)
    if dataset.group_id is not None:
        header.append(dataset.group_name)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(dataset.n_rows):
            row = [_fmt(v, k) for v, k in zip(dataset.values[i], kinds)]
            if dataset.response is not None:
                row.append(_fmt(dataset.response[i], CONTINUOUS))
            if dataset.group_id is not None:
                row.append(str(dataset.group_id[i]))
            w.writerow(row)


def moi_from_indicators(indicators, loci):
    """Per row, the largest number of indicators set within any one locus.

    ``loci[k]`` is the locus of indicator column ``k``.
    """
    ind = np.asarray(indicators, dtype=float)
    loci = list(loci)
    if ind.ndim != 2 or ind.shape[1] != len(loci):
        raise DataError("one locus tag per indicator column is required")
    if not loci:
        raise DataError("no locus-tagged indicator columns")
    out = np.zeros(ind.shape[0])
    for locus in dict.fromkeys(loci):
        cols = [k for k, l in enumerate(loci) if l == locus]
        out = np.maximum(out, ind[:, cols].sum(axis=1))
    return out


def derive_moi(dataset, loci=None, name="MOI"):
    """Append the multiplicity of infection derived from allele indicators.

    Indicators are the one-hot columns of each categorical parent, or, if
    ``loci`` is given, the binary columns named ``<locus>_<allele>``.
    """
    tags = []
    for j, col in enumerate(dataset.columns):
        if loci is None:
            if col.source == "onehot" and col.parent is not None:
                tags.append((j, col.parent))
        elif col.kind == BINARY:
            for locus in loci:
                if col.name.startswith(f"{locus}_"):
                    tags.append((j, locus))
                    break
    if not tags:
        raise DataError("no locus-tagged indicator columns")
    cols, labels = zip(*tags)
    moi = moi_from_indicators(dataset.values[:, list(cols)], labels)
    return dataset.with_column(ColumnMeta(name, CONTINUOUS, "derived", rule="moi"), moi)


def log_transform(values, offset=0.0):
    """Natural log of ``values + offset``; every argument must be positive."""
    if offset < 0:
        raise DataError("offset must be >= 0")
    v = np.asarray(values, dtype=float) + offset
    if np.any(~(v > 0)):
        raise DataError("log_transform needs values + offset > 0")
    return np.log(v)


def derive_log(dataset, column, offset=0.0, name=None):
    name = name or f"log_{column}"
    meta = ColumnMeta(name, CONTINUOUS, "derived", rule=f"log(x+{offset:g})")
    return dataset.with_column(meta, log_transform(dataset.column(column), offset))


@dataclass(frozen=True, eq=False)
class CountDataset:
    """Per-mosquito counts with per-group count (x) and zero (z) covariates.

    Covariate matrices exclude the intercept; :attr:`X` and :attr:`Z` give
    the row-expanded designs with a leading column of ones.
    """

    group_id: np.ndarray  # integer codes 0..n_groups-1
    counts: np.ndarray
    group_x: np.ndarray  # (n_groups, p)
    group_z: np.ndarray  # (n_groups, q)
    x_names: list = field(default_factory=list)
    z_names: list = field(default_factory=list)
    group_labels: list | None = None

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.ndim != 1:
            raise DataError("counts must be one-dimensional")
        if np.any(counts < 0) or np.any(counts != np.round(counts)):
            raise DataError("counts must be nonnegative integers")
        gid = np.asarray(self.group_id, dtype=np.int64)
        if gid.shape != counts.shape:
            raise DataError("group_id and counts differ in length")
        gx = np.asarray(self.group_x, dtype=float)
        gz = np.asarray(self.group_z, dtype=float)
        gx = gx.reshape(gx.shape[0], -1) if gx.ndim != 2 else gx
        gz = gz.reshape(gz.shape[0], -1) if gz.ndim != 2 else gz
        if gx.shape[0] != gz.shape[0]:
            raise DataError("count and zero covariates cover different numbers of groups")
        if gid.size and (gid.min() < 0 or gid.max() >= gx.shape[0]):
            raise DataError("group ids out of range")
        if not (np.all(np.isfinite(gx)) and np.all(np.isfinite(gz))):
            raise DataError("non-finite covariates")
        object.__setattr__(self, "counts", _freeze(counts.astype(np.int64)))
        object.__setattr__(self, "group_id", _freeze(gid))
        object.__setattr__(self, "group_x", _freeze(gx))
        object.__setattr__(self, "group_z", _freeze(gz))
        if len(self.x_names) != gx.shape[1] or len(self.z_names) != gz.shape[1]:
            raise DataError("covariate names do not match covariate columns")

    @property
    def n_obs(self):
        return self.counts.size

    @property
    def n_groups(self):
        return self.group_x.shape[0]

    @property
    def X(self):
        return np.hstack([np.ones((self.n_obs, 1)), self.group_x[self.group_id]])

    @property
    def Z(self):
        return np.hstack([np.ones((self.n_obs, 1)), self.group_z[self.group_id]])

    def group_sizes(self):
        return np.bincount(self.group_id, minlength=self.n_groups)

    @classmethod
    def from_dataset(cls, dataset, count_covariates=(), zero_covariates=()):
        """Build from a Dataset whose response holds the counts."""
        if dataset.response is None:
            raise DataError("the dataset has no count response")
        labels, gid = np.unique(dataset.groups().astype(str), return_inverse=True)
        first = np.zeros(labels.size, dtype=np.int64)
        first[gid[::-1]] = np.arange(dataset.n_rows)[::-1]

        def block(names):
            names = list(names)
            if not names:
                return np.empty((labels.size, 0))
            rows = np.column_stack([dataset.column(n) for n in names])
            grp = rows[first]
            if not np.array_equal(grp[gid], rows):
                bad = [n for k, n in enumerate(names) if not np.array_equal(grp[gid, k], rows[:, k])]
                raise DataError(f"covariates vary within a group: {bad}")
            return grp

        return cls(gid, dataset.response, block(count_covariates), block(zero_covariates),
                   list(count_covariates), list(zero_covariates), [str(l) for l in labels])
