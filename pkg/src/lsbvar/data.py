"""Longitudinal datasets, partitions and the long CSV format.

A dataset stores every subject's rows contiguously (subject-major, time
increasing), so most per-subject sums are ``np.add.reduceat`` calls over
``offsets``.  Missing responses carry an explicit boolean mask; the stored
value at a missing entry is NaN and must never be read before imputation.

Long CSV layout::

    subject_id,t,y_1,...,y_k,x_1,...,x_p,z_1,...,z_q

with ``t`` running 1..T_i without gaps, blank ``y`` cells for missing
responses and the ``z`` columns repeated (constant) on every row of a subject.
"""

import csv
import functools
import hashlib
import io
import re
from dataclasses import dataclass, field

import numpy as np


class DataError(ValueError):
    """Raised for malformed or inconsistent input data."""


def _readonly(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class LongitudinalDataset:
    """Response trajectories of ``N`` subjects.

    Attributes
    ----------
    subject_ids : tuple of str
    y : ndarray, shape (M, k)
        Stacked responses, NaN where missing. ``M = sum(lengths)``.
    observed : ndarray of bool, shape (M, k)
    x : ndarray, shape (M, p)
        Time-varying covariates.
    z : ndarray, shape (N, q)
        Baseline covariates.
    lengths : ndarray of int, shape (N,)
    dropped : tuple of (subject_id, reason)
        Subjects removed during validation.
    """

    subject_ids: tuple
    y: np.ndarray
    observed: np.ndarray
    x: np.ndarray
    z: np.ndarray
    lengths: np.ndarray
    dropped: tuple = field(default=())

    def __post_init__(self):
        n = len(self.subject_ids)
        lengths = _readonly(self.lengths, dtype=int).reshape(-1)
        y = _readonly(self.y)
        obs = _readonly(self.observed, dtype=bool)
        x = _readonly(self.x)
        z = _readonly(self.z)
        if lengths.shape[0] != n or z.ndim != 2 or z.shape[0] != n:
            raise DataError("subject count mismatch between ids, lengths and z")
        m = int(lengths.sum())
        if y.ndim != 2 or y.shape[0] != m or obs.shape != y.shape:
            raise DataError("responses and mask must both have shape (sum(T_i), k)")
        if x.ndim != 2 or x.shape[0] != m:
            raise DataError("time-varying covariates must have sum(T_i) rows")
        if n and lengths.min() < 2:
            raise DataError("every subject needs at least two time points")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(z))):
            raise DataError("covariates must be finite")
        if not np.all(np.isfinite(y[obs])):
            raise DataError("observed responses must be finite")
        y = y.copy()
        y[~obs] = np.nan
        y.setflags(write=False)
        for name, val in (("lengths", lengths), ("y", y), ("observed", obs),
                          ("x", x), ("z", z)):
            object.__setattr__(self, name, val)
        object.__setattr__(self, "subject_ids", tuple(str(s) for s in self.subject_ids))
        object.__setattr__(self, "dropped", tuple(self.dropped))

    # dimensional bookkeeping -------------------------------------------

    @property
    def n_subjects(self):
        return len(self.subject_ids)

    @property
    def resp_dim(self):
        return self.y.shape[1]

    @property
    def tv_cov_dim(self):
        return self.x.shape[1]

    @property
    def base_cov_dim(self):
        return self.z.shape[1]

    @property
    def n_rows(self):
        return self.y.shape[0]

    @functools.cached_property
    def offsets(self):
        """Index of each subject's first row."""
        return np.concatenate(([0], np.cumsum(self.lengths)[:-1])).astype(int)

    @functools.cached_property
    def row_subject(self):
        return np.repeat(np.arange(self.n_subjects), self.lengths)

    @functools.cached_property
    def row_time(self):
        """1-based time index of each row."""
        if self.n_subjects == 0:
            return np.zeros(0, dtype=int)
        return np.arange(self.n_rows) - np.repeat(self.offsets, self.lengths) + 1

    @functools.cached_property
    def first_row(self):
        mask = np.zeros(self.n_rows, dtype=bool)
        mask[self.offsets[self.lengths > 0]] = True
        return mask

    @property
    def has_missing(self):
        return not bool(self.observed.all())

    def subject_slice(self, i):
        start = int(self.offsets[i])
        return slice(start, start + int(self.lengths[i]))

    def subject(self, i):
        """``(y, observed, x, z)`` for subject ``i``."""
        s = self.subject_slice(i)
        return self.y[s], self.observed[s], self.x[s], self.z[i]

    def select(self, idx):
        """Dataset restricted to the subjects ``idx`` (in that order)."""
        idx = np.asarray(idx, dtype=int).reshape(-1)
        rows = (np.concatenate([np.arange(self.subject_slice(i).start,
                                          self.subject_slice(i).stop) for i in idx])
                if idx.size else np.zeros(0, dtype=int))
        return LongitudinalDataset(
            subject_ids=tuple(self.subject_ids[i] for i in idx),
            y=self.y[rows].reshape(-1, self.resp_dim),
            observed=self.observed[rows].reshape(-1, self.resp_dim),
            x=self.x[rows].reshape(-1, self.tv_cov_dim),
            z=self.z[idx].reshape(-1, self.base_cov_dim),
            lengths=self.lengths[idx],
        )

    def with_responses(self, y, observed=None):
        return LongitudinalDataset(self.subject_ids, y,
                                   self.observed if observed is None else observed,
                                   self.x, self.z, self.lengths, self.dropped)

    def with_z(self, z):
        return LongitudinalDataset(self.subject_ids, self.y, self.observed,
                                   self.x, z, self.lengths, self.dropped)

    def fingerprint(self):
        """Content hash of the dataset (ids, responses, mask, covariates)."""
        h = hashlib.sha256()
        h.update("\x1f".join(self.subject_ids).encode())
        for a in (self.lengths.astype(np.int64), np.nan_to_num(self.y, nan=0.0),
                  self.observed, self.x, self.z):
            h.update(np.ascontiguousarray(a).tobytes())
        return h.hexdigest()

    def __eq__(self, other):
        if not isinstance(other, LongitudinalDataset):
            return NotImplemented
        return (self.subject_ids == other.subject_ids
                and np.array_equal(self.lengths, other.lengths)
                and np.array_equal(self.observed, other.observed)
                and np.array_equal(self.y, other.y, equal_nan=True)
                and np.array_equal(self.x, other.x)
                and np.array_equal(self.z, other.z))

    __hash__ = None

    @classmethod
    def empty(cls, k=0, p=0, q=0):
        return cls((), np.zeros((0, k)), np.zeros((0, k), dtype=bool),
                   np.zeros((0, p)), np.zeros((0, q)), np.zeros(0, dtype=int))

    @classmethod
    def from_arrays(cls, y, x, z, observed=None, subject_ids=None):
        """Build a dataset from per-subject lists of arrays.

        ``y`` and ``x`` are sequences of ``(T_i, k)`` / ``(T_i, p)`` arrays,
        ``z`` an ``(N, q)`` array. NaN responses are treated as missing unless
        ``observed`` is given.
        """
        n = len(y)
        z = np.asarray(z, dtype=float).reshape(n, -1)
        if subject_ids is None:
            subject_ids = tuple(str(i + 1) for i in range(n))
        if n == 0:
            return cls.empty(0, 0, z.shape[1])
        ys = [np.atleast_2d(np.asarray(a, dtype=float)) for a in y]
        xs = [np.asarray(a, dtype=float).reshape(len(ys[i]), -1) for i, a in enumerate(x)]
        yy = np.vstack(ys)
        if observed is None:
            obs = ~np.isnan(yy)
        else:
            obs = np.vstack([np.asarray(o, dtype=bool) for o in observed])
        return cls(tuple(subject_ids), yy, obs, np.vstack(xs), z,
                   np.array([len(a) for a in ys]))


class Partition:
    """Cluster allocation of ``N`` items, compared up to relabelling."""

    __slots__ = ("labels",)

    def __init__(self, labels):
        labels = np.asarray(labels).reshape(-1)
        if labels.size and (labels.min() < 0 or not np.all(labels == np.round(labels))):
            raise ValueError("partition labels must be non-negative integers")
        self.labels = _readonly(labels, dtype=int)

    def canonical(self):
        """Labels renumbered 0, 1, ... by order of first appearance."""
        _, first, inverse = np.unique(self.labels, return_index=True, return_inverse=True)
        order = np.argsort(np.argsort(first))
        return order[inverse.reshape(-1)]

    @property
    def n_clusters(self):
        return int(np.unique(self.labels).size)

    def __len__(self):
        return self.labels.size

    def __eq__(self, other):
        if not isinstance(other, Partition):
            return NotImplemented
        return len(self) == len(other) and np.array_equal(self.canonical(), other.canonical())

    def __hash__(self):
        return hash(self.canonical().tobytes())

    def __repr__(self):
        return f"Partition({self.canonical().tolist()})"


# --- long CSV ingestion ------------------------------------------------------

_COL = re.compile(r"^([yxz])_(\d+)$")


def _layout(header):
    cols = {"y": {}, "x": {}, "z": {}}
    for j, name in enumerate(header):
        m = _COL.match(name.strip())
        if m:
            cols[m.group(1)][int(m.group(2))] = j
    for key, found in cols.items():
        if sorted(found) != list(range(1, len(found) + 1)):
            raise DataError(f"columns {key}_1..{key}_n must be numbered consecutively")
    if "subject_id" not in [h.strip() for h in header] or "t" not in [h.strip() for h in header]:
        raise DataError("header must contain subject_id and t")
    return {key: [found[i] for i in sorted(found)] for key, found in cols.items()}


def _parse_float(cell, row_index, name, allow_blank=False):
    cell = "" if cell is None else str(cell).strip()
    if cell == "" or cell.lower() == "nan":
        if allow_blank:
            return np.nan
        raise DataError(f"row {row_index}: missing value in covariate column {name}")
    try:
        val = float(cell)
    except ValueError:
        raise DataError(f"row {row_index}: cannot parse {name}={cell!r}") from None
    if not np.isfinite(val):
        raise DataError(f"row {row_index}: non-finite value in {name}")
    return val


def _has_consecutive_visits(visited):
    return bool(np.any(visited[1:] & visited[:-1]))


def validate_dataset(records):
    """Validate long-format records into a :class:`LongitudinalDataset`.

    Parameters
    ----------
    records : iterable of mappings, or a header-first list of rows
        Each record maps column names (``subject_id``, ``t``, ``y_j``,
        ``x_j``, ``z_j``) to strings or numbers.

    Returns
    -------
    LongitudinalDataset
        Subjects whose observed visits never include two consecutive time
        points are dropped and listed in ``dropped`` with their reason.
        Trailing visits with no observed response are trimmed.
    """
    records = list(records)
    if not records:
        return LongitudinalDataset.empty()
    if isinstance(records[0], dict):
        header = list(records[0].keys())
        rows = [[rec.get(h) for h in header] for rec in records]
    else:
        header, rows = [str(h) for h in records[0]], [list(r) for r in records[1:]]
    header = [h.strip() for h in header]
    cols = _layout(header)
    i_sid, i_t = header.index("subject_id"), header.index("t")
    k, p, q = len(cols["y"]), len(cols["x"]), len(cols["z"])

    subjects = {}
    for r, row in enumerate(rows):
        if len(row) != len(header):
            raise DataError(f"row {r}: expected {len(header)} fields, got {len(row)}")
        sid = str(row[i_sid]).strip()
        if not sid:
            raise DataError(f"row {r}: empty subject_id")
        t_val = _parse_float(row[i_t], r, "t")
        if t_val != int(t_val) or t_val < 1:
            raise DataError(f"row {r}: t must be a positive integer")
        y = [_parse_float(row[j], r, f"y_{n + 1}", allow_blank=True)
             for n, j in enumerate(cols["y"])]
        x = [_parse_float(row[j], r, f"x_{n + 1}") for n, j in enumerate(cols["x"])]
        z = [_parse_float(row[j], r, f"z_{n + 1}") for n, j in enumerate(cols["z"])]
        subjects.setdefault(sid, []).append((int(t_val), y, x, z, r))

    ids, ys, xs, zs, dropped = [], [], [], [], []
    for sid, recs in subjects.items():
        recs.sort(key=lambda rec: rec[0])
        times = [rec[0] for rec in recs]
        if times != list(range(1, len(times) + 1)):
            bad = recs[0][4]
            raise DataError(f"row {bad}: subject {sid} times must run 1..T without gaps "
                            "or duplicates (encode missing visits with blank responses)")
        z0 = recs[0][3]
        for rec in recs[1:]:
            if rec[3] != z0:
                raise DataError(f"row {rec[4]}: baseline covariates of subject {sid} vary over time")
        y = np.array([rec[1] for rec in recs], dtype=float).reshape(len(recs), k)
        x = np.array([rec[2] for rec in recs], dtype=float).reshape(len(recs), p)
        visited = ~np.all(np.isnan(y), axis=1)
        if not visited.any():
            dropped.append((sid, "no observed responses"))
            continue
        last = int(np.nonzero(visited)[0].max()) + 1
        y, x, visited = y[:last], x[:last], visited[:last]
        if last < 2 or not _has_consecutive_visits(visited):
            reason = ("fewer than two visits" if visited.sum() < 2
                      else "no two consecutive visits")
            dropped.append((sid, reason))
            continue
        ids.append(sid)
        ys.append(y)
        xs.append(x)
        zs.append(z0)

    if not ids:
        ds = LongitudinalDataset.empty(k, p, q)
        return LongitudinalDataset(ds.subject_ids, ds.y, ds.observed, ds.x, ds.z,
                                   ds.lengths, tuple(dropped))
    yy = np.vstack(ys)
    return LongitudinalDataset(tuple(ids), yy, ~np.isnan(yy), np.vstack(xs),
                               np.array(zs, dtype=float).reshape(len(ids), q),
                               np.array([len(a) for a in ys]), tuple(dropped))


def read_long_csv(path_or_buffer):
    if hasattr(path_or_buffer, "read"):
        return validate_dataset(list(csv.reader(path_or_buffer)))
    with open(path_or_buffer, newline="") as fh:
        return validate_dataset(list(csv.reader(fh)))


def _fmt(v):
    return "" if np.isnan(v) else repr(float(v))


def write_long_csv(ds, path_or_buffer=None):
    """Serialise ``ds`` to the long CSV format; returns the text if no target."""
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    k, p, q = ds.resp_dim, ds.tv_cov_dim, ds.base_cov_dim
    w.writerow(["subject_id", "t"] + [f"y_{j + 1}" for j in range(k)]
               + [f"x_{j + 1}" for j in range(p)] + [f"z_{j + 1}" for j in range(q)])
    y = np.where(ds.observed, ds.y, np.nan)
    for i, sid in enumerate(ds.subject_ids):
        s = ds.subject_slice(i)
        zs = [_fmt(v) for v in ds.z[i]]
        for t, row in enumerate(range(s.start, s.stop), start=1):
            w.writerow([sid, t] + [_fmt(v) for v in y[row]]
                       + [_fmt(v) for v in ds.x[row]] + zs)
    text = out.getvalue()
    if path_or_buffer is None:
        return text
    if hasattr(path_or_buffer, "write"):
        path_or_buffer.write(text)
    else:
        with open(path_or_buffer, "w", newline="") as fh:
            fh.write(text)
    return None


def standardize_covariates(ds, columns):
    """Centre and scale the designated baseline columns.

    Uses the population (divisor ``N``) standard deviation.

    Parameters
    ----------
    ds : LongitudinalDataset
    columns : iterable of int
        0-based indices into ``ds.z`` of the numerical covariates; every other
        column (intercept, dummies) is left untouched.

    Returns
    -------
    (LongitudinalDataset, dict)
        The transformed dataset and ``{column: (mean, sd)}``, enough to invert
        the transform via :func:`unstandardize_covariates`.
    """
    z = np.array(ds.z, dtype=float)
    record = {}
    for c in columns:
        c = int(c)
        col = z[:, c]
        mean = col.mean()
        sd = col.std()
        if not sd > 1e-12 * max(1.0, abs(mean)):
            raise DataError(f"baseline column z_{c + 1} has zero variance")
        z[:, c] = (col - mean) / sd
        record[c] = (float(mean), float(sd))
    return ds.with_z(z), record


def unstandardize_covariates(ds, record):
    z = np.array(ds.z, dtype=float)
    for c, (mean, sd) in record.items():
        z[:, c] = z[:, c] * sd + mean
    return ds.with_z(z)
