"""CSV ingestion, resampling, splitting and planted synthetic households.

CSV shapes (header row mandatory, '.' decimal separator, integer epoch seconds):

* aggregate:  ``timestamp,line_1,...,line_R``
* appliance:  ``timestamp,watts``

A dataset directory holds ``aggregate.csv``, one ``appliance_<name>.csv`` per
appliance and, for planted data, ``model.json`` and ``truth.csv`` (state
indices per appliance).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .setfn import AggregateSeries, ApplianceModel, HouseholdModel, StateAssignment


class DataError(ValueError):
    """Malformed or inconsistent input data."""


@dataclass(frozen=True)
class Dataset:
    """Aligned aggregate and (optional) per-appliance streams.

    ``appliances`` is L x T; NaN marks a missing reading (only before
    downsampling). ``model`` and ``truth`` are attached for planted data.
    """

    timestamps: np.ndarray
    aggregate: np.ndarray
    names: tuple[str, ...] = ()
    appliances: np.ndarray | None = None
    model: HouseholdModel | None = None
    truth: StateAssignment | None = None

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype=np.int64)
        agg = np.asarray(self.aggregate, dtype=float)
        if agg.ndim != 2 or agg.shape[0] != ts.size:
            raise DataError(f"aggregate shape {agg.shape} does not match {ts.size} timestamps")
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "aggregate", agg)
        object.__setattr__(self, "names", tuple(self.names))
        if self.appliances is not None:
            x = np.asarray(self.appliances, dtype=float)
            if x.shape != (len(self.names), ts.size):
                raise DataError(f"appliance matrix {x.shape} does not match {len(self.names)} names x {ts.size}")
            object.__setattr__(self, "appliances", x)

    @property
    def horizon(self) -> int:
        return int(self.timestamps.size)

    @property
    def num_lines(self) -> int:
        return int(self.aggregate.shape[1])

    def aggregate_series(self) -> AggregateSeries:
        return AggregateSeries(self.aggregate, self.timestamps)

    def slice(self, start: int, stop: int) -> "Dataset":
        return Dataset(
            self.timestamps[start:stop],
            self.aggregate[start:stop],
            self.names,
            None if self.appliances is None else self.appliances[:, start:stop],
            self.model,
            None if self.truth is None else StateAssignment(self.truth.states[:, start:stop]),
        )


# -- CSV ------------------------------------------------------------------------------


def read_csv(path, min_cols: int = 2) -> tuple[list[str], np.ndarray, np.ndarray]:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"{path}: no such file")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file, header row required") from None
        header = [h.strip() for h in header]
        if len(header) < min_cols or header[0] != "timestamp":
            raise DataError(f"{path}: header must start with 'timestamp' and have >= {min_cols} columns")
        ts, rows = [], []
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: line {line}: expected {len(header)} fields, got {len(row)}")
            try:
                ts.append(int(row[0]))
                vals = [float(c) for c in row[1:]]
            except ValueError:
                raise DataError(f"{path}: line {line}: non-numeric field in {row!r}") from None
            if not all(math.isfinite(v) for v in vals):
                raise DataError(f"{path}: line {line}: non-finite value")
            rows.append(vals)
    ts = np.array(ts, dtype=np.int64)
    vals = np.array(rows, dtype=float).reshape(len(rows), len(header) - 1)
    if ts.size > 1 and np.any(np.diff(ts) <= 0):
        raise DataError(f"{path}: timestamps must be strictly increasing")
    return header, ts, vals


def _appliance_name(path) -> str:
    stem = Path(path).stem
    return stem[len("appliance_"):] if stem.startswith("appliance_") else stem


def load_csv(agg_path, appliance_paths: Sequence | Mapping = ()) -> Dataset:
    """Inner-join the aggregate and appliance streams on timestamp.

    ``appliance_paths`` is a name->path mapping or a sequence of paths named
    ``appliance_<name>.csv``. The number of lines is the aggregate's column count minus one.
    """
    _, agg_ts, agg_vals = read_csv(agg_path)
    if isinstance(appliance_paths, Mapping):
        items = list(appliance_paths.items())
    else:
        items = [(_appliance_name(p), p) for p in appliance_paths]
    common = agg_ts
    streams = []
    for name, p in items:
        header, ts, vals = read_csv(p)
        if len(header) != 2:
            raise DataError(f"{p}: appliance file must have exactly the columns timestamp,watts")
        streams.append((name, ts, vals[:, 0]))
        common = np.intersect1d(common, ts, assume_unique=True)
    if common.size == 0:
        raise DataError("no timestamp is present in every stream")
    keep = np.isin(agg_ts, common)
    x = None
    if streams:
        x = np.stack([v[np.isin(ts, common)] for _, ts, v in streams])
    return Dataset(common, agg_vals[keep], [n for n, _, _ in streams], x)


def _fmt(v: float) -> str:
    return repr(float(v))


def write_aggregate_csv(path, timestamps, values) -> None:
    values = np.asarray(values, dtype=float)
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp"] + [f"line_{r + 1}" for r in range(values.shape[1])])
        for t, row in zip(timestamps, values):
            w.writerow([int(t)] + [_fmt(v) for v in row])


def write_series_csv(path, timestamps, columns: Mapping[str, np.ndarray], fmt=_fmt) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp"] + list(columns))
        cols = [np.asarray(c) for c in columns.values()]
        for k, t in enumerate(timestamps):
            w.writerow([int(t)] + [fmt(c[k]) for c in cols])


def save_dataset(ds: Dataset, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_aggregate_csv(out / "aggregate.csv", ds.timestamps, ds.aggregate)
    if ds.appliances is not None:
        for name, x in zip(ds.names, ds.appliances):
            write_series_csv(out / f"appliance_{name}.csv", ds.timestamps, {"watts": x})
    if ds.model is not None:
        ds.model.save(out / "model.json")
    if ds.truth is not None:
        write_series_csv(out / "truth.csv", ds.timestamps, dict(zip(ds.names, ds.truth.states)),
                         fmt=lambda v: str(int(v)))
    return out


def load_dataset(data_dir, require_appliances: bool = False) -> Dataset:
    d = Path(data_dir)
    if not d.is_dir():
        raise DataError(f"{d}: not a dataset directory")
    app_paths = sorted(d.glob("appliance_*.csv"))
    if require_appliances and not app_paths:
        raise DataError(f"{d}: no appliance_<name>.csv files")
    model = None
    if (d / "model.json").is_file():
        model = HouseholdModel.load(d / "model.json")
        order = {n: k for k, n in enumerate(model.names)}
        if {_appliance_name(p) for p in app_paths} == set(order):
            app_paths.sort(key=lambda p: order[_appliance_name(p)])
    ds = load_csv(d / "aggregate.csv", app_paths)
    truth = None
    if (d / "truth.csv").is_file():
        header, ts, vals = read_csv(d / "truth.csv")
        if list(header[1:]) != list(ds.names) or not np.array_equal(ts, ds.timestamps):
            raise DataError(f"{d / 'truth.csv'}: columns or timestamps disagree with the appliance files")
        truth = StateAssignment(vals.T.astype(np.int64))
    return Dataset(ds.timestamps, ds.aggregate, ds.names, ds.appliances, model, truth)


# -- resampling and splitting ------------------------------------------------------------


def _bucket_means(minutes: np.ndarray, values: np.ndarray, uniq: np.ndarray, inv: np.ndarray) -> np.ndarray:
    """Per-minute nan-aware mean of a 1-D stream."""
    ok = ~np.isnan(values)
    sums = np.bincount(inv[ok], weights=values[ok], minlength=uniq.size)
    counts = np.bincount(inv[ok], minlength=uniq.size)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)


def downsample_1min(ds: Dataset) -> Dataset:
    """Average every stream within each wall-clock minute; minutes lacking any stream are dropped."""
    minutes = (ds.timestamps // 60) * 60
    uniq, inv = np.unique(minutes, return_inverse=True)
    agg = np.stack([_bucket_means(minutes, ds.aggregate[:, r], uniq, inv) for r in range(ds.num_lines)], axis=1)
    cols = [agg]
    x = None
    if ds.appliances is not None:
        x = np.stack([_bucket_means(minutes, row, uniq, inv) for row in ds.appliances]).reshape(-1, uniq.size)
        cols.append(x.T)
    complete = ~np.isnan(np.concatenate(cols, axis=1)).any(axis=1)
    return Dataset(uniq[complete], agg[complete], ds.names, None if x is None else x[:, complete])


def split_halves(ds: Dataset) -> tuple[Dataset, Dataset]:
    """First ceil(T/2) samples for training, the rest for testing."""
    if ds.horizon < 2:
        raise DataError(f"cannot split a series of length {ds.horizon}")
    cut = (ds.horizon + 1) // 2
    return ds.slice(0, cut), ds.slice(cut, ds.horizon)


# -- synthetic households --------------------------------------------------------------------


@dataclass
class SyntheticSpec:
    """Planted household description.

    ``levels`` is either "auto" (first level 0 W, then increments drawn in
    [gap, 2 gap)) or one explicit list per appliance. ``connectivity`` is
    "single_line" (appliance i on line i mod R) or a per-appliance list of
    ``{"kind": "single_line", "line": r}`` /
    ``{"kind": "split_pair", "lines": [r, s], "fraction": f}``.
    """

    num_appliances: int
    num_lines: int
    states: list[int] | int = 3
    levels: str | list = "auto"
    gap: float = 50.0
    connectivity: str | list = "single_line"
    p_stay: float = 0.95
    horizon: int = 1000
    noise_std: float = 0.0
    seed: int = 0
    start_time: int = 0
    period: int = 60
    names: list[str] | None = None
    lam: float = 1.0

    def __post_init__(self):
        if self.num_appliances < 1 or self.num_lines < 1:
            raise ValueError("need at least one appliance and one line")
        if isinstance(self.states, int):
            self.states = [self.states] * self.num_appliances
        if len(self.states) != self.num_appliances or min(self.states) < 2:
            raise ValueError("states must give >= 2 states for every appliance")
        if not 0.0 < self.p_stay <= 1.0:
            raise ValueError("p_stay must lie in (0, 1]")
        if self.horizon < 1 or self.period < 1:
            raise ValueError("horizon and period must be positive")
        if not self.noise_std >= 0:
            raise ValueError("noise_std must be >= 0")
        if self.gap <= 0:
            raise ValueError("gap must be positive")
        if self.levels != "auto":
            if len(self.levels) != self.num_appliances:
                raise ValueError("one level list per appliance required")
            for lv, n in zip(self.levels, self.states):
                if len(lv) != n or min(lv) < 0:
                    raise ValueError("level lists must match state counts and be >= 0")
        if self.names is None:
            self.names = [f"app{i + 1}" for i in range(self.num_appliances)]
        self.weight_matrix()  # validates connectivity

    def weight_matrix(self) -> np.ndarray:
        L, R = self.num_appliances, self.num_lines
        W = np.zeros((L, R))
        if self.connectivity == "single_line":
            W[np.arange(L), np.arange(L) % R] = 1.0
            return W
        if not isinstance(self.connectivity, list) or len(self.connectivity) != L:
            raise ValueError("connectivity must be 'single_line' or one entry per appliance")
        for i, c in enumerate(self.connectivity):
            kind = c.get("kind")
            if kind == "single_line":
                r = int(c["line"])
                if not 0 <= r < R:
                    raise ValueError(f"appliance {i}: line {r} out of range")
                W[i, r] = 1.0
            elif kind == "split_pair":
                r, s = (int(v) for v in c["lines"])
                frac = float(c["fraction"])
                if r == s or not (0 <= r < R and 0 <= s < R) or not 0.0 < frac < 1.0:
                    raise ValueError(f"appliance {i}: invalid split_pair {c}")
                W[i, r], W[i, s] = frac, 1.0 - frac
            else:
                raise ValueError(f"appliance {i}: unknown connectivity kind {kind!r}")
        return W

    @classmethod
    def from_dict(cls, doc: Mapping) -> "SyntheticSpec":
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown synthetic spec fields: {sorted(unknown)}")
        return cls(**doc)

    @classmethod
    def load(cls, path) -> "SyntheticSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))


def generate(spec: SyntheticSpec) -> Dataset:
    rng = np.random.default_rng(spec.seed)
    L, T = spec.num_appliances, spec.horizon
    if spec.levels == "auto":
        levels = [np.concatenate([[0.0], np.cumsum(spec.gap * (1.0 + rng.random(n - 1)))]) for n in spec.states]
    else:
        levels = [np.sort(np.asarray(lv, dtype=float)) for lv in spec.levels]
    W = spec.weight_matrix()

    states = np.empty((L, T), dtype=np.int64)
    for i, n in enumerate(spec.states):
        states[i, 0] = rng.integers(n)
        stay = rng.random(T) < spec.p_stay
        jump = rng.integers(1, n, size=T)  # offset to a different state
        for t in range(1, T):
            states[i, t] = states[i, t - 1] if stay[t] else (states[i, t - 1] + jump[t]) % n

    x = np.stack([levels[i][states[i]] for i in range(L)])
    y = x.T @ W
    if spec.noise_std > 0:
        y = np.maximum(y + rng.normal(0.0, spec.noise_std, size=y.shape), 0.0)
    apps = tuple(ApplianceModel(spec.names[i], levels[i], W[i], spec.lam) for i in range(L))
    model = HouseholdModel(apps, spec.num_lines)
    ts = spec.start_time + spec.period * np.arange(T, dtype=np.int64)
    return Dataset(ts, y, spec.names, x, model, StateAssignment(states))
