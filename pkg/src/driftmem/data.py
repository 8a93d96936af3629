"""Stream data model: periods of (x, y) samples, CSV ingestion, scaling,
lag windows, and a synthetic drifting-stream generator."""

import csv
import os
from dataclasses import dataclass, field

import numpy as np

STD_FLOOR = 1e-8


class DataError(ValueError):
    """Raised for malformed input data (missing files, bad cells, ...)."""


def _freeze(arr):
    arr = np.array(arr, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Sample:
    """One (x, y) pair of a regression stream."""

    x: np.ndarray  # (k,)
    y: np.ndarray  # (m,)

    def __post_init__(self):
        object.__setattr__(self, "x", _freeze(np.atleast_1d(self.x)))
        object.__setattr__(self, "y", _freeze(np.atleast_1d(self.y)))
        if self.x.ndim != 1 or self.y.ndim != 1:
            raise ValueError("sample x and y must be vectors")
        if self.x.size < 1 or self.y.size < 1:
            raise ValueError("sample x and y must be non-empty")
        if not (np.isfinite(self.x).all() and np.isfinite(self.y).all()):
            raise ValueError("sample entries must be finite")


@dataclass(frozen=True)
class PeriodDataset:
    """One period's batch of samples, stored as (n, k) / (n, m) arrays."""

    index: int
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", _freeze(np.atleast_2d(self.x)))
        object.__setattr__(self, "y", _freeze(np.atleast_2d(self.y)))
        if self.index < 1:
            raise ValueError("period index must be >= 1")
        if len(self.x) != len(self.y):
            raise ValueError("x and y row counts differ")
        if len(self.x) < 1:
            raise ValueError("a period needs at least one sample")
        if not (np.isfinite(self.x).all() and np.isfinite(self.y).all()):
            raise ValueError("period entries must be finite")

    @property
    def size(self):
        return len(self.x)

    @property
    def input_dim(self):
        return self.x.shape[1]

    @property
    def target_dim(self):
        return self.y.shape[1]

    @property
    def samples(self):
        return [Sample(self.x[i], self.y[i]) for i in range(self.size)]


@dataclass(frozen=True)
class FeatureScaler:
    """Per-feature standardizer; stddevs are floored at ``STD_FLOOR``."""

    means: np.ndarray
    stds: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "means", _freeze(self.means))
        object.__setattr__(self, "stds", _freeze(np.maximum(self.stds, STD_FLOOR)))

    def transform(self, x):
        return (x - self.means) / self.stds

    def inverse(self, x):
        return x * self.stds + self.means


@dataclass(frozen=True)
class StreamConfig:
    """Recipe for a synthetic drifting stream.

    ``shift_schedule`` entries are (period, mean_offset_vector, scale_factor);
    at each scheduled period the sampling mean is offset, the sampling scale
    multiplied, and the linear target map redrawn.
    """

    periods: int
    samples_per_period: int
    input_dim: int
    target_dim: int = 1
    shift_schedule: tuple = field(default_factory=tuple)
    noise_std: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.periods < 1:
            raise ValueError("periods must be >= 1")
        if self.samples_per_period < 1:
            raise ValueError("samples_per_period must be >= 1")
        if self.input_dim < 1 or self.target_dim < 1:
            raise ValueError("dimensions must be >= 1")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")
        sched = []
        for entry in self.shift_schedule:
            period, offset, scale = entry
            offset = tuple(float(v) for v in np.atleast_1d(offset))
            if len(offset) != self.input_dim:
                raise ValueError("shift offset length must equal input_dim")
            sched.append((int(period), offset, float(scale)))
        object.__setattr__(self, "shift_schedule", tuple(sched))


# Named stream recipes for `driftmem simulate` and synthetic configs.
# drift8: eight periods with one configuration change at period six --
# the sampling mean jumps and the target map is redrawn.
STREAM_PRESETS = {
    "drift8": StreamConfig(
        periods=8,
        samples_per_period=200,
        input_dim=2,
        target_dim=1,
        shift_schedule=((6, (3.0, 3.0), 1.0),),
        noise_std=0.05,
        seed=7,
    ),
}


def stream_preset(name):
    if name not in STREAM_PRESETS:
        raise ValueError(f"unknown preset {name!r}; available: {sorted(STREAM_PRESETS)}")
    return STREAM_PRESETS[name]


def load_csv_stream(path, period_length, target_columns):
    """Read a headered CSV into consecutive periods of ``period_length`` rows.

    Feature columns are every non-target column except an optional
    ``timestamp`` column, in header order. A short final period is kept.
    """
    if period_length < 1:
        raise ValueError("period_length must be >= 1")
    if isinstance(target_columns, str):
        target_columns = [target_columns]
    target_columns = list(target_columns)
    if not os.path.exists(path):
        raise DataError(f"no such file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        for col in target_columns:
            if col not in header:
                raise DataError(f"{path}: target column {col!r} not in header")
        target_idx = [header.index(c) for c in target_columns]
        feature_idx = [
            i
            for i, name in enumerate(header)
            if i not in target_idx and name != "timestamp"
        ]
        if not feature_idx:
            raise DataError(f"{path}: no feature columns left")
        xs, ys = [], []
        for row_num, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataError(f"{path}: row {row_num} has {len(row)} cells, expected {len(header)}")
            vals = []
            for i in feature_idx + target_idx:
                try:
                    vals.append(float(row[i]))
                except ValueError:
                    raise DataError(
                        f"{path}: non-numeric cell {row[i]!r} at row {row_num}, column {header[i]!r}"
                    ) from None
            xs.append(vals[: len(feature_idx)])
            ys.append(vals[len(feature_idx) :])
    if not xs:
        raise DataError(f"{path}: no data rows")
    periods = []
    for start in range(0, len(xs), period_length):
        stop = start + period_length
        periods.append(
            PeriodDataset(len(periods) + 1, np.array(xs[start:stop]), np.array(ys[start:stop]))
        )
    return periods


def generate_synthetic_stream(config):
    """Draw a stream of Gaussian periods whose mean/scale follow the shift
    schedule; targets are linear in x with the map redrawn at each shift."""
    rng = np.random.default_rng(config.seed)
    k, m = config.input_dim, config.target_dim
    schedule = {p: (off, sc) for p, off, sc in config.shift_schedule}

    def draw_map():
        return rng.normal(size=(m, k)), rng.normal(size=m)

    mean = np.zeros(k)
    scale = 1.0
    w, c = draw_map()
    periods = []
    for n in range(1, config.periods + 1):
        if n in schedule:
            off, factor = schedule[n]
            mean = mean + np.asarray(off)
            scale = scale * factor
            w, c = draw_map()
        x = mean + scale * rng.standard_normal((config.samples_per_period, k))
        y = x @ w.T + c + config.noise_std * rng.standard_normal((config.samples_per_period, m))
        periods.append(PeriodDataset(n, x, y))
    return periods


def make_windows(series, window, horizon, target_col=0, index=1):
    """Slice a series into lag-window samples: x is the flattened window,
    y the next ``horizon`` values of the target channel."""
    series = np.asarray(series, dtype=np.float64)
    if series.ndim == 1:
        series = series[:, None]
    length = len(series)
    if window < 1 or horizon < 1:
        raise ValueError("window and horizon must be >= 1")
    if length < window + horizon:
        raise DataError(
            f"series of length {length} too short for window {window} + horizon {horizon}"
        )
    count = length - window - horizon + 1
    xs = np.empty((count, window * series.shape[1]))
    ys = np.empty((count, horizon))
    for i in range(count):
        xs[i] = series[i : i + window].ravel()
        ys[i] = series[i + window : i + window + horizon, target_col]
    return PeriodDataset(index, xs, ys)


def fit_scaler(datasets):
    """Per-feature mean/std over the given datasets (fit once on the first
    period and reuse it, so densities stay comparable across periods)."""
    datasets = list(datasets)
    if not datasets:
        raise ValueError("fit_scaler needs at least one dataset")
    x = np.concatenate([d.x for d in datasets], axis=0)
    return FeatureScaler(x.mean(axis=0), x.std(axis=0))


def apply_scaler(scaler, dataset):
    return PeriodDataset(dataset.index, scaler.transform(dataset.x), dataset.y)
