"""Design-matrix construction for an fMRI encoding model.

Word-level predictors become impulse trains at word offsets; continuous
covariates are resampled onto the same oversampled grid. Every column is
convolved with a double-gamma HRF, sampled at scan times, z-scored per run,
and target columns are orthogonalized against ``wordrate`` and a constant.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import stats

from .errors import (
    CollinearityError,
    EmptyKernel,
    InputError,
    InvalidParams,
    LengthMismatch,
    RankDeficientBasis,
    ZeroVariance,
)


@dataclass(frozen=True)
class WordEvent:
    word: str
    onset: float
    offset: float
    run: int

    def __post_init__(self):
        if not (0.0 <= self.onset < self.offset):
            raise InputError(f"event {self.word!r}: need 0 <= onset < offset")


@dataclass
class PredictorSeries:
    name: str
    kind: str  # "impulse" or "continuous"
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.kind not in ("impulse", "continuous"):
            raise InvalidParams(f"unknown series kind {self.kind!r}")
        if self.times.shape != self.values.shape:
            raise LengthMismatch(f"{self.name}: {len(self.times)} times but {len(self.values)} values")
        if self.kind == "continuous" and len(self.times) > 1:
            steps = np.diff(self.times)
            if np.any(steps <= 0) or not np.allclose(steps, steps[0]):
                raise InvalidParams(f"{self.name}: continuous series needs a uniform increasing grid")


@dataclass(frozen=True)
class HrfParams:
    peak_delay: float = 6.0
    undershoot_delay: float = 16.0
    peak_dispersion: float = 1.0
    undershoot_dispersion: float = 1.0
    peak_undershoot_ratio: float = 6.0
    duration: float = 32.0


def impulses_from_events(
    events: Sequence[WordEvent],
    values: Sequence[float] | None = None,
    name: str = "wordrate",
) -> PredictorSeries:
    """Impulse train at word offsets; amplitude 1 unless ``values`` given."""
    if values is not None and len(values) != len(events):
        raise LengthMismatch(f"{name}: {len(values)} values for {len(events)} events")
    times = [e.offset for e in events]
    amps = [1.0] * len(events) if values is None else [float(v) for v in values]
    return PredictorSeries(name, "impulse", np.array(times), np.array(amps))


def hrf_kernel(p: HrfParams = HrfParams(), dt: float = 0.02) -> np.ndarray:
    """Double-gamma HRF sampled every ``dt`` seconds on [0, duration].

    Peak gamma minus undershoot gamma / ratio, scaled to a maximum of 1.
    """
    if dt <= 0:
        raise InvalidParams("dt must be positive")
    if min(p.peak_delay, p.undershoot_delay, p.peak_dispersion, p.undershoot_dispersion) <= 0:
        raise InvalidParams("HRF delays and dispersions must be positive")
    if p.peak_undershoot_ratio <= 0:
        raise InvalidParams("peak/undershoot ratio must be positive")
    if p.duration < 32.0:
        raise InvalidParams("HRF kernel must cover at least 32 s")
    t = np.arange(int(round(p.duration / dt)) + 1) * dt
    h = _double_gamma(t, p)
    peak = h.max()
    if not peak > 0:
        raise InvalidParams("HRF has no positive lobe")
    return h / peak


def _double_gamma(t: np.ndarray, p: HrfParams) -> np.ndarray:
    peak = stats.gamma.pdf(t, p.peak_delay / p.peak_dispersion, scale=p.peak_dispersion)
    under = stats.gamma.pdf(t, p.undershoot_delay / p.undershoot_dispersion, scale=p.undershoot_dispersion)
    return peak - under / p.peak_undershoot_ratio


def convolve_resample(
    series: PredictorSeries,
    kernel: np.ndarray,
    n_scans: int,
    *,
    out_rate: float = 0.5,
    grid_rate: float = 50.0,
) -> PredictorSeries:
    """Convolve on the ``grid_rate`` grid and keep samples at scan times.

    ``kernel`` must be sampled at ``1 / grid_rate``. Impulses are placed on the
    nearest grid point and keep their amplitude; continuous series are
    linearly interpolated onto the grid and integrated (scaled by the grid
    step). Output sample k is at time ``k / out_rate``.
    """
    kernel = np.asarray(kernel, dtype=float)
    if kernel.size == 0:
        raise EmptyKernel("empty HRF kernel")
    step = grid_rate / out_rate
    if abs(step - round(step)) > 1e-9:
        raise InvalidParams("grid rate must be an integer multiple of the output rate")
    step = int(round(step))
    n_grid = n_scans * step
    x = np.zeros(n_grid)
    if series.kind == "impulse":
        idx = np.rint(series.times * grid_rate).astype(int)
        keep = (idx >= 0) & (idx < n_grid)
        np.add.at(x, idx[keep], series.values[keep])
        scale = 1.0
    else:
        grid_t = np.arange(n_grid) / grid_rate
        if series.times.size:
            x = np.interp(grid_t, series.times, series.values, left=0.0, right=0.0)
        scale = 1.0 / grid_rate
    y = np.convolve(x, kernel)[:n_grid] * scale
    out_t = np.arange(n_scans) / out_rate
    return PredictorSeries(series.name, "continuous", out_t, y[::step])


def zscore_per_run(values: np.ndarray, run_lengths: Sequence[int], ddof: int = 1) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if sum(run_lengths) != len(values):
        raise LengthMismatch(f"run lengths sum to {sum(run_lengths)}, series has {len(values)} samples")
    out = np.empty_like(values)
    start = 0
    for r, n in enumerate(run_lengths):
        seg = values[start : start + n]
        if n < 2:
            raise ZeroVariance(f"run {r} (fewer than 2 samples)")
        sd = seg.std(ddof=ddof)
        if not sd > 1e-12 * max(1.0, np.abs(seg).max()):
            raise ZeroVariance(f"run {r}")
        out[start : start + n] = (seg - seg.mean()) / sd
        start += n
    return out


def orthogonalize(target: np.ndarray, basis: np.ndarray) -> np.ndarray:
    """Residual of ``target`` after least-squares projection onto ``basis`` columns."""
    target = np.asarray(target, dtype=float)
    basis = np.asarray(basis, dtype=float)
    if basis.ndim == 1:
        basis = basis[:, None]
    if basis.shape[0] != target.shape[0]:
        raise LengthMismatch("basis and target lengths differ")
    q, r = np.linalg.qr(basis)
    diag = np.abs(np.diag(r))
    if diag.size == 0 or diag.min() <= 1e-10 * max(diag.max(), 1.0):
        raise RankDeficientBasis("orthogonalization basis is rank deficient")
    return target - q @ (q.T @ target)


@dataclass
class ScreenResult:
    names: list[str]
    r: np.ndarray
    flagged: list[tuple[str, str, float]]
    drop: list[str]
    unresolved: list[tuple[str, str, float]]

    def to_json(self) -> dict:
        return {
            "names": self.names,
            "r": [[round(float(v), 12) for v in row] for row in self.r],
            "flagged": [[a, b, float(v)] for a, b, v in self.flagged],
            "drop": self.drop,
        }


def correlation_screen(
    columns: Mapping[str, np.ndarray],
    threshold: float = 0.95,
    priority: Sequence[str] | None = None,
) -> ScreenResult:
    """Pairwise Pearson correlations with drop recommendations.

    For each pair with ``|r| > threshold`` the column ranked later in
    ``priority`` is dropped; a column missing from ``priority`` ranks after
    every listed one. With ``priority=None`` the column order is used. Pairs
    where neither column is listed are reported as unresolved.
    """
    names = list(columns)
    mat = np.column_stack([np.asarray(columns[n], dtype=float) for n in names]) if names else np.zeros((0, 0))
    if names and mat.shape[0] < 2:
        raise InputError("correlation screen needs at least 2 samples")
    for j, n in enumerate(names):
        if not mat[:, j].std() > 0:
            raise ZeroVariance(f"column {n}")
    r = np.corrcoef(mat, rowvar=False) if names else np.zeros((0, 0))
    r = np.atleast_2d(r)
    r = (r + r.T) / 2
    np.fill_diagonal(r, 1.0)
    order = list(priority) if priority is not None else names
    rank = {n: i for i, n in enumerate(order)}
    flagged, drop, unresolved = [], [], []
    for i in range(len(names)):
        for j in range(i + 1, len(names)):
            if abs(r[i, j]) > threshold:
                a, b = names[i], names[j]
                flagged.append((a, b, float(r[i, j])))
                if a in drop or b in drop:
                    continue
                if a not in rank and b not in rank:
                    unresolved.append((a, b, float(r[i, j])))
                    continue
                ra, rb = rank.get(a, math.inf), rank.get(b, math.inf)
                drop.append(b if ra <= rb else a)
    return ScreenResult(names, r, flagged, drop, unresolved)


# ---------------------------------------------------------------------------
# assembly


@dataclass
class DesignConfig:
    tr: float = 2.0
    grid_rate: float = 50.0
    hrf: HrfParams = field(default_factory=HrfParams)
    skip_first_run: int = 0
    skip_later_runs: int = 0
    zscore_ddof: int = 1
    targets: tuple[str, ...] = ()
    basis: str = "wordrate"
    correlation_threshold: float = 0.95
    drop_priority: tuple[str, ...] | None = None
    n_train: int = 400
    n_test: int = 400

    def to_json(self) -> dict:
        d = asdict(self)
        d["targets"] = list(self.targets)
        d["drop_priority"] = None if self.drop_priority is None else list(self.drop_priority)
        return d


@dataclass
class DesignMatrix:
    names: list[str]
    values: np.ndarray
    run_lengths: list[int]
    times: np.ndarray
    runs: np.ndarray
    rate: float = 0.5
    n_train: int = 400
    n_test: int = 400
    screen: ScreenResult | None = None
    dropped: list[str] = field(default_factory=list)

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.names.index(name)]

    def split(self) -> tuple[slice, slice]:
        if self.n_train + self.n_test > self.n_rows:
            raise InputError(
                f"design has {self.n_rows} rows; split needs {self.n_train} + {self.n_test}"
            )
        return slice(0, self.n_train), slice(self.n_train, self.n_train + self.n_test)

    def split_labels(self) -> list[str]:
        out = [""] * self.n_rows
        for i in range(min(self.n_train, self.n_rows)):
            out[i] = "train"
        for i in range(self.n_train, min(self.n_train + self.n_test, self.n_rows)):
            out[i] = "test"
        return out


def _run_columns(
    events: Sequence[WordEvent],
    word_values: Mapping[str, Sequence[float]],
    covariates: Mapping[str, PredictorSeries],
    n_scans: int,
    run_start: float,
    kernel: np.ndarray,
    cfg: DesignConfig,
) -> dict[str, np.ndarray]:
    cols = {}
    out_rate = 1.0 / cfg.tr
    cols["wordrate"] = convolve_resample(
        impulses_from_events(events), kernel, n_scans, out_rate=out_rate, grid_rate=cfg.grid_rate
    ).values
    for name, vals in word_values.items():
        s = impulses_from_events(events, vals, name)
        cols[name] = convolve_resample(s, kernel, n_scans, out_rate=out_rate, grid_rate=cfg.grid_rate).values
    for name, series in covariates.items():
        local = PredictorSeries(name, "continuous", series.times - run_start, series.values)
        cols[name] = convolve_resample(local, kernel, n_scans, out_rate=out_rate, grid_rate=cfg.grid_rate).values
    return cols


def build_design(
    events: Sequence[WordEvent],
    word_values: Mapping[str, Sequence[float]],
    covariates: Mapping[str, PredictorSeries],
    scans_per_run: Mapping[int, int],
    cfg: DesignConfig = DesignConfig(),
) -> DesignMatrix:
    """Assemble the design matrix.

    Covariate series are on the story timeline in which run ``k`` starts at
    the summed durations (scans x TR) of the runs before it. Columns in
    ``cfg.targets`` are orthogonalized against the basis column and a
    constant, then rescaled to unit variance.
    """
    for name, vals in word_values.items():
        if len(vals) != len(events):
            raise LengthMismatch(f"{name}: {len(vals)} values for {len(events)} events")
    kernel = hrf_kernel(cfg.hrf, 1.0 / cfg.grid_rate)
    run_ids = sorted(scans_per_run)
    names = ["wordrate", *word_values, *covariates]
    blocks: dict[str, list[np.ndarray]] = {n: [] for n in names}
    run_lengths, times, runs = [], [], []
    start_time = 0.0
    for k, run in enumerate(run_ids):
        n = scans_per_run[run]
        idx = [i for i, e in enumerate(events) if e.run == run]
        ev = [events[i] for i in idx]
        wv = {name: [vals[i] for i in idx] for name, vals in word_values.items()}
        cols = _run_columns(ev, wv, covariates, n, start_time, kernel, cfg)
        skip = cfg.skip_first_run if k == 0 else cfg.skip_later_runs
        if skip >= n:
            raise InvalidParams(f"run {run}: cannot skip {skip} of {n} volumes")
        for name in names:
            blocks[name].append(cols[name][skip:])
        run_lengths.append(n - skip)
        times.append(start_time + np.arange(skip, n) * cfg.tr)
        runs.append(np.full(n - skip, run))
        start_time += n * cfg.tr
    unknown_events = {e.run for e in events} - set(run_ids)
    if unknown_events:
        raise InputError(f"events refer to runs without a scan count: {sorted(unknown_events)}")

    columns = {}
    for name in names:
        columns[name] = zscore_per_run(np.concatenate(blocks[name]), run_lengths, cfg.zscore_ddof)
    if cfg.targets:
        if cfg.basis not in columns:
            raise InputError(f"basis column {cfg.basis!r} missing")
        basis = np.column_stack([columns[cfg.basis], np.ones(sum(run_lengths))])
        for name in cfg.targets:
            if name not in columns:
                raise InputError(f"target column {name!r} missing")
            if name == cfg.basis:
                continue
            res = orthogonalize(columns[name], basis)
            sd = res.std(ddof=cfg.zscore_ddof)
            if not sd > 1e-10:
                raise ZeroVariance(f"column {name} after orthogonalization")
            columns[name] = res / sd

    screen = correlation_screen(columns, cfg.correlation_threshold, cfg.drop_priority)
    if screen.unresolved:
        a, b, r = screen.unresolved[0]
        raise CollinearityError(a, b, r)
    kept = [n for n in names if n not in screen.drop]
    values = np.column_stack([columns[n] for n in kept])
    return DesignMatrix(
        names=kept,
        values=values,
        run_lengths=run_lengths,
        times=np.concatenate(times),
        runs=np.concatenate(runs),
        rate=1.0 / cfg.tr,
        n_train=cfg.n_train,
        n_test=cfg.n_test,
        screen=screen,
        dropped=list(screen.drop),
    )


# ---------------------------------------------------------------------------
# files


def read_events(lines) -> list[WordEvent]:
    """Read ``word, onset_s, offset_s, run`` TSV (header optional)."""
    out = []
    for lineno, line in enumerate(lines, 1):
        line = line.rstrip("\n")
        if not line.strip():
            continue
        parts = line.split("\t")
        if lineno == 1 and parts[0] == "word":
            continue
        if len(parts) < 4:
            raise InputError(f"events line {lineno}: expected 4 tab-separated fields")
        try:
            out.append(WordEvent(parts[0], float(parts[1]), float(parts[2]), int(parts[3])))
        except ValueError as exc:
            raise InputError(f"events line {lineno}: {exc}") from None
    for a, b in zip(out, out[1:]):
        if a.run == b.run and b.onset < a.onset:
            raise InputError(f"events for run {a.run} are not sorted by onset")
    return out


def read_covariate(lines, name: str) -> PredictorSeries:
    """Read ``#rate_hz=<r>`` then one value per line; sample i is at i / r."""
    rate = None
    vals = []
    for lineno, line in enumerate(lines, 1):
        s = line.strip()
        if not s:
            continue
        try:
            if rate is None:
                if not s.startswith("#rate_hz="):
                    raise InputError(f"covariate {name}: missing '#rate_hz=' header")
                rate = float(s.split("=", 1)[1])
                if not rate > 0:
                    raise InvalidParams(f"covariate {name}: rate must be positive")
                continue
            vals.append(float(s))
        except ValueError:
            raise InputError(f"covariate {name} line {lineno}: not a number: {s!r}") from None
    if rate is None:
        raise InputError(f"covariate {name}: empty file")
    return PredictorSeries(name, "continuous", np.arange(len(vals)) / rate, np.array(vals))
