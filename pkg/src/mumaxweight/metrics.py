"""Run metrics: queue outage, idle time, average cost, and CSV output."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.signal import lfilter

TRAJECTORY_COLUMNS = ("slot", "queue_id", "backlog", "smoothed_backlog")
SUMMARY_COLUMNS = (
    "policy", "scenario", "seed", "alpha", "avg_cost", "p_out", "underflow_freq",
    "overflow_freq", "sum_idle", "stability_verdict", "slope", "config",
)


@dataclass(frozen=True)
class OutageBand:
    """Acceptable application-buffer range; the cost target sits at its midpoint."""

    lower: float = 10.0
    upper: float = 30.0

    def __post_init__(self):
        if not 0 <= self.lower < self.upper:
            raise ValueError("need 0 <= lower < upper")

    @property
    def target(self) -> float:
        return 0.5 * (self.lower + self.upper)


@dataclass
class MetricsLedger:
    m: int
    app_queues: tuple = ()
    idle_queues: tuple = ()
    band: Optional[OutageBand] = None
    cost: Optional[Callable] = None
    T: int = 0
    f_min: np.ndarray = field(default=None)
    f_max: np.ndarray = field(default=None)
    idle: np.ndarray = field(default=None)
    cumulative_cost: float = 0.0

    def __post_init__(self):
        self.app_queues = tuple(int(i) for i in self.app_queues)
        self.idle_queues = tuple(int(i) for i in self.idle_queues)
        if self.f_min is None:
            self.f_min = np.zeros(self.m, dtype=np.int64)
        if self.f_max is None:
            self.f_max = np.zeros(self.m, dtype=np.int64)
        if self.idle is None:
            self.idle = np.zeros(self.m, dtype=np.int64)
        self._app = np.array(self.app_queues, dtype=int)
        self._idle = np.array(self.idle_queues, dtype=int)

    def record(self, x) -> "MetricsLedger":
        x = np.asarray(x, dtype=float)
        self.T += 1
        if self.band is not None and self._app.size:
            xa = x[self._app]
            self.f_min[self._app] += xa < self.band.lower
            self.f_max[self._app] += xa > self.band.upper
        if self._idle.size:
            self.idle[self._idle] += x[self._idle] == 0
        if self.cost is not None:
            self.cumulative_cost += float(self.cost(x))
        return self

    @property
    def sum_idle(self) -> int:
        return int(self.idle.sum())

    @property
    def average_cost(self) -> float:
        return self.cumulative_cost / self.T if self.T else float("nan")

    def _per_app_slot(self, counts) -> float:
        if self.T == 0:
            raise ZeroDivisionError("no slots recorded")
        n = len(self.app_queues)
        if n == 0:
            return 0.0
        return float(counts[self._app].sum()) / (self.T * n)

    @property
    def underflow_freq(self) -> float:
        return self._per_app_slot(self.f_min)

    @property
    def overflow_freq(self) -> float:
        return self._per_app_slot(self.f_max)

    @property
    def total_outages(self) -> int:
        return int(self.f_min[self._app].sum() + self.f_max[self._app].sum())


def record_slot(ledger: MetricsLedger, x, band=None, cf=None, app_queues=None,
                idle_set=None) -> MetricsLedger:
    """Fold one slot into ``ledger``; keyword overrides replace its configuration."""
    if band is not None:
        ledger.band = band
    if cf is not None:
        ledger.cost = cf
    if app_queues is not None and tuple(app_queues) != ledger.app_queues:
        ledger.app_queues = tuple(int(i) for i in app_queues)
        ledger._app = np.array(ledger.app_queues, dtype=int)
    if idle_set is not None and tuple(idle_set) != ledger.idle_queues:
        ledger.idle_queues = tuple(int(i) for i in idle_set)
        ledger._idle = np.array(ledger.idle_queues, dtype=int)
    return ledger.record(x)


def queue_outage_frequency(ledger: MetricsLedger) -> float:
    """Outage events over ``T * |app_queues|``."""
    if ledger.T == 0:
        raise ZeroDivisionError("no slots recorded")
    return ledger._per_app_slot(ledger.f_min + ledger.f_max)


def exp_average(series, window: int = 100) -> np.ndarray:
    """EWMA with coefficient ``1/window``, seeded with the first sample."""
    if window < 1:
        raise ValueError("window must be >= 1")
    x = np.asarray(series, dtype=float)
    if x.size == 0:
        return x.copy()
    a = 1.0 / window
    zi = np.asarray((1.0 - a) * x[0])[None, ...]
    y, _ = lfilter([a], [1.0, -(1.0 - a)], x, axis=0, zi=zi)
    return y


def write_csv(summary: dict, trajectory, path, run_id: str = "run",
              smoothing_window: int = 100) -> tuple:
    """Write ``{run_id}_trajectory.csv`` and ``{run_id}_summary.csv`` under ``path``.

    ``trajectory`` is a (T, m) backlog array, or None / empty for header-only
    output. Returns the two file paths.
    """
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
        traj_path = out / f"{run_id}_trajectory.csv"
        summ_path = out / f"{run_id}_summary.csv"
        with open(traj_path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(TRAJECTORY_COLUMNS)
            if trajectory is not None and len(trajectory):
                traj = np.asarray(trajectory, dtype=float)
                smooth = exp_average(traj, smoothing_window)
                T, m = traj.shape
                for t in range(T):
                    for i in range(m):
                        w.writerow((t, i, repr(float(traj[t, i])), repr(float(smooth[t, i]))))
        with open(summ_path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(SUMMARY_COLUMNS)
            if summary:
                w.writerow([_fmt(summary.get(c, "")) for c in SUMMARY_COLUMNS])
    except OSError as exc:
        raise OSError(f"failed writing results under {out}: {exc}") from exc
    return traj_path, summ_path


def write_rows(rows: Sequence[dict], columns: Sequence[str], file) -> Path:
    file = Path(file)
    try:
        file.parent.mkdir(parents=True, exist_ok=True)
        with open(file, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(columns)
            for r in rows:
                w.writerow([_fmt(r.get(c, "")) for c in columns])
    except OSError as exc:
        raise OSError(f"failed writing {file}: {exc}") from exc
    return file


def read_csv(file) -> list:
    with open(file, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (list, tuple, np.ndarray)):
        return " ".join(str(_fmt(e)) for e in v)
    return v
