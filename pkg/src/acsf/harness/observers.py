"""Per-step observers: time series recording, snapshot emission and CSV I/O."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence

import numpy as np

from ..aniso import Anisotropy
from ..geom import DiscreteCurve, error_norms, ratio, write_curve_csv, write_svg
from ..metric import Graph, MetricField, graph_embed
from .analysis import discrete_energy
from .exact import ExactSolution

__all__ = ["SeriesRecorder", "SnapshotWriter", "ErrorTracker", "write_series_csv", "read_series_csv"]

SERIES_COLUMNS = ("step", "t", "energy", "ratio", "newton_iters")
ERROR_COLUMNS = ("l2_err", "h1_err")


class ErrorTracker:
    """Error norms against an exact solution at every observed step, with running maxima."""

    def __init__(self, exact: ExactSolution):
        self.exact = exact
        self.max_l2 = 0.0
        self.max_h1 = 0.0
        self.last = (np.nan, np.nan)

    def __call__(self, m, curve, report):
        pos, der = self.exact.at(curve.time)
        l2, h1 = error_norms(curve, pos, der)
        self.max_l2 = max(self.max_l2, l2)
        self.max_h1 = max(self.max_h1, h1)
        self.last = (l2, h1)


class SeriesRecorder:
    """Records ``step, t, energy, ratio, newton_iters`` every ``stride`` steps.

    ``energy`` is the lumped energy the scheme is stable in. The discrete
    energy ``E^h`` is recorded alongside when ``density`` is given. With an
    :class:`ErrorTracker` the current error norms are appended as well.
    """

    def __init__(
        self,
        energy_fn,
        stride: int = 1,
        final_step: int | None = None,
        density: Anisotropy | None = None,
        errors: ErrorTracker | None = None,
    ):
        if stride < 1:
            raise ValueError("stride must be positive")
        self.energy_fn = energy_fn
        self.stride = int(stride)
        self.final_step = final_step
        self.density = density
        self.errors = errors
        self.rows: list[tuple] = []
        self.discrete_energy: list[float] = []

    @property
    def columns(self) -> tuple:
        return SERIES_COLUMNS + (ERROR_COLUMNS if self.errors is not None else ())

    def __call__(self, m, curve, report):
        self._last = (m, curve, report)
        if m % self.stride and m != self.final_step and report is not None:
            return
        self._record(m, curve, report)

    def _record(self, m, curve, report):
        energy = self.energy_fn(curve) if report is None else report.energy_after
        iters = 0 if report is None else report.newton_iters
        row = (int(m), float(curve.time), float(energy), ratio(curve), int(iters))
        if self.errors is not None:
            row = row + tuple(float(v) for v in self.errors.last)
        self.rows.append(row)
        if self.density is not None:
            self.discrete_energy.append(discrete_energy(self.density, curve))

    def finish(self) -> None:
        """Record the last observed step if the stride skipped it (early stop)."""
        last = getattr(self, "_last", None)
        if last is not None and (not self.rows or self.rows[-1][0] != last[0]):
            self._record(*last)

    def as_dict(self) -> dict:
        cols = self.columns
        out = {c: [r[i] for r in self.rows] for i, c in enumerate(cols)}
        if self.density is not None:
            out["discrete_energy"] = list(self.discrete_energy)
        return out


class SnapshotWriter:
    """Writes ``snap_<step>.svg`` and ``snap_<step>.csv`` at the steps nearest to ``times``.

    For graph metrics the lifted surface points go to ``snap_<step>_surface.csv``.
    """

    def __init__(self, out_dir, times: Sequence[float], dt: float, final_step: int, metric: MetricField | None = None):
        self.out_dir = Path(out_dir)
        self.steps = sorted({min(int(round(t / dt)), final_step) for t in times})
        self.metric = metric
        self.curves: list[DiscreteCurve] = []
        self.files: list[str] = []
        self.written: list[int] = []

    def __call__(self, m, curve, report):
        if m not in self.steps:
            return
        self.curves.append(curve)
        self.written.append(int(m))
        svg = write_svg(curve, self.out_dir / f"snap_{m}.svg")
        pts = write_curve_csv(curve, self.out_dir / f"snap_{m}.csv")
        self.files += [svg.name, pts.name]
        if isinstance(self.metric, Graph):
            path = self.out_dir / f"snap_{m}_surface.csv"
            xyz = graph_embed(self.metric, curve)
            with path.open("w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["x1", "x2", "x3"])
                for p in xyz:
                    w.writerow([repr(float(v)) for v in p])
            self.files.append(path.name)

    def overlay(self, name: str = "snapshots.svg") -> str | None:
        if not self.curves:
            return None
        write_svg(self.curves, self.out_dir / name)
        self.files.append(name)
        return name


def write_series_csv(series: dict, columns: Sequence[str], path) -> Path:
    """Write a column dictionary as CSV; floats use ``repr`` so re-reading is exact."""
    path = Path(path)
    n = len(series[columns[0]])
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for i in range(n):
            w.writerow([_cell(series[c][i]) for c in columns])
    return path


def _cell(v) -> str:
    if isinstance(v, (int, np.integer)):
        return repr(int(v))
    return repr(float(v))


def read_series_csv(path) -> dict:
    """Inverse of :func:`write_series_csv`; integer columns stay integers."""
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        columns = next(reader)
        data = {c: [] for c in columns}
        for row in reader:
            for c, v in zip(columns, row):
                data[c].append(int(v) if c in ("step", "newton_iters") else float(v))
    return data
