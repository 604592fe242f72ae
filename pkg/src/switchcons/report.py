"""Convergence-rate fitting, CSV export and static SVG plots."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence
from xml.sax.saxutils import escape

import numpy as np
from scipy import stats

LOG_FLOOR = 1e-12
MIN_FIT_SAMPLES = 10
MAX_POLYLINE_POINTS = 2000
CSV_FORMAT = "%.12g"


@dataclass(frozen=True)
class RateFit:
    """Least-squares fit of ``ln ||error(t)||`` against ``t``.

    ``slope`` is NaN and ``converged`` is True when every sample in the window
    sits below the log floor.
    """

    slope: float
    intercept: float
    fit_window: tuple
    r_squared: float
    n_samples: int
    converged: bool = False

    @property
    def status(self) -> str:
        if self.converged:
            return "already converged"
        return "decaying" if self.slope < 0 else "not decaying"

    def summary(self) -> str:
        t0, t1 = self.fit_window
        if self.converged:
            return f"fit window [{t0:.6g}, {t1:.6g}]: already converged (all samples < {LOG_FLOOR:g})"
        return (
            f"fit window [{t0:.6g}, {t1:.6g}]: slope {self.slope:.6g} /s, "
            f"r^2 {self.r_squared:.4f} over {self.n_samples} samples ({self.status})"
        )


def fit_series(times, values, t_start=0.0) -> RateFit:
    """Fit ``ln(values)`` on ``t >= t_start``, skipping samples below 1e-12."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if times.shape != values.shape:
        raise ValueError("times and values must have the same shape")
    in_window = times >= t_start
    if not in_window.any():
        raise ValueError(f"no samples at or after t_start = {t_start}")
    window = (float(times[in_window][0]), float(times[in_window][-1]))
    usable = in_window & (np.abs(values) >= LOG_FLOOR)
    count = int(usable.sum())
    if count == 0:
        return RateFit(math.nan, math.nan, window, math.nan, 0, converged=True)
    if count < MIN_FIT_SAMPLES:
        raise ValueError(
            f"need at least {MIN_FIT_SAMPLES} samples above {LOG_FLOOR:g} after "
            f"t = {t_start}, found {count}"
        )
    t = times[usable]
    y = np.log(np.abs(values[usable]))
    if np.ptp(y) == 0.0:
        return RateFit(0.0, float(y[0]), window, 1.0, count)
    res = stats.linregress(t, y)
    return RateFit(float(res.slope), float(res.intercept), window, float(res.rvalue**2), count)


def fit_decay_rate(trajectory, t_start=0.0) -> RateFit:
    """Exponential rate of ``trajectory.error_norms`` from ``t_start`` to the horizon."""
    return fit_series(trajectory.times, trajectory.error_norms, t_start)


def write_csv(trajectory, destination) -> int:
    """Write ``t,agent,component,value,error_norm`` rows; return the data row count.

    The leader is agent 0 and followers (or observers) are agents 1..N.
    Components are numbered from 1. Rows are ordered by time, then agent,
    then component.
    """
    times = trajectory.times
    states = _all_agents(trajectory)
    norms = trajectory.error_norms
    fmt = lambda v: CSV_FORMAT % v  # noqa: E731
    rows = 0

    def emit(fh):
        nonlocal rows
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", "agent", "component", "value", "error_norm"])
        for i, t in enumerate(times):
            ts, en = fmt(t), fmt(norms[i])
            for a in range(states.shape[1]):
                for c in range(states.shape[2]):
                    writer.writerow([ts, a, c + 1, fmt(states[i, a, c]), en])
                    rows += 1

    if hasattr(destination, "write"):
        emit(destination)
    else:
        with open(destination, "w", newline="") as fh:
            emit(fh)
    return rows


def _all_agents(trajectory):
    times = np.asarray(trajectory.times)
    if times.size == 0:
        return np.zeros((0, 0, 0))
    return np.concatenate([trajectory.leader_states[:, None, :], trajectory.agent_states], axis=1)


@dataclass
class Series:
    label: str
    times: np.ndarray
    values: np.ndarray
    emphasize: bool = False


def component_series(trajectory, component: int, leader_label="leader", agent_label="agent"):
    """Leader plus one series per agent for a 0-based state component."""
    out = [
        Series(leader_label, trajectory.times, trajectory.leader_states[:, component], True)
    ]
    for a in range(trajectory.n_agents):
        out.append(
            Series(f"{agent_label} {a + 1}", trajectory.times, trajectory.agent_states[:, a, component])
        )
    return out


def error_norm_series(trajectory, envelope=None):
    out = [Series("||error||", trajectory.times, trajectory.error_norms, True)]
    if envelope is not None:
        out.append(Series("certified envelope", trajectory.times, np.asarray(envelope)))
    return out


@dataclass
class PlotOptions:
    title: str = ""
    xlabel: str = "t [s]"
    ylabel: str = ""
    log_y: bool = False
    width: int = 720
    height: int = 420
    notes: list = field(default_factory=list)


_PALETTE = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#9467bd", "#8c564b",
    "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
)


def _ticks(lo, hi, count=5):
    if hi == lo:
        return [lo]
    return list(np.linspace(lo, hi, count))


def render_svg(series: Sequence[Series], destination, options: Optional[PlotOptions] = None) -> str:
    """Write a static line plot with one polyline per series; return the SVG text.

    On a log axis, values at or below 1e-12 are drawn at 1e-12 and a
    footnote says so.
    """
    if not series:
        raise ValueError("render_svg needs at least one series")
    opt = options or PlotOptions()
    W, H = opt.width, opt.height
    left, right, top, bottom = 70, 150, 40, 60
    pw, ph = W - left - right, H - top - bottom

    clamped = False
    prepared = []
    for s in series:
        t = np.asarray(s.times, dtype=float)
        v = np.asarray(s.values, dtype=float)
        if opt.log_y:
            low = ~(v > LOG_FLOOR)
            clamped |= bool(low.any())
            v = np.log10(np.where(low, LOG_FLOOR, v))
        stride = max(1, math.ceil(len(t) / MAX_POLYLINE_POINTS))
        idx = np.arange(0, len(t), stride)
        if len(t) and idx[-1] != len(t) - 1:
            idx = np.append(idx, len(t) - 1)
        prepared.append((s, t[idx], v[idx]))

    all_t = np.concatenate([p[1] for p in prepared])
    all_v = np.concatenate([p[2] for p in prepared])
    finite = np.isfinite(all_v)
    tmin, tmax = (float(all_t.min()), float(all_t.max())) if all_t.size else (0.0, 1.0)
    vmin, vmax = (float(all_v[finite].min()), float(all_v[finite].max())) if finite.any() else (0.0, 1.0)
    if tmax == tmin:
        tmax = tmin + 1.0
    if vmax == vmin:
        pad = 1.0 if vmin == 0 else 0.1 * abs(vmin)
        vmin, vmax = vmin - pad, vmax + pad

    def sx(t):
        return left + (t - tmin) / (tmax - tmin) * pw

    def sy(v):
        return top + (vmax - v) / (vmax - vmin) * ph

    parts = [
        '<?xml version="1.0" encoding="UTF-8" standalone="no"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{W}" height="{H}" '
        f'viewBox="0 0 {W} {H}">',
        f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    if opt.title:
        parts.append(
            f'<text x="{left + pw / 2:.1f}" y="24" text-anchor="middle" font-size="15" '
            f'font-family="sans-serif">{escape(opt.title)}</text>'
        )
    for tv in _ticks(tmin, tmax):
        x = sx(tv)
        parts.append(f'<line x1="{x:.2f}" y1="{top + ph}" x2="{x:.2f}" y2="{top + ph + 5}" stroke="black"/>')
        parts.append(
            f'<text x="{x:.2f}" y="{top + ph + 18}" text-anchor="middle" font-size="11" '
            f'font-family="sans-serif">{tv:.3g}</text>'
        )
    for vv in _ticks(vmin, vmax):
        y = sy(vv)
        label = f"1e{vv:.1f}" if opt.log_y else f"{vv:.3g}"
        parts.append(f'<line x1="{left - 5}" y1="{y:.2f}" x2="{left}" y2="{y:.2f}" stroke="black"/>')
        parts.append(
            f'<text x="{left - 8}" y="{y + 4:.2f}" text-anchor="end" font-size="11" '
            f'font-family="sans-serif">{label}</text>'
        )
    parts.append(
        f'<text x="{left + pw / 2:.1f}" y="{top + ph + 34}" text-anchor="middle" font-size="12" '
        f'font-family="sans-serif">{escape(opt.xlabel)}</text>'
    )
    if opt.ylabel:
        parts.append(
            f'<text x="16" y="{top + ph / 2:.1f}" text-anchor="middle" font-size="12" '
            f'font-family="sans-serif" transform="rotate(-90 16 {top + ph / 2:.1f})">'
            f"{escape(opt.ylabel + (' (log10)' if opt.log_y else ''))}</text>"
        )

    k = 0
    for i, (s, t, v) in enumerate(prepared):
        if s.emphasize:
            color, width = "black", 2.5
        else:
            color, width = _PALETTE[k % len(_PALETTE)], 1.2
            k += 1
        ok = np.isfinite(v)
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(t[ok], v[ok]))
        parts.append(
            f'<polyline fill="none" stroke="{color}" stroke-width="{width}" points="{pts}">'
            f"<title>{escape(s.label)}</title></polyline>"
        )
        ly = top + 12 + 16 * i
        lx = left + pw + 12
        parts.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 18}" y2="{ly}" stroke="{color}" stroke-width="{width}"/>')
        parts.append(
            f'<text x="{lx + 24}" y="{ly + 4}" font-size="11" font-family="sans-serif">'
            f"{escape(s.label)}</text>"
        )

    notes = list(opt.notes)
    if clamped:
        notes.append(f"* values <= {LOG_FLOOR:g} are clamped to {LOG_FLOOR:g} on the log axis")
    for i, note in enumerate(notes):
        parts.append(
            f'<text x="{left}" y="{H - 6 - 14 * (len(notes) - 1 - i)}" font-size="10" '
            f'font-family="sans-serif" fill="#444">{escape(note)}</text>'
        )
    parts.append("</svg>")
    text = "\n".join(parts) + "\n"
    if hasattr(destination, "write"):
        destination.write(text)
    else:
        with open(destination, "w") as fh:
            fh.write(text)
    return text
