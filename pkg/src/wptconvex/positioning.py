"""Max-min transmitter placement by successive inner approximation.

A transmitter at p = (x, y) delivers Q_n = q0 / d_n to receiver n, where
d_n = |p - r_n|^2 is the pathloss. Harvested power is convex and decreasing
in d_n, so its tangent in d_n is a global under-estimator:

    P_n(d) >= P_n(d0) - s_n (d - d0),      s_n = -P_n'(d0) > 0.

Replacing every P_n by its tangent turns max_p min_n P_n into the
maximisation of a minimum of concave quadratics over the box, solved here
exactly. Iterating from the new point never decreases the objective.
"""

from __future__ import annotations

import enum
import itertools
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import rectifier
from .calculus import dpdc_dd
from .errors import GridTooLargeError, ValidationError
from .rectifier import HarvestModel, RectifierParams, build_model
from .waveforms import builtin_waveform

log = logging.getLogger(__name__)

#: Pathloss floor (m^2). Q = q0/d diverges at a receiver; closer points are clamped.
D_FLOOR = 1e-6
#: Default cap on exhaustive-search cells before an explicit override is needed.
MAX_GRID_CELLS = 10_000_000
_ROW_BLOCK_CELLS = 1 << 20


@dataclass(frozen=True)
class Scenario:
    """Receiver layout, search box and harvest model.

    ``box`` is (x_min, x_max, y_min, y_max); it defaults to the receiver extremes.
    ``q0_dbm`` and ``tx_power_dbm`` are kept only for provenance.
    """

    receivers: np.ndarray
    q0: float
    model: HarvestModel
    box: tuple | None = None
    q0_dbm: float | None = None
    tx_power_dbm: float | None = None

    def __post_init__(self):
        pts = np.array(self.receivers, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 1:
            raise ValidationError("receivers must be a non-empty list of (x, y) pairs")
        if not np.all(np.isfinite(pts)):
            raise ValidationError("receiver coordinates must be finite")
        if not (isinstance(self.q0, (int, float)) and math.isfinite(self.q0) and self.q0 > 0):
            raise ValidationError(f"q0 must be finite and > 0, got {self.q0!r}")
        if self.box is None:
            box = (pts[:, 0].min(), pts[:, 0].max(), pts[:, 1].min(), pts[:, 1].max())
        else:
            box = tuple(self.box)
            if len(box) != 4:
                raise ValidationError("box must be (x_min, x_max, y_min, y_max)")
        box = tuple(float(v) for v in box)
        x_min, x_max, y_min, y_max = box
        if not all(math.isfinite(v) for v in box) or x_min > x_max or y_min > y_max:
            raise ValidationError(f"box {box} is empty or not finite")
        if x_min > pts[:, 0].min() or x_max < pts[:, 0].max() or y_min > pts[:, 1].min() or y_max < pts[:, 1].max():
            raise ValidationError("box must contain every receiver")
        pts.setflags(write=False)
        object.__setattr__(self, "receivers", pts)
        object.__setattr__(self, "box", box)

    @property
    def n_receivers(self) -> int:
        return len(self.receivers)

    def contains(self, p, tol: float = 0.0) -> bool:
        x_min, x_max, y_min, y_max = self.box
        return x_min - tol <= p[0] <= x_max + tol and y_min - tol <= p[1] <= y_max + tol

    def clip(self, p) -> np.ndarray:
        x_min, x_max, y_min, y_max = self.box
        return np.array([min(max(p[0], x_min), x_max), min(max(p[1], y_min), y_max)])

    def centroid(self) -> np.ndarray:
        return self.clip(self.receivers.mean(axis=0))

    def near_receiver(self, index: int, offset: float = 1e-2) -> np.ndarray:
        """Point ``offset`` metres from receiver ``index`` towards the centroid."""
        if not 0 <= index < self.n_receivers:
            raise ValidationError(f"receiver index {index} out of range")
        r = self.receivers[index]
        direction = self.receivers.mean(axis=0) - r
        norm = np.hypot(*direction)
        step = direction / norm if norm > 0 else np.array([1.0, 0.0])
        return self.clip(r + offset * step)


def pathloss(p, receiver):
    """Squared Euclidean distance; broadcasts over leading axes."""
    p = np.asarray(p, dtype=float)
    r = np.asarray(receiver, dtype=float)
    diff = p - r
    return np.sum(diff * diff, axis=-1)


def _pathlosses(scenario: Scenario, points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    return pathloss(pts[..., None, :], scenario.receivers)


def harvest_all(scenario: Scenario, p) -> np.ndarray:
    """Per-receiver harvested power at transmitter position(s) ``p``."""
    d = np.maximum(_pathlosses(scenario, p), D_FLOOR)
    return rectifier.p_dc(scenario.model, scenario.q0 / d)


def _min_harvest_points(scenario: Scenario, points) -> np.ndarray:
    # P_dc is strictly decreasing in d, so the weakest receiver is the farthest one
    d_max = np.max(_pathlosses(scenario, points), axis=-1)
    return rectifier.p_dc(scenario.model, scenario.q0 / np.maximum(d_max, D_FLOOR))


def min_harvest(scenario: Scenario, p):
    """Smallest harvested DC power over all receivers."""
    out = _min_harvest_points(scenario, p)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class Surrogate:
    """Tangent of each P_n in the pathloss at an anchor position.

    ``lower(p)[n] = power0[n] - slope[n] * (d_n(p) - pathloss0[n])`` is a lower
    bound on P_n(p); the negated value is the majorant of -P_n.
    """

    anchor: np.ndarray
    pathloss0: np.ndarray
    power0: np.ndarray
    slope: np.ndarray
    clamped: np.ndarray
    receivers: np.ndarray

    @property
    def offset(self) -> np.ndarray:
        """c_n in the expanded form c_n - slope_n * d_n."""
        return self.power0 + self.slope * self.pathloss0

    def lower(self, p) -> np.ndarray:
        d = pathloss(np.asarray(p, dtype=float)[..., None, :], self.receivers)
        return self.power0 - self.slope * (d - self.pathloss0)

    def value(self, p):
        out = np.min(self.lower(p), axis=-1)
        return float(out) if np.ndim(out) == 0 else out


def build_surrogate(scenario: Scenario, anchor) -> Surrogate:
    """Tangent under-estimators of every P_n at ``anchor``."""
    anchor = np.asarray(anchor, dtype=float)
    if anchor.shape != (2,) or not np.all(np.isfinite(anchor)):
        raise ValidationError("anchor must be a finite (x, y) pair")
    raw = pathloss(anchor, scenario.receivers)
    clamped = raw < D_FLOOR
    d0 = np.maximum(raw, D_FLOOR)
    power0 = rectifier.p_dc(scenario.model, scenario.q0 / d0)
    slope = -np.asarray(dpdc_dd(scenario.model, scenario.q0, d0))
    if np.any(clamped):
        log.info("surrogate anchor within the pathloss floor of receivers %s", np.flatnonzero(clamped).tolist())
    return Surrogate(anchor, d0, np.asarray(power0), slope, clamped, scenario.receivers)


def _quad_roots(a, b, c):
    """Real roots of a s^2 + b s + c = 0 (stable form)."""
    if a == 0.0:
        return [] if b == 0.0 else [-c / b]
    disc = b * b - 4.0 * a * c
    if disc < 0.0:
        # tangency lost to rounding
        if disc < -1e-12 * b * b:
            return []
        disc = 0.0
    q = -0.5 * (b + math.copysign(math.sqrt(disc), b))
    if q == 0.0:
        return [0.0]
    return [q / a, c / q]


class _SubproblemGeometry:
    """Concave quadratics q_n(p) = c_n - a_n |p - r_n|^2 in box-centred, rescaled units."""

    def __init__(self, scenario: Scenario, surrogate: Surrogate):
        x_min, x_max, y_min, y_max = scenario.box
        self.center = np.array([0.5 * (x_min + x_max), 0.5 * (y_min + y_max)])
        self.half = np.array([0.5 * (x_max - x_min), 0.5 * (y_max - y_min)])
        scale = float(np.max(np.abs(surrogate.power0))) or 1.0
        self.r = scenario.receivers - self.center
        self.a = surrogate.slope / scale
        self.c = surrogate.offset / scale
        self.n = len(self.a)

    def on_line(self, k, p0, v):
        """Coefficients of q_k(p0 + s v) as a quadratic in s."""
        w = p0 - self.r[k]
        return (-self.a[k] * (v @ v), -2.0 * self.a[k] * (w @ v), self.c[k] - self.a[k] * (w @ w))

    def difference(self, n, m):
        """q_n - q_m as A |p|^2 + B.p + C."""
        a, r, c = self.a, self.r, self.c
        return (
            a[m] - a[n],
            2.0 * (a[n] * r[n] - a[m] * r[m]),
            c[n] - c[m] - a[n] * (r[n] @ r[n]) + a[m] * (r[m] @ r[m]),
        )

    def equal_on_line(self, n, m, p0, v):
        qn = self.on_line(n, p0, v)
        qm = self.on_line(m, p0, v)
        return _quad_roots(qn[0] - qm[0], qn[1] - qm[1], qn[2] - qm[2])


def _conic_on_line(conic, p0, v):
    A, B, C = conic
    return _quad_roots(A * (v @ v), 2.0 * A * (p0 @ v) + B @ v, A * (p0 @ p0) + B @ p0 + C)


def _line_points(b, c):
    """Point and unit direction of the line b.p + c = 0."""
    nb = b @ b
    if nb == 0.0:
        return None
    return -c * b / nb, np.array([-b[1], b[0]]) / math.sqrt(nb)


def _candidates(geo: _SubproblemGeometry):
    """Points satisfying the optimality conditions for every possible active set.

    At the maximiser of min_n q_n over the box, at most three pieces or box
    faces are active. Single pieces give the clipped peak r_n, pairs give the
    equal-value point on segment r_n r_m or on a box edge, triples give the
    intersections of two equal-value conics, and corners cover the rest.
    """
    hx, hy = geo.half
    pts = [np.clip(geo.r[k], -geo.half, geo.half) for k in range(geo.n)]
    pts += [np.array([sx * hx, sy * hy]) for sx in (-1, 1) for sy in (-1, 1)]
    edges = [
        (np.array([-hx, 0.0]), np.array([0.0, 1.0])),
        (np.array([hx, 0.0]), np.array([0.0, 1.0])),
        (np.array([0.0, -hy]), np.array([1.0, 0.0])),
        (np.array([0.0, hy]), np.array([1.0, 0.0])),
    ]
    a_tiny = 1e-12 * float(np.max(geo.a))
    for n, m in itertools.combinations(range(geo.n), 2):
        seg = geo.r[m] - geo.r[n]
        for t in geo.equal_on_line(n, m, geo.r[n], seg):
            if -1e-12 <= t <= 1.0 + 1e-12:
                pts.append(geo.r[n] + t * seg)
        for p0, v in edges:
            for s in geo.equal_on_line(n, m, p0, v):
                pts.append(p0 + s * v)
    for n, m, k in itertools.combinations(range(geo.n), 3):
        h1 = geo.difference(n, m)
        h2 = geo.difference(n, k)
        if abs(h1[0]) <= a_tiny and abs(h2[0]) <= a_tiny:
            line, conic = _line_points(h1[1], h1[2]), h2
        else:
            if abs(h1[0]) < abs(h2[0]):
                h1, h2 = h2, h1
            line = _line_points(h2[0] * h1[1] - h1[0] * h2[1], h2[0] * h1[2] - h1[0] * h2[2])
            conic = h1
        if line is None:
            continue
        p0, v = line
        for s in _conic_on_line(conic, p0, v):
            pts.append(p0 + s * v)
    return np.array(pts)


def solve_subproblem(scenario: Scenario, surrogate: Surrogate):
    """Maximise min_n surrogate_n(p) over the box.

    Returns ``(position, value)``. The candidate set always includes the
    anchor, so the value never falls below the surrogate at the anchor.
    """
    geo = _SubproblemGeometry(scenario, surrogate)
    cand = _candidates(geo)
    tol = 1e-9 * (1.0 + float(np.max(geo.half)))
    inside = np.all(np.abs(cand) <= geo.half + tol, axis=1) & np.all(np.isfinite(cand), axis=1)
    cand = np.clip(cand[inside], -geo.half, geo.half) + geo.center
    cand = np.vstack([surrogate.anchor[None, :], cand])
    values = surrogate.value(cand)
    best = int(np.argmax(values))
    return cand[best].copy(), float(values[best])


class StopReason(str, enum.Enum):
    TOLERANCE_MET = "tolerance_met"
    MAX_ITERS = "max_iters"


@dataclass
class SiaIteration:
    index: int
    position: tuple
    objective: float
    true_objective: float
    slopes: list
    status: str
    clamped: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "iteration": self.index,
            "x": self.position[0],
            "y": self.position[1],
            "objective_w": self.objective,
            "true_objective_w": self.true_objective,
            "slopes_w_per_m2": list(self.slopes),
            "status": self.status,
            "clamped_receivers": list(self.clamped),
        }


@dataclass
class SiaTrace:
    init: tuple
    init_objective: float
    iterations: list = field(default_factory=list)
    converged: bool = False
    stop_reason: StopReason | None = None

    @property
    def final_position(self) -> np.ndarray:
        return np.array(self.iterations[-1].position)

    @property
    def final_objective(self) -> float:
        return self.iterations[-1].objective

    @property
    def objectives(self) -> list:
        return [it.objective for it in self.iterations]

    @property
    def n_iterations(self) -> int:
        return len(self.iterations)

    def as_dict(self) -> dict:
        return {
            "init": {"x": self.init[0], "y": self.init[1], "objective_w": self.init_objective},
            "converged": self.converged,
            "stop_reason": self.stop_reason.value if self.stop_reason else None,
            "n_iterations": self.n_iterations,
            "final": {
                "x": float(self.final_position[0]),
                "y": float(self.final_position[1]),
                "objective_w": self.final_objective,
            },
            "iterations": [it.as_dict() for it in self.iterations],
        }


def sia_solve(scenario: Scenario, init, max_iters: int = 100, rel_tol: float = 1e-6) -> SiaTrace:
    """Successive inner approximation from ``init``.

    Each step maximises the tangent surrogate around the current point. A step
    is taken only if the true objective at the new point is at least the
    surrogate value, which holds mathematically; the check guards against
    rounding at the fixed point so the recorded objective never decreases.
    """
    init = np.asarray(init, dtype=float)
    if init.shape != (2,) or not np.all(np.isfinite(init)) or not scenario.contains(init):
        raise ValidationError(f"init {init.tolist()} must be a finite point inside the box {scenario.box}")
    if isinstance(max_iters, bool) or int(max_iters) != max_iters or max_iters < 1:
        raise ValidationError("max_iters must be an integer >= 1")
    if not (0.0 < rel_tol <= 1e-2):
        raise ValidationError("rel_tol must lie in (0, 1e-2]")

    anchor = init
    prev = min_harvest(scenario, anchor)
    trace = SiaTrace(init=(float(init[0]), float(init[1])), init_objective=prev)
    for i in range(1, int(max_iters) + 1):
        sur = build_surrogate(scenario, anchor)
        pos, val = solve_subproblem(scenario, sur)
        true_val = min_harvest(scenario, pos)
        status = "accepted"
        if true_val < val or val < prev:
            # the previous step guaranteed min_harvest(anchor) >= prev
            pos, status = anchor, "kept"
            val = true_val = min_harvest(scenario, anchor)
        trace.iterations.append(
            SiaIteration(
                index=i,
                position=(float(pos[0]), float(pos[1])),
                objective=float(val),
                true_objective=float(true_val),
                slopes=[float(s) for s in sur.slope],
                status=status,
                clamped=np.flatnonzero(sur.clamped).tolist(),
            )
        )
        done = abs(val - prev) <= rel_tol * max(val, np.finfo(float).tiny)
        anchor, prev = pos, val
        if done:
            trace.converged = True
            trace.stop_reason = StopReason.TOLERANCE_MET
            break
    else:
        trace.stop_reason = StopReason.MAX_ITERS
    return trace


@dataclass
class GridResult:
    best_position: tuple
    best_value: float
    resolution: float
    neighbor_rel_diff: float
    neighbor_rel_diff_min: float
    shape: tuple
    cells: int

    def as_dict(self) -> dict:
        return {
            "x": self.best_position[0],
            "y": self.best_position[1],
            "best_value_w": self.best_value,
            "resolution_m": self.resolution,
            "neighbor_rel_diff": self.neighbor_rel_diff,
            "neighbor_rel_diff_min": self.neighbor_rel_diff_min,
            "nx": self.shape[0],
            "ny": self.shape[1],
            "cells": self.cells,
        }


def grid_axes(scenario: Scenario, resolution: float):
    x_min, x_max, y_min, y_max = scenario.box
    nx = int(math.floor((x_max - x_min) / resolution + 1e-9)) + 1
    ny = int(math.floor((y_max - y_min) / resolution + 1e-9)) + 1
    return x_min + resolution * np.arange(nx), y_min + resolution * np.arange(ny)


def _rows_best(scenario: Scenario, xs: np.ndarray, ys: np.ndarray):
    """Best value and flat row-major index within a block of rows."""
    X, Y = np.meshgrid(xs, ys)
    vals = _min_harvest_points(scenario, np.stack([X, Y], axis=-1))
    k = int(np.argmax(vals))
    return float(vals.flat[k]), k


def exhaustive_search(
    scenario: Scenario,
    resolution: float,
    max_cells: int = MAX_GRID_CELLS,
    override: bool = False,
    workers: int = 1,
) -> GridResult:
    """Evaluate the max-min objective on every grid point of the box.

    Rows are y, columns x; among equal maxima the first in row-major order wins.
    """
    if not (isinstance(resolution, (int, float)) and math.isfinite(resolution) and resolution > 0):
        raise ValidationError(f"resolution must be > 0, got {resolution!r}")
    xs, ys = grid_axes(scenario, resolution)
    cells = len(xs) * len(ys)
    if cells > max_cells and not override:
        raise GridTooLargeError(cells, max_cells)

    rows = max(1, _ROW_BLOCK_CELLS // len(xs))
    starts = list(range(0, len(ys), rows))
    blocks = [ys[s : s + rows] for s in starts]
    if workers > 1 and len(blocks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_rows_best, [scenario] * len(blocks), [xs] * len(blocks), blocks))
    else:
        results = [_rows_best(scenario, xs, b) for b in blocks]

    best_val, best_flat = -np.inf, 0
    for start, (val, k) in zip(starts, results):
        if val > best_val:
            best_val, best_flat = val, start * len(xs) + k
    iy, ix = divmod(best_flat, len(xs))

    neighbours = [(ix + dx, iy + dy) for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1))]
    neighbours = [(i, j) for i, j in neighbours if 0 <= i < len(xs) and 0 <= j < len(ys)]
    if neighbours:
        pts = np.array([[xs[i], ys[j]] for i, j in neighbours])
        rel = np.abs(best_val - _min_harvest_points(scenario, pts)) / abs(best_val)
        rel_max, rel_min = float(np.max(rel)), float(np.min(rel))
    else:
        rel_max = rel_min = 0.0
    return GridResult(
        best_position=(float(xs[ix]), float(ys[iy])),
        best_value=best_val,
        resolution=float(resolution),
        neighbor_rel_diff=rel_max,
        neighbor_rel_diff_min=rel_min,
        shape=(len(xs), len(ys)),
        cells=cells,
    )


def default_model(waveform: str = "cw") -> HarvestModel:
    params = RectifierParams()
    return build_model(params, builtin_waveform(waveform, params.trunc_order))


def generate_scenario(
    n_receivers: int,
    width: float,
    seed: int,
    q0: float = 0.01,
    model: HarvestModel | None = None,
) -> Scenario:
    """Receivers uniform i.i.d. in [0, width]^2, deterministic per seed."""
    if isinstance(n_receivers, bool) or int(n_receivers) != n_receivers or n_receivers < 1:
        raise ValidationError("n_receivers must be an integer >= 1")
    if not width > 0:
        raise ValidationError("width must be > 0")
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0.0, width, size=(int(n_receivers), 2))
    return Scenario(pts, q0, model if model is not None else default_model())
