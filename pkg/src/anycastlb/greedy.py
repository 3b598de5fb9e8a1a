"""Greedy load-management heuristic as a damped ODE, with invariant-preserving integration.

Each node nudges its offload probability against its own overload metric:
dx_i/dt = -sens * x_i (1 - x_i) * ((B x)_i - T_i). The logistic damping
x (1 - x) vanishes at the faces of the unit hypercube, which keeps any
trajectory started in the interior inside the hypercube for all time. The
integrator is classical fixed-step 4th order; a post-step clamp to
[1e-15, 1 - 1e-15] is a numerical guard only and its activations are counted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .model import SystemInstance, routing_matrix

CONVERGED = "converged"
HORIZON_REACHED = "horizon_reached"

INTERIOR = "interior"
AT_ZERO = "at_zero"
AT_ONE = "at_one"

OK = "ok"
OVERLOADED_CONTROLLABLE = "overloaded_controllable"
UNCONTROLLABLE = "uncontrollable"

CLAMP_EPS = 1e-15


@dataclass
class GreedyConfig:
    sensitivity: float = 1.0
    step: float | None = None  # default 0.01 / (sensitivity * max(1, max arrivals))
    horizon: float = 500.0
    conv_tol: float = 1e-8
    conv_window: int = 100
    boundary_eps: float = 1e-3
    record_every: int | None = None  # default keeps about 10k samples in memory

    def __post_init__(self):
        for name in ("sensitivity", "horizon", "conv_tol"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be > 0")
        if self.step is not None and self.step <= 0.0:
            raise ValueError("step must be > 0")
        if self.conv_window < 1:
            raise ValueError("conv_window must be >= 1")
        if not 0.0 < self.boundary_eps < 0.5:
            raise ValueError("boundary_eps must lie in (0, 0.5)")


@dataclass
class Trajectory:
    ts: np.ndarray
    xs: np.ndarray
    ss: np.ndarray
    verdict: str
    t_final: float
    x_final: np.ndarray
    s_final: np.ndarray
    node_classes: list[str]
    steps: int
    clamp_activations: int
    max_excursion: float
    boundary_eps: float

    @property
    def converged(self) -> bool:
        return self.verdict == CONVERGED


@dataclass
class OverloadReport:
    classes: list[str]
    indeterminate: bool

    @property
    def uncontrollable_nodes(self) -> list[int]:
        return [i for i, c in enumerate(self.classes) if c == UNCONTROLLABLE]


@dataclass
class TimeAverageReport:
    s_bar: np.ndarray
    deviation: np.ndarray
    t_start: float
    t_end: float
    interior: bool  # hypothesis: segment strictly inside the hypercube


def default_step(instance: SystemInstance, sensitivity: float) -> float:
    """Keeps the stiffest per-node rate's per-step change around one percent."""
    return 0.01 / (sensitivity * max(1.0, float(instance.arrivals.max(initial=0.0))))


def greedy_derivative(instance: SystemInstance, x, sensitivity: float) -> np.ndarray:
    """dx/dt = -sens * x(1-x) * (Bx - T)."""
    x = np.asarray(x, dtype=float)
    s = routing_matrix(instance) @ x
    return -sensitivity * x * (1.0 - x) * (s - instance.thresholds)


def _rhs(B: np.ndarray, T: np.ndarray, sens: float, x: np.ndarray) -> np.ndarray:
    if x.ndim == 1:
        s = B @ x
    else:
        s = (B @ x[..., None])[..., 0]
    return -sens * x * (1.0 - x) * (s - T)


def _rk4_step(B, T, sens, x, h):
    k1 = _rhs(B, T, sens, x)
    k2 = _rhs(B, T, sens, x + (0.5 * h) * k1)
    k3 = _rhs(B, T, sens, x + (0.5 * h) * k2)
    k4 = _rhs(B, T, sens, x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4), k1


def classify_state(x: np.ndarray, boundary_eps: float) -> list[str]:
    out = []
    for xi in x:
        if xi <= boundary_eps:
            out.append(AT_ZERO)
        elif xi >= 1.0 - boundary_eps:
            out.append(AT_ONE)
        else:
            out.append(INTERIOR)
    return out


def integrate(instance: SystemInstance, x0, config: GreedyConfig | None = None,
              arrivals_fn: Callable[[float], np.ndarray] | None = None) -> Trajectory:
    """Integrate the greedy dynamics from a strictly interior start.

    arrivals_fn, when given, supplies time-varying arrival rates A(t) and is
    evaluated at every integrator stage time. Convergence means the derivative
    sup-norm stayed below conv_tol for conv_window consecutive steps.
    """
    cfg = config or GreedyConfig()
    x = np.asarray(x0, dtype=float).copy()
    if x.shape != (instance.n,):
        raise ValueError(f"x0 must have shape ({instance.n},)")
    if np.any(x <= 0.0) or np.any(x >= 1.0):
        raise ValueError("x0 must lie in the open interior of the hypercube")

    sens = cfg.sensitivity
    h = cfg.step if cfg.step is not None else default_step(instance, sens)
    n_steps = max(1, int(math.ceil(cfg.horizon / h)))
    record_every = cfg.record_every or max(1, n_steps // 10_000)
    T = instance.thresholds
    corr = instance.corr

    def b_at(t: float) -> np.ndarray:
        if arrivals_fn is None:
            return B0
        a = np.asarray(arrivals_fn(t), dtype=float)
        return (corr * a[:, None]).T

    B0 = routing_matrix(instance)

    ts, xs, ss = [0.0], [x.copy()], [b_at(0.0) @ x]
    dwell = 0
    clamp_count = 0
    max_excursion = 0.0
    verdict = HORIZON_REACHED
    t = 0.0
    step_idx = 0
    for step_idx in range(1, n_steps + 1):
        if arrivals_fn is None:
            x_new, k1 = _rk4_step(B0, T, sens, x, h)
        else:
            k1 = _rhs(b_at(t), T, sens, x)
            Bm = b_at(t + 0.5 * h)
            k2 = _rhs(Bm, T, sens, x + (0.5 * h) * k1)
            k3 = _rhs(Bm, T, sens, x + (0.5 * h) * k2)
            k4 = _rhs(b_at(t + h), T, sens, x + h * k3)
            x_new = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        # invariance guard: analytic trajectories never leave [0, 1]
        exc = max(float(-x_new.min(initial=0.0)), float(x_new.max(initial=1.0) - 1.0), 0.0)
        if exc > max_excursion:
            max_excursion = exc
        clipped = np.clip(x_new, CLAMP_EPS, 1.0 - CLAMP_EPS)
        clamp_count += int(np.count_nonzero(clipped != x_new))
        x = clipped
        t = step_idx * h
        if step_idx % record_every == 0:
            ts.append(t)
            xs.append(x.copy())
            ss.append(b_at(t) @ x)
        if float(np.abs(k1).max()) < cfg.conv_tol:
            dwell += 1
            if dwell >= cfg.conv_window:
                verdict = CONVERGED
                break
        else:
            dwell = 0

    if ts[-1] != t:
        ts.append(t)
        xs.append(x.copy())
        ss.append(b_at(t) @ x)
    s_final = b_at(t) @ x
    return Trajectory(
        ts=np.asarray(ts), xs=np.asarray(xs), ss=np.asarray(ss),
        verdict=verdict, t_final=t, x_final=x.copy(), s_final=s_final,
        node_classes=classify_state(x, cfg.boundary_eps),
        steps=step_idx, clamp_activations=clamp_count,
        max_excursion=max_excursion, boundary_eps=cfg.boundary_eps,
    )


def detect_uncontrollable(trajectory: Trajectory, instance: SystemInstance,
                          boundary_eps: float | None = None,
                          overload_tol: float = 1e-6) -> OverloadReport:
    """Classify each node's steady state.

    A node is locally uncontrollable when its proxy stays overloaded although
    its DNS already offloads everything: S_i > T_i + tol with x_i at zero.
    Overload with an offload probability still above the boundary band is
    controllable; everything else is fine. Non-converged trajectories yield
    an indeterminate (flagged) verdict over the final state.
    """
    eps = boundary_eps if boundary_eps is not None else trajectory.boundary_eps
    classes = []
    for xi, si, ti in zip(trajectory.x_final, trajectory.s_final, instance.thresholds):
        if si > ti + overload_tol:
            classes.append(UNCONTROLLABLE if xi <= eps else OVERLOADED_CONTROLLABLE)
        else:
            classes.append(OK)
    return OverloadReport(classes=classes, indeterminate=not trajectory.converged)


def _simpson_uniform(y: np.ndarray, dt: float) -> float:
    """Composite Simpson on uniform samples; 3/8 rule absorbs an odd tail."""
    m = len(y) - 1
    if m < 1:
        raise ValueError("need at least two samples")
    if m == 1:
        return 0.5 * dt * (y[0] + y[1])
    total = 0.0
    if m % 2 == 1:
        if m >= 3:
            total += 3.0 * dt / 8.0 * (y[m - 3] + 3.0 * y[m - 2] + 3.0 * y[m - 1] + y[m])
            y = y[: m - 2]
            m -= 3
        else:
            return 0.5 * dt * (y[0] + y[1])
    if m >= 2:
        total += dt / 3.0 * (y[0] + y[-1] + 4.0 * y[1:-1:2].sum() + 2.0 * y[2:-2:2].sum())
    return total


def time_average_check(instance: SystemInstance, trajectory: Trajectory,
                       t_start: float | None = None, t_end: float | None = None) -> TimeAverageReport:
    """Mean load over [t_start, t_end] against the thresholds.

    Quadrature is composite Simpson on the recorded samples, matching the
    integrator's order. Averages over one period of an interior orbit land on
    the thresholds; a fixed interior steady state is the degenerate case.
    Flags (rather than fails) segments touching the hypercube boundary.
    """
    ts = trajectory.ts
    t0 = ts[0] if t_start is None else t_start
    t1 = ts[-1] if t_end is None else t_end
    idx = np.flatnonzero((ts >= t0 - 1e-12) & (ts <= t1 + 1e-12))
    if len(idx) < 2:
        raise ValueError("segment contains fewer than two samples")
    seg_t = ts[idx]
    dts = np.diff(seg_t)
    # the sample appended at termination may sit off the record grid
    if len(seg_t) >= 3 and abs(dts[-1] - dts[0]) > 1e-9 * max(dts[0], 1.0):
        idx = idx[:-1]
        seg_t = ts[idx]
        dts = np.diff(seg_t)
    if dts.max() - dts.min() > 1e-9 * max(dts.max(), 1.0):
        raise ValueError("segment samples are not uniformly spaced")
    dt = float(dts.mean())
    seg_x = trajectory.xs[idx]
    seg_s = trajectory.ss[idx]
    interior = bool(seg_x.min() > 2.0 * CLAMP_EPS and seg_x.max() < 1.0 - 2.0 * CLAMP_EPS)
    span = seg_t[-1] - seg_t[0]
    s_bar = np.array([_simpson_uniform(seg_s[:, i], dt) / span for i in range(instance.n)])
    return TimeAverageReport(
        s_bar=s_bar, deviation=s_bar - instance.thresholds,
        t_start=float(seg_t[0]), t_end=float(seg_t[-1]), interior=interior,
    )


def find_period(trajectory: Trajectory, tol: float = 1e-6, min_period: float = 1e-6) -> float | None:
    """Detect a recurrence of the final state: span back to the latest sample
    at least min_period earlier with |x(t) - x(end)|_inf < tol.

    min_period must exceed the trivial band of samples adjacent to the end
    (pass about half the expected period when one is known).
    """
    ts, xs = trajectory.ts, trajectory.xs
    x_end = xs[-1]
    t_end = ts[-1]
    dist = np.abs(xs - x_end[None, :]).max(axis=1)
    idx = np.flatnonzero((dist < tol) & (t_end - ts > min_period))
    if len(idx) == 0:
        return None
    # latest eligible cluster; within it, the best-matching sample
    k = len(idx) - 1
    while k > 0 and idx[k - 1] == idx[k] - 1:
        k -= 1
    cluster = idx[k:]
    best = cluster[int(np.argmin(dist[cluster]))]
    return float(t_end - ts[best])


def vector_field_grid(instance: SystemInstance, resolution: int, sensitivity: float = 1.0) -> np.ndarray:
    """(x1, x2, dx1, dx2) rows over a resolution x resolution grid; two-node only."""
    if instance.n != 2:
        raise ValueError("vector-field grids are two-node only")
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    axis = np.linspace(0.0, 1.0, resolution)
    B = routing_matrix(instance)
    rows = np.empty((resolution * resolution, 4))
    k = 0
    for x1 in axis:
        for x2 in axis:
            x = np.array([x1, x2])
            d = -sensitivity * x * (1.0 - x) * (B @ x - instance.thresholds)
            rows[k] = (x1, x2, d[0], d[1])
            k += 1
    return rows


def write_trajectory_csv(trajectory: Trajectory, path, max_rows: int = 10_000) -> None:
    """t, x_1..x_n, S_1..S_n rows, downsampled to at most max_rows."""
    n = trajectory.xs.shape[1]
    total = len(trajectory.ts)
    stride = max(1, -(-total // max_rows))
    idx = list(range(0, total, stride))
    if idx[-1] != total - 1:
        idx.append(total - 1)
    with open(path, "w", encoding="utf-8") as fh:
        hdr = "t," + ",".join(f"x_{i+1}" for i in range(n)) + "," + ",".join(f"s_{i+1}" for i in range(n))
        fh.write(hdr + "\n")
        for i in idx:
            row = [repr(float(trajectory.ts[i]))]
            row += [repr(float(v)) for v in trajectory.xs[i]]
            row += [repr(float(v)) for v in trajectory.ss[i]]
            fh.write(",".join(row) + "\n")


# ---------------------------------------------------------------------------
# Batched integration (used by the experiment harness)
# ---------------------------------------------------------------------------

@dataclass
class BatchResult:
    x_final: np.ndarray  # (m, n)
    s_final: np.ndarray
    converged: np.ndarray  # (m,) bool
    steps: np.ndarray
    max_excursion: float


def integrate_batch(B_stack: np.ndarray, thresholds: np.ndarray, x0: np.ndarray,
                    h: np.ndarray, config: GreedyConfig) -> BatchResult:
    """Integrate m independent instances side by side.

    Same fourth-order stepping and clamp as integrate(); trials carry their
    own step sizes and drop out of the active set as they converge or reach
    the horizon. Batching exists purely so Monte-Carlo sweeps amortize the
    stepping cost across trials.
    """
    m, n = x0.shape
    sens = config.sensitivity
    x = x0.copy()
    hcol = np.asarray(h, dtype=float).reshape(m, 1)
    T = np.asarray(thresholds, dtype=float)
    active = np.arange(m)
    steps = np.zeros(m, dtype=np.int64)
    dwell = np.zeros(m, dtype=np.int64)
    done_conv = np.zeros(m, dtype=bool)
    max_steps = np.ceil(config.horizon / hcol[:, 0]).astype(np.int64)
    max_excursion = 0.0

    B_act, x_act, h_act = B_stack, x, hcol
    dwell_act = dwell.copy()
    step_act = steps.copy()
    while len(active):
        x_new, k1 = _rk4_step(B_act, T, sens, x_act, h_act)
        exc = max(float(-x_new.min(initial=0.0)), float(x_new.max(initial=1.0) - 1.0), 0.0)
        if exc > max_excursion:
            max_excursion = exc
        x_act = np.clip(x_new, CLAMP_EPS, 1.0 - CLAMP_EPS)
        step_act += 1
        small = np.abs(k1).max(axis=1) < config.conv_tol
        dwell_act = np.where(small, dwell_act + 1, 0)
        conv = dwell_act >= config.conv_window
        horizon_hit = step_act >= max_steps[active]
        finished = conv | horizon_hit
        if finished.any():
            fin_idx = active[finished]
            x[fin_idx] = x_act[finished]
            steps[fin_idx] = step_act[finished]
            done_conv[fin_idx] = conv[finished]
            keep = ~finished
            active = active[keep]
            B_act = B_act[keep]
            x_act = x_act[keep]
            h_act = h_act[keep]
            dwell_act = dwell_act[keep]
            step_act = step_act[keep]

    s_final = (B_stack @ x[..., None])[..., 0]
    return BatchResult(x_final=x, s_final=s_final, converged=done_conv,
                       steps=steps, max_excursion=max_excursion)
