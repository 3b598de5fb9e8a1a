"""System instance: nodes, routing correlations, arrivals, capacities.

The primary layer is a set of N nodes, each a DNS server co-located with an
HTTP proxy of finite capacity. A request answered with the shared anycast
address by node i lands on node j's proxy with probability ``corr[i, j]``;
rows of ``corr`` sum to one. Per-node offload probabilities x (of answering
with the anycast address rather than redirecting to the remote data center)
induce proxy loads S = B x with B = corr^T @ diag(arrivals).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

ROW_SUM_TOL = 1e-12
INGEST_ROW_SUM_TOL = 1e-9


def _as_vector(v, n: int, name: str) -> np.ndarray:
    a = np.asarray(v, dtype=float)
    if a.shape != (n,):
        raise ValueError(f"{name} must have shape ({n},), got {a.shape}")
    return a


@dataclass(frozen=True)
class SystemInstance:
    """Immutable problem datum for one CDN configuration.

    Fields
    ------
    n            number of primary-layer nodes
    corr         (n, n) row-stochastic routing matrix, corr[i, j] >= 0
    arrivals     per-node DNS-query rates A_i >= 0 (normalized request units)
    thresholds   per-node proxy capacities T_i > 0
    eta          per-node delay-cost weights (overload cost), > 0
    gamma_cost   per-node latency-cost weights (offload cost), > 0
    d            per-node round-trip latency parameters to the data center, >= 0
    """

    n: int
    corr: np.ndarray
    arrivals: np.ndarray
    thresholds: np.ndarray
    eta: np.ndarray
    gamma_cost: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        n = int(self.n)
        object.__setattr__(self, "n", n)
        corr = np.asarray(self.corr, dtype=float)
        if corr.shape != (n, n):
            raise ValueError(f"corr must have shape ({n}, {n}), got {corr.shape}")
        object.__setattr__(self, "corr", corr)
        for name in ("arrivals", "thresholds", "eta", "gamma_cost", "d"):
            object.__setattr__(self, name, _as_vector(getattr(self, name), n, name))
        for name in ("corr", "arrivals", "thresholds", "eta", "gamma_cost", "d"):
            getattr(self, name).setflags(write=False)

    @property
    def strictly_positive(self) -> bool:
        """True when every corr entry is > 0 (required by the control-packet channel)."""
        return bool(np.all(self.corr > 0.0))

    def with_arrivals(self, arrivals) -> "SystemInstance":
        return SystemInstance(self.n, self.corr.copy(), np.asarray(arrivals, float),
                              self.thresholds.copy(), self.eta.copy(),
                              self.gamma_cost.copy(), self.d.copy())


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, msg: str) -> None:
        self.violations.append(msg)


def validate(instance: SystemInstance) -> ValidationReport:
    """Check every instance invariant; reports all violations, never raises."""
    rep = ValidationReport()
    c = instance.corr
    row_sums = c.sum(axis=1)
    for i, s in enumerate(row_sums):
        if abs(s - 1.0) > ROW_SUM_TOL:
            rep.add(f"corr row {i} sums to {s!r} (|{s - 1.0:.3e}| > {ROW_SUM_TOL})")
    bad = np.argwhere(c < 0.0)
    for i, j in bad:
        rep.add(f"corr[{i},{j}] = {c[i, j]!r} is negative")
    for name, lo_strict in (("arrivals", False), ("thresholds", True),
                            ("eta", True), ("gamma_cost", True), ("d", False)):
        v = getattr(instance, name)
        if not np.all(np.isfinite(v)):
            rep.add(f"{name} contains non-finite entries")
            continue
        if lo_strict:
            idx = np.flatnonzero(v <= 0.0)
            for i in idx:
                rep.add(f"{name}[{i}] = {v[i]!r} must be > 0")
        else:
            idx = np.flatnonzero(v < 0.0)
            for i in idx:
                rep.add(f"{name}[{i}] = {v[i]!r} must be >= 0")
    if not np.all(np.isfinite(c)):
        rep.add("corr contains non-finite entries")
    return rep


def check_offload(x, n: int) -> np.ndarray:
    """Coerce x to a length-n offload-probability vector in [0, 1]."""
    a = _as_vector(x, n, "x")
    if np.any(a < 0.0) or np.any(a > 1.0):
        raise ValueError(f"offload probabilities must lie in [0, 1], got {a}")
    return a


def routing_matrix(instance: SystemInstance) -> np.ndarray:
    """B = corr^T @ diag(arrivals); B[i, j] = corr[j, i] * arrivals[j]."""
    return instance.corr.T * instance.arrivals[None, :]


def compute_load(instance: SystemInstance, x) -> np.ndarray:
    """Proxy load vector S = B x for offload probabilities x."""
    x = check_offload(x, instance.n)
    return routing_matrix(instance) @ x


# ---------------------------------------------------------------------------
# JSON instance files
# ---------------------------------------------------------------------------

_REQUIRED_KEYS = ("n", "corr", "arrivals", "thresholds", "eta", "gamma_cost", "d")


@dataclass
class IngestReport:
    """Adjustments applied while reading an external instance file."""

    row_sum_adjustments: list[tuple[int, float]] = field(default_factory=list)

    @property
    def max_adjustment(self) -> float:
        return max((abs(a) for _, a in self.row_sum_adjustments), default=0.0)


def _reject_constant(token: str):
    raise ValueError(f"non-finite number {token!r} not permitted in instance files")


def parse_instance(obj: dict) -> tuple[SystemInstance, IngestReport]:
    """Build an instance from a decoded JSON object, rescaling near-stochastic rows.

    Rows whose sums deviate from 1 by more than 1e-12 but at most 1e-9 are
    rescaled to sum exactly 1; each adjustment is recorded. Larger deviations
    are rejected.
    """
    missing = [k for k in _REQUIRED_KEYS if k not in obj]
    if missing:
        raise ValueError(f"instance file missing keys: {missing}")
    n = int(obj["n"])
    corr = np.asarray(obj["corr"], dtype=float)
    if corr.shape != (n, n):
        raise ValueError(f"corr must be {n}x{n}, got shape {corr.shape}")
    report = IngestReport()
    row_sums = corr.sum(axis=1)
    for i, s in enumerate(row_sums):
        dev = s - 1.0
        if abs(dev) > INGEST_ROW_SUM_TOL:
            raise ValueError(f"corr row {i} sums to {s!r}, beyond ingest tolerance")
        if abs(dev) > ROW_SUM_TOL:
            corr[i] = corr[i] / s
            report.row_sum_adjustments.append((i, dev))
    inst = SystemInstance(
        n=n,
        corr=corr,
        arrivals=obj["arrivals"],
        thresholds=obj["thresholds"],
        eta=obj["eta"],
        gamma_cost=obj["gamma_cost"],
        d=obj["d"],
    )
    rep = validate(inst)
    if not rep.ok:
        raise ValueError("invalid instance: " + "; ".join(rep.violations))
    return inst, report


def load_instance(path, with_report: bool = False):
    """Read an instance JSON file. NaN/Inf literals are rejected."""
    with open(path, "r", encoding="utf-8") as fh:
        obj = json.load(fh, parse_constant=_reject_constant)
    inst, report = parse_instance(obj)
    return (inst, report) if with_report else inst


def instance_to_dict(instance: SystemInstance, meta: dict | None = None) -> dict:
    obj = {
        "n": instance.n,
        "corr": instance.corr.tolist(),
        "arrivals": instance.arrivals.tolist(),
        "thresholds": instance.thresholds.tolist(),
        "eta": instance.eta.tolist(),
        "gamma_cost": instance.gamma_cost.tolist(),
        "d": instance.d.tolist(),
    }
    if meta:
        obj["meta"] = meta
    return obj


def save_instance(instance: SystemInstance, path, meta: dict | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(instance_to_dict(instance, meta), fh, indent=1, allow_nan=False)
        fh.write("\n")


def make_instance(corr, arrivals, thresholds, eta=None, gamma_cost=None, d=None) -> SystemInstance:
    """Convenience constructor; cost parameters default to the standard study values."""
    corr = np.asarray(corr, dtype=float)
    n = corr.shape[0]
    arrivals = np.asarray(arrivals, dtype=float)
    thresholds = np.asarray(thresholds, dtype=float)
    eta = np.ones(n) if eta is None else np.asarray(eta, dtype=float)
    gamma_cost = np.full(n, 10.0) if gamma_cost is None else np.asarray(gamma_cost, dtype=float)
    d = np.full(n, 0.5) if d is None else np.asarray(d, dtype=float)
    return SystemInstance(n, corr, arrivals, thresholds, eta, gamma_cost, d)
