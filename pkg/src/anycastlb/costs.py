"""Per-node cost functions and their one-dimensional subproblem minimizers.

Two cost families are shipped: an M/G/1-style delay cost for proxy load,
eta * s / (1 - s/T), which blows up at the capacity threshold, and an affine
latency cost for offloaded traffic, gamma * A * (1-x) * (d + A*(1-x)).
Both admit closed-form minimizers for the multiplier-relaxed subproblems; a
golden-section fallback covers user-supplied convex costs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np


class Overload:
    """Sentinel for evaluating the overload cost at or beyond capacity.

    A distinct object rather than float('inf') so downstream statistics can
    report (finite cost, overload flag) instead of propagating infinities.
    """

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "OVERLOAD"


OVERLOAD = Overload()


def is_overload(value) -> bool:
    return value is OVERLOAD


@dataclass(frozen=True)
class OverloadCost:
    """Delay cost of running a proxy at load s, with pole at s = threshold."""

    eta: float
    threshold: float

    def __post_init__(self):
        if self.eta <= 0.0:
            raise ValueError("eta must be > 0")
        if self.threshold <= 0.0:
            raise ValueError("threshold must be > 0")


@dataclass(frozen=True)
class OffloadCost:
    """Latency cost of the traffic a node sends to the remote data center."""

    gamma_cost: float
    arrival: float
    d: float

    def __post_init__(self):
        if self.gamma_cost <= 0.0:
            raise ValueError("gamma_cost must be > 0")
        if self.arrival < 0.0:
            raise ValueError("arrival must be >= 0")
        if self.d < 0.0:
            raise ValueError("d must be >= 0")


def eval_g(cost: OverloadCost, s: float):
    """Overload cost at load s; OVERLOAD sentinel for s >= threshold."""
    if s < 0.0:
        raise ValueError(f"load must be >= 0, got {s}")
    if s >= cost.threshold:
        return OVERLOAD
    return cost.eta * s / (1.0 - s / cost.threshold)


def eval_h(cost: OffloadCost, x: float) -> float:
    """Offload cost at L1-routing probability x in [0, 1]."""
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x must lie in [0, 1], got {x}")
    spill = cost.arrival * (1.0 - x)
    return cost.gamma_cost * spill * (cost.d + spill)


def solve_s_subproblem(cost: OverloadCost, mu: float) -> float:
    """argmin over s in [0, T] of g(s) - mu*s, in closed form.

    The stationary point satisfies (1 - s/T)^2 = eta/mu, clamped to the box;
    mu = 0 is branched explicitly to 0 (the limit of the clamped form).
    """
    if mu < 0.0:
        raise ValueError("multiplier must be >= 0")
    if mu == 0.0:
        return 0.0
    return cost.threshold * max(0.0, 1.0 - math.sqrt(cost.eta / mu))


def solve_x_subproblem(cost: OffloadCost, beta: float) -> float:
    """argmin over x in [0, 1] of h(x) + A*beta*x, in closed form.

    With c1 = A*gamma and c2 = gamma*d - beta: x* = 1 when c2 > 0,
    x* = 1 + c2/(2 c1) when c2 <= 0 and 2 c1 >= -c2, else 0. A zero arrival
    rate makes the objective identically 0; x* = 1 by convention (keep
    traffic in the primary layer when offloading buys nothing).
    """
    if cost.arrival == 0.0:
        return 1.0
    c1 = cost.arrival * cost.gamma_cost
    c2 = cost.gamma_cost * cost.d - beta
    if c2 > 0.0:
        return 1.0
    if 2.0 * c1 >= -c2:
        return 1.0 + c2 / (2.0 * c1)
    return 0.0


def solve_s_subproblem_numeric(g: Callable[[float], float], threshold: float, mu: float) -> float:
    """Generic-cost fallback: minimize g(s) - mu*s over [0, threshold] numerically."""
    if mu < 0.0:
        raise ValueError("multiplier must be >= 0")
    return minimize_1d(lambda s: g(s) - mu * s, 0.0, threshold)


def solve_x_subproblem_numeric(h: Callable[[float], float], arrival: float, beta: float) -> float:
    """Generic-cost fallback: minimize h(x) + A*beta*x over [0, 1] numerically."""
    return minimize_1d(lambda x: h(x) + arrival * beta * x, 0.0, 1.0)


_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def minimize_1d(f: Callable[[float], float], lo: float, hi: float, xtol: float = 1e-10) -> float:
    """Golden-section search for the minimizer of a convex f on [lo, hi]."""
    if lo >= hi:
        raise ValueError(f"need lo < hi, got [{lo}, {hi}]")
    a, b = lo, hi
    c = b - _INVPHI * (b - a)
    e = a + _INVPHI * (b - a)
    fc, fe = f(c), f(e)
    while b - a > xtol:
        if fc < fe:
            b, e, fe = e, c, fc
            c = b - _INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, e, fe
            e = a + _INVPHI * (b - a)
            fe = f(e)
    x = 0.5 * (a + b)
    # the box ends can beat a flat interior bracket on monotone objectives
    for cand in (lo, hi):
        if f(cand) < f(x):
            x = cand
    return x


# ---------------------------------------------------------------------------
# Vectorized forms used by the solvers and oracles
# ---------------------------------------------------------------------------

def eval_g_vec(eta: np.ndarray, threshold: np.ndarray, s: np.ndarray):
    """Elementwise overload cost; returns (values, overloaded mask).

    Overloaded entries carry +inf in the value array; callers decide whether
    to surface the OVERLOAD sentinel or a flag.
    """
    s = np.asarray(s, dtype=float)
    over = s >= threshold
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = eta * s / (1.0 - s / threshold)
    vals = np.where(over, np.inf, vals)
    return vals, over


def eval_h_vec(gamma_cost: np.ndarray, arrival: np.ndarray, d: np.ndarray, x: np.ndarray) -> np.ndarray:
    spill = arrival * (1.0 - np.asarray(x, dtype=float))
    return gamma_cost * spill * (d + spill)


def solve_s_vec(eta: np.ndarray, threshold: np.ndarray, mu: np.ndarray) -> np.ndarray:
    mu = np.asarray(mu, dtype=float)
    with np.errstate(divide="ignore"):
        root = np.sqrt(np.where(mu > 0.0, eta / np.maximum(mu, 1e-300), np.inf))
    return threshold * np.maximum(0.0, 1.0 - root)


def solve_x_vec(gamma_cost: np.ndarray, arrival: np.ndarray, d: np.ndarray, beta: np.ndarray) -> np.ndarray:
    beta = np.asarray(beta, dtype=float)
    c1 = arrival * gamma_cost
    c2 = gamma_cost * d - beta
    interior = np.where(c1 > 0.0, 1.0 + c2 / np.where(c1 > 0.0, 2.0 * c1, 1.0), 1.0)
    x = np.where(c2 > 0.0, 1.0, np.where(2.0 * c1 >= -c2, interior, 0.0))
    return np.where(arrival == 0.0, 1.0, x)
