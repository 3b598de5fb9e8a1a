"""Independent brute-force references for the load-management problem.

These exist to referee the production algorithms: an exhaustive grid solve of
the primal problem for up to three nodes, a log-barrier descent usable up to
about eight, and a finite-difference Jacobian to check the analytic one.
None of this is meant to scale; the dual solver is the product.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .costs import eval_g_vec, eval_h_vec
from .model import SystemInstance, routing_matrix

GRID = "grid"
PROJECTED_DESCENT = "projected_descent"


@dataclass
class OracleResult:
    x: np.ndarray
    s: np.ndarray
    objective: float
    method: str
    resolution: float | None = None
    error_bound: float = 0.0
    converged: bool = True


def primal_objective(instance: SystemInstance, x) -> tuple[float, bool]:
    """W(x, Bx) = sum g_i((Bx)_i) + sum h_i(x_i); (+inf, True) if any load at capacity."""
    x = np.asarray(x, dtype=float)
    s = routing_matrix(instance) @ x
    gvals, over = eval_g_vec(instance.eta, instance.thresholds, s)
    hvals = eval_h_vec(instance.gamma_cost, instance.arrivals, instance.d, x)
    if over.any():
        return float("inf"), True
    return float(gvals.sum() + hvals.sum()), False


def primal_grid_solve(instance: SystemInstance, resolution: float | None = None) -> OracleResult:
    """Exhaustive grid minimization of W(x, Bx) over the unit hypercube.

    Infeasible points (any load at or above threshold) are skipped. The
    substitution S = Bx is lossless because the overload cost is increasing,
    so the optimal S is tight against the routed load.
    """
    n = instance.n
    if n > 3:
        raise ValueError("grid oracle limited to n <= 3")
    if resolution is None:
        resolution = 1e-3 if n <= 2 else 1e-2
    m = int(round(1.0 / resolution))
    axis = np.linspace(0.0, 1.0, m + 1)
    B = routing_matrix(instance)

    best_val = np.inf
    best_x = np.zeros(n)
    if n == 1:
        X = axis[:, None]
        vals = _objective_grid(instance, B, X)
        k = int(np.argmin(vals))
        best_val, best_x = vals[k], X[k]
    else:
        # evaluate plane-by-plane to bound memory for n = 3
        inner = np.meshgrid(*([axis] * (n - 1)), indexing="ij")
        inner_flat = np.stack([g.ravel() for g in inner], axis=1)
        for x0 in axis:
            X = np.empty((inner_flat.shape[0], n))
            X[:, 0] = x0
            X[:, 1:] = inner_flat
            vals = _objective_grid(instance, B, X)
            k = int(np.argmin(vals))
            if vals[k] < best_val:
                best_val, best_x = vals[k], X[k].copy()

    if not np.isfinite(best_val):
        return OracleResult(best_x, B @ best_x, float("inf"), GRID, resolution,
                            error_bound=float("inf"), converged=False)
    err = _grid_error_estimate(instance, B, best_x, resolution)
    return OracleResult(best_x, B @ best_x, float(best_val), GRID, resolution, error_bound=err)


def _objective_grid(instance: SystemInstance, B: np.ndarray, X: np.ndarray) -> np.ndarray:
    S = X @ B.T
    gvals, over = eval_g_vec(instance.eta, instance.thresholds, S)
    hvals = eval_h_vec(instance.gamma_cost, instance.arrivals, instance.d, X)
    vals = gvals.sum(axis=1) + hvals.sum(axis=1)
    vals[over.any(axis=1)] = np.inf
    return vals


def _grid_error_estimate(instance: SystemInstance, B: np.ndarray, x: np.ndarray, res: float) -> float:
    """Lipschitz-estimate x resolution, sampled around the grid argmin."""
    base, _ = primal_objective(instance, x)
    slope = 0.0
    for i in range(len(x)):
        for sgn in (-1.0, 1.0):
            xp = x.copy()
            xp[i] = min(1.0, max(0.0, xp[i] + sgn * res))
            if xp[i] == x[i]:
                continue
            v, over = primal_objective(instance, xp)
            if not over:
                slope = max(slope, abs(v - base) / res)
    return 0.5 * slope * res * np.sqrt(len(x))


@dataclass
class DescentConfig:
    barrier_weight: float = 1.0
    barrier_decay: float = 0.1
    stages: int = 9
    max_inner: int = 400
    grad_tol: float = 1e-9
    lr0: float = 1.0


def primal_projected_descent(instance: SystemInstance, config: DescentConfig | None = None,
                             x0: np.ndarray | None = None) -> OracleResult:
    """Barrier-smoothed projected gradient descent on W(x, Bx).

    A log barrier on the capacity slack keeps iterates strictly feasible; the
    barrier weight decays geometrically. Secondary referee for 3 < n <= 8,
    cross-checked against the grid where both apply.
    """
    cfg = config or DescentConfig()
    n = instance.n
    B = routing_matrix(instance)
    T, eta = instance.thresholds, instance.eta
    gam, A, d = instance.gamma_cost, instance.arrivals, instance.d

    x = np.full(n, 0.01) if x0 is None else np.asarray(x0, dtype=float).copy()
    if _barrier_value(instance, B, x, cfg.barrier_weight) == np.inf:
        x = np.full(n, 0.01)  # always feasible: loads vanish as x -> 0, T > 0

    w = cfg.barrier_weight
    converged = False
    for _ in range(cfg.stages):
        lr = cfg.lr0
        for _ in range(cfg.max_inner):
            s = B @ x
            slack = T - s
            # d/ds of eta*s/(1-s/T) = eta / (1-s/T)^2
            gprime = eta / np.square(slack / T)
            hprime = -gam * (A * d + 2.0 * A * A * (1.0 - x))
            grad = B.T @ gprime + hprime + w * (B.T @ (1.0 / slack))
            fval = _barrier_value(instance, B, x, w)
            step = lr
            for _ in range(60):
                xn = np.clip(x - step * grad, 0.0, 1.0)
                if _barrier_value(instance, B, xn, w) < fval:
                    break
                step *= 0.5
            else:
                break
            x = xn
            lr = min(cfg.lr0, step * 2.0)
            proj_move = np.linalg.norm(np.clip(x - grad, 0.0, 1.0) - x, np.inf)
            if proj_move < cfg.grad_tol:
                converged = True
                break
        w *= cfg.barrier_decay
    obj, over = primal_objective(instance, x)
    return OracleResult(x, B @ x, obj, PROJECTED_DESCENT, None,
                        error_bound=0.0, converged=converged and not over)


def _barrier_value(instance: SystemInstance, B: np.ndarray, x: np.ndarray, w: float) -> float:
    s = B @ x
    slack = instance.thresholds - s
    if np.any(slack <= 0.0):
        return np.inf
    gvals, _ = eval_g_vec(instance.eta, instance.thresholds, s)
    hvals = eval_h_vec(instance.gamma_cost, instance.arrivals, instance.d, x)
    return float(gvals.sum() + hvals.sum() - w * np.log(slack).sum())


def finite_diff_jacobian(instance: SystemInstance, x, sensitivity: float, step: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian of the greedy vector field at interior x."""
    from .greedy import greedy_derivative

    x = np.asarray(x, dtype=float)
    if np.any(x < step) or np.any(x > 1.0 - step):
        raise ValueError("x must be interior by at least the difference step")
    n = len(x)
    J = np.empty((n, n))
    for j in range(n):
        xp, xm = x.copy(), x.copy()
        xp[j] += step
        xm[j] -= step
        J[:, j] = (greedy_derivative(instance, xp, sensitivity)
                   - greedy_derivative(instance, xm, sensitivity)) / (2.0 * step)
    return J
