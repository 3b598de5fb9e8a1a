"""Distributed dual-decomposition solver for the load-management problem.

The capacity-coupled primal is relaxed with per-node multipliers mu >= 0.
Each iteration every node solves two closed-form scalar subproblems (one in
its admitted load s, one in its offload probability x), the observed loads
s_obs = B x* supply the supergradient s_obs - s*, and the multipliers take a
projected constant-step ascent step. The coupling factor beta_i = (C mu)_i is
either computed exactly or recovered through the emulated control-packet
channel (see fastcontrol).

The inner loop is compiled with numba when available; a pure-numpy loop with
identical update order serves as fallback and as the path for the sampled
(poisson) channel mode.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import fastcontrol
from .costs import OVERLOAD, eval_g_vec, eval_h_vec, solve_s_vec, solve_x_vec
from .model import SystemInstance, routing_matrix

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def deco(f):
            return f

        return deco if not (args and callable(args[0])) else args[0]

EXACT = "exact"
FASTCONTROL = "fastcontrol"

HISTORY_DENSE = 10_000
HISTORY_CAP = 400_000


@dataclass
class DualConfig:
    """Solver knobs; step_size derives from epsilon when not given explicitly."""

    epsilon: float = 0.01
    step_size: float | None = None
    max_iters: int = 100_000
    beta_mode: str = EXACT
    channel: "fastcontrol.ChannelConfig | None" = None
    stop_window: int = 200
    stop_rtol: float = 1e-9
    record_history: bool = True

    def __post_init__(self):
        if self.epsilon <= 0.0:
            raise ValueError("epsilon must be > 0")
        if self.step_size is not None and self.step_size <= 0.0:
            raise ValueError("step_size must be > 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.beta_mode not in (EXACT, FASTCONTROL):
            raise ValueError(f"unknown beta_mode {self.beta_mode!r}")


@dataclass
class DualRun:
    """Outcome of one solver run.

    x_avg is the running average of the primal iterates (constant-step
    supergradient iterates oscillate; their ergodic average settles), x_last
    the final iterate. best_primal is the cheapest capacity-feasible iterate
    seen, and is None when no iterate was feasible.
    """

    mu: np.ndarray
    x_last: np.ndarray
    s_last: np.ndarray
    s_obs_last: np.ndarray
    x_avg: np.ndarray
    s_obs_avg: np.ndarray
    best_dual: float
    best_dual_iter: int
    best_primal: float | None
    best_primal_x: np.ndarray | None
    iterations: int
    converged: bool
    step_size: float
    lemma_bound: float
    max_supergradient_sq: float
    history: dict[str, np.ndarray] = field(default_factory=dict)

    def best_dual_after(self, k: int) -> float:
        """Best dual value over the first k iterations (needs dense history)."""
        ks = self.history["k"]
        best = self.history["best_dual"]
        idx = np.searchsorted(ks, k - 1, side="right") - 1
        if idx < 0:
            raise ValueError(f"no history at or before iteration {k}")
        return float(best[idx])


def step_size_for_epsilon(instance: SystemInstance, epsilon: float) -> float:
    """Constant step 2*eps / (A_max^2 + N*T_max^2) driving the dual within eps."""
    if epsilon <= 0.0:
        raise ValueError("epsilon must be > 0")
    a_max = float(instance.arrivals.sum())
    t_max = float(instance.thresholds.max())
    return 2.0 * epsilon / (a_max**2 + instance.n * t_max**2)


def supergradient_norm_bound(instance: SystemInstance) -> float:
    """Uniform bound A_max^2 + N*T_max^2 on the squared supergradient norm."""
    a_max = float(instance.arrivals.sum())
    t_max = float(instance.thresholds.max())
    return a_max**2 + instance.n * t_max**2


def compute_beta_exact(instance: SystemInstance, mu) -> np.ndarray:
    """Coupling factors beta_i = sum_j corr[i, j] * mu_j."""
    mu = np.asarray(mu, dtype=float)
    if np.any(mu < 0.0):
        raise ValueError("multipliers must be >= 0")
    return instance.corr @ mu


def supergradient(instance: SystemInstance, x_star, s_star) -> np.ndarray:
    """Ascent direction of the dual: observed loads B x* minus subproblem loads s*."""
    x_star = np.asarray(x_star, dtype=float)
    s_star = np.asarray(s_star, dtype=float)
    return routing_matrix(instance) @ x_star - s_star


def dual_update(mu, g, alpha: float) -> np.ndarray:
    """Projected ascent step: componentwise max(mu + alpha*g, 0)."""
    if alpha <= 0.0:
        raise ValueError("step size must be > 0")
    return np.maximum(np.asarray(mu, float) + alpha * np.asarray(g, float), 0.0)


def eval_lagrangian(instance: SystemInstance, x, s, mu):
    """Relaxed objective at (x, s, mu); OVERLOAD when any s_i is at capacity."""
    x = np.asarray(x, dtype=float)
    s = np.asarray(s, dtype=float)
    mu = np.asarray(mu, dtype=float)
    gvals, over = eval_g_vec(instance.eta, instance.thresholds, s)
    if over.any():
        return OVERLOAD
    hvals = eval_h_vec(instance.gamma_cost, instance.arrivals, instance.d, x)
    beta = instance.corr @ mu
    return float((gvals - mu * s).sum() + (hvals + instance.arrivals * beta * x).sum())


def eval_dual(instance: SystemInstance, mu) -> tuple[float, np.ndarray, np.ndarray]:
    """Dual value D(mu) with its separable minimizers (x*, s*)."""
    mu = np.asarray(mu, dtype=float)
    if np.any(mu < 0.0):
        raise ValueError("multipliers must be >= 0")
    beta = instance.corr @ mu
    s = solve_s_vec(instance.eta, instance.thresholds, mu)
    x = solve_x_vec(instance.gamma_cost, instance.arrivals, instance.d, beta)
    gvals, _ = eval_g_vec(instance.eta, instance.thresholds, s)
    hvals = eval_h_vec(instance.gamma_cost, instance.arrivals, instance.d, x)
    value = float((gvals - mu * s).sum() + (hvals + instance.arrivals * beta * x).sum())
    return value, x, s


# ---------------------------------------------------------------------------
# Inner iteration loop
# ---------------------------------------------------------------------------

@njit(cache=True)
def _dual_loop_jit(C, B, A, T, eta, gam, d, mu, alpha, max_iters,
                   stop_window, stop_rtol, n_dense, stride_after,
                   hist_k, hist_dual, hist_best, hist_gnorm2, hist_viol):
    n = C.shape[0]
    x = np.zeros(n)
    s = np.zeros(n)
    s_obs = np.zeros(n)
    g = np.zeros(n)
    x_sum = np.zeros(n)
    best_primal_x = np.zeros(n)
    best_dual = -np.inf
    best_dual_iter = -1
    best_primal = np.inf
    has_feasible = False
    max_gnorm2 = 0.0
    window_best = -np.inf
    converged = False
    n_rec = 0
    iters = 0
    for k in range(max_iters):
        dval = 0.0
        for i in range(n):
            beta_i = 0.0
            for j in range(n):
                beta_i += C[i, j] * mu[j]
            # admitted-load subproblem, closed form
            if mu[i] <= 0.0:
                si = 0.0
            else:
                r = 1.0 - math.sqrt(eta[i] / mu[i])
                si = T[i] * r if r > 0.0 else 0.0
            s[i] = si
            dval += eta[i] * si / (1.0 - si / T[i]) - mu[i] * si
            # offload subproblem, closed form
            if A[i] == 0.0:
                xi = 1.0
            else:
                c1 = A[i] * gam[i]
                c2 = gam[i] * d[i] - beta_i
                if c2 > 0.0:
                    xi = 1.0
                elif 2.0 * c1 >= -c2:
                    xi = 1.0 + c2 / (2.0 * c1)
                else:
                    xi = 0.0
            x[i] = xi
            spill = A[i] * (1.0 - xi)
            dval += gam[i] * spill * (d[i] + spill) + A[i] * beta_i * xi
            x_sum[i] += xi
        for i in range(n):
            acc = 0.0
            for j in range(n):
                acc += B[i, j] * x[j]
            s_obs[i] = acc
        gnorm2 = 0.0
        viol = -np.inf
        feasible = True
        for i in range(n):
            gi = s_obs[i] - s[i]
            g[i] = gi
            gnorm2 += gi * gi
            v = s_obs[i] - T[i]
            if v > viol:
                viol = v
            if s_obs[i] >= T[i]:
                feasible = False
        if gnorm2 > max_gnorm2:
            max_gnorm2 = gnorm2
        if dval > best_dual:
            best_dual = dval
            best_dual_iter = k
        if feasible:
            w = 0.0
            for i in range(n):
                w += eta[i] * s_obs[i] / (1.0 - s_obs[i] / T[i])
                spill = A[i] * (1.0 - x[i])
                w += gam[i] * spill * (d[i] + spill)
            if w < best_primal:
                best_primal = w
                for i in range(n):
                    best_primal_x[i] = x[i]
                has_feasible = True
        if hist_k.shape[0] > 0 and (k < n_dense or (k - n_dense) % stride_after == 0):
            if n_rec < hist_k.shape[0]:
                hist_k[n_rec] = k
                hist_dual[n_rec] = dval
                hist_best[n_rec] = best_dual
                hist_gnorm2[n_rec] = gnorm2
                hist_viol[n_rec] = viol
                n_rec += 1
        for i in range(n):
            m = mu[i] + alpha * g[i]
            mu[i] = m if m > 0.0 else 0.0
        iters = k + 1
        if stop_window > 0 and iters % stop_window == 0:
            if best_dual - window_best < stop_rtol * (1.0 + abs(best_dual)):
                converged = True
                break
            window_best = best_dual
    return (mu, x, s, s_obs, x_sum, best_dual, best_dual_iter,
            best_primal, best_primal_x, has_feasible, max_gnorm2,
            n_rec, iters, converged)


def _dual_loop_channel(instance, B, mu, alpha, max_iters, stop_window, stop_rtol,
                       n_dense, stride_after, hist, channel, rng):
    """Numpy loop used when beta comes from the sampled packet channel."""
    A, T = instance.arrivals, instance.thresholds
    eta, gam, d = instance.eta, instance.gamma_cost, instance.d
    x_sum = np.zeros(instance.n)
    best_dual, best_dual_iter = -np.inf, -1
    best_primal, best_primal_x, has_feasible = np.inf, None, False
    max_gnorm2 = 0.0
    window_best = -np.inf
    converged = False
    n_rec = 0
    iters = 0
    x = s = s_obs = np.zeros(instance.n)
    for k in range(max_iters):
        est = fastcontrol.channel_beta(instance, mu, channel, rng=rng)
        beta = est.beta
        s = solve_s_vec(eta, T, mu)
        x = solve_x_vec(gam, A, d, beta)
        gvals, _ = eval_g_vec(eta, T, s)
        hvals = eval_h_vec(gam, A, d, x)
        dval = float((gvals - mu * s).sum() + (hvals + A * beta * x).sum())
        s_obs = B @ x
        g = s_obs - s
        gnorm2 = float(g @ g)
        viol = float((s_obs - T).max())
        max_gnorm2 = max(max_gnorm2, gnorm2)
        if dval > best_dual:
            best_dual, best_dual_iter = dval, k
        if np.all(s_obs < T):
            wvals, _ = eval_g_vec(eta, T, s_obs)
            w = float(wvals.sum() + hvals.sum())
            if w < best_primal:
                best_primal, best_primal_x, has_feasible = w, x.copy(), True
        x_sum += x
        if hist is not None and (k < n_dense or (k - n_dense) % stride_after == 0):
            if n_rec < hist["k"].shape[0]:
                hist["k"][n_rec] = k
                hist["dual"][n_rec] = dval
                hist["best_dual"][n_rec] = best_dual
                hist["supergradient_sq"][n_rec] = gnorm2
                hist["max_overload"][n_rec] = viol
                n_rec += 1
        mu = np.maximum(mu + alpha * g, 0.0)
        iters = k + 1
        if stop_window > 0 and iters % stop_window == 0:
            if best_dual - window_best < stop_rtol * (1.0 + abs(best_dual)):
                converged = True
                break
            window_best = best_dual
    return (mu, x, s, s_obs, x_sum, best_dual, best_dual_iter,
            best_primal, best_primal_x, has_feasible, max_gnorm2,
            n_rec, iters, converged)


def run_dual(instance: SystemInstance, config: DualConfig | None = None) -> DualRun:
    """Run the full multiplier iteration from mu(0) = 0.

    In fastcontrol mode the correlation matrix must be strictly positive. The
    deterministic channel is an exact algebraic identity (the landing
    probability cancels the emission denominator), so it shares the exact-mode
    code path and produces bit-identical trajectories; the sampled poisson
    channel runs the emit/route/recover pipeline every iteration.
    """
    cfg = config or DualConfig()
    sampled_channel = False
    if cfg.beta_mode == FASTCONTROL:
        if not instance.strictly_positive:
            raise fastcontrol.ChannelError(
                "fastcontrol mode requires strictly positive correlations")
        channel = cfg.channel or fastcontrol.ChannelConfig()
        sampled_channel = channel.mode == fastcontrol.POISSON

    alpha = cfg.step_size if cfg.step_size is not None else step_size_for_epsilon(instance, cfg.epsilon)
    bound = supergradient_norm_bound(instance)
    B = routing_matrix(instance)
    mu0 = np.zeros(instance.n)

    n_dense = min(cfg.max_iters, HISTORY_DENSE)
    remaining = cfg.max_iters - n_dense
    stride_after = max(10, -(-remaining // (HISTORY_CAP - HISTORY_DENSE))) if remaining > 0 else 10
    n_records = n_dense + (remaining + stride_after - 1) // stride_after if cfg.record_history else 0
    hist_k = np.zeros(n_records, dtype=np.int64)
    hist_dual = np.zeros(n_records)
    hist_best = np.zeros(n_records)
    hist_gnorm2 = np.zeros(n_records)
    hist_viol = np.zeros(n_records)

    if sampled_channel:
        rng = np.random.default_rng(channel.seed)
        hist = {"k": hist_k, "dual": hist_dual, "best_dual": hist_best,
                "supergradient_sq": hist_gnorm2, "max_overload": hist_viol} if cfg.record_history else None
        out = _dual_loop_channel(instance, B, mu0, alpha, cfg.max_iters,
                                 cfg.stop_window, cfg.stop_rtol, n_dense, stride_after,
                                 hist, channel, rng)
    else:
        out = _dual_loop_jit(np.ascontiguousarray(instance.corr), np.ascontiguousarray(B),
                             instance.arrivals, instance.thresholds, instance.eta,
                             instance.gamma_cost, instance.d, mu0, alpha,
                             cfg.max_iters, cfg.stop_window, cfg.stop_rtol,
                             n_dense, stride_after,
                             hist_k, hist_dual, hist_best, hist_gnorm2, hist_viol)

    (mu, x, s, s_obs, x_sum, best_dual, best_dual_iter, best_primal,
     best_primal_x, has_feasible, max_gnorm2, n_rec, iters, converged) = out

    if max_gnorm2 > bound:
        raise AssertionError(
            f"supergradient bound violated: {max_gnorm2} > {bound}")

    x_avg = x_sum / max(iters, 1)
    history = {}
    if cfg.record_history:
        history = {
            "k": hist_k[:n_rec].copy(),
            "dual": hist_dual[:n_rec].copy(),
            "best_dual": hist_best[:n_rec].copy(),
            "supergradient_sq": hist_gnorm2[:n_rec].copy(),
            "max_overload": hist_viol[:n_rec].copy(),
        }
    return DualRun(
        mu=np.asarray(mu), x_last=np.asarray(x), s_last=np.asarray(s),
        s_obs_last=np.asarray(s_obs), x_avg=x_avg, s_obs_avg=B @ x_avg,
        best_dual=float(best_dual), best_dual_iter=int(best_dual_iter),
        best_primal=float(best_primal) if has_feasible else None,
        best_primal_x=np.asarray(best_primal_x) if has_feasible else None,
        iterations=int(iters), converged=bool(converged), step_size=float(alpha),
        lemma_bound=float(bound), max_supergradient_sq=float(max_gnorm2),
        history=history,
    )


def write_history_csv(run: DualRun, path, oracle_value: float | None = None) -> None:
    """Per-iteration CSV: k, dual, supergradient norm squared, worst overload, optional gap."""
    if not run.history:
        raise ValueError("run carries no history")
    with open(path, "w", encoding="utf-8") as fh:
        cols = "k,dual,supergradient_sq,max_overload"
        if oracle_value is not None:
            cols += ",gap"
        fh.write(cols + "\n")
        h = run.history
        for i in range(len(h["k"])):
            row = f'{h["k"][i]},{h["dual"][i]!r},{h["supergradient_sq"][i]!r},{h["max_overload"][i]!r}'
            if oracle_value is not None:
                row += f',{oracle_value - h["best_dual"][i]!r}'
            fh.write(row + "\n")
