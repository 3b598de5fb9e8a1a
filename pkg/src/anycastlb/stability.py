"""Analytic stability toolkit for the greedy dynamics.

Covers the arrival-rate polytope inside which no node can end up in locally
uncontrollable overload, the analytic Jacobian of the greedy vector field,
closed-form eigenvalue classification for two-node systems (including the
arrival-rate windows in which each undesirable boundary fixed point attracts),
the planar no-oscillation divergence check, and block-averaged effective
self-correlations for two-group coordination.

Eigenvalues are only ever computed in closed form for 2x2 Jacobians; larger
systems are judged by the per-node row-structure condition plus trajectory
simulation, which is all the analysis requires.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import SystemInstance, routing_matrix

CONTROLLABLE_ALL_A = "controllable_all_arrivals"
CONTROLLABLE_IF = "controllable_if_bounded"
INDETERMINATE = "indeterminate"

STABLE = "stable"
UNSTABLE = "unstable"


@dataclass(frozen=True)
class TwoNodeParams:
    """Self-correlations of a two-node system; off-diagonals are the complements."""

    alpha: float
    beta_corr: float

    def __post_init__(self):
        if not (0.0 <= self.alpha <= 1.0 and 0.0 <= self.beta_corr <= 1.0):
            raise ValueError("self-correlations must lie in [0, 1]")

    def corr(self) -> np.ndarray:
        return np.array([[self.alpha, 1.0 - self.alpha],
                         [1.0 - self.beta_corr, self.beta_corr]])


@dataclass
class PolytopeReport:
    contained: bool
    slacks: np.ndarray  # T_i - sum_{j != i} corr[j, i] * A_j


@dataclass
class TwoNodeClassification:
    verdict: str
    bounds: tuple[float, float] | None = None  # (A_1, A_2) upper bounds when CONTROLLABLE_IF
    arrivals_ok: bool | None = None


@dataclass
class StabilityWindow:
    """Open arrival-rate interval in which a boundary fixed point attracts.

    `axis` names which arrival rate the window constrains. `param_ok` is the
    arrival-independent part of the condition; when False the window is empty
    regardless of the interval. Boundary values are indeterminate: the
    linearization has a zero eigenvalue there.
    """

    fixed_point: str
    axis: int  # 0 -> A_1, 1 -> A_2
    lo: float
    hi: float
    param_ok: bool = True

    @property
    def empty(self) -> bool:
        return (not self.param_ok) or not (self.lo < self.hi)

    def classify(self, a: float) -> str:
        if not self.param_ok:
            return UNSTABLE
        if a == self.lo or a == self.hi:
            return INDETERMINATE
        return STABLE if self.lo < a < self.hi else UNSTABLE


@dataclass
class FixedPointAnalysis:
    point: tuple[float, float]
    jacobian: np.ndarray
    eigenvalues: tuple[complex, complex]
    verdict: str
    feasible: bool = True
    note: str = ""


@dataclass
class PartitionReport:
    alpha_g1: float
    beta_g2: float
    controllable_all_symmetric: bool


@dataclass
class StabilityReport:
    in_polytope: bool
    slacks: np.ndarray
    node_conditions: list[bool]
    two_node: TwoNodeClassification | None = None
    windows: list[StabilityWindow] = field(default_factory=list)
    fixed_points: list[FixedPointAnalysis] = field(default_factory=list)
    partition: PartitionReport | None = None


def polytope_contains(instance: SystemInstance) -> PolytopeReport:
    """Arrival vector inside the stability polytope: every cross-traffic sum fits."""
    c, a, t = instance.corr, instance.arrivals, instance.thresholds
    cross = c.T @ a - np.diag(c) * a  # sum over j != i of corr[j, i] * A_j
    slacks = t - cross
    return PolytopeReport(contained=bool(np.all(slacks >= 0.0)), slacks=slacks)


def node_sufficient_condition(instance: SystemInstance, k: int) -> bool:
    """True when node k provably avoids locally uncontrollable overload."""
    c, a = instance.corr, instance.arrivals
    cross = float(c[:, k] @ a - c[k, k] * a[k])
    return cross <= instance.thresholds[k]


def jacobian_at(instance: SystemInstance, x, sensitivity: float) -> np.ndarray:
    """Analytic Jacobian of the greedy field at x (sensitivity included)."""
    x = np.asarray(x, dtype=float)
    B = routing_matrix(instance)
    s = B @ x
    damp = x * (1.0 - x)
    J = -sensitivity * damp[:, None] * B
    J[np.diag_indices_from(J)] = -sensitivity * (
        damp * np.diag(B) + (1.0 - 2.0 * x) * (s - instance.thresholds))
    return J


def eig2x2(J: np.ndarray) -> tuple[complex, complex]:
    """Closed-form eigenvalues of a 2x2 matrix."""
    tr = J[0, 0] + J[1, 1]
    det = J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
    disc = tr * tr - 4.0 * det
    root = math.sqrt(disc) if disc >= 0.0 else 1j * math.sqrt(-disc)
    return (tr + root) / 2.0, (tr - root) / 2.0


def _eig_verdict(eigs: tuple[complex, complex]) -> str:
    reals = [e.real for e in eigs]
    if all(r < 0.0 for r in reals):
        return STABLE
    if any(r > 0.0 for r in reals):
        return UNSTABLE
    return INDETERMINATE


def two_node_classify(params: TwoNodeParams, arrivals, thresholds) -> TwoNodeClassification:
    """Controllability of a two-node system from its self-correlations.

    Both self-correlations above one half: controllable for every arrival
    pair. Both below one half: controllable whenever A_1 < T_1/(1-alpha) and
    A_2 < T_2/(1-beta). Mixed or boundary cases are left open.
    """
    a = np.asarray(arrivals, dtype=float)
    t = np.asarray(thresholds, dtype=float)
    al, be = params.alpha, params.beta_corr
    if al > 0.5 and be > 0.5:
        return TwoNodeClassification(CONTROLLABLE_ALL_A)
    if al < 0.5 and be < 0.5:
        bounds = (t[0] / (1.0 - al), t[1] / (1.0 - be))
        ok = bool(a[0] < bounds[0] and a[1] < bounds[1])
        return TwoNodeClassification(CONTROLLABLE_IF, bounds=bounds, arrivals_ok=ok)
    return TwoNodeClassification(INDETERMINATE)


def two_node_fixed_point_windows(params: TwoNodeParams, thresholds) -> list[StabilityWindow]:
    """Arrival-rate windows in which each undesirable boundary fixed point attracts.

    Derived from the sign pattern of the Jacobian at each point. With loads
    S_1 = alpha*A_1*x_1 + (1-beta)*A_2*x_2 and S_2 = (1-alpha)*A_1*x_1 +
    beta*A_2*x_2:

      (x_1, x_2) = (0, 1): stable iff S_1 > T_1 and S_2 < T_2, i.e.
          T_1/(1-beta) < A_2 < T_2/beta.
      (x_1, x_2) = (1, 0): mirror, T_2/(1-alpha) < A_1 < T_1/alpha.
      (x_1 = 0, S_2 = T_2), at x_2 = T_2/(A_2*beta): feasible and stable iff
          A_2 > T_2/beta and (1-beta)*T_2/beta > T_1 (for equal thresholds,
          beta < 1/2).
      (S_1 = T_1, x_2 = 0): mirror.

    Thresholds may differ per node; the symmetric-threshold algebra carries
    through unchanged.
    """
    t = np.asarray(thresholds, dtype=float)
    if t.shape == ():
        t = np.array([float(t), float(t)])
    al, be = params.alpha, params.beta_corr
    inf = math.inf

    def safe_div(num: float, den: float) -> float:
        return num / den if den > 0.0 else inf

    windows = [
        StabilityWindow("x=(0,1)", axis=1, lo=safe_div(t[0], 1.0 - be), hi=safe_div(t[1], be)),
        StabilityWindow("x=(1,0)", axis=0, lo=safe_div(t[1], 1.0 - al), hi=safe_div(t[0], al)),
        StabilityWindow("x1=0,S2=T2", axis=1, lo=safe_div(t[1], be), hi=inf,
                        param_ok=(be > 0.0 and (1.0 - be) * t[1] / be > t[0])),
        StabilityWindow("S1=T1,x2=0", axis=0, lo=safe_div(t[0], al), hi=inf,
                        param_ok=(al > 0.0 and (1.0 - al) * t[0] / al > t[1])),
    ]
    return windows


def dulac_divergence(instance: SystemInstance, x, sensitivity: float) -> float:
    """Divergence of the rescaled two-node field; strictly negative interior
    whenever both self-loads are active, which rules out closed orbits."""
    if instance.n != 2:
        raise ValueError("divergence check is two-node only")
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0.0) or np.any(x >= 1.0):
        raise ValueError("x must be strictly interior")
    B = routing_matrix(instance)
    return -sensitivity * (B[0, 0] / (x[1] * (1.0 - x[1])) + B[1, 1] / (x[0] * (1.0 - x[0])))


def effective_self_correlation(instance: SystemInstance, g1, g2) -> PartitionReport:
    """Block-averaged self-correlations of a two-group partition.

    When both block averages exceed one half, two coordinated groups jointly
    running the greedy policy control any symmetric arrival rate.
    """
    g1 = sorted(set(int(i) for i in g1))
    g2 = sorted(set(int(i) for i in g2))
    if not g1 or not g2:
        raise ValueError("both groups must be nonempty")
    if set(g1) & set(g2):
        raise ValueError("groups must be disjoint")
    if set(g1) | set(g2) != set(range(instance.n)):
        raise ValueError("groups must cover all nodes")
    c = instance.corr
    a1 = float(c[np.ix_(g1, g1)].sum()) / len(g1)
    b2 = float(c[np.ix_(g2, g2)].sum()) / len(g2)
    return PartitionReport(alpha_g1=a1, beta_g2=b2,
                           controllable_all_symmetric=bool(a1 > 0.5 and b2 > 0.5))


def _two_node_fixed_points(instance: SystemInstance, sensitivity: float) -> list[FixedPointAnalysis]:
    """Analyze the four undesirable boundary fixed points at the instance's arrivals."""
    a = instance.arrivals
    t = instance.thresholds
    out = []
    candidates: list[tuple[str, tuple[float, float], bool, str]] = [
        ("x=(0,1)", (0.0, 1.0), True, ""),
        ("x=(1,0)", (1.0, 0.0), True, ""),
    ]
    c = instance.corr
    be = c[1, 1]
    al = c[0, 0]
    for name, axis_a, self_corr, coord in (("x1=0,S2=T2", a[1], be, 1), ("S1=T1,x2=0", a[0], al, 0)):
        denom = axis_a * self_corr
        if denom > 0.0 and t[coord] / denom < 1.0:
            xi = t[coord] / denom
            pt = (0.0, xi) if coord == 1 else (xi, 0.0)
            candidates.append((name, pt, True, ""))
        else:
            pt = (0.0, 1.0) if coord == 1 else (1.0, 0.0)
            candidates.append((name, pt, False, "infeasible: required offload exceeds one"))
    for name, pt, feasible, note in candidates:
        x = np.asarray(pt, dtype=float)
        J = jacobian_at(instance, x, sensitivity)
        eigs = eig2x2(J)
        verdict = _eig_verdict(eigs) if feasible else UNSTABLE
        out.append(FixedPointAnalysis(point=tuple(float(v) for v in pt), jacobian=J,
                                      eigenvalues=eigs, verdict=verdict,
                                      feasible=feasible, note=note))
    return out


def analyze(instance: SystemInstance, partition: tuple[list[int], list[int]] | None = None,
            sensitivity: float = 1.0) -> StabilityReport:
    """Assemble the full stability report for an instance."""
    poly = polytope_contains(instance)
    conditions = [node_sufficient_condition(instance, k) for k in range(instance.n)]
    report = StabilityReport(in_polytope=poly.contained, slacks=poly.slacks,
                             node_conditions=conditions)
    if instance.n == 2:
        params = TwoNodeParams(alpha=float(instance.corr[0, 0]),
                               beta_corr=float(instance.corr[1, 1]))
        report.two_node = two_node_classify(params, instance.arrivals, instance.thresholds)
        report.windows = two_node_fixed_point_windows(params, instance.thresholds)
        report.fixed_points = _two_node_fixed_points(instance, sensitivity)
    if partition is not None:
        report.partition = effective_self_correlation(instance, partition[0], partition[1])
    return report


def report_to_dict(report: StabilityReport) -> dict:
    """JSON-friendly rendering of a stability report."""
    out: dict = {
        "in_polytope": report.in_polytope,
        "slacks": [float(v) for v in report.slacks],
        "node_conditions": list(report.node_conditions),
    }
    if report.two_node is not None:
        out["two_node_class"] = {
            "verdict": report.two_node.verdict,
            "bounds": list(report.two_node.bounds) if report.two_node.bounds else None,
            "arrivals_ok": report.two_node.arrivals_ok,
        }
        out["windows"] = [
            {"fixed_point": w.fixed_point, "axis": w.axis, "lo": w.lo,
             "hi": None if math.isinf(w.hi) else w.hi, "empty": w.empty}
            for w in report.windows
        ]
        out["fixed_points"] = [
            {"point": list(fp.point),
             "jacobian": [[float(v) for v in row] for row in fp.jacobian],
             "eigenvalues": [[e.real, e.imag] for e in fp.eigenvalues],
             "verdict": fp.verdict, "feasible": fp.feasible, "note": fp.note}
            for fp in report.fixed_points
        ]
    if report.partition is not None:
        out["partition"] = {
            "alpha_g1": report.partition.alpha_g1,
            "beta_g2": report.partition.beta_g2,
            "controllable_all_symmetric": report.partition.controllable_all_symmetric,
        }
    return out
