"""Sparse recovery actions: CoSaMP and radius-constrained l1 minimization.

Four recovery behaviours are indexed 0..3 throughout the package:

* 0 greedy CoSaMP with sparsity k,
* 1 l1 minimization in a ball of radius tau * eta_prime (sparse attacks),
* 2 l1 minimization in a ball of radius eta (energy-bounded attacks),
* 3 l1 minimization in a ball of radius sqrt(n) * eta_dprime (uniform
  amplitude attacks).

The l1 ball constraint is ||A z - y||_2 <= radius; the closed set makes the
minimum attained.  On the full orthonormal operator this collapses to
soft-thresholding of the analysis coefficients, solved exactly by bisection.
The general row-subsampled case runs an operator-splitting iteration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .transform import SensingOperator, top_k

__all__ = [
    "A_COSAMP",
    "A_L0",
    "A_L2",
    "A_LINF",
    "N_ACTIONS",
    "CosampState",
    "CosampRun",
    "cosamp_step",
    "cosamp_run",
    "L1Problem",
    "L1Result",
    "l1_min_orthonormal",
    "l1_min_general",
    "action_radius",
    "BoundReport",
    "check_bound",
]

A_COSAMP, A_L0, A_L2, A_LINF = 0, 1, 2, 3
N_ACTIONS = 4


@dataclass
class CosampState:
    """Iterate of the greedy loop: k-sparse estimate and its residual."""

    estimate: np.ndarray
    residual: np.ndarray
    iteration: int


@dataclass
class CosampRun:
    """Final state plus the full iterate history for convergence diagnostics."""

    states: list[CosampState] = field(default_factory=list)

    @property
    def final(self) -> CosampState:
        return self.states[-1]

    def residual_norms(self) -> np.ndarray:
        return np.array([np.linalg.norm(s.residual) for s in self.states])


def cosamp_step(state: CosampState, y: np.ndarray, op: SensingOperator,
                k: int) -> CosampState:
    """One CoSaMP iteration: identify, merge supports, estimate, prune.

    The signal proxy is A^* v; its top-2k support is merged with the current
    estimate's support, a least-squares fit is solved on the merged support,
    and the fit is pruned back to k terms.  For the full orthonormal operator
    the least-squares fit on any support is just the matching entries of
    A^* y, which is used as a fast path.
    """
    proxy = op.adjoint(state.residual)
    order = np.argsort(-np.abs(proxy), kind="stable")
    omega = order[: 2 * k]
    merged = np.union1d(omega, np.flatnonzero(state.estimate))
    b = np.zeros(op.n)
    if op.is_full:
        b[merged] = op.adjoint(y)[merged]
    else:
        sub = op.columns(merged)
        sol, *_ = np.linalg.lstsq(sub, y, rcond=None)
        b[merged] = sol
    estimate = top_k(b, k)
    residual = y - op.synthesize(estimate)
    return CosampState(estimate=estimate, residual=residual,
                       iteration=state.iteration + 1)


def cosamp_run(y: np.ndarray, op: SensingOperator, k: int, n_iters: int,
               x0: np.ndarray | None = None) -> CosampRun:
    """Run n_iters CoSaMP steps from x0 (zero start by default)."""
    if not 0 < k <= op.n:
        raise ValueError(f"need 0 < k <= {op.n}, got k={k}")
    if n_iters < 0:
        raise ValueError(f"n_iters must be >= 0, got {n_iters}")
    y = np.asarray(y, dtype=np.float64)
    if x0 is None:
        est = np.zeros(op.n)
    else:
        est = top_k(np.asarray(x0, dtype=np.float64), k)
    state = CosampState(estimate=est, residual=y - op.synthesize(est), iteration=0)
    run = CosampRun(states=[state])
    for _ in range(n_iters):
        state = cosamp_step(state, y, op, k)
        run.states.append(state)
    return run


@dataclass
class L1Problem:
    """min ||z||_1 subject to ||A z - y||_2 <= radius."""

    observed: np.ndarray
    op: SensingOperator
    radius: float
    tolerance: float = 1e-6
    max_iters: int = 5000

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError(f"radius must be >= 0, got {self.radius}")


@dataclass
class L1Result:
    """General-solver output with convergence diagnostics."""

    coeffs: np.ndarray
    iterations: int
    converged: bool
    feasibility_gap: float


# bisection solves the shrinkage norm to this absolute accuracy
_BISECT_TOL = 1e-9


def l1_min_orthonormal(p: L1Problem) -> np.ndarray:
    """Exact solution on the full operator via soft-threshold bisection.

    With orthonormal A, ||A z - y||_2 = ||z - c||_2 for c = F y, so the
    minimizer is the soft-threshold of c whose total shrinkage has l2 norm
    equal to the radius.  The threshold is found by bisection on
    g(t) = || min(t, |c|) ||_2, which is continuous and nondecreasing.
    """
    if not p.op.is_full:
        raise ValueError("orthonormal path requires the full operator")
    c = p.op.analyze(p.observed)
    if p.radius == 0.0:
        return c
    absc = np.abs(c)
    if p.radius >= np.linalg.norm(c):
        return np.zeros_like(c)
    lo, hi = 0.0, float(absc.max())
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        g = np.linalg.norm(np.minimum(mid, absc))
        if abs(g - p.radius) <= _BISECT_TOL:
            lo = hi = mid
            break
        if g < p.radius:
            lo = mid
        else:
            hi = mid
    thr = 0.5 * (lo + hi)
    return np.sign(c) * np.maximum(absc - thr, 0.0)


def _project_ball(z: np.ndarray, y: np.ndarray, op: SensingOperator,
                  radius: float) -> np.ndarray:
    """Project z onto {z : ||A z - y|| <= radius}; exact since A A^* = I."""
    w = op.synthesize(z) - y
    nw = np.linalg.norm(w)
    if nw <= radius:
        return z
    scale = 1.0 if radius == 0.0 else 1.0 - radius / nw
    return z - op.adjoint(scale * w)


def l1_min_general(p: L1Problem, x0: np.ndarray | None = None) -> L1Result:
    """Operator-splitting solver for arbitrary row subsets.

    Douglas-Rachford alternation between the l1 proximal map (soft
    threshold) and exact projection onto the measurement ball; the rows of
    a subsampled orthonormal operator stay orthonormal, which makes the
    ball projection closed-form.  Stops when successive prox outputs agree
    within tolerance; the final iterate's feasibility gap is reported and a
    run that still violates it beyond tolerance is flagged unconverged.
    """
    y = np.asarray(p.observed, dtype=np.float64)
    if np.linalg.norm(y) <= p.radius:
        return L1Result(np.zeros(p.op.n), 0, True, 0.0)
    # prox step length: a fraction of the largest back-projected magnitude
    step = 0.1 * float(np.abs(p.op.adjoint(y)).max())
    if step <= 0.0:
        step = 1.0
    s = np.asarray(x0, dtype=np.float64).copy() if x0 is not None else p.op.adjoint(y)
    z = np.zeros(p.op.n)
    converged = False
    it = 0
    for it in range(1, p.max_iters + 1):
        z_prev = z
        z = np.sign(s) * np.maximum(np.abs(s) - step, 0.0)
        w = _project_ball(2.0 * z - s, y, p.op, p.radius)
        s = s + w - z
        if it > 1 and np.linalg.norm(z - z_prev) <= p.tolerance * max(1.0, np.linalg.norm(z)):
            converged = True
            break
    gap = max(0.0, float(np.linalg.norm(p.op.synthesize(z) - y)) - p.radius)
    if gap > p.tolerance:
        converged = False
    return L1Result(coeffs=z, iterations=it, converged=converged, feasibility_gap=gap)


def action_radius(action: int, tau: int, eta: float, eta_prime: float,
                  eta_dprime: float, n: int) -> float:
    """Constraint radius each l1 action assumes for its attack family.

    Action 1 budgets a tau-sparse attack at per-entry level eta_prime, so
    its worst-case l2 energy is tau * eta_prime.  Action 2 uses the l2
    budget eta directly.  Action 3 budgets a dense attack at amplitude
    eta_dprime, worst case sqrt(n) * eta_dprime.
    """
    if action == A_L0:
        return float(tau * eta_prime)
    if action == A_L2:
        return float(eta)
    if action == A_LINF:
        return float(math.sqrt(n) * eta_dprime)
    raise ValueError(f"no constraint radius for action {action}")


@dataclass
class BoundReport:
    """Observed recovery error against the attack budget it should track."""

    empirical_l2_error: float
    empirical_l1_error: float
    budget: float
    sigma_k_l1: float
    ratio: float | None

    def to_dict(self) -> dict:
        return {
            "empirical_l2_error": self.empirical_l2_error,
            "empirical_l1_error": self.empirical_l1_error,
            "budget": self.budget,
            "sigma_k_l1": self.sigma_k_l1,
            "ratio": self.ratio,
        }


def check_bound(clean: np.ndarray, recovered: np.ndarray, k: int,
                budget: float) -> BoundReport:
    """Report recovery errors, the clean k-term l1 tail, and error/budget."""
    clean = np.asarray(clean, dtype=np.float64)
    recovered = np.asarray(recovered, dtype=np.float64)
    if clean.shape != recovered.shape:
        raise ValueError("clean and recovered must have matching shapes")
    if budget < 0:
        raise ValueError(f"budget must be >= 0, got {budget}")
    diff = recovered - clean
    l2 = float(np.linalg.norm(diff))
    l1 = float(np.abs(diff).sum())
    sigma = float(np.abs(clean - top_k(clean, k)).sum())
    ratio = l2 / budget if budget > 0 else None
    return BoundReport(empirical_l2_error=l2, empirical_l1_error=l1,
                       budget=float(budget), sigma_k_l1=sigma, ratio=ratio)
