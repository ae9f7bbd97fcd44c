"""Convex joint sample/feature selection solved by two-block ADMM.

The model learned here is an n x d coefficient matrix W that reconstructs
the data as X ~ X W X. Row sparsity of W encodes which samples are kept,
column sparsity which features; a nuclear-norm term keeps W low rank and an
angular-weighted l1 term confines reconstruction to similar samples:

    min_W  ||X - X W X||_F^2 + alpha ||W||_2,1 + beta ||W^T||_2,1
           + gamma ||W||_* + eta ||T . (W X)||_1

The splitting W X = Z, W = W~ makes the nonsmooth terms separable: Z and W~
have closed-form proximal updates (entrywise shrinkage, singular value
thresholding) and the remaining W block is smooth except for the two l2,1
terms, which are smoothed and minimized with L-BFGS. Multipliers take a
single dual ascent step per sweep and the penalties grow geometrically up
to a cap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .data import Dataset
from .kernels import (
    AngularWeights,
    angular_weights,
    l21_norm,
    nuclear_norm,
    soft_threshold,
    svt,
)
from .lbfgs import LbfgsConfig, LbfgsTrace, minimize


class SolverAbortError(RuntimeError):
    """An iterate went non-finite; carries the iteration that failed."""


@dataclass(frozen=True)
class RegularizationParams:
    """Weights of the five objective terms plus numerical knobs.

    ``alpha`` drives row (sample) sparsity, ``beta`` column (feature)
    sparsity, ``gamma`` low rank, ``eta`` the angular locality penalty.
    ``varsigma`` floors the angular weights; ``smoothing_eps`` smooths the
    l2,1 terms inside the W subproblem only - reported objective values are
    always exact.
    """

    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0
    eta: float = 1.0
    varsigma: float = 1e-8
    smoothing_eps: float = 1e-8

    def __post_init__(self) -> None:
        for name in ("alpha", "beta", "gamma", "eta"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.varsigma <= 0:
            raise ValueError("varsigma must be positive")
        if self.smoothing_eps <= 0:
            raise ValueError("smoothing_eps must be positive")


@dataclass(frozen=True)
class SolverConfig:
    """ADMM loop settings.

    Defaults follow the standard initialization for this scheme: penalties
    start at 1e-6 and grow by a factor tau=1.1 per sweep up to 1e10, with
    stopping tolerance 1e-3. ``adaptive_rho=False`` freezes the penalties,
    the regime in which the monotone-difference diagnostic is meaningful.
    ``seed`` is echoed into result documents; the solve itself starts from
    zeros and is fully deterministic.
    """

    rho1_init: float = 1e-6
    rho2_init: float = 1e-6
    rho_max: float = 1e10
    tau: float = 1.1
    epsilon: float = 1e-3
    max_outer_iters: int = 1000
    adaptive_rho: bool = True
    inner: LbfgsConfig = field(default_factory=LbfgsConfig)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.tau < 1.0:
            raise ValueError("tau must be >= 1")
        if not (0.0 < self.rho1_init <= self.rho_max):
            raise ValueError("need 0 < rho1_init <= rho_max")
        if not (0.0 < self.rho2_init <= self.rho_max):
            raise ValueError("need 0 < rho2_init <= rho_max")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.max_outer_iters < 1:
            raise ValueError("max_outer_iters must be >= 1")


@dataclass
class SolverState:
    """All ADMM iterates: primal W, Z, W~, multipliers, penalties."""

    w: np.ndarray        # n x d
    z: np.ndarray        # n x n
    w_tilde: np.ndarray  # n x d
    lambda1: np.ndarray  # n x n
    lambda2: np.ndarray  # n x d
    rho1: float
    rho2: float
    iter: int = 0

    @classmethod
    def initial(cls, d: int, n: int, cfg: SolverConfig) -> "SolverState":
        """All-zero start."""
        return cls(
            w=np.zeros((n, d)),
            z=np.zeros((n, n)),
            w_tilde=np.zeros((n, d)),
            lambda1=np.zeros((n, n)),
            lambda2=np.zeros((n, d)),
            rho1=cfg.rho1_init,
            rho2=cfg.rho2_init,
            iter=0,
        )

    def copy(self) -> "SolverState":
        return SolverState(
            w=self.w.copy(),
            z=self.z.copy(),
            w_tilde=self.w_tilde.copy(),
            lambda1=self.lambda1.copy(),
            lambda2=self.lambda2.copy(),
            rho1=self.rho1,
            rho2=self.rho2,
            iter=self.iter,
        )

    def all_finite(self) -> bool:
        return all(
            np.all(np.isfinite(m))
            for m in (self.w, self.z, self.w_tilde, self.lambda1, self.lambda2)
        )


@dataclass(frozen=True)
class IterationRecord:
    """One outer sweep: exact objective, residuals, change, step size in H."""

    objective: float
    residual_wx_z: float
    residual_w_wtilde: float
    rel_change: Optional[float]
    h_seminorm_sq: float


@dataclass
class ConvergenceReport:
    """Per-iteration records plus why the loop stopped.

    ``inner_failures`` lists (iteration, reason) for sweeps whose W
    subproblem ended on a line-search failure; the loop continues from the
    last good inner iterate in that case.
    """

    records: list[IterationRecord] = field(default_factory=list)
    stop_reason: str = "max_iters"
    inner_failures: list[tuple[int, str]] = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.stop_reason == "converged"

    @property
    def iterations(self) -> int:
        return len(self.records)


@dataclass(frozen=True)
class ConvergenceDecision:
    converged: bool
    residual_wx_z: float
    residual_w_wtilde: float
    rel_change: Optional[float]


def objective(
    ds: Dataset,
    w: np.ndarray,
    params: RegularizationParams,
    t: AngularWeights,
) -> float:
    """Exact (unsmoothed) value of the five-term objective at W."""
    x = ds.matrix
    d, n = x.shape
    w = np.asarray(w, dtype=float)
    if w.shape != (n, d):
        raise ValueError(f"w must be {n}x{d}, got {w.shape}")
    if t.t.shape != (n, n):
        raise ValueError(f"angular weights must be {n}x{n}, got {t.t.shape}")
    resid = (x @ w) @ x - x
    wx = w @ x
    value = (
        float((resid * resid).sum())
        + params.alpha * l21_norm(w)
        + params.beta * l21_norm(w.T)
        + params.gamma * nuclear_norm(w)
        + params.eta * float(np.abs(t.t * wx).sum())
    )
    if not math.isfinite(value):
        raise ValueError("objective is non-finite")
    return value


def augmented_lagrangian(
    ds: Dataset,
    state: SolverState,
    params: RegularizationParams,
    t: AngularWeights,
) -> float:
    """Augmented Lagrangian of the split problem at the given state."""
    x = ds.matrix
    w, z, wt = state.w, state.z, state.w_tilde
    resid = (x @ w) @ x - x
    r1 = w @ x - z
    r2 = w - wt
    return (
        float((resid * resid).sum())
        + params.alpha * l21_norm(w)
        + params.beta * l21_norm(w.T)
        + params.gamma * nuclear_norm(wt)
        + params.eta * float(np.abs(t.t * z).sum())
        + float((state.lambda1 * r1).sum())
        + float((state.lambda2 * r2).sum())
        + 0.5 * state.rho1 * float((r1 * r1).sum())
        + 0.5 * state.rho2 * float((r2 * r2).sum())
    )


def _w_anchors(state: SolverState) -> tuple[np.ndarray, np.ndarray]:
    # Completing the square turns the multiplier terms into shifted targets.
    a1 = state.z - state.lambda1 / state.rho1
    a2 = state.w_tilde - state.lambda2 / state.rho2
    return a1, a2


def w_subproblem_objective(
    ds: Dataset,
    state: SolverState,
    params: RegularizationParams,
    w: Optional[np.ndarray] = None,
) -> float:
    """Smoothed W-subproblem objective (what the inner L-BFGS minimizes).

    The l2,1 terms use sqrt(||.||^2 + smoothing_eps) so the subproblem is
    differentiable everywhere. Evaluated at ``state.w`` unless ``w`` given.
    """
    x = ds.matrix
    w = state.w if w is None else np.asarray(w, dtype=float)
    eps = params.smoothing_eps
    a1, a2 = _w_anchors(state)
    resid = (x @ w) @ x - x
    p1 = w @ x - a1
    p2 = w - a2
    rows = np.sqrt((w * w).sum(axis=1) + eps)
    cols = np.sqrt((w * w).sum(axis=0) + eps)
    return (
        float((resid * resid).sum())
        + params.alpha * float(rows.sum())
        + params.beta * float(cols.sum())
        + 0.5 * state.rho1 * float((p1 * p1).sum())
        + 0.5 * state.rho2 * float((p2 * p2).sum())
    )


def w_subproblem_gradient(
    ds: Dataset,
    state: SolverState,
    params: RegularizationParams,
    w: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Gradient of :func:`w_subproblem_objective` with respect to W."""
    x = ds.matrix
    w = state.w if w is None else np.asarray(w, dtype=float)
    eps = params.smoothing_eps
    a1, a2 = _w_anchors(state)
    resid = (x @ w) @ x - x
    g = 2.0 * (x.T @ (resid @ x.T))
    g += state.rho1 * ((w @ x - a1) @ x.T)
    g += state.rho2 * (w - a2)
    rows = np.sqrt((w * w).sum(axis=1) + eps)
    cols = np.sqrt((w * w).sum(axis=0) + eps)
    g += params.alpha * (w / rows[:, None])
    g += params.beta * (w / cols[None, :])
    return g


def solve_w_subproblem(
    ds: Dataset,
    state: SolverState,
    params: RegularizationParams,
    inner: LbfgsConfig,
) -> tuple[np.ndarray, LbfgsTrace]:
    """Minimize the smoothed W subproblem, warm-started at ``state.w``.

    The returned inner objective never exceeds its value at the warm start;
    on a line-search failure the last accepted iterate comes back with the
    reason in the trace.
    """
    x = ds.matrix
    d, n = x.shape
    shape = (n, d)

    def f(wflat: np.ndarray) -> float:
        return w_subproblem_objective(ds, state, params, wflat.reshape(shape))

    def g(wflat: np.ndarray) -> np.ndarray:
        return w_subproblem_gradient(ds, state, params, wflat.reshape(shape)).ravel()

    w_new, trace = minimize(f, g, state.w.ravel(), inner)
    return w_new.reshape(shape), trace


def update_z(
    state: SolverState,
    ds: Dataset,
    t: AngularWeights,
    eta: float,
) -> np.ndarray:
    """Closed-form Z update: weighted entrywise shrinkage of WX + L1/rho1."""
    if state.rho1 <= 0:
        raise ValueError("rho1 must be positive")
    k = state.w @ ds.matrix + state.lambda1 / state.rho1
    return soft_threshold(k, eta * t.t / state.rho1)


def update_w_tilde(state: SolverState, gamma: float) -> np.ndarray:
    """Closed-form W~ update: singular value thresholding of W + L2/rho2."""
    if state.rho2 <= 0:
        raise ValueError("rho2 must be positive")
    return svt(state.w + state.lambda2 / state.rho2, gamma / state.rho2)


def update_duals_and_rho(
    state: SolverState,
    ds: Dataset,
    cfg: SolverConfig,
) -> SolverState:
    """Dual ascent on both multipliers, then the geometric penalty growth."""
    x = ds.matrix
    r1 = state.w @ x - state.z
    r2 = state.w - state.w_tilde
    lambda1 = state.lambda1 + state.rho1 * r1
    lambda2 = state.lambda2 + state.rho2 * r2
    rho1, rho2 = state.rho1, state.rho2
    if cfg.adaptive_rho:
        rho1 = min(cfg.tau * rho1, cfg.rho_max)
        rho2 = min(cfg.tau * rho2, cfg.rho_max)
    return SolverState(
        w=state.w,
        z=state.z,
        w_tilde=state.w_tilde,
        lambda1=lambda1,
        lambda2=lambda2,
        rho1=rho1,
        rho2=rho2,
        iter=state.iter + 1,
    )


def check_convergence(
    state: SolverState,
    ds: Dataset,
    prev_objective: Optional[float],
    curr_objective: float,
    epsilon: float,
) -> ConvergenceDecision:
    """Stopping test: both max-norm residuals and the relative objective
    change must all be below ``epsilon``.

    With no previous objective (``None``) the decision is always "not
    converged". A zero previous objective satisfies the change condition
    only when the current objective is also exactly zero; ``rel_change`` is
    ``None`` whenever the ratio is undefined.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    x = ds.matrix
    res1 = float(np.abs(state.w @ x - state.z).max())
    res2 = float(np.abs(state.w - state.w_tilde).max())
    if prev_objective is None:
        return ConvergenceDecision(False, res1, res2, None)
    if prev_objective == 0.0:
        obj_ok = curr_objective == 0.0
        rel: Optional[float] = 0.0 if obj_ok else None
    else:
        rel = abs((curr_objective - prev_objective) / prev_objective)
        obj_ok = rel < epsilon
    converged = res1 < epsilon and res2 < epsilon and obj_ok
    return ConvergenceDecision(converged, res1, res2, rel)


def state_difference(a: SolverState, b: SolverState) -> SolverState:
    """Componentwise difference a - b (penalties and counter taken from a)."""
    return SolverState(
        w=a.w - b.w,
        z=a.z - b.z,
        w_tilde=a.w_tilde - b.w_tilde,
        lambda1=a.lambda1 - b.lambda1,
        lambda2=a.lambda2 - b.lambda2,
        rho1=a.rho1,
        rho2=a.rho2,
        iter=a.iter,
    )


def h_seminorm_sq(
    delta: SolverState,
    ds: Dataset,
    rho1: float,
    rho2: float,
) -> float:
    """Squared block-weighted seminorm of a state difference.

    The weighting is block diagonal: the W block carries the quadratic form
    induced by the coupling constraint (``rho1 ||dW X||^2 + rho2 ||dW||^2``),
    Z and W~ carry their penalties, and the multipliers the inverse
    penalties. Successive-iterate differences measured this way are the
    solver's contraction diagnostic.
    """
    if rho1 <= 0 or rho2 <= 0:
        raise ValueError("penalties must be positive")
    x = ds.matrix

    def fro2(m: np.ndarray) -> float:
        return float((m * m).sum())

    return (
        rho1 * fro2(delta.w @ x)
        + rho2 * fro2(delta.w)
        + rho1 * fro2(delta.z)
        + rho2 * fro2(delta.w_tilde)
        + fro2(delta.lambda1) / rho1
        + fro2(delta.lambda2) / rho2
    )


def solve(
    ds: Dataset,
    params: RegularizationParams = RegularizationParams(),
    cfg: SolverConfig = SolverConfig(),
) -> tuple[np.ndarray, ConvergenceReport]:
    """Run the full ADMM loop from the all-zero start.

    Each sweep updates W (inner L-BFGS), then Z and W~ (closed forms), then
    the multipliers and penalties, then tests convergence on the exact
    objective. Deterministic: identical inputs give identical reports.

    Returns the final W (n x d) and the per-iteration report.

    Raises
    ------
    ValueError
        Zero columns (the angular weights are undefined there).
    SolverAbortError
        A non-finite iterate appeared.
    """
    x = ds.matrix
    d, n = x.shape
    t = angular_weights(ds, params.varsigma)
    state = SolverState.initial(d, n, cfg)
    report = ConvergenceReport()
    prev_objective: Optional[float] = objective(ds, state.w, params, t)

    for _ in range(cfg.max_outer_iters):
        prev_state = state.copy()

        w_new, inner_trace = solve_w_subproblem(ds, state, params, cfg.inner)
        if inner_trace.stop_reason == "line_search_failure":
            report.inner_failures.append((state.iter, inner_trace.stop_reason))
        state.w = w_new
        state.z = update_z(state, ds, t, params.eta)
        state.w_tilde = update_w_tilde(state, params.gamma)
        state = update_duals_and_rho(state, ds, cfg)

        if not state.all_finite():
            raise SolverAbortError(
                f"non-finite iterate at outer iteration {state.iter}"
            )

        curr_objective = objective(ds, state.w, params, t)
        decision = check_convergence(
            state, ds, prev_objective, curr_objective, cfg.epsilon
        )
        # The sweep ran under the previous penalties; weight its step with them.
        h2 = h_seminorm_sq(
            state_difference(state, prev_state), ds, prev_state.rho1, prev_state.rho2
        )
        report.records.append(
            IterationRecord(
                objective=curr_objective,
                residual_wx_z=decision.residual_wx_z,
                residual_w_wtilde=decision.residual_w_wtilde,
                rel_change=decision.rel_change,
                h_seminorm_sq=h2,
            )
        )
        if decision.converged:
            report.stop_reason = "converged"
            break
        prev_objective = curr_objective
    else:
        report.stop_reason = "max_iters"

    return state.w.copy(), report
