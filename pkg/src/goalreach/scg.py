"""Scaled conjugate gradient minimization (Moller's line-search-free scheme).

The curvature along the search direction is probed with a directional finite
difference of the gradient, a Levenberg-style damping term keeps the local
quadratic model positive definite, and the damping is adapted from the ratio of
actual to predicted loss reduction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

LossGrad = Callable[[np.ndarray], tuple[float, np.ndarray]]

LAMBDA_MIN = 1e-15
LAMBDA_MAX = 1e100


@dataclass(frozen=True)
class ScgState:
    beta: np.ndarray
    loss: float
    grad: np.ndarray
    direction: np.ndarray
    lam: float = 5e-7
    success: bool = True
    n_success: int = 0
    iteration: int = 0
    sigma0: float = 5e-5
    restart_every: int = 0

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("damping must be positive")


def scg_init(fun: LossGrad, beta0, lam: float = 5e-7, sigma0: float = 5e-5,
             restart_every: int | None = None) -> ScgState:
    beta = np.array(beta0, dtype=float)
    loss, grad = fun(beta)
    n = beta.size if restart_every is None else restart_every
    return ScgState(beta, float(loss), np.asarray(grad, dtype=float), -np.asarray(grad, dtype=float),
                    lam, True, 0, 0, sigma0, n)


def scg_step(state: ScgState, fun: LossGrad) -> ScgState:
    """One SCG iteration. Rejected steps leave ``beta`` and the loss unchanged."""
    g = state.grad
    p = state.direction
    mu = float(p @ g)
    if mu >= 0:
        # not a descent direction any more: restart along steepest descent
        p = -g
        mu = float(p @ g)
    kappa = float(p @ p)
    if kappa < np.finfo(float).eps ** 2:
        return replace(state, iteration=state.iteration + 1, success=True)
    sigma = state.sigma0 / math.sqrt(kappa)
    _, g_plus = fun(state.beta + sigma * p)
    theta = float(p @ (np.asarray(g_plus) - g)) / sigma

    lam = state.lam
    delta = theta + lam * kappa
    if delta <= 0:
        # indefinite curvature: raise damping until the model is convex
        delta = lam * kappa
        lam = lam - theta / kappa
    alpha = -mu / delta

    beta_new = state.beta + alpha * p
    loss_new, g_new = fun(beta_new)
    loss_new = float(loss_new)
    if math.isfinite(loss_new) and np.all(np.isfinite(g_new)):
        ratio = 2.0 * (loss_new - state.loss) / (alpha * mu)
    else:
        ratio = -math.inf

    it = state.iteration + 1
    if ratio >= 0 and loss_new <= state.loss:
        g_new = np.asarray(g_new, dtype=float)
        n_success = state.n_success + 1
        if ratio < 0.25:
            lam = min(4.0 * lam, LAMBDA_MAX)
        elif ratio > 0.75:
            lam = max(0.5 * lam, LAMBDA_MIN)
        if state.restart_every and n_success >= state.restart_every:
            d_new = -g_new
            n_success = 0
        else:
            # Polak-Ribiere ratio; mu = p.g < 0 carries the sign
            xi = float((g - g_new) @ g_new) / mu
            d_new = xi * p - g_new
        return ScgState(beta_new, loss_new, g_new, d_new, lam, True, n_success, it,
                        state.sigma0, state.restart_every)
    lam = min(4.0 * lam if math.isfinite(ratio) else 16.0 * lam, LAMBDA_MAX)
    return replace(state, direction=p, lam=lam, success=False, iteration=it)


@dataclass
class ScgResult:
    beta: np.ndarray
    loss: float
    iterations: int
    converged: bool
    loss_history: list[float]


def scg_minimize(fun: LossGrad, beta0, max_iter: int = 200, grad_tol: float = 1e-10,
                 loss_goal: float = -math.inf, **kw) -> ScgResult:
    state = scg_init(fun, beta0, **kw)
    history = [state.loss]
    converged = False
    for _ in range(max_iter):
        if state.loss <= loss_goal or float(np.linalg.norm(state.grad)) <= grad_tol:
            converged = True
            break
        state = scg_step(state, fun)
        if state.success:
            history.append(state.loss)
        elif state.lam >= LAMBDA_MAX:
            break  # no representable step improves the loss any more
    else:
        converged = state.loss <= loss_goal or float(np.linalg.norm(state.grad)) <= grad_tol
    return ScgResult(state.beta, state.loss, state.iteration, converged, history)
