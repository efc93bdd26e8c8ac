"""Polishing of near-feasible duration vectors.

Snaps sub-threshold durations to exact zero and runs a damped Gauss-Newton
correction of the remaining free durations onto the constraint manifold,
using the reduced three-component residual (terminal position mismatch and
the wrapped terminal-heading mismatch).  Shared by the solver and the
word-enumeration oracle so both report roots at full double precision.
"""

from __future__ import annotations

import math

import numpy as np

from . import core

_DTH5 = np.array([1.0, -1.0, 0.0, 1.0, -1.0])


def _wrap(angle: float) -> float:
    return (angle + math.pi) % (2.0 * math.pi) - math.pi


def residual3(instance: core.Instance, xi: np.ndarray) -> np.ndarray:
    """Position residuals plus the wrapped heading residual (3-vector)."""
    r4 = core.residual_batch(instance, xi[None, :])[0]
    th5 = instance.start.theta + instance.a * float(_DTH5 @ xi)
    return np.array([r4[0], r4[1], _wrap(th5 - instance.goal.theta)])


def jacobian3(instance: core.Instance, xi: np.ndarray) -> np.ndarray:
    J4 = core.jacobian_batch(instance, xi[None, :])[0]
    J = np.empty((3, 5))
    J[0] = J4[0]
    J[1] = J4[1]
    J[2] = instance.a * _DTH5
    return J


def polish(
    instance: core.Instance,
    xi: np.ndarray,
    act_tol: float | None = None,
    target: float = 1e-13,
    max_iter: int = 30,
) -> np.ndarray | None:
    """Snap near-zero durations and Gauss-Newton the rest onto feasibility.

    Returns the refined duration vector, or None when the correction fails
    to reach ``target`` residual (relative to the instance scale).
    """
    xi = np.maximum(np.asarray(xi, dtype=float).copy(), 0.0)
    scale = max(1.0, instance.distance, float(xi.sum()))
    for _ in range(4):
        if act_tol is None:
            thresh = core.zero_threshold(float(xi.sum()))
        else:
            thresh = act_tol
        xi[xi < thresh] = 0.0
        free = xi > 0.0
        r = residual3(instance, xi)
        rn = float(np.linalg.norm(r))
        if not free.any():
            return xi if rn <= target * scale else None
        ok = _gauss_newton(instance, xi, free, target * scale, max_iter)
        if not ok:
            return None
        if (xi[free] < thresh).any():
            continue  # a free duration collapsed; re-snap and retry
        return xi
    return xi if np.linalg.norm(residual3(instance, xi)) <= target * scale else None


def _gauss_newton(instance, xi, free, target, max_iter) -> bool:
    r = residual3(instance, xi)
    rn = float(np.linalg.norm(r))
    for _ in range(max_iter):
        if rn <= target:
            return True
        J = jacobian3(instance, xi)[:, free]
        step, *_ = np.linalg.lstsq(J, -r, rcond=None)
        base = xi[free]
        factor, improved = 1.0, False
        for _h in range(40):
            trial = np.maximum(base + factor * step, 0.0)
            xi[free] = trial
            r_t = residual3(instance, xi)
            rn_t = float(np.linalg.norm(r_t))
            if rn_t < rn:
                r, rn, improved = r_t, rn_t, True
                break
            factor *= 0.5
        if not improved:
            xi[free] = base
            return rn <= target
    return rn <= target


def stationarity(instance: core.Instance, xi: np.ndarray) -> tuple[float, float]:
    """Feasibility norm and projected-gradient norm at a duration vector.

    Multipliers for the four equality residuals come from a least-squares
    fit of the KKT conditions on the strictly positive durations; the
    projected gradient additionally penalizes negative reduced costs at
    active (zero) durations.
    """
    xi = np.asarray(xi, dtype=float)
    res = float(np.linalg.norm(core.residual_batch(instance, xi[None, :])[0]))
    J = core.jacobian_batch(instance, xi[None, :])[0]  # (4, 5)
    free = xi > 0.0
    if free.any():
        A = J[:, free].T  # (k, 4)
        nu, *_ = np.linalg.lstsq(A, -np.ones(int(free.sum())), rcond=None)
    else:
        nu = np.zeros(4)
    g = 1.0 + J.T @ nu  # gradient of the Lagrangian
    pg = 0.0
    if free.any():
        pg = float(np.abs(g[free]).max())
    if (~free).any():
        pg = max(pg, float(np.maximum(-g[~free], 0.0).max()))
    return res, pg
