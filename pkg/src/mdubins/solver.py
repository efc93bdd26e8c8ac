"""Multistart solution of the five-duration shortest-path program.

Minimizes total length subject to the four feasibility residuals and
nonnegative durations, via an augmented-Lagrangian outer loop with a
box-projected BFGS inner solve, run from a batch of low-discrepancy and
word-structured starting points.  A Gauss-Newton polish pushes every
converged run to full precision, and a globalization loop re-solves under
a shrinking length bound until no shorter stationary path turns up.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

from . import core, _refine
from .core import Instance, PathCandidate, SolvedPath

# Duration vectors whose classified structures agree within this max-norm
# are merged as duplicates.
DUPLICATE_TOL = 1e-5

_AL_MAX_OUTER = 14
_AL_PEN0 = 10.0
_AL_PEN_GROWTH = 8.0
_AL_PEN_MAX = 1e10
_AL_FEAS_TARGET = 1e-9
_AL_PG_TARGET = 1e-7


class SolverError(RuntimeError):
    """No multistart run converged to a stationary feasible path."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass(frozen=True)
class SolverConfig:
    feasibility_tol: float = 1e-9
    optimality_tol: float = 1e-8
    multistart_count: int = 64
    seed: int = 0
    epsilon_globalize: float | None = None  # None: 1e-3 times the incumbent length
    max_global_rounds: int = 8
    max_inner_iterations: int = 150

    def __post_init__(self) -> None:
        for name in ("feasibility_tol", "optimality_tol"):
            v = getattr(self, name)
            if not (0.0 < v <= 1e-2):
                raise ValueError(f"{name} must lie in (0, 1e-2], got {v}")
        if self.epsilon_globalize is not None and not (self.epsilon_globalize > 0.0):
            raise ValueError("epsilon_globalize must be positive")
        if self.multistart_count < 1:
            raise ValueError("multistart_count must be at least 1")
        if self.max_global_rounds < 1:
            raise ValueError("max_global_rounds must be at least 1")
        if self.max_inner_iterations < 10:
            raise ValueError("max_inner_iterations must be at least 10")


@dataclass(frozen=True)
class SolveReport:
    best: SolvedPath
    all_found: tuple[SolvedPath, ...]
    rounds: int
    starts_converged: int


def classify(candidate: PathCandidate, tol: float | None = None) -> str:
    """Word of a duration vector: sub-``tol`` arcs dropped, neighbours merged."""
    return core.word_of(candidate, tol)


def _upper_bounds(instance: Instance) -> np.ndarray:
    circ = core.TWO_PI / instance.a
    straight = instance.distance + 4.0 / instance.a
    return np.array([circ, circ, straight, circ, circ])


def _starts(instance: Instance, config: SolverConfig, bound: float | None) -> np.ndarray:
    """Word-structured plus space-filling starting points."""
    ub = _upper_bounds(instance)
    n = config.multistart_count
    sampler = qmc.Halton(d=5, scramble=True, seed=config.seed)
    u = sampler.random(n)
    words = core.ADMISSIBLE_WORDS
    X = np.zeros((n, 5))
    n_struct = min(n, 3 * len(words))
    for i in range(n_struct):
        slots = core.embed_word(words[i % len(words)])
        for k, slot in enumerate(slots):
            X[i, slot] = (0.05 + 0.9 * u[i, k]) * ub[slot]
    X[n_struct:] = (0.02 + 0.96 * u[n_struct:]) * ub
    if bound is not None:
        total = X.sum(axis=1)
        over = total > bound
        X[over] *= (0.95 * bound / total[over])[:, None]
    return X


def _al_value_grad(instance, X, lam, mu, pen, bound, want_grad=True):
    r = core.residual_batch(instance, X)
    f = X.sum(axis=1) + np.einsum("bi,bi->b", lam, r) + 0.5 * pen * np.einsum(
        "bi,bi->b", r, r
    )
    t = None
    if bound is not None:
        g_in = X.sum(axis=1) - bound
        t = np.maximum(0.0, mu + pen * g_in)
        f = f + (t * t - mu * mu) / (2.0 * pen)
    if not want_grad:
        return f, None
    J = core.jacobian_batch(instance, X)
    grad = 1.0 + np.einsum("bij,bi->bj", J, lam + pen[:, None] * r)
    if bound is not None:
        grad = grad + t[:, None]
    return f, grad


def _projected_grad_norm(X, g, ub) -> np.ndarray:
    return np.abs(X - np.clip(X - g, 0.0, ub)).max(axis=1)


def _inner_bfgs(instance, X, lam, mu, pen, bound, ub, omega, active, max_iter):
    """Box-projected BFGS on the augmented Lagrangian, batched over rows."""
    B = X.shape[0]
    eye = np.broadcast_to(np.eye(5), (B, 5, 5)).copy()
    H = eye.copy()
    f, g = _al_value_grad(instance, X, lam, mu, pen, bound)
    live = active.copy()
    for _ in range(max_iter):
        pg = _projected_grad_norm(X, g, ub)
        live &= pg > omega
        if not live.any():
            break
        d = -np.einsum("bij,bj->bi", H, g)
        bad = np.einsum("bi,bi->b", d, g) > -1e-14
        if bad.any():
            d[bad] = -g[bad]
            H[bad] = np.eye(5)
        alpha = np.ones(B)
        accepted = ~live
        Xn = X.copy()
        for _ls in range(30):
            todo = ~accepted
            if not todo.any():
                break
            trial = np.clip(X[todo] + alpha[todo, None] * d[todo], 0.0, ub)
            ft, _ = _al_value_grad(
                instance, trial, lam[todo], mu[todo], pen[todo], bound, want_grad=False
            )
            slope = np.einsum("bi,bi->b", g[todo], trial - X[todo])
            ok = ft <= f[todo] + 1e-4 * slope + 1e-15 * np.abs(f[todo])
            idx = np.flatnonzero(todo)[ok]
            Xn[idx] = trial[ok]
            accepted[idx] = True
            alpha[~accepted] *= 0.5
        stalled = live & ~accepted
        live &= ~stalled
        fn, gn = _al_value_grad(instance, Xn, lam, mu, pen, bound)
        s = Xn - X
        y = gn - g
        sy = np.einsum("bi,bi->b", s, y)
        norm_ok = sy > 1e-12 * np.linalg.norm(s, axis=1) * np.linalg.norm(y, axis=1)
        upd = live & accepted & norm_ok
        if upd.any():
            su, yu, Hu = s[upd], y[upd], H[upd]
            rho = 1.0 / sy[upd]
            Hy = np.einsum("bij,bj->bi", Hu, yu)
            yHy = np.einsum("bi,bi->b", yu, Hy)
            Hu = (
                Hu
                - rho[:, None, None]
                * (np.einsum("bi,bj->bij", su, Hy) + np.einsum("bi,bj->bij", Hy, su))
                + (rho * (1.0 + rho * yHy))[:, None, None]
                * np.einsum("bi,bj->bij", su, su)
            )
            H[upd] = Hu
        reset = live & accepted & ~norm_ok
        if reset.any():
            H[reset] = np.eye(5)
        X, f, g = Xn, fn, gn
    return X


def _al_multistart(instance, X0, bound, config):
    """Run the augmented-Lagrangian loop on a batch of starts."""
    ub = _upper_bounds(instance)
    B = X0.shape[0]
    X = np.clip(X0, 0.0, ub)
    lam = np.zeros((B, 4))
    mu = np.zeros(B)
    pen = np.full(B, _AL_PEN0)
    eta = np.full(B, 1e-1)
    omega = np.full(B, 1e-2)
    done = np.zeros(B, dtype=bool)
    for _outer in range(_AL_MAX_OUTER):
        X = _inner_bfgs(
            instance, X, lam, mu, pen, bound, ub, omega, ~done,
            config.max_inner_iterations,
        )
        r = core.residual_batch(instance, X)
        rn = np.abs(r).max(axis=1)
        good = rn <= np.maximum(eta, _AL_FEAS_TARGET)
        lam[good] += pen[good, None] * r[good]
        if bound is not None:
            g_in = X.sum(axis=1) - bound
            mu[good] = np.maximum(0.0, mu[good] + pen[good] * g_in[good])
        eta[good] = np.maximum(eta[good] * 0.2, 1e-10)
        omega[good] = np.maximum(omega[good] * 0.2, 2e-8)
        grow = ~good & ~done
        pen[grow] = np.minimum(pen[grow] * _AL_PEN_GROWTH, _AL_PEN_MAX)
        J = core.jacobian_batch(instance, X)
        gL = 1.0 + np.einsum("bij,bi->bj", J, lam)
        if bound is not None:
            gL = gL + mu[:, None]
        pg = _projected_grad_norm(X, gL, ub)
        done |= (rn <= _AL_FEAS_TARGET) & (pg <= _AL_PG_TARGET)
        if done.all():
            break
    return X


def _finalize(instance, X, config):
    """Polish raw batch results and keep stationary admissible paths."""
    sols: list[tuple[float, str, tuple, SolvedPath]] = []
    n_converged = 0
    diag_best = (math.inf, math.inf)
    for row in np.asarray(X):
        xi = _refine.polish(instance, row)
        if xi is None:
            continue
        res, pg = _refine.stationarity(instance, xi)
        diag_best = min(diag_best, (res, pg))
        if res > config.feasibility_tol or pg > config.optimality_tol:
            continue
        canon = core.canonical_durations(xi)
        if canon is None:
            continue  # more than three classified arcs: not an admissible word
        n_converged += 1
        cand = PathCandidate(tuple(canon))
        path = SolvedPath.from_candidate(cand)
        sols.append((path.length, path.word, cand.durations, path))
    sols.sort(key=lambda item: item[:3])
    merged: list[SolvedPath] = []
    for length, word, durations, path in sols:
        dup = any(
            m.word == word
            and max(abs(a - b) for a, b in zip(m.candidate.durations, durations))
            <= DUPLICATE_TOL
            for m in merged
        )
        if not dup:
            merged.append(path)
    return merged, n_converged, diag_best


def _solve_ps_full(instance, config, length_bound):
    if length_bound is not None and not (length_bound > 0.0):
        raise ValueError(f"length bound must be positive, got {length_bound}")
    trivial = _trivial_solution(instance, config)
    if trivial is not None:
        return [trivial], 1
    bound = None
    if length_bound is not None:
        eps = config.epsilon_globalize
        if eps is None:
            eps = 1e-3 * length_bound
        bound = length_bound + eps
    X0 = _starts(instance, config, bound)
    X = _al_multistart(instance, X0, bound, config)
    sols, n_converged, diag = _finalize(instance, X, config)
    if not sols:
        raise SolverError(
            "no multistart run converged to a stationary feasible path",
            diagnostics={
                "starts": int(X0.shape[0]),
                "length_bound": length_bound,
                "best_residual": diag[0],
                "best_projected_gradient": diag[1],
            },
        )
    return sols, n_converged


def _trivial_solution(instance, config) -> SolvedPath | None:
    res = float(np.linalg.norm(core.residual(instance, core.ZERO_CANDIDATE)))
    if res <= config.feasibility_tol:
        return SolvedPath.from_candidate(core.ZERO_CANDIDATE)
    return None


def solve_ps(
    instance: Instance, config: SolverConfig, length_bound: float | None = None
) -> list[SolvedPath]:
    """All distinct stationary paths found by one multistart sweep.

    Every returned path satisfies the feasibility residual and first-order
    stationarity at the configured tolerances; duplicates are merged.  With
    ``length_bound`` the sweep is restricted to paths no longer than the
    bound plus the globalization slack.
    """
    sols, _ = _solve_ps_full(instance, config, length_bound)
    return sols


def _merge_reports(found: list[SolvedPath], new: list[SolvedPath]) -> list[SolvedPath]:
    out = list(found)
    for path in new:
        dup = any(
            m.word == path.word
            and max(
                abs(a - b)
                for a, b in zip(m.candidate.durations, path.candidate.durations)
            )
            <= DUPLICATE_TOL
            for m in out
        )
        if not dup:
            out.append(path)
    out.sort(key=lambda p: (p.length, p.word, p.candidate.durations))
    return out


def globalize(instance: Instance, config: SolverConfig) -> SolveReport:
    """Iteratively re-solve under a shrinking length bound.

    Round 0 solves the unbounded program; each later round adds the bound
    (incumbent length) + epsilon and keeps going while a strictly shorter
    stationary path keeps appearing, up to ``max_global_rounds``.
    """
    sols, n_conv = _solve_ps_full(instance, config, None)
    all_found = _merge_reports([], sols)
    best = all_found[0]
    rounds = 1
    starts_converged = n_conv
    while rounds < config.max_global_rounds and best.length > 1e-12:
        try:
            sols, n_conv = _solve_ps_full(instance, config, best.length)
        except SolverError:
            break
        starts_converged += n_conv
        all_found = _merge_reports(all_found, sols)
        rounds += 1
        improved = all_found[0].length < best.length - 1e-9 * max(1.0, best.length)
        best = all_found[0]
        if not improved:
            break
    return SolveReport(
        best=best,
        all_found=tuple(all_found),
        rounds=rounds,
        starts_converged=starts_converged,
    )
