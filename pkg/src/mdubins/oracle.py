"""Exhaustive shortest-path computation by word enumeration.

Independently of the multistart solver, each of the 15 admissible words
gets its own square residual system in 1 to 3 unknown durations, solved by
damped Gauss-Newton from a deterministic grid of starting points.  The
union of all word solutions, with non-stationary three-turn roots
discarded, yields a ground-truth shortest path for cross-validation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import core, _refine
from .core import Instance, PathCandidate, SolvedPath

GRID_POINTS_PER_DIM = 16
ROOT_RESIDUAL_TOL = 1e-10
# Three-turn roots whose middle arc is not strictly longer than pi/a violate
# stationarity and are dominated, so enumeration drops them.
MIDDLE_ARC_GUARD = 1e-9

_MAX_ITER = 40
_MAX_HALVINGS = 40
_LS_CHUNK = 8  # halving factors evaluated per batched residual call


@dataclass(frozen=True)
class WordProblem:
    """One admissible word and its unknown arc durations."""

    word: str

    def __post_init__(self) -> None:
        if self.word not in core.ADMISSIBLE_WORDS:
            raise ValueError(f"inadmissible word {self.word!r}")

    @property
    def slots(self) -> tuple[int, ...]:
        return core.embed_word(self.word)

    @property
    def unknowns(self) -> int:
        return len(self.word)


def _boxes(instance: Instance, word: str) -> np.ndarray:
    circ = core.TWO_PI / instance.a
    straight = instance.distance + 4.0 / instance.a
    return np.array([straight if letter == "S" else circ for letter in word])


def _grid(ub: np.ndarray) -> np.ndarray:
    axes = [(np.arange(GRID_POINTS_PER_DIM) + 0.5) / GRID_POINTS_PER_DIM * b for b in ub]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def _scatter(X: np.ndarray, colidx: np.ndarray) -> np.ndarray:
    full = np.zeros((X.shape[0], 5))
    full[np.arange(X.shape[0])[:, None], colidx] = X
    return full


def _unique_rows(wid: np.ndarray, X: np.ndarray, decimals: int) -> np.ndarray:
    """Indices keeping one representative per (word, rounded coordinates)."""
    key = np.column_stack([wid.astype(float), np.round(X, decimals)])
    order = np.lexsort(key.T[::-1])
    sk = key[order]
    first = np.ones(len(sk), dtype=bool)
    if len(sk) > 1:
        first[1:] = (np.abs(np.diff(sk, axis=0)) > 0.0).any(axis=1)
    return order[first]


def _newton_groups(
    instance: Instance, items: list[tuple[int, tuple[int, ...], np.ndarray]]
) -> dict[int, np.ndarray]:
    """Damped Gauss-Newton over a batch of same-arity word systems.

    ``items`` holds (word id, slot indices, per-unknown upper bounds); every
    word system starts from its full deterministic grid.  Steps are damped
    by halving until the residual norm decreases (at most _MAX_HALVINGS
    times, else the start is discarded).  Returns converged word-coordinate
    roots grouped by word id.
    """
    k = len(items[0][1])
    X = np.concatenate([_grid(ub) for _, _, ub in items], axis=0)
    wid = np.concatenate(
        [np.full(GRID_POINTS_PER_DIM**k, i) for i, _, _ in items]
    )
    colidx = np.concatenate(
        [np.tile(np.array(slots), (GRID_POINTS_PER_DIM**k, 1)) for _, slots, _ in items]
    )
    ub_rows = np.concatenate(
        [np.tile(ub, (GRID_POINTS_PER_DIM**k, 1)) for _, _, ub in items]
    )
    reg = 1e-14 * np.eye(k)
    out_w, out_x = [], []
    for it in range(_MAX_ITER):
        if X.shape[0] == 0:
            break
        r = core.residual_batch(instance, _scatter(X, colidx))
        rn = np.linalg.norm(r, axis=1)
        done = rn <= 1e-12
        if done.any():
            out_w.append(wid[done])
            out_x.append(X[done])
            keep = ~done
            X, wid, colidx, ub_rows, r, rn = (
                X[keep], wid[keep], colidx[keep], ub_rows[keep], r[keep], rn[keep]
            )
            if X.shape[0] == 0:
                break
        if it >= 20 or (it >= 6 and (rn > 1e2).any()):
            keep = rn <= (1e-8 if it >= 20 else 1e2)
            X, wid, colidx, ub_rows, r, rn = (
                X[keep], wid[keep], colidx[keep], ub_rows[keep], r[keep], rn[keep]
            )
            if X.shape[0] == 0:
                break
        if it in (5, 10, 16, 24) and X.shape[0] > 1:
            keep = _unique_rows(wid, X, 3 if it == 5 else 6)
            X, wid, colidx, ub_rows, r, rn = (
                X[keep], wid[keep], colidx[keep], ub_rows[keep], r[keep], rn[keep]
            )
        J5 = core.jacobian_batch(instance, _scatter(X, colidx))
        J = np.take_along_axis(J5, colidx[:, None, :].repeat(4, axis=1), axis=2)
        JtJ = np.einsum("bij,bik->bjk", J, J) + reg
        Jtr = np.einsum("bij,bi->bj", J, r)
        try:
            step = -np.linalg.solve(JtJ, Jtr[..., None])[..., 0]
        except np.linalg.LinAlgError:
            step = -np.einsum("bij,bi->bj", np.linalg.pinv(JtJ), Jtr)
        # Fast path: accept the full Newton step where it already improves.
        Xn = X + step
        rn1 = np.linalg.norm(
            core.residual_batch(instance, _scatter(Xn, colidx)), axis=1
        )
        accepted = rn1 < rn
        Xn = np.where(accepted[:, None], Xn, X)
        base = np.full(X.shape[0], 0.5)
        factors = 0.5 ** np.arange(_LS_CHUNK)
        for _chunk in range((_MAX_HALVINGS - 1) // _LS_CHUNK + 1):
            todo = np.flatnonzero(~accepted)
            if todo.size == 0:
                break
            f = base[todo, None] * factors[None, :]
            trials = X[todo, None, :] + f[..., None] * step[todo, None, :]
            flat = trials.reshape(-1, k)
            rt = core.residual_batch(
                instance, _scatter(flat, np.repeat(colidx[todo], _LS_CHUNK, axis=0))
            )
            rtn = np.linalg.norm(rt, axis=1).reshape(todo.size, _LS_CHUNK)
            improving = rtn < rn[todo, None]
            has = improving.any(axis=1)
            first = improving.argmax(axis=1)
            sel = todo[has]
            Xn[sel] = trials[has, first[has]]
            accepted[sel] = True
            base[todo[~has]] *= 0.5**_LS_CHUNK
        inside = accepted & ((Xn > -1.0) & (Xn < ub_rows + 1.0)).all(axis=1)
        X, wid, colidx, ub_rows = (
            np.maximum(Xn[inside], -0.5), wid[inside], colidx[inside], ub_rows[inside]
        )
    if not out_w:
        return {}
    wid_all = np.concatenate(out_w)
    x_all = np.concatenate(out_x, axis=0)
    return {int(i): x_all[wid_all == i] for i in np.unique(wid_all)}


def _dedupe(points: np.ndarray, tol: float) -> np.ndarray:
    if points.shape[0] <= 1:
        return points
    order = np.lexsort(points.T[::-1])
    pts = points[order]
    reps = [pts[0]]
    for p in pts[1:]:
        if all(np.abs(p - q).max() > tol for q in reps):
            reps.append(p)
    return np.array(reps)


def _polished_candidates(
    instance: Instance, slots: tuple[int, ...], ub: np.ndarray, raw: np.ndarray
) -> list[PathCandidate]:
    if raw.shape[0]:
        raw = raw[(raw > -1e-6).all(axis=1)]  # keep boundary roots, not exterior ones
    raw = _dedupe(np.clip(raw, 0.0, None), 1e-6)
    out: list[PathCandidate] = []
    seen: list[np.ndarray] = []
    for row in raw:
        xi = _refine.polish(instance, _scatter(row[None, :], np.array([slots]))[0])
        if xi is None:
            continue
        word_coords = xi[list(slots)]
        if (word_coords > ub + 1e-9).any():
            continue
        res = float(np.linalg.norm(core.residual_batch(instance, xi[None, :])[0]))
        if res > ROOT_RESIDUAL_TOL:
            continue
        if any(np.abs(word_coords - s).max() <= 1e-6 for s in seen):
            continue
        seen.append(word_coords)
        out.append(PathCandidate(tuple(xi)))
    out.sort(key=lambda c: (c.length, c.durations))
    return out


def solve_word(instance: Instance, word: WordProblem | str) -> list[PathCandidate]:
    """All feasible duration vectors for one word, boxed to at most a full
    turn per circular arc (line-of-flight plus four radii for S arcs).

    The list is empty when the word admits no feasible path for the
    instance; durations satisfy the full residual to ROOT_RESIDUAL_TOL.
    """
    problem = WordProblem(word) if isinstance(word, str) else word
    ub = _boxes(instance, problem.word)
    groups = _newton_groups(instance, [(0, problem.slots, ub)])
    raw = groups.get(0, np.empty((0, problem.unknowns)))
    return _polished_candidates(instance, problem.slots, ub, raw)


def _is_ccc(word: str) -> bool:
    return len(word) == 3 and "S" not in word


def enumerate_words(instance: Instance) -> list[tuple[str, PathCandidate]]:
    """Word solutions over all 15 admissible words, with the three-turn
    middle-arc filter applied."""
    by_arity: dict[int, list[str]] = {1: [], 2: [], 3: []}
    for word in core.ADMISSIBLE_WORDS:
        by_arity[len(word)].append(word)
    found: list[tuple[str, PathCandidate]] = []
    for k, words in by_arity.items():
        items = [
            (i, core.embed_word(w), _boxes(instance, w)) for i, w in enumerate(words)
        ]
        groups = _newton_groups(instance, items)
        for i, w in enumerate(words):
            raw = groups.get(i, np.empty((0, k)))
            for cand in _polished_candidates(instance, core.embed_word(w), _boxes(instance, w), raw):
                if _is_ccc(w):
                    middle = cand.durations[core.embed_word(w)[1]]
                    if middle <= math.pi / instance.a + MIDDLE_ARC_GUARD:
                        continue
                found.append((w, cand))
    return found


def shortest_by_enumeration(instance: Instance) -> SolvedPath:
    """Ground-truth shortest path as the minimum over all word solutions.

    Ties within 1e-9 relative length break toward the lexicographically
    smallest word.
    """
    res0 = float(np.linalg.norm(core.residual(instance, core.ZERO_CANDIDATE)))
    if res0 <= ROOT_RESIDUAL_TOL:
        return SolvedPath.from_candidate(core.ZERO_CANDIDATE)
    found = enumerate_words(instance)
    if not found:
        raise RuntimeError("enumeration found no feasible word; instance invalid?")
    lmin = min(cand.length for _, cand in found)
    tie = [
        (core.word_of(cand), cand.length, cand)
        for _, cand in found
        if cand.length <= lmin + 1e-9 * max(1.0, lmin)
    ]
    tie.sort(key=lambda item: (item[0], item[1], item[2].durations))
    return SolvedPath.from_candidate(tie[0][2])
