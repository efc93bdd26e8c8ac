"""Planar bounded-curvature path primitives.

Oriented states, exact closed-form arc propagation, and the equality
residuals of the five-duration switching-time program.  Every path is a
concatenation of at most five subarcs with the fixed kind skeleton
L, R, S, L, R; a concrete path is described by its five nonnegative arc
durations (arc length equals duration because paths are unit-speed).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple

import numpy as np

TWO_PI = 2.0 * math.pi

# Durations below ZERO_DURATION_RTOL * max(1, total_length) count as absent
# when a duration vector is classified into a word.
ZERO_DURATION_RTOL = 1e-7


class ArcKind(Enum):
    """Subarc kind: left turn, right turn, or straight segment."""

    L = "L"
    R = "R"
    S = "S"

    @property
    def turn_sign(self) -> int:
        if self is ArcKind.L:
            return 1
        if self is ArcKind.R:
            return -1
        return 0

    def control(self, a: float) -> float:
        """Heading-rate control on this arc for curvature bound ``a``."""
        return self.turn_sign * a


# Kind skeleton of the five duration slots.
SLOT_KINDS = (ArcKind.L, ArcKind.R, ArcKind.S, ArcKind.L, ArcKind.R)

# Control signs of the five slots: u_j = SLOT_SIGNS[j] * a.
SLOT_SIGNS = np.array([1.0, -1.0, 0.0, 1.0, -1.0])


@dataclass(frozen=True)
class OrientedPoint:
    """A planar position with a heading angle (radians, unnormalized).

    Headings are never compared by subtraction; feasibility checks always
    go through the (sin, cos) pair so that theta and theta + 2*pi describe
    the same oriented point.
    """

    x: float
    y: float
    theta: float

    def heading_vector(self) -> tuple[float, float]:
        return math.cos(self.theta), math.sin(self.theta)


@dataclass(frozen=True)
class Instance:
    """A start/goal pair of oriented points with a curvature bound a > 0."""

    start: OrientedPoint
    goal: OrientedPoint
    a: float

    def __post_init__(self) -> None:
        if not (self.a > 0.0) or not math.isfinite(self.a):
            raise ValueError(f"curvature bound must be positive, got {self.a}")

    @property
    def distance(self) -> float:
        return math.hypot(self.goal.x - self.start.x, self.goal.y - self.start.y)


@dataclass(frozen=True)
class PathCandidate:
    """Five nonnegative arc durations over the L,R,S,L,R slot skeleton."""

    durations: tuple[float, float, float, float, float]

    def __post_init__(self) -> None:
        if len(self.durations) != 5:
            raise ValueError("a candidate has exactly five durations")
        object.__setattr__(self, "durations", tuple(float(d) for d in self.durations))
        for j, d in enumerate(self.durations):
            if not math.isfinite(d) or d < 0.0:
                raise ValueError(f"duration {j + 1} must be finite and >= 0, got {d}")

    @property
    def length(self) -> float:
        return math.fsum(self.durations)

    def slot_times(self) -> tuple[float, ...]:
        """Cumulative slot end times t_1..t_5 (t_5 is the total length)."""
        out, acc = [], 0.0
        for d in self.durations:
            acc += d
            out.append(acc)
        return tuple(out)

    def headings(self, theta0: float, a: float) -> tuple[float, float, float, float]:
        """Headings theta_1, theta_2, theta_4, theta_5 after slots 1,2,4,5."""
        x1, x2, x3, x4, x5 = self.durations
        t1 = theta0 + a * x1
        t2 = t1 - a * x2
        t4 = t2 + a * x4
        t5 = t4 - a * x5
        return t1, t2, t4, t5


ZERO_CANDIDATE = PathCandidate((0.0, 0.0, 0.0, 0.0, 0.0))


class Segment(NamedTuple):
    """One positive-duration subarc of a concrete path."""

    kind: ArcKind
    duration: float
    t0: float
    t1: float
    u: float


@dataclass(frozen=True)
class SolvedPath:
    """A classified feasible path: word, durations, switch times, length.

    ``word`` drops sub-threshold durations and merges adjacent arcs of the
    same kind, so it is one of the 15 admissible words (or empty for the
    zero-length path).  ``switch_times`` are the interior boundaries
    between the classified arcs.
    """

    candidate: PathCandidate
    word: str
    length: float
    switch_times: tuple[float, ...]

    @classmethod
    def from_candidate(cls, candidate: PathCandidate, tol: float | None = None) -> "SolvedPath":
        arcs = arc_decomposition(candidate, tol=tol)
        word = "".join(seg.kind.value for seg, _dur in arcs)
        switch_times = tuple(seg.t1 for seg, _dur in arcs[:-1])
        return cls(candidate=candidate, word=word, length=candidate.length,
                   switch_times=switch_times)


# The 15 admissible words: the six three-arc types and their subwords.
ADMISSIBLE_WORDS = (
    "L", "R", "S",
    "LR", "LS", "RL", "RS", "SL", "SR",
    "LRL", "LSL", "LSR", "RLR", "RSL", "RSR",
)


def embed_word(word: str) -> tuple[int, ...] | None:
    """Leftmost assignment of a word's letters to the L,R,S,L,R slots.

    Returns None when the word does not fit the skeleton (more than three
    arcs, or an inadmissible letter order such as 'SS').
    """
    slots, j = [], 0
    for letter in word:
        while j < 5 and SLOT_KINDS[j].value != letter:
            j += 1
        if j == 5:
            return None
        slots.append(j)
        j += 1
    return tuple(slots)


def canonical_durations(xi, tol: float | None = None) -> np.ndarray | None:
    """Zero-threshold, merge same-kind neighbours, re-embed leftmost.

    Gives a canonical five-slot representative of the path's classified
    arc structure, or None when the structure has more than three arcs.
    """
    cand = xi if isinstance(xi, PathCandidate) else PathCandidate(tuple(xi))
    arcs = arc_decomposition(cand, tol)
    word = "".join(seg.kind.value for seg, _ in arcs)
    slots = embed_word(word)
    if slots is None:
        return None
    out = np.zeros(5)
    for slot, (seg, dur) in zip(slots, arcs):
        out[slot] = dur
    return out


def zero_threshold(total_length: float) -> float:
    return ZERO_DURATION_RTOL * max(1.0, total_length)


def segments(candidate: PathCandidate, a: float) -> list[Segment]:
    """Positive-duration slots of ``candidate`` with their time intervals."""
    out, t = [], 0.0
    for kind, d in zip(SLOT_KINDS, candidate.durations):
        if d > 0.0:
            out.append(Segment(kind, d, t, t + d, kind.control(a)))
        t += d
    return out


def arc_decomposition(
    candidate: PathCandidate, tol: float | None = None
) -> list[tuple[Segment, float]]:
    """Classified arcs: sub-threshold slots dropped, same-kind neighbours merged.

    Returns (segment, duration) pairs where the segment carries the merged
    time interval over the original parameterization; ``u`` is left as the
    turn sign (control per unit curvature bound) times 1, i.e. the kind's
    turn sign, since the caller may not have ``a`` at hand.
    """
    if tol is None:
        tol = zero_threshold(candidate.length)
    merged: list[list] = []
    t = 0.0
    for kind, d in zip(SLOT_KINDS, candidate.durations):
        t0, t1 = t, t + d
        t = t1
        if d < tol or d == 0.0:
            continue
        if merged and merged[-1][0] is kind:
            merged[-1][2] = t1
            merged[-1][1] += d
        else:
            merged.append([kind, d, t1, t0])
    return [
        (Segment(kind, dur, t0, t1, float(kind.turn_sign)), dur)
        for kind, dur, t1, t0 in merged
    ]


def word_of(candidate: PathCandidate, tol: float | None = None) -> str:
    """Word of the candidate after zero-thresholding and merging."""
    return "".join(seg.kind.value for seg, _ in arc_decomposition(candidate, tol))


def propagate_arc(
    start: OrientedPoint, kind: ArcKind, duration: float, a: float
) -> OrientedPoint:
    """Advance an oriented point along one subarc, in closed form.

    Circular arcs use the exact sin/cos difference quotients; straight
    segments hold the heading constant.  No numerical integration.
    """
    if not math.isfinite(duration) or duration < 0.0:
        raise ValueError(f"arc duration must be finite and >= 0, got {duration}")
    if not (a > 0.0):
        raise ValueError(f"curvature bound must be positive, got {a}")
    if kind is ArcKind.S:
        return OrientedPoint(
            start.x + duration * math.cos(start.theta),
            start.y + duration * math.sin(start.theta),
            start.theta,
        )
    u = kind.control(a)
    theta1 = start.theta + u * duration
    return OrientedPoint(
        start.x + (math.sin(theta1) - math.sin(start.theta)) / u,
        start.y + (math.cos(start.theta) - math.cos(theta1)) / u,
        theta1,
    )


def propagate_path(start: OrientedPoint, candidate: PathCandidate, a: float) -> OrientedPoint:
    """Fold propagate_arc over the five slots in L,R,S,L,R order."""
    p = start
    for kind, d in zip(SLOT_KINDS, candidate.durations):
        p = propagate_arc(p, kind, d, a)
    return p


def residual(instance: Instance, candidate: PathCandidate) -> np.ndarray:
    """Feasibility residual of the five-duration program.

    Components: terminal position mismatch (x, y) and the heading mismatch
    expressed as (sin theta_f - sin theta_5, cos theta_f - cos theta_5).
    The zero vector characterizes a feasible path; the heading pair makes
    theta_f and theta_f + 2*pi indistinguishable.
    """
    r = residual_batch(instance, np.asarray(candidate.durations)[None, :])
    return r[0]


def residual_batch(instance: Instance, xi: np.ndarray) -> np.ndarray:
    """Vectorized residual for an (N, 5) array of duration vectors."""
    return res_jac_batch(instance, xi, want_jac=False)[0]


def jacobian_batch(instance: Instance, xi: np.ndarray) -> np.ndarray:
    """Analytic Jacobian d residual / d durations, shape (N, 4, 5)."""
    return res_jac_batch(instance, xi, want_jac=True)[1]


def res_jac_batch(
    instance: Instance, xi: np.ndarray, want_jac: bool = True
) -> tuple[np.ndarray, np.ndarray | None]:
    """Residual and (optionally) Jacobian in one pass, sharing the trig."""
    xi = np.asarray(xi, dtype=float)
    a = instance.a
    th0 = instance.start.theta
    t1 = th0 + a * xi[..., 0]
    t2 = t1 - a * xi[..., 1]
    t4 = t2 + a * xi[..., 3]
    t5 = t4 - a * xi[..., 4]
    s0, c0 = math.sin(th0), math.cos(th0)
    s1, s2, s4, s5 = np.sin(t1), np.sin(t2), np.sin(t4), np.sin(t5)
    c1, c2, c4, c5 = np.cos(t1), np.cos(t2), np.cos(t4), np.cos(t5)
    x3 = xi[..., 2]
    thf = instance.goal.theta
    r = np.empty(xi.shape[:-1] + (4,), dtype=float)
    r[..., 0] = (
        instance.start.x
        - instance.goal.x
        + (-s0 + 2.0 * s1 - 2.0 * s2 + 2.0 * s4 - s5) / a
        + x3 * c2
    )
    r[..., 1] = (
        instance.start.y
        - instance.goal.y
        + (c0 - 2.0 * c1 + 2.0 * c2 - 2.0 * c4 + c5) / a
        + x3 * s2
    )
    r[..., 2] = math.sin(thf) - s5
    r[..., 3] = math.cos(thf) - c5
    if not want_jac:
        return r, None
    J = np.empty(xi.shape[:-1] + (4, 5), dtype=float)
    J[..., 0, 0] = 2.0 * c1 - 2.0 * c2 + 2.0 * c4 - c5 - a * x3 * s2
    J[..., 0, 1] = 2.0 * c2 - 2.0 * c4 + c5 + a * x3 * s2
    J[..., 0, 2] = c2
    J[..., 0, 3] = 2.0 * c4 - c5
    J[..., 0, 4] = c5
    J[..., 1, 0] = 2.0 * s1 - 2.0 * s2 + 2.0 * s4 - s5 + a * x3 * c2
    J[..., 1, 1] = 2.0 * s2 - 2.0 * s4 + s5 - a * x3 * c2
    J[..., 1, 2] = s2
    J[..., 1, 3] = 2.0 * s4 - s5
    J[..., 1, 4] = s5
    dth5 = np.array([a, -a, 0.0, a, -a])
    J[..., 2, :] = -c5[..., None] * dth5
    J[..., 3, :] = s5[..., None] * dth5
    return r, J


def _locate(segs: list[Segment], t: float) -> Segment:
    """Owning segment of time t: right-continuous, last segment owns t_f."""
    for seg in segs:
        if seg.t0 <= t < seg.t1:
            return seg
    return segs[-1]


def path_state(
    instance: Instance, candidate: PathCandidate, t: float
) -> tuple[OrientedPoint, float]:
    """State and active control at time t along the path, exactly propagated.

    The control at an interior switch time is that of the following arc;
    at t_f it is the final arc's.
    """
    total = candidate.length
    if not (-1e-12 <= t <= total + 1e-12):
        raise ValueError(f"time {t} outside [0, {total}]")
    t = min(max(t, 0.0), total)
    segs = segments(candidate, instance.a)
    if not segs:
        return instance.start, 0.0
    p = instance.start
    seg = _locate(segs, t)
    for s in segs:
        if s is seg:
            break
        p = propagate_arc(p, s.kind, s.duration, instance.a)
    return propagate_arc(p, seg.kind, t - seg.t0, instance.a), seg.u


def sample_times(candidate: PathCandidate, n: int) -> np.ndarray:
    """n uniform times over [0, t_f] with classified switch times inserted."""
    if n < 2:
        raise ValueError(f"need at least 2 samples, got {n}")
    total = candidate.length
    ts = np.linspace(0.0, total, n)
    switches = np.array([seg.t1 for seg, _ in arc_decomposition(candidate)[:-1]])
    if switches.size:
        # Keep the exact switch values, dropping grid points that collide.
        tol = 1e-12 * max(1.0, total)
        clear = np.abs(ts[:, None] - switches[None, :]).min(axis=1) > tol
        ts = np.concatenate([ts[clear], switches])
        ts.sort(kind="stable")
    return ts


def states_at(
    instance: Instance, candidate: PathCandidate, ts: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized exact states along the path at sorted times ``ts``.

    Returns (xy, theta, u) with shapes (N, 2), (N,), (N,).
    """
    ts = np.asarray(ts, dtype=float)
    segs = segments(candidate, instance.a)
    n = len(ts)
    if not segs:
        xy = np.tile([instance.start.x, instance.start.y], (n, 1))
        return xy, np.full(n, instance.start.theta), np.zeros(n)
    starts = np.array([s.t0 for s in segs])
    # Right-continuous ownership; clamp beyond-last into the final segment.
    idx = np.clip(np.searchsorted(starts, ts, side="right") - 1, 0, len(segs) - 1)
    p = instance.start
    seg_state = []
    for s in segs:
        seg_state.append((p.x, p.y, p.theta))
        p = propagate_arc(p, s.kind, s.duration, instance.a)
    sx = np.array([st[0] for st in seg_state])
    sy = np.array([st[1] for st in seg_state])
    sth = np.array([st[2] for st in seg_state])
    su = np.array([s.u for s in segs])
    dt = ts - starts[idx]
    u = su[idx]
    th0 = sth[idx]
    theta = th0 + u * dt
    circ = u != 0.0
    x = np.where(
        circ,
        sx[idx] + np.where(circ, (np.sin(theta) - np.sin(th0)) / np.where(circ, u, 1.0), 0.0),
        sx[idx] + dt * np.cos(th0),
    )
    y = np.where(
        circ,
        sy[idx] + np.where(circ, (np.cos(th0) - np.cos(theta)) / np.where(circ, u, 1.0), 0.0),
        sy[idx] + dt * np.sin(th0),
    )
    return np.stack([x, y], axis=1), theta, u


def sample_path(
    instance: Instance, candidate: PathCandidate, n: int
) -> list[tuple[float, OrientedPoint, float]]:
    """Uniform-in-arclength samples of the path, switch times included.

    Each entry is (t, state, u) with u the active control at t (the
    following arc's control at switch times).
    """
    ts = sample_times(candidate, n)
    xy, theta, u = states_at(instance, candidate, ts)
    return [
        (float(t), OrientedPoint(float(px), float(py), float(th)), float(uu))
        for t, (px, py), th, uu in zip(ts, xy, theta, u)
    ]
