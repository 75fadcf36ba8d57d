"""Virtual-source passing probabilities from a distance distribution.

The token holder's distance to the true source evolves as a time
inhomogeneous Markov chain: at step ``t`` a holder at distance ``h`` hands
the token outward with probability ``p_t(h)`` and otherwise stays.  The goal
state at step ``t`` is the distance distribution restricted to ``0..t-1`` and
renormalised.  When a goal state cannot be reached from its predecessor in a
single stay-or-advance step, the intermediate goals are adjusted backwards
from the final one.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import (
    InfeasibleScheduleError,
    ParameterError,
    check_count,
    check_probability_vector,
)

FEASIBILITY_TOL = 1e-12


def _mass(f):
    mass = getattr(f, "mass", f)
    mass = np.asarray(mass, dtype=float)
    if mass.ndim != 1 or mass.size == 0 or np.any(mass < 0):
        raise ParameterError("distribution must be a non-negative vector")
    return mass


@dataclass(frozen=True)
class TargetState:
    """``probs[i]``: probability that the token sits at distance ``i`` at step ``t``."""

    t: int
    probs: np.ndarray

    def __post_init__(self):
        probs = check_probability_vector(self.probs, "probs")
        if len(probs) != self.t:
            raise ParameterError(f"state at step {self.t} needs {self.t} entries")
        object.__setattr__(self, "probs", np.clip(probs, 0.0, None))

    @classmethod
    def _trusted(cls, t, probs):
        # internal states derived from an already validated distribution
        out = object.__new__(cls)
        object.__setattr__(out, "t", t)
        object.__setattr__(out, "probs", probs)
        return out


@dataclass(frozen=True)
class TransitionMatrix:
    """Outward-move probabilities ``p[h]`` for the step ``t -> t+1``."""

    t: int
    p: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        if p.shape != (self.t,):
            raise ParameterError(f"step {self.t} needs {self.t} probabilities")
        if np.any(p < 0) or np.any(p > 1):
            raise ParameterError("transition probabilities must lie in [0, 1]")
        object.__setattr__(self, "p", p)

    @classmethod
    def _trusted(cls, t, p):
        out = object.__new__(cls)
        object.__setattr__(out, "t", t)
        object.__setattr__(out, "p", p)
        return out

    def matrix(self):
        """Dense bidiagonal column-stochastic matrix of shape ``(t+1, t)``."""
        m = np.zeros((self.t + 1, self.t))
        idx = np.arange(self.t)
        m[idx, idx] = 1.0 - self.p
        m[idx + 1, idx] = self.p
        return m


@dataclass(frozen=True)
class ForwardingSchedule:
    T: int
    per_step: list
    combined: np.ndarray
    smoothed: bool = False
    deviation: float = 0.0
    states: list = field(default_factory=list, repr=False, compare=False)

    def p(self, t):
        """Combined passing probability for the step ``t -> t+1``."""
        if not 1 <= t < self.T:
            raise ParameterError(f"no transition from step {t} in a schedule ending at {self.T}")
        return float(self.combined[t - 1])

    def to_json(self):
        return json.dumps({
            "T": self.T,
            "per_step": [m.p.tolist() for m in self.per_step],
            "combined": [float(x) for x in self.combined],
            "smoothed": self.smoothed,
            "deviation": self.deviation,
        }, indent=2)

    @classmethod
    def from_json(cls, text):
        payload = json.loads(text)
        per_step = [TransitionMatrix(t, np.array(p)) for t, p in enumerate(payload["per_step"], 1)]
        return cls(payload["T"], per_step, np.array(payload["combined"]),
                   payload["smoothed"], payload["deviation"])


def target_state(f, t):
    """Distance masses ``0..t-1`` of ``f`` renormalised to sum one."""
    mass = _mass(f)
    t = check_count(t, "t", 1)
    if t > len(mass):
        raise ParameterError(f"step {t} exceeds the support of length {len(mass)}")
    head = mass[:t]
    total = head.sum()
    if total <= 0:
        raise ParameterError(f"no mass on distances below {t}")
    return TargetState(t, head / total)


def _targets(f, T):
    """Goal states for steps ``1..T`` from a single cumulative sum."""
    mass = _mass(f)
    if T > len(mass):
        raise ParameterError(f"step {T} exceeds the support of length {len(mass)}")
    if mass[0] <= 0:
        raise ParameterError("no mass at distance 0")
    totals = np.cumsum(mass[:T])
    return [TargetState._trusted(t, mass[:t] / totals[t - 1]) for t in range(1, T + 1)]


def _step(cur, nxt):
    """Closed-form ``p_t(i)`` taking ``cur`` (length t) to ``nxt`` (length t+1).

    Returns the clipped probabilities and the indices where the required
    outward flow is negative or exceeds the mass present.
    """
    t = len(cur)
    flow = np.cumsum(cur - nxt[:t])
    bad = np.flatnonzero((flow < -FEASIBILITY_TOL) | (flow > cur + FEASIBILITY_TOL))
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(cur > 0, flow / cur, 0.0)
    return np.clip(p, 0.0, 1.0, out=p), bad.tolist()


def check_feasibility(f, t):
    """Violated ``(t, i)`` pairs for the transition from step ``t`` to ``t+1``."""
    t = check_count(t, "t", 2)
    cur = target_state(f, t).probs
    prev = target_state(f, t - 1).probs
    if prev[0] > 0:
        ratio = cur[0] / prev[0]
        assert 0.0 <= ratio <= 1.0 + FEASIBILITY_TOL, "mass at distance 0 cannot grow"
    _, bad = _step(cur, target_state(f, t + 1).probs)
    return [(t, i) for i in bad]


def _total_variation(a, b):
    m = max(len(a), len(b))
    return 0.5 * float(np.abs(np.pad(a, (0, m - len(a))) - np.pad(b, (0, m - len(b)))).sum())


def schedule_from_states(states, smoothed=False, reference=None):
    """Build a schedule that walks through ``states`` (lengths 1..T) in order."""
    per_step, combined, violations = [], [], []
    for t in range(1, len(states)):
        cur, nxt = states[t - 1].probs, states[t].probs
        p, bad = _step(cur, nxt)
        violations.extend((t, i) for i in bad)
        per_step.append(TransitionMatrix._trusted(t, p))
        combined.append(min(max(float(np.dot(cur, p)), 0.0), 1.0))
    if violations:
        raise InfeasibleScheduleError(violations)
    deviation = 0.0
    if reference is not None:
        deviation = max(_total_variation(s.probs, r.probs) for s, r in zip(states, reference))
    return ForwardingSchedule(len(states), per_step, np.array(combined), smoothed, deviation,
                              list(states))


def ideal_probabilities(f, T):
    """Exact schedule reaching every goal state, or ``InfeasibleScheduleError``."""
    T = check_count(T, "T", 2)
    return schedule_from_states(_targets(f, T))


def smooth_targets(f, T, reading="difference"):
    """Adjusted goal states ``f'_1..f'_T`` whose transitions are all feasible.

    The final state is kept; earlier states are raised from the top distance
    downwards, each entry by ``max(chi, delta)``: ``delta`` is the shortfall
    against the feasibility bound of the following state and ``chi`` hands
    back what was already added above.  ``reading="sum"`` evaluates the
    bound with the added-sum form of the inequality instead and renormalises
    afterwards; it exists only for comparison.
    """
    T = check_count(T, "T", 2)
    if reading not in ("difference", "sum"):
        raise ParameterError(f"unknown reading {reading!r}")
    orig = [s.probs for s in _targets(f, T)]
    adj = [None] * T
    adj[T - 1] = orig[T - 1].copy()
    for t in range(T - 1, 1, -1):
        ft, nxt = orig[t - 1], adj[t]
        fp = ft.copy()
        for i in range(t - 1, -1, -1):
            upper = slice(i + 1, t)
            chi = float(np.sum(ft[upper] - fp[upper]))
            if reading == "difference":
                gap = float(np.sum(nxt[upper] - fp[upper]))
            else:
                gap = float(np.sum(nxt[upper] + fp[upper]))
            delta = nxt[t] - ft[i] + gap
            fp[i] = ft[i] + max(chi, delta)
        fp = np.clip(fp, 0.0, None)
        if reading == "sum" or abs(fp.sum() - 1.0) > 1e-12:
            fp = fp / fp.sum()
        adj[t - 1] = fp
    adj[0] = orig[0].copy()
    out = []
    for t, (a, o) in enumerate(zip(adj, orig), 1):
        if np.max(np.abs(a - o)) <= FEASIBILITY_TOL:
            a = o
        out.append(TargetState(t, a))
    return out


def smoothed_schedule(f, T):
    """Schedule over the smoothed goals; ``deviation`` is the worst TV gap to the ideal goals."""
    T = check_count(T, "T", 2)
    ideal = _targets(f, T)
    adjusted = smooth_targets(f, T)
    changed = any(not np.array_equal(a.probs, o.probs) for a, o in zip(adjusted, ideal))
    return schedule_from_states(adjusted, smoothed=changed, reference=ideal)


def combined_probability(state, m):
    """Single passing probability, averaging ``p_t(h)`` over the holder's distance."""
    if len(state.probs) != len(m.p):
        raise ParameterError("state and transition lengths differ")
    return float(np.clip(np.dot(state.probs, m.p), 0.0, 1.0))


def conditioned_probability(state, m, max_distance):
    """Passing probability for a holder that knows its distance is at most ``max_distance``."""
    if len(state.probs) != len(m.p):
        raise ParameterError("state and transition lengths differ")
    w = state.probs[: max_distance + 1]
    if w.sum() <= 0:
        return combined_probability(state, m)
    return float(np.clip(np.dot(w, m.p[: max_distance + 1]) / w.sum(), 0.0, 1.0))


def evolve(state, m):
    """One Markov step: ``out[i] = p[i-1] in[i-1] + (1 - p[i]) in[i]``."""
    if len(state.probs) != len(m.p):
        raise ParameterError("state and transition lengths differ")
    x = state.probs
    out = np.zeros(len(x) + 1)
    out[:-1] += (1.0 - m.p) * x
    out[1:] += m.p * x
    return TargetState(state.t + 1, out)


def eq2_baseline(d, t, h):
    """Passing probability of classic adaptive diffusion on a d-regular tree."""
    d = check_count(d, "d", 2)
    t = check_count(t, "t", 1)
    h = check_count(h, "h", 1)
    # one hop past the adaptive-diffusion range is allowed; it evaluates to 0
    if h > t // 2 + 1:
        raise ParameterError(f"h={h} outside 1..{t // 2 + 1} for t={t}")
    if d == 2:
        value = (t - 2 * h + 2) / (t + 2)
    else:
        value = ((d - 1) ** (t / 2 - h + 1) - 1) / ((d - 1) ** (t / 2 + 1) - 1)
    return min(max(value, 0.0), 1.0)


class VirtualSourceScheduler(BaseEstimator):
    """Estimator-style wrapper: ``fit`` a distance distribution, read ``p_t`` back.

    With ``smooth=False`` an infeasible distribution raises
    :class:`InfeasibleScheduleError` from ``fit``.
    """

    def __init__(self, T=6, smooth=True):
        self.T = T
        self.smooth = smooth

    def fit(self, X, y=None):
        mass = _mass(X)
        if len(mass) < self.T:
            mass = np.pad(mass, (0, self.T - len(mass)))
        self.schedule_ = smoothed_schedule(mass, self.T) if self.smooth else ideal_probabilities(mass, self.T)
        self.combined_ = self.schedule_.combined
        return self

    def predict(self, t):
        check_is_fitted(self, "schedule_")
        return np.array([self.schedule_.p(int(s)) for s in np.atleast_1d(t)])
