"""Colluding observers: Jordan-centre source estimation and closed-form exposure bounds."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np

from ._validation import NoDataError, ParameterError, check_count, check_real
from .graph import Graph, eccentricities

# exact rational arithmetic is used up to this network size
EXACT_LIMIT = 1000
POOLS = ("honest", "infected", "all")


@dataclass(frozen=True)
class AttackerSet:
    members: frozenset
    n: int
    knows_topology: bool = True

    def __post_init__(self):
        members = frozenset(int(v) for v in self.members)
        if any(not 0 <= v < self.n for v in members):
            raise ParameterError("attacker outside node range")
        if len(members) >= self.n:
            raise ParameterError("at least one node must be honest")
        object.__setattr__(self, "members", members)

    @property
    def beta(self):
        return len(self.members) / self.n

    def __contains__(self, v):
        return v in self.members

    def __len__(self):
        return len(self.members)

    @classmethod
    def uniform(cls, n, size, seed=None, exclude=()):
        """``size`` attackers drawn without replacement from nodes not in ``exclude``."""
        size = check_count(size, "size", 0)
        pool = np.setdiff1d(np.arange(n), np.asarray(list(exclude), dtype=np.int64))
        if size > len(pool):
            raise ParameterError(f"cannot place {size} attackers among {len(pool)} nodes")
        rng = np.random.default_rng(seed)
        return cls(frozenset(int(v) for v in rng.choice(pool, size=size, replace=False)), n)

    @classmethod
    def from_beta(cls, n, beta, seed=None, exclude=()):
        beta = check_real(beta, "beta", 0.0, 1.0, high_open=True)
        return cls.uniform(n, math.ceil(beta * n - 1e-9), seed, exclude)


def with_connected_attacker(g, attackers=None):
    """Add one attacker node linked to every existing node."""
    hub = g.n
    extended = Graph.from_edges(g.n + 1, g.edges() + [(v, hub) for v in range(g.n)], k=g.k,
                                seed=g.seed)
    members = set() if attackers is None else set(attackers.members)
    return extended, AttackerSet(frozenset(members | {hub}), g.n + 1)


@dataclass(frozen=True)
class Observation:
    observer: int
    message: str
    time: float
    link: int
    variant: str
    step: int | None = None


def observations_from_trace(trace, attackers, window="first-flood"):
    """Receipts recorded by attackers.

    With ``window="first-flood"`` only receipts up to and including the
    earliest FLOOD reaching any attacker are kept; later receipts add
    nothing once the broadcast has turned into a plain flood.
    """
    if window not in ("first-flood", "all"):
        raise ParameterError(f"unknown window {window!r}")
    members = attackers.members if isinstance(attackers, AttackerSet) else frozenset(attackers)
    obs = [Observation(actor, msg, time, peer, variant, step if step != "" else None)
           for time, actor, kind, msg, peer, variant, step in trace
           if kind == "receive" and actor in members]
    if window == "first-flood":
        floods = [o.time for o in obs if o.variant == "flood"]
        if floods:
            cutoff = min(floods)
            obs = [o for o in obs if o.time <= cutoff]
    return obs


@dataclass
class AttackReport:
    candidates: list
    estimate: int
    true_source: int | None
    success: bool
    rank: int | None
    infected_estimate: list = field(default_factory=list)
    observations: int = 0

    @property
    def n_candidates(self):
        return len(self.candidates)

    def to_dict(self):
        out = asdict(self)
        out["n_candidates"] = self.n_candidates
        return out

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)


def jordan_center_attack(observations, g, attackers, true_source=None, pool="honest"):
    """Estimate the originator as the centre of everything the attackers saw.

    The estimated infected set holds every observing attacker and every peer
    that delivered to one.  Candidates are the nodes minimising the maximum
    distance to that set; ``pool`` picks who may be a candidate: every
    honest node (default), only honest members of the estimated set, or all
    nodes.  The point estimate is the lowest-id candidate and ``rank`` is the
    true source's 1-based position when the pool is ordered by (eccentricity, id).
    """
    if pool not in POOLS:
        raise ParameterError(f"unknown pool {pool!r}")
    if not observations:
        raise NoDataError("no attacker observed the message")
    members = attackers.members if isinstance(attackers, AttackerSet) else frozenset(attackers)
    infected = sorted({o.observer for o in observations} | {o.link for o in observations})
    if pool == "all":
        options = range(g.n)
    elif pool == "honest":
        options = [v for v in range(g.n) if v not in members]
    else:
        options = [v for v in infected if v not in members] or infected
    nodes, ecc = eccentricities(g, infected, options)
    order = np.lexsort((nodes, ecc))
    candidates = [int(v) for v in nodes[ecc == ecc.min()]]
    rank = None
    if true_source is not None:
        hits = np.nonzero(nodes[order] == true_source)[0]
        rank = int(hits[0]) + 1 if hits.size else None
    estimate = candidates[0]
    return AttackReport(candidates, estimate, true_source,
                        true_source is not None and estimate == true_source, rank,
                        [int(v) for v in infected], len(observations))


def _ceil_log(x, base):
    # guard against log(64, 8) = 2.0000000000000004
    return math.ceil(math.log(x) / math.log(base) - 1e-12)


def deanonymization_threshold(n, a, c):
    """Attackers needed to single out a sender, and whether ``a`` already suffice.

    Each attacker shrinks the plausible sender set by a factor ``c``; the
    sender is exposed once ``(n - a) / c**a <= 1``.
    """
    n = check_count(n, "n", 1)
    a = check_count(a, "a", 0)
    c = check_real(c, "c")
    if c <= 1:
        raise ParameterError("c must exceed 1")
    if a >= n:
        raise ParameterError("need n > a")
    exposed = math.log(n - a) <= a * math.log(c) + 1e-12
    return _ceil_log(n - a, c), exposed


def expected_drawings(n, a, pack, ell, exact=None):
    """Expected number of packs drawn until ``ell`` of the ``a`` marked items appear.

    Each drawing is a uniformly random ``pack``-subset of ``n`` items
    (Stadje's coupon collector in packs).  The exact route evaluates
    Stadje's alternating sum in rational arithmetic.  The float route
    walks the number of distinct marked items collected so far, whose
    per-pack gains are hypergeometric; every term is positive, so it stays
    accurate where the alternating sum would cancel.
    """
    n = check_count(n, "n", 1)
    a = check_count(a, "a", 1)
    pack = check_count(pack, "pack", 1)
    ell = check_count(ell, "ell", 1)
    if a >= n:
        raise ParameterError("need a < n")
    if ell > a:
        raise ParameterError(f"ell={ell} exceeds the {a} marked items")
    if pack > n:
        raise ParameterError("pack larger than the population")
    if exact is None:
        exact = n <= EXACT_LIMIT or math.comb(n, pack).bit_length() <= 4096
    if exact:
        total = math.comb(n, pack)
        acc = Fraction(0)
        for j in range(ell):
            sign = (-1) ** (ell - j + 1)
            acc += Fraction(sign * math.comb(a, j) * math.comb(a - j - 1, a - ell),
                            total - math.comb(n - a + j, pack))
        return float(total * acc)
    return _drawings_by_recursion(n, a, pack, ell)


def _log_comb(x, y):
    if y < 0 or y > x:
        return -math.inf
    return math.lgamma(x + 1) - math.lgamma(y + 1) - math.lgamma(x - y + 1)


def _drawings_by_recursion(n, a, pack, ell):
    log_total = _log_comb(n, pack)
    remaining = [0.0] * (ell + 1)
    for j in range(ell - 1, -1, -1):
        gain = [math.exp(_log_comb(a - j, x) + _log_comb(n - a + j, pack - x) - log_total)
                for x in range(min(pack, a - j) + 1)]
        ahead = math.fsum(p * remaining[min(j + x, ell)] for x, p in enumerate(gain) if x)
        remaining[j] = (1.0 + ahead) / (1.0 - gain[0])
    return remaining[0]


def depth_bound(Z, eta, variant="exact"):
    """Smallest spreading depth whose complete eta-ary tree holds ``Z`` nodes.

    Inverts ``Z = 1 + (eta+1) * sum_{i<t-1} eta**i``.  ``variant="printed"``
    keeps the shortcut that plugs ``Z`` in place of ``Z - 1``.
    """
    Z = check_real(Z, "Z", low=1.0)
    eta = check_count(eta, "eta", 1)
    if eta < 2:
        raise ParameterError("eta must be at least 2")
    if variant == "exact":
        inner = 1 - (Z - 1) * (1 - eta) / (eta + 1)
    elif variant == "printed":
        inner = 1 - Z * (1 - eta) / (eta + 1)
    else:
        raise ParameterError(f"unknown variant {variant!r}")
    return math.log(inner) / math.log(eta) + 1


def token_capture_expectation(n, a):
    """Expected passes until an attacker holds the token, each pass a fresh Bernoulli trial."""
    n = check_count(n, "n", 2)
    a = check_count(a, "a", 0)
    if a >= n:
        raise ParameterError("need a < n")
    if a == 0:
        return math.inf
    return (n - 1) / a


@dataclass
class Table2:
    beta: float
    ns: tuple
    etas: tuple
    depths: dict
    manifest: dict

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["eta"] + [str(n) for n in self.ns])
        for eta in self.etas:
            w.writerow([eta] + [f"{self.depths[(n, eta)]:.4f}" for n in self.ns])
        return buf.getvalue()

    def column(self, n):
        return [self.depths[(n, eta)] for eta in self.etas]


def reproduce_table2(beta=0.05, ns=(100, 1000, 10000), etas=(3, 5, 10), c=None, pack=None,
                     variant="exact"):
    """Expected spreading depth reached before enough attackers are enrolled.

    ``c`` (base of the attacker threshold) and ``pack`` (nodes enrolled per
    drawing) default to eta for every cell.
    """
    if not ns or not etas:
        raise ParameterError("grid must be non-empty")
    beta = check_real(beta, "beta", 0.0, 1.0, low_open=True, high_open=True)
    depths, cells = {}, []
    for n in ns:
        a = math.ceil(beta * n - 1e-9)
        if a >= n:
            raise ParameterError(f"no honest nodes left for n={n}, beta={beta}")
        for eta in etas:
            base = eta if c is None else c
            size = eta if pack is None else pack
            ell, _ = deanonymization_threshold(n, a, base)
            if ell > a:
                raise ParameterError(f"n={n}: {ell} attackers needed but only {a} exist")
            Z = expected_drawings(n, a, size, ell)
            depths[(n, eta)] = depth_bound(Z, eta, variant)
            cells.append({"n": n, "eta": eta, "attackers": a, "ell": ell, "c": base,
                          "pack": size, "expected_drawings": Z, "depth": depths[(n, eta)]})
    manifest = {
        "beta": beta,
        "c": "eta" if c is None else c,
        "pack": "eta" if pack is None else pack,
        "attackers": "ceil(beta * n)",
        "depth_inversion": variant,
        "cells": cells,
    }
    return Table2(beta, tuple(ns), tuple(etas), depths, manifest)


def _placement(n, size, seed):
    rng = np.random.default_rng([seed, 7])
    source = int(rng.integers(n))
    return source, AttackerSet.uniform(n, size, rng, exclude=[source])


def paired_attack(seed, n=1000, k=6, beta=0.05, eta=3, depth=4, pool="honest"):
    """Attack eta-adaptive diffusion and a plain flood from the same source.

    Graph, source and attacker placement all derive from ``seed``.  Runs
    stop once the first FLOOD reaches an attacker since later receipts are
    outside the observation window.  Returns ``(adaptive, flood)`` reports.
    """
    from .graph import generate_k_growing
    from .protocol import SimConfig, run_simulation

    g = generate_k_growing(n, k, seed)
    source, attackers = _placement(n, math.ceil(beta * n - 1e-9), seed)
    reports = []
    for d in (depth, 1):
        cfg = SimConfig(n=n, k=k, graph_seed=seed, eta=eta, depth=d, origin=source, seed=seed,
                        attackers=tuple(sorted(attackers.members)), halt_on_attacker_flood=True)
        run = run_simulation(cfg, g)
        obs = observations_from_trace(run.trace, attackers)
        reports.append(jordan_center_attack(obs, g, attackers, source, pool))
    return tuple(reports)


def token_capture_passes(seed, n=500, k=6, a=25, eta=3, max_steps=1000):
    """Token passes until an attacker first holds the token, forcing a pass every step.

    Returns ``None`` if no attacker received the token within ``max_steps``.
    """
    from .graph import generate_k_growing
    from .protocol import SimConfig, run_simulation

    g = generate_k_growing(n, k, seed)
    source, attackers = _placement(n, a, seed)
    cfg = SimConfig(n=n, k=k, graph_seed=seed, eta=eta, depth=max_steps, origin=source,
                    seed=seed, schedule="fixed", fixed_p=1.0,
                    attackers=tuple(sorted(attackers.members)), stop_on_attacker_token=True)
    run = run_simulation(cfg, g)
    return run.token_passes if run.halted == "attacker-token" else None
