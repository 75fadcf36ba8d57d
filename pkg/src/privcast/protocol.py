"""Discrete-event simulation of eta-adaptive diffusion followed by flood-and-prune.

One message per run.  Every node runs the same handlers; the node holding
the virtual-source token decides once per step whether to keep spreading
around itself or to pass the token outward.  When the step counter reaches
the configured depth the holder switches to flooding, which reaches every
node of a connected graph.

Steps are counted from 1 at the true source.  A holder at step ``s`` has
the message spread ``s - 1`` hops around itself, and the passing
probability used at step ``s`` is the schedule's ``p_s`` for the move to
step ``s + 1``.
"""

from __future__ import annotations

import csv
import hashlib
import heapq
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import distmodel, forwarding
from ._validation import (
    ConfigurationError,
    InfeasibleScheduleError,
    ParameterError,
    check_count,
    check_real,
)
from .graph import Graph, generate_k_growing

SPREAD, TOKEN, FLOOD = "spread", "token", "flood"
SCHEDULES = ("smoothed", "ideal", "eq2", "fixed")
TRACE_COLUMNS = ("time", "actor", "kind", "message", "peer", "variant", "step")


@dataclass(frozen=True)
class MessageId:
    digest: str

    @classmethod
    def of(cls, content):
        if isinstance(content, str):
            content = content.encode("utf-8")
        return cls(hashlib.sha256(content).hexdigest()[:16])

    def __str__(self):
        return self.digest


@dataclass(frozen=True)
class ProtocolMessage:
    """SPREAD(id), TOKEN(sender, step, id) or FLOOD(id).

    ``hops`` is only filled in by the regular-tree baseline schedule, which
    needs the distance travelled; the real protocol never sends it.
    """

    variant: str
    msg_id: MessageId
    sender: int | None = None
    step: int | None = None
    hops: int | None = None


def tree_count(eta, depth):
    """Nodes holding the message after ``depth - 1`` levels of an eta-ary spread."""
    return 1 + (eta + 1) * sum(eta ** i for i in range(depth - 1))


def default_depth(eta, n, target=None):
    """Smallest depth whose full spread reaches the anonymity target (default n/10)."""
    target = n / 10 if target is None else target
    d = 1
    while tree_count(eta, d) < target:
        d += 1
    return d


@dataclass
class SimConfig:
    n: int = 100
    k: int = 4
    graph_seed: int = 0
    eta: int = 3
    depth: int | None = None
    origin: object = "uniform"
    latency_median: float = 0.05
    latency_shape: float = 0.25
    timeout_multiplier: float = 2.0
    schedule: str = "smoothed"
    fixed_p: object = None
    anonymity_target: float | None = None
    epsilon: float = distmodel.DEFAULT_EPSILON
    seed: int = 0
    message: str = "hello"
    attackers: tuple = ()
    silent: tuple = ()
    stop_on_attacker_token: bool = False
    halt_on_attacker_flood: bool = False
    refine_holder: bool = False

    def validate(self, n=None):
        n = self.n if n is None else n
        check_count(self.eta, "eta", 1)
        if self.depth is not None:
            check_count(self.depth, "depth", 1)
        check_real(self.latency_median, "latency_median", low=0.0, low_open=True)
        check_real(self.latency_shape, "latency_shape", low=0.0)
        if check_real(self.timeout_multiplier, "timeout_multiplier") <= 1.0:
            raise ParameterError("timeout_multiplier must exceed 1")
        if self.schedule not in SCHEDULES:
            raise ParameterError(f"unknown schedule {self.schedule!r}")
        if self.schedule == "fixed" and self.fixed_p is None:
            raise ParameterError("fixed schedule needs fixed_p")
        if self.origin != "uniform":
            o = check_count(self.origin, "origin", 0)
            if o >= n:
                raise ParameterError(f"origin {o} outside 0..{n - 1}")
        for v in list(self.attackers) + list(self.silent):
            if not 0 <= int(v) < n:
                raise ParameterError(f"node {v} outside 0..{n - 1}")
        return self

    def resolved_depth(self, n=None):
        if self.depth is not None:
            return self.depth
        return default_depth(self.eta, self.n if n is None else n, self.anonymity_target)

    def to_json(self):
        payload = asdict(self)
        payload["attackers"] = sorted(int(v) for v in self.attackers)
        payload["silent"] = sorted(int(v) for v in self.silent)
        return json.dumps(payload, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        payload = json.loads(text) if isinstance(text, str) else dict(text)
        unknown = set(payload) - set(cls.__dataclass_fields__)
        if unknown:
            raise ParameterError(f"unknown config keys {sorted(unknown)}")
        for key in ("attackers", "silent"):
            if key in payload:
                payload[key] = tuple(payload[key])
        return cls(**payload)


@dataclass
class EventTrace:
    records: list = field(default_factory=list)

    def add(self, time, actor, kind, message, peer, variant="", step=""):
        self.records.append((time, actor, kind, message, peer, variant, step))

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def of_kind(self, kind):
        return [r for r in self.records if r[2] == kind]

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for time, actor, kind, msg, peer, variant, step in self.records:
            w.writerow((f"{time:.9f}", actor, kind, msg,
                        "" if peer is None else peer, variant, "" if step is None else step))
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text):
        trace = cls()
        for row in csv.DictReader(io.StringIO(text)):
            peer = int(row["peer"]) if row["peer"] else None
            step = int(row["step"]) if row.get("step") else ""
            trace.add(float(row["time"]), int(row["actor"]), row["kind"], row["message"],
                      peer, row.get("variant", ""), step)
        return trace


@dataclass
class NodeState:
    gamma: tuple | None = None
    predecessor: int | None = None
    upstream: int | None = None
    protocol_set: tuple | None = None
    prev_vs: int | None = None
    seen: bool = False
    flooded: bool = False
    holding: bool = False
    vs_step: int = 0
    hops: int = 0
    token_from_step: int = 0
    last_token_step: int = 0
    tried: set = field(default_factory=set)
    timer_generation: int = 0
    timer_step: int = 0


@dataclass
class SimulationResult:
    config: SimConfig
    trace: EventTrace
    true_source: int
    depth: int
    token_path: list
    diffusion_set: set
    infected: set
    flood_start: float | None
    halted: str | None
    schedule: object = None

    @property
    def token_passes(self):
        return len(self.token_path) - 1

    @property
    def infected_before_flood(self):
        return len(self.diffusion_set)

    def summary(self):
        return {
            "config": json.loads(self.config.to_json()),
            "seed": self.config.seed,
            "true_source": self.true_source,
            "depth": self.depth,
            "token_path": self.token_path,
            "token_passes": self.token_passes,
            "infected_before_flood": self.infected_before_flood,
            "infected": len(self.infected),
            "flood_start": self.flood_start,
            "halted": self.halted,
            "events": len(self.trace),
            "retransmits": len(self.trace.of_kind("retransmit")),
            "schedule": None if self.schedule is None else [float(x) for x in self.schedule],
        }


class _LatencySampler:
    """Log-normal link delays drawn in blocks from one generator."""

    def __init__(self, rng, median, shape, block=4096):
        self.rng, self.mu, self.shape, self.block = rng, math.log(median), shape, block
        self._buf, self._i = np.empty(0), 0

    def __call__(self):
        if self._i >= len(self._buf):
            self._buf = self.rng.lognormal(self.mu, self.shape, self.block)
            self._i = 0
        self._i += 1
        return float(self._buf[self._i - 1])


def passing_schedule(config, n, k, depth):
    """Combined ``p_s`` for steps ``1..depth-1`` (index 0 is step 1).

    The regular-tree baseline has no fixed schedule and returns ``None``.
    """
    if depth < 2 or config.schedule == "eq2":
        return None, None
    if config.schedule == "fixed":
        p = np.broadcast_to(np.asarray(config.fixed_p, dtype=float), (depth - 1,)).copy()
        if np.any(p < 0) or np.any(p > 1):
            raise ParameterError("fixed_p must lie in [0, 1]")
        return p, None
    normal = distmodel.NormalParams(distmodel.estimate_mu(n, k), distmodel.estimate_sigma(n, k))
    mass = distmodel.discretize(normal, n, k, config.epsilon).padded(depth).mass
    try:
        if config.schedule == "ideal":
            sched = forwarding.ideal_probabilities(mass, depth)
        else:
            sched = forwarding.smoothed_schedule(mass, depth)
    except InfeasibleScheduleError as exc:
        raise ConfigurationError(f"schedule infeasible without smoothing: {exc.violations}") from exc
    return sched.combined.copy(), sched


class Simulation:
    def __init__(self, config, graph=None):
        if graph is None:
            graph = generate_k_growing(config.n, config.k, config.graph_seed)
        self.g = graph
        self.cfg = config.validate(graph.n)
        self.depth = config.resolved_depth(graph.n)
        k = graph.k if graph.k else max(1, round(graph.n_edges / graph.n))
        self.p, self.sched = passing_schedule(config, graph.n, k, self.depth)
        seeds = np.random.SeedSequence(config.seed).spawn(4)
        self.rng_select = np.random.default_rng(seeds[0])
        self.rng_decide = np.random.default_rng(seeds[1])
        self.latency = _LatencySampler(np.random.default_rng(seeds[2]),
                                       config.latency_median, config.latency_shape)
        self.mean_latency = config.latency_median * math.exp(config.latency_shape ** 2 / 2)
        if config.origin == "uniform":
            self.source = int(np.random.default_rng(seeds[3]).integers(graph.n))
        else:
            self.source = int(config.origin)
        self.msg_id = MessageId.of(config.message)
        self.mid = str(self.msg_id)
        self.attackers = frozenset(int(v) for v in config.attackers)
        self.silent = frozenset(int(v) for v in config.silent)
        self.state = [NodeState() for _ in range(graph.n)]
        self.trace = EventTrace()
        self.now = 0.0
        self._queue, self._seq = [], 0
        self._link_clock = {}
        self.token_path = [self.source]
        self.diffusion = {self.source}
        self.flood_start = None
        self.halted = None

    # scheduling

    def _push(self, time, action, *args):
        self._seq += 1
        heapq.heappush(self._queue, (time, self._seq, action, args))

    def _send(self, src, dst, msg):
        arrival = self.now + self.latency()
        link = (src, dst)
        # links deliver in order
        arrival = max(arrival, self._link_clock.get(link, 0.0))
        self._link_clock[link] = arrival
        self.trace.add(self.now, src, "send", self.mid, dst, msg.variant,
                       msg.step if msg.step is not None else "")
        self._push(arrival, self._deliver, src, dst, msg)

    def _choose(self, options, size=1):
        idx = self.rng_select.choice(len(options), size=size, replace=False)
        return [options[int(i)] for i in sorted(idx)]

    def run(self):
        st = self.state[self.source]
        st.seen = True
        nbrs = list(self.g.neighbors(self.source))
        st.gamma = tuple(self._choose(nbrs, min(self.cfg.eta + 1, len(nbrs)))) if nbrs else ()
        st.protocol_set = st.gamma
        self._become_holder(self.source, 1, None)
        while self._queue and self.halted is None:
            self.now, _, action, args = heapq.heappop(self._queue)
            action(*args)
        infected = {v for v, s in enumerate(self.state) if s.seen or s.flooded}
        return SimulationResult(self.cfg, self.trace, self.source, self.depth, self.token_path,
                                self.diffusion, infected, self.flood_start, self.halted,
                                None if self.p is None else self.p)

    # handlers

    def _deliver(self, src, dst, msg):
        self.trace.add(self.now, dst, "receive", self.mid, src, msg.variant,
                       msg.step if msg.step is not None else "")
        st = self.state[dst]
        if msg.variant == FLOOD:
            self._handle_flood(dst, src)
            if self.cfg.halt_on_attacker_flood and dst in self.attackers:
                self.halted = "attacker-flood"
            return
        if st.timer_step:
            self._arm_timer(dst)
        if msg.variant == SPREAD:
            self._handle_spread(dst, src)
        else:
            self._handle_token(dst, src, msg)

    def _first_receipt(self, v, src):
        st = self.state[v]
        st.seen = True
        self.diffusion.add(v)
        options = [u for u in self.g.neighbors(v) if u != src]
        st.gamma = tuple(self._choose(options, min(self.cfg.eta, len(options)))) if options else ()
        st.predecessor = st.upstream = src
        st.protocol_set = st.gamma

    def _handle_spread(self, v, src):
        st = self.state[v]
        if not st.seen:
            self._first_receipt(v, src)
        elif src == st.upstream:
            for u in st.protocol_set:
                if u != src:
                    self._send(v, u, ProtocolMessage(SPREAD, self.msg_id))

    def _handle_token(self, v, src, msg):
        st = self.state[v]
        if v in self.silent or st.flooded or msg.step <= st.last_token_step:
            return
        if not st.seen:
            self._first_receipt(v, src)
        self.token_path.append(v)
        if self.cfg.stop_on_attacker_token and v in self.attackers:
            self.halted = "attacker-token"
            return
        st.hops = (msg.hops or 0) + 1
        st.token_from_step = msg.step
        self._become_holder(v, msg.step, src)

    def _become_holder(self, v, step, prev):
        st = self.state[v]
        st.holding, st.vs_step, st.prev_vs, st.last_token_step = True, step, prev, step
        st.timer_step = 0
        if prev is not None:
            st.protocol_set = tuple(dict.fromkeys(st.gamma + (prev,)))
            # relay only for the passer from now on; keeping the first sender
            # can close a relay cycle through the rest of the graph
            st.upstream = prev
        if step >= self.depth:
            self._start_flood(v)
            return
        if prev is not None:
            copies = 1 if step == 2 else 2
            for u in st.gamma:
                if u == prev:
                    continue
                for _ in range(copies):
                    self._send(v, u, ProtocolMessage(SPREAD, self.msg_id))
        self._decide(v)

    def _pass_probability(self, v):
        st = self.state[v]
        s = st.vs_step
        if self.cfg.schedule == "eq2":
            h = min(max(st.hops, 1), math.ceil(s / 2))
            return forwarding.eq2_baseline(self.cfg.eta + 1, s, h)
        if self.cfg.refine_holder and self.sched is not None and st.token_from_step:
            m = self.sched.per_step[s - 1]
            return forwarding.conditioned_probability(self.sched.states[s - 1], m,
                                                      st.token_from_step - 1)
        return float(self.p[s - 1])

    def _decide(self, v):
        st = self.state[v]
        if st.flooded or not st.holding:
            return
        if st.vs_step >= self.depth:
            self._start_flood(v)
            return
        targets = [u for u in st.gamma if u != st.prev_vs]
        if self.rng_decide.random() < self._pass_probability(v):
            if not targets:
                self.trace.add(self.now, v, "degenerate", self.mid, None, TOKEN, st.vs_step)
            else:
                (nxt,) = self._choose(targets)
                self._pass_token(v, nxt, kind="token-pass")
                return
        self.trace.add(self.now, v, "keep", self.mid, None, "", st.vs_step)
        self._push(self.now + self.latency(), self._keep_round, v)

    def _pass_token(self, v, nxt, kind):
        st = self.state[v]
        st.holding = False
        st.upstream = nxt
        st.tried.add(nxt)
        st.timer_step = st.vs_step
        self.trace.add(self.now, v, kind, self.mid, nxt, TOKEN, st.vs_step + 1)
        hops = st.hops if self.cfg.schedule == "eq2" else None
        self._send(v, nxt, ProtocolMessage(TOKEN, self.msg_id, v, st.vs_step + 1, hops))
        self._arm_timer(v)

    def _keep_round(self, v):
        st = self.state[v]
        if st.flooded or not st.holding:
            return
        for u in st.protocol_set:
            self._send(v, u, ProtocolMessage(SPREAD, self.msg_id))
        st.vs_step += 1
        self._decide(v)

    # time-outs

    def _arm_timer(self, v):
        st = self.state[v]
        st.timer_generation += 1
        remaining = self.depth - st.timer_step + 1
        wait = self.cfg.timeout_multiplier * self.mean_latency * 2 * remaining
        self._push(self.now + wait, self._expire, v, st.timer_generation)

    def _expire(self, v, generation):
        st = self.state[v]
        if st.flooded or not st.timer_step or generation != st.timer_generation:
            return
        self.trace.add(self.now, v, "timeout", self.mid, None, TOKEN, st.timer_step + 1)
        options = [u for u in st.gamma if u != st.prev_vs and u not in st.tried]
        if options:
            (nxt,) = self._choose(options)
            self._pass_token(v, nxt, kind="retransmit")
            return
        # nobody left to hand the token to: carry on as holder
        step = st.timer_step + 1
        st.timer_step = 0
        st.holding, st.vs_step = True, step
        self._decide(v)

    # flood-and-prune

    def _start_flood(self, v):
        st = self.state[v]
        if st.flooded:
            return
        self.flood_start = self.now
        self.trace.add(self.now, v, "flood-start", self.mid, None, FLOOD, st.vs_step)
        self._flood_from(v, None)

    def _handle_flood(self, v, src):
        if self.state[v].flooded:
            return
        self._flood_from(v, src)

    def _flood_from(self, v, src):
        st = self.state[v]
        st.flooded = True
        st.holding = False
        st.timer_step = 0
        for u in self.g.neighbors(v):
            if u != src:
                self._send(v, u, ProtocolMessage(FLOOD, self.msg_id))


def run_simulation(config, graph=None):
    """Run one broadcast; deterministic for a given config and graph."""
    return Simulation(config, graph).run()
