"""RAT and power-plan selection by tabular Q-learning (the rApp).

One Q-table is shared by all clients. A client's state is the tuple
(uplink SNR bucket on LTE, on NR, load bucket on LTE, on NR, QoS ok, current
plan), 5*5*4*4*2*3 = 2400 states; the action is one of six (RAT, plan) pairs.
"""

from __future__ import annotations

import collections
import math
from dataclasses import dataclass, field

import numpy as np

from .netmodel import (
    PRB_BANDWIDTH_HZ,
    RATS,
    SPECTRAL_EFFICIENCY_CAP,
    NetworkState,
    PlanId,
    Rat,
    distances,
    link_snr,
    w_to_dbm,
)
from .radio import RadioContext

SNR_EDGES_DB = (0.0, 5.0, 10.0, 20.0)
LOAD_EDGES = (0.25, 0.5, 0.75)


@dataclass(frozen=True)
class RlState:
    snr_lte: int
    snr_nr: int
    load_lte: int
    load_nr: int
    qos_ok: bool
    plan: PlanId

    # mixed-radix sizes, in field order
    RADIX = (5, 5, 4, 4, 2, 3)

    @property
    def index(self) -> int:
        idx = 0
        for digit, base in zip(
            (self.snr_lte, self.snr_nr, self.load_lte, self.load_nr, int(self.qos_ok), int(self.plan)),
            self.RADIX,
        ):
            if not 0 <= digit < base:
                raise ValueError(f"state component {digit} outside [0, {base})")
            idx = idx * base + digit
        return idx

    @classmethod
    def from_index(cls, idx: int) -> "RlState":
        digits = []
        for base in reversed(cls.RADIX):
            digits.append(idx % base)
            idx //= base
        a, b, c, d, e, f = reversed(digits)
        return cls(a, b, c, d, bool(e), PlanId(f))


N_STATES = math.prod(RlState.RADIX)


@dataclass(frozen=True)
class RlAction:
    rat: Rat
    plan: PlanId


# greedy ties resolve to the first entry: lowest wattage, then LTE
ACTIONS = tuple(RlAction(rat, plan) for plan in PlanId for rat in RATS)
N_ACTIONS = len(ACTIONS)


@dataclass(frozen=True)
class RewardWeights:
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0

    def __post_init__(self):
        if min(self.alpha, self.beta, self.gamma) < 0:
            raise ValueError("reward weights must be >= 0")
        if self.alpha == self.beta == self.gamma == 0:
            raise ValueError("reward weights cannot all be zero")


def reward(eta: float, throughput_norm: float, latency_norm: float, w: RewardWeights) -> float:
    return w.alpha * eta + w.beta * throughput_norm - w.gamma * latency_norm


def normalized_throughput(rate_bps, required_bps):
    return np.clip(np.asarray(rate_bps) / np.asarray(required_bps), 0.0, 2.0)


def normalized_latency(latency, budget):
    lat = np.asarray(latency, dtype=float)
    return np.where(np.isfinite(lat), np.clip(lat / np.asarray(budget), 0.0, 2.0), 2.0)


@dataclass
class Transition:
    s: int
    a: int
    r: float
    s_next: int
    done: bool = False


@dataclass
class QFunction:
    n_states: int = N_STATES
    n_actions: int = N_ACTIONS
    learning_rate: float = 0.4
    discount: float = 0.92
    initial_steps: int = 2000
    eps_min: float = 0.05
    eps_half_life: float = 500.0
    batch_size: int = 32
    buffer_capacity: int = 10_000
    table: np.ndarray = None
    buffer: collections.deque = None

    def __post_init__(self):
        if self.table is None:
            self.table = np.zeros((self.n_states, self.n_actions))
        if self.buffer is None:
            self.buffer = collections.deque(maxlen=self.buffer_capacity)

    def epsilon(self, step: int) -> float:
        if step < self.initial_steps:
            return 1.0
        decay = 0.5 ** ((step - self.initial_steps) / self.eps_half_life)
        return self.eps_min + (1.0 - self.eps_min) * decay

    def dumps(self) -> str:
        lines = [f"# qtable {self.n_states} {self.n_actions}"]
        for s in range(self.n_states):
            for a in range(self.n_actions):
                lines.append(f"{s} {a} {self.table[s, a]!r}")
        return "\n".join(lines) + "\n"

    def loads(self, text: str) -> "QFunction":
        for line in text.splitlines():
            if not line.strip() or line.startswith("#"):
                continue
            s, a, v = line.split()
            self.table[int(s), int(a)] = float(v)
        return self


def select_action(q: QFunction, s: int, rng: np.random.Generator, step: int,
                  greedy: bool = False) -> int:
    """Epsilon-greedy action index; ``greedy`` disables exploration entirely."""
    if not greedy and (step < q.initial_steps or rng.random() < q.epsilon(step)):
        return int(rng.integers(q.n_actions))
    return int(np.argmax(q.table[s]))


def update(q: QFunction, batch) -> QFunction:
    for tr in batch:
        target = tr.r if tr.done else tr.r + q.discount * q.table[tr.s_next].max()
        q.table[tr.s, tr.a] += q.learning_rate * (target - q.table[tr.s, tr.a])
    return q


def sample_batch(q: QFunction, rng: np.random.Generator) -> list[Transition]:
    n = len(q.buffer)
    if n <= q.batch_size:
        return list(q.buffer)
    idx = rng.choice(n, size=q.batch_size, replace=False)
    return [q.buffer[i] for i in idx]


@dataclass
class Rapp:
    """Stateful wrapper: encoding, acting for every client, and learning."""

    ctx: RadioContext
    q: QFunction = field(default_factory=QFunction)
    weights: RewardWeights = field(default_factory=RewardWeights)
    updates_per_step: int = 8
    snr_edges_db: tuple[float, ...] = SNR_EDGES_DB
    load_edges: tuple[float, ...] = LOAD_EDGES
    step_count: int = 0
    greedy: bool = False
    frozen: bool = False

    def snr_bucket_db(self, state: NetworkState) -> np.ndarray:
        """Uplink SNR (dB) at full plan power over each carrier's whole band."""
        pos = state.positions()
        n = len(pos)
        shadow = state.shadowing_db if state.shadowing_db is not None else np.zeros((n, 2))
        p_full_dbm = float(w_to_dbm(self.ctx.plans.p_f_w))
        out = np.empty((n, 2))
        for k, rat in enumerate(RATS):
            cfg = self.ctx.rat(rat)
            snr = link_snr(cfg, distances(pos, cfg), p_full_dbm, cfg.prb_count, shadow[:, k])
            out[:, k] = 10.0 * np.log10(snr)
        return out

    def load_ratio(self, state: NetworkState) -> np.ndarray:
        return np.array([
            state.load.get(rat, 0.0)
            / (self.ctx.rat(rat).prb_count * PRB_BANDWIDTH_HZ * SPECTRAL_EFFICIENCY_CAP)
            for rat in RATS
        ])

    def encode_all(self, state: NetworkState) -> list[RlState]:
        snr_b = np.searchsorted(self.snr_edges_db, self.snr_bucket_db(state), side="right")
        load_b = np.minimum(np.searchsorted(self.load_edges, self.load_ratio(state), side="right"), 3)
        margins = state.qos_margins if state.qos_margins is not None else np.zeros((len(state.clients), 3))
        return [
            RlState(int(snr_b[i, 0]), int(snr_b[i, 1]), int(load_b[0]), int(load_b[1]),
                    bool(margins[i, 2] == 0.0), c.power_plan_id)
            for i, c in enumerate(state.clients)
        ]

    def encode_state(self, state: NetworkState, client_id: int) -> RlState:
        pos = [c.client_id for c in state.clients].index(client_id)
        return self.encode_all(state)[pos]

    def act(self, state: NetworkState, rng: np.random.Generator) -> tuple[list[int], list[int]]:
        """State indices and action indices for every client, in state order.

        Clients decide one after another. Each one observes the carrier load
        left by the clients already placed this step (and last step's choice
        for the rest), which stops the whole population from jumping to the
        same carrier at once and oscillating.
        """
        snr_b = np.searchsorted(self.snr_edges_db, self.snr_bucket_db(state), side="right")
        margins = state.qos_margins if state.qos_margins is not None else np.zeros((len(state.clients), 3))
        capacity = np.array([self.ctx.rat(r).prb_count * PRB_BANDWIDTH_HZ * SPECTRAL_EFFICIENCY_CAP for r in RATS])
        load = np.array([state.load.get(r, 0.0) for r in RATS])
        states, actions = [], []
        for i, c in enumerate(state.clients):
            load_b = np.minimum(np.searchsorted(self.load_edges, load / capacity, side="right"), 3)
            s = RlState(int(snr_b[i, 0]), int(snr_b[i, 1]), int(load_b[0]), int(load_b[1]),
                        bool(margins[i, 2] == 0.0), c.power_plan_id).index
            a = select_action(self.q, s, rng, self.step_count, greedy=self.greedy)
            if not self.greedy:
                self.step_count += 1
            new_rat = ACTIONS[a].rat
            if new_rat != c.assigned_rat:
                load[RATS.index(c.assigned_rat)] -= c.qos_class.min_rate_bps
                load[RATS.index(new_rat)] += c.qos_class.min_rate_bps
            states.append(s)
            actions.append(a)
        return states, actions

    def client_rewards(self, outcome, state: NetworkState) -> np.ndarray:
        """Per-client reward; the energy term is 1 - P_m / (P_F + P_idle)."""
        ctx = self.ctx
        act = np.array([c.activity_factor for c in state.clients])
        idle = np.array([c.idle_power_w for c in state.clients])
        p_m = outcome.tx_power_w * act + idle
        eta = 1.0 - p_m / (ctx.plans.p_f_w + idle)
        req = np.where(outcome.is_voice, ctx.voice.min_rate_bps, ctx.embb.min_rate_bps)
        budget = np.where(outcome.is_voice, ctx.voice.max_latency_s, ctx.embb.max_latency_s)
        t = normalized_throughput(outcome.rate_bps, req)
        lat = normalized_latency(outcome.latency_s, budget)
        return self.weights.alpha * eta + self.weights.beta * t - self.weights.gamma * lat

    def learn(self, states, actions, rewards, next_states, rng: np.random.Generator):
        if self.frozen:
            return
        for s, a, r, s2 in zip(states, actions, rewards, next_states):
            self.q.buffer.append(Transition(s, a, float(r), s2))
        for _ in range(self.updates_per_step):
            update(self.q, sample_batch(self.q, rng))


def step_rapp(state: NetworkState, agent: Rapp, rng: np.random.Generator) -> dict[int, RlAction]:
    """Choose and apply (RAT, plan) for every client; returns the chosen actions."""
    _, actions = agent.act(state, rng)
    chosen = {}
    for c, a in zip(state.clients, actions):
        chosen[c.client_id] = ACTIONS[a]
        c.assigned_rat = ACTIONS[a].rat
        c.power_plan_id = ACTIONS[a].plan
        c.tx_power_w = agent.ctx.plans.watts(c.power_plan_id)
    state.refresh_aggregates()
    return chosen
