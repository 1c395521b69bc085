"""One-step radio evaluation of a network state under an allocation policy.

Shared by the engine, the xApp features and the labelling oracle so that all
three see exactly the same PRB grants and link outcomes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .energy import PowerPlan
from .netmodel import (
    EMBB,
    RATS,
    VOICE,
    NetworkState,
    QosClass,
    Rat,
    RatConfig,
    achievable_rate_bps,
    distances,
    link_snr,
    lte_default,
    nr_default,
    w_to_dbm,
)
from .policies import PolicyId, PolicyParams, apply_policy, quantize


@dataclass(frozen=True)
class RadioContext:
    lte: RatConfig
    nr: RatConfig
    voice: QosClass = VOICE
    embb: QosClass = EMBB
    plans: PowerPlan = PowerPlan()
    policy_params: PolicyParams = PolicyParams()

    def rat(self, rat: Rat) -> RatConfig:
        return self.lte if rat is Rat.LTE else self.nr

    @classmethod
    def default(cls, **kw) -> "RadioContext":
        return cls(lte=kw.pop("lte", lte_default()), nr=kw.pop("nr", nr_default()), **kw)


@dataclass
class LinkOutcome:
    policy: PolicyId
    prbs: np.ndarray
    snr: np.ndarray
    rate_bps: np.ndarray
    latency_s: np.ndarray
    outage: np.ndarray
    is_voice: np.ndarray
    rat_index: np.ndarray  # 0 = LTE, 1 = NR
    tx_power_w: np.ndarray
    activity: np.ndarray
    power_w: np.ndarray

    @property
    def total_power_w(self) -> float:
        return float(np.sum(self.power_w))

    @property
    def n_outage(self) -> int:
        return int(self.outage.sum())

    def outage_rate(self, voice: bool) -> float:
        mask = self.is_voice if voice else ~self.is_voice
        return float(self.outage[mask].mean()) if mask.any() else 0.0


def client_arrays(state: NetworkState, ctx: RadioContext):
    clients = state.clients
    is_voice = np.array([c.is_voice for c in clients], dtype=bool)
    rat_index = np.array([RATS.index(c.assigned_rat) for c in clients], dtype=np.int64)
    tx_w = np.array([ctx.plans.watts(c.power_plan_id) for c in clients], dtype=float)
    return is_voice, rat_index, tx_w


def grant_prbs(state: NetworkState, ctx: RadioContext, policy: PolicyId,
               is_voice=None, rat_index=None) -> np.ndarray:
    """Integer PRBs per client (state order) under ``policy`` in each cell."""
    if is_voice is None:
        is_voice, rat_index, _ = client_arrays(state, ctx)
    ids = np.array([c.client_id for c in state.clients])
    prbs = np.zeros(len(state.clients), dtype=np.int64)
    for k, rat in enumerate(RATS):
        cfg = ctx.rat(rat)
        in_cell = rat_index == k
        v = np.flatnonzero(in_cell & is_voice)
        e = np.flatnonzero(in_cell & ~is_voice)
        if len(v) + len(e) == 0:
            continue
        v = v[np.argsort(ids[v], kind="stable")]
        e = e[np.argsort(ids[e], kind="stable")]
        alloc = apply_policy(policy, cfg.prb_count, len(v), len(e), ctx.policy_params)
        prbs[np.concatenate([v, e])] = quantize(alloc, cfg.prb_count, len(v), len(e))
    return prbs


def evaluate(state: NetworkState, ctx: RadioContext, policy: PolicyId,
             tx_power_w: np.ndarray | None = None) -> LinkOutcome:
    """Uplink outcome of every client for one step under ``policy``."""
    policy = PolicyId(policy)
    is_voice, rat_index, tx_w = client_arrays(state, ctx)
    if tx_power_w is not None:
        tx_w = np.asarray(tx_power_w, dtype=float)
    prbs = grant_prbs(state, ctx, policy, is_voice, rat_index)
    pos = state.positions()
    n = len(state.clients)
    snr = np.empty(n)
    rate = np.empty(n)
    lat = np.empty(n)
    shadow = state.shadowing_db if state.shadowing_db is not None else np.zeros((n, 2))
    for k, rat in enumerate(RATS):
        m = rat_index == k
        if not m.any():
            continue
        cfg = ctx.rat(rat)
        s = np.atleast_1d(link_snr(cfg, distances(pos[m], cfg), w_to_dbm(tx_w[m]), prbs[m], shadow[m, k]))
        r = np.atleast_1d(achievable_rate_bps(prbs[m], s))
        bits = np.where(is_voice[m], ctx.voice.packet_bits, ctx.embb.packet_bits)
        with np.errstate(divide="ignore"):
            lt = np.where(r > 0, cfg.base_latency_s + bits / np.where(r > 0, r, 1.0), np.inf)
        snr[m], rate[m], lat[m] = s, r, lt
    min_rate = np.where(is_voice, ctx.voice.min_rate_bps, ctx.embb.min_rate_bps)
    max_lat = np.where(is_voice, ctx.voice.max_latency_s, ctx.embb.max_latency_s)
    outage = (rate < min_rate) | (lat > max_lat)
    activity = np.array([c.activity_factor for c in state.clients], dtype=float)
    idle = np.array([c.idle_power_w for c in state.clients], dtype=float)
    power = tx_w * activity + idle
    return LinkOutcome(policy, prbs, snr, rate, lat, outage, is_voice, rat_index, tx_w, activity, power)


def qos_margins(outcome: LinkOutcome, ctx: RadioContext) -> np.ndarray:
    """(rate margin, latency margin, outage flag) per client, margins clipped to [-1, 1]."""
    min_rate = np.where(outcome.is_voice, ctx.voice.min_rate_bps, ctx.embb.min_rate_bps)
    max_lat = np.where(outcome.is_voice, ctx.voice.max_latency_s, ctx.embb.max_latency_s)
    rate_m = np.clip((outcome.rate_bps - min_rate) / min_rate, -1.0, 1.0)
    with np.errstate(invalid="ignore"):
        lat_m = np.clip((max_lat - outcome.latency_s) / max_lat, -1.0, 1.0)
    lat_m = np.where(np.isfinite(outcome.latency_s), lat_m, -1.0)
    return np.column_stack([rate_m, lat_m, outcome.outage.astype(float)])
