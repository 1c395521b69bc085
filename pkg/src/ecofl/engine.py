"""Discrete-time orchestration of the two-stage control loop and FL rounds.

A step runs, in order: RAT/plan selection, policy selection, PRB grants and
radio outcome, rewards and Q-learning, an FL round every
``fl_round_interval`` steps, then mobility. Power figures are client power
only; infrastructure energy is logged in its own column.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from . import fl
from .config import RunMode, ScenarioConfig, parse_mode
from .energy import (
    client_power_w,
    comm_energy_j,
    energy_efficiency,
    fl_round_energy_j,
    infrastructure_energy_j,
    min_feasible_plan,
    rat_device_power_w,
)
from .netmodel import (
    RATS,
    Client,
    NetworkState,
    PlanId,
    Rat,
    achievable_rate_bps,
    distances,
    draw_waypoint,
    link_snr,
    move_clients,
    w_to_dbm,
)
from .policies import PolicyId
from .radio import LinkOutcome, RadioContext, evaluate, qos_margins
from .rapp import ACTIONS, QFunction, Rapp, RewardWeights
from .seeding import substream
from .xapp import PolicyClassifier, best_rat, extract_features, oracle_best_policy, predict_policy


@dataclass
class StepMetrics:
    t: int
    total_power_w: float
    eta_ee: float
    n_outage_voice: int
    n_outage_embb: int
    outage_rate_voice: float
    outage_rate_embb: float
    policy_id: int
    n_lte: int
    n_nr: int
    reward_sum: float
    fl_round: int
    fl_test_acc: float
    fl_test_loss: float
    infra_energy_j: float
    device_power_w: float = 0.0

    @property
    def outage_rate_total(self) -> float:
        n = self.n_lte + self.n_nr
        return (self.n_outage_voice + self.n_outage_embb) / n if n else 0.0


@dataclass
class ClientRoundLog:
    """Inputs and outputs of one client's share of an FL round."""

    client_id: int
    upload_ok: bool
    model_bits: int
    tx_power_w: float
    uplink_rate_bps: float
    rx_power_w: float
    downlink_rate_bps: float
    comp_energy_per_epoch_j: float
    local_epochs: int
    up_energy_j: float
    down_energy_j: float
    round_energy_j: float


@dataclass
class RoundLog:
    t: int
    round_index: int
    fl_clients: list[int]
    aggregated_ids: list[int]
    aggregated: bool
    test_accuracy: float
    test_loss: float
    clients: list[ClientRoundLog]


@dataclass
class StepRecord:
    """What a replay needs to re-evaluate a step under another policy."""

    t: int
    positions: np.ndarray
    rats: list[Rat]
    plans: list[PlanId]
    shadowing_db: np.ndarray


@dataclass
class RunResult:
    mode: str
    seed: int
    metrics: list[StepMetrics]
    rounds: list[RoundLog]
    trajectory: list[StepRecord]
    outcomes: list[LinkOutcome] = field(default_factory=list, repr=False)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(m, name) for m in self.metrics], dtype=float)

    def summary(self) -> dict:
        out = {"mode": self.mode, "seed": self.seed, "n_steps": len(self.metrics)}
        for name in CSV_COLUMNS:
            col = self.column(name)
            out[name] = {"mean": float(np.mean(col)), "min": float(np.min(col)), "max": float(np.max(col))}
        out["final_fl_test_acc"] = self.metrics[-1].fl_test_acc if self.metrics else math.nan
        out["final_fl_test_loss"] = self.metrics[-1].fl_test_loss if self.metrics else math.nan
        out["fl_rounds_completed"] = sum(r.aggregated for r in self.rounds)
        return out


CSV_COLUMNS = (
    "t", "total_power_w", "eta_ee", "outage_rate_voice", "outage_rate_embb", "policy_id", "n_lte",
    "n_nr", "reward_sum", "fl_round", "fl_test_acc", "fl_test_loss", "infra_energy_j",
)


# ------------------------------------------------------------------ set-up


def initial_state(cfg: ScenarioConfig, ctx: RadioContext, seed: int,
                  mob_rng: np.random.Generator | None = None) -> NetworkState:
    """Clients uniform in the arena, eMBB/FL membership drawn at random,
    each attached to its best RAT at full power and moving by random waypoint."""
    gen = substream(seed, "scenario-gen")
    mob_rng = mob_rng if mob_rng is not None else substream(seed, "mobility")
    n, n_embb = cfg.sim.n_clients, cfg.sim.n_embb
    pos = gen.uniform(0.0, cfg.net.arena_m, size=(n, 2))
    embb_ids = set(gen.choice(n, size=n_embb, replace=False).tolist())
    best = best_rat(pos, ctx)
    clients = []
    for i in range(n):
        embb = i in embb_ids
        clients.append(Client(
            client_id=i,
            position=pos[i],
            velocity=np.zeros(2),
            qos_class=ctx.embb if embb else ctx.voice,
            is_fl_participant=embb,
            assigned_rat=best[i],
            power_plan_id=PlanId.P_F,
            activity_factor=cfg.net.activity_factor,
            idle_power_w=cfg.net.idle_power_w,
            tx_power_w=ctx.plans.p_f_w,
            rx_power_w=cfg.net.rx_power_w,
        ))
    mob = cfg.mobility()
    for c in clients:
        draw_waypoint(c, mob, mob_rng)
    state = NetworkState(0, clients, power_levels=ctx.plans.levels, shadowing_db=np.zeros((n, 2)))
    return state.refresh_aggregates()


def make_agent(cfg: ScenarioConfig, ctx: RadioContext) -> Rapp:
    r = cfg.rl
    q = QFunction(
        learning_rate=r.learning_rate,
        discount=r.discount,
        initial_steps=r.initial_steps,
        eps_min=r.eps_min,
        eps_half_life=r.eps_half_life,
        batch_size=r.batch_size,
        buffer_capacity=r.buffer_capacity,
    )
    if r.qtable_in:
        with open(r.qtable_in, encoding="utf-8") as fh:
            q.loads(fh.read())
    return Rapp(ctx, q, RewardWeights(r.alpha, r.beta, r.gamma), r.updates_per_step,
                tuple(r.snr_edges_db), tuple(r.load_edges))


@dataclass
class FlRuntime:
    task: fl.FlTask
    datasets: dict[int, fl.ClientDataset]  # keyed by network client id
    model: fl.FlModel
    rng: np.random.Generator
    rounds_done: int = 0
    test_loss: float = math.nan
    test_acc: float = math.nan


def make_fl(cfg: ScenarioConfig, state: NetworkState, seed: int) -> FlRuntime | None:
    fl_ids = sorted(c.client_id for c in state.clients if c.is_fl_participant)
    rng = substream(seed, "fl")
    if not fl_ids:
        return None
    f = cfg.fl
    task = fl.synthetic_task(rng, f.n_train, f.n_test, f.input_dim, f.n_classes, f.spread)
    parts = fl.partition_data(task.x_train, task.y_train, len(fl_ids), rng, f.partition, f.dirichlet_alpha)
    model = fl.make_model((f.input_dim, f.hidden, f.n_classes), rng)
    rt = FlRuntime(task, dict(zip(fl_ids, parts)), model, rng)
    rt.test_loss, rt.test_acc = fl.evaluate(model, task.x_test, task.y_test)
    return rt


def load_classifier(cfg: ScenarioConfig) -> PolicyClassifier:
    return PolicyClassifier.load(cfg.xapp.weights)


# ---------------------------------------------------------------- simulation


@dataclass
class Simulation:
    cfg: ScenarioConfig
    mode: RunMode
    seed: int
    ctx: RadioContext
    state: NetworkState
    agent: Rapp
    classifier: PolicyClassifier | None
    fl_rt: FlRuntime | None
    rl_rng: np.random.Generator
    mob_rng: np.random.Generator
    channel_rng: np.random.Generator
    metrics: list[StepMetrics] = field(default_factory=list)
    rounds: list[RoundLog] = field(default_factory=list)
    trajectory: list[StepRecord] = field(default_factory=list)
    outcomes: list[LinkOutcome] = field(default_factory=list)
    keep_outcomes: bool = False

    @classmethod
    def build(cls, cfg: ScenarioConfig, mode: str | RunMode | None = None, seed: int | None = None,
              classifier: PolicyClassifier | None = None) -> "Simulation":
        cfg.validate()
        mode = parse_mode(cfg.sim.mode) if mode is None else (parse_mode(mode) if isinstance(mode, str) else mode)
        seed = cfg.sim.seed if seed is None else int(seed)
        ctx = cfg.radio_context()
        mob_rng = substream(seed, "mobility")
        state = initial_state(cfg, ctx, seed, mob_rng)
        needs_clf = mode.kind in ("ecofl", "greedy_energy")
        if needs_clf and classifier is None:
            classifier = load_classifier(cfg)
        sim = cls(
            cfg=cfg, mode=mode, seed=seed, ctx=ctx, state=state,
            agent=make_agent(cfg, ctx),
            classifier=classifier if needs_clf else None,
            fl_rt=make_fl(cfg, state, seed),
            rl_rng=substream(seed, "rl"),
            mob_rng=mob_rng,
            channel_rng=substream(seed, "channel"),
        )
        sim._redraw_shadowing()
        return sim

    @property
    def learns(self) -> bool:
        return self.mode.kind in ("ecofl", "fixed_policy", "oracle_policy")

    # -- phases --------------------------------------------------------

    def _select_rats_and_plans(self):
        """Phase 1. Returns (rl state indices, action indices) when the agent acted."""
        st, kind = self.state, self.mode.kind
        if kind == "baseline_fixed_rat":
            for c in st.clients:
                c.assigned_rat, c.power_plan_id = self.mode.rat, self.mode.plan
                c.tx_power_w = self.ctx.plans.watts(c.power_plan_id)
            st.refresh_aggregates()
            return None
        if kind == "greedy_energy":
            best = best_rat(st.positions(), self.ctx)
            for c, r in zip(st.clients, best):
                c.assigned_rat, c.power_plan_id = r, PlanId.P_F
                c.tx_power_w = self.ctx.plans.p_f_w
            st.refresh_aggregates()
            return None
        s_idx, a_idx = self.agent.act(st, self.rl_rng)
        for c, a in zip(st.clients, a_idx):
            c.assigned_rat, c.power_plan_id = ACTIONS[a].rat, ACTIONS[a].plan
            c.tx_power_w = self.ctx.plans.watts(c.power_plan_id)
        st.refresh_aggregates()
        return s_idx, a_idx

    def _select_policy(self) -> PolicyId:
        """Phase 2."""
        kind = self.mode.kind
        if kind == "baseline_fixed_rat":
            return PolicyId.EQUAL
        if kind == "fixed_policy":
            return self.mode.policy
        if kind == "oracle_policy":
            return oracle_best_policy(self.state, self.ctx)
        return predict_policy(self.classifier, extract_features(self.state, self.ctx))

    def _greedy_plans(self, policy: PolicyId):
        """Lowest feasible plan per client on the grants of ``policy``."""
        st, ctx = self.state, self.ctx
        out = evaluate(st, ctx, policy)
        pos = st.positions()
        for i, c in enumerate(st.clients):
            cfg = ctx.rat(c.assigned_rat)
            k = RATS.index(c.assigned_rat)
            d = float(distances(pos[i:i + 1], cfg)[0])
            prbs = int(out.prbs[i])
            qos = c.qos_class

            def outcome(watts, cfg=cfg, d=d, prbs=prbs, k=k, i=i, qos=qos):
                snr = link_snr(cfg, d, float(w_to_dbm(watts)), prbs, st.shadowing_db[i, k])
                rate = achievable_rate_bps(prbs, snr)
                lat = cfg.base_latency_s + qos.packet_bits / rate if rate > 0 else math.inf
                return rate, lat

            c.power_plan_id = min_feasible_plan(qos, ctx.plans, outcome).plan
            c.tx_power_w = ctx.plans.watts(c.power_plan_id)

    def _redraw_shadowing(self):
        n = len(self.state.clients)
        if self.cfg.net.shadowing:
            self.state.shadowing_db = self.channel_rng.normal(0.0, self.cfg.net.shadowing_sigma_db, size=(n, 2))
        else:
            self.state.shadowing_db = np.zeros((n, 2))

    def _infrastructure(self) -> float:
        active = {r: any(c.assigned_rat is r for c in self.state.clients) for r in RATS}
        return infrastructure_energy_j(self.cfg.energy.infrastructure(active))

    def _device_power(self, out: LinkOutcome) -> float:
        total = 0.0
        for k, rat in enumerate(RATS):
            cfg = self.ctx.rat(rat)
            m = out.rat_index == k
            rho = min(1.0, float(out.prbs[m].sum()) / cfg.prb_count)
            for p_tx in out.tx_power_w[m]:
                total += rat_device_power_w(cfg, rho, min(float(p_tx), cfg.p_max_w))
        return total

    def _fl_round(self, out: LinkOutcome) -> RoundLog | None:
        rt = self.fl_rt
        if rt is None:
            return None
        st, ctx = self.state, self.ctx
        bits = rt.model.size_bits
        params = self.cfg.fl_energy()
        logs, updates, ids = [], [], []
        pos = st.positions()
        for i, c in enumerate(st.clients):
            if not c.is_fl_participant:
                continue
            ok = not bool(out.outage[i])
            up_rate = float(out.rate_bps[i])
            cfg = ctx.rat(c.assigned_rat)
            k = RATS.index(c.assigned_rat)
            d = float(distances(pos[i:i + 1], cfg)[0])
            dl_snr = link_snr(cfg, d, cfg.max_bs_tx_dbm, max(int(out.prbs[i]), 1), st.shadowing_db[i, k])
            down_rate = float(achievable_rate_bps(out.prbs[i], dl_snr))
            up_j = comm_energy_j(bits, c.tx_power_w, up_rate)
            down_j = comm_energy_j(bits, c.rx_power_w, down_rate)
            if ok:
                updates.append(fl.local_update(rt.model, rt.datasets[c.client_id], self.cfg.fl.local_epochs,
                                               self.cfg.fl.learning_rate, rt.rng, self.cfg.fl.batch_size))
                ids.append(c.client_id)
                energy = fl_round_energy_j(params, up_j, down_j)
            else:
                energy = 0.0  # dropped before training; nothing is spent on its behalf
            logs.append(ClientRoundLog(c.client_id, ok, bits, c.tx_power_w, up_rate, c.rx_power_w, down_rate,
                                       params.comp_energy_per_epoch, params.local_epochs, up_j, down_j, energy))
        aggregated = bool(updates)
        if aggregated:
            weights = [rt.datasets[i].n_samples for i in ids] if self.cfg.fl.weighted else None
            rt.model = fl.aggregate(updates, weights)
            rt.rounds_done += 1
            rt.test_loss, rt.test_acc = fl.evaluate(rt.model, rt.task.x_test, rt.task.y_test)
        fl_ids = [c.client_id for c in st.clients if c.is_fl_participant]
        return RoundLog(st.t, rt.rounds_done, fl_ids, ids, aggregated, rt.test_acc, rt.test_loss, logs)

    # -- one step ------------------------------------------------------

    def step(self) -> StepMetrics:
        st, ctx = self.state, self.ctx
        acted = self._select_rats_and_plans()
        policy = self._select_policy()
        if self.mode.kind == "greedy_energy":
            self._greedy_plans(policy)
        self.trajectory.append(StepRecord(
            st.t, st.positions().copy(), [c.assigned_rat for c in st.clients],
            [c.power_plan_id for c in st.clients], st.shadowing_db.copy(),
        ))
        out = evaluate(st, ctx, policy)
        st.qos_margins = qos_margins(out, ctx)
        if self.keep_outcomes:
            self.outcomes.append(out)

        rewards = self.agent.client_rewards(out, st)
        if acted is not None and self.learns:
            next_states = [s.index for s in self.agent.encode_all(st)]
            self.agent.learn(acted[0], acted[1], rewards, next_states, self.rl_rng)

        round_log = None
        if (st.t + 1) % self.cfg.sim.fl_round_interval == 0:
            round_log = self._fl_round(out)
            if round_log is not None:
                self.rounds.append(round_log)

        m = metrics_from_outcome(st, ctx, out, policy, float(np.sum(rewards)), self._infrastructure())
        m.device_power_w = self._device_power(out)
        if self.fl_rt is not None:
            m.fl_round, m.fl_test_acc, m.fl_test_loss = self.fl_rt.rounds_done, self.fl_rt.test_acc, self.fl_rt.test_loss
        self.metrics.append(m)

        move_clients(st, self.cfg.net.dt_s, self.mob_rng, self.cfg.mobility())
        self._redraw_shadowing()
        st.t += 1
        st.refresh_aggregates()
        return m

    def run(self) -> RunResult:
        for _ in range(self.cfg.sim.n_steps):
            self.step()
        if self.cfg.rl.qtable_out and self.learns:
            with open(self.cfg.rl.qtable_out, "w", encoding="utf-8") as fh:
                fh.write(self.agent.q.dumps())
        return RunResult(str(self.mode), self.seed, self.metrics, self.rounds, self.trajectory, self.outcomes)


def metrics_from_outcome(state: NetworkState, ctx: RadioContext, out: LinkOutcome, policy: PolicyId,
                         reward_sum: float, infra_j: float) -> StepMetrics:
    n = len(state.clients)
    total = math.fsum(
        client_power_w(float(out.tx_power_w[i]), float(out.activity[i]), c.idle_power_w)
        for i, c in enumerate(state.clients)
    )
    voice, embb = out.is_voice, ~out.is_voice
    return StepMetrics(
        t=state.t,
        total_power_w=total,
        eta_ee=energy_efficiency(total, n, ctx.plans.p_f_w),
        n_outage_voice=int(out.outage[voice].sum()),
        n_outage_embb=int(out.outage[embb].sum()),
        outage_rate_voice=out.outage_rate(voice=True),
        outage_rate_embb=out.outage_rate(voice=False),
        policy_id=int(policy),
        n_lte=int(np.sum(out.rat_index == 0)),
        n_nr=int(np.sum(out.rat_index == 1)),
        reward_sum=reward_sum,
        fl_round=0,
        fl_test_acc=math.nan,
        fl_test_loss=math.nan,
        infra_energy_j=infra_j,
    )


def run(cfg: ScenarioConfig, mode: str | None = None, seed: int | None = None,
        classifier: PolicyClassifier | None = None) -> RunResult:
    return Simulation.build(cfg, mode, seed, classifier).run()


# ------------------------------------------------------------------ replay


def replay(cfg: ScenarioConfig, base: Simulation | RunResult, mode: str | RunMode,
           classifier: PolicyClassifier | None = None) -> RunResult:
    """Re-evaluate a recorded trajectory with a different stage-2 policy rule.

    Positions, RATs, plans and shadowing come from the recording, so every
    mode sees identical radio conditions; nothing learns and no FL runs.
    """
    mode = parse_mode(mode) if isinstance(mode, str) else mode
    ctx = cfg.radio_context()
    seed = base.seed
    state = initial_state(cfg, ctx, seed)
    if mode.kind == "ecofl" and classifier is None:
        classifier = load_classifier(cfg)
    agent = make_agent(cfg, ctx)
    metrics = []
    for rec in base.trajectory:
        state.t = rec.t
        for i, c in enumerate(state.clients):
            c.position = rec.positions[i].copy()
            c.assigned_rat, c.power_plan_id = rec.rats[i], rec.plans[i]
            c.tx_power_w = ctx.plans.watts(c.power_plan_id)
        state.shadowing_db = rec.shadowing_db
        state.refresh_aggregates()
        if mode.kind == "fixed_policy":
            policy = mode.policy
        elif mode.kind == "oracle_policy":
            policy = oracle_best_policy(state, ctx)
        elif mode.kind == "ecofl":
            policy = predict_policy(classifier, extract_features(state, ctx))
        else:
            raise ValueError(f"mode {mode} cannot be replayed")
        out = evaluate(state, ctx, policy)
        state.qos_margins = qos_margins(out, ctx)
        rewards = agent.client_rewards(out, state)
        active = {r: any(c.assigned_rat is r for c in state.clients) for r in RATS}
        infra = infrastructure_energy_j(cfg.energy.infrastructure(active))
        metrics.append(metrics_from_outcome(state, ctx, out, policy, float(np.sum(rewards)), infra))
    return RunResult(str(mode), seed, metrics, [], list(base.trajectory))


# ------------------------------------------------------------------- suite

SUITE_MODES = ("fixed_policy:P1", "fixed_policy:P2", "fixed_policy:P3", "fixed_policy:P4", "ecofl", "oracle_policy")
BASELINE_MODE = "baseline_fixed_rat:NR:P_F"


@dataclass
class SuiteResult:
    seeds: list[int]
    live: dict[tuple[int, str], RunResult]
    replays: dict[tuple[int, str], RunResult]

    def outage_table(self) -> list[dict]:
        rows = []
        for seed in self.seeds:
            for mode in SUITE_MODES:
                r = self.replays[(seed, mode)]
                rows.append({
                    "seed": seed, "mode": mode,
                    "outage_rate_voice": float(r.column("outage_rate_voice").mean()),
                    "outage_rate_embb": float(r.column("outage_rate_embb").mean()),
                    "outage_rate_total": float(np.mean([m.outage_rate_total for m in r.metrics])),
                })
        return rows

    def power_table(self) -> list[dict]:
        rows = []
        for seed in self.seeds:
            eco, base = self.live[(seed, "ecofl")], self.live[(seed, BASELINE_MODE)]
            p_eco, p_base = eco.column("total_power_w").mean(), base.column("total_power_w").mean()
            rows.append({
                "seed": seed,
                "ecofl_power_w": float(p_eco),
                "baseline_power_w": float(p_base),
                "power_reduction": float(1.0 - p_eco / p_base),
                "ecofl_eta_ee": float(eco.column("eta_ee").mean()),
                "baseline_eta_ee": float(base.column("eta_ee").mean()),
                "ecofl_fl_acc": float(eco.metrics[-1].fl_test_acc),
                "baseline_fl_acc": float(base.metrics[-1].fl_test_acc),
            })
        return rows

    def mean_by_mode(self, column: str) -> dict[str, float]:
        rows = self.outage_table()
        return {m: float(np.mean([r[column] for r in rows if r["mode"] == m])) for m in SUITE_MODES}


def run_suite(cfg: ScenarioConfig, seeds=range(10), classifier: PolicyClassifier | None = None) -> SuiteResult:
    """Live ecofl and baseline runs per seed, then every stage-2 mode replayed
    over the ecofl trajectory."""
    seeds = list(seeds)
    if not seeds:
        raise ValueError("suite needs at least one seed")
    classifier = classifier or load_classifier(cfg)
    live, replays = {}, {}
    for seed in seeds:
        eco = run(cfg, "ecofl", seed, dataclasses.replace(classifier))
        live[(seed, "ecofl")] = eco
        live[(seed, BASELINE_MODE)] = run(cfg, BASELINE_MODE, seed)
        for mode in SUITE_MODES:
            replays[(seed, mode)] = replay(cfg, eco, mode, dataclasses.replace(classifier))
    return SuiteResult(seeds, live, replays)
