"""Acceptance criteria 1 to 10, one PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -s`` (the lines are printed even
without ``-s``). Every criterion asserts at its stated tolerance.
"""

import math
import time

import numpy as np
import pytest

from ecofl import fl, mlp
from ecofl.cli import main
from ecofl.config import ScenarioConfig
from ecofl.energy import (
    FlEnergyParams,
    PowerPlan,
    client_power_w,
    comm_energy_j,
    energy_efficiency,
    fl_round_energy_j,
    infrastructure_energy_j,
    total_power_w,
)
from ecofl.engine import SUITE_MODES, Simulation, run, run_suite
from ecofl.netmodel import (
    EMBB,
    VOICE,
    Client,
    Rat,
    achievable_rate_bps,
    check_outage,
    latency_s,
    link_snr,
    lte_default,
    noise_dbm,
    nr_default,
    path_loss_db,
)
from ecofl.policies import PolicyId, PolicyParams, apply_policy
from ecofl.rapp import QFunction, RewardWeights, Transition, reward, update
from ecofl.seeding import substream
from ecofl.xapp import ARCH, fit

SEEDS = range(10)


def report(capsys, n, ok, detail):
    with capsys.disabled():
        print(f"\n{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")


# ------------------------------------------------------------- criterion 1


def _formula_battery():
    """(label, got, expected) for every closed-form quantity in the model."""
    c = 299_792_458.0
    nr, lte = nr_default(), lte_default()
    out = []
    out.append(("free-space loss 1 m 3.5 GHz", path_loss_db(nr, 1.0), 20 * math.log10(4 * math.pi * 3.5e9 / c)))
    out.append(("decade NR", path_loss_db(nr, 10.0) - path_loss_db(nr, 1.0), 30.0))
    out.append(("decade LTE", path_loss_db(lte, 10.0) - path_loss_db(lte, 1.0), 35.0))
    out.append(("noise 1 PRB", noise_dbm(nr, 1), -174 + 7 + 10 * math.log10(180e3)))
    tx = noise_dbm(nr, 4) - nr.antenna_gain_dbi + path_loss_db(nr, 120.0)
    out.append(("SNR at noise", link_snr(nr, 120.0, tx, 4), 1.0))
    out.append(("rate 1 PRB SNR 1", achievable_rate_bps(1, 1.0), 180_000.0))
    out.append(("rate cap", achievable_rate_bps(1, 1e6), 1_332_000.0))
    out.append(("rate 0 PRB", achievable_rate_bps(0, 55.0), 0.0))
    out.append(("latency", latency_s(None, 1e6, nr_default(base_latency_s=0.01), 1e4), 0.02))
    out.append(("voice ok", float(check_outage(0.2e6, 0.05, VOICE)), 0.0))
    out.append(("eMBB rate outage", float(check_outage(9e6, 0.01, EMBB)), 1.0))
    out.append(("eMBB at thresholds", float(check_outage(EMBB.min_rate_bps, EMBB.max_latency_s, EMBB)), 0.0))
    params = PolicyParams()
    for p, v, e in [(PolicyId.EQUAL, 2.0, 2.0), (PolicyId.VOICE_PRIORITY, 10 / 3, 5 / 3),
                    (PolicyId.EMBB_PRIORITY, 100 / 170, 400 / 170), (PolicyId.DEDICATED_RESERVATION, 3.0, 1.75)]:
        a = apply_policy(p, 100, 10, 40, params)
        out.append((f"{p.label} voice", a.prb_per_voice_client, v))
        out.append((f"{p.label} eMBB", a.prb_per_embb_client, e))
    out.append(("client power full", client_power_w(0.5, 1.0, 0.1), 0.6))
    out.append(("client power idle", client_power_w(0.3, 0.0, 0.1), 0.1))
    out.append(("client power half", client_power_w(0.15, 0.5, 0.0), 0.075))
    clients = [Client(i, np.zeros(2), np.zeros(2), VOICE) for i in range(50)]
    out.append(("fifty at full", total_power_w(clients, PowerPlan()), 24.8))
    out.append(("eta at max", energy_efficiency(25.0, 50, 0.5), 0.0))
    out.append(("eta at zero", energy_efficiency(0.0, 50, 0.5), 1.0))
    out.append(("eta baseline", energy_efficiency(24.8, 50, 0.5), 0.008))
    w = RewardWeights(1, 1, 1)
    out.append(("reward", reward(0.5, 1.0, 0.5, w), 1.0))
    q = QFunction()
    update(q, [Transition(3, 4, 1.0, 0, done=True)])
    out.append(("Q update", q.table[3, 4], 0.4))
    q = QFunction(n_states=3, n_actions=2, discount=0.5)
    q.table[:] = [[1.0, 2.0], [4.0, 0.0], [0.0, 0.0]]
    update(q, [Transition(0, 1, 0.0, 1)])
    out.append(("Q update bootstrapped", q.table[0, 1], 2.0 + 0.4 * (0.0 + 0.5 * 4.0 - 2.0)))
    infra = ScenarioConfig().energy.infrastructure({Rat.LTE: True, Rat.NR: True})
    out.append(("infrastructure", infrastructure_energy_j(infra), 346.0))
    p = FlEnergyParams(comp_energy_per_epoch=1.0, local_epochs=5)
    out.append(("FL round energy", fl_round_energy_j(p, 2.0, 1.0), 8.0))
    out.append(("comm energy", comm_energy_j(1e6, 1.0, 2e6), 0.5))
    out.append(("model bits", float(fl.make_model((64, 32, 10), np.random.default_rng(0)).size_bits), 77_120.0))
    return out


def test_criterion_1_formula_exactness(capsys):
    t0 = time.perf_counter()
    battery = _formula_battery()
    elapsed = time.perf_counter() - t0
    worst_label, worst = max(((lbl, abs(g - e)) for lbl, g, e in battery), key=lambda x: x[1])
    ok = worst <= 1e-12 and elapsed < 1.0
    report(capsys, 1, ok, f"{len(battery)} closed-form checks, max abs error {worst:.2e} ({worst_label}), "
                          f"{elapsed * 1e3:.1f} ms")
    assert worst <= 1e-12 and elapsed < 1.0


# ------------------------------------------------------- criteria 2, 3, 4


@pytest.fixture(scope="module")
def suite():
    t0 = time.perf_counter()
    s = run_suite(ScenarioConfig(), SEEDS)
    return s, time.perf_counter() - t0


def test_criterion_2_power_reduction(suite, capsys):
    s, elapsed = suite
    rows = s.power_table()
    cuts = np.array([r["power_reduction"] for r in rows])
    every_seed = all(r["ecofl_power_w"] < r["baseline_power_w"] for r in rows)
    p_eco = np.mean([r["ecofl_power_w"] for r in rows])
    p_base = np.mean([r["baseline_power_w"] for r in rows])
    mean_cut = 1 - p_eco / p_base
    ok = every_seed and mean_cut >= 0.10 and elapsed < 60
    report(capsys, 2, ok, f"ecofl {p_eco:.2f} W vs baseline {p_base:.2f} W, mean reduction {mean_cut:.1%} "
                          f"(per seed {cuts.min():.1%} to {cuts.max():.1%}); lower on every seed: {every_seed}; "
                          f"suite {elapsed:.1f} s")
    assert every_seed and mean_cut >= 0.10 and elapsed < 60


def test_criterion_3_efficiency_ordering(suite, capsys):
    rows = suite[0].power_table()
    every_seed = all(r["ecofl_eta_ee"] > r["baseline_eta_ee"] for r in rows)
    e_eco = np.mean([r["ecofl_eta_ee"] for r in rows])
    e_base = np.mean([r["baseline_eta_ee"] for r in rows])
    report(capsys, 3, every_seed, f"mean eta ecofl {e_eco:.3f} vs baseline {e_base:.3f}; "
                                  f"higher on every seed: {every_seed}")
    assert every_seed


def test_criterion_4_outage_dominance(suite, capsys):
    s = suite[0]
    embb = s.mean_by_mode("outage_rate_embb")
    fixed = {m: embb[m] for m in SUITE_MODES[:4]}
    best_mode = min(fixed, key=fixed.get)
    adaptive_ok = embb["ecofl"] <= fixed[best_mode] + 0.02
    rows = {(r["seed"], r["mode"]): r for r in s.outage_table()}
    oracle_ok = [rows[(seed, "oracle_policy")]["outage_rate_total"] <= rows[(seed, "ecofl")]["outage_rate_total"]
                 for seed in s.seeds]
    ok = adaptive_ok and all(oracle_ok)
    table = ", ".join(f"{m.split(':')[-1]} {v:.3f}" for m, v in embb.items())
    report(capsys, 4, ok, f"mean eMBB outage {table}; adaptive <= {best_mode.split(':')[-1]} + 2 pp: {adaptive_ok}; "
                          f"oracle <= adaptive on {sum(oracle_ok)}/{len(oracle_ok)} scenarios")
    assert adaptive_ok and all(oracle_ok)


# ------------------------------------------------------------- criterion 5


def test_criterion_5_classifier_quality(capsys):
    t0 = time.perf_counter()
    _, rep = fit(4000, 1000, seed=0)
    elapsed = time.perf_counter() - t0
    ok = rep.holdout_accuracy >= 0.90 and elapsed < 120
    report(capsys, 5, ok, f"held-out agreement with the oracle {rep.holdout_accuracy:.3f} on 1000 scenarios "
                          f"(train {rep.train_accuracy:.3f}), labels {rep.histogram}, {elapsed:.1f} s")
    assert rep.holdout_accuracy >= 0.90 and elapsed < 120


# ------------------------------------------------------------- criterion 6


def _train_toy(mdp, seed, n_updates=50_000):
    from ecofl.rapp import sample_batch, select_action

    q = QFunction(n_states=3, n_actions=2, initial_steps=200, eps_half_life=200.0)
    rng = np.random.default_rng(seed)
    s, step, done = 0, 0, 0
    while done < n_updates:
        a = select_action(q, s, rng, step)
        r, s2 = mdp.step(s, a)
        q.buffer.append(Transition(s, a, r, s2))
        for tr in sample_batch(q, rng)[: n_updates - done]:
            update(q, [tr])
            done += 1
        s, step = s2, step + 1
    return q


def test_criterion_6_rl_correctness(toy_mdp, capsys):
    q_star = toy_mdp.q_star(0.92)
    errors = [float(np.max(np.abs(_train_toy(toy_mdp, seed).table - q_star))) for seed in SEEDS]
    passed = sum(e <= 1e-2 for e in errors)
    report(capsys, 6, passed == 10, f"sup-norm error to Q* after 50000 updates: max {max(errors):.2e}, "
                                    f"{passed}/10 seeds within 1e-2")
    assert passed == 10


# ------------------------------------------------------------- criterion 7


def _fd_worst(arch, rng):
    theta = arch.init(rng) + rng.normal(0, 0.05, arch.n_params)
    x, y = rng.normal(size=(16, arch.sizes[0])), rng.integers(0, arch.sizes[-1], 16)
    _, g = mlp.loss_and_grad(arch, theta, x, y)
    worst, n, h = 0.0, 0, 1e-6
    for j in rng.choice(arch.n_params, size=100, replace=False):
        tp, tm = theta.copy(), theta.copy()
        tp[j] += h
        tm[j] -= h
        fd = (mlp.loss(arch, tp, x, y) - mlp.loss(arch, tm, x, y)) / (2 * h)
        scale = max(abs(fd), abs(g[j]))
        if scale > 1e-9:
            worst = max(worst, abs(fd - g[j]) / scale)
        n += 1
    return worst, n


def test_criterion_7_fl_correctness(capsys):
    rng = np.random.default_rng(0)
    models = [fl.make_model((64, 32, 10), rng) for _ in range(5)]
    m = models[0]
    algebra = max(
        float(np.max(np.abs(fl.aggregate([m, m.copy(), m.copy()]).theta - m.theta))),
        float(np.max(np.abs(fl.aggregate(models[:2]).theta - fl.aggregate(models[1::-1]).theta))),
        float(np.max(np.abs(fl.aggregate(models).theta - fl.aggregate(models[::-1]).theta))),
        float(np.max(np.abs(fl.aggregate(models).theta - fl.aggregate([models[i] for i in (3, 0, 4, 1, 2)]).theta))),
    )

    cfg = ScenarioConfig()
    f = cfg.fl
    frng = substream(0, "fl")
    task = fl.synthetic_task(frng, f.n_train, f.n_test, f.input_dim, f.n_classes, f.spread)
    _, accs, steps = fl.federated_training(task, (f.input_dim, f.hidden, f.n_classes), cfg.sim.n_embb, 50,
                                           f.local_epochs, f.learning_rate, frng, f.batch_size)
    reached = next((i + 1 for i, a in enumerate(accs) if a >= 0.90), None)
    central = fl.train_centralized(fl.make_model((f.input_dim, f.hidden, f.n_classes), frng),
                                   task.x_train, task.y_train, steps, f.learning_rate, frng, f.batch_size)
    central_acc = fl.evaluate(central, task.x_test, task.y_test)[1]
    gap = abs(accs[-1] - central_acc)

    fd_clf, n_clf = _fd_worst(ARCH, np.random.default_rng(1))
    fd_fl, n_fl = _fd_worst(mlp.Architecture((64, 32, 10)), np.random.default_rng(2))

    ok = (algebra <= 1e-12 and reached is not None and gap <= 0.02
          and max(fd_clf, fd_fl) <= 1e-4 and min(n_clf, n_fl) >= 100)
    report(capsys, 7, ok, f"FedAvg algebra error {algebra:.1e}; 90% test accuracy at round {reached}, "
                          f"final {accs[-1]:.3f} vs centralized {central_acc:.3f} ({steps} steps each, gap "
                          f"{gap * 100:.1f} pts); finite-difference rel error {fd_clf:.1e} (classifier, "
                          f"{n_clf} coords), {fd_fl:.1e} (FL model, {n_fl} coords)")
    assert algebra <= 1e-12
    assert reached is not None and reached <= 50 and gap <= 0.02
    assert max(fd_clf, fd_fl) <= 1e-4 and min(n_clf, n_fl) >= 100


# ------------------------------------------------------------- criterion 8


def test_criterion_8_coupling_consistency(capsys):
    n_rounds, worst, set_ok, drops = 0, 0.0, True, 0
    for shadowing in (False, True):
        cfg = ScenarioConfig().replace(net={"shadowing": shadowing})
        sim = Simulation.build(cfg, seed=1)
        sim.keep_outcomes = True
        sim.run()
        params = cfg.fl_energy()
        for r in sim.rounds:
            out = sim.outcomes[r.t]
            not_out = {cid for cid in r.fl_clients if not out.outage[cid]}
            set_ok &= set(r.aggregated_ids) == not_out
            set_ok &= all(c.upload_ok == (c.client_id in not_out) for c in r.clients)
            drops += len(r.fl_clients) - len(not_out)
            for c in r.clients:
                up = c.model_bits * c.tx_power_w / c.uplink_rate_bps if c.uplink_rate_bps > 0 else math.inf
                down = c.model_bits * c.rx_power_w / c.downlink_rate_bps if c.downlink_rate_bps > 0 else math.inf
                expected = (c.comp_energy_per_epoch_j * c.local_epochs + up + down) if c.upload_ok else 0.0
                assert c.local_epochs == params.local_epochs
                worst = max(worst, abs(c.round_energy_j - expected))
            n_rounds += 1
    ok = set_ok and worst <= 1e-9 and n_rounds > 0
    report(capsys, 8, ok, f"{n_rounds} logged rounds ({drops} dropped uploads): participant sets match: "
                          f"{set_ok}; max energy recomputation error {worst:.1e} J")
    assert set_ok and worst <= 1e-9


# ------------------------------------------------------------- criterion 9


def test_criterion_9_determinism(tmp_path, capsys):
    dirs = [tmp_path / "a", tmp_path / "b"]
    with capsys.disabled():
        codes = [main(["run", "--out", str(d), "--seed", "7"]) for d in dirs]
    same = {name: (dirs[0] / name).read_bytes() == (dirs[1] / name).read_bytes()
            for name in ("run.csv", "summary.json")}
    ok = codes == [0, 0] and all(same.values())
    report(capsys, 9, ok, f"byte-identical across two runs: {same}")
    assert ok


# ------------------------------------------------------------ criterion 10


def test_criterion_10_performance(capsys):
    t0 = time.perf_counter()
    result = run(ScenarioConfig())
    elapsed = time.perf_counter() - t0
    with capsys.disabled():
        code = main(["bench"])
    ok = elapsed < 60 and code == 0 and len(result.metrics) == 100
    report(capsys, 10, ok, f"reference run (50 clients x 100 steps) {elapsed:.2f} s; bench exit code {code}")
    assert ok
