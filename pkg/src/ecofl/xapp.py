"""Allocation-policy classifier (the xApp) and its labelling oracle.

Features are computed from the state under the equal-allocation
counterfactual, so they depend only on positions, RAT assignments and plans:

    f1  voice offered load / voice capacity  (capped at FEATURE_CAP)
    f2  eMBB offered load / eMBB capacity    (capped at FEATURE_CAP)
    f3  fraction of clients on NR
    f4  mean over clients of min(rate margin, latency margin), in [-1, 1]
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import mlp
from .netmodel import RATS, Client, NetworkState, PlanId, Rat, distances, link_snr, w_to_dbm
from .policies import PolicyId
from .radio import RadioContext, evaluate, qos_margins

ARCH = mlp.Architecture((4, 6, 6, 4))
FEATURE_CAP = 10.0
BUILTIN_WEIGHTS = Path(__file__).with_name("data") / "xapp_weights.txt"


def extract_features(state: NetworkState, ctx: RadioContext) -> np.ndarray:
    n = len(state.clients)
    if n == 0:
        return np.zeros(4)
    out = evaluate(state, ctx, PolicyId.EQUAL)
    feats = np.zeros(4)
    for k, (mask, qos) in enumerate(((out.is_voice, ctx.voice), (~out.is_voice, ctx.embb))):
        if mask.any():
            offered = mask.sum() * qos.min_rate_bps
            capacity = out.rate_bps[mask].sum()
            feats[k] = FEATURE_CAP if capacity <= 0 else min(offered / capacity, FEATURE_CAP)
    feats[2] = float(np.mean(out.rat_index == RATS.index(Rat.NR)))
    m = qos_margins(out, ctx)
    feats[3] = float(np.mean(np.minimum(m[:, 0], m[:, 1])))
    return feats


@dataclass
class PolicyClassifier:
    theta: np.ndarray
    input_mean: np.ndarray = field(default_factory=lambda: np.zeros(4))
    input_scale: np.ndarray = field(default_factory=lambda: np.ones(4))
    learning_rate: float = 1e-2
    batch_size: int = 32
    calls: int = 0

    def __post_init__(self):
        if self.theta.size != ARCH.n_params:
            raise ValueError(f"classifier needs {ARCH.n_params} parameters, got {self.theta.size}")

    @classmethod
    def init(cls, rng: np.random.Generator, **kw) -> "PolicyClassifier":
        return cls(ARCH.init(rng), **kw)

    @classmethod
    def zeros(cls) -> "PolicyClassifier":
        return cls(np.zeros(ARCH.n_params))

    def standardize(self, f):
        return (np.asarray(f, dtype=float) - self.input_mean) / self.input_scale

    def dumps(self) -> str:
        return mlp.dump_weights(ARCH, self.theta, {"input_mean": self.input_mean, "input_scale": self.input_scale})

    @classmethod
    def loads(cls, text: str) -> "PolicyClassifier":
        arch, theta, extra = mlp.load_weights(text)
        if arch != ARCH:
            raise ValueError(f"expected layers {ARCH.sizes}, file has {arch.sizes}")
        return cls(theta, extra.get("input_mean", np.zeros(4)), extra.get("input_scale", np.ones(4)))

    @classmethod
    def load(cls, path) -> "PolicyClassifier":
        path = BUILTIN_WEIGHTS if str(path) == "builtin" else Path(path)
        return cls.loads(path.read_text())


def forward(clf: PolicyClassifier, f) -> np.ndarray:
    p = mlp.forward(ARCH, clf.theta, clf.standardize(f))
    return p[0] if np.ndim(f) == 1 else p


def predict_policy(clf: PolicyClassifier, f) -> PolicyId:
    clf.calls += 1
    return PolicyId(int(np.argmax(forward(clf, f))))


@dataclass
class LabeledScenario:
    features: np.ndarray
    label: PolicyId
    scenario_id: int
    snapshot: dict | None = None


def oracle_scores(state: NetworkState, ctx: RadioContext) -> list[tuple[int, float, int]]:
    """(outage count, total client power, policy index) for each policy."""
    scores = []
    for p in PolicyId:
        out = evaluate(state, ctx, p)
        scores.append((out.n_outage, out.total_power_w, int(p)))
    return scores


def oracle_best_policy(state: NetworkState, ctx: RadioContext) -> PolicyId:
    """Exhaustive one-step search, lexicographic on (outages, power, index)."""
    return PolicyId(min(oracle_scores(state, ctx))[2])


@dataclass(frozen=True)
class ScenarioRanges:
    n_clients: tuple[int, int] = (40, 60)
    embb_fraction: tuple[float, float] = (0.1, 0.3)
    best_rat_prob: tuple[float, float] = (0.5, 1.0)
    arena_m: float = 500.0


def random_scenario(rng: np.random.Generator, ranges: ScenarioRanges = ScenarioRanges(),
                    ctx: RadioContext | None = None) -> NetworkState:
    ctx = ctx or RadioContext.default()
    n = int(rng.integers(ranges.n_clients[0], ranges.n_clients[1] + 1))
    embb_frac = rng.uniform(*ranges.embb_fraction)
    best_prob = rng.uniform(*ranges.best_rat_prob)
    plan_bias = rng.dirichlet(np.ones(3))
    pos = rng.uniform(0.0, ranges.arena_m, size=(n, 2))
    best = best_rat(pos, ctx)
    clients = []
    for i in range(n):
        embb = rng.random() < embb_frac
        rat = best[i] if rng.random() < best_prob else RATS[1 - RATS.index(best[i])]
        clients.append(Client(
            client_id=i,
            position=pos[i],
            velocity=np.zeros(2),
            qos_class=ctx.embb if embb else ctx.voice,
            is_fl_participant=embb,
            assigned_rat=rat,
            power_plan_id=PlanId(int(rng.choice(3, p=plan_bias))),
        ))
    return NetworkState(0, clients).refresh_aggregates()


def best_rat(positions: np.ndarray, ctx: RadioContext) -> list[Rat]:
    """RAT with the higher full-band uplink SNR at full plan power, per position."""
    p_dbm = float(w_to_dbm(ctx.plans.p_f_w))
    snr = np.column_stack([
        link_snr(ctx.rat(r), distances(positions, ctx.rat(r)), p_dbm, ctx.rat(r).prb_count) for r in RATS
    ])
    return [RATS[k] for k in np.argmax(snr, axis=1)]


def generate_corpus(n: int, rng: np.random.Generator, ctx: RadioContext | None = None,
                    ranges: ScenarioRanges = ScenarioRanges(), keep_snapshots: bool = False):
    """``n`` random scenarios labelled by the oracle, plus a label histogram."""
    if n < 1:
        raise ValueError("corpus size must be >= 1")
    ctx = ctx or RadioContext.default()
    corpus = []
    for sid in range(n):
        state = random_scenario(rng, ranges, ctx)
        corpus.append(LabeledScenario(
            extract_features(state, ctx),
            oracle_best_policy(state, ctx),
            sid,
            state.to_record() if keep_snapshots else None,
        ))
    hist = np.bincount([int(s.label) for s in corpus], minlength=4)
    return corpus, {PolicyId(k).label: int(v) for k, v in enumerate(hist)}


def train(clf: PolicyClassifier, corpus, epochs: int, rng: np.random.Generator,
          optimizer: str = "adam") -> tuple[PolicyClassifier, list[float]]:
    """Mini-batch cross-entropy fit; returns the classifier and per-epoch loss."""
    if not corpus:
        raise ValueError("empty corpus")
    x = np.array([s.features for s in corpus], dtype=float)
    y = np.array([int(s.label) for s in corpus])
    clf.input_mean = x.mean(axis=0)
    clf.input_scale = np.where(x.std(axis=0) > 1e-12, x.std(axis=0), 1.0)
    xs = clf.standardize(x)
    opt = mlp.Adam(clf.learning_rate) if optimizer == "adam" else mlp.Sgd(clf.learning_rate)
    theta = clf.theta.copy()
    curve = []
    for _ in range(epochs):
        theta = mlp.minibatch_epoch(ARCH, theta, xs, y, clf.batch_size, opt, rng)
        curve.append(mlp.loss(ARCH, theta, xs, y))
    clf.theta = theta
    return clf, curve


def accuracy(clf: PolicyClassifier, corpus) -> float:
    x = np.array([s.features for s in corpus])
    y = np.array([int(s.label) for s in corpus])
    return float(np.mean(forward(clf, x).argmax(axis=1) == y))


def corpus_to_csv(corpus) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["f1", "f2", "f3", "f4", "label", "scenario_id"])
    for s in corpus:
        w.writerow([f"{v:.9g}" for v in s.features] + [int(s.label), s.scenario_id])
    return buf.getvalue()


def corpus_from_csv(text: str) -> list[LabeledScenario]:
    rows = list(csv.DictReader(io.StringIO(text)))
    return [
        LabeledScenario(np.array([float(r[f"f{k}"]) for k in range(1, 5)]), PolicyId(int(r["label"])),
                        int(r["scenario_id"]))
        for r in rows
    ]


@dataclass
class TrainingReport:
    histogram: dict[str, int]
    train_accuracy: float
    holdout_accuracy: float
    loss_curve: list[float]


def fit(n_train: int, n_holdout: int, seed: int, ctx: RadioContext | None = None,
        ranges: ScenarioRanges = ScenarioRanges(), epochs: int = 300,
        learning_rate: float = 1e-2, batch_size: int = 32) -> tuple[PolicyClassifier, TrainingReport]:
    """Generate ``n_train + n_holdout`` labelled scenarios, train on the first
    ``n_train`` and score the rest. Scenarios come from the ``scenario-gen``
    stream, initialization and shuffling from ``xapp``."""
    from .seeding import substream

    ctx = ctx or RadioContext.default()
    corpus, hist = generate_corpus(n_train + n_holdout, substream(seed, "scenario-gen"), ctx, ranges)
    train_set, holdout = corpus[:n_train], corpus[n_train:]
    rng = substream(seed, "xapp")
    clf = PolicyClassifier.init(rng, learning_rate=learning_rate, batch_size=batch_size)
    clf, curve = train(clf, train_set, epochs, rng)
    held = accuracy(clf, holdout) if holdout else float("nan")
    return clf, TrainingReport(hist, accuracy(clf, train_set), held, curve)
