"""Scenario configuration: TOML schema, validation, defaults and round-trip.

Every section is a dataclass whose field defaults are the documented
defaults. Unknown keys, wrong types and invariant violations raise
:class:`ConfigError` carrying the dotted key path; malformed TOML raises it
with the line number reported by the parser.
"""

from __future__ import annotations

import dataclasses
import re
import sys
import typing
from dataclasses import dataclass, field
from pathlib import Path

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .energy import BaseStation, FlEnergyParams, InfrastructureConfig, PowerPlan, Server
from .netmodel import EMBB, RATS, VOICE, MobilityConfig, PlanId, QosClass, Rat, RatConfig
from .policies import OverReservationError, PolicyId, PolicyParams
from .radio import RadioContext


class ConfigError(ValueError):
    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        self.key = key
        self.line = line
        where = f"{key}: " if key else (f"line {line}: " if line else "")
        super().__init__(where + message)


@dataclass
class RatSection:
    bandwidth_hz: float
    carrier_hz: float
    prb_count: int
    max_bs_tx_dbm: float
    base_latency_s: float
    pathloss_exponent: float
    bs_x_m: float
    bs_y_m: float
    antenna_gain_dbi: float
    noise_figure_db: float = 7.0
    p_rf_w: float = 0.05
    p_bb_w: float = 0.1
    p_pa_w: float = 0.3
    pa_exponent: float = 2.0
    p_max_w: float = 0.5

    def build(self, rat: Rat) -> RatConfig:
        return RatConfig(
            rat_id=rat,
            bandwidth_hz=self.bandwidth_hz,
            carrier_hz=self.carrier_hz,
            prb_count=self.prb_count,
            max_bs_tx_dbm=self.max_bs_tx_dbm,
            base_latency_s=self.base_latency_s,
            pathloss_exponent=self.pathloss_exponent,
            bs_position=(self.bs_x_m, self.bs_y_m),
            noise_figure_db=self.noise_figure_db,
            antenna_gain_dbi=self.antenna_gain_dbi,
            p_rf_w=self.p_rf_w,
            p_bb_w=self.p_bb_w,
            p_pa_w=self.p_pa_w,
            pa_exponent=self.pa_exponent,
            p_max_w=self.p_max_w,
        )


def _lte_section() -> RatSection:
    return RatSection(10e6, 800e6, 50, 38.0, 0.020, 3.5, 250.0, 250.0, 17.0,
                      p_rf_w=0.05, p_bb_w=0.1, p_pa_w=0.3, pa_exponent=2.0)


def _nr_section() -> RatSection:
    return RatSection(20e6, 3.5e9, 106, 43.0, 0.010, 3.0, 150.0, 150.0, 15.0,
                      p_rf_w=0.08, p_bb_w=0.15, p_pa_w=0.35, pa_exponent=2.2)


@dataclass
class NetSection:
    arena_m: float = 500.0
    speed_min_mps: float = 1.0
    speed_max_mps: float = 3.0
    dt_s: float = 1.0
    shadowing: bool = False
    shadowing_sigma_db: float = 8.0
    voice_min_rate_bps: float = VOICE.min_rate_bps
    voice_max_latency_s: float = VOICE.max_latency_s
    voice_packet_bits: float = VOICE.packet_bits
    embb_min_rate_bps: float = EMBB.min_rate_bps
    embb_max_latency_s: float = EMBB.max_latency_s
    activity_factor: float = 0.792
    idle_power_w: float = 0.1
    rx_power_w: float = 0.1
    lte: RatSection = field(default_factory=_lte_section)
    nr: RatSection = field(default_factory=_nr_section)

    def validate(self):
        _positive(self, "net", "arena_m", "dt_s", "voice_min_rate_bps", "voice_max_latency_s",
                  "voice_packet_bits", "embb_min_rate_bps", "embb_max_latency_s")
        if not 0 < self.speed_min_mps <= self.speed_max_mps:
            raise ConfigError("need 0 < speed_min_mps <= speed_max_mps", "net.speed_min_mps")
        if not 0.0 <= self.activity_factor <= 1.0:
            raise ConfigError("must lie in [0, 1]", "net.activity_factor")
        if self.idle_power_w < 0 or self.rx_power_w < 0:
            raise ConfigError("must be >= 0", "net.idle_power_w")
        if self.shadowing_sigma_db < 0:
            raise ConfigError("must be >= 0", "net.shadowing_sigma_db")
        for name in ("lte", "nr"):
            sec = getattr(self, name)
            try:
                sec.build(Rat.LTE if name == "lte" else Rat.NR)
            except ValueError as exc:
                raise ConfigError(str(exc), f"net.{name}") from None
            for b in ("bs_x_m", "bs_y_m"):
                if not 0.0 <= getattr(sec, b) <= self.arena_m:
                    raise ConfigError("base station must sit inside the arena", f"net.{name}.{b}")


@dataclass
class PolicySection:
    m_voice: float = 2.0
    k_embb: float = 4.0
    alpha_v: float = 0.3
    beta_e: float = 0.7

    def validate(self):
        try:
            self.build()
        except OverReservationError as exc:
            raise ConfigError(str(exc), "policy.alpha_v") from None
        except ValueError as exc:
            raise ConfigError(str(exc), "policy") from None

    def build(self) -> PolicyParams:
        return PolicyParams(self.m_voice, self.k_embb, self.alpha_v, self.beta_e)


@dataclass
class EnergySection:
    p_s_w: float = 0.15
    p_m_w: float = 0.3
    p_f_w: float = 0.5
    comp_energy_per_epoch_j: float = 0.5
    server_active: bool = True
    server_base_j: float = 50.0
    app_fl_j: float = 5.0
    app_ric_j: float = 3.0
    bs_lte_base_w: float = 100.0
    bs_nr_base_w: float = 80.0
    bs_lte_rat_w: float = 40.0
    bs_nr_rat_w: float = 60.0

    def validate(self):
        if not 0 < self.p_s_w < self.p_m_w < self.p_f_w:
            raise ConfigError("power plans must satisfy 0 < p_s_w < p_m_w < p_f_w", "energy.p_s_w")
        _positive(self, "energy", "comp_energy_per_epoch_j")
        for name in ("server_base_j", "app_fl_j", "app_ric_j", "bs_lte_base_w", "bs_nr_base_w",
                     "bs_lte_rat_w", "bs_nr_rat_w"):
            if getattr(self, name) < 0:
                raise ConfigError("must be >= 0", f"energy.{name}")

    def plans(self) -> PowerPlan:
        return PowerPlan(self.p_s_w, self.p_m_w, self.p_f_w)

    def infrastructure(self, rat_active: dict[Rat, bool]) -> InfrastructureConfig:
        """One edge server hosting the FL and RIC applications, one BS per RAT."""
        server = Server(self.server_active, self.server_base_j, {"fl": self.app_fl_j, "ric": self.app_ric_j})
        allocations = tuple((r.value, app, 0) for r in RATS if rat_active.get(r) for app in ("fl", "ric"))
        if not self.server_active:
            allocations = ()
        stations = (
            BaseStation(self.bs_lte_base_w, {"LTE": self.bs_lte_rat_w}, {"LTE": bool(rat_active.get(Rat.LTE))}),
            BaseStation(self.bs_nr_base_w, {"NR": self.bs_nr_rat_w}, {"NR": bool(rat_active.get(Rat.NR))}),
        )
        return InfrastructureConfig((server,), allocations, stations)


@dataclass
class RlSection:
    learning_rate: float = 0.4
    discount: float = 0.92
    initial_steps: int = 2000
    eps_min: float = 0.05
    eps_half_life: float = 500.0
    batch_size: int = 32
    buffer_capacity: int = 10_000
    updates_per_step: int = 8
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0
    snr_edges_db: list[float] = field(default_factory=lambda: [0.0, 5.0, 10.0, 20.0])
    load_edges: list[float] = field(default_factory=lambda: [0.25, 0.5, 0.75])
    qtable_in: str = ""
    qtable_out: str = ""

    def validate(self):
        if not 0 < self.learning_rate <= 1:
            raise ConfigError("must lie in (0, 1]", "rl.learning_rate")
        if not 0 <= self.discount < 1:
            raise ConfigError("must lie in [0, 1)", "rl.discount")
        if not 0 <= self.eps_min <= 1:
            raise ConfigError("must lie in [0, 1]", "rl.eps_min")
        if self.initial_steps < 0:
            raise ConfigError("must be >= 0", "rl.initial_steps")
        _positive(self, "rl", "eps_half_life", "batch_size", "buffer_capacity")
        if self.updates_per_step < 0:
            raise ConfigError("must be >= 0", "rl.updates_per_step")
        if min(self.alpha, self.beta, self.gamma) < 0 or self.alpha == self.beta == self.gamma == 0:
            raise ConfigError("weights must be >= 0 and not all zero", "rl.alpha")
        if len(self.snr_edges_db) != 4 or sorted(self.snr_edges_db) != list(self.snr_edges_db):
            raise ConfigError("need 4 increasing edges (5 buckets)", "rl.snr_edges_db")
        if len(self.load_edges) != 3 or sorted(self.load_edges) != list(self.load_edges):
            raise ConfigError("need 3 increasing edges (4 buckets)", "rl.load_edges")
        if self.qtable_in and not Path(self.qtable_in).is_file():
            raise ConfigError(f"file not found: {self.qtable_in}", "rl.qtable_in")


@dataclass
class XappSection:
    weights: str = "builtin"
    learning_rate: float = 1e-2
    batch_size: int = 32
    epochs: int = 300
    n_clients_min: int = 40
    n_clients_max: int = 60
    embb_fraction_min: float = 0.1
    embb_fraction_max: float = 0.3
    best_rat_prob_min: float = 0.5
    best_rat_prob_max: float = 1.0

    def validate(self):
        if self.weights != "builtin" and not Path(self.weights).is_file():
            raise ConfigError(f"file not found: {self.weights}", "xapp.weights")
        _positive(self, "xapp", "learning_rate", "batch_size", "epochs", "n_clients_min")
        if self.n_clients_max < self.n_clients_min:
            raise ConfigError("must be >= n_clients_min", "xapp.n_clients_max")
        for lo, hi in (("embb_fraction_min", "embb_fraction_max"), ("best_rat_prob_min", "best_rat_prob_max")):
            a, b = getattr(self, lo), getattr(self, hi)
            if not 0.0 <= a <= b <= 1.0:
                raise ConfigError(f"need 0 <= {lo} <= {hi} <= 1", f"xapp.{lo}")


@dataclass
class FlSection:
    input_dim: int = 64
    hidden: int = 32
    n_classes: int = 10
    n_train: int = 1000
    n_test: int = 1000
    spread: float = 0.6
    learning_rate: float = 0.05
    local_epochs: int = 5
    batch_size: int = 32
    partition: str = "iid"
    dirichlet_alpha: float = 0.5
    weighted: bool = False

    def validate(self):
        _positive(self, "fl", "input_dim", "hidden", "n_train", "n_test", "spread", "local_epochs",
                  "batch_size", "dirichlet_alpha")
        if self.n_classes < 2:
            raise ConfigError("must be >= 2", "fl.n_classes")
        if self.learning_rate < 0:
            raise ConfigError("must be >= 0", "fl.learning_rate")
        if self.partition not in ("iid", "dirichlet"):
            raise ConfigError("must be 'iid' or 'dirichlet'", "fl.partition")


@dataclass
class SimSection:
    seed: int = 0
    n_steps: int = 100
    n_clients: int = 50
    embb_fraction: float = 0.2
    mode: str = "ecofl"
    fl_round_interval: int = 5

    def validate(self):
        if not 0 <= self.seed < 2**63:
            raise ConfigError("must lie in [0, 2**63)", "sim.seed")
        _positive(self, "sim", "n_steps", "n_clients", "fl_round_interval")
        if not 0.0 <= self.embb_fraction <= 1.0:
            raise ConfigError("must lie in [0, 1]", "sim.embb_fraction")
        try:
            parse_mode(self.mode)
        except ValueError as exc:
            raise ConfigError(str(exc), "sim.mode") from None

    @property
    def n_embb(self) -> int:
        return int(round(self.n_clients * self.embb_fraction))


@dataclass
class ScenarioConfig:
    net: NetSection = field(default_factory=NetSection)
    policy: PolicySection = field(default_factory=PolicySection)
    energy: EnergySection = field(default_factory=EnergySection)
    rl: RlSection = field(default_factory=RlSection)
    xapp: XappSection = field(default_factory=XappSection)
    fl: FlSection = field(default_factory=FlSection)
    sim: SimSection = field(default_factory=SimSection)

    def validate(self) -> "ScenarioConfig":
        for f in dataclasses.fields(self):
            getattr(self, f.name).validate()
        if self.sim.n_embb > self.fl.n_train:
            raise ConfigError("more FL clients than training samples", "fl.n_train")
        return self

    def radio_context(self) -> RadioContext:
        n = self.net
        return RadioContext(
            lte=n.lte.build(Rat.LTE),
            nr=n.nr.build(Rat.NR),
            voice=QosClass(VOICE.class_id, n.voice_min_rate_bps, n.voice_max_latency_s, n.voice_packet_bits),
            embb=QosClass(EMBB.class_id, n.embb_min_rate_bps, n.embb_max_latency_s, EMBB.packet_bits),
            plans=self.energy.plans(),
            policy_params=self.policy.build(),
        )

    def mobility(self) -> MobilityConfig:
        return MobilityConfig(self.net.arena_m, self.net.speed_min_mps, self.net.speed_max_mps)

    def fl_energy(self) -> FlEnergyParams:
        return FlEnergyParams(self.energy.comp_energy_per_epoch_j, self.fl.local_epochs)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **sections) -> "ScenarioConfig":
        """Copy with some ``section={key: value}`` overrides applied."""
        data = self.to_dict()
        for name, values in sections.items():
            _merge(data[name], values)
        return from_dict(data)


def _merge(dst: dict, src: dict):
    for k, v in src.items():
        if isinstance(v, dict) and isinstance(dst.get(k), dict):
            _merge(dst[k], v)
        else:
            dst[k] = v


def _positive(obj, section: str, *names: str):
    for name in names:
        if not getattr(obj, name) > 0:
            raise ConfigError("must be > 0", f"{section}.{name}")


# ---------------------------------------------------------------- run modes


@dataclass(frozen=True)
class RunMode:
    kind: str  # ecofl | baseline_fixed_rat | fixed_policy | oracle_policy | greedy_energy
    rat: Rat | None = None
    plan: PlanId | None = None
    policy: PolicyId | None = None

    def __str__(self) -> str:
        if self.kind == "baseline_fixed_rat":
            return f"baseline_fixed_rat:{self.rat.value}:{self.plan.name}"
        if self.kind == "fixed_policy":
            return f"fixed_policy:{self.policy.label}"
        return self.kind


def parse_mode(text: str) -> RunMode:
    """``ecofl``, ``oracle_policy``, ``greedy_energy``, ``fixed_policy:P3``,
    ``baseline_fixed_rat:NR:P_F`` (RAT and plan default to NR and P_F)."""
    parts = text.strip().split(":")
    kind = parts[0]
    if kind in ("ecofl", "oracle_policy", "greedy_energy") and len(parts) == 1:
        return RunMode(kind)
    if kind == "fixed_policy" and len(parts) == 2:
        try:
            return RunMode(kind, policy=PolicyId.parse(parts[1]))
        except (KeyError, ValueError):
            raise ValueError(f"unknown policy {parts[1]!r} (use P1..P4)") from None
    if kind == "baseline_fixed_rat" and len(parts) <= 3:
        try:
            rat = Rat(parts[1].upper()) if len(parts) > 1 else Rat.NR
            plan = PlanId[parts[2].upper()] if len(parts) > 2 else PlanId.P_F
        except (KeyError, ValueError):
            raise ValueError(f"bad baseline mode {text!r} (use baseline_fixed_rat:LTE|NR:P_S|P_M|P_F)") from None
        return RunMode(kind, rat=rat, plan=plan)
    raise ValueError(f"unknown mode {text!r}")


# ------------------------------------------------------------ parse / dump


_LINE_RE = re.compile(r"line (\d+)")


def from_dict(data: dict, cls=ScenarioConfig, path: str = "") -> typing.Any:
    """Build ``cls`` from nested plain data; unknown keys and bad types fail."""
    if not isinstance(data, dict):
        raise ConfigError("expected a table", path or None)
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in names:
            raise ConfigError("unknown key", f"{path}.{key}" if path else key)
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name not in data:
            continue
        key = f"{path}.{f.name}" if path else f.name
        kwargs[f.name] = _coerce(data[f.name], hints[f.name], key)
    obj = cls(**kwargs) if cls is not RatSection else _rat_with(path, kwargs)
    return obj


def _rat_with(path: str, kwargs: dict) -> RatSection:
    base = _lte_section() if path.endswith("lte") else _nr_section()
    return dataclasses.replace(base, **kwargs)


def _coerce(value, hint, key: str):
    if dataclasses.is_dataclass(hint):
        return from_dict(value, hint, key)
    origin = typing.get_origin(hint)
    if origin is list:
        (item,) = typing.get_args(hint)
        if not isinstance(value, list):
            raise ConfigError("expected an array", key)
        return [_coerce(v, item, f"{key}[{i}]") for i, v in enumerate(value)]
    if hint is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"expected a boolean, got {value!r}", key)
        return value
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"expected an integer, got {value!r}", key)
        return value
    if hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"expected a number, got {value!r}", key)
        return float(value)
    if hint is str:
        if not isinstance(value, str):
            raise ConfigError(f"expected a string, got {value!r}", key)
        return value
    raise TypeError(f"unsupported config type {hint} at {key}")


def loads(text: str) -> ScenarioConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = _LINE_RE.search(str(exc))
        raise ConfigError(f"parse error: {exc}", line=int(m.group(1)) if m else None) from None
    return from_dict(data).validate()


def parse_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return loads(text)


def dumps(config: ScenarioConfig) -> str:
    return tomli_w.dumps(config.to_dict())


def defaults() -> dict:
    """The defaults registry: every key with its default value."""
    return ScenarioConfig().to_dict()


def flatten(data: dict, prefix: str = "") -> dict[str, typing.Any]:
    out = {}
    for k, v in data.items():
        key = f"{prefix}.{k}" if prefix else k
        if isinstance(v, dict):
            out.update(flatten(v, key))
        else:
            out[key] = v
    return out
