"""Radio topology, channel, rate, latency, QoS and mobility model.

One LTE macro cell and one NR micro cell on disjoint carriers, so there is no
interference term. Link quality is a log-distance path loss anchored at the
1 m free-space loss of the carrier. The uplink (client -> base station at the
client's power-plan wattage) is the link that carries FL uploads and decides
outage; ``snr_linear`` defaults to the downlink budget (base station at max
power) when no transmit power is given.
"""

from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass, field

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0
THERMAL_NOISE_DBM_HZ = -174.0
PRB_BANDWIDTH_HZ = 180e3
SPECTRAL_EFFICIENCY_CAP = 7.4  # bps/Hz
SNR_FLOOR = 1e-12
MIN_DISTANCE_M = 1.0


class Rat(str, enum.Enum):
    LTE = "LTE"
    NR = "NR"


RATS = (Rat.LTE, Rat.NR)


class QosClassId(str, enum.Enum):
    VOICE = "voice"
    EMBB = "embb"


class PlanId(enum.IntEnum):
    """Client power plans, ordered by wattage."""

    P_S = 0
    P_M = 1
    P_F = 2


def dbm_to_w(dbm):
    return 10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0)


def w_to_dbm(w):
    return 10.0 * np.log10(np.asarray(w, dtype=float)) + 30.0


@dataclass(frozen=True)
class RatConfig:
    rat_id: Rat
    bandwidth_hz: float
    carrier_hz: float
    prb_count: int
    max_bs_tx_dbm: float
    base_latency_s: float
    pathloss_exponent: float
    bs_position: tuple[float, float]
    noise_figure_db: float = 7.0
    antenna_gain_dbi: float = 0.0  # base-station antenna gain, applied to both link directions
    # device power model (P_RF + P_BB*rho + P_PA*(P_tx/P_max)^exponent)
    p_rf_w: float = 0.05
    p_bb_w: float = 0.1
    p_pa_w: float = 0.3
    pa_exponent: float = 2.0
    p_max_w: float = 0.5

    def __post_init__(self):
        if self.bandwidth_hz <= 0:
            raise ValueError(f"{self.rat_id.value}: bandwidth_hz must be > 0")
        if self.carrier_hz <= 0:
            raise ValueError(f"{self.rat_id.value}: carrier_hz must be > 0")
        if int(self.prb_count) != self.prb_count or self.prb_count <= 0:
            raise ValueError(f"{self.rat_id.value}: prb_count must be a positive integer")
        if self.pathloss_exponent <= 0 or self.pa_exponent <= 0:
            raise ValueError(f"{self.rat_id.value}: exponents must be > 0")
        if self.p_max_w <= 0:
            raise ValueError(f"{self.rat_id.value}: p_max_w must be > 0")


def lte_default(**overrides) -> RatConfig:
    cfg = RatConfig(
        rat_id=Rat.LTE,
        bandwidth_hz=10e6,
        carrier_hz=800e6,
        prb_count=50,
        max_bs_tx_dbm=38.0,
        base_latency_s=0.020,
        pathloss_exponent=3.5,
        bs_position=(250.0, 250.0),
        antenna_gain_dbi=17.0,
        p_rf_w=0.05,
        p_bb_w=0.1,
        p_pa_w=0.3,
        pa_exponent=2.0,
    )
    return dataclasses.replace(cfg, **overrides)


def nr_default(**overrides) -> RatConfig:
    cfg = RatConfig(
        rat_id=Rat.NR,
        bandwidth_hz=20e6,
        carrier_hz=3.5e9,
        prb_count=106,
        max_bs_tx_dbm=43.0,
        base_latency_s=0.010,
        pathloss_exponent=3.0,
        bs_position=(150.0, 150.0),
        antenna_gain_dbi=15.0,
        p_rf_w=0.08,
        p_bb_w=0.15,
        p_pa_w=0.35,
        pa_exponent=2.2,
    )
    return dataclasses.replace(cfg, **overrides)


@dataclass(frozen=True)
class QosClass:
    class_id: QosClassId
    min_rate_bps: float
    max_latency_s: float
    packet_bits: float = 1000.0

    def __post_init__(self):
        if self.min_rate_bps <= 0 or self.max_latency_s <= 0:
            raise ValueError("QoS thresholds must be > 0")


VOICE = QosClass(QosClassId.VOICE, min_rate_bps=0.1e6, max_latency_s=0.100, packet_bits=1000.0)
EMBB = QosClass(QosClassId.EMBB, min_rate_bps=10e6, max_latency_s=0.080, packet_bits=77_120.0)


@dataclass
class Client:
    client_id: int
    position: np.ndarray
    velocity: np.ndarray
    qos_class: QosClass
    is_fl_participant: bool = False
    assigned_rat: Rat = Rat.LTE
    power_plan_id: PlanId = PlanId.P_F
    activity_factor: float = 0.792
    idle_power_w: float = 0.1
    tx_power_w: float = 0.5
    rx_power_w: float = 0.1
    waypoint: np.ndarray | None = None
    speed: float = 0.0

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)
        self.velocity = np.asarray(self.velocity, dtype=float)
        if not 0.0 <= self.activity_factor <= 1.0:
            raise ValueError(f"client {self.client_id}: activity_factor outside [0, 1]")

    @property
    def is_voice(self) -> bool:
        return self.qos_class.class_id == QosClassId.VOICE


@dataclass
class NetworkState:
    """Observable network state at one time step.

    ``load`` is offered traffic per RAT (bps), ``qos_margins`` holds one
    (rate margin, latency margin, outage) row per client from the last
    radio evaluation, ``user_distribution`` maps (rat, class) -> count.
    """

    t: int
    clients: list[Client]
    load: dict[Rat, float] = field(default_factory=dict)
    qos_margins: np.ndarray | None = None
    user_distribution: dict[tuple[Rat, QosClassId], int] = field(default_factory=dict)
    power_levels: tuple[float, ...] = (0.15, 0.3, 0.5)
    shadowing_db: np.ndarray | None = None  # (n_clients, 2) per RAT, zeros when disabled

    def refresh_aggregates(self):
        self.load = {r: 0.0 for r in RATS}
        self.user_distribution = {(r, q): 0 for r in RATS for q in QosClassId}
        for c in self.clients:
            self.load[c.assigned_rat] += c.qos_class.min_rate_bps
            self.user_distribution[(c.assigned_rat, c.qos_class.class_id)] += 1
        if self.qos_margins is None or len(self.qos_margins) != len(self.clients):
            self.qos_margins = np.zeros((len(self.clients), 3))
        return self

    def positions(self) -> np.ndarray:
        return np.array([c.position for c in self.clients]).reshape(-1, 2)

    def to_record(self) -> dict:
        """Plain-data snapshot, stable under json serialization."""
        return {
            "t": self.t,
            "clients": [
                {
                    "id": c.client_id,
                    "x": float(c.position[0]),
                    "y": float(c.position[1]),
                    "vx": float(c.velocity[0]),
                    "vy": float(c.velocity[1]),
                    "class": c.qos_class.class_id.value,
                    "rat": c.assigned_rat.value,
                    "plan": c.power_plan_id.name,
                }
                for c in self.clients
            ],
            "load": {r.value: v for r, v in self.load.items()},
        }


def free_space_loss_db(distance_m, carrier_hz):
    d = np.maximum(np.asarray(distance_m, dtype=float), MIN_DISTANCE_M)
    return 20.0 * np.log10(4.0 * math.pi * d * carrier_hz / SPEED_OF_LIGHT)


def path_loss_db(rat: RatConfig, distance_m):
    """Log-distance loss anchored at the 1 m free-space loss; d clamps to 1 m."""
    d = np.maximum(np.asarray(distance_m, dtype=float), MIN_DISTANCE_M)
    pl = free_space_loss_db(1.0, rat.carrier_hz) + 10.0 * rat.pathloss_exponent * np.log10(d)
    return float(pl) if pl.ndim == 0 else pl


def noise_dbm(rat: RatConfig, prbs):
    bw = np.maximum(np.asarray(prbs, dtype=float), 1.0) * PRB_BANDWIDTH_HZ
    return THERMAL_NOISE_DBM_HZ + rat.noise_figure_db + 10.0 * np.log10(bw)


def link_snr(rat: RatConfig, distance_m, tx_power_dbm, prbs=1.0, shadowing_db=0.0):
    """Vectorized SNR (linear) for a link of given length and transmit power.

    A zero-PRB grant is evaluated over one PRB of noise bandwidth; its rate is
    zero regardless.
    """
    rx = (np.asarray(tx_power_dbm, dtype=float) + rat.antenna_gain_dbi
          - path_loss_db(rat, distance_m) - shadowing_db)
    snr = 10.0 ** ((rx - noise_dbm(rat, prbs)) / 10.0)
    snr = np.maximum(snr, SNR_FLOOR)
    return float(snr) if np.ndim(snr) == 0 else snr


def snr_linear(rat: RatConfig, client: Client, bs_position, prbs=1.0, tx_power_dbm=None,
               shadowing_db=0.0) -> float:
    """SNR of ``client`` against the base station at ``bs_position``.

    Without ``tx_power_dbm`` this is the downlink budget at the base
    station's max power; the engine passes the client's plan power to get
    the uplink.
    """
    if tx_power_dbm is None:
        tx_power_dbm = rat.max_bs_tx_dbm
    d = float(np.hypot(*(np.asarray(client.position) - np.asarray(bs_position))))
    return link_snr(rat, d, tx_power_dbm, prbs, shadowing_db)


def achievable_rate_bps(prbs, snr, rat: RatConfig | None = None):
    se = np.minimum(np.log2(1.0 + np.asarray(snr, dtype=float)), SPECTRAL_EFFICIENCY_CAP)
    rate = np.maximum(np.asarray(prbs, dtype=float), 0.0) * PRB_BANDWIDTH_HZ * se
    return float(rate) if rate.ndim == 0 else rate


def latency_s(client: Client | None, rate_bps, rat: RatConfig, packet_bits):
    """Base latency plus serialization delay; zero rate gives +inf."""
    rate = np.asarray(rate_bps, dtype=float)
    with np.errstate(divide="ignore"):
        lat = np.where(rate > 0, rat.base_latency_s + packet_bits / np.where(rate > 0, rate, 1.0), np.inf)
    return float(lat) if lat.ndim == 0 else lat


def check_outage(rate_bps, latency, qos: QosClass):
    """Closed thresholds: rate == min and latency == max both pass."""
    out = (np.asarray(rate_bps) < qos.min_rate_bps) | (np.asarray(latency) > qos.max_latency_s)
    return bool(out) if out.ndim == 0 else out


def distances(positions: np.ndarray, rat: RatConfig) -> np.ndarray:
    return np.hypot(positions[:, 0] - rat.bs_position[0], positions[:, 1] - rat.bs_position[1])


@dataclass(frozen=True)
class MobilityConfig:
    arena_m: float = 500.0
    speed_min: float = 1.0
    speed_max: float = 3.0


def draw_waypoint(client: Client, mob: MobilityConfig, rng: np.random.Generator):
    client.waypoint = rng.uniform(0.0, mob.arena_m, size=2)
    client.speed = float(rng.uniform(mob.speed_min, mob.speed_max))
    _aim(client)


def _aim(client: Client):
    delta = client.waypoint - client.position
    dist = float(np.hypot(*delta))
    client.velocity = delta / dist * client.speed if dist > 0 else np.zeros(2)


def move_clients(state: NetworkState, dt_s: float, rng: np.random.Generator,
                 mob: MobilityConfig = MobilityConfig()) -> NetworkState:
    """Random-waypoint step, in place; returns ``state``.

    A client with zero speed never moves and never draws a waypoint. Only
    ``rng`` is consumed.
    """
    if dt_s <= 0:
        raise ValueError("dt_s must be > 0")
    for c in state.clients:
        if c.speed <= 0.0 or c.waypoint is None:
            continue
        budget = c.speed * dt_s
        while budget > 0:
            delta = c.waypoint - c.position
            dist = float(np.hypot(*delta))
            if dist > budget:
                c.position = c.position + delta / dist * budget
                break
            c.position = c.waypoint.copy()
            budget -= dist
            draw_waypoint(c, mob, rng)
        _aim(c)
        np.clip(c.position, 0.0, mob.arena_m, out=c.position)
    return state
