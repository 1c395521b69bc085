"""Client, device, infrastructure and FL-round energy accounting.

Power in watts, energy in joules. Infrastructure bookkeeping is per step with
dt = 1 s, so watts and joules coincide there.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

from .netmodel import Client, PlanId, QosClass, RatConfig


@dataclass(frozen=True)
class PowerPlan:
    """Wattage of the three client power plans (Low, Mid, Full)."""

    p_s_w: float = 0.15
    p_m_w: float = 0.3
    p_f_w: float = 0.5

    def __post_init__(self):
        if not 0 < self.p_s_w < self.p_m_w < self.p_f_w:
            raise ValueError("power plans must satisfy 0 < P_S < P_M < P_F")

    def watts(self, plan: PlanId) -> float:
        return (self.p_s_w, self.p_m_w, self.p_f_w)[int(plan)]

    @property
    def levels(self) -> tuple[float, float, float]:
        return (self.p_s_w, self.p_m_w, self.p_f_w)


@dataclass(frozen=True)
class FlEnergyParams:
    comp_energy_per_epoch: float = 0.5
    local_epochs: int = 5

    def __post_init__(self):
        if self.comp_energy_per_epoch <= 0 or self.local_epochs < 1:
            raise ValueError("FL energy parameters must be positive")


@dataclass(frozen=True)
class Server:
    active: bool
    base_energy_j: float
    app_energy_j: dict[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class BaseStation:
    base_power_w: float
    rat_power_w: dict[str, float]
    rat_active: dict[str, bool]


@dataclass(frozen=True)
class InfrastructureConfig:
    """Fixed server placement plus base stations.

    ``allocations`` lists the (rat, app, server index) triples with
    y_{r,a,s} = 1.
    """

    servers: tuple[Server, ...] = ()
    allocations: tuple[tuple[str, str, int], ...] = ()
    base_stations: tuple[BaseStation, ...] = ()

    def __post_init__(self):
        for s in self.servers:
            if s.base_energy_j < 0 or any(v < 0 for v in s.app_energy_j.values()):
                raise ValueError("server energies must be >= 0")
        for b in self.base_stations:
            if b.base_power_w < 0 or any(v < 0 for v in b.rat_power_w.values()):
                raise ValueError("base-station powers must be >= 0")


class PlacementError(ValueError):
    pass


def client_power_w(plan_w: float, activity: float, idle_w: float) -> float:
    """Instantaneous client draw: plan wattage scaled by activity, plus idle."""
    if not 0.0 <= activity <= 1.0:
        raise ValueError(f"activity factor {activity} outside [0, 1]")
    if idle_w < 0:
        raise ValueError("idle power must be >= 0")
    return plan_w * activity + idle_w


def total_power_w(clients: Iterable[Client], plans: PowerPlan) -> float:
    return math.fsum(
        client_power_w(plans.watts(c.power_plan_id), c.activity_factor, c.idle_power_w)
        for c in clients
    )


def energy_efficiency(total_w: float, n_clients: int, p_full_w: float) -> float:
    """1 - total / (n * P_F); not clamped, so idle power can push it below 0."""
    if n_clients < 1 or p_full_w <= 0:
        raise ValueError("energy_efficiency needs n_clients >= 1 and p_full_w > 0")
    return 1.0 - total_w / (n_clients * p_full_w)


@dataclass(frozen=True)
class PlanChoice:
    plan: PlanId
    feasible: bool


def min_feasible_plan(
    qos: QosClass,
    plans: PowerPlan,
    outcome: Callable[[float], tuple[float, float]],
) -> PlanChoice:
    """Lowest-wattage plan meeting the client's rate and latency thresholds.

    ``outcome(watts) -> (rate_bps, latency_s)`` evaluates the client's link at
    a candidate transmit power. With no feasible plan, returns P_F flagged
    infeasible.
    """
    for plan in PlanId:
        rate, lat = outcome(plans.watts(plan))
        if rate >= qos.min_rate_bps and lat <= qos.max_latency_s:
            return PlanChoice(plan, True)
    return PlanChoice(PlanId.P_F, False)


def rat_device_power_w(rat: RatConfig, rho: float, p_tx_w: float) -> float:
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"utilization {rho} outside [0, 1]")
    if p_tx_w < 0 or p_tx_w > rat.p_max_w * (1 + 1e-12):
        raise ValueError(f"p_tx {p_tx_w} W outside [0, {rat.p_max_w}] W")
    return rat.p_rf_w + rat.p_bb_w * rho + rat.p_pa_w * (p_tx_w / rat.p_max_w) ** rat.pa_exponent


def server_energy_j(server: Server, allocations: Sequence[tuple[str, str]]) -> float:
    """Server energy for the (rat, app) pairs placed on it."""
    if allocations and not server.active:
        raise PlacementError("allocation on an inactive server")
    return (server.base_energy_j if server.active else 0.0) + math.fsum(
        server.app_energy_j[app] for _, app in allocations
    )


def infrastructure_energy_j(config: InfrastructureConfig) -> float:
    total = 0.0
    for idx, server in enumerate(config.servers):
        pairs = [(r, a) for r, a, s in config.allocations if s == idx]
        total += server_energy_j(server, pairs)
    for bs in config.base_stations:
        total += bs.base_power_w + math.fsum(
            p for r, p in bs.rat_power_w.items() if bs.rat_active.get(r, False)
        )
    return total


def comm_energy_j(model_bits: float, power_w: float, rate_bps: float) -> float:
    """Transfer energy |theta| * P / R; a zero rate costs +inf."""
    if rate_bps <= 0:
        return math.inf
    return model_bits * power_w / rate_bps


def fl_round_energy_j(params: FlEnergyParams, up_j: float, down_j: float, local_epochs=None) -> float:
    tau = params.local_epochs if local_epochs is None else local_epochs
    return params.comp_energy_per_epoch * tau + up_j + down_j
