"""PRB allocation policies for a two-class (voice / eMBB) cell.

Shares are continuous per-client PRB counts; :func:`quantize` turns them into
an integer grant per client before the radio layer sees them.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np


class EmptyCellError(ValueError):
    pass


class OverReservationError(ValueError):
    pass


class PolicyId(enum.IntEnum):
    EQUAL = 0
    VOICE_PRIORITY = 1
    EMBB_PRIORITY = 2
    DEDICATED_RESERVATION = 3

    @property
    def label(self) -> str:
        return f"P{self.value + 1}"

    @classmethod
    def parse(cls, text: str) -> "PolicyId":
        text = text.strip().upper()
        if text.startswith("P") and text[1:].isdigit():
            return cls(int(text[1:]) - 1)
        return cls[text]


@dataclass(frozen=True)
class PolicyParams:
    m_voice: float = 2.0
    k_embb: float = 4.0
    alpha_v: float = 0.3
    beta_e: float = 0.7

    def __post_init__(self):
        for name in ("m_voice", "k_embb", "alpha_v", "beta_e"):
            if not getattr(self, name) > 0:
                raise ValueError(f"policy.{name} must be > 0")
        if self.alpha_v >= 1 or self.beta_e >= 1:
            raise ValueError("policy.alpha_v and policy.beta_e must be < 1")
        if self.alpha_v + self.beta_e > 1 + 1e-12:
            raise OverReservationError(
                f"over-reservation: alpha_v + beta_e = {self.alpha_v + self.beta_e:g} > 1"
            )


@dataclass(frozen=True)
class PrbAllocation:
    prb_per_voice_client: float
    prb_per_embb_client: float
    policy_used: PolicyId

    def total(self, n_voice: int, n_embb: int) -> float:
        return n_voice * self.prb_per_voice_client + n_embb * self.prb_per_embb_client


def _check_counts(prb_s, n_voice, n_embb):
    if n_voice < 0 or n_embb < 0 or prb_s < 0:
        raise ValueError("counts and PRB budget must be non-negative")
    if n_voice + n_embb < 1:
        raise EmptyCellError("empty cell")


def equal_allocation(prb_s, n_voice, n_embb) -> PrbAllocation:
    _check_counts(prb_s, n_voice, n_embb)
    share = prb_s / (n_voice + n_embb)
    return PrbAllocation(
        share if n_voice else 0.0, share if n_embb else 0.0, PolicyId.EQUAL
    )


def voice_priority(prb_s, n_voice, n_embb, m_voice) -> PrbAllocation:
    _check_counts(prb_s, n_voice, n_embb)
    embb = prb_s / (m_voice * n_voice + n_embb)
    return PrbAllocation(
        m_voice * embb if n_voice else 0.0,
        embb if n_embb else 0.0,
        PolicyId.VOICE_PRIORITY,
    )


def embb_priority(prb_s, n_voice, n_embb, k_embb) -> PrbAllocation:
    _check_counts(prb_s, n_voice, n_embb)
    voice = prb_s / (n_voice + k_embb * n_embb)
    return PrbAllocation(
        voice if n_voice else 0.0,
        k_embb * voice if n_embb else 0.0,
        PolicyId.EMBB_PRIORITY,
    )


def dedicated_reservation(prb_s, n_voice, n_embb, alpha_v, beta_e) -> PrbAllocation:
    """Fixed pool fractions per class; an empty class's pool stays unused."""
    if alpha_v + beta_e > 1 + 1e-12:
        raise OverReservationError(f"over-reservation: alpha_v + beta_e = {alpha_v + beta_e:g} > 1")
    _check_counts(prb_s, n_voice, n_embb)
    return PrbAllocation(
        alpha_v * prb_s / n_voice if n_voice else 0.0,
        beta_e * prb_s / n_embb if n_embb else 0.0,
        PolicyId.DEDICATED_RESERVATION,
    )


def apply_policy(policy: PolicyId, prb_s, n_voice, n_embb, params: PolicyParams) -> PrbAllocation:
    policy = PolicyId(policy)
    if policy is PolicyId.EQUAL:
        return equal_allocation(prb_s, n_voice, n_embb)
    if policy is PolicyId.VOICE_PRIORITY:
        return voice_priority(prb_s, n_voice, n_embb, params.m_voice)
    if policy is PolicyId.EMBB_PRIORITY:
        return embb_priority(prb_s, n_voice, n_embb, params.k_embb)
    return dedicated_reservation(prb_s, n_voice, n_embb, params.alpha_v, params.beta_e)


def quantize(alloc: PrbAllocation, prb_s: int, n_voice: int, n_embb: int) -> np.ndarray:
    """Integer PRBs per client, voice clients first then eMBB, in id order.

    Every client gets the floor of its share; the whole PRBs left over from
    the continuous total are handed out one each, in that same order, to
    clients whose share was not already integral.
    """
    shares = np.concatenate(
        [np.full(n_voice, alloc.prb_per_voice_client), np.full(n_embb, alloc.prb_per_embb_client)]
    )
    grant = np.floor(shares + 1e-9).astype(np.int64)
    budget = min(int(prb_s), int(math.floor(float(shares.sum()) + 1e-9)))
    spare = budget - int(grant.sum())
    if spare > 0:
        # only clients with a fractional remainder are topped up
        fractional = np.flatnonzero(shares - grant > 1e-9)
        grant[fractional[:spare]] += 1
    return grant
