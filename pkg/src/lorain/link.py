"""Abstract radio link: path loss, fading, capture and coherent combining.

Received powers are handled in milliwatts.  All random draws are keyed
hashes of ``(seed, key...)`` rather than a shared stream, so one link's
fate for one transmission does not depend on how many other draws happened
before it.  Two runs of the same scenario that differ only in protocol see
the same fades for the same (link, frame, attempt).
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import Iterable, Sequence

from .errors import ConfigError

SPEED_OF_LIGHT = 299_792_458.0

# demodulation SNR floor per spreading factor (dB)
SNR_MIN_DB = {7: -7.5, 8: -10.0, 9: -12.5, 10: -15.0, 11: -17.5, 12: -20.0}

_STD_NORMAL = NormalDist()


def keyed_uniform(seed: int, *key) -> float:
    """Deterministic uniform draw in (0, 1) from ``seed`` and a hashable key."""
    h = hashlib.blake2b(repr((seed,) + key).encode(), digest_size=8).digest()
    return (struct.unpack("<Q", h)[0] + 0.5) / 2.0**64


def keyed_normal(seed: int, *key) -> float:
    return _STD_NORMAL.inv_cdf(keyed_uniform(seed, *key))


def dbm_to_mw(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0)


def mw_to_dbm(mw: float) -> float:
    return 10.0 * math.log10(mw) if mw > 0 else -math.inf


def noise_floor_dbm(bw: float, noise_figure_db: float) -> float:
    return -174.0 + 10.0 * math.log10(bw) + noise_figure_db


def sensitivity_dbm(sf: int, bw: float, noise_figure_db: float) -> float:
    """Weakest power a receiver demodulates with no interference present."""
    return noise_floor_dbm(bw, noise_figure_db) + SNR_MIN_DB[sf]


@dataclass(frozen=True)
class LinkModel:
    """Log-distance path loss with static shadowing and per-transmission fading.

    ``base_delivery_prob`` is an extra per-link Bernoulli applied on top of
    the capture rule; it stands in for indoor effects the power model misses.
    """

    path_loss_exponent: float = 3.5
    pl_d0_db: float = 40.0
    shadowing_sigma_db: float = 8.0
    rayleigh_fading: bool = True
    base_delivery_prob: float = 1.0
    capture_threshold_db: float = 1.0
    noise_figure_db: float = 6.0
    jitter_ns: float = 1000.0

    def __post_init__(self):
        if self.capture_threshold_db < 0:
            raise ConfigError("must be >= 0", "link.capture_threshold_db")
        if not 0.0 <= self.base_delivery_prob <= 1.0:
            raise ConfigError("must lie in [0, 1]", "link.base_delivery_prob")
        if self.shadowing_sigma_db < 0:
            raise ConfigError("must be >= 0", "link.shadowing_sigma_db")
        if self.jitter_ns < 0:
            raise ConfigError("must be >= 0", "link.jitter_ns")
        if self.path_loss_exponent <= 0:
            raise ConfigError("must be > 0", "link.path_loss_exponent")

    def mean_path_loss_db(self, distance_m: float) -> float:
        return self.pl_d0_db + 10.0 * self.path_loss_exponent * math.log10(max(distance_m, 1.0))

    @staticmethod
    def coherence_window(bw: float) -> float:
        return 1.0 / bw

    def fade(self, seed: int, *key) -> float:
        """Power multiplier of one transmission on one link (unit mean)."""
        if not self.rayleigh_fading:
            return 1.0
        return -math.log(keyed_uniform(seed, "fade", *key))

    def bernoulli(self, seed: int, *key) -> bool:
        if self.base_delivery_prob >= 1.0:
            return True
        return keyed_uniform(seed, "bern", *key) < self.base_delivery_prob


@dataclass(frozen=True)
class Arrival:
    """One transmission as seen by one receiver."""

    tx_id: int
    frame: bytes
    power_mw: float
    start: float
    end: float
    coherence: float
    link_ok: bool = True


@dataclass
class Resolution:
    outcome: dict[int, str]
    groups: list[list[int]] = field(default_factory=list)
    group_power_mw: list[float] = field(default_factory=list)

    def delivered_group(self) -> list[int] | None:
        for g in self.groups:
            if self.outcome[g[0]] == "delivered":
                return g
        return None


def group_arrivals(arrivals: Sequence[Arrival]) -> list[list[Arrival]]:
    """Cluster byte-identical frames whose arrival offsets all fall inside one window.

    Sorting by start then cutting whenever a member would sit a full
    coherence window after the group's first arrival keeps every pairwise
    offset below the window.
    """
    by_frame: dict[bytes, list[Arrival]] = {}
    for a in arrivals:
        by_frame.setdefault(a.frame, []).append(a)
    groups = []
    for members in by_frame.values():
        members = sorted(members, key=lambda a: (a.start, a.tx_id))
        current = [members[0]]
        for a in members[1:]:
            if a.start - current[0].start < min(a.coherence, current[0].coherence):
                current.append(a)
            else:
                groups.append(current)
                current = [a]
        groups.append(current)
    groups.sort(key=lambda g: (g[0].start, g[0].tx_id))
    return groups


def coherent_power(powers: Iterable[float]) -> float:
    return sum(math.sqrt(p) for p in powers) ** 2


def resolve_arrivals(arrivals: Sequence[Arrival], noise_mw: float, capture_threshold_db: float) -> Resolution:
    """Decide which of a set of time-overlapping arrivals one receiver decodes.

    Outcomes per ``tx_id``: ``delivered`` for members of the decoded group,
    ``collided`` when another group or the interference sum wins, ``lost``
    when the strongest group fails on noise or the link Bernoulli alone.
    """
    if not arrivals:
        return Resolution({})
    groups = group_arrivals(arrivals)
    powers = [coherent_power(a.power_mw for a in g) for g in groups]
    total = sum(powers)
    best = max(range(len(groups)), key=lambda i: (powers[i], -i))
    thr = 10.0 ** (capture_threshold_db / 10.0)
    outcome = {}
    for i, g in enumerate(groups):
        for a in g:
            outcome[a.tx_id] = "collided"
    p = powers[best]
    interference = total - p
    unique_best = all(powers[i] < p for i in range(len(groups)) if i != best)
    link_ok = any(a.link_ok for a in groups[best])
    if unique_best and p >= (interference + noise_mw) * thr and link_ok:
        verdict = "delivered"
    elif p < noise_mw * thr or not link_ok:
        verdict = "lost"
    else:
        verdict = "collided"
    for a in groups[best]:
        outcome[a.tx_id] = verdict
    return Resolution(outcome, [[a.tx_id for a in g] for g in groups], powers)
