"""Run metrics and the per-packet energy model, computed from event traces.

Per-packet energy follows the usual attempt-count model: each attempt
costs its airtime plus whatever time the two receive windows stayed open.
Radio-switching and guard energies are not counted.
"""

from __future__ import annotations

import csv
import io
import math
from collections import defaultdict
from dataclasses import dataclass, fields
from statistics import fmean
from typing import Iterable, Sequence

from .errors import ConfigError, DomainError, TraceIntegrityError
from .phy import RadioConfig, airtime

METRICS_CSV_COLUMNS = [
    "scenario", "seed", "protocol", "nodes", "booster_frac", "prr", "pdr", "mean_attempts",
    "latency_s", "bitrate_bps", "energy_mj", "cad_det", "cad_rx", "booster_mj_per_bit",
    "lost_ack_ratio",
]


@dataclass(frozen=True)
class EnergyProfile:
    """Radio power draw per state, in watts (J/s).

    Defaults put one 43-byte sf10 frame plus both receive windows at about
    0.117 J, so a packet needing five attempts costs roughly 0.6 J.
    """

    e_air_per_s: float = 0.25
    e_rx_per_s: float = 0.0356
    e_cad_per_s: float = 0.018
    e_sleep_per_s: float = 0.0

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ConfigError("must be >= 0", f"energy.{f.name}")
        if self.e_cad_per_s > self.e_rx_per_s:
            raise ConfigError("CAD cannot draw more than receive", "energy.e_cad_per_s")


def packet_energy(n_attempt: int, e_air: float, e_rx1: float, e_rx2: float) -> float:
    if n_attempt < 1:
        raise DomainError("n_attempt must be >= 1")
    if min(e_air, e_rx1, e_rx2) < 0:
        raise DomainError("energies must be >= 0")
    return n_attempt * (e_air + e_rx1 + e_rx2)


def window_energies(cfg: RadioConfig, timing, profile: EnergyProfile, payload_bytes: int,
                    rx1_open_s: float | None = None, rx2_open_s: float | None = None):
    """Energy of one attempt's airtime and its two receive windows.

    Window durations default to the full planned windows; pass the measured
    open time when a window closed early or stretched to finish a frame.
    """
    rx1 = timing.rx_window if rx1_open_s is None else rx1_open_s
    rx2 = timing.rx2_window if rx2_open_s is None else rx2_open_s
    return (
        profile.e_air_per_s * airtime(payload_bytes, cfg),
        profile.e_rx_per_s * rx1,
        profile.e_rx_per_s * rx2,
    )


@dataclass
class RunMetrics:
    prr: float
    pdr: float
    mean_attempts: float
    mean_e2e_latency_s: float
    effective_bitrate_bps: float
    energy_per_packet_j: float
    cad_detection_accuracy: float
    cad_reception_accuracy: float
    booster_overhead_j_per_bit: float
    lost_or_unsent_ack_ratio: float
    tx_reception_ratio: float = 0.0
    packets: int = 0

    def csv_row(self, scenario: str, seed: int, protocol: str, nodes: int, booster_frac: float) -> dict:
        def g(x):
            return "nan" if isinstance(x, float) and math.isnan(x) else f"{x:.6g}"

        return {
            "scenario": scenario,
            "seed": seed,
            "protocol": protocol,
            "nodes": nodes,
            "booster_frac": f"{booster_frac:g}",
            "prr": g(self.prr),
            "pdr": g(self.pdr),
            "mean_attempts": g(self.mean_attempts),
            "latency_s": g(self.mean_e2e_latency_s),
            "bitrate_bps": g(self.effective_bitrate_bps),
            "energy_mj": g(self.energy_per_packet_j * 1e3),
            "cad_det": g(self.cad_detection_accuracy),
            "cad_rx": g(self.cad_reception_accuracy),
            "booster_mj_per_bit": g(self.booster_overhead_j_per_bit * 1e3),
            "lost_ack_ratio": g(self.lost_or_unsent_ack_ratio),
        }


def metrics_csv(rows: Iterable[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=METRICS_CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


# trace folding -------------------------------------------------------------


def check_trace(trace: Sequence[dict]) -> dict:
    """Return the run metadata, raising when the trace is not a complete run."""
    if not trace or trace[0].get("kind") != "START":
        raise TraceIntegrityError("trace does not begin with a START record")
    if trace[-1].get("kind") != "END":
        raise TraceIntegrityError("trace is truncated (no END record)")
    last = -math.inf
    for rec in trace:
        if rec["t"] < last:
            raise TraceIntegrityError(f"time goes backwards at t={rec['t']}")
        last = rec["t"]
    return trace[0]["meta"]


def _union_length(intervals: list[tuple[float, float]], lo: float, hi: float) -> float:
    total, cur_s, cur_e = 0.0, None, None
    for s, e in sorted((max(s, lo), min(e, hi)) for s, e in intervals):
        if e <= s:
            continue
        if cur_e is None or s > cur_e:
            if cur_e is not None:
                total += cur_e - cur_s
            cur_s, cur_e = s, e
        else:
            cur_e = max(cur_e, e)
    if cur_e is not None:
        total += cur_e - cur_s
    return total


def node_activity(trace: Sequence[dict]):
    """Per-device airtime and receive-window intervals of the device's own traffic.

    Returns ``(tx, rx)``: dicts from actor to lists of
    ``(start, end, dev_addr, fcnt)``.
    """
    tx, rx = defaultdict(list), defaultdict(list)
    for r in trace:
        if r["actor_role"] != "node":
            continue
        if r["kind"] == "TX_END":
            tx[r["actor"]].append((r["start"], r["t"], r["dev_addr"], r["fcnt"]))
        elif r["kind"] == "RX_WINDOW_CLOSE" and r["window"] is not None:
            rx[r["actor"]].append((r["start"], r["t"], r["dev_addr"], r["fcnt"]))
    return tx, rx


def per_packet_energy(trace: Sequence[dict], profile: EnergyProfile) -> dict:
    """Energy of every packet: its attempts' airtime and window time at profile rates."""
    tx, rx = node_activity(trace)
    out = defaultdict(float)
    for spans, rate in ((tx, profile.e_air_per_s), (rx, profile.e_rx_per_s)):
        for items in spans.values():
            for s, e, dev, fcnt in items:
                out[(dev, fcnt)] += rate * (e - s)
    return dict(out)


def integrated_energy(trace: Sequence[dict], profile: EnergyProfile) -> float:
    """Energy from sweeping each device's radio-state timeline (transmit beats receive)."""
    tx, rx = node_activity(trace)
    total = 0.0
    for actor in set(tx) | set(rx):
        edges = []
        for s, e, *_ in tx.get(actor, []):
            edges += [(s, 0, +1), (e, 0, -1)]
        for s, e, *_ in rx.get(actor, []):
            edges += [(s, 1, +1), (e, 1, -1)]
        edges.sort()
        active = [0, 0]
        prev = None
        for t, which, delta in edges:
            if prev is not None and t > prev:
                if active[0]:
                    total += profile.e_air_per_s * (t - prev)
                elif active[1]:
                    total += profile.e_rx_per_s * (t - prev)
            active[which] += delta
            prev = t
    return total


def compute_metrics(trace: Sequence[dict], config) -> RunMetrics:
    meta = check_trace(trace)
    profile = config.energy
    payload_bits = 8 * config.traffic.payload_bytes
    duration = trace[-1]["t"]
    boosters = set(meta.get("boosters", []))

    sent: dict[tuple, int] = {}
    first_tx: dict[tuple, float] = {}
    attempts = defaultdict(int)
    acked_at: dict[tuple, float] = {}
    received = set()
    node_tx_total = node_tx_delivered = 0
    gw_acks = {}
    node_rx_tx_ids = set()
    probes = hits = captures = 0
    booster_tx_j = defaultdict(float)
    booster_rx_j = defaultdict(float)
    busy = defaultdict(list)
    forwarded_bits = 0

    for r in trace:
        kind, role = r["kind"], r["actor_role"]
        key = (r["dev_addr"], r["fcnt"])
        if kind == "APP_PACKET" and role == "node" and r["outcome"] == "start":
            sent[key] = r["actor"]
        elif kind == "TX_START" and r["outcome"] is None:
            if r["action"] == "uplink":
                attempts[key] += 1
                node_tx_total += 1
                first_tx.setdefault(key, r["t"])
            elif r["action"] == "ack":
                gw_acks[key] = r["tx_id"]
        elif kind == "TX_END":
            if r["actor"] in boosters:
                busy[r["actor"]].append((r["start"], r["t"]))
            if role == "booster":
                booster_tx_j[r["actor"]] += profile.e_air_per_s * (r["t"] - r["start"])
                forwarded_bits += 8 * len(r["frame"]) // 2
        elif kind == "FRAME_ARRIVAL":
            if r["actor"] == -1:
                if r["outcome"] == "delivered":
                    received.add(key)
                    if r["action"] == "uplink":
                        node_tx_delivered += 1
            elif role == "node" and r["outcome"] == "delivered":
                node_rx_tx_ids.update(r["tx_ids"] or [])
            elif role == "booster" and r["window"] is None:
                captures += r["outcome"] == "delivered"
                booster_rx_j[r["actor"]] += profile.e_rx_per_s * (r["t"] - r["start"])
                busy[r["actor"]].append((r["start"], r["t"]))
        elif kind == "RX_WINDOW_CLOSE":
            if r["window"] is not None:
                if r["actor"] in boosters:
                    busy[r["actor"]].append((r["start"], r["t"]))
                if role == "booster":
                    booster_rx_j[r["actor"]] += profile.e_rx_per_s * (r["t"] - r["start"])
            elif role == "node" and r["outcome"] == "acked":
                acked_at[key] = r["t"]
        elif kind == "CAD_TICK" and role == "booster" and r["tx_id"] is not None:
            if r["outcome"] in ("hit", "miss"):
                probes += 1
                hits += r["outcome"] == "hit"

    n_packets = len(sent)
    if n_packets == 0:
        raise TraceIntegrityError("trace holds no packets")
    per_node = defaultdict(lambda: [0, 0])
    for key, actor in sent.items():
        per_node[actor][0] += 1
        per_node[actor][1] += key in acked_at
    energy = per_packet_energy(trace, profile)
    latencies = [acked_at[k] - first_tx[k] for k in acked_at if k in first_tx]
    got = [k for k in sent if k in received]
    gw_acked = sum(1 for k in got if gw_acks.get(k) in node_rx_tx_ids)

    booster_j = 0.0
    for b in boosters:
        hopping = duration - _union_length(busy[b], 0.0, duration)
        booster_j += booster_tx_j[b] + booster_rx_j[b] + profile.e_cad_per_s * max(hopping, 0.0)

    return RunMetrics(
        prr=len(got) / n_packets,
        pdr=fmean(a / s for s, a in per_node.values()),
        mean_attempts=fmean(attempts[k] for k in sent),
        mean_e2e_latency_s=fmean(latencies) if latencies else math.nan,
        effective_bitrate_bps=len(got) * payload_bits / duration if duration > 0 else 0.0,
        energy_per_packet_j=fmean(energy.get(k, 0.0) for k in sent),
        cad_detection_accuracy=hits / probes if probes else 0.0,
        cad_reception_accuracy=captures / probes if probes else 0.0,
        booster_overhead_j_per_bit=booster_j / forwarded_bits if forwarded_bits else (0.0 if not boosters else math.nan),
        lost_or_unsent_ack_ratio=1.0 - gw_acked / len(got) if got else 0.0,
        tx_reception_ratio=node_tx_delivered / node_tx_total if node_tx_total else 0.0,
        packets=n_packets,
    )
