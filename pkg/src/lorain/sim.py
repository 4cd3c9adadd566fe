"""Discrete-event engine tying nodes, boosters, the gateway and the medium together.

The engine owns the event queue and the medium.  Node, booster and server
logic live in their own modules and only return actions; the engine turns
those into transmissions, receive windows and further events, and records
everything in a trace (a list of flat dicts, one per record).

Events are ordered by ``(time, actor, kind)`` and then by insertion, which
makes a run a pure function of ``(config, seed)``.
"""

from __future__ import annotations

import heapq
import itertools
import json
import math
import os
import tempfile
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

from .booster import (
    BoosterState,
    Capture,
    ListenFor,
    booster_on_event,
    cad_tick_time,
    preempt,
)
from .config import ScenarioConfig
from .errors import IntegrityError, LengthError, TraceIntegrityError
from .frame import decode_frame, get_attempt
from .link import (
    SPEED_OF_LIGHT,
    Arrival,
    dbm_to_mw,
    keyed_normal,
    keyed_uniform,
    mw_to_dbm,
    noise_floor_dbm,
    resolve_arrivals,
    sensitivity_dbm,
    SNR_MIN_DB,
)
from .mac import (
    GATEWAY_ACTOR,
    EventKind,
    Listen,
    NodeState,
    Note,
    Schedule,
    ServerState,
    SimEvent,
    Transmit,
    node_on_event,
    server_on_uplink,
)
from .phy import airtime, cad_duration

DEV_ADDR_BASE = 0x26000000
WINDOW_LOCK_TOLERANCE_S = 1e-4
ACK_BYTES = 12

TRACE_KEYS = ("t", "kind", "actor", "actor_role", "action", "channel", "dev_addr", "fcnt",
              "attempt", "window", "outcome", "rx_power_dbm", "tx_id", "tx_ids", "start", "frame")


@dataclass
class TxRecord:
    tx_id: int
    actor: int
    role: str
    action: str
    frame: bytes
    channel: int
    link: str
    start: float
    end: float
    dev_addr: int | None
    fcnt: int | None
    attempt: int | None
    token: int | None = None
    cancelled: bool = False


@dataclass
class ListenRecord:
    listen_id: int
    actor: int
    role: str
    channel: int
    link: str
    start: float
    duration: float
    window: int
    token: int | None
    fcnt: int | None
    attempt: int | None
    lock_start: float | None = None
    cancelled: bool = False


class Simulation:
    def __init__(self, cfg: ScenarioConfig, seed: int):
        self.cfg = cfg
        self.seed = int(seed)
        self.rates = cfg.datarates
        self.timing = cfg.timing_plan
        self.plan = cfg.channels
        self.link = cfg.link
        self.cad_d = cad_duration(cfg.radio)
        self.preamble_s = cfg.radio.preamble_symbols * cfg.radio.symbol_time

        n = cfg.nodes
        half = cfg.topology.area_m / 2
        self.pos = {GATEWAY_ACTOR: (cfg.topology.gateway_distance_m, 0.0)}
        for i in range(n):
            self.pos[i] = (
                (keyed_uniform(self.seed, "pos", i, 0) * 2 - 1) * half,
                (keyed_uniform(self.seed, "pos", i, 1) * 2 - 1) * half,
            )
        self.dev_addr = {i: DEV_ADDR_BASE + i for i in range(n)}
        self._pl_cache: dict = {}
        self._power_cache: dict = {}

        ranked = sorted(range(n), key=lambda i: (self.path_loss_db(i, GATEWAY_ACTOR), i))
        self.booster_ids = sorted(ranked[: cfg.booster_count])

        self.nodes: dict[int, NodeState] = {}
        self.boosters: dict[int, BoosterState] = {}
        for i in range(n):
            st = NodeState(actor=i, dev_addr=self.dev_addr[i],
                           resubmit_failed=cfg.traffic.resubmit_failed)
            st.channel = int(keyed_uniform(self.seed, "ch0", i) * self.plan.n_uplink)
            self.nodes[i] = st
        for b in self.booster_ids:
            self.boosters[b] = BoosterState(
                actor=b,
                own=self.nodes[b],
                cad_channel=int(keyed_uniform(self.seed, "cadch", b) * self.plan.n_uplink),
                cad_origin=keyed_uniform(self.seed, "cad0", b) * self.cad_d,
            )

        self.server = ServerState()
        self.queue: list = []
        self._seq = itertools.count()
        self._ids = itertools.count()
        self.txs: dict[int, TxRecord] = {}
        self.on_air: dict[tuple, list[int]] = defaultdict(list)
        self.listens: dict[int, ListenRecord] = {}
        self.captures: dict[int, list] = defaultdict(list)
        self.gw_resolved: set[int] = set()
        self.trace: list[dict] = []
        self.now = 0.0

    # geometry and power --------------------------------------------------

    def distance(self, a: int, b: int) -> float:
        (xa, ya), (xb, yb) = self.pos[a], self.pos[b]
        return math.hypot(xa - xb, ya - yb)

    def path_loss_db(self, a: int, b: int) -> float:
        key = (min(a, b), max(a, b))
        pl = self._pl_cache.get(key)
        if pl is None:
            shadow = self.link.shadowing_sigma_db * keyed_normal(self.seed, "shadow", *key)
            pl = self.link.mean_path_loss_db(self.distance(a, b)) + shadow
            self._pl_cache[key] = pl
        return pl

    def _draw_key(self, tx: TxRecord, receiver: int) -> tuple:
        if tx.action == "ack":
            # independent of which attempt the gateway happened to catch
            return ("ack", receiver, tx.dev_addr, tx.fcnt, tx.link)
        return (tx.action, tx.actor, receiver, tx.dev_addr, tx.fcnt, tx.attempt, tx.link)

    def rx_power_dbm(self, tx: TxRecord, receiver: int) -> float:
        key = (tx.tx_id, receiver)
        p = self._power_cache.get(key)
        if p is None:
            power = self.cfg.downlink.gateway_power_dbm if tx.actor == GATEWAY_ACTOR else self.cfg.radio.tx_power_dbm
            fade = self.link.fade(self.seed, *self._draw_key(tx, receiver))
            p = power - self.path_loss_db(tx.actor, receiver) + (10 * math.log10(fade) if fade > 0 else -math.inf)
            self._power_cache[key] = p
        return p

    def link_ok(self, tx: TxRecord, receiver: int) -> bool:
        return self.link.bernoulli(self.seed, *self._draw_key(tx, receiver))

    def arrival_window(self, tx: TxRecord, receiver: int) -> tuple[float, float]:
        delay = self.distance(tx.actor, receiver) / SPEED_OF_LIGHT
        return tx.start + delay, tx.end + delay

    def noise_mw(self, link: str) -> float:
        c = self.rates[link]
        return dbm_to_mw(noise_floor_dbm(c.bw, self.link.noise_figure_db) + SNR_MIN_DB[c.sf])

    def sensitivity(self, link: str) -> float:
        c = self.rates[link]
        return sensitivity_dbm(c.sf, c.bw, self.link.noise_figure_db)

    # trace ----------------------------------------------------------------

    def record(self, t, kind, actor, role, **kw) -> None:
        rec = dict.fromkeys(TRACE_KEYS)
        rec.update(t=t, kind=kind, actor=actor, actor_role=role)
        rec.update(kw)
        self.trace.append(rec)

    def _tx_fields(self, tx: TxRecord) -> dict:
        return dict(action=tx.action, channel=tx.channel, dev_addr=tx.dev_addr, fcnt=tx.fcnt,
                    attempt=tx.attempt, tx_id=tx.tx_id)

    # queue ----------------------------------------------------------------

    def push(self, ev: SimEvent) -> None:
        heapq.heappush(self.queue, (ev.time, ev.actor, int(ev.kind), next(self._seq), ev))

    def run(self) -> list[dict]:
        cfg = self.cfg
        self.record(0.0, "START", None, "engine", outcome=None)
        self.trace[0]["meta"] = {
            "scenario": cfg.name,
            "protocol": cfg.protocol,
            "seed": self.seed,
            "nodes": cfg.nodes,
            "boosters": list(self.booster_ids),
            "dev_addr": {str(i): a for i, a in self.dev_addr.items()},
        }
        payload_len = cfg.traffic.payload_bytes
        for i in range(cfg.nodes):
            offset = keyed_uniform(self.seed, "offset", i) * cfg.traffic.interval_s
            for k in range(cfg.traffic.packets_per_node):
                t = offset + k * cfg.traffic.interval_s
                if i in self.boosters:
                    # own traffic starts on the next CAD boundary
                    b = self.boosters[i]
                    t = b.cad_origin + math.ceil((t - b.cad_origin) / self.cad_d - 1e-12) * self.cad_d
                payload = bytes(int(keyed_uniform(self.seed, "payload", i, k, j) * 256)
                                for j in range(payload_len))
                self.push(SimEvent(t, EventKind.APP_PACKET, i, frame=payload))
        while self.queue:
            t, _, _, _, ev = heapq.heappop(self.queue)
            self.now = t
            self.dispatch(ev)
        self.record(self.now, "END", None, "engine")
        return self.trace

    # dispatch -------------------------------------------------------------

    def dispatch(self, ev: SimEvent) -> None:
        k, role = ev.kind, ev.role
        if role == "node":
            if k in (EventKind.RX1_OPEN, EventKind.RX2_OPEN, EventKind.RETRY_DUE, EventKind.APP_PACKET):
                self.node_event(ev)
                return
        if k == EventKind.TX_START:
            self.tx_start(self.txs[ev.tx_id])
        elif k == EventKind.TX_END:
            self.tx_end(self.txs[ev.tx_id])
        elif k in (EventKind.RX1_OPEN, EventKind.RX2_OPEN) and role == "listen":
            self.open_window(self.listens[ev.ref])
        elif k == EventKind.RX_WINDOW_CLOSE and role == "listen":
            self.window_check(self.listens[ev.ref])
        elif k == EventKind.FRAME_ARRIVAL and role == "listen":
            self.window_resolve(self.listens[ev.ref])
        elif k == EventKind.CAD_TICK:
            self.cad_tick(ev)
        else:
            raise RuntimeError(f"unroutable event {k.name}/{role}")

    def node_event(self, ev: SimEvent) -> None:
        st = self.nodes[ev.actor]
        _, actions = node_on_event(st, ev, self.timing, self.plan)
        self.apply(actions, ev.actor)

    def booster_event(self, ev: SimEvent, extra: dict | None = None) -> None:
        b = self.boosters[ev.actor]
        _, actions = booster_on_event(b, ev, self.timing, self.plan, self.rates)
        self.apply(actions, ev.actor, extra)

    def apply(self, actions, actor: int, extra: dict | None = None) -> None:
        for a in actions:
            if isinstance(a, Note):
                fields = dict(channel=a.channel, dev_addr=a.dev_addr, fcnt=a.fcnt, attempt=a.attempt,
                              outcome=a.outcome)
                if extra and a.kind == EventKind.CAD_TICK:
                    fields.update({k: v for k, v in extra.items() if v is not None})
                self.record(self.now, a.kind.name, a.actor, a.role, **fields)
            elif isinstance(a, Schedule):
                self.push(a.event)
            elif isinstance(a, Transmit):
                self.schedule_tx(a)
            elif isinstance(a, Listen):
                self.schedule_listen(a)
            elif isinstance(a, Capture):
                self.captures[a.tx_id].append((a.actor, a.token, self.now))
            elif isinstance(a, ListenFor):
                self.push(SimEvent(a.time, EventKind.CAD_TICK, a.actor, channel=a.channel,
                                   role="booster", token=a.token))
            else:
                raise RuntimeError(f"unknown action {a!r}")

    # transmissions --------------------------------------------------------

    def schedule_tx(self, a: Transmit) -> None:
        start = a.time
        if a.actor != GATEWAY_ACTOR and self.link.jitter_ns > 0:
            u = keyed_uniform(self.seed, "jit", a.actor, a.action, a.dev_addr, a.fcnt, a.attempt)
            # late only, so the radio never starts before the decision that triggered it
            start += u * self.link.jitter_ns * 1e-9
        end = start + airtime(len(a.frame), self.rates[a.link])
        tx = TxRecord(next(self._ids), a.actor, a.role, a.action, a.frame, a.channel, a.link, start, end,
                      a.dev_addr, a.fcnt, a.attempt, a.token)
        self.txs[tx.tx_id] = tx
        if a.role == "node" and a.actor in self.boosters:
            for note in preempt(self.boosters[a.actor], start - 1e-6, end):
                self.apply([note], a.actor)
        self.push(SimEvent(start, EventKind.TX_START, a.actor, channel=a.channel, role=a.role, tx_id=tx.tx_id))
        self.push(SimEvent(end, EventKind.TX_END, a.actor, channel=a.channel, role=a.role, tx_id=tx.tx_id))

    def tx_start(self, tx: TxRecord) -> None:
        if tx.role == "booster" and not self.boosters[tx.actor].holds(tx.token):
            tx.cancelled = True
            self.record(self.now, "TX_START", tx.actor, tx.role, outcome="cancelled", **self._tx_fields(tx))
            return
        self.on_air[(tx.link, tx.channel)].append(tx.tx_id)
        self.record(self.now, "TX_START", tx.actor, tx.role, frame=tx.frame.hex(), **self._tx_fields(tx))
        if tx.link == "up" and self.boosters:
            self.schedule_hop_ticks(tx)
        if tx.role == "node":
            ev = SimEvent(self.now, EventKind.TX_START, tx.actor, channel=tx.channel, tx_id=tx.tx_id)
            _, actions = node_on_event(self.nodes[tx.actor], ev, self.timing, self.plan)
            self.apply(actions, tx.actor)

    def tx_end(self, tx: TxRecord) -> None:
        if tx.cancelled:
            return
        self.record(self.now, "TX_END", tx.actor, tx.role, start=tx.start, frame=tx.frame.hex(),
                    **self._tx_fields(tx))
        if tx.link == "up":
            if tx.tx_id not in self.gw_resolved:
                self.gateway_receive(tx)
            for b, token, started in self.captures.pop(tx.tx_id, []):
                self.booster_capture(tx, b, token, started)
        if tx.role == "node":
            ev = SimEvent(self.now, EventKind.TX_END, tx.actor, channel=tx.channel, tx_id=tx.tx_id)
            self.node_event_direct(tx.actor, ev)
        elif tx.role == "booster":
            self.booster_event(SimEvent(self.now, EventKind.TX_END, tx.actor, channel=tx.channel,
                                        role="booster", token=tx.token, tx_id=tx.tx_id))
        self._prune()

    def node_event_direct(self, actor: int, ev: SimEvent) -> None:
        _, actions = node_on_event(self.nodes[actor], ev, self.timing, self.plan)
        self.apply(actions, actor)

    def _prune(self) -> None:
        horizon = self.now - 30.0
        for key, ids in self.on_air.items():
            if ids and self.txs[ids[0]].end < horizon:
                self.on_air[key] = [i for i in ids if self.txs[i].end >= horizon]

    def overlapping(self, link: str, channel: int, receiver: int, lo: float, hi: float) -> list[TxRecord]:
        out = []
        for i in self.on_air.get((link, channel), []):
            tx = self.txs[i]
            if tx.actor == receiver or tx.cancelled:
                continue
            s, e = self.arrival_window(tx, receiver)
            if s < hi and e > lo:
                out.append(tx)
        return out

    def resolve(self, txs: list[TxRecord], receiver: int, link: str):
        arrivals = []
        for t in txs:
            s, e = self.arrival_window(t, receiver)
            arrivals.append(Arrival(t.tx_id, t.frame, dbm_to_mw(self.rx_power_dbm(t, receiver)), s, e,
                                    self.link.coherence_window(self.rates[link].bw), self.link_ok(t, receiver)))
        return resolve_arrivals(arrivals, self.noise_mw(link), self.link.capture_threshold_db)

    # gateway --------------------------------------------------------------

    def gateway_receive(self, tx: TxRecord) -> None:
        s, e = self.arrival_window(tx, GATEWAY_ACTOR)
        res = self.resolve(self.overlapping("up", tx.channel, GATEWAY_ACTOR, s, e), GATEWAY_ACTOR, "up")
        group = next(g for g in res.groups if tx.tx_id in g)
        power = res.group_power_mw[res.groups.index(group)]
        for m in group:
            self.gw_resolved.add(m)
            mt = self.txs[m]
            self.record(self.now, "FRAME_ARRIVAL", GATEWAY_ACTOR, "gateway", outcome=res.outcome[m],
                        rx_power_dbm=round(mw_to_dbm(power), 6), tx_ids=sorted(group), **self._tx_fields(mt))
        if res.outcome[tx.tx_id] != "delivered":
            return
        try:
            frame = decode_frame(tx.frame, self.server.key)
        except (IntegrityError, LengthError):
            return
        if not frame.is_uplink:
            return
        act = server_on_uplink(self.server, frame, tx.channel, self.now, self.timing, self.plan, self.rates)
        if act is not None:
            self.apply([act], GATEWAY_ACTOR)

    # booster radio --------------------------------------------------------

    def schedule_hop_ticks(self, tx: TxRecord) -> None:
        for b_id, b in self.boosters.items():
            if b_id == tx.actor:
                continue
            s, _ = self.arrival_window(tx, b_id)
            t = cad_tick_time(b, tx.channel, s, self.cfg.radio, self.plan)
            if t + self.cad_d <= s + self.preamble_s:
                self.push(SimEvent(t, EventKind.CAD_TICK, b_id, channel=tx.channel, role="booster",
                                   tx_id=tx.tx_id))

    def cad_tick(self, ev: SimEvent) -> None:
        b = self.boosters[ev.actor]
        if ev.token is not None:
            if not b.holds(ev.token):
                return
            tx = self.find_preamble(ev.channel, ev.actor, ev.time)
            ev.tx_id = tx.tx_id if tx else None
        else:
            tx = self.txs[ev.tx_id]
            if tx.cancelled:
                return
        extra = {}
        if tx is not None:
            s, e = self.arrival_window(tx, ev.actor)
            ev.until = e
            detected = self.rx_power_dbm(tx, ev.actor) >= self.sensitivity("up")
            ev.frame = tx.frame if detected else None
            extra = dict(tx_id=tx.tx_id, dev_addr=tx.dev_addr, fcnt=tx.fcnt, attempt=tx.attempt,
                         action=tx.action)
        n_before = len(self.trace)
        self.booster_event(ev, extra)
        acted = len(self.trace) > n_before or ev.tx_id in self.captures
        if not acted and ev.token is None and tx is not None:
            # radio busy on this tick; try the channel's next tick inside the preamble
            s, _ = self.arrival_window(tx, ev.actor)
            t = ev.time + self.plan.n_uplink * self.cad_d
            if t + self.cad_d <= s + self.preamble_s:
                self.push(SimEvent(t, EventKind.CAD_TICK, ev.actor, channel=ev.channel, role="booster",
                                   tx_id=tx.tx_id))

    def find_preamble(self, channel: int, receiver: int, t: float) -> TxRecord | None:
        best = None
        for tx in self.overlapping("up", channel, receiver, t, t + self.cad_d):
            s, _ = self.arrival_window(tx, receiver)
            if s <= t and t + self.cad_d <= s + self.preamble_s:
                if best is None or (s, tx.tx_id) < (self.arrival_window(best, receiver)[0], best.tx_id):
                    best = tx
        return best

    def booster_capture(self, tx: TxRecord, b_id: int, token: int, started: float) -> None:
        b = self.boosters[b_id]
        if not b.holds(token):
            return
        s, e = self.arrival_window(tx, b_id)
        res = self.resolve(self.overlapping("up", tx.channel, b_id, s, e), b_id, "up")
        outcome = res.outcome[tx.tx_id]
        group = next(g for g in res.groups if tx.tx_id in g)
        self.record(self.now, "FRAME_ARRIVAL", b_id, "booster", outcome=outcome, start=started,
                    tx_ids=sorted(group), **self._tx_fields(tx))
        self.booster_event(SimEvent(self.now, EventKind.FRAME_ARRIVAL, b_id, channel=tx.channel,
                                    frame=tx.frame if outcome == "delivered" else None,
                                    role="booster", token=token, tx_id=tx.tx_id))

    # receive windows ------------------------------------------------------

    def schedule_listen(self, a: Listen) -> None:
        lr = ListenRecord(next(self._ids), a.actor, a.role, a.channel, a.link, a.time, a.duration,
                          a.window, a.token, a.fcnt, a.attempt)
        self.listens[lr.listen_id] = lr
        if a.role == "node" and a.actor in self.boosters:
            end = a.time + a.duration + airtime(ACK_BYTES, self.rates[a.link])
            for note in preempt(self.boosters[a.actor], a.time, end):
                self.apply([note], a.actor)
        if a.time <= self.now:
            self.open_window(lr)
        else:
            kind = EventKind.RX1_OPEN if a.window == 1 else EventKind.RX2_OPEN
            self.push(SimEvent(a.time, kind, a.actor, role="listen", ref=lr.listen_id))

    def _window_owner_ok(self, lr: ListenRecord) -> bool:
        return lr.role != "booster" or self.boosters[lr.actor].holds(lr.token)

    def open_window(self, lr: ListenRecord) -> None:
        if not self._window_owner_ok(lr):
            lr.cancelled = True
            del self.listens[lr.listen_id]
            return
        kind = "RX1_OPEN" if lr.window == 1 else "RX2_OPEN"
        self.record(self.now, kind, lr.actor, lr.role, channel=lr.channel, window=lr.window,
                    dev_addr=self._dev_of(lr), fcnt=lr.fcnt, attempt=lr.attempt)
        self.push(SimEvent(lr.start + lr.duration, EventKind.RX_WINDOW_CLOSE, lr.actor, role="listen",
                           ref=lr.listen_id))

    def _dev_of(self, lr: ListenRecord):
        if lr.role == "node":
            return self.dev_addr[lr.actor]
        return None

    def window_check(self, lr: ListenRecord) -> None:
        cands = []
        for tx in self.overlapping(lr.link, lr.channel, lr.actor, lr.start - WINDOW_LOCK_TOLERANCE_S,
                                   lr.start + lr.duration + 1.0):
            s, e = self.arrival_window(tx, lr.actor)
            if lr.start - WINDOW_LOCK_TOLERANCE_S <= s <= lr.start + lr.duration:
                cands.append((s, e, tx))
        if not cands:
            self.close_window(lr, None, None, None)
            return
        lr.lock_start = min(s for s, _, _ in cands)
        end = max(e for _, e, _ in cands)
        if lr.role == "booster" and not self.boosters[lr.actor].extend(lr.token, end):
            # radio already promised elsewhere; the frame is abandoned
            self.close_window(lr, None, None, None)
            return
        self.push(SimEvent(max(end, self.now), EventKind.FRAME_ARRIVAL, lr.actor, role="listen",
                           ref=lr.listen_id))

    def window_resolve(self, lr: ListenRecord) -> None:
        txs = self.overlapping(lr.link, lr.channel, lr.actor, lr.lock_start, self.now)
        res = self.resolve(txs, lr.actor, lr.link)
        in_window = {tx.tx_id for tx in txs
                     if lr.start - WINDOW_LOCK_TOLERANCE_S <= self.arrival_window(tx, lr.actor)[0]
                     <= lr.start + lr.duration}
        group = res.delivered_group()
        frame = None
        if group is not None and in_window.intersection(group):
            frame = self.txs[group[0]].frame
            outcome, members = "delivered", group
        else:
            lock = min(in_window, key=lambda i: (self.arrival_window(self.txs[i], lr.actor)[0], i))
            outcome = res.outcome[lock]
            members = next(g for g in res.groups if lock in g)
        power = res.group_power_mw[[set(g) for g in res.groups].index(set(members))]
        first = self.txs[members[0]]
        self.record(self.now, "FRAME_ARRIVAL", lr.actor, lr.role, outcome=outcome, window=lr.window,
                    channel=lr.channel, tx_ids=sorted(members), action=first.action,
                    dev_addr=first.dev_addr, fcnt=lr.fcnt, attempt=lr.attempt, tx_id=first.tx_id,
                    rx_power_dbm=round(mw_to_dbm(power), 6))
        self.close_window(lr, frame, outcome, members)

    def close_window(self, lr: ListenRecord, frame, outcome, members) -> None:
        del self.listens[lr.listen_id]
        self.record(self.now, "RX_WINDOW_CLOSE", lr.actor, lr.role, channel=lr.channel, window=lr.window,
                    start=lr.start, dev_addr=self._dev_of(lr), fcnt=lr.fcnt, attempt=lr.attempt,
                    outcome="frame" if frame is not None else "none")
        tags = dict(channel=lr.channel, fcnt=lr.fcnt, attempt=lr.attempt, window=lr.window)
        if lr.role == "node":
            if outcome is not None:
                self.node_event_direct(lr.actor, SimEvent(self.now, EventKind.FRAME_ARRIVAL, lr.actor,
                                                          frame=frame, **tags))
            self.node_event_direct(lr.actor, SimEvent(self.now, EventKind.RX_WINDOW_CLOSE, lr.actor, **tags))
        else:
            if not self._window_owner_ok(lr):
                return
            if frame is not None:
                self.booster_event(SimEvent(self.now, EventKind.FRAME_ARRIVAL, lr.actor, frame=frame,
                                            role="booster", token=lr.token, **tags))
            self.booster_event(SimEvent(self.now, EventKind.RX_WINDOW_CLOSE, lr.actor, role="booster",
                                        token=lr.token, **tags))


def run(config: ScenarioConfig, seed: int) -> list[dict]:
    """Simulate one scenario; the trace is a pure function of ``(config, seed)``."""
    return Simulation(config, seed).run()


def trace_to_jsonl(trace: list[dict]) -> str:
    return "".join(json.dumps(r, separators=(",", ":")) + "\n" for r in trace)


def write_atomic(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_trace(trace: list[dict], path) -> None:
    write_atomic(path, trace_to_jsonl(trace))


def read_trace(path) -> list[dict]:
    out = []
    with open(path) as fh:
        for n, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise TraceIntegrityError(f"line {n}: {exc.msg}") from None
    if not out or out[-1].get("kind") != "END":
        raise TraceIntegrityError("trace is truncated (no END record)")
    return out
