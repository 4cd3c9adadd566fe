"""Booster role: eavesdrop uplinks, boost retransmissions, relay missed ACKs.

A booster is an ordinary end device that, between its own packets, hops
channel activity detection over the uplink channels.  Once it captures an
uplink it watches the node's two receive windows.  Without an ACK it sends
a byte-identical copy of the node's next attempt at the same instant, so
both arrive at the gateway within one chip and add up.  With an ACK it
waits for the node's next attempt; a repeat of the same counter means the
node missed the ACK, which the booster then replays in the node's windows.

The radio is single-threaded, so every commitment is a reservation on an
agenda.  The device's own traffic has priority and cancels overlapping
reservations.
"""

from __future__ import annotations

import enum
import itertools
import math
from collections import deque
from dataclasses import dataclass, field, replace

from .errors import IntegrityError, LengthError, ProtocolViolation
from .frame import MAX_ATTEMPTS, DEFAULT_KEY, Frame, decode_frame, encode_frame, get_attempt, set_attempt
from .mac import (
    ChannelPlan,
    Datarates,
    EventKind,
    Listen,
    NodeState,
    Note,
    SimEvent,
    TimingPlan,
    Transmit,
    next_uplink_channel,
    rx1_channel,
)
from .phy import RadioConfig, airtime, cad_duration


class BoosterPhase(enum.Enum):
    HOPPING_CAD = "HOPPING_CAD"
    RECEIVING_UPLINK = "RECEIVING_UPLINK"
    WATCH_ACK = "WATCH_ACK"
    ARMED_BOOST = "ARMED_BOOST"
    ARMED_RELAY = "ARMED_RELAY"
    OWN_TX = "OWN_TX"


@dataclass(frozen=True)
class Reservation:
    start: float
    end: float
    token: int
    purpose: str
    dev_addr: int | None = None


@dataclass(frozen=True)
class Capture:
    """Ask the engine to deliver uplink ``tx_id`` to this booster at its end."""

    actor: int
    tx_id: int
    token: int


@dataclass(frozen=True)
class ListenFor:
    """Ask the engine for a CAD probe at ``time`` on ``channel`` (expected retry)."""

    actor: int
    time: float
    channel: int
    token: int


@dataclass
class Transaction:
    dev_addr: int
    frame: Frame
    channel: int
    tx_end: float
    phase: BoosterPhase
    ack: bytes | None = None
    tokens: set = field(default_factory=set)
    blind: bool = False


@dataclass
class BoosterState:
    actor: int
    own: NodeState
    phase: BoosterPhase = BoosterPhase.HOPPING_CAD
    cad_channel: int = 0
    cad_origin: float = 0.0
    agenda: list = field(default_factory=list)
    transactions: dict = field(default_factory=dict)
    prev_observed: dict = field(default_factory=dict)
    acks: dict = field(default_factory=dict)
    key: bytes = DEFAULT_KEY
    _tokens: itertools.count = field(default_factory=lambda: itertools.count(1), repr=False)

    def new_token(self) -> int:
        return next(self._tokens)

    def is_free(self, start: float, end: float) -> bool:
        return all(end <= r.start or start >= r.end for r in self.agenda)

    def reserve(self, start, end, purpose, dev_addr=None) -> int | None:
        if not self.is_free(start, end):
            return None
        token = self.new_token()
        self.agenda.append(Reservation(start, end, token, purpose, dev_addr))
        return token

    def holds(self, token: int | None) -> bool:
        return token is not None and any(r.token == token for r in self.agenda)

    def extend(self, token: int, end: float) -> bool:
        """Stretch reservation ``token`` to ``end`` if nothing else is booked there."""
        mine = next((r for r in self.agenda if r.token == token), None)
        if mine is None:
            return False
        if end <= mine.end:
            return True
        if not all(end <= r.start or mine.end >= r.end for r in self.agenda if r.token != token):
            return False
        self.agenda = [replace(r, end=end) if r.token == token else r for r in self.agenda]
        return True

    def release(self, token: int) -> None:
        self.agenda = [r for r in self.agenda if r.token != token]

    def prune(self, now: float) -> None:
        self.agenda = [r for r in self.agenda if r.end > now]

    def observe(self, dev_addr: int, fcnt: int, attempt: int) -> None:
        self.prev_observed.setdefault(dev_addr, deque(maxlen=2)).append((fcnt, attempt))


# decision rules ------------------------------------------------------------


def should_boost(stored: Frame, ack_observed: bool, node_ack_received: bool = False) -> bool:
    return not ack_observed and not node_ack_received and get_attempt(stored) < MAX_ATTEMPTS


def should_relay_ack(prev, curr, ack_captured: bool, node_got_ack: bool = False) -> bool:
    if prev is None or curr is None:
        return False
    return ack_captured and not node_got_ack and prev[0] == curr[0] and curr[1] > prev[1]


def boost_transmission(stored: Frame, stored_channel: int, stored_tx_end: float, timing: TimingPlan,
                       plan: ChannelPlan, actor: int, key: bytes = DEFAULT_KEY) -> Transmit:
    """The node's next attempt, rebuilt byte for byte, at the node's retry instant."""
    attempt = get_attempt(stored) + 1
    frame = set_attempt(stored, attempt)
    return Transmit(
        actor=actor,
        time=stored_tx_end + timing.retry_delay,
        frame=encode_frame(frame, key),
        channel=next_uplink_channel(stored_channel, plan),
        link="up",
        action="boost",
        role="booster",
        dev_addr=stored.dev_addr,
        fcnt=stored.fcnt,
        attempt=attempt,
    )


def relay_ack(ack_bytes: bytes, uplink_end: float, uplink_channel: int, timing: TimingPlan,
              plan: ChannelPlan, actor: int, dev_addr: int, fcnt: int, attempt: int) -> list[Transmit]:
    """Replay a captured ACK into both receive windows of the node's latest attempt.

    The booster cannot see whether the node decoded the Rx1 copy, so the Rx2
    copy is always sent.
    """
    common = dict(actor=actor, frame=bytes(ack_bytes), role="booster", dev_addr=dev_addr,
                  fcnt=fcnt, attempt=attempt)
    return [
        Transmit(time=uplink_end + timing.receive_delay1, channel=rx1_channel(uplink_channel, plan),
                 link="rx1", action="relay_rx1", **common),
        Transmit(time=uplink_end + timing.receive_delay2, channel=plan.rx2_channel,
                 link="rx2", action="relay_rx2", **common),
    ]


def cad_tick_time(state: BoosterState, channel: int, not_before: float, cfg: RadioConfig,
                  plan: ChannelPlan) -> float:
    """First tick of the round-robin hop grid that probes ``channel`` at or after ``not_before``.

    Tick ``k`` starts at ``origin + k * cad_duration`` and probes channel
    ``(cad_channel + k) mod N``.
    """
    d = cad_duration(cfg)
    n = plan.n_uplink
    k = max(0, math.ceil((not_before - state.cad_origin) / d - 1e-9))
    k += (channel - state.cad_channel - k) % n
    return state.cad_origin + k * d


def cad_channel_at(state: BoosterState, t: float, cfg: RadioConfig, plan: ChannelPlan) -> int:
    k = math.floor((t - state.cad_origin) / cad_duration(cfg) + 1e-9)
    return (state.cad_channel + k) % plan.n_uplink


# state machine -------------------------------------------------------------


def _note(state, t, kind, outcome, dev=None, fcnt=None, attempt=None, channel=None):
    return Note(state.actor, t, kind, outcome, role="booster", fcnt=fcnt, attempt=attempt,
                channel=channel, dev_addr=dev)


def _drop(state: BoosterState, dev_addr: int) -> None:
    txn = state.transactions.pop(dev_addr, None)
    if txn is not None:
        for tok in txn.tokens:
            state.release(tok)


def _watch(state: BoosterState, txn: Transaction, timing: TimingPlan, plan: ChannelPlan,
           rates: Datarates) -> list:
    """Reserve and open both ACK watch windows after ``txn.tx_end``; drops the txn on conflict."""
    # only the preamble-detection part is booked; a locked ACK extends it
    spans = []
    for window, link, delay in ((1, "rx1", timing.receive_delay1), (2, "rx2", timing.receive_delay2)):
        start = txn.tx_end + delay
        spans.append((window, link, start, start + timing.window_length(window)))
    if not all(state.is_free(s, e) for _, _, s, e in spans):
        _drop(state, txn.dev_addr)
        return [_note(state, txn.tx_end, EventKind.RX1_OPEN, "no_watch", txn.dev_addr,
                      txn.frame.fcnt, get_attempt(txn.frame), txn.channel)]
    txn.phase = BoosterPhase.WATCH_ACK
    txn.ack = None
    actions = []
    for window, link, s, e in spans:
        tok = state.reserve(s, e, f"watch{window}", txn.dev_addr)
        txn.tokens.add(tok)
        channel = rx1_channel(txn.channel, plan) if window == 1 else plan.rx2_channel
        actions.append(Listen(state.actor, s, channel, link, timing.window_length(window), window,
                              role="booster", fcnt=txn.frame.fcnt, attempt=get_attempt(txn.frame),
                              token=tok))
    return actions


def _release_waits(state: BoosterState, txn: Transaction) -> None:
    """Free the watch/listen reservations of ``txn``; scheduled transmissions stay."""
    for r in list(state.agenda):
        if r.token in txn.tokens and r.purpose in ("watch1", "watch2", "listen"):
            state.release(r.token)
            txn.tokens.discard(r.token)


def _arm_probe(state, txn, now, timing, plan, rates, phase) -> list:
    """Listen for the node's next attempt at its known retry instant."""
    attempt = get_attempt(txn.frame)
    _release_waits(state, txn)
    if attempt >= MAX_ATTEMPTS:
        _drop(state, txn.dev_addr)
        return []
    t = txn.tx_end + timing.retry_delay
    channel = next_uplink_channel(txn.channel, plan)
    length = len(encode_frame(txn.frame, state.key))
    tok = state.reserve(t, t + airtime(length, rates.up) + 1e-3, "listen", txn.dev_addr)
    if tok is None:
        _drop(state, txn.dev_addr)
        return [_note(state, now, EventKind.CAD_TICK, "no_listen", txn.dev_addr, txn.frame.fcnt,
                      attempt, channel)]
    txn.tokens.add(tok)
    txn.phase = phase
    # probe one symbol into the expected preamble
    return [ListenFor(state.actor, t + rates.up.symbol_time, channel, tok)]


def _arm_relay(state, txn, now, timing, plan, rates) -> list:
    return _arm_probe(state, txn, now, timing, plan, rates, BoosterPhase.ARMED_RELAY)


def _arm_boost(state, txn, now, timing, plan, rates) -> list:
    _release_waits(state, txn)
    tx = boost_transmission(txn.frame, txn.channel, txn.tx_end, timing, plan, state.actor, state.key)
    tok = state.reserve(tx.time - 1e-5, tx.time + airtime(len(tx.frame), rates.up) + 1e-5, "boost",
                        txn.dev_addr)
    if tok is None:
        _drop(state, txn.dev_addr)
        return [_note(state, now, EventKind.RETRY_DUE, "no_boost", txn.dev_addr, txn.frame.fcnt,
                      get_attempt(txn.frame), txn.channel)]
    txn.tokens.add(tok)
    txn.phase = BoosterPhase.ARMED_BOOST
    return [Transmit(**{**tx.__dict__, "token": tok})]


def _on_uplink(state, ev, timing, plan, rates) -> list:
    try:
        f = decode_frame(ev.frame, state.key)
        attempt = get_attempt(f)
    except (IntegrityError, LengthError, ValueError):
        return []
    if not f.is_uplink or f.dev_addr == state.own.dev_addr:
        # the device already knows its own ACK state
        state.release(ev.token)
        return []
    state.observe(f.dev_addr, f.fcnt, attempt)
    obs = state.prev_observed[f.dev_addr]
    txn = state.transactions.get(f.dev_addr)
    if txn is not None and txn.phase == BoosterPhase.ARMED_RELAY and ev.token in txn.tokens:
        prev = obs[-2] if len(obs) == 2 else None
        if should_relay_ack(prev, obs[-1], txn.ack is not None):
            state.release(ev.token)
            txn.tokens.discard(ev.token)
            return _relay(state, txn, f, ev, timing, plan, rates)
        same_packet = prev is not None and prev[0] == f.fcnt
        _drop(state, f.dev_addr)
        if same_packet:
            return [_note(state, ev.time, EventKind.FRAME_ARRIVAL, "no_relay", f.dev_addr, f.fcnt,
                          attempt, ev.channel)]
        # a fresh counter: the node got its ACK, start over with the new packet
    elif txn is not None:
        _drop(state, f.dev_addr)
    state.release(ev.token)
    txn = Transaction(f.dev_addr, f, ev.channel, ev.time, BoosterPhase.WATCH_ACK)
    state.transactions[f.dev_addr] = txn
    held = state.acks.get(f.dev_addr)
    if held is not None and held[0] == f.fcnt:
        # a retry of a packet whose ACK we already hold: the node missed it
        txn.ack = held[1]
        return _relay(state, txn, f, ev, timing, plan, rates)
    return _watch(state, txn, timing, plan, rates)


def _relay(state, txn, f, ev, timing, plan, rates) -> list:
    txn.frame = f
    txn.channel = ev.channel
    txn.tx_end = ev.time
    actions = []
    for r in relay_ack(txn.ack, ev.time, ev.channel, timing, plan, state.actor, f.dev_addr, f.fcnt,
                       get_attempt(f)):
        tok = state.reserve(r.time - 1e-5, r.time + airtime(len(r.frame), rates[r.link]) + 1e-5,
                            r.action, f.dev_addr)
        if tok is not None:
            txn.tokens.add(tok)
            actions.append(Transmit(**{**r.__dict__, "token": tok}))
    # keep listening in case the relay is missed too
    return actions + _arm_relay(state, txn, ev.time, timing, plan, rates)


def booster_on_event(state: BoosterState, ev: SimEvent, timing: TimingPlan, plan: ChannelPlan,
                     rates: Datarates):
    """Advance the booster role by one event; returns ``(state, actions)``.

    Events for the device's own traffic go to :func:`node_on_event` on
    ``state.own`` instead.
    """
    state.prune(ev.time - 10.0)
    k = ev.kind

    if k == EventKind.CAD_TICK:
        if ev.token is not None:
            # probe for an expected retry while holding a captured ACK
            txn = next((t for t in state.transactions.values() if ev.token in t.tokens), None)
            if txn is None:
                return state, []
            if ev.tx_id is None or ev.frame is None:
                _drop(state, txn.dev_addr)
                state.phase = BoosterPhase.HOPPING_CAD
                return state, [_note(state, ev.time, k, "miss", txn.dev_addr, txn.frame.fcnt,
                                     get_attempt(txn.frame), ev.channel)]
            state.phase = BoosterPhase.RECEIVING_UPLINK
            return state, [_note(state, ev.time, k, "hit", channel=ev.channel),
                           Capture(state.actor, ev.tx_id, ev.token)]
        if not state.is_free(ev.time, ev.time + cad_duration(rates.up)):
            return state, []
        if ev.frame is None:
            return state, [_note(state, ev.time, k, "miss", channel=ev.channel)]
        tok = state.reserve(ev.time, ev.until, "rx_uplink")
        if tok is None:
            return state, [_note(state, ev.time, k, "busy", channel=ev.channel)]
        state.phase = BoosterPhase.RECEIVING_UPLINK
        return state, [_note(state, ev.time, k, "hit", channel=ev.channel),
                       Capture(state.actor, ev.tx_id, tok)]

    if k == EventKind.FRAME_ARRIVAL:
        if ev.window is None:
            # end of a captured uplink
            state.phase = BoosterPhase.HOPPING_CAD
            if ev.frame is None:
                txn = next((t for t in state.transactions.values() if ev.token in t.tokens), None)
                state.release(ev.token)
                if txn is not None:
                    _drop(state, txn.dev_addr)
                return state, []
            return state, _on_uplink(state, ev, timing, plan, rates)
        txn = next((t for t in state.transactions.values() if ev.token in t.tokens), None)
        if txn is None or ev.frame is None:
            return state, []
        try:
            f = decode_frame(ev.frame, state.key)
        except (IntegrityError, LengthError):
            return state, []
        if f.is_ack and f.dev_addr == txn.dev_addr:
            txn.ack = bytes(ev.frame)
            state.acks[txn.dev_addr] = (txn.frame.fcnt, txn.ack)
        return state, []

    if k == EventKind.RX_WINDOW_CLOSE:
        txn = next((t for t in state.transactions.values() if ev.token in t.tokens), None)
        if txn is None:
            return state, []
        state.release(ev.token)
        txn.tokens.discard(ev.token)
        state.phase = BoosterPhase.HOPPING_CAD
        if txn.ack is not None:
            return state, _arm_relay(state, txn, ev.time, timing, plan, rates)
        if ev.window == 1:
            return state, []
        if txn.blind:
            # our last boost may have copied a node that already stopped, so
            # make sure it is still retrying before boosting again
            return state, _arm_probe(state, txn, ev.time, timing, plan, rates, BoosterPhase.WATCH_ACK)
        held = state.acks.get(txn.dev_addr)
        if should_boost(txn.frame, ack_observed=held is not None and held[0] == txn.frame.fcnt):
            return state, _arm_boost(state, txn, ev.time, timing, plan, rates)
        _drop(state, txn.dev_addr)
        return state, []

    if k == EventKind.TX_END:
        txn = next((t for t in state.transactions.values() if ev.token in t.tokens), None)
        state.release(ev.token)
        if txn is None or txn.phase != BoosterPhase.ARMED_BOOST:
            return state, []
        txn.tokens.discard(ev.token)
        # the boost stands in for the node's attempt it copied
        txn.frame = set_attempt(txn.frame, get_attempt(txn.frame) + 1)
        txn.channel = ev.channel
        txn.tx_end = ev.time
        txn.blind = True
        state.observe(txn.dev_addr, txn.frame.fcnt, get_attempt(txn.frame))
        state.phase = BoosterPhase.HOPPING_CAD
        return state, _watch(state, txn, timing, plan, rates)

    if k == EventKind.TX_START:
        return state, []

    raise ProtocolViolation(f"booster cannot handle {k.name}")


def preempt(state: BoosterState, start: float, end: float) -> list:
    """Give ``[start, end]`` to the device's own traffic, cancelling booster work there."""
    hit = [r for r in state.agenda if not (end <= r.start or start >= r.end) and r.purpose != "own"]
    notes = []
    for r in hit:
        state.release(r.token)
        txn = next((t for t in state.transactions.values() if r.token in t.tokens), None)
        if txn is not None:
            _drop(state, txn.dev_addr)
            notes.append(_note(state, start, EventKind.TX_START, "preempted", txn.dev_addr,
                               txn.frame.fcnt, get_attempt(txn.frame)))
    own = state.new_token()
    state.agenda.append(Reservation(start, end, own, "own"))
    state.phase = BoosterPhase.OWN_TX
    return notes
