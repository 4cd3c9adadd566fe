"""Class-A confirmed-uplink MAC: channel plan, receive-slot timing, node and server logic.

The state machines here are plain functions of ``(state, event)`` that
return the actions the simulation engine should carry out.  They never
touch the medium themselves.
"""

from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass, field

from .errors import ConfigError, DomainError, IntegrityError, LengthError, ProtocolViolation
from .frame import (
    DEFAULT_KEY,
    MAX_ATTEMPTS,
    Frame,
    ack,
    decode_frame,
    encode_frame,
    get_attempt,
    set_attempt,
    uplink,
)
from .phy import RadioConfig, airtime

ACK_FRAME_BYTES = 12


class EventKind(enum.IntEnum):
    APP_PACKET = 0
    TX_START = 1
    TX_END = 2
    RX1_OPEN = 3
    RX2_OPEN = 4
    RX_WINDOW_CLOSE = 5
    FRAME_ARRIVAL = 6
    RETRY_DUE = 7
    CAD_TICK = 8


class Phase(enum.Enum):
    IDLE = "IDLE"
    TXING = "TXING"
    WAIT_RX1 = "WAIT_RX1"
    IN_RX1 = "IN_RX1"
    WAIT_RX2 = "WAIT_RX2"
    IN_RX2 = "IN_RX2"
    BACKOFF = "BACKOFF"
    DONE = "DONE"
    FAILED = "FAILED"


@dataclass
class SimEvent:
    time: float
    kind: EventKind
    actor: int
    channel: int | None = None
    frame: bytes | None = None
    rx_power_dbm: float | None = None
    role: str = "node"
    fcnt: int | None = None
    attempt: int | None = None
    window: int | None = None
    tx_id: int | None = None
    token: int | None = None
    until: float | None = None
    ref: int | None = None


# actions -----------------------------------------------------------------


@dataclass(frozen=True)
class Transmit:
    """Put ``frame`` on the air at ``time`` (before jitter).

    ``link`` names the datarate: ``up`` (uplink), ``rx1`` or ``rx2``.
    """

    actor: int
    time: float
    frame: bytes
    channel: int
    link: str
    action: str
    role: str = "node"
    dev_addr: int | None = None
    fcnt: int | None = None
    attempt: int | None = None
    token: int | None = None


@dataclass(frozen=True)
class Listen:
    """Open a receive window of ``duration`` seconds on a downlink channel."""

    actor: int
    time: float
    channel: int
    link: str
    duration: float
    window: int
    role: str = "node"
    fcnt: int | None = None
    attempt: int | None = None
    token: int | None = None


@dataclass(frozen=True)
class Schedule:
    event: SimEvent


@dataclass(frozen=True)
class Note:
    """A state transition worth recording in the trace."""

    actor: int
    time: float
    kind: EventKind
    outcome: str
    role: str = "node"
    fcnt: int | None = None
    attempt: int | None = None
    channel: int | None = None
    dev_addr: int | None = None


# plans ---------------------------------------------------------------------


@dataclass(frozen=True)
class ChannelPlan:
    n_uplink: int = 8
    n_downlink: int = 8
    rx2_channel: int = 0

    def __post_init__(self):
        if self.n_uplink < 1:
            raise ConfigError("must be >= 1", "channels.n_uplink")
        if self.n_downlink < 1:
            raise ConfigError("must be >= 1", "channels.n_downlink")
        if not 0 <= self.rx2_channel < self.n_downlink:
            raise ConfigError("must index a downlink channel", "channels.rx2_channel")


def next_uplink_channel(prev: int, plan: ChannelPlan) -> int:
    if not 0 <= prev < plan.n_uplink:
        raise DomainError(f"channel {prev} outside [0, {plan.n_uplink})")
    return (prev + 1) % plan.n_uplink


def rx1_channel(tx_channel: int, plan: ChannelPlan) -> int:
    if tx_channel < 0:
        raise DomainError("channel must be >= 0")
    return tx_channel % plan.n_downlink


def attempt_channel(c0: int, attempt: int, plan: ChannelPlan) -> int:
    return (c0 + attempt - 1) % plan.n_uplink


@dataclass(frozen=True)
class Datarates:
    up: RadioConfig
    rx1: RadioConfig
    rx2: RadioConfig

    def __getitem__(self, link: str) -> RadioConfig:
        return {"up": self.up, "rx1": self.rx1, "rx2": self.rx2}[link]

    @classmethod
    def from_uplink(cls, up: RadioConfig, downlink_bw: int = 500_000, rx2_sf: int = 12,
                    gateway_power_dbm: float = 14.0) -> "Datarates":
        rx1 = RadioConfig(sf=up.sf, bw=downlink_bw, cr_denominator=up.cr_denominator,
                          tx_power_dbm=gateway_power_dbm)
        rx2 = RadioConfig(sf=rx2_sf, bw=downlink_bw, cr_denominator=up.cr_denominator,
                          tx_power_dbm=gateway_power_dbm)
        return cls(up, rx1, rx2)


@dataclass(frozen=True)
class TimingPlan:
    receive_delay1: float = 1.0
    receive_delay2: float = 2.0
    tau: float = 0.25
    rx_window: float = 0.0123
    rx2_window: float = 0.0492

    def __post_init__(self):
        if self.receive_delay1 <= 0:
            raise ConfigError("must be > 0", "timing.receive_delay1")
        if not math.isclose(self.receive_delay2, self.receive_delay1 + 1.0, abs_tol=1e-12):
            raise ConfigError("must equal receive_delay1 + 1", "timing.receive_delay2")
        if self.tau < 0 or self.rx_window <= 0 or self.rx2_window <= 0:
            raise ConfigError("windows must be > 0 and tau >= 0", "timing.tau")

    @property
    def retry_delay(self) -> float:
        """Uplink end to next attempt start: Rx2 close plus ``tau``."""
        return self.receive_delay2 + self.rx2_window + self.tau

    def window_length(self, window: int) -> float:
        return self.rx_window if window == 1 else self.rx2_window

    @classmethod
    def for_datarates(cls, rates: Datarates, receive_delay1: float = 1.0, guard_s: float = 0.05,
                      window_symbols: float = 6.0) -> "TimingPlan":
        return cls(
            receive_delay1=receive_delay1,
            receive_delay2=receive_delay1 + 1.0,
            tau=airtime(ACK_FRAME_BYTES, rates.rx2) + guard_s,
            rx_window=window_symbols * rates.rx1.symbol_time,
            rx2_window=window_symbols * rates.rx2.symbol_time,
        )


# node ----------------------------------------------------------------------


@dataclass
class NodeState:
    actor: int
    dev_addr: int
    phase: Phase = Phase.IDLE
    current_frame: Frame | None = None
    attempt: int = 1
    fcnt_up: int = 0
    pending_payloads: deque = field(default_factory=deque)
    clock_offset_ns: float = 0.0
    channel: int = -1
    tx_end: float = 0.0
    acked: bool = False
    resubmit_failed: bool = False
    key: bytes = DEFAULT_KEY


def _start_packet(state: NodeState, now: float, plan: ChannelPlan, payload: bytes) -> list:
    state.channel = (state.channel + 1) % plan.n_uplink
    state.current_frame = uplink(state.dev_addr, state.fcnt_up, payload, attempt=1)
    state.attempt = 1
    state.acked = False
    state.phase = Phase.TXING
    return [
        Note(state.actor, now, EventKind.APP_PACKET, "start", fcnt=state.fcnt_up, attempt=1,
             channel=state.channel, dev_addr=state.dev_addr),
        _transmit(state, now),
    ]


def _transmit(state: NodeState, now: float) -> Transmit:
    return Transmit(
        actor=state.actor,
        time=now,
        frame=encode_frame(state.current_frame, state.key),
        channel=state.channel,
        link="up",
        action="uplink",
        dev_addr=state.dev_addr,
        fcnt=state.fcnt_up,
        attempt=state.attempt,
    )


def _finish(state: NodeState, now: float, plan: ChannelPlan, outcome: str) -> list:
    actions = [Note(state.actor, now, EventKind.RX_WINDOW_CLOSE, outcome, fcnt=state.fcnt_up,
                    attempt=state.attempt, channel=state.channel, dev_addr=state.dev_addr)]
    payload = state.current_frame.payload
    state.phase = Phase.DONE if outcome == "acked" else Phase.FAILED
    state.current_frame = None
    state.fcnt_up = (state.fcnt_up + 1) & 0xFFFF
    if outcome == "failed" and state.resubmit_failed:
        state.pending_payloads.appendleft(payload)
    if state.pending_payloads:
        actions += _start_packet(state, now, plan, state.pending_payloads.popleft())
    return actions


def _stale(state: NodeState, ev: SimEvent) -> bool:
    return (
        state.current_frame is None
        or ev.fcnt is not None and ev.fcnt != state.fcnt_up
        or ev.attempt is not None and ev.attempt != state.attempt
    )


def node_on_event(state: NodeState, ev: SimEvent, timing: TimingPlan, plan: ChannelPlan):
    """Advance a class-A node by one event; returns ``(state, actions)``.

    The state is updated in place.  Receive-window events left over from an
    attempt that already finished are dropped; any other event that cannot
    happen in the current phase raises :class:`ProtocolViolation`.
    """
    k = ev.kind
    if k == EventKind.APP_PACKET:
        payload = ev.frame or b""
        if state.phase in (Phase.IDLE, Phase.DONE, Phase.FAILED):
            return state, _start_packet(state, ev.time, plan, payload)
        state.pending_payloads.append(payload)
        return state, []

    if k == EventKind.TX_START:
        if state.phase != Phase.TXING:
            raise ProtocolViolation(f"TX_START in {state.phase}")
        return state, []

    if k == EventKind.TX_END:
        if state.phase != Phase.TXING:
            raise ProtocolViolation(f"TX_END in {state.phase}")
        state.phase = Phase.WAIT_RX1
        state.tx_end = ev.time
        tag = dict(actor=state.actor, fcnt=state.fcnt_up, attempt=state.attempt)
        return state, [
            Schedule(SimEvent(ev.time + timing.receive_delay1, EventKind.RX1_OPEN, **tag)),
            Schedule(SimEvent(ev.time + timing.receive_delay2, EventKind.RX2_OPEN, **tag)),
        ]

    if k in (EventKind.RX1_OPEN, EventKind.RX2_OPEN):
        if _stale(state, ev) or (k == EventKind.RX2_OPEN and state.acked):
            return state, []
        window = 1 if k == EventKind.RX1_OPEN else 2
        expected = Phase.WAIT_RX1 if window == 1 else Phase.WAIT_RX2
        if state.phase != expected:
            raise ProtocolViolation(f"{k.name} in {state.phase}")
        state.phase = Phase.IN_RX1 if window == 1 else Phase.IN_RX2
        channel = rx1_channel(state.channel, plan) if window == 1 else plan.rx2_channel
        return state, [
            Listen(state.actor, ev.time, channel, "rx1" if window == 1 else "rx2",
                   timing.window_length(window), window, fcnt=state.fcnt_up, attempt=state.attempt)
        ]

    if k == EventKind.FRAME_ARRIVAL:
        if _stale(state, ev):
            return state, []
        if state.phase not in (Phase.IN_RX1, Phase.IN_RX2):
            raise ProtocolViolation(f"downlink while {state.phase}")
        if ev.frame is not None:
            try:
                f = decode_frame(ev.frame, state.key)
            except (IntegrityError, LengthError):
                f = None
            # only ACKs addressed to this node count
            if f is not None and f.is_ack and f.dev_addr == state.dev_addr:
                state.acked = True
        return state, []

    if k == EventKind.RX_WINDOW_CLOSE:
        if _stale(state, ev):
            return state, []
        if state.phase not in (Phase.IN_RX1, Phase.IN_RX2):
            raise ProtocolViolation(f"window close while {state.phase}")
        if state.acked:
            return state, _finish(state, ev.time, plan, "acked")
        if state.phase == Phase.IN_RX1:
            state.phase = Phase.WAIT_RX2
            return state, []
        if state.attempt < MAX_ATTEMPTS:
            state.phase = Phase.BACKOFF
            retry = SimEvent(state.tx_end + timing.retry_delay, EventKind.RETRY_DUE, state.actor,
                             fcnt=state.fcnt_up, attempt=state.attempt)
            return state, [Schedule(retry)]
        return state, _finish(state, ev.time, plan, "failed")

    if k == EventKind.RETRY_DUE:
        if _stale(state, ev):
            return state, []
        if state.phase != Phase.BACKOFF:
            raise ProtocolViolation(f"RETRY_DUE in {state.phase}")
        state.attempt += 1
        state.channel = next_uplink_channel(state.channel, plan)
        state.current_frame = set_attempt(state.current_frame, state.attempt)
        state.phase = Phase.TXING
        return state, [_transmit(state, ev.time)]

    raise ProtocolViolation(f"node cannot handle {k.name}")


# network server ------------------------------------------------------------


@dataclass
class ServerState:
    seen: set = field(default_factory=set)
    fcnt_down: dict = field(default_factory=dict)
    busy: list = field(default_factory=list)
    duplicates: int = 0
    key: bytes = DEFAULT_KEY

    def is_free(self, start: float, end: float) -> bool:
        return all(end <= s or start >= e for s, e in self.busy)


GATEWAY_ACTOR = -1


def server_on_uplink(state: ServerState, frame: Frame, gw_channel: int, rx_end: float,
                     timing: TimingPlan, plan: ChannelPlan, rates: Datarates):
    """One-shot acknowledgement of a confirmed uplink received at ``rx_end``.

    Returns a :class:`Transmit` for the ACK, ``None`` for a duplicate, or a
    :class:`Note` with outcome ``unsent`` when neither window is free.
    """
    key = (frame.dev_addr, frame.fcnt)
    if key in state.seen:
        state.duplicates += 1
        return None
    state.seen.add(key)
    down = state.fcnt_down.get(frame.dev_addr, 0)
    state.fcnt_down[frame.dev_addr] = (down + 1) & 0xFFFF
    payload = encode_frame(ack(frame.dev_addr, down), state.key)
    state.busy = [(s, e) for s, e in state.busy if e > rx_end]
    options = (
        (rx_end + timing.receive_delay1, rx1_channel(gw_channel, plan), "rx1"),
        (rx_end + timing.receive_delay2, plan.rx2_channel, "rx2"),
    )
    for t, ch, link in options:
        end = t + airtime(len(payload), rates[link])
        if state.is_free(t, end):
            state.busy.append((t, end))
            return Transmit(GATEWAY_ACTOR, t, payload, ch, link, "ack", role="gateway",
                            dev_addr=frame.dev_addr, fcnt=frame.fcnt, attempt=get_attempt(frame))
    return Note(GATEWAY_ACTOR, rx_end, EventKind.FRAME_ARRIVAL, "unsent", role="gateway",
                fcnt=frame.fcnt, attempt=get_attempt(frame), dev_addr=frame.dev_addr)
