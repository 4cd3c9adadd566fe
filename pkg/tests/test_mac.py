import pytest
from hypothesis import given
from hypothesis import strategies as st

from lorain.errors import ConfigError, DomainError, ProtocolViolation
from lorain.frame import ack, decode_frame, encode_frame, get_attempt, uplink
from lorain.mac import (
    ChannelPlan,
    Datarates,
    EventKind,
    Listen,
    NodeState,
    Note,
    Phase,
    Schedule,
    ServerState,
    SimEvent,
    TimingPlan,
    Transmit,
    attempt_channel,
    next_uplink_channel,
    node_on_event,
    rx1_channel,
    server_on_uplink,
)
from lorain.phy import RadioConfig

PLAN = ChannelPlan()
RATES = Datarates.from_uplink(RadioConfig(sf=7))
TIMING = TimingPlan.for_datarates(RATES)
DEV = 0x26000001


def test_channel_examples():
    assert next_uplink_channel(7, PLAN) == 0
    assert next_uplink_channel(0, PLAN) == 1
    assert next_uplink_channel(5, ChannelPlan(n_uplink=64)) == 6
    assert rx1_channel(9, PLAN) == 1
    assert rx1_channel(15, PLAN) == 7
    with pytest.raises(DomainError):
        next_uplink_channel(8, PLAN)


@given(st.integers(0, 7), st.integers(1, 8))
def test_attempt_channel_walks_the_plan(c0, k):
    c = c0
    for _ in range(k - 1):
        c = next_uplink_channel(c, PLAN)
    assert attempt_channel(c0, k, PLAN) == c


def test_timing_plan_validation():
    with pytest.raises(ConfigError):
        TimingPlan(receive_delay1=1.0, receive_delay2=3.0)
    assert TIMING.retry_delay == pytest.approx(2.0 + TIMING.rx2_window + TIMING.tau)


class Driver:
    """Plays the engine for one node: runs its actions and feeds events back."""

    def __init__(self):
        self.state = NodeState(actor=0, dev_addr=DEV)
        self.tx: list[Transmit] = []
        self.notes: list[Note] = []
        self.listens: list[Listen] = []
        self.queue: list[SimEvent] = []

    def feed(self, ev):
        _, actions = node_on_event(self.state, ev, TIMING, PLAN)
        for a in actions:
            if isinstance(a, Transmit):
                self.tx.append(a)
            elif isinstance(a, Note):
                self.notes.append(a)
            elif isinstance(a, Listen):
                self.listens.append(a)
            elif isinstance(a, Schedule):
                self.queue.append(a.event)
        return actions

    def send_packet(self, t=0.0, payload=b"hi"):
        self.feed(SimEvent(t, EventKind.APP_PACKET, 0, frame=payload))

    def finish_attempt(self, downlink=None, window=1):
        """Transmission ends, windows open and close; ``downlink`` arrives in ``window``."""
        s = self.state
        end = self.tx[-1].time + 0.05
        self.feed(SimEvent(end, EventKind.TX_END, 0))
        while self.queue:
            self.queue.sort(key=lambda e: e.time)
            ev = self.queue.pop(0)
            if ev.kind == EventKind.RETRY_DUE:
                self.feed(ev)
                return
            n_listens = len(self.listens)
            self.feed(ev)
            if len(self.listens) == n_listens:
                continue
            lw = self.listens[-1]
            tag = dict(fcnt=lw.fcnt, attempt=lw.attempt, window=lw.window)
            if downlink is not None and lw.window == window:
                self.feed(SimEvent(lw.time + 0.01, EventKind.FRAME_ARRIVAL, 0, frame=downlink, **tag))
            self.feed(SimEvent(lw.time + lw.duration, EventKind.RX_WINDOW_CLOSE, 0, **tag))
            if s.phase in (Phase.DONE, Phase.FAILED, Phase.TXING):
                self.queue.clear()
                return


def ack_for(dev, fcnt_down=0):
    return encode_frame(ack(dev, fcnt_down))


def test_node_happy_path():
    d = Driver()
    d.send_packet()
    assert d.state.phase == Phase.TXING and len(d.tx) == 1
    d.finish_attempt(downlink=ack_for(DEV))
    assert d.state.phase == Phase.DONE
    assert d.notes[-1].outcome == "acked" and d.notes[-1].attempt == 1
    assert d.state.fcnt_up == 1


def test_ack_in_rx2_counts():
    d = Driver()
    d.send_packet()
    d.finish_attempt(downlink=ack_for(DEV), window=2)
    assert d.state.phase == Phase.DONE


def test_eight_transmissions_then_failed():
    d = Driver()
    d.send_packet()
    for _ in range(8):
        d.finish_attempt()
    assert d.state.phase == Phase.FAILED
    assert len(d.tx) == 8
    assert [get_attempt(decode_frame(t.frame)) for t in d.tx] == list(range(1, 9))
    c0 = d.tx[0].channel
    assert [t.channel for t in d.tx] == [(c0 + k) % 8 for k in range(8)]
    assert {t.fcnt for t in d.tx} == {0}
    assert d.notes[-1].outcome == "failed"


def test_ack_on_third_attempt():
    d = Driver()
    d.send_packet()
    d.finish_attempt()
    d.finish_attempt()
    d.finish_attempt(downlink=ack_for(DEV))
    assert d.state.phase == Phase.DONE and len(d.tx) == 3


def test_foreign_ack_is_ignored():
    d = Driver()
    d.send_packet()
    d.finish_attempt(downlink=ack_for(DEV + 1))
    assert d.state.phase == Phase.TXING and len(d.tx) == 2


def test_corrupted_ack_is_ignored():
    d = Driver()
    d.send_packet()
    bad = bytearray(ack_for(DEV))
    bad[-1] ^= 1
    d.finish_attempt(downlink=bytes(bad))
    assert d.state.phase == Phase.TXING


def test_packets_queue_behind_the_current_one():
    d = Driver()
    d.send_packet(payload=b"a")
    d.send_packet(t=0.01, payload=b"b")
    assert len(d.tx) == 1
    d.finish_attempt(downlink=ack_for(DEV))
    assert len(d.tx) == 2 and d.tx[1].fcnt == 1
    assert decode_frame(d.tx[1].frame).payload == b"b"


def test_stale_window_events_are_dropped():
    d = Driver()
    d.send_packet()
    _, actions = node_on_event(d.state, SimEvent(5.0, EventKind.RX1_OPEN, 0, fcnt=9, attempt=1),
                               TIMING, PLAN)
    assert actions == []


def test_out_of_phase_event_raises():
    s = NodeState(actor=0, dev_addr=DEV)
    with pytest.raises(ProtocolViolation):
        node_on_event(s, SimEvent(0.0, EventKind.TX_END, 0), TIMING, PLAN)


def test_server_acks_once_per_counter():
    srv = ServerState()
    f = uplink(DEV, 3, b"x", attempt=1)
    first = server_on_uplink(srv, f, 2, 10.0, TIMING, PLAN, RATES)
    assert isinstance(first, Transmit)
    assert first.link == "rx1" and first.channel == 2
    assert first.time == pytest.approx(11.0)
    again = server_on_uplink(srv, uplink(DEV, 3, b"x", attempt=2), 3, 13.0, TIMING, PLAN, RATES)
    assert again is None and srv.duplicates == 1


def test_server_falls_back_to_rx2_then_unsent():
    srv = ServerState()
    a = server_on_uplink(srv, uplink(DEV, 0, b""), 0, 10.0, TIMING, PLAN, RATES)
    b = server_on_uplink(srv, uplink(DEV + 1, 0, b""), 1, 10.0, TIMING, PLAN, RATES)
    c = server_on_uplink(srv, uplink(DEV + 2, 0, b""), 2, 10.0, TIMING, PLAN, RATES)
    assert (a.link, b.link) == ("rx1", "rx2")
    assert isinstance(c, Note) and c.outcome == "unsent"
