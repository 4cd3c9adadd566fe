import json
from collections import Counter
from dataclasses import replace

import pytest

from lorain.config import ScenarioConfig, TopologyConfig, TrafficConfig, default_config
from lorain.errors import TraceIntegrityError
from lorain.link import LinkModel
from lorain.sim import DEV_ADDR_BASE, read_trace, run, trace_to_jsonl, write_trace

from invariants import all_violations

CLEAN = LinkModel(shadowing_sigma_db=0.0, rayleigh_fading=False)


def clean(nodes, packets=1, **kw):
    return ScenarioConfig(nodes=nodes, link=CLEAN, topology=TopologyConfig(area_m=10.0),
                          traffic=TrafficConfig(packets_per_node=packets), **kw)


def test_one_node_one_packet():
    trace = run(clean(1), 0)
    kinds = Counter((r["kind"], r["actor_role"]) for r in trace)
    assert kinds[("TX_START", "node")] == 1
    assert [r["outcome"] for r in trace if r["kind"] == "FRAME_ARRIVAL" and r["actor_role"] == "node"] \
        == ["delivered"]
    assert [r["outcome"] for r in trace if r["kind"] == "RX_WINDOW_CLOSE" and r["window"] is None] \
        == ["acked"]
    assert trace[0]["kind"] == "START" and trace[-1]["kind"] == "END"


def test_two_nodes_both_done_first_try():
    trace = run(clean(2), 3)
    done = [r for r in trace if r["kind"] == "RX_WINDOW_CLOSE" and r["window"] is None]
    assert sorted(r["dev_addr"] for r in done) == [DEV_ADDR_BASE, DEV_ADDR_BASE + 1]
    assert {(r["outcome"], r["attempt"]) for r in done} == {("acked", 1)}


@pytest.mark.parametrize("protocol,frac", [("lorawan", 0.0), ("lorain", 0.25)])
def test_same_seed_same_bytes(protocol, frac):
    cfg = replace(default_config(), nodes=8,
                  traffic=TrafficConfig(packets_per_node=4)).with_protocol(protocol, frac)
    a = trace_to_jsonl(run(cfg, 11))
    assert a == trace_to_jsonl(run(cfg, 11))
    assert a != trace_to_jsonl(run(cfg, 12))


def test_trace_is_time_ordered_and_clean():
    cfg = replace(default_config(), nodes=10,
                  traffic=TrafficConfig(packets_per_node=5)).with_protocol("lorain", 0.2)
    trace = run(cfg, 5)
    ts = [r["t"] for r in trace]
    assert ts == sorted(ts)
    assert all_violations(trace, cfg) == []
    meta = trace[0]["meta"]
    assert len(meta["boosters"]) == cfg.booster_count == 2
    for key in ("t", "kind", "actor", "channel", "fcnt", "attempt", "dev_addr", "outcome",
                "rx_power_dbm"):
        assert all(key in r for r in trace)


def test_relay_rescues_a_missed_ack():
    cfg = replace(default_config(), traffic=TrafficConfig(packets_per_node=10)).with_protocol("lorain", 0.15)
    trace = run(cfg, 0)
    relayed = {(r["dev_addr"], r["fcnt"]) for r in trace
               if r["kind"] == "FRAME_ARRIVAL" and r["actor_role"] == "node"
               and r["action"] in ("relay_rx1", "relay_rx2") and r["outcome"] == "delivered"}
    acked = {(r["dev_addr"], r["fcnt"]) for r in trace
             if r["kind"] == "RX_WINDOW_CLOSE" and r["window"] is None and r["outcome"] == "acked"}
    assert relayed and relayed <= acked


def test_boosts_combine_at_the_gateway():
    cfg = replace(default_config(), traffic=TrafficConfig(packets_per_node=10)).with_protocol("lorain", 0.15)
    trace = run(cfg, 0)
    groups = [r for r in trace if r["kind"] == "FRAME_ARRIVAL" and r["actor"] == -1
              and len(r["tx_ids"]) > 1 and r["outcome"] == "delivered"]
    assert groups


def test_trace_file_roundtrip(tmp_path):
    trace = run(clean(2, packets=2), 1)
    p = tmp_path / "t.jsonl"
    write_trace(trace, p)
    assert read_trace(p) == [json.loads(line) for line in trace_to_jsonl(trace).splitlines()]
    p.write_text("\n".join(p.read_text().splitlines()[:-1]) + "\n")
    with pytest.raises(TraceIntegrityError):
        read_trace(p)
    p.write_text("{not json\n")
    with pytest.raises(TraceIntegrityError):
        read_trace(p)
