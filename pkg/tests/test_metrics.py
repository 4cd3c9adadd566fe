import json
import math
from collections import defaultdict
from dataclasses import replace

import pytest
from hypothesis import given
from hypothesis import strategies as st

from lorain.config import DownlinkConfig, ScenarioConfig, TopologyConfig, TrafficConfig, default_config
from lorain.errors import ConfigError, DomainError, TraceIntegrityError
from lorain.metrics import (
    METRICS_CSV_COLUMNS,
    EnergyProfile,
    compute_metrics,
    integrated_energy,
    metrics_csv,
    packet_energy,
    per_packet_energy,
    window_energies,
)
from lorain.phy import RadioConfig, airtime
from lorain.sim import run, trace_to_jsonl

energies = st.floats(0, 10, allow_nan=False)


def test_packet_energy_examples():
    assert packet_energy(1, 0.1, 0.02, 0.03) == 0.1 + 0.02 + 0.03
    assert packet_energy(5, 0.100, 0.010, 0.010) == pytest.approx(0.600, abs=1e-15)
    with pytest.raises(DomainError):
        packet_energy(0, 1, 1, 1)
    with pytest.raises(DomainError):
        packet_energy(1, -1, 0, 0)


@given(st.integers(1, 8), energies, energies, energies)
def test_packet_energy_is_the_plain_product(n, a, r1, r2):
    assert packet_energy(n, a, r1, r2) == n * (a + r1 + r2)
    assert packet_energy(2 * n, a, r1, r2) == pytest.approx(2 * packet_energy(n, a, r1, r2), rel=1e-15)


def test_window_energies():
    cfg = default_config()
    timing = cfg.timing_plan
    zero = EnergyProfile(0, 0, 0, 0)
    assert window_energies(cfg.radio, timing, zero, 30) == (0.0, 0.0, 0.0)
    p = EnergyProfile()
    e_air, e1, e2 = window_energies(cfg.radio, timing, p, 30)
    assert e_air == pytest.approx(p.e_air_per_s * airtime(30, cfg.radio))
    assert e1 == pytest.approx(p.e_rx_per_s * timing.rx_window)
    _, short, _ = window_energies(cfg.radio, timing, p, 30, rx1_open_s=0.4 * timing.rx_window)
    assert short == pytest.approx(0.4 * e1)


def test_energy_profile_validation():
    with pytest.raises(ConfigError):
        EnergyProfile(e_air_per_s=-1)
    with pytest.raises(ConfigError):
        EnergyProfile(e_rx_per_s=0.01, e_cad_per_s=0.02)


def small(protocol="lorawan", frac=0.0, **kw):
    cfg = default_config()
    cfg = replace(cfg, nodes=kw.pop("nodes", 6),
                  traffic=replace(cfg.traffic, packets_per_node=kw.pop("packets", 5)), **kw)
    return cfg.with_protocol(protocol, frac)


@pytest.mark.parametrize("protocol,frac", [("lorawan", 0.0), ("lorain", 0.3)])
def test_integrated_energy_matches_per_packet_sum(protocol, frac):
    cfg = small(protocol, frac, nodes=10, packets=8)
    for seed in range(3):
        trace = run(cfg, seed)
        per = sum(per_packet_energy(trace, cfg.energy).values())
        assert integrated_energy(trace, cfg.energy) == pytest.approx(per, rel=1e-9)


def test_single_node_clean_link():
    cfg = ScenarioConfig(nodes=1, traffic=TrafficConfig(packets_per_node=1),
                         topology=TopologyConfig(area_m=10.0))
    m = compute_metrics(run(cfg, 0), cfg)
    assert (m.prr, m.pdr, m.mean_attempts) == (1.0, 1.0, 1.0)
    assert m.mean_e2e_latency_s > 1.0


def test_acks_lost_means_zero_pdr():
    cfg = ScenarioConfig(nodes=3, traffic=TrafficConfig(packets_per_node=2),
                         topology=TopologyConfig(area_m=10.0),
                         downlink=DownlinkConfig(gateway_power_dbm=-80.0))
    m = compute_metrics(run(cfg, 1), cfg)
    assert m.pdr == 0.0 and m.prr > 0.0
    assert m.mean_attempts == 8.0


def recount(trace):
    """Independent PRR/PDR tally straight from the records."""
    sent, got, acked = {}, set(), set()
    for r in trace:
        key = (r["dev_addr"], r["fcnt"])
        if r["kind"] == "APP_PACKET" and r["outcome"] == "start":
            sent[key] = r["actor"]
        if r["kind"] == "FRAME_ARRIVAL" and r["actor"] == -1 and r["outcome"] == "delivered":
            got.add(key)
        if r["kind"] == "RX_WINDOW_CLOSE" and r["actor_role"] == "node" and r["outcome"] == "acked":
            acked.add(key)
    per_node = defaultdict(list)
    for key, actor in sent.items():
        per_node[actor].append(key in acked)
    prr = sum(k in got for k in sent) / len(sent)
    pdr = sum(sum(v) / len(v) for v in per_node.values()) / len(per_node)
    return prr, pdr


@pytest.mark.parametrize("protocol,frac", [("lorawan", 0.0), ("lorain", 0.15)])
def test_prr_pdr_match_brute_force(protocol, frac):
    cfg = small(protocol, frac, nodes=12, packets=6)
    trace = [json.loads(line) for line in trace_to_jsonl(run(cfg, 4)).splitlines()]
    m = compute_metrics(trace, cfg)
    prr, pdr = recount(trace)
    assert m.prr == pytest.approx(prr, abs=1e-12)
    assert m.pdr == pytest.approx(pdr, abs=1e-12)


def test_duplicate_receptions_do_not_raise_bitrate():
    cfg = small(nodes=4, packets=3)
    trace = run(cfg, 2)
    m = compute_metrics(trace, cfg)
    extra = [r for r in trace if r["kind"] == "FRAME_ARRIVAL" and r["actor"] == -1
             and r["outcome"] == "delivered"]
    doubled = trace[:-1] + [dict(r, t=trace[-1]["t"]) for r in extra] + trace[-1:]
    assert compute_metrics(doubled, cfg).effective_bitrate_bps == m.effective_bitrate_bps


def test_ratios_in_range():
    cfg = small("lorain", 0.5, nodes=8, packets=4)
    m = compute_metrics(run(cfg, 7), cfg)
    for v in (m.prr, m.pdr, m.cad_detection_accuracy, m.cad_reception_accuracy,
              m.lost_or_unsent_ack_ratio):
        assert 0.0 <= v <= 1.0
    assert 1.0 <= m.mean_attempts <= 8.0
    assert math.isfinite(m.booster_overhead_j_per_bit)


def test_truncated_trace_is_rejected():
    cfg = small(nodes=2, packets=1)
    trace = run(cfg, 0)
    with pytest.raises(TraceIntegrityError):
        compute_metrics(trace[:-1], cfg)
    with pytest.raises(TraceIntegrityError):
        compute_metrics(trace[1:], cfg)


def test_csv_header_is_exact():
    cfg = small(nodes=2, packets=1)
    row = compute_metrics(run(cfg, 0), cfg).csv_row("s", 0, "lorawan", 2, 0.0)
    text = metrics_csv([row])
    assert text.splitlines()[0] == ",".join(METRICS_CSV_COLUMNS)
    assert text.splitlines()[0] == ("scenario,seed,protocol,nodes,booster_frac,prr,pdr,mean_attempts,"
                                    "latency_s,bitrate_bps,energy_mj,cad_det,cad_rx,booster_mj_per_bit,"
                                    "lost_ack_ratio")
