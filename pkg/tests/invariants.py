"""Trace-level protocol invariants; each checker returns a list of violation strings."""

from collections import defaultdict

from lorain.frame import MAX_ATTEMPTS

RELAYS = ("relay_rx1", "relay_rx2")
ACK_ACTIONS = ("ack", *RELAYS)


def _sent(r):
    # cancelled or preempted transmissions never reach the air
    return r["kind"] == "TX_START" and r["outcome"] is None


def one_ack_per_packet(trace):
    acks = defaultdict(int)
    for r in trace:
        if _sent(r) and r["actor"] == -1 and r["action"] == "ack":
            acks[(r["dev_addr"], r["fcnt"])] += 1
    return [f"{k}: {n} server ACKs" for k, n in acks.items() if n > 1]


def bounded_attempts(trace):
    tx = defaultdict(int)
    for r in trace:
        if _sent(r) and r["actor_role"] == "node" and r["action"] == "uplink":
            tx[(r["dev_addr"], r["fcnt"])] += 1
    return [f"{k}: {n} transmissions" for k, n in tx.items() if n > MAX_ATTEMPTS]


def channel_progression(trace, n_uplink):
    first = {}
    out = []
    for r in trace:
        if not (_sent(r) and r["actor_role"] == "node" and r["action"] == "uplink"):
            continue
        key = (r["dev_addr"], r["fcnt"])
        if r["attempt"] == 1:
            first[key] = r["channel"]
        elif key not in first:
            out.append(f"{key}: attempt {r['attempt']} without attempt 1")
        elif r["channel"] != (first[key] + r["attempt"] - 1) % n_uplink:
            out.append(f"{key}: attempt {r['attempt']} on channel {r['channel']}")
    return out


def retry_spacing(trace, cfg):
    """Consecutive attempts of a frame sit at least airtime + Rx2 delay + tau apart."""
    timing = cfg.timing_plan
    last = {}
    out = []
    for r in trace:
        if r["kind"] != "TX_END" or r["actor_role"] != "node" or r["action"] != "uplink":
            continue
        key = (r["dev_addr"], r["fcnt"])
        if key in last:
            gap = r["start"] - last[key][0]
            need = (last[key][1] - last[key][0]) + timing.receive_delay2 + timing.tau
            if gap < need - 1e-9:
                out.append(f"{key}: attempts {gap:.6f} s apart, need {need:.6f}")
        last[key] = (r["start"], r["t"])
    return out


def capture_exclusive(trace):
    """The gateway never delivers two different frames that overlap on one channel."""
    spans = {}
    for r in trace:
        if r["kind"] == "TX_END":
            spans[r["tx_id"]] = (r["start"], r["t"], r["frame"], r["channel"], r["action"])
    got = [spans[r["tx_id"]] for r in trace
           if r["kind"] == "FRAME_ARRIVAL" and r["actor"] == -1 and r["outcome"] == "delivered"]
    got.sort()
    out = []
    for i, (s, e, frame, ch, _) in enumerate(got):
        for s2, _, frame2, ch2, _ in got[i + 1:]:
            if s2 >= e:
                break
            if ch2 == ch and frame2 != frame:
                out.append(f"two frames delivered together on channel {ch} at {s2:.6f}")
    return out


def booster_rules(trace):
    """No boost after the booster saw the ACK, no relay once the device moved on."""
    acked = defaultdict(set)
    newest = defaultdict(lambda: -1)
    own = {}
    meta = trace[0]["meta"]
    for actor, dev in meta.get("dev_addr", {}).items():
        own[int(actor)] = dev
    node_frames = {}
    relays = defaultdict(int)
    out = []
    for r in trace:
        b = r["actor"]
        if r["kind"] == "FRAME_ARRIVAL" and r["actor_role"] == "booster" and r["outcome"] == "delivered":
            if r["window"] is not None and r["action"] in ACK_ACTIONS:
                acked[b].add((r["dev_addr"], r["fcnt"]))
            elif r["window"] is None:
                newest[(b, r["dev_addr"])] = max(newest[(b, r["dev_addr"])], r["fcnt"])
        elif r["kind"] == "TX_END" and r["actor_role"] == "node" and r["action"] == "uplink":
            node_frames[(r["dev_addr"], r["fcnt"], r["attempt"])] = r["frame"]
        elif r["kind"] == "TX_END" and r["action"] == "boost":
            twin = node_frames.get((r["dev_addr"], r["fcnt"], r["attempt"]))
            if twin is not None and twin != r["frame"]:
                out.append(f"booster {b}: boost bytes differ from node frame {r['dev_addr']}/{r['fcnt']}")
        if not _sent(r) or r["actor_role"] != "booster":
            continue
        key = (r["dev_addr"], r["fcnt"])
        if r["dev_addr"] == own.get(b):
            out.append(f"booster {b} acted on its own device's frame {key}")
        if r["action"] == "boost" and key in acked[b]:
            out.append(f"booster {b} boosted ACK-observed {key} at {r['t']:.6f}")
        if r["action"] in RELAYS:
            if newest[(b, r["dev_addr"])] > r["fcnt"]:
                out.append(f"booster {b} relayed {key} after the device advanced its counter")
            relays[(b, *key, r["attempt"])] += 1
    out += [f"booster relay count {n} for {k}" for k, n in relays.items() if n > 2]
    return out


def all_violations(trace, cfg):
    return (one_ack_per_packet(trace) + bounded_attempts(trace)
            + channel_progression(trace, cfg.channels.n_uplink) + booster_rules(trace)
            + retry_spacing(trace, cfg) + capture_exclusive(trace))
