"""Seeded random scenario generator shared by the property suites."""


import numpy as np

from lorain.config import DownlinkConfig, ScenarioConfig, TopologyConfig, TrafficConfig
from lorain.link import LinkModel
from lorain.phy import RadioConfig


def random_scenario(seed: int, max_nodes: int = 10, max_packets: int = 6) -> ScenarioConfig:
    rng = np.random.default_rng([seed, 77])
    return ScenarioConfig(
        name=f"fuzz{seed}",
        nodes=int(rng.integers(1, max_nodes + 1)),
        radio=RadioConfig(sf=int(rng.integers(7, 10)), bw=125_000),
        downlink=DownlinkConfig(gateway_power_dbm=float(rng.choice([14.0, 20.0, 27.0]))),
        link=LinkModel(
            shadowing_sigma_db=float(rng.uniform(0, 10)),
            rayleigh_fading=bool(rng.integers(0, 2)),
            base_delivery_prob=float(rng.choice([1.0, rng.uniform(0.5, 1.0)])),
        ),
        topology=TopologyConfig(area_m=float(rng.uniform(50, 300)),
                                gateway_distance_m=float(rng.uniform(0, 800))),
        traffic=TrafficConfig(packets_per_node=int(rng.integers(1, max_packets + 1)),
                              interval_s=float(rng.uniform(20, 90)),
                              payload_bytes=int(rng.integers(0, 40))),
    )


def booster_fraction(seed: int) -> float:
    return float(np.random.default_rng([seed, 78]).choice([0.1, 0.15, 0.25, 0.5]))


def pair(seed: int):
    base = random_scenario(seed)
    return base.with_protocol("lorawan"), base.with_protocol("lorain", booster_fraction(seed))
