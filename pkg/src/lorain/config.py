"""Scenario configuration: typed dataclasses backed by an INI file.

Every key lives in a section named after the dataclass it configures::

    [scenario]   name, protocol, nodes, booster_fraction
    [radio]      sf, bw, cr_denominator, preamble_symbols, sfd_symbols, tx_power_dbm
    [downlink]   bw, rx2_sf, gateway_power_dbm
    [timing]     receive_delay1, tau_guard_s, rx_window_symbols
    [channels]   n_uplink, n_downlink, rx2_channel
    [link]       path_loss_exponent, pl_d0_db, shadowing_sigma_db, rayleigh_fading,
                 base_delivery_prob, capture_threshold_db, noise_figure_db, jitter_ns
    [topology]   area_m, gateway_distance_m
    [traffic]    packets_per_node, interval_s, payload_bytes, resubmit_failed
    [energy]     e_air_per_s, e_rx_per_s, e_cad_per_s, e_sleep_per_s

Missing keys take their defaults; unknown sections or keys are errors.
"""

from __future__ import annotations

import configparser
import dataclasses
import io
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import ConfigError
from .link import LinkModel
from .mac import ChannelPlan, Datarates, TimingPlan
from .metrics import EnergyProfile
from .phy import RadioConfig

PROTOCOLS = ("lorawan", "lorain")


@dataclass(frozen=True)
class DownlinkConfig:
    bw: int = 500_000
    rx2_sf: int = 12
    gateway_power_dbm: float = 14.0


@dataclass(frozen=True)
class TimingConfig:
    receive_delay1: float = 1.0
    tau_guard_s: float = 0.05
    rx_window_symbols: float = 6.0


@dataclass(frozen=True)
class TopologyConfig:
    """Nodes are placed uniformly in a square of side ``area_m``.

    The gateway sits ``gateway_distance_m`` east of the square's centre
    (0 puts it in the middle).
    """

    area_m: float = 120.0
    gateway_distance_m: float = 0.0

    def __post_init__(self):
        if self.area_m <= 0:
            raise ConfigError("must be > 0", "topology.area_m")
        if self.gateway_distance_m < 0:
            raise ConfigError("must be >= 0", "topology.gateway_distance_m")


@dataclass(frozen=True)
class TrafficConfig:
    packets_per_node: int = 100
    interval_s: float = 60.0
    payload_bytes: int = 30
    resubmit_failed: bool = False

    def __post_init__(self):
        if self.packets_per_node < 1:
            raise ConfigError("must be >= 1", "traffic.packets_per_node")
        if self.interval_s <= 0:
            raise ConfigError("must be > 0", "traffic.interval_s")
        if not 0 <= self.payload_bytes <= 222:
            raise ConfigError("must be in 0..222", "traffic.payload_bytes")


@dataclass(frozen=True)
class ScenarioConfig:
    name: str = "default"
    protocol: str = "lorawan"
    nodes: int = 20
    booster_fraction: float = 0.0
    radio: RadioConfig = field(default_factory=RadioConfig)
    downlink: DownlinkConfig = field(default_factory=DownlinkConfig)
    timing: TimingConfig = field(default_factory=TimingConfig)
    channels: ChannelPlan = field(default_factory=ChannelPlan)
    link: LinkModel = field(default_factory=LinkModel)
    topology: TopologyConfig = field(default_factory=TopologyConfig)
    traffic: TrafficConfig = field(default_factory=TrafficConfig)
    energy: EnergyProfile = field(default_factory=EnergyProfile)

    def __post_init__(self):
        if self.protocol not in PROTOCOLS:
            raise ConfigError(f"must be one of {PROTOCOLS}", "scenario.protocol")
        if self.nodes < 1:
            raise ConfigError("must be >= 1", "scenario.nodes")
        if not 0.0 <= self.booster_fraction <= 1.0:
            raise ConfigError("must lie in [0, 1]", "scenario.booster_fraction")
        if self.protocol == "lorawan" and self.booster_fraction > 0:
            raise ConfigError("plain LoRaWAN runs have no boosters", "scenario.booster_fraction")

    @property
    def booster_count(self) -> int:
        if self.protocol != "lorain":
            return 0
        # round first so 0.15 * 20 does not ceil to 4
        return min(self.nodes, math.ceil(round(self.booster_fraction * self.nodes, 9)))

    @property
    def datarates(self) -> Datarates:
        return Datarates.from_uplink(self.radio, self.downlink.bw, self.downlink.rx2_sf,
                                     self.downlink.gateway_power_dbm)

    @property
    def timing_plan(self) -> TimingPlan:
        t = self.timing
        return TimingPlan.for_datarates(self.datarates, t.receive_delay1, t.tau_guard_s,
                                        t.rx_window_symbols)

    def with_protocol(self, protocol: str, booster_fraction: float | None = None) -> "ScenarioConfig":
        if booster_fraction is None:
            booster_fraction = self.booster_fraction if protocol == "lorain" else 0.0
        return replace(self, protocol=protocol, booster_fraction=booster_fraction)


_SECTIONS = {
    "radio": RadioConfig,
    "downlink": DownlinkConfig,
    "timing": TimingConfig,
    "channels": ChannelPlan,
    "link": LinkModel,
    "topology": TopologyConfig,
    "traffic": TrafficConfig,
    "energy": EnergyProfile,
}
_SCENARIO_KEYS = ("name", "protocol", "nodes", "booster_fraction")
_SKIP = {"radio": {"osf"}}


def _coerce(raw: str, default, path: str):
    try:
        if isinstance(default, bool):
            v = raw.strip().lower()
            if v in ("1", "true", "yes", "on"):
                return True
            if v in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return raw.strip()
    except ValueError:
        raise ConfigError(f"cannot parse {raw!r} as {type(default).__name__}", path) from None


def _build(cls, items: dict, section: str):
    defaults = cls()
    known = {f.name for f in dataclasses.fields(cls)} - _SKIP.get(section, set())
    kwargs = {}
    for key, raw in items.items():
        if key not in known:
            raise ConfigError("unknown key", f"{section}.{key}")
        kwargs[key] = _coerce(raw, getattr(defaults, key), f"{section}.{key}")
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), section) from None


def parse_config(text: str) -> ScenarioConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc).splitlines()[0], "<file>") from None
    parts = {}
    scenario = {}
    for section in parser.sections():
        items = dict(parser.items(section))
        if section == "scenario":
            defaults = ScenarioConfig()
            for key, raw in items.items():
                if key not in _SCENARIO_KEYS:
                    raise ConfigError("unknown key", f"scenario.{key}")
                scenario[key] = _coerce(raw, getattr(defaults, key), f"scenario.{key}")
        elif section in _SECTIONS:
            parts[section] = _build(_SECTIONS[section], items, section)
        else:
            raise ConfigError("unknown section", section)
    return ScenarioConfig(**scenario, **parts)


def load_config(path) -> ScenarioConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", str(path)) from None
    return parse_config(text)


def dump_config(cfg: ScenarioConfig) -> str:
    """Render ``cfg`` as INI text that :func:`parse_config` reads back to an equal config."""
    parser = configparser.ConfigParser(interpolation=None)
    parser["scenario"] = {k: str(getattr(cfg, k)) for k in _SCENARIO_KEYS}
    for section, cls in _SECTIONS.items():
        obj = getattr(cfg, section)
        skip = _SKIP.get(section, set())
        parser[section] = {f.name: repr(getattr(obj, f.name)) if isinstance(getattr(obj, f.name), float)
                           else str(getattr(obj, f.name))
                           for f in dataclasses.fields(cls) if f.name not in skip}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def default_config_path() -> Path:
    return Path(__file__).parent / "data" / "default.ini"


def default_config() -> ScenarioConfig:
    return load_config(default_config_path())
