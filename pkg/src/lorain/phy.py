"""LoRa chirp-spread-spectrum physical layer.

Symbols are cyclic time shifts of a linear up-chirp sweeping
``[-bw/2, +bw/2]`` over ``2**sf`` chips.  Demodulation de-chirps with the
conjugate base chirp and picks the strongest DFT bin.

Waveforms can be oversampled (``osf`` samples per chip).  Chirps are always
evaluated as continuous-time signals with the frequency folded back into the
band, so a sub-chip delay of a transmitter is an exact evaluation at shifted
instants rather than an interpolation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .errors import ConfigError, DomainError, LengthError, RangeError

VALID_BW = (125_000, 250_000, 500_000)

# Normalised de-chirp correlation a CAD window must reach to declare activity;
# a clean preamble window scores 1.0 (up to sub-chip scalloping).
CAD_THRESHOLD = 0.5


@dataclass(frozen=True)
class RadioConfig:
    sf: int = 10
    bw: int = 125_000
    cr_denominator: int = 5
    preamble_symbols: float = 10.25
    sfd_symbols: float = 2.25
    osf: int = 1
    tx_power_dbm: float = 14.0

    def __post_init__(self):
        if not 7 <= self.sf <= 12:
            raise ConfigError(f"sf must be in 7..12, got {self.sf}", "radio.sf")
        if self.bw not in VALID_BW:
            raise ConfigError(f"bw must be one of {VALID_BW}, got {self.bw}", "radio.bw")
        if not 5 <= self.cr_denominator <= 8:
            raise ConfigError("cr_denominator must be in 5..8", "radio.cr_denominator")
        if self.osf < 1:
            raise ConfigError("osf must be >= 1", "radio.osf")
        if self.preamble_symbols < 0 or self.sfd_symbols < 0:
            raise ConfigError("preamble/sfd lengths must be >= 0", "radio.preamble_symbols")

    @property
    def M(self) -> int:
        return 1 << self.sf

    @property
    def symbol_time(self) -> float:
        """Symbol period ``T = 2**sf / bw`` in seconds."""
        return self.M / self.bw

    @property
    def chip_time(self) -> float:
        return 1.0 / self.bw

    @property
    def sample_rate(self) -> float:
        return float(self.osf * self.bw)

    @property
    def samples_per_symbol(self) -> int:
        return self.M * self.osf

    def with_osf(self, osf: int) -> "RadioConfig":
        return replace(self, osf=osf)


@dataclass
class ComplexWaveform:
    samples: np.ndarray
    sample_rate_hz: float

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.complex128)

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate_hz


@dataclass(frozen=True)
class SymbolDecision:
    symbol: int
    peak_magnitude: float
    peak_bin: int


def _check_symbol(alpha: int, M: int) -> None:
    if not 0 <= int(alpha) < M:
        raise DomainError(f"symbol {alpha} outside [0, {M})")


def chirp_at(alpha: int, t: np.ndarray, M: int) -> np.ndarray:
    """Evaluate symbol ``alpha`` at chip instants ``t`` (any reals, taken mod M).

    At integer ``t`` in ``[0, M)`` this is exactly
    ``exp(j*2*pi*n*(alpha/M - 1/2 + n/(2M)))``.  At fractional instants the
    instantaneous frequency wraps back into the band instead of overshooting.
    """
    u = np.mod(np.asarray(t, dtype=np.float64) + alpha, M)
    # phase in cycles, reduced mod 1 before exponentiating to keep precision
    cycles = u * (-0.5 + u / (2 * M)) + (alpha / 2 - alpha * alpha / (2 * M))
    return np.exp(2j * np.pi * np.mod(cycles, 1.0))


def base_upchirp(cfg: RadioConfig, osf: int | None = None) -> np.ndarray:
    osf = cfg.osf if osf is None else osf
    return chirp_at(0, np.arange(cfg.M * osf) / osf, cfg.M)


def modulate_symbol(alpha: int, cfg: RadioConfig) -> ComplexWaveform:
    _check_symbol(alpha, cfg.M)
    t = np.arange(cfg.samples_per_symbol) / cfg.osf
    return ComplexWaveform(chirp_at(int(alpha), t, cfg.M), cfg.sample_rate)


def demodulate_symbols(windows: np.ndarray, cfg: RadioConfig) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised de-chirp + DFT over rows of chip-rate windows (shape ``(k, M)``).

    Returns ``(symbols, peak_magnitudes)``.
    """
    down = np.conj(chirp_at(0, np.arange(cfg.M), cfg.M))
    spectrum = np.abs(np.fft.fft(windows * down, axis=-1))
    # argmax returns the first maximum, i.e. ties go to the smallest bin
    symbols = np.argmax(spectrum, axis=-1)
    peaks = np.take_along_axis(spectrum, symbols[..., None], axis=-1)[..., 0]
    return symbols, peaks


def demodulate_symbol(rx: ComplexWaveform, cfg: RadioConfig) -> SymbolDecision:
    samples = np.asarray(rx.samples if isinstance(rx, ComplexWaveform) else rx)
    if len(samples) != cfg.samples_per_symbol:
        raise LengthError(f"expected {cfg.samples_per_symbol} samples, got {len(samples)}")
    chips = samples[:: cfg.osf]
    symbols, peaks = demodulate_symbols(chips[None, :], cfg)
    sym = int(symbols[0])
    return SymbolDecision(symbol=sym, peak_magnitude=float(peaks[0]), peak_bin=sym)


def header_chips(cfg: RadioConfig) -> float:
    """Length of preamble + SFD in chips."""
    return (cfg.preamble_symbols + cfg.sfd_symbols) * cfg.M


def frame_at(symbols: Sequence[int], cfg: RadioConfig, t: np.ndarray) -> np.ndarray:
    """Evaluate a whole frame (preamble, SFD, payload) at chip instants ``t``.

    Instants outside the frame evaluate to zero.
    """
    M = cfg.M
    t = np.asarray(t, dtype=np.float64)
    out = np.zeros(t.shape, dtype=np.complex128)
    pre_end = cfg.preamble_symbols * M
    sfd_end = pre_end + cfg.sfd_symbols * M
    end = sfd_end + len(symbols) * M

    m = (t >= 0) & (t < pre_end)
    out[m] = chirp_at(0, t[m], M)
    m = (t >= pre_end) & (t < sfd_end)
    out[m] = np.conj(chirp_at(0, t[m] - pre_end, M))
    m = (t >= sfd_end) & (t < end)
    if m.any():
        rel = t[m] - sfd_end
        idx = np.minimum((rel // M).astype(np.int64), len(symbols) - 1)
        alphas = np.asarray(symbols, dtype=np.int64)[idx]
        # chirp_at with a per-sample alpha
        u = np.mod(rel - idx * M + alphas, M)
        cycles = u * (-0.5 + u / (2 * M)) + (alphas / 2 - alphas * alphas / (2 * M))
        out[m] = np.exp(2j * np.pi * np.mod(cycles, 1.0))
    return out


def frame_sample_count(n_symbols: int, cfg: RadioConfig) -> int:
    pre = int(round(cfg.preamble_symbols * cfg.M * cfg.osf))
    sfd = int(round(cfg.sfd_symbols * cfg.M * cfg.osf))
    return pre + sfd + n_symbols * cfg.samples_per_symbol


def build_frame_waveform(symbols: Sequence[int], cfg: RadioConfig) -> ComplexWaveform:
    for s in symbols:
        _check_symbol(s, cfg.M)
    n = frame_sample_count(len(symbols), cfg)
    t = np.arange(n) / cfg.osf
    return ComplexWaveform(frame_at(list(symbols), cfg, t), cfg.sample_rate)


def payload_offset_samples(cfg: RadioConfig) -> int:
    return frame_sample_count(0, cfg)


def decode_frame_waveform(
    rx: ComplexWaveform, cfg: RadioConfig, n_symbols: int, start_sample: int = 0
) -> list[int]:
    """Demodulate ``n_symbols`` payload symbols of a frame starting at ``start_sample``."""
    first = start_sample + payload_offset_samples(cfg)
    last = first + n_symbols * cfg.samples_per_symbol
    if first < 0 or last > len(rx.samples):
        raise RangeError("payload windows exceed the waveform")
    chips = rx.samples[first:last:cfg.osf].reshape(n_symbols, cfg.M)
    symbols, _ = demodulate_symbols(chips, cfg)
    return [int(s) for s in symbols]


def cad_duration(cfg: RadioConfig) -> float:
    """Duration of one channel activity detection, ``(2**sf + 32) / bw`` seconds."""
    return (cfg.M + 32) / cfg.bw


def cad_score(window_chips: np.ndarray, cfg: RadioConfig) -> float:
    """Normalised correlation of a chip-rate window against the base up-chirp.

    Both M-chip sub-windows at the ends of the CAD window are de-chirped and
    zero-padded 2x before the DFT, which bounds sub-chip scalloping.  The
    score is ``|peak| / (M * rms)`` so a clean up-chirp window scores ~1.
    """
    M = cfg.M
    down = np.conj(chirp_at(0, np.arange(M), M))
    best = 0.0
    for seg in (window_chips[:M], window_chips[-M:]):
        energy = np.sum(np.abs(seg) ** 2)
        if energy == 0:
            continue
        peak = np.max(np.abs(np.fft.fft(seg * down, 2 * M)))
        best = max(best, peak / math.sqrt(M * energy))
    return best


def cad_probe(medium: ComplexWaveform, t_start: float, cfg: RadioConfig) -> bool:
    fs = medium.sample_rate_hz
    n0 = int(round(t_start * fs))
    n = int(round(cad_duration(cfg) * fs))
    if n0 < 0 or n0 + n > len(medium.samples):
        raise RangeError("CAD window exceeds the medium")
    osf = max(1, int(round(fs / cfg.bw)))
    chips = medium.samples[n0 : n0 + n : osf]
    if len(chips) < cfg.M:
        raise RangeError("CAD window shorter than one symbol")
    return cad_score(chips, cfg) > CAD_THRESHOLD


def bits_to_symbols(bits: Sequence[int], sf: int) -> list[int]:
    """Group bits big-endian, ``sf`` per symbol; the tail is zero-padded."""
    bits = [int(b) for b in bits]
    if any(b not in (0, 1) for b in bits):
        raise DomainError("bits must be 0 or 1")
    pad = (-len(bits)) % sf
    bits = bits + [0] * pad
    out = []
    for i in range(0, len(bits), sf):
        v = 0
        for b in bits[i : i + sf]:
            v = (v << 1) | b
        out.append(v)
    return out


def symbols_to_bits(symbols: Sequence[int], sf: int) -> list[int]:
    out = []
    for s in symbols:
        _check_symbol(s, 1 << sf)
        out.extend((int(s) >> (sf - 1 - i)) & 1 for i in range(sf))
    return out


def bytes_to_bits(data: bytes) -> list[int]:
    return [(byte >> (7 - i)) & 1 for byte in data for i in range(8)]


def airtime(payload_bytes: int, cfg: RadioConfig) -> float:
    """Frame airtime with the simplified symbol count (no header/CRC/FEC chain)."""
    if payload_bytes < 0:
        raise DomainError("payload_bytes must be >= 0")
    payload_symbols = math.ceil(8 * payload_bytes / cfg.sf) * (cfg.cr_denominator / 4)
    return (cfg.preamble_symbols + cfg.sfd_symbols + payload_symbols) * cfg.symbol_time
