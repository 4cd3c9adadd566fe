"""LoRaWAN MAC frame codec with the booster attempt counter.

Wire layout (little-endian multi-byte fields)::

    MHDR(1) | DevAddr(4) | FCtrl(1) | FCnt(2) | FOpts(0..15) | payload | MIC(4)

The low nibble of FCtrl carries the FOpts length.  The low three bits of the
last FOpts octet carry the transmission attempt (``attempt - 1``).  The MIC is
HMAC-SHA256 over every preceding byte, truncated to four bytes; it stands in
for AES-CMAC with a single network-wide key.
"""

from __future__ import annotations

import hashlib
import hmac
import struct
from dataclasses import dataclass, field, replace

from .errors import DomainError, IntegrityError, LengthError

MHDR_UNCONFIRMED_UP = 0x40
MHDR_UNCONFIRMED_DOWN = 0x60
MHDR_CONFIRMED_UP = 0x80
FCTRL_ACK = 0x20

MIN_FRAME_BYTES = 12
MAX_FOPTS = 15
MAX_ATTEMPTS = 8
KEY_BYTES = 16

# network-wide key shared by gateway, nodes and boosters
DEFAULT_KEY = bytes(range(KEY_BYTES))


@dataclass(frozen=True)
class Frame:
    mhdr: int
    dev_addr: int
    fcnt: int
    fctrl: int = 0
    fopts: bytes = b""
    payload: bytes = b""
    mic: bytes | None = field(default=None, compare=False)

    def __post_init__(self):
        if not 0 <= self.mhdr <= 0xFF:
            raise DomainError("mhdr must fit in one byte")
        if not 0 <= self.dev_addr <= 0xFFFFFFFF:
            raise DomainError("dev_addr must fit in four bytes")
        if not 0 <= self.fcnt <= 0xFFFF:
            raise DomainError("fcnt must fit in 16 bits")
        if len(self.fopts) > MAX_FOPTS:
            raise DomainError(f"fopts holds at most {MAX_FOPTS} bytes, got {len(self.fopts)}")
        object.__setattr__(self, "fopts", bytes(self.fopts))
        object.__setattr__(self, "payload", bytes(self.payload))
        object.__setattr__(self, "fctrl", (self.fctrl & 0xF0) | len(self.fopts))

    @property
    def is_uplink(self) -> bool:
        return self.mhdr in (MHDR_CONFIRMED_UP, MHDR_UNCONFIRMED_UP)

    @property
    def is_ack(self) -> bool:
        return not self.is_uplink and bool(self.fctrl & FCTRL_ACK)

    @property
    def wire_length(self) -> int:
        return MIN_FRAME_BYTES + len(self.fopts) + len(self.payload)


def compute_mic(data: bytes, key: bytes) -> bytes:
    return hmac.new(bytes(key), bytes(data), hashlib.sha256).digest()[:4]


def _header_and_body(f: Frame) -> bytes:
    return (
        struct.pack("<BIBH", f.mhdr, f.dev_addr, f.fctrl, f.fcnt)
        + f.fopts
        + f.payload
    )


def encode_frame(f: Frame, key: bytes = DEFAULT_KEY) -> bytes:
    if len(f.fopts) > MAX_FOPTS:
        raise DomainError("fopts too long")
    body = _header_and_body(f)
    return body + compute_mic(body, key)


def decode_frame(data: bytes, key: bytes = DEFAULT_KEY) -> Frame:
    """Parse a frame, raising :class:`IntegrityError` when the MIC does not verify."""
    data = bytes(data)
    if len(data) < MIN_FRAME_BYTES:
        raise LengthError(f"frame needs at least {MIN_FRAME_BYTES} bytes, got {len(data)}")
    mhdr, dev_addr, fctrl, fcnt = struct.unpack_from("<BIBH", data)
    n_opts = fctrl & 0x0F
    if 8 + n_opts + 4 > len(data):
        raise LengthError("FOpts length exceeds the buffer")
    body, mic = data[:-4], data[-4:]
    if not hmac.compare_digest(compute_mic(body, key), mic):
        raise IntegrityError("MIC mismatch")
    fopts = data[8 : 8 + n_opts]
    payload = data[8 + n_opts : -4]
    return Frame(mhdr, dev_addr, fcnt, fctrl, fopts, payload, mic=mic)


def set_attempt(f: Frame, attempt: int) -> Frame:
    """Return a copy of ``f`` whose attempt bits encode ``attempt`` (1..8)."""
    if not 1 <= attempt <= MAX_ATTEMPTS:
        raise DomainError(f"attempt must be in 1..{MAX_ATTEMPTS}, got {attempt}")
    opts = bytearray(f.fopts or b"\x00")
    opts[-1] = (opts[-1] & ~0x07) | (attempt - 1)
    return replace(f, fopts=bytes(opts), mic=None)


def get_attempt(f: Frame) -> int:
    if not f.fopts:
        raise DomainError("frame carries no attempt octet")
    return (f.fopts[-1] & 0x07) + 1


def uplink(dev_addr: int, fcnt: int, payload: bytes, attempt: int = 1, confirmed: bool = True) -> Frame:
    """An uplink with the single attempt octet in FOpts."""
    mhdr = MHDR_CONFIRMED_UP if confirmed else MHDR_UNCONFIRMED_UP
    return set_attempt(Frame(mhdr, dev_addr, fcnt, payload=payload), attempt)


def ack(dev_addr: int, fcnt_down: int) -> Frame:
    return Frame(MHDR_UNCONFIRMED_DOWN, dev_addr, fcnt_down, fctrl=FCTRL_ACK)
