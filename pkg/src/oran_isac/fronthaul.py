"""Open fronthaul data path: BFP IQ compression, sealed range-Doppler maps,
and per-occasion load accounting for the two processing placements."""

from __future__ import annotations

import enum
import math
import os
import struct
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np
from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from .waveform import Numerology, ResourceGrid

EXPONENT_MIN, EXPONENT_MAX = -128, 127
DEFAULT_BLOCK_SIZE = 12
DEFAULT_MANTISSA_BITS = 9
DEFAULT_RD_MAP_DIMS = (256, 64)
TAG_BYTES = 16
NONCE_BYTES = 12
AAD_BYTES = 16


class Placement(str, enum.Enum):
    RU_PROCESSING = "RU_PROCESSING"
    DU_PROCESSING = "DU_PROCESSING"


class IntegrityError(Exception):
    """A sealed map failed authentication."""

    def __init__(self, slot_counter, reason="authentication failed"):
        super().__init__(f"slot {slot_counter}: {reason}")
        self.slot_counter = slot_counter


class NonceReuseError(RuntimeError):
    pass


# ---------------------------------------------------------------- compression

def mantissa_range(mantissa_bits: int) -> tuple[int, int]:
    """Usable mantissa interval.

    Symmetric two's-complement range for two or more bits, so that the
    exponent choice is idempotent; a single bit keeps {-1, 0}.
    """
    if not 1 <= mantissa_bits <= 16:
        raise ValueError(f"mantissa_bits must be in 1..16, got {mantissa_bits}")
    if mantissa_bits == 1:
        return -1, 0
    hi = (1 << (mantissa_bits - 1)) - 1
    return -hi, hi


@dataclass(frozen=True, eq=False)
class CompressedIQ:
    exponents: np.ndarray        # int8, one per block
    mantissas: np.ndarray        # int16, (n_blocks, block_size, 2) as (re, im)
    block_size: int
    mantissa_bits: int
    numerology: Numerology

    def __post_init__(self):
        n_res = self.numerology.n_subcarriers * self.numerology.n_symbols
        n_blocks = math.ceil(n_res / self.block_size)
        if self.mantissas.shape != (n_blocks, self.block_size, 2) or \
                self.exponents.shape != (n_blocks,):
            raise ValueError("malformed CompressedIQ block layout")
        lo, hi = mantissa_range(self.mantissa_bits)
        if self.mantissas.size and (self.mantissas.min() < lo or self.mantissas.max() > hi):
            raise ValueError("mantissa outside the configured bit width")

    @property
    def shape(self) -> tuple[int, int]:
        return self.numerology.shape

    @property
    def n_blocks(self) -> int:
        return self.exponents.shape[0]

    @property
    def n_bits(self) -> int:
        return self.n_blocks * (8 + self.block_size * 2 * self.mantissa_bits)

    def __eq__(self, other):
        if not isinstance(other, CompressedIQ):
            return NotImplemented
        return (self.block_size == other.block_size
                and self.mantissa_bits == other.mantissa_bits
                and self.numerology == other.numerology
                and np.array_equal(self.exponents, other.exponents)
                and np.array_equal(self.mantissas, other.mantissas))


def _blocks(data: np.ndarray, block_size: int) -> np.ndarray:
    flat = data.ravel(order="F")
    n_blocks = math.ceil(flat.size / block_size)
    buf = np.zeros(n_blocks * block_size, dtype=complex)
    buf[:flat.size] = flat
    buf = buf.reshape(n_blocks, block_size)
    return np.stack([buf.real, buf.imag], axis=-1)


def compress_bfp(grid: ResourceGrid, mantissa_bits: int = DEFAULT_MANTISSA_BITS,
                 block_size: int = DEFAULT_BLOCK_SIZE) -> CompressedIQ:
    """Block floating point: one shared exponent per block of REs.

    The exponent is the smallest e for which every ``round(v / 2**e)`` of
    the block fits the mantissa range; blocks that quantise to all-zero
    mantissas carry the minimum exponent.
    """
    lo, hi = mantissa_range(mantissa_bits)
    if block_size < 1:
        raise ValueError("block_size must be >= 1")
    if not np.all(np.isfinite(grid.data)):
        raise ValueError("cannot compress non-finite IQ samples")
    iq = _blocks(grid.data, block_size)
    maxabs = np.abs(iq).max(axis=(1, 2))
    nz = maxabs > 0
    e0 = np.full(maxabs.shape, EXPONENT_MIN, dtype=np.int64)
    # first guess, refined below by an exact fit test
    e0[nz] = np.ceil(np.log2(maxabs[nz] / max(hi, 0.5))).astype(np.int64)
    best = np.full(maxabs.shape, EXPONENT_MAX + 1, dtype=np.int64)
    for de in range(3, -4, -1):
        e = np.clip(e0 + de, EXPONENT_MIN, EXPONENT_MAX + 1)
        q = np.round(np.ldexp(iq, -e[:, None, None]))
        fits = ((q >= lo) & (q <= hi)).all(axis=(1, 2))
        best = np.where(fits, np.minimum(best, e), best)
    if np.any(best > EXPONENT_MAX):
        raise ValueError("IQ magnitude exceeds the exponent range")
    mant = np.round(np.ldexp(iq, -best[:, None, None])).astype(np.int16)
    best[~mant.any(axis=(1, 2))] = EXPONENT_MIN
    return CompressedIQ(best.astype(np.int8), mant, block_size, mantissa_bits,
                        grid.numerology)


def decompress_bfp(compressed: CompressedIQ) -> ResourceGrid:
    num = compressed.numerology
    vals = np.ldexp(compressed.mantissas.astype(float),
                    compressed.exponents.astype(np.int64)[:, None, None])
    flat = (vals[..., 0] + 1j * vals[..., 1]).ravel()
    n_res = num.n_subcarriers * num.n_symbols
    return ResourceGrid(flat[:n_res].reshape(num.shape, order="F"), num)


def nmse(reference: np.ndarray, estimate: np.ndarray) -> float:
    den = float(np.sum(np.abs(reference) ** 2))
    if den == 0:
        raise ValueError("NMSE undefined for an all-zero reference")
    return float(np.sum(np.abs(estimate - reference) ** 2) / den)


# -------------------------------------------------------------------- sealing

class AeadCipher(Protocol):
    """Authenticated encryption with associated data.

    ``seal`` returns ``ciphertext || tag`` (tag of ``tag_bytes``); ``open``
    raises :class:`IntegrityError` on any authentication failure.
    """

    tag_bytes: int
    nonce_bytes: int

    def seal(self, key: bytes, nonce: bytes, plaintext: bytes, aad: bytes) -> bytes: ...

    def open(self, key: bytes, nonce: bytes, ciphertext: bytes, aad: bytes) -> bytes: ...


class AesGcm:
    tag_bytes = TAG_BYTES
    nonce_bytes = NONCE_BYTES

    def seal(self, key, nonce, plaintext, aad):
        return AESGCM(key).encrypt(nonce, plaintext, aad)

    def open(self, key, nonce, ciphertext, aad):
        try:
            return AESGCM(key).decrypt(nonce, ciphertext, aad)
        except InvalidTag as exc:
            raise IntegrityError(None) from exc


@dataclass(eq=False)
class SealingKey:
    """Key material plus the nonce bookkeeping that belongs to it.

    Not thread-safe: one owner seals with a given key.
    """

    material: bytes
    cipher: AeadCipher = field(default_factory=AesGcm)
    _used: set = field(default_factory=set, repr=False)
    _counter: int = field(default=0, repr=False)

    @classmethod
    def generate(cls, seed: int | None = None) -> "SealingKey":
        if seed is None:
            return cls(os.urandom(16))
        return cls(np.random.default_rng(seed).bytes(16))

    def next_nonce(self) -> bytes:
        while True:
            nonce = self._counter.to_bytes(self.cipher.nonce_bytes, "big")
            self._counter += 1
            if nonce not in self._used:
                return nonce

    def claim(self, nonce: bytes) -> None:
        if nonce in self._used:
            raise NonceReuseError(f"nonce {nonce.hex()} already used with this key")
        self._used.add(nonce)


@dataclass(frozen=True)
class AssociatedData:
    cell_id: int
    slot_counter: int
    beam_index: int

    _FMT = struct.Struct("<IQI")

    def to_bytes(self) -> bytes:
        return self._FMT.pack(self.cell_id, self.slot_counter, self.beam_index)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "AssociatedData":
        return cls(*cls._FMT.unpack(blob))


@dataclass(frozen=True)
class SealedRDMap:
    ciphertext: bytes
    auth_tag: bytes
    associated_data: AssociatedData
    nonce: bytes

    def to_wire(self) -> bytes:
        aad = self.associated_data.to_bytes()
        return b"".join([struct.pack("<I", len(aad)), aad,
                         struct.pack("<I", len(self.nonce)), self.nonce,
                         struct.pack("<I", len(self.ciphertext)), self.ciphertext,
                         self.auth_tag])

    @classmethod
    def from_wire(cls, blob: bytes, tag_bytes: int = TAG_BYTES) -> "SealedRDMap":
        """Parse the wire layout; malformed input raises ``ValueError``."""
        parts, off = [], 0
        for _ in range(3):
            if off + 4 > len(blob):
                raise ValueError("truncated length field")
            (n,) = struct.unpack_from("<I", blob, off)
            off += 4
            if off + n > len(blob):
                raise ValueError("length field exceeds frame")
            parts.append(blob[off:off + n])
            off += n
        tag = blob[off:]
        if len(tag) != tag_bytes:
            raise ValueError(f"expected {tag_bytes}-byte tag, got {len(tag)}")
        aad, nonce, ct = parts
        if len(aad) != AssociatedData._FMT.size:
            raise ValueError("malformed associated data")
        return cls(ct, tag, AssociatedData.from_bytes(aad), nonce)


def seal_rd_map(rd_map_bytes: bytes, key: SealingKey, associated_data: AssociatedData,
                nonce: bytes | None = None) -> SealedRDMap:
    """Encrypt and authenticate a serialised map; reusing a nonce raises."""
    if nonce is None:
        nonce = key.next_nonce()
    key.claim(nonce)
    out = key.cipher.seal(key.material, nonce, rd_map_bytes, associated_data.to_bytes())
    t = key.cipher.tag_bytes
    return SealedRDMap(out[:-t], out[-t:], associated_data, nonce)


def open_rd_map(sealed: SealedRDMap | bytes, key: SealingKey,
                associated_data: AssociatedData | None = None) -> bytes:
    """Authenticate and decrypt; wire bytes are parsed first.

    When ``associated_data`` is given it replaces the one carried by the
    frame, so a mismatch fails authentication.
    """
    if isinstance(sealed, (bytes, bytearray)):
        try:
            sealed = SealedRDMap.from_wire(bytes(sealed), key.cipher.tag_bytes)
        except ValueError as exc:
            raise IntegrityError(None, f"malformed frame ({exc})") from exc
    aad = associated_data or sealed.associated_data
    try:
        return key.cipher.open(key.material, sealed.nonce,
                               sealed.ciphertext + sealed.auth_tag, aad.to_bytes())
    except IntegrityError as exc:
        raise IntegrityError(aad.slot_counter) from exc
    except ValueError as exc:  # e.g. a nonce of invalid length
        raise IntegrityError(aad.slot_counter, str(exc)) from exc


# ----------------------------------------------------------------------- load

@dataclass(frozen=True)
class CompressionConfig:
    mantissa_bits: int = DEFAULT_MANTISSA_BITS
    block_size: int = DEFAULT_BLOCK_SIZE

    def __post_init__(self):
        mantissa_range(self.mantissa_bits)
        if self.block_size < 1:
            raise ValueError("block_size must be >= 1")


@dataclass(frozen=True)
class FronthaulLoadReport:
    placement: Placement
    bits_per_slot: int
    breakdown: dict

    def __post_init__(self):
        if self.bits_per_slot != sum(self.breakdown.values()):
            raise ValueError("load breakdown does not sum to the total")


def fronthaul_load(placement: Placement | str, numerology: Numerology,
                   compression: CompressionConfig = CompressionConfig(),
                   rd_map_dims: tuple[int, int] = DEFAULT_RD_MAP_DIMS, *,
                   tag_bytes: int = TAG_BYTES, nonce_bytes: int = NONCE_BYTES,
                   aad_bytes: int = AAD_BYTES, include_framing: bool = False,
                   charge_tx_capture: bool = False) -> FronthaulLoadReport:
    """Fronthaul bits for one sensing occasion.

    DU placement ships the sniffer's compressed RX grid (the DU already
    holds the TX grid unless ``charge_tx_capture``). RU placement ships one
    sealed f32 map; ``include_framing`` adds the map header and the three
    u32 length fields of the wire frame.
    """
    placement = Placement(placement)
    if placement is Placement.DU_PROCESSING:
        n_res = numerology.n_subcarriers * numerology.n_symbols
        n_blocks = math.ceil(n_res / compression.block_size)
        iq = n_blocks * (8 + compression.block_size * 2 * compression.mantissa_bits)
        breakdown = {"sniffer_rx_iq": iq}
        if charge_tx_capture:
            breakdown["tx_capture_iq"] = iq
    else:
        nr, nd = rd_map_dims
        breakdown = {"rd_map_payload": 32 * nr * nd, "auth_tag": 8 * tag_bytes,
                     "nonce": 8 * nonce_bytes, "aad": 8 * aad_bytes}
        if include_framing:
            from .processing import RangeDopplerMap
            breakdown["rd_map_header"] = 8 * (RangeDopplerMap.serialized_size(0, 0))
            breakdown["length_fields"] = 3 * 32
    return FronthaulLoadReport(placement, int(sum(breakdown.values())), breakdown)
