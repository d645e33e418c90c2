"""Downlink OFDM resource grids for sensing.

Three signal plans are supported: stochastic user data (optionally with an
embedded reference lattice and embedded sensing pilots), communication
reference signals only, and dedicated Zadoff-Chu sensing pilots.

Constellations are Gray-mapped square QAM scaled to unit average power:

    =====  ==========
    order  scale
    =====  ==========
    4      1/sqrt(2)
    16     1/sqrt(10)
    64     1/sqrt(42)
    256    1/sqrt(170)
    =====  ==========
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

#: Seed of the fixed QPSK pattern carried by REFERENCE resource elements.
REFERENCE_PATTERN_SEED = 0x0DA7A5EED

#: Default density of the reference lattice (a configurable choice).
DEFAULT_REFERENCE_DENSITY = 1 / 12

#: Oversampling used by :func:`papr`.
PAPR_OVERSAMPLING = 4

QAM_SCALE = {4: 1 / math.sqrt(2), 16: 1 / math.sqrt(10),
             64: 1 / math.sqrt(42), 256: 1 / math.sqrt(170)}


class REClass(enum.IntEnum):
    EMPTY = 0
    PAYLOAD = 1
    REFERENCE = 2
    PILOT = 3


class SignalType(str, enum.Enum):
    STOCHASTIC_DATA = "STOCHASTIC_DATA"
    REFERENCE_ONLY = "REFERENCE_ONLY"
    PILOT = "PILOT"


@dataclass(frozen=True)
class Numerology:
    """OFDM parameters of one sensing occasion.

    ``symbol_duration_total`` includes the cyclic prefix; when omitted it
    defaults to the NR normal-CP value ``(2048 + 144) / (2048 * scs)``.
    """

    n_subcarriers: int
    n_symbols: int
    subcarrier_spacing: float = 30e3
    carrier_freq: float = 3.5e9
    symbol_duration_total: float | None = None

    def __post_init__(self):
        if self.n_subcarriers < 2 or self.n_symbols < 2:
            raise ValueError(
                f"degenerate grid {self.n_subcarriers}x{self.n_symbols}; "
                "need at least 2 subcarriers and 2 symbols")
        if self.subcarrier_spacing <= 0 or self.carrier_freq <= 0:
            raise ValueError("subcarrier_spacing and carrier_freq must be > 0")
        if self.symbol_duration_total is None:
            object.__setattr__(self, "symbol_duration_total",
                               (2048 + 144) / (2048 * self.subcarrier_spacing))
        # small slack so that T_o == 1/scs computed in floating point passes
        if self.symbol_duration_total * self.subcarrier_spacing < 1 - 1e-12:
            raise ValueError("symbol_duration_total must be >= 1/subcarrier_spacing")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_subcarriers, self.n_symbols)

    @property
    def bandwidth(self) -> float:
        return self.n_subcarriers * self.subcarrier_spacing

    def replace(self, **changes) -> "Numerology":
        kw = dict(n_subcarriers=self.n_subcarriers, n_symbols=self.n_symbols,
                  subcarrier_spacing=self.subcarrier_spacing,
                  carrier_freq=self.carrier_freq,
                  symbol_duration_total=self.symbol_duration_total)
        kw.update(changes)
        return Numerology(**kw)


@dataclass(frozen=True, eq=False)
class SignalPlan:
    classes: np.ndarray
    signal_type: SignalType
    modulation_order: int = 4
    pilot_root: int = 1
    payload_seed: int = 0
    reference_density: float = 0.0
    pilot_density: float = 0.0

    def __post_init__(self):
        self.classes.setflags(write=False)

    @property
    def shape(self) -> tuple[int, int]:
        return self.classes.shape

    @property
    def occupied(self) -> np.ndarray:
        return self.classes != REClass.EMPTY

    def mask(self, *classes: REClass) -> np.ndarray:
        return np.isin(self.classes, [int(c) for c in classes])

    def count(self, re_class: REClass) -> int:
        return int(np.count_nonzero(self.classes == re_class))


@dataclass(frozen=True, eq=False)
class ResourceGrid:
    data: np.ndarray
    numerology: Numerology

    def __post_init__(self):
        if self.data.shape != self.numerology.shape:
            raise ValueError(f"grid shape {self.data.shape} does not match "
                             f"numerology {self.numerology.shape}")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("resource grid contains non-finite entries")
        self.data.setflags(write=False)

    def __add__(self, other: "ResourceGrid") -> "ResourceGrid":
        return ResourceGrid(self.data + other.data, self.numerology)


def _lattice(candidates: np.ndarray, density: float) -> np.ndarray:
    """Pick a regular lattice of ``density`` among the True cells.

    Cells are walked in column-major order (subcarrier fastest) and cell i
    of the walk is picked when ``floor((i+1)*d) > floor(i*d)``; with
    ``d = 1/K`` and K dividing the column length this is a comb of spacing K.
    """
    d = Fraction(density).limit_denominator(1 << 20)
    flat = np.flatnonzero(candidates.ravel(order="F"))
    i = np.arange(flat.size, dtype=np.int64)
    picked = ((i + 1) * d.numerator) // d.denominator > (i * d.numerator) // d.denominator
    out = np.zeros(candidates.size, dtype=bool)
    out[flat[picked]] = True
    return out.reshape(candidates.shape, order="F")


def build_signal_plan(numerology: Numerology, signal_type: SignalType | str,
                      reference_density: float | None = None, seed: int = 0, *,
                      modulation_order: int = 4, pilot_root: int = 1,
                      pilot_density: float = 0.0) -> SignalPlan:
    """Assign a class to every resource element.

    For STOCHASTIC_DATA, ``reference_density`` and ``pilot_density`` reserve
    embedded REFERENCE and PILOT lattices (both default to 0, i.e. pure
    payload). For REFERENCE_ONLY the density defaults to 1/12.
    """
    signal_type = SignalType(signal_type)
    shape = numerology.shape
    if modulation_order not in QAM_SCALE:
        raise ValueError(f"modulation_order must be one of {sorted(QAM_SCALE)}")
    if math.gcd(pilot_root, numerology.n_subcarriers) != 1:
        raise ValueError(f"pilot_root {pilot_root} not coprime with pilot "
                         f"length {numerology.n_subcarriers}")

    classes = np.full(shape, REClass.EMPTY, dtype=np.int8)
    if signal_type is SignalType.REFERENCE_ONLY:
        if reference_density is None:
            reference_density = DEFAULT_REFERENCE_DENSITY
        if not 0 < reference_density <= 1:
            raise ValueError(f"reference_density must be in (0, 1], got {reference_density}")
        classes[_lattice(np.ones(shape, bool), reference_density)] = REClass.REFERENCE
        pilot_density = 0.0
    elif signal_type is SignalType.PILOT:
        classes[:] = REClass.PILOT
        reference_density, pilot_density = 0.0, 1.0
    else:
        reference_density = reference_density or 0.0
        if not 0 <= reference_density <= 1 or not 0 <= pilot_density <= 1:
            raise ValueError("embedded densities must be in [0, 1]")
        classes[:] = REClass.PAYLOAD
        if reference_density > 0:
            classes[_lattice(np.ones(shape, bool), reference_density)] = REClass.REFERENCE
        if pilot_density > 0:
            free = classes == REClass.PAYLOAD
            # density is relative to the whole grid
            rel = min(1.0, pilot_density * classes.size / max(int(free.sum()), 1))
            classes[_lattice(free, rel)] = REClass.PILOT
    return SignalPlan(classes, signal_type, modulation_order, pilot_root, seed,
                      float(reference_density), float(pilot_density))


def qam_constellation(order: int) -> np.ndarray:
    """Unit-average-power Gray-mapped square QAM, indexed by symbol label."""
    if order not in QAM_SCALE:
        raise ValueError(f"unsupported QAM order {order}")
    side = math.isqrt(order)
    bits = side.bit_length() - 1
    levels = 2 * np.arange(side) - (side - 1)
    # gray label g sits at amplitude level gray_inverse(g)
    gray = np.arange(side) ^ (np.arange(side) >> 1)
    amp = np.empty(side)
    amp[gray] = levels
    labels = np.arange(order)
    i_lab, q_lab = labels >> bits, labels & (side - 1)
    return (amp[i_lab] + 1j * amp[q_lab]) * QAM_SCALE[order]


def zadoff_chu(root: int, length: int) -> np.ndarray:
    """Zadoff-Chu sequence ``exp(-j*pi*u*k*(k+c)/L)``, c = L mod 2."""
    if length < 1:
        raise ValueError("length must be >= 1")
    if math.gcd(root, length) != 1:
        raise ValueError(f"root {root} is not coprime with length {length}")
    k = np.arange(length, dtype=np.int64)
    # reduce the exponent modulo 2L before scaling to keep phases exact
    num = (root * k * (k + length % 2)) % (2 * length)
    return np.exp(-1j * np.pi * num / length)


def reference_pattern(shape: tuple[int, int]) -> np.ndarray:
    rng = np.random.default_rng(REFERENCE_PATTERN_SEED)
    return qam_constellation(4)[rng.integers(0, 4, size=shape)]


def generate_grid(plan: SignalPlan, numerology: Numerology) -> ResourceGrid:
    if plan.shape != numerology.shape:
        raise ValueError(f"plan shape {plan.shape} does not match numerology "
                         f"{numerology.shape}")
    data = np.zeros(numerology.shape, dtype=complex)
    payload = plan.classes == REClass.PAYLOAD
    if payload.any():
        rng = np.random.default_rng(plan.payload_seed)
        const = qam_constellation(plan.modulation_order)
        labels = rng.integers(0, plan.modulation_order, size=numerology.shape)
        data[payload] = const[labels][payload]
    ref = plan.classes == REClass.REFERENCE
    if ref.any():
        data[ref] = reference_pattern(numerology.shape)[ref]
    pilot = plan.classes == REClass.PILOT
    if pilot.any():
        zc = zadoff_chu(plan.pilot_root, numerology.n_subcarriers)
        data[pilot] = np.broadcast_to(zc[:, None], numerology.shape)[pilot]
    return ResourceGrid(data, numerology)


def time_domain(grid: ResourceGrid | np.ndarray,
                oversampling: int = PAPR_OVERSAMPLING) -> np.ndarray:
    """Per-symbol inverse DFT with zero padding, shape ``(os*N, M)``."""
    x = grid.data if isinstance(grid, ResourceGrid) else np.asarray(grid)
    n = x.shape[0]
    return np.fft.ifft(x, n=oversampling * n, axis=0)


def papr(grid: ResourceGrid | np.ndarray) -> float:
    """Peak-to-average power ratio in dB of the oversampled time signal."""
    x = grid.data if isinstance(grid, ResourceGrid) else np.asarray(grid)
    if x.size == 0 or not np.any(x):
        raise ValueError("PAPR undefined for an empty or all-zero grid")
    p = np.abs(time_domain(x)) ** 2
    return float(10 * np.log10(p.max() / p.mean()))


def write_grid_csv(grid: ResourceGrid, path: str | Path) -> None:
    """One row per subcarrier, ``re,im`` column pairs per symbol."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        header = []
        for m in range(grid.data.shape[1]):
            header += [f"re{m}", f"im{m}"]
        w.writerow(header)
        for row in grid.data:
            w.writerow([repr(float(v)) for z in row for v in (z.real, z.imag)])


def read_grid_csv(path: str | Path, numerology: Numerology) -> ResourceGrid:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    arr = np.array(rows, dtype=float)
    return ResourceGrid(arr[:, 0::2] + 1j * arr[:, 1::2], numerology)
