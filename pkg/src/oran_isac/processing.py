"""Initial radar processing: channel estimation, periodogram, CA-CFAR.

Doppler convention: an approaching target (positive radial velocity) lands
in Doppler bins above the centre bin of the range-Doppler map.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import ndimage, signal

from .channel import SPEED_OF_LIGHT
from .waveform import Numerology, ResourceGrid

PAD_FACTORS = (1, 2, 4, 8)
ZERO_SYMBOL_THRESHOLD = 1e-6
LEAKAGE_ROUNDING_GUARD = 1e-10

# little-endian: 4 x u32 (n_range, n_doppler, pad, doppler_center),
# 4 x f64 (range_step, velocity_step, range_start, noise_floor)
_HEADER = struct.Struct("<4I4d")


@dataclass(frozen=True, eq=False)
class ChannelGrid:
    data: np.ndarray
    known_mask: np.ndarray
    n_dropped: int = 0

    def __post_init__(self):
        if self.data.shape != self.known_mask.shape:
            raise ValueError("channel data and mask shapes differ")
        self.data.setflags(write=False)
        self.known_mask.setflags(write=False)

    @property
    def density(self) -> float:
        return float(self.known_mask.mean())


class Resolution(NamedTuple):
    range_res: float
    velocity_res: float
    max_range: float
    max_velocity: float


def resolutions(numerology: Numerology, pad_factor: int = 1) -> Resolution:
    """Bin spacings and unambiguous extents of the map axes."""
    n, m = numerology.n_subcarriers, numerology.n_symbols
    df, fc, to = (numerology.subcarrier_spacing, numerology.carrier_freq,
                  numerology.symbol_duration_total)
    c = SPEED_OF_LIGHT
    return Resolution(c / (2 * n * df * pad_factor),
                      c / (2 * fc * m * to * pad_factor),
                      c / (2 * df),
                      c / (2 * fc * to))


@dataclass(frozen=True, eq=False)
class RangeDopplerMap:
    """Power over (range bin, Doppler bin) with evenly spaced axes."""

    power: np.ndarray
    range_step: float
    velocity_step: float
    doppler_center: int
    pad_factor: int = 1
    range_start: float = 0.0
    noise_floor_estimate: float | None = None

    def __post_init__(self):
        if self.power.ndim != 2:
            raise ValueError("power must be a 2-D array")
        if np.any(self.power < 0):
            raise ValueError("power values must be non-negative")
        if self.range_step <= 0 or self.velocity_step <= 0:
            raise ValueError("axis steps must be positive")
        if self.noise_floor_estimate is None:
            object.__setattr__(self, "noise_floor_estimate", float(np.median(self.power)))
        self.power.setflags(write=False)

    @property
    def shape(self) -> tuple[int, int]:
        return self.power.shape

    @property
    def range_axis(self) -> np.ndarray:
        return self.range_start + self.range_step * np.arange(self.shape[0])

    @property
    def velocity_axis(self) -> np.ndarray:
        return self.velocity_step * (np.arange(self.shape[1]) - self.doppler_center)

    def nearest_bin(self, range_m: float, velocity: float) -> tuple[int, int]:
        k = int(round((range_m - self.range_start) / self.range_step))
        l = int(round(velocity / self.velocity_step)) + self.doppler_center
        return k, l

    def crop(self, range_bins: int | None, doppler_bins: int | None) -> "RangeDopplerMap":
        """Region of interest: the first range bins, Doppler bins centred on 0."""
        nr, nd = self.shape
        r = nr if range_bins is None else min(range_bins, nr)
        d = nd if doppler_bins is None else min(doppler_bins, nd)
        if (r, d) == (nr, nd):
            return self
        start = min(max(self.doppler_center - d // 2, 0), nd - d)
        return RangeDopplerMap(np.array(self.power[:r, start:start + d]),
                               self.range_step, self.velocity_step,
                               self.doppler_center - start, self.pad_factor,
                               self.range_start)

    def to_bytes(self) -> bytes:
        nr, nd = self.shape
        head = _HEADER.pack(nr, nd, self.pad_factor, self.doppler_center,
                            self.range_step, self.velocity_step,
                            self.range_start, self.noise_floor_estimate)
        return head + np.ascontiguousarray(self.power, dtype="<f4").tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "RangeDopplerMap":
        if len(blob) < _HEADER.size:
            raise ValueError("range-Doppler blob shorter than its header")
        nr, nd, pad, center, rstep, vstep, rstart, floor = _HEADER.unpack_from(blob)
        body = blob[_HEADER.size:]
        if len(body) != 4 * nr * nd:
            raise ValueError(f"expected {4 * nr * nd} payload bytes, got {len(body)}")
        power = np.frombuffer(body, dtype="<f4").astype(float).reshape(nr, nd)
        return cls(power, rstep, vstep, center, pad, rstart, floor)

    @staticmethod
    def serialized_size(n_range: int, n_doppler: int) -> int:
        return _HEADER.size + 4 * n_range * n_doppler


@dataclass(frozen=True)
class Detection:
    range_bin: int
    doppler_bin: int
    est_range: float
    est_velocity: float
    peak_snr: float
    power: float = 0.0


def estimate_channel(rx_grid: ResourceGrid, tx_grid: ResourceGrid,
                     known_mask: np.ndarray | None = None) -> ChannelGrid:
    """Element-wise division ``Y/X`` on the known resource elements.

    Masked elements whose transmitted symbol is below
    ``ZERO_SYMBOL_THRESHOLD`` in magnitude are dropped and counted.
    """
    y, x = rx_grid.data, tx_grid.data
    if y.shape != x.shape:
        raise ValueError(f"rx {y.shape} and tx {x.shape} grids differ in shape")
    mask = np.ones(y.shape, bool) if known_mask is None else np.asarray(known_mask, bool)
    if mask.shape != y.shape:
        raise ValueError("known_mask shape does not match the grids")
    weak = mask & (np.abs(x) < ZERO_SYMBOL_THRESHOLD)
    mask = mask & ~weak
    h = np.zeros(y.shape, dtype=complex)
    h[mask] = y[mask] / x[mask]
    return ChannelGrid(h, mask, int(weak.sum()))


def cancel_leakage(rx_grid: ResourceGrid, tx_grid: ResourceGrid,
                   leakage_gain: complex | None = None) -> ResourceGrid:
    """Remove the static TX->sniffer coupling ``g * X``.

    With ``leakage_gain=None`` the coupling is the least-squares fit
    ``sum(conj(X) Y) / sum(|X|^2)``, which also absorbs any part of the
    fronthaul quantisation error that is coherent with ``X``. Residues
    below ``LEAKAGE_ROUNDING_GUARD`` times the fit (rounding level) are set
    to exactly zero.
    """
    x, y = tx_grid.data, rx_grid.data
    if leakage_gain is None:
        energy = np.vdot(x, x).real
        if energy == 0:
            return rx_grid
        leakage_gain = np.vdot(x, y) / energy
    if not leakage_gain:
        return rx_grid
    fit = leakage_gain * x
    out = y - fit
    # the fitted gain itself carries accumulated rounding error, hence the loose guard
    out[np.abs(out) <= LEAKAGE_ROUNDING_GUARD * np.abs(fit)] = 0
    return ResourceGrid(out, rx_grid.numerology)


def _taper(n: int, window: str | None) -> np.ndarray:
    if window is None:
        return np.ones(n)
    w = signal.get_window(window, n, fftbins=False)
    return w / np.sqrt(np.mean(w ** 2))


def range_doppler_map(channel_grid: ChannelGrid, pad_factor: int = 1,
                      numerology: Numerology | None = None,
                      window: str | None = None) -> RangeDopplerMap:
    """Zero-padded 2-D periodogram of the channel estimate.

    Inverse DFT over subcarriers gives range, forward DFT over symbols gives
    Doppler; power is normalised by N*M so that at ``pad_factor=1`` the map
    sums to the channel energy. Without ``numerology`` the axes are in bins.
    ``window`` names a scipy taper applied along both axes, scaled to unit
    mean power so white noise keeps its level; it suppresses the sinc
    sidelobes that zero-padding would otherwise expose as local maxima.
    """
    if pad_factor not in PAD_FACTORS:
        raise ValueError(f"pad_factor must be one of {PAD_FACTORS}")
    if not channel_grid.known_mask.any():
        raise ValueError("channel estimate has an empty known mask")
    h = channel_grid.data
    n, m = h.shape
    if window is not None:
        h = h * np.outer(_taper(n, window), _taper(m, window))
    nr, nd = pad_factor * n, pad_factor * m
    spec = np.fft.ifft(h, n=nr, axis=0) * nr
    spec = np.fft.fft(spec, n=nd, axis=1)
    power = np.fft.fftshift(np.abs(spec) ** 2 / (n * m), axes=1)
    if numerology is None:
        rstep = vstep = 1.0
    else:
        if numerology.shape != h.shape:
            raise ValueError("numerology does not match the channel grid")
        res = resolutions(numerology, pad_factor)
        rstep, vstep = res.range_res, res.velocity_res
    return RangeDopplerMap(power, rstep, vstep, nd // 2, pad_factor)


def cfar_alpha(p_fa: float, n_train_cells: int) -> float:
    """CA-CFAR scale for square-law detection of exponential noise."""
    return n_train_cells * (p_fa ** (-1.0 / n_train_cells) - 1.0)


def _pair(v) -> tuple[int, int]:
    if np.ndim(v) == 0:
        return int(v), int(v)
    a, b = v
    return int(a), int(b)


def _box_sum(x: np.ndarray, half: tuple[int, int]) -> np.ndarray:
    out = x
    for axis, h in enumerate(half):
        out = ndimage.correlate1d(out, np.ones(2 * h + 1), axis=axis, mode="wrap")
    return out


def ca_cfar(rd_map: RangeDopplerMap, p_fa: float, n_training=4, n_guard=2, *,
            exclude_range_bins: int = 0,
            min_relative_power: float = 1e-12) -> list[Detection]:
    """Cell-averaging CFAR with toroidal wrap and 8-neighbour peak picking.

    ``n_training`` and ``n_guard`` are cells per side, either one value or a
    (range, Doppler) pair. ``min_relative_power`` discards cells more than
    that factor below the map peak (floating-point residue of noise-free
    maps); ``exclude_range_bins`` blanks the leading range bins.
    """
    if not 0 < p_fa < 1:
        raise ValueError(f"p_fa must be in (0, 1), got {p_fa}")
    t, g = _pair(n_training), _pair(n_guard)
    if min(t) < 0 or min(g) < 0 or max(t) == 0:
        raise ValueError("training/guard sizes must be non-negative with training > 0")
    outer = (t[0] + g[0], t[1] + g[1])
    nr, nd = rd_map.shape
    if 2 * outer[0] + 1 > nr or 2 * outer[1] + 1 > nd:
        raise ValueError(f"CFAR window {2 * outer[0] + 1}x{2 * outer[1] + 1} "
                         f"larger than map {nr}x{nd}")
    n_train = (2 * outer[0] + 1) * (2 * outer[1] + 1) - (2 * g[0] + 1) * (2 * g[1] + 1)
    p = rd_map.power
    peak = p.max()
    if peak <= 0:
        return []
    train_sum = _box_sum(p, outer) - _box_sum(p, g)
    threshold = cfar_alpha(p_fa, n_train) * np.maximum(train_sum, 0.0) / n_train
    local_max = p >= ndimage.maximum_filter(p, size=3, mode="wrap")
    hit = (p > threshold) & local_max & (p > peak * min_relative_power)
    if exclude_range_bins:
        hit[:exclude_range_bins] = False
    floor = rd_map.noise_floor_estimate
    r_axis, v_axis = rd_map.range_axis, rd_map.velocity_axis
    dets = []
    for k, l in zip(*np.nonzero(hit)):
        pw = float(p[k, l])
        snr = 10 * np.log10(pw / floor) if floor > 0 else float("inf")
        dets.append(Detection(int(k), int(l), float(r_axis[k]), float(v_axis[l]),
                              float(snr), pw))
    return dets


def bins_to_physical(detection: Detection, rd_map: RangeDopplerMap) -> tuple[float, float]:
    k, l = detection.range_bin, detection.doppler_bin
    nr, nd = rd_map.shape
    if not (0 <= k < nr and 0 <= l < nd):
        raise ValueError(f"bin ({k}, {l}) outside map {nr}x{nd}")
    return float(rd_map.range_axis[k]), float(rd_map.velocity_axis[l])


def match_detections(detections: list[Detection], truths, rd_map: RangeDopplerMap,
                     tol_bins=1) -> dict[int, Detection]:
    """Pair each truth ``(range, velocity)`` with its strongest detection
    within ``tol_bins`` (one value or a (range, Doppler) pair)."""
    tk, tl = _pair(tol_bins)
    out = {}
    for i, (r, v) in enumerate(truths):
        k, l = rd_map.nearest_bin(r, v)
        near = [d for d in detections
                if abs(d.range_bin - k) <= tk and abs(d.doppler_bin - l) <= tl]
        if near:
            out[i] = max(near, key=lambda d: d.power)
    return out
