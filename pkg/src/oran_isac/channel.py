"""Mono-static reflective channel from the communication RU to the sniffer RU.

The channel is applied per resource element in the frequency domain::

    Y[n,m] = sum_t g_t a_t X[n,m] exp(-j2pi n df tau_t) exp(+j2pi m T_o fd_t)
             + leak * X[n,m] + w[n,m]

Positive radial velocity means the target approaches the site.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .waveform import Numerology, ResourceGrid

SPEED_OF_LIGHT = 299_792_458.0
N_BEAMS = 64


@dataclass(frozen=True)
class Target:
    range: float
    radial_velocity: float = 0.0
    rcs: float = 1.0
    azimuth: float = 0.0

    def __post_init__(self):
        if not self.range > 0:
            raise ValueError(f"target range must be > 0, got {self.range}")
        if not self.rcs > 0:
            raise ValueError(f"target rcs must be > 0, got {self.rcs}")
        object.__setattr__(self, "azimuth", float(self.azimuth) % 360.0)


@dataclass(frozen=True)
class Scene:
    """Targets plus receiver impairments.

    Echo amplitudes are calibrated by ``reference_amplitude``: the per-RE
    amplitude of a 1 m^2 target at ``reference_range``.
    """

    targets: tuple[Target, ...] = ()
    noise_power: float = 0.0
    leakage_gain: float = 1e-3
    rng_seed: int = 0
    reference_range: float = 10.0
    reference_amplitude: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(self.targets))
        if self.noise_power < 0:
            raise ValueError("noise_power must be >= 0")
        if not 0 <= self.leakage_gain < 1:
            raise ValueError("leakage_gain must be in [0, 1)")
        if self.reference_range <= 0:
            raise ValueError("reference_range must be > 0")

    def without(self, index: int) -> "Scene":
        t = self.targets[:index] + self.targets[index + 1:]
        return Scene(t, self.noise_power, self.leakage_gain, self.rng_seed,
                     self.reference_range, self.reference_amplitude)


@dataclass(frozen=True)
class BeamConfig:
    beam_index: int = 0
    sector_start: float = 0.0
    sector_width: float = 120.0
    beamwidth: float = 4.0

    def __post_init__(self):
        if not 0 <= self.beam_index < N_BEAMS:
            raise ValueError(f"beam_index must be in [0, {N_BEAMS - 1}], got {self.beam_index}")
        if self.beamwidth <= 0:
            raise ValueError("beamwidth must be > 0")
        if self.sector_width <= 0:
            raise ValueError("sector_width must be > 0")

    @property
    def boresight(self) -> float:
        return self.sector_start + (self.beam_index + 0.5) * self.sector_width / N_BEAMS

    def with_beam(self, beam_index: int) -> "BeamConfig":
        return BeamConfig(beam_index, self.sector_start, self.sector_width, self.beamwidth)


def round_trip_delay(range_m: float) -> float:
    if range_m < 0:
        raise ValueError(f"range must be >= 0, got {range_m}")
    return 2.0 * range_m / SPEED_OF_LIGHT


def doppler_shift(radial_velocity: float, carrier_freq: float) -> float:
    return 2.0 * radial_velocity * carrier_freq / SPEED_OF_LIGHT


def reflection_amplitude(target: Target, carrier_freq: float,
                         reference_range: float, reference_amplitude: float) -> float:
    """Echo amplitude following the R^-4 power law.

    ``carrier_freq`` is accepted for interface symmetry; wavelength terms are
    folded into the calibration pair.
    """
    if target.range <= 0:
        raise ValueError("target range must be > 0")
    return reference_amplitude * np.sqrt(target.rcs) * (reference_range / target.range) ** 2


def beam_gain(beam_config: BeamConfig, azimuth: float) -> float:
    """Raised-cosine beam pattern, 1 at boresight and 0 beyond one beamwidth."""
    off = (azimuth - beam_config.boresight + 180.0) % 360.0 - 180.0
    if abs(off) >= beam_config.beamwidth:
        return 0.0
    return 0.5 * (1.0 + np.cos(np.pi * off / beam_config.beamwidth))


def _gain(beams, azimuth: float) -> float:
    if beams is None:
        return 1.0
    if isinstance(beams, BeamConfig):
        return beam_gain(beams, azimuth)
    return max(beam_gain(b, azimuth) for b in beams)


def max_unambiguous_range(numerology: Numerology) -> float:
    return SPEED_OF_LIGHT / (2.0 * numerology.subcarrier_spacing)


def target_response(target: Target, numerology: Numerology) -> np.ndarray:
    """Unit-amplitude delay/Doppler phase ramps, shape (N, M)."""
    tau = round_trip_delay(target.range)
    if tau * numerology.subcarrier_spacing >= 1:
        raise ValueError(
            f"target at {target.range} m is beyond the unambiguous range "
            f"{max_unambiguous_range(numerology):.3f} m (tau*df = "
            f"{tau * numerology.subcarrier_spacing:.4f} >= 1)")
    fd = doppler_shift(target.radial_velocity, numerology.carrier_freq)
    n = np.arange(numerology.n_subcarriers)
    m = np.arange(numerology.n_symbols)
    rng_ramp = np.exp(-2j * np.pi * n * numerology.subcarrier_spacing * tau)
    dop_ramp = np.exp(2j * np.pi * m * numerology.symbol_duration_total * fd)
    return np.outer(rng_ramp, dop_ramp)


def complex_noise(shape, power: float, rng: np.random.Generator) -> np.ndarray:
    """Circularly-symmetric complex Gaussian samples of variance ``power``."""
    w = rng.standard_normal((*np.atleast_1d(shape), 2))
    return np.sqrt(power / 2.0) * (w[..., 0] + 1j * w[..., 1])


def apply_channel(tx_grid: ResourceGrid, scene: Scene,
                  beam_config: BeamConfig | Sequence[BeamConfig] | None = None) -> ResourceGrid:
    """Received grid at the sniffer RU.

    With several beams the per-target gain is the best of them; ``None``
    means an isotropic receiver (gain 1).
    """
    num = tx_grid.numerology
    x = tx_grid.data
    h = np.zeros(num.shape, dtype=complex)
    for t in scene.targets:
        g = _gain(beam_config, t.azimuth)
        resp = target_response(t, num)  # validates range even when g == 0
        if g == 0.0:
            continue
        a = reflection_amplitude(t, num.carrier_freq, scene.reference_range,
                                 scene.reference_amplitude)
        h += (g * a) * resp
    y = h * x
    if scene.leakage_gain:
        y = y + scene.leakage_gain * x
    if scene.noise_power > 0:
        rng = np.random.default_rng(scene.rng_seed)
        y = y + complex_noise(num.shape, scene.noise_power, rng)
    return ResourceGrid(y, num)
