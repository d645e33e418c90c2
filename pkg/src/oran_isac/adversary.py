"""Threat models: a passive fronthaul sniffer and an overshadowing spoofer.

Both are parameterised by how much of the victim waveform the attacker can
predict. The spoofer is placed at the sniffer RU antenna port, so any path
loss on the attacker side is folded into ``tx_power_ratio``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .channel import Target, target_response
from .fronthaul import CompressedIQ, SealedRDMap, decompress_bfp, nmse
from .processing import (RangeDopplerMap, ChannelGrid, Detection, _pair, estimate_channel,
                         match_detections, range_doppler_map)
from .waveform import (Numerology, ResourceGrid, REClass, SignalPlan, generate_grid,
                       qam_constellation)


class KnowledgeLevel(str, enum.Enum):
    NONE = "NONE"
    REFERENCE_ONLY = "REFERENCE_ONLY"
    PILOT_SEQUENCE = "PILOT_SEQUENCE"
    FULL_WAVEFORM = "FULL_WAVEFORM"


# predictable RE classes per level; deterministic pilots imply known references
_KNOWN_CLASSES = {
    KnowledgeLevel.NONE: (),
    KnowledgeLevel.REFERENCE_ONLY: (REClass.REFERENCE,),
    KnowledgeLevel.PILOT_SEQUENCE: (REClass.REFERENCE, REClass.PILOT),
    KnowledgeLevel.FULL_WAVEFORM: (REClass.PAYLOAD, REClass.REFERENCE, REClass.PILOT),
}


@dataclass(frozen=True, eq=False)
class AttackerKnowledge:
    level: KnowledgeLevel
    known_mask: np.ndarray

    @classmethod
    def from_plan(cls, level: KnowledgeLevel | str, plan: SignalPlan) -> "AttackerKnowledge":
        level = KnowledgeLevel(level)
        return cls(level, plan.mask(*_KNOWN_CLASSES[level]))

    @property
    def fraction(self) -> float:
        return float(self.known_mask.mean())


@dataclass(frozen=True)
class SpoofAttempt:
    fake_target: Target
    tx_power_ratio: float
    knowledge: KnowledgeLevel = KnowledgeLevel.FULL_WAVEFORM

    def __post_init__(self):
        if not self.tx_power_ratio > 0:
            raise ValueError("tx_power_ratio must be > 0")
        object.__setattr__(self, "knowledge", KnowledgeLevel(self.knowledge))


@dataclass(frozen=True)
class AttackReport:
    kind: str
    attacker_map_nmse: float | None = None
    fake_target_detected: bool = False
    fake_peak_snr: float | None = None
    true_targets_suppressed: int = 0
    access: bool = True

    def __post_init__(self):
        if self.attacker_map_nmse is not None and self.attacker_map_nmse < 0:
            raise ValueError("nmse must be >= 0")


@dataclass(frozen=True, eq=False)
class SniffResult:
    access: bool
    rd_map: RangeDopplerMap | None = None
    nmse: float | None = None


def sniff_fronthaul(stream, knowledge: AttackerKnowledge, tx_grid: ResourceGrid,
                    numerology: Numerology, defender_map: RangeDopplerMap | None = None,
                    pad_factor: int = 1, window: str | None = None,
                    remove_static: bool = True) -> SniffResult:
    """Rebuild a range-Doppler map from a tapped fronthaul stream.

    Only a DU-placement IQ stream is usable; a sealed map gives no access.
    The attacker divides by the TX symbols it can predict and rescales for
    the fraction it knows. With ``remove_static`` it first strips the
    static TX coupling, fitted on its known REs, as the defender does. An
    empty mask yields no map, scored as a zero estimate (NMSE 1).
    """
    if isinstance(stream, (SealedRDMap, bytes, bytearray)):
        return SniffResult(access=False)
    if not isinstance(stream, CompressedIQ):
        raise TypeError(f"cannot tap a {type(stream).__name__}")
    if not knowledge.known_mask.any():
        return SniffResult(True, None, 1.0 if defender_map is not None else None)
    rx = decompress_bfp(stream)
    est = estimate_channel(rx, tx_grid, knowledge.known_mask)
    if not est.known_mask.any():
        return SniffResult(True, None, 1.0 if defender_map is not None else None)
    h = est.data.copy()
    if remove_static:
        # least-squares static coupling fitted on the known REs only
        x = tx_grid.data[est.known_mask]
        h[est.known_mask] -= np.vdot(x, x * h[est.known_mask]) / np.vdot(x, x).real
    scale = est.known_mask.size / est.known_mask.sum()
    est = ChannelGrid(h * scale, est.known_mask, est.n_dropped)
    rd = range_doppler_map(est, pad_factor, numerology, window)
    err = None
    if defender_map is not None:
        err = nmse(defender_map.power, rd.power)
    return SniffResult(True, rd, err)


def spoof_inject(victim_plan: SignalPlan, attempt: SpoofAttempt, numerology: Numerology, *,
                 reflection_amplitude: float = 1.0, seed: int = 0,
                 tx_grid: ResourceGrid | None = None) -> ResourceGrid:
    """Additive overshadowing signal seen at the sniffer RU.

    Known REs carry the victim symbol with the fake delay/Doppler applied;
    the rest carry random unit-power QPSK with the same ramps. Amplitude is
    ``sqrt(tx_power_ratio) * reflection_amplitude``.
    """
    ramps = target_response(attempt.fake_target, numerology)
    if tx_grid is None:
        tx_grid = generate_grid(victim_plan, numerology)
    known = AttackerKnowledge.from_plan(attempt.knowledge, victim_plan).known_mask
    rng = np.random.default_rng(seed)
    sym = qam_constellation(4)[rng.integers(0, 4, size=numerology.shape)]
    sym = np.where(known, tx_grid.data, sym)
    amp = np.sqrt(attempt.tx_power_ratio) * reflection_amplitude
    return ResourceGrid(amp * sym * ramps, numerology)


def fake_peak_snr(rd_map: RangeDopplerMap, fake: Target, tol_bins=1) -> float | None:
    """Strongest map cell near a target's bin, in dB over the floor.

    ``tol_bins`` is one value or a (range, Doppler) pair.
    """
    k, l = rd_map.nearest_bin(fake.range, fake.radial_velocity)
    tk, tl = _pair(tol_bins)
    nr, nd = rd_map.shape
    if not (0 <= k < nr and 0 <= l < nd):
        return None
    win = rd_map.power[max(k - tk, 0):k + tk + 1, max(l - tl, 0):l + tl + 1]
    peak, floor = win.max(), rd_map.noise_floor_estimate
    if peak <= 0:
        return float("-inf")
    if floor <= 0:
        return float("inf")
    return float(10 * np.log10(peak / floor))


def evaluate_attack(clean: list[Detection], attacked: list[Detection],
                    targets, attempt: SpoofAttempt | None,
                    rd_map: RangeDopplerMap, tol_bins: int = 1) -> AttackReport:
    """Score a spoofing attempt from paired detection sets.

    ``rd_map`` is the attacked map and supplies the axes; ``targets`` are
    the true targets of the scene.
    """
    if attempt is None:
        return AttackReport("none")
    truths = [(t.range, t.radial_velocity) for t in targets]
    tk, tl = _pair(tol_bins)
    fake = attempt.fake_target
    fk, fl = rd_map.nearest_bin(fake.range, fake.radial_velocity)
    true_bins = [rd_map.nearest_bin(r, v) for r, v in truths]
    detected = False
    for d in attacked:
        if abs(d.range_bin - fk) <= tk and abs(d.doppler_bin - fl) <= tl:
            if not any(abs(d.range_bin - k) <= tk and abs(d.doppler_bin - l) <= tl
                       for k, l in true_bins):
                detected = True
                break
    before = match_detections(clean, truths, rd_map, tol_bins)
    after = match_detections(attacked, truths, rd_map, tol_bins)
    suppressed = sum(1 for i in before if i not in after)
    return AttackReport("spoof", None, detected, fake_peak_snr(rd_map, fake, tol_bins),
                        suppressed)
