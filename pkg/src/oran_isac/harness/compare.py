"""Placement and signal-type comparison tables built from full runs."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor

from ..adversary import KnowledgeLevel
from ..channel import Target
from ..fronthaul import CompressionConfig, Placement
from ..waveform import SignalType
from .config import AttackerConfig, Scenario
from .engine import run_scenario

MANTISSA_SWEEP = (12, 9, 6, 4)

PLACEMENT_COLUMNS = ("placement", "mantissa_bits", "bits_per_occasion",
                     "detection_probability", "mean_peak_snr_db", "attacker_nmse")
SIGNAL_COLUMNS = ("signal_type", "attacker_knowledge", "detection_probability",
                  "mean_range_error", "spoof_success_rate", "papr_db")

# a spoofer can at best predict what the victim's signal type exposes
SIGNAL_KNOWLEDGE = {
    SignalType.STOCHASTIC_DATA: KnowledgeLevel.NONE,
    SignalType.REFERENCE_ONLY: KnowledgeLevel.REFERENCE_ONLY,
    SignalType.PILOT: KnowledgeLevel.PILOT_SEQUENCE,
}

DEFAULT_FAKE = Target(42.0, 150.0)
DEFAULT_SPOOF_RATIO = 1.0


def _run_all(scenarios, workers: int):
    if workers <= 1:
        return [run_scenario(s) for s in scenarios]
    with ProcessPoolExecutor(workers) as pool:
        return list(pool.map(run_scenario, scenarios))


def placement_variants(base: Scenario, mantissas=MANTISSA_SWEEP) -> list[Scenario]:
    knowledge = KnowledgeLevel.FULL_WAVEFORM
    if base.attacker is not None and base.attacker.kind == "sniff":
        knowledge = base.attacker.knowledge
    sniff = AttackerConfig("sniff", knowledge)
    out = [base.replace(placement=Placement.RU_PROCESSING, attacker=sniff, control=None)]
    for b in mantissas:
        out.append(base.replace(placement=Placement.DU_PROCESSING, attacker=sniff, control=None,
                                compression=CompressionConfig(b, base.compression.block_size)))
    return out


def compare_placements(base: Scenario, mantissas=MANTISSA_SWEEP, *, workers: int = 1) -> list[dict]:
    """One RU row (mantissa width does not reach the sensing path) and one
    DU row per mantissa width. Peak SNR is read at the true target bins so
    that a missed target still counts against its row."""
    variants = placement_variants(base, mantissas)
    rows = []
    for sc, rep in zip(variants, _run_all(variants, workers)):
        a = rep.aggregate
        ru = sc.placement is Placement.RU_PROCESSING
        rows.append({
            "placement": sc.placement.value,
            "mantissa_bits": None if ru else sc.compression.mantissa_bits,
            "bits_per_occasion": a["fronthaul_bits_per_occasion"],
            "detection_probability": a["detection_probability"],
            "mean_peak_snr_db": a["mean_truth_snr_db"],
            "attacker_nmse": "no access" if not a["attacker_access"] else a["attacker_nmse"],
        })
    return rows


def signal_variants(base: Scenario) -> list[Scenario]:
    if base.attacker is not None and base.attacker.kind == "spoof":
        fake, ratio = base.attacker.fake_target, base.attacker.tx_power_ratio
    else:
        fake, ratio = DEFAULT_FAKE, DEFAULT_SPOOF_RATIO
    out = []
    for stype, know in SIGNAL_KNOWLEDGE.items():
        sig = base.signal.__class__(stype, base.signal.modulation_order, None, 0.0,
                                    base.signal.pilot_root)
        out.append(base.replace(signal=sig, control=None,
                                attacker=AttackerConfig("spoof", know, fake, ratio)))
    return out


def compare_signal_types(base: Scenario, *, workers: int = 1) -> list[dict]:
    """Rows per signal type; the spoofer knows exactly what that type exposes.

    Detection columns come from the attack-free run and the spoof column
    from the attacked run; both share every legitimate random draw.
    """
    attacked = signal_variants(base)
    clean = [sc.replace(attacker=None) for sc in attacked]
    reports = _run_all(clean + attacked, workers)
    rows = []
    for sc, c, a in zip(attacked, reports[:len(clean)], reports[len(clean):]):
        rows.append({
            "signal_type": sc.signal.signal_type.value,
            "attacker_knowledge": sc.attacker.knowledge.value,
            "detection_probability": c.aggregate["detection_probability"],
            "mean_range_error": c.aggregate["mean_range_error"],
            "spoof_success_rate": a.aggregate["fake_detection_rate"],
            "papr_db": c.aggregate["mean_papr_db"],
        })
    return rows
