"""End-to-end occasion loop: generate, propagate, ship, detect, control, attack."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from ..adversary import (AttackerKnowledge, SpoofAttempt, evaluate_attack, fake_peak_snr,
                         sniff_fronthaul, spoof_inject)
from ..channel import Scene, apply_channel, reflection_amplitude
from ..control import SensingController, assess_quality, decode_beam_bitmap
from ..fronthaul import (AssociatedData, IntegrityError, Placement, SealingKey,
                         compress_bfp, decompress_bfp, fronthaul_load, nmse, open_rd_map,
                         seal_rd_map)
from ..processing import (RangeDopplerMap, ca_cfar, cancel_leakage, estimate_channel,
                          match_detections, range_doppler_map)
from ..waveform import Numerology, SignalType, build_signal_plan, generate_grid, papr
from .config import SUBCARRIERS_PER_RB, SYMBOLS_PER_SLOT, Scenario


class Stream(enum.IntEnum):
    """Substream labels; each stochastic consumer draws from its own stream."""

    PAYLOAD = 1
    NOISE = 2
    SPOOF = 3
    KEY = 4
    TAMPER = 5


def substream_seed(master_seed: int, occasion_id: int, stream: Stream) -> int:
    """Counter-based seed for one (occasion, consumer) pair.

    Adding or removing a consumer never shifts another consumer's draws,
    so attacked and clean runs share their noise realisations.
    """
    seq = np.random.SeedSequence([master_seed, occasion_id, int(stream)])
    return int(seq.generate_state(1, np.uint64)[0])


class ScenarioRuntimeError(RuntimeError):
    def __init__(self, occasion_id: int, exc: Exception):
        super().__init__(f"occasion {occasion_id}: {type(exc).__name__}: {exc}")
        self.occasion_id = occasion_id


@dataclass
class RunReport:
    scenario_id: str
    master_seed: int
    records: list[dict] = field(default_factory=list)
    aggregate: dict = field(default_factory=dict)


def _db_mean(values) -> float | None:
    values = [v for v in values if v is not None]
    if not values:
        return None
    lin = float(np.mean([10 ** (v / 10) for v in values]))
    return float(10 * np.log10(lin)) if lin > 0 else -math.inf


def _mean(values) -> float | None:
    values = [v for v in values if v is not None]
    return float(np.mean(values)) if values else None


def aggregate(records: list[dict]) -> dict:
    """Run-level metrics; a pure function of the per-occasion records."""
    n_truth = sum(r["n_targets"] for r in records)
    matched = sum(len(r["matched"]) for r in records)
    attacks = [r["attack"] for r in records if r["attack"] is not None]
    spoofs = [a for a in attacks if a["kind"] == "spoof"]
    sniffs = [a for a in attacks if a["kind"] == "sniff"]
    out = {
        "n_occasions": len(records),
        "n_targets": n_truth,
        "detection_probability": matched / n_truth if n_truth else None,
        "false_alarms": sum(r["false_alarms"] for r in records),
        "false_alarms_per_occasion": (sum(r["false_alarms"] for r in records) / len(records)
                                      if records else None),
        "mean_range_error": _mean([abs(m["range_error"]) for r in records for m in r["matched"]]),
        "mean_velocity_error": _mean([abs(m["velocity_error"])
                                      for r in records for m in r["matched"]]),
        "mean_peak_snr_db": _db_mean([m["peak_snr"] for r in records for m in r["matched"]]),
        "mean_truth_snr_db": _db_mean([v for r in records for v in r["truth_peak_snr"]]),
        "fronthaul_bits_total": sum(r["fronthaul_bits"] for r in records),
        "fronthaul_bits_per_occasion": (sum(r["fronthaul_bits"] for r in records) / len(records)
                                        if records else None),
        "integrity_failures": sum(r["flags"]["integrity_failure"] for r in records
                                  if r["flags"] is not None),
        "spoof_flags": sum(r["flags"]["suspected_spoof"] for r in records
                           if r["flags"] is not None),
        "fake_detection_rate": (sum(a["fake_target_detected"] for a in spoofs) / len(spoofs)
                                if spoofs else None),
        "attacker_access": (any(a["access"] for a in sniffs) if sniffs else None),
        "attacker_nmse": _mean([a["attacker_map_nmse"] for a in sniffs]),
        "mean_papr_db": _mean([r["papr_db"] for r in records]),
    }
    return out


def _numerology_for(base: Numerology, policy) -> Numerology:
    if policy is None:
        return base
    return base.replace(n_subcarriers=SUBCARRIERS_PER_RB * policy.bwp_n_rb,
                        n_symbols=SYMBOLS_PER_SLOT * policy.dl_slots)


def _scene_with_seed(scene: Scene, seed: int) -> Scene:
    return Scene(scene.targets, scene.noise_power, scene.leakage_gain, seed,
                 scene.reference_range, scene.reference_amplitude)


def plausible_snr_db(scenario: Scenario, num: Numerology) -> float | None:
    """Peak-to-median SNR of a 1 m^2 echo at the reference range."""
    sc = scenario.scene
    if sc.noise_power <= 0 or sc.reference_amplitude <= 0:
        return None
    coherent = sc.reference_amplitude ** 2 * num.n_subcarriers * num.n_symbols / sc.noise_power
    return float(10 * np.log10(coherent / math.log(2)))


def _detection_dict(d) -> dict:
    return {"range_bin": d.range_bin, "doppler_bin": d.doppler_bin,
            "est_range": d.est_range, "est_velocity": d.est_velocity, "peak_snr": d.peak_snr}


class _Runner:
    def __init__(self, scenario: Scenario):
        self.s = scenario
        self.controller = None
        if scenario.control is not None:
            det = scenario.control.detector
            if scenario.control.auto_plausible_snr:
                det = replace(det, max_plausible_snr_db=plausible_snr_db(
                    scenario, scenario.numerology))
            self.controller = SensingController(scenario.control.policy, det,
                                                scenario.control.history_window)
        self.key_epoch = 0
        self.key = self._new_key()

    def _new_key(self) -> SealingKey:
        seed = substream_seed(self.s.master_seed, self.key_epoch, Stream.KEY)
        return SealingKey.generate(seed)

    def beams(self):
        if self.s.beam is None:
            return None, 0
        if self.controller is not None:
            idx = decode_beam_bitmap(self.controller.policy.beam_bitmap)
        else:
            idx = list(self.s.beam.beam_indices)
        return self.s.beam.configs(idx), idx[0]

    def occasion(self, oid: int) -> dict:
        s = self.s
        policy = self.controller.policy if self.controller else None
        num = _numerology_for(s.numerology, policy)
        if policy is not None:
            sched = policy.probe_schedule
            stype = SignalType(sched[oid % len(sched)])
        else:
            stype = s.signal.signal_type
        sig = s.signal
        if stype is sig.signal_type:
            plan = build_signal_plan(num, stype, sig.reference_density,
                                     substream_seed(s.master_seed, oid, Stream.PAYLOAD),
                                     modulation_order=sig.modulation_order,
                                     pilot_root=sig.pilot_root, pilot_density=sig.pilot_density)
        else:
            plan = build_signal_plan(num, stype, None,
                                     substream_seed(s.master_seed, oid, Stream.PAYLOAD),
                                     modulation_order=sig.modulation_order,
                                     pilot_root=sig.pilot_root)
        tx = generate_grid(plan, num)
        beams, lead_beam = self.beams()
        scene = _scene_with_seed(s.scene, substream_seed(s.master_seed, oid, Stream.NOISE))
        rx = apply_channel(tx, scene, beams)

        att = s.attacker
        attempt = None
        if att is not None and att.kind == "spoof":
            attempt = SpoofAttempt(att.fake_target, att.tx_power_ratio, att.knowledge)
            rx = rx + spoof_inject(plan, attempt, num,
                                   reflection_amplitude=s.scene.reference_amplitude,
                                   seed=substream_seed(s.master_seed, oid, Stream.SPOOF),
                                   tx_grid=tx)

        proc = s.processing
        roi = proc.roi
        load = fronthaul_load(s.placement, num, s.compression,
                              roi if roi is not None else (proc.pad_factor * num.n_subcarriers,
                                                           proc.pad_factor * num.n_symbols))

        def sense(rx_grid) -> RangeDopplerMap:
            clean = cancel_leakage(rx_grid, tx)
            rd = range_doppler_map(estimate_channel(clean, tx, plan.occupied), proc.pad_factor,
                                   num, proc.window)
            return rd.crop(*roi) if roi is not None else rd

        integrity_failure = False
        attack = None
        rd = None
        if s.placement is Placement.RU_PROCESSING:
            ru_map = sense(rx)
            aad = AssociatedData(proc.cell_id, oid, lead_beam)
            wire = seal_rd_map(ru_map.to_bytes(), self.key, aad).to_wire()
            if att is not None and att.kind == "tamper" and (
                    att.tamper_occasions is None or oid in att.tamper_occasions):
                rng = np.random.default_rng(substream_seed(s.master_seed, oid, Stream.TAMPER))
                bit = int(rng.integers(0, 8 * len(wire)))
                buf = bytearray(wire)
                buf[bit // 8] ^= 1 << (bit % 8)
                wire = bytes(buf)
                attack = {"kind": "tamper", "bit": bit}
            try:
                rd = RangeDopplerMap.from_bytes(open_rd_map(wire, self.key, aad))
            except IntegrityError:
                integrity_failure = True
            if att is not None and att.kind == "sniff":
                res = sniff_fronthaul(wire, AttackerKnowledge.from_plan(att.knowledge, plan),
                                      tx, num)
                attack = {"kind": "sniff", "access": res.access, "attacker_map_nmse": None}
        else:
            iq = compress_bfp(rx, s.compression.mantissa_bits, s.compression.block_size)
            rd = sense(decompress_bfp(iq))
            if att is not None and att.kind == "sniff":
                know = AttackerKnowledge.from_plan(att.knowledge, plan)
                res = sniff_fronthaul(iq, know, tx, num, pad_factor=proc.pad_factor,
                                      window=proc.window)
                ref = sense(rx)
                if not ref.power.any():
                    err = None  # nothing to reconstruct
                elif res.rd_map is None:
                    err = 1.0
                else:
                    got = res.rd_map.crop(*roi) if roi is not None else res.rd_map
                    err = nmse(ref.power, got.power)
                attack = {"kind": "sniff", "access": True, "attacker_map_nmse": err}

        truths = [(t.range, t.radial_velocity) for t in s.scene.targets]
        detections, matched, false_alarms, truth_snr = [], [], 0, []
        if rd is not None:
            c = s.cfar
            detections = ca_cfar(rd, c.p_fa, c.n_training, c.n_guard,
                                 exclude_range_bins=c.exclude_range_bins)
            tol = c.tolerance(proc.pad_factor)
            hits = match_detections(detections, truths, rd, tol)
            for i, d in sorted(hits.items()):
                matched.append({"target": i, "range_error": d.est_range - truths[i][0],
                                "velocity_error": d.est_velocity - truths[i][1],
                                "peak_snr": d.peak_snr})
            truth_snr = [fake_peak_snr(rd, t, max(tol)) for t in s.scene.targets]
            fake_bin = None
            if attempt is not None:
                fake_bin = rd.nearest_bin(attempt.fake_target.range,
                                          attempt.fake_target.radial_velocity)
            for d in detections:
                near_truth = any(abs(d.range_bin - k) <= tol[0] and abs(d.doppler_bin - l) <= tol[1]
                                 for k, l in (rd.nearest_bin(r, v) for r, v in truths))
                near_fake = fake_bin is not None and (
                    abs(d.range_bin - fake_bin[0]) <= tol[0]
                    and abs(d.doppler_bin - fake_bin[1]) <= tol[1])
                if not near_truth and not near_fake:
                    false_alarms += 1
            if attempt is not None:
                rep = evaluate_attack([], detections, s.scene.targets, attempt, rd, tol)
                attack = {"kind": "spoof", "knowledge": attempt.knowledge.value,
                          "fake_target_detected": rep.fake_target_detected,
                          "fake_peak_snr": fake_peak_snr(rd, attempt.fake_target, max(tol))}
        elif attempt is not None:
            attack = {"kind": "spoof", "knowledge": attempt.knowledge.value,
                      "fake_target_detected": False, "fake_peak_snr": None}

        quality = flags = None
        commands = []
        status = None
        if self.controller is not None:
            report = assess_quality(detections, rd, num, s.control.quality,
                                    occasion_id=oid, signal_type=stype)
            f, decision = self.controller.step(report, integrity_failure=integrity_failure)
            quality = {"mean_peak_snr": report.mean_peak_snr if report.detections else None,
                       "quality_below_target": report.quality_below_target,
                       "noise_floor_db": (report.noise_floor_db
                                          if math.isfinite(report.noise_floor_db) else None)}
            flags = {"suspected_spoof": f.suspected_spoof,
                     "quality_below_target": f.quality_below_target,
                     "integrity_failure": f.integrity_failure, "details": f.details}
            commands = [c.to_dict() for c in decision.commands]
            status = decision.status
            if any(c["kind"] == "REKEY" for c in commands):
                self.key_epoch += 1
                self.key = self._new_key()
        elif integrity_failure:
            flags = {"suspected_spoof": False, "quality_below_target": False,
                     "integrity_failure": True, "details": "sealed map failed authentication"}

        return {
            "occasion_id": oid,
            "signal_type": stype.value,
            "n_subcarriers": num.n_subcarriers,
            "n_symbols": num.n_symbols,
            "beams": [b.beam_index for b in beams] if beams else None,
            "n_targets": len(truths),
            "detections": [_detection_dict(d) for d in detections],
            "matched": matched,
            "false_alarms": false_alarms,
            "truth_peak_snr": truth_snr,
            "fronthaul_bits": load.bits_per_slot,
            "papr_db": papr(tx),
            "quality": quality,
            "flags": flags,
            "commands": commands,
            "status": status,
            "attack": attack,
        }


def run_scenario(scenario: Scenario, *, seed: int | None = None) -> RunReport:
    """Run every occasion in order; ``seed`` overrides the master seed."""
    if seed is not None:
        scenario = scenario.replace(master_seed=seed)
    runner = _Runner(scenario)
    records = []
    for oid in range(scenario.n_occasions):
        try:
            records.append(runner.occasion(oid))
        except Exception as exc:  # annotate and re-raise for the CLI
            raise ScenarioRuntimeError(oid, exc) from exc
    return RunReport(scenario.scenario_id, scenario.master_seed, records, aggregate(records))


def reflection_snr_db(scenario: Scenario) -> list[float]:
    """Per-RE echo-to-noise ratio of each scene target, in dB."""
    sc, num = scenario.scene, scenario.numerology
    if sc.noise_power <= 0:
        return [math.inf for _ in sc.targets]
    return [float(20 * np.log10(reflection_amplitude(t, num.carrier_freq, sc.reference_range,
                                                     sc.reference_amplitude))
                  - 10 * np.log10(sc.noise_power)) for t in sc.targets]
