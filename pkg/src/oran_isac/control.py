"""Sensing control loop: quality assessment, anomaly flags, and commands.

Commands travel over an in-process stand-in for E2: typed messages with a
JSON form. The policy is a fixed priority ladder so that identical inputs
always give identical command lists.
"""

from __future__ import annotations

import enum
import json
import math
from collections.abc import Iterable, Sequence
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .processing import Detection, RangeDopplerMap, resolutions
from .waveform import Numerology, SignalType

N_BEAMS = 64
BITMAP_MASK = (1 << N_BEAMS) - 1


def encode_beam_bitmap(indices: Iterable[int]) -> int:
    idx = list(indices)
    if not idx:
        raise ValueError("beam selection must not be empty")
    bitmap = 0
    for i in idx:
        if not 0 <= i < N_BEAMS:
            raise ValueError(f"beam index {i} outside [0, {N_BEAMS - 1}]")
        bitmap |= 1 << i
    return bitmap


def decode_beam_bitmap(bitmap: int) -> list[int]:
    if not 0 < bitmap <= BITMAP_MASK:
        raise ValueError(f"bitmap must be a non-zero {N_BEAMS}-bit value")
    return [i for i in range(N_BEAMS) if bitmap >> i & 1]


def rotate_bitmap(bitmap: int, positions: int = 1) -> int:
    s = positions % N_BEAMS
    return ((bitmap << s) | (bitmap >> (N_BEAMS - s))) & BITMAP_MASK


@dataclass(frozen=True)
class QualityTarget:
    min_snr_db: float = 15.0
    max_range_res: float = math.inf
    max_velocity_res: float = math.inf


@dataclass(frozen=True)
class SensingQualityReport:
    occasion_id: int
    detections: tuple[Detection, ...]
    mean_peak_snr: float
    detection_count: int
    achieved_resolution: tuple[float, float]
    target_quality: QualityTarget
    quality_below_target: bool
    signal_type: SignalType = SignalType.STOCHASTIC_DATA
    noise_floor_db: float = -math.inf

    def to_dict(self) -> dict:
        return {
            "occasion_id": self.occasion_id,
            "signal_type": self.signal_type.value,
            "detection_count": self.detection_count,
            "mean_peak_snr": _finite(self.mean_peak_snr),
            "achieved_resolution": list(self.achieved_resolution),
            "quality_below_target": self.quality_below_target,
            "noise_floor_db": _finite(self.noise_floor_db),
            "detections": [asdict(d) for d in self.detections],
        }


def _finite(x):
    return x if x is None or math.isfinite(x) else None


def assess_quality(detections: Sequence[Detection], rd_map: RangeDopplerMap | None,
                   numerology: Numerology, targets_config: QualityTarget, *,
                   occasion_id: int = 0,
                   signal_type: SignalType = SignalType.STOCHASTIC_DATA) -> SensingQualityReport:
    """Compare this occasion's sensing against the configured target.

    ``mean_peak_snr`` averages detection peak powers linearly before
    converting to dB; it is ``-inf`` without detections.
    """
    res = resolutions(numerology, 1)
    if detections:
        lin = np.mean([10 ** (d.peak_snr / 10) for d in detections])
        mean_snr = float(10 * np.log10(lin))
    else:
        mean_snr = -math.inf
    below = (mean_snr < targets_config.min_snr_db
             or res.range_res > targets_config.max_range_res
             or res.velocity_res > targets_config.max_velocity_res)
    floor = -math.inf
    if rd_map is not None and rd_map.noise_floor_estimate > 0:
        floor = float(10 * np.log10(rd_map.noise_floor_estimate))
    return SensingQualityReport(occasion_id, tuple(detections), mean_snr, len(detections),
                                (res.range_res, res.velocity_res), targets_config,
                                bool(below), SignalType(signal_type), floor)


@dataclass(frozen=True)
class AnomalyFlags:
    suspected_spoof: bool = False
    quality_below_target: bool = False
    integrity_failure: bool = False
    details: str = ""

    @property
    def any(self) -> bool:
        return self.suspected_spoof or self.quality_below_target or self.integrity_failure


@dataclass(frozen=True)
class SpoofDetectorConfig:
    pairs: int = 3
    confirm_snr_db: float = 15.0
    floor_tolerance_db: float = 6.0
    max_plausible_snr_db: float | None = None
    plausibility_margin_db: float = 10.0


def _near(a: Detection, b: Detection, tol: tuple[float, float]) -> bool:
    return abs(a.est_range - b.est_range) <= tol[0] and \
        abs(a.est_velocity - b.est_velocity) <= tol[1]


def _recent_pairs(reports: list[SensingQualityReport]):
    """Adjacent (deterministic, stochastic) occasion pairs, newest first."""
    out, i = [], len(reports) - 1
    while i >= 1:
        a, b = reports[i - 1], reports[i]
        if b.occasion_id - a.occasion_id == 1:
            sa = a.signal_type is SignalType.STOCHASTIC_DATA
            sb = b.signal_type is SignalType.STOCHASTIC_DATA
            if sa != sb:
                out.append((b, a) if sa else (a, b))
                i -= 2
                continue
        break
    return out


def detect_anomaly(history: Sequence[SensingQualityReport], current: SensingQualityReport,
                   probe_schedule: Sequence[SignalType | str] = (SignalType.STOCHASTIC_DATA,),
                   config: SpoofDetectorConfig = SpoofDetectorConfig(), *,
                   integrity_failure: bool = False) -> AnomalyFlags:
    """Flag spoofing, integrity failures and quality shortfalls.

    A spoof is suspected when, over ``config.pairs`` consecutive pairs of
    deterministic and stochastic occasions, the same detection shows up in
    every deterministic occasion but never in its stochastic neighbour while
    both noise floors agree; or when any detection is more than the margin
    above the strongest physically plausible echo.
    """
    details = []
    suspected = False
    schedule = {SignalType(s) for s in probe_schedule}
    if schedule - {SignalType.STOCHASTIC_DATA}:
        pairs = _recent_pairs(list(history) + [current])[:config.pairs]
        if len(pairs) == config.pairs:
            tol = current.achieved_resolution
            ghosts = []
            for det, sto in pairs:
                if abs(det.noise_floor_db - sto.noise_floor_db) > config.floor_tolerance_db:
                    ghosts = None
                    break
                ghosts.append([d for d in det.detections
                               if d.peak_snr >= config.confirm_snr_db
                               and not any(_near(d, s, tol) for s in sto.detections)])
            if ghosts:
                for g in ghosts[0]:
                    if all(any(_near(g, h, tol) for h in other) for other in ghosts[1:]):
                        suspected = True
                        details.append(
                            f"detection at {g.est_range:.2f} m / {g.est_velocity:.2f} m/s "
                            f"only in deterministic occasions over {config.pairs} pairs")
                        break
    if config.max_plausible_snr_db is not None:
        limit = config.max_plausible_snr_db + config.plausibility_margin_db
        hot = [d for d in current.detections if d.peak_snr > limit]
        if hot:
            suspected = True
            details.append(f"{len(hot)} detection(s) above plausible SNR {limit:.1f} dB")
    if integrity_failure:
        details.append("sealed range-Doppler map failed authentication")
    if current.quality_below_target:
        details.append("sensing quality below target")
    return AnomalyFlags(suspected, current.quality_below_target, integrity_failure,
                        "; ".join(details))


class CommandKind(str, enum.Enum):
    BEAM_SELECT = "BEAM_SELECT"
    TDD_PATTERN = "TDD_PATTERN"
    BWP_CHANGE = "BWP_CHANGE"
    PROBE_SCHEDULE = "PROBE_SCHEDULE"
    REKEY = "REKEY"


@dataclass(frozen=True)
class ControlCommand:
    kind: CommandKind
    occasion_id: int
    params: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "kind", CommandKind(self.kind))
        object.__setattr__(self, "params", tuple(self.params))
        if self.kind is CommandKind.BEAM_SELECT:
            (bitmap,) = self.params
            decode_beam_bitmap(bitmap)

    @property
    def fields(self) -> dict:
        names = {CommandKind.BEAM_SELECT: ("bitmap",),
                 CommandKind.TDD_PATTERN: ("dl_slots", "ul_slots", "period"),
                 CommandKind.BWP_CHANGE: ("start_rb", "n_rb"),
                 CommandKind.PROBE_SCHEDULE: ("schedule",),
                 CommandKind.REKEY: ()}[self.kind]
        return dict(zip(names, self.params))

    def to_dict(self) -> dict:
        f = self.fields
        if self.kind is CommandKind.BEAM_SELECT:
            f = {"bitmap": f"0x{f['bitmap']:016x}"}
        elif self.kind is CommandKind.PROBE_SCHEDULE:
            f = {"schedule": list(f["schedule"])}
        return {"kind": self.kind.value, "occasion_id": self.occasion_id, **f}

    @classmethod
    def from_dict(cls, d: dict) -> "ControlCommand":
        kind = CommandKind(d["kind"])
        if kind is CommandKind.BEAM_SELECT:
            params = (int(d["bitmap"], 16),)
        elif kind is CommandKind.TDD_PATTERN:
            params = (d["dl_slots"], d["ul_slots"], d["period"])
        elif kind is CommandKind.BWP_CHANGE:
            params = (d["start_rb"], d["n_rb"])
        elif kind is CommandKind.PROBE_SCHEDULE:
            params = (tuple(d["schedule"]),)
        else:
            params = ()
        return cls(kind, d["occasion_id"], params)


@dataclass(frozen=True)
class Policy:
    """Current configuration knobs and their limits."""

    beam_bitmap: int = 1
    bwp_start_rb: int = 0
    bwp_n_rb: int = 273
    bwp_max_rb: int = 273
    bwp_step_rb: int = 24
    dl_slots: int = 1
    ul_slots: int = 1
    tdd_period: int = 2
    min_ul_slots: int = 1
    probe_schedule: tuple[str, ...] = ("STOCHASTIC_DATA",)
    allow_bwp: bool = True
    allow_tdd: bool = True
    allow_beam: bool = True

    def __post_init__(self):
        decode_beam_bitmap(self.beam_bitmap)
        if self.dl_slots + self.ul_slots != self.tdd_period:
            raise ValueError("dl_slots + ul_slots must equal tdd_period")
        if self.bwp_start_rb + self.bwp_n_rb > self.bwp_max_rb:
            raise ValueError("BWP exceeds the carrier")
        object.__setattr__(self, "probe_schedule",
                           tuple(SignalType(s).value for s in self.probe_schedule))

    def apply(self, commands: Iterable[ControlCommand]) -> "Policy":
        p = self
        for c in commands:
            f = c.fields
            if c.kind is CommandKind.BEAM_SELECT:
                p = replace(p, beam_bitmap=f["bitmap"])
            elif c.kind is CommandKind.BWP_CHANGE:
                p = replace(p, bwp_start_rb=f["start_rb"], bwp_n_rb=f["n_rb"])
            elif c.kind is CommandKind.TDD_PATTERN:
                p = replace(p, dl_slots=f["dl_slots"], ul_slots=f["ul_slots"],
                            tdd_period=f["period"])
            elif c.kind is CommandKind.PROBE_SCHEDULE:
                p = replace(p, probe_schedule=tuple(f["schedule"]))
        return p


@dataclass(frozen=True)
class Decision:
    commands: tuple[ControlCommand, ...] = ()
    status: str = "ok"


def decide(report: SensingQualityReport, flags: AnomalyFlags, policy: Policy) -> Decision:
    """Fixed ladder: integrity, then spoofing, then quality (BWP, TDD, beam)."""
    oid = report.occasion_id
    if flags.integrity_failure:
        return Decision((ControlCommand(CommandKind.REKEY, oid),
                         ControlCommand(CommandKind.BEAM_SELECT, oid, (policy.beam_bitmap,))),
                        "rekey")
    if flags.suspected_spoof:
        return Decision((ControlCommand(CommandKind.PROBE_SCHEDULE, oid,
                                        ((SignalType.STOCHASTIC_DATA.value,),)),
                         ControlCommand(CommandKind.BEAM_SELECT, oid,
                                        (rotate_bitmap(policy.beam_bitmap),))),
                        "spoof-mitigation")
    if flags.quality_below_target:
        headroom = policy.bwp_max_rb - policy.bwp_start_rb - policy.bwp_n_rb
        if policy.allow_bwp and headroom > 0:
            n_rb = policy.bwp_n_rb + min(policy.bwp_step_rb, headroom)
            return Decision((ControlCommand(CommandKind.BWP_CHANGE, oid,
                                            (policy.bwp_start_rb, n_rb)),), "adjust")
        if policy.allow_tdd and policy.ul_slots > policy.min_ul_slots:
            return Decision((ControlCommand(CommandKind.TDD_PATTERN, oid,
                                            (policy.dl_slots + 1, policy.ul_slots - 1,
                                             policy.tdd_period)),), "adjust")
        if policy.allow_beam:
            return Decision((ControlCommand(CommandKind.BEAM_SELECT, oid,
                                            (rotate_bitmap(policy.beam_bitmap),)),), "adjust")
        return Decision((), "degraded")
    return Decision((), "ok")


class E2Channel:
    """In-process command conduit; messages are carried as JSON text."""

    def __init__(self):
        self._queue: list[str] = []

    def send(self, command: ControlCommand) -> None:
        self._queue.append(json.dumps(command.to_dict(), sort_keys=True))

    def receive_all(self) -> list[ControlCommand]:
        out = [ControlCommand.from_dict(json.loads(m)) for m in self._queue]
        self._queue.clear()
        return out


@dataclass
class SensingController:
    """Single-owner loop state for one cell; occasions must arrive in order."""

    policy: Policy
    detector: SpoofDetectorConfig = SpoofDetectorConfig()
    window: int = 16
    history: list = field(default_factory=list)
    e2: E2Channel = field(default_factory=E2Channel)

    def step(self, report: SensingQualityReport, *, integrity_failure: bool = False):
        if self.history and report.occasion_id <= self.history[-1].occasion_id:
            raise ValueError("reports must arrive strictly ordered by occasion_id")
        flags = detect_anomaly(self.history, report, self.policy.probe_schedule,
                               self.detector, integrity_failure=integrity_failure)
        decision = decide(report, flags, self.policy)
        for c in decision.commands:
            self.e2.send(c)
        self.policy = self.policy.apply(self.e2.receive_all())
        self.history.append(report)
        del self.history[:-self.window]
        return flags, decision
