"""Scenario configuration: dataclasses, strict JSON parsing, cross-checks."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from functools import lru_cache
from importlib import resources
from pathlib import Path

import jsonschema

from ..adversary import KnowledgeLevel
from ..channel import BeamConfig, Scene, Target, max_unambiguous_range
from ..control import Policy, QualityTarget, SpoofDetectorConfig, encode_beam_bitmap
from ..fronthaul import CompressionConfig, Placement
from ..processing import PAD_FACTORS
from ..waveform import Numerology, SignalType

SUBCARRIERS_PER_RB = 12
SYMBOLS_PER_SLOT = 14


class ConfigError(ValueError):
    """Invalid scenario; the message names the offending field."""


@dataclass(frozen=True)
class SignalConfig:
    signal_type: SignalType = SignalType.STOCHASTIC_DATA
    modulation_order: int = 4
    reference_density: float | None = None
    pilot_density: float = 0.0
    pilot_root: int = 1

    def __post_init__(self):
        object.__setattr__(self, "signal_type", SignalType(self.signal_type))


@dataclass(frozen=True)
class BeamSetup:
    """Sniffer sector geometry plus the initially selected beams."""

    beam_indices: tuple[int, ...] = (0,)
    sector_start: float = 0.0
    sector_width: float = 120.0
    beamwidth: float = 4.0

    def configs(self, indices=None) -> list[BeamConfig]:
        return [BeamConfig(i, self.sector_start, self.sector_width, self.beamwidth)
                for i in (self.beam_indices if indices is None else indices)]


@dataclass(frozen=True)
class ProcessingConfig:
    pad_factor: int = 8
    window: str | None = "hann"
    roi: tuple[int, int] | None = (256, 64)
    cell_id: int = 1


@dataclass(frozen=True)
class CfarConfig:
    p_fa: float = 1e-4
    n_training: tuple[int, int] = (8, 8)
    n_guard: tuple[int, int] = (16, 16)
    exclude_range_bins: int = 0
    match_tolerance_bins: tuple[int, int] | None = None

    def tolerance(self, pad_factor: int) -> tuple[int, int]:
        """Truth-matching tolerance; defaults to one native bin per axis."""
        if self.match_tolerance_bins is None:
            return (pad_factor, pad_factor)
        return self.match_tolerance_bins


@dataclass(frozen=True)
class AttackerConfig:
    kind: str
    knowledge: KnowledgeLevel = KnowledgeLevel.FULL_WAVEFORM
    fake_target: Target | None = None
    tx_power_ratio: float = 10.0
    tamper_occasions: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.kind not in ("spoof", "sniff", "tamper"):
            raise ConfigError(f"attacker.kind: unknown kind {self.kind!r}")
        object.__setattr__(self, "knowledge", KnowledgeLevel(self.knowledge))
        if self.kind == "spoof" and self.fake_target is None:
            raise ConfigError("attacker.fake_target: required for a spoof attacker")


@dataclass(frozen=True)
class ControlConfig:
    quality: QualityTarget = QualityTarget()
    policy: Policy = Policy()
    detector: SpoofDetectorConfig = SpoofDetectorConfig()
    auto_plausible_snr: bool = False
    history_window: int = 16


@dataclass(frozen=True)
class Scenario:
    scenario_id: str
    numerology: Numerology = Numerology(3276, 14)
    signal: SignalConfig = SignalConfig()
    scene: Scene = Scene()
    beam: BeamSetup | None = None
    placement: Placement = Placement.RU_PROCESSING
    compression: CompressionConfig = CompressionConfig()
    processing: ProcessingConfig = ProcessingConfig()
    cfar: CfarConfig = CfarConfig()
    attacker: AttackerConfig | None = None
    control: ControlConfig | None = None
    n_occasions: int = 1
    master_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "placement", Placement(self.placement))
        validate_scenario(self)

    def replace(self, **changes) -> "Scenario":
        return replace(self, **changes)


def _check_range(where: str, target: Target, num: Numerology) -> None:
    bound = max_unambiguous_range(num)
    # the channel rejects tau*df >= 1, i.e. range >= bound
    if target.range >= bound:
        raise ConfigError(f"{where}.range: {target.range} m is beyond the unambiguous "
                          f"range {bound:.3f} m")


def validate_scenario(s: Scenario) -> None:
    """Cross-field consistency that a schema cannot express."""
    num = s.numerology
    for i, t in enumerate(s.scene.targets):
        _check_range(f"scene.targets[{i}]", t, num)
    if s.attacker is not None and s.attacker.fake_target is not None:
        _check_range("attacker.fake_target", s.attacker.fake_target, num)
    pad = s.processing.pad_factor
    if pad not in PAD_FACTORS:
        raise ConfigError(f"processing.pad_factor: must be one of {PAD_FACTORS}")
    dims = (pad * num.n_subcarriers, pad * num.n_symbols)
    roi = s.processing.roi or dims
    roi = (min(roi[0], dims[0]), min(roi[1], dims[1]))
    t, g = s.cfar.n_training, s.cfar.n_guard
    t = (t, t) if isinstance(t, int) else t
    g = (g, g) if isinstance(g, int) else g
    for axis, name in enumerate(("range", "Doppler")):
        span = 2 * (t[axis] + g[axis]) + 1
        if span > roi[axis]:
            raise ConfigError(f"cfar: {name} window of {span} bins exceeds the {roi[axis]}-bin map")
    if s.beam is not None and s.beam.sector_width > 360:
        raise ConfigError("beam.sector_width: must not exceed 360 degrees")
    if s.control is not None:
        p = s.control.policy
        if num.n_subcarriers != SUBCARRIERS_PER_RB * p.bwp_n_rb:
            raise ConfigError(f"control.policy.bwp_n_rb: {p.bwp_n_rb} RBs imply "
                              f"{SUBCARRIERS_PER_RB * p.bwp_n_rb} subcarriers, numerology "
                              f"has {num.n_subcarriers}")
        if num.n_symbols != SYMBOLS_PER_SLOT * p.dl_slots:
            raise ConfigError(f"control.policy.dl_slots: {p.dl_slots} slots imply "
                              f"{SYMBOLS_PER_SLOT * p.dl_slots} symbols, numerology "
                              f"has {num.n_symbols}")


@lru_cache(maxsize=1)
def schema() -> dict:
    text = resources.files(__package__).joinpath("scenario.schema.json").read_text()
    return json.loads(text)


def _pair(v):
    return tuple(v) if isinstance(v, list) else v


def _target(d: dict) -> Target:
    return Target(d["range"], d.get("radial_velocity", 0.0), d.get("rcs", 1.0),
                  d.get("azimuth", 0.0))


def _line_of(text: str, path) -> int | None:
    """Best-effort line of the last key on ``path`` in the source text."""
    keys = [p for p in path if isinstance(p, str)]
    if not keys:
        return None
    needle = json.dumps(keys[-1]) + ":"
    pos = text.find(needle)
    if pos < 0:
        needle = json.dumps(keys[-1])
        pos = text.find(needle)
    return None if pos < 0 else text.count("\n", 0, pos) + 1


def scenario_from_dict(d: dict, *, source_text: str | None = None) -> Scenario:
    """Validate ``d`` against the schema and build a :class:`Scenario`."""
    validator = jsonschema.Draft202012Validator(schema())
    errors = sorted(validator.iter_errors(d), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        lines = []
        for e in errors:
            where = ".".join(str(p) for p in e.absolute_path) or "<root>"
            line = _line_of(source_text, e.absolute_path) if source_text else None
            loc = f" (line {line})" if line else ""
            lines.append(f"{where}{loc}: {e.message}")
        raise ConfigError("; ".join(lines))
    try:
        return _build(d)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _build(d: dict) -> Scenario:
    nd = d.get("numerology", {})
    num = Numerology(nd.get("n_subcarriers", 3276), nd.get("n_symbols", 14),
                     nd.get("subcarrier_spacing", 30e3), nd.get("carrier_freq", 3.5e9),
                     nd.get("symbol_duration_total"))
    sig = SignalConfig(**d.get("signal", {}))
    sd = dict(d.get("scene", {}))
    targets = tuple(_target(t) for t in sd.pop("targets", []))
    scene = Scene(targets, **sd)

    beam = None
    if d.get("beam") is not None:
        bd = dict(d["beam"])
        if "beam_index" in bd and "beam_indices" in bd:
            raise ConfigError("beam: give beam_index or beam_indices, not both")
        if "beam_index" in bd:
            bd["beam_indices"] = [bd.pop("beam_index")]
        bd["beam_indices"] = tuple(bd.get("beam_indices", (0,)))
        beam = BeamSetup(**bd)
        BeamConfig(beam.beam_indices[0], beam.sector_start, beam.sector_width, beam.beamwidth)

    proc = dict(d.get("processing", {}))
    if proc.get("roi") is not None:
        proc["roi"] = tuple(proc["roi"])
    processing = ProcessingConfig(**proc)

    cd = {k: _pair(v) for k, v in d.get("cfar", {}).items()}
    cfar = CfarConfig(**cd)

    attacker = None
    if d.get("attacker") is not None:
        ad = dict(d["attacker"])
        if "fake_target" in ad:
            ad["fake_target"] = _target(ad["fake_target"])
        if ad.get("tamper_occasions") is not None:
            ad["tamper_occasions"] = tuple(ad["tamper_occasions"])
        attacker = AttackerConfig(**ad)

    control = None
    if d.get("control") is not None:
        c = d["control"]
        q = {k: (math.inf if v is None else v) for k, v in c.get("quality", {}).items()}
        pd = dict(c.get("policy", {}))
        if "beam_indices" in pd:
            pd["beam_bitmap"] = encode_beam_bitmap(pd.pop("beam_indices"))
        elif beam is not None:
            pd["beam_bitmap"] = encode_beam_bitmap(beam.beam_indices)
        pd.setdefault("bwp_n_rb", num.n_subcarriers // SUBCARRIERS_PER_RB)
        pd.setdefault("bwp_max_rb", max(pd["bwp_n_rb"] + pd.get("bwp_start_rb", 0),
                                        Policy.bwp_max_rb))
        pd.setdefault("dl_slots", num.n_symbols // SYMBOLS_PER_SLOT)
        if "probe_schedule" not in pd:
            pd["probe_schedule"] = (sig.signal_type.value,)
        if "tdd_period" not in pd:
            pd["tdd_period"] = pd["dl_slots"] + pd.get("ul_slots", 1)
        pd["probe_schedule"] = tuple(pd["probe_schedule"])
        det = dict(c.get("detector", {}))
        auto = det.get("max_plausible_snr_db") == "auto"
        if auto:
            det["max_plausible_snr_db"] = None
        control = ControlConfig(QualityTarget(**q), Policy(**pd), SpoofDetectorConfig(**det),
                                auto, c.get("history_window", 16))

    return Scenario(
        scenario_id=d["scenario_id"], numerology=num, signal=sig, scene=scene, beam=beam,
        placement=Placement(d.get("placement", "RU_PROCESSING")),
        compression=CompressionConfig(**d.get("compression", {})),
        processing=processing, cfar=cfar, attacker=attacker, control=control,
        n_occasions=d.get("n_occasions", 1), master_seed=d.get("master_seed", 0))


def parse_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    try:
        return scenario_from_dict(data, source_text=text)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
