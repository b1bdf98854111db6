"""Run configuration: nested dataclasses loaded from JSON with strict validation.

Unknown keys are rejected, ``T == T_hist + T_pred`` is enforced, and the JSON
schema shipped in ``configs/schema.json`` is generated from these classes.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import typing
from dataclasses import dataclass, field
from pathlib import Path

MODALITIES = ("image", "radar", "lidar", "gps", "rf")
MASK_PATTERNS = ("temporal-block", "random", "checkerboard")


class ConfigError(ValueError):
    pass


@dataclass
class ScenarioConfig:
    T: int = 13
    t_hist: int = 8
    t_pred: int = 5
    dt: float = 0.1
    n_sequences: int = 10
    seq_len: int = 25
    stride: int = 1
    split_fraction: float = 0.7
    # codebook / channel
    n_ant: int = 32
    n_beams: int = 64
    carrier_ghz: float = 60.0
    spacing_wavelengths: float = 0.5
    az_span_deg: float = 60.0
    p_tx: float = 1.0
    noise_power: float = 1e-13
    rf_noise_db: float = 0.5
    floor_db: float = -174.0
    blockage_loss_db: float = 25.0
    reflection_coef: float = 0.35
    # geometry / motion
    bs_lon: float = -111.9285
    bs_lat: float = 33.4209
    gps_sigma_m: float = 0.5
    street_y: list[float] = field(default_factory=lambda: [12.0, 20.0])
    street_x: list[float] = field(default_factory=lambda: [-22.0, 22.0])
    speed: list[float] = field(default_factory=lambda: [4.0, 12.0])
    turn_prob: float = 0.05
    turn_deg: float = 12.0
    stop_prob: float = 0.02
    stop_frames: int = 4
    n_obstacles: int = 3
    n_blockers: int = 1
    blocker_speed: list[float] = field(default_factory=lambda: [5.0, 12.0])
    wall_y: float = 30.0
    # sensors
    image_size: list[int] = field(default_factory=lambda: [256, 256])
    view_x: list[float] = field(default_factory=lambda: [-40.0, 40.0])
    view_y: list[float] = field(default_factory=lambda: [0.0, 40.0])
    radar_n_rx: int = 4
    radar_n_chirp: int = 8
    radar_n_adc: int = 64
    radar_range_res: float = 1.75
    radar_noise: float = 0.01
    lidar_height: float = 3.0
    lidar_channels: int = 32
    lidar_yaw_samples: int = 256
    lidar_max_range: float = 100.0


@dataclass
class PreprocessConfig:
    vision_size: list[int] = field(default_factory=lambda: [224, 224])
    vision_mean: list[float] = field(default_factory=lambda: [0.485, 0.456, 0.406])
    vision_std: list[float] = field(default_factory=lambda: [0.229, 0.224, 0.225])
    radar_dft: int = 64
    lidar_hw: list[int] = field(default_factory=lambda: [64, 256])
    lidar_fov_deg: list[float] = field(default_factory=lambda: [15.0, -15.0])
    lidar_dmax: float = 100.0
    earth_radius_km: float = 6371.0
    token_counts: list[int] = field(default_factory=lambda: [9, 16, 16, 1, 1])
    pos_scale: float = 25.0


@dataclass
class ModelConfig:
    dim: int = 128
    depth: int = 4
    heads: int = 4
    ffn_mult: int = 4
    predictor_depth: int = 2
    head_hidden: int = 64
    cnn_channels: list[int] = field(default_factory=lambda: [8, 16, 32])


@dataclass
class PretrainConfig:
    mask_ratio: float = 0.5
    mask_pattern: str = "temporal-block"
    epochs: int = 100
    lr: float = 3e-4
    weight_decay: float = 0.05
    betas: list[float] = field(default_factory=lambda: [0.9, 0.999])
    eps: float = 1e-8
    ema: list[float] = field(default_factory=lambda: [0.996, 1.0])
    batch_size: int = 16
    drop: list[str] = field(default_factory=list)


@dataclass
class HeadConfig:
    epochs: int = 30
    lr: float = 1e-4
    weight_decay: float = 1e-2
    batch_size: int = 16
    loc_aux: bool = True
    pooling: list[str] = field(default_factory=lambda: list(MODALITIES))
    drop: list[str] = field(default_factory=list)
    untrained_backbone: bool = False


@dataclass
class EvalConfig:
    n_aug: int = 4
    aug_sigma: float = 0.05


@dataclass
class AblationConfig:
    mask_ratios: list[float] = field(default_factory=lambda: [0.25, 0.5, 0.75])
    mask_patterns: list[str] = field(default_factory=lambda: list(MASK_PATTERNS))
    dims: list[int] = field(default_factory=list)
    drop_sets: list[list[str]] = field(default_factory=list)
    loc_aux_off: bool = False
    untrained: bool = False


@dataclass
class PathsConfig:
    data: str = "data"
    run: str = "run"


@dataclass
class RunConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    pretrain: PretrainConfig = field(default_factory=PretrainConfig)
    heads: HeadConfig = field(default_factory=HeadConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    ablation: AblationConfig = field(default_factory=AblationConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)
    seed: int = 0

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def hash(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    def replace(self, **sections) -> "RunConfig":
        """Copy with whole sections or ``section__field`` overrides replaced."""
        data = self.to_dict()
        for key, value in sections.items():
            if "__" in key:
                sec, name = key.split("__", 1)
                data[sec][name] = value
            else:
                data[key] = value
        return from_dict(data)


def _build(cls, data, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name not in data:
            continue
        tp, value = hints[f.name], data[f.name]
        if dataclasses.is_dataclass(tp):
            kwargs[f.name] = _build(tp, value, f"{where}.{f.name}")
        else:
            kwargs[f.name] = _coerce(tp, value, f"{where}.{f.name}")
    return cls(**kwargs)


def _coerce(tp, value, where):
    origin = typing.get_origin(tp)
    if origin is list:
        if not isinstance(value, list):
            raise ConfigError(f"{where}: expected a list")
        (inner,) = typing.get_args(tp)
        return [_coerce(inner, v, where) for v in value]
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected a boolean")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string")
        return value
    raise ConfigError(f"{where}: unsupported type {tp}")


def validate(cfg: RunConfig) -> RunConfig:
    s, p, m, pt, h = cfg.scenario, cfg.preprocess, cfg.model, cfg.pretrain, cfg.heads
    checks = [
        (s.T == s.t_hist + s.t_pred, "scenario: T must equal t_hist + t_pred"),
        (s.t_pred >= 1 and s.t_hist >= 2, "scenario: need t_pred >= 1 and t_hist >= 2"),
        (s.seq_len >= s.T, "scenario: seq_len must be >= T"),
        (s.n_sequences >= 1 and s.stride >= 1, "scenario: n_sequences and stride must be >= 1"),
        (0.0 < s.split_fraction < 1.0, "scenario: split_fraction must lie in (0, 1)"),
        (s.n_ant >= 2 and s.n_beams >= 2, "scenario: n_ant and n_beams must be >= 2"),
        (s.radar_n_rx >= 2 and s.radar_n_chirp >= 1, "scenario: radar needs >= 2 rx and >= 1 chirp"),
        (p.token_counts == [9, 16, 16, 1, 1], "preprocess: token_counts are fixed at [9, 16, 16, 1, 1]"),
        (p.lidar_fov_deg[0] > p.lidar_fov_deg[1], "preprocess: lidar f_up must exceed f_down"),
        (m.dim % m.heads == 0, "model: dim must be divisible by heads"),
        (m.depth >= 1 and m.predictor_depth >= 1, "model: depths must be >= 1"),
        (0.0 < pt.mask_ratio < 1.0, "pretrain: mask_ratio must lie in (0, 1)"),
        (1 <= int(pt.mask_ratio * s.T) <= s.T - 1, "pretrain: floor(mask_ratio*T) must be in [1, T-1]"),
        (pt.mask_pattern in MASK_PATTERNS, f"pretrain: mask_pattern must be one of {MASK_PATTERNS}"),
        (all(0.0 <= b <= 1.0 for b in pt.ema) and len(pt.ema) == 2, "pretrain: ema must be two values in [0, 1]"),
        (pt.epochs >= 1 and h.epochs >= 1, "epochs must be >= 1"),
        (all(x in MODALITIES for x in pt.drop + h.drop + h.pooling), f"modality names must be in {MODALITIES}"),
        (all(x in MASK_PATTERNS for x in cfg.ablation.mask_patterns), "ablation: unknown mask pattern"),
        (cfg.eval.n_aug >= 2, "eval: n_aug must be >= 2"),
        (0 <= cfg.seed < 2**64, "seed must be an unsigned 64-bit integer"),
    ]
    for ok, msg in checks:
        if not ok:
            raise ConfigError(msg)
    return cfg


def from_dict(data: dict) -> RunConfig:
    return validate(_build(RunConfig, data, "config"))


def load(path) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return from_dict(data)


def _schema_for(tp) -> dict:
    if dataclasses.is_dataclass(tp):
        hints = typing.get_type_hints(tp)
        return {
            "type": "object",
            "additionalProperties": False,
            "properties": {f.name: _schema_for(hints[f.name]) for f in dataclasses.fields(tp)},
        }
    if typing.get_origin(tp) is list:
        return {"type": "array", "items": _schema_for(typing.get_args(tp)[0])}
    return {bool: {"type": "boolean"}, int: {"type": "integer"}, float: {"type": "number"}, str: {"type": "string"}}[tp]


def json_schema() -> dict:
    schema = _schema_for(RunConfig)
    schema["$schema"] = "https://json-schema.org/draft/2020-12/schema"
    schema["title"] = "jmsc run configuration"
    return schema
