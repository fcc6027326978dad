"""Run configuration: one nested YAML file, strict keys, stable hash.

The effective config is always a plain dict of the shape RunConfig defines;
CLI ``--set section.key=value`` overrides are applied on top of the file and
the result is what gets hashed, dumped into manifests, and embedded into
every artifact. Unknown keys anywhere are an error so typos cannot silently
become defaults.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

from ..data.synth import CLASS_TABLE
from ..errors import ConfigError
from ..losses import LossWeights
from ..model import ModelConfig
from ..tracking import TrackParams

HASH_LEN = 12


@dataclass(frozen=True)
class ModelSection:
    thing_kernels: int = 8
    channels: int = 32
    embed_dim: int = 32
    stages: int = 3
    heads: int = 4
    ffn_hidden: int = 64
    backbone_widths: tuple[int, ...] = (16, 24, 32, 40)


@dataclass(frozen=True)
class LossSection:
    w_cls: float = 2.0
    w_ce: float = 1.0
    w_dice: float = 4.0
    w_track: float = 0.25
    w_aux: float = 1.0


@dataclass(frozen=True)
class TrackerSection:
    score_thresh: float = 0.3
    overlap_keep_thresh: float = 0.5
    match_thresh: float = 0.2
    ema_momentum: float = 0.5
    ttl: int = 2
    mask_upsample: str = "nearest"


@dataclass(frozen=True)
class DataSection:
    root: str = ""
    ref_window: int = 2
    ref_count: int = 1


@dataclass(frozen=True)
class OptimSection:
    lr: float = 1.0e-4
    weight_decay: float = 1.0e-4
    steps: int = 300
    grad_clip: float = 5.0
    log_every: int = 25
    divergence_factor: float = 1.0e4


@dataclass(frozen=True)
class FlagsSection:
    kae: bool = True
    link: bool = True
    fuse: bool = True
    fuse_update: bool = True
    fuse_attend_prev: bool = True
    clip_mode: bool = False
    link_stage: int = 0
    embed_prelink: bool = False


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    deterministic: bool = True
    model: ModelSection = field(default_factory=ModelSection)
    loss: LossSection = field(default_factory=LossSection)
    tracker: TrackerSection = field(default_factory=TrackerSection)
    data: DataSection = field(default_factory=DataSection)
    optim: OptimSection = field(default_factory=OptimSection)
    flags: FlagsSection = field(default_factory=FlagsSection)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["model"]["backbone_widths"] = list(self.model.backbone_widths)
        return d

    def model_config(self) -> ModelConfig:
        m, f = self.model, self.flags
        return ModelConfig(
            thing_classes=CLASS_TABLE.thing_classes,
            stuff_classes=CLASS_TABLE.stuff_classes,
            channels=m.channels,
            stages=m.stages,
            num_thing_kernels=m.thing_kernels,
            heads=m.heads,
            ffn_hidden=m.ffn_hidden,
            backbone_widths=tuple(m.backbone_widths),
            embed_dim=m.embed_dim,
            use_embed=f.kae,
            use_link=f.link,
            use_fuse=f.fuse,
            fuse_update=f.fuse_update,
            fuse_attend_prev=f.fuse_attend_prev,
            embed_prelink=f.embed_prelink,
            link_stage=f.link_stage,
            clip_mode=f.clip_mode,
            init_seed=self.seed,
        )

    def loss_weights(self) -> LossWeights:
        s = self.loss
        return LossWeights(w_cls=s.w_cls, w_ce=s.w_ce, w_dice=s.w_dice, w_track=s.w_track, w_aux=s.w_aux)

    def track_params(self) -> TrackParams:
        t = self.tracker
        return TrackParams(
            score_thresh=t.score_thresh,
            overlap_keep_thresh=t.overlap_keep_thresh,
            match_thresh=t.match_thresh,
            ema_momentum=t.ema_momentum,
            ttl=t.ttl,
            mask_upsample=t.mask_upsample,
        )


_SECTIONS = {
    "model": ModelSection,
    "loss": LossSection,
    "tracker": TrackerSection,
    "data": DataSection,
    "optim": OptimSection,
    "flags": FlagsSection,
}


def _typed_value(where: str, name: str, value, default):
    """Enforce each field's scalar type; YAML quirks like ``1e-9`` parsing as
    a string must fail here, not as a TypeError mid-run."""
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"'{where}.{name}' expects a boolean, got {value!r}")
        return value
    if isinstance(default, int):
        if not isinstance(value, int) or isinstance(value, bool):
            raise ConfigError(f"'{where}.{name}' expects an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ConfigError(f"'{where}.{name}' expects a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"'{where}.{name}' expects a string, got {value!r}")
        return value
    return value


def _build_section(cls, mapping: dict, where: str):
    allowed = {f.name: f.type for f in fields(cls)}
    unknown = sorted(set(mapping) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown} in section '{where}'")
    defaults = cls()
    kwargs = {}
    for f in fields(cls):
        if f.name not in mapping:
            continue
        value = mapping[f.name]
        if f.name == "backbone_widths":
            if not isinstance(value, (list, tuple)) or not all(
                isinstance(v, int) and not isinstance(v, bool) for v in value
            ):
                raise ConfigError(f"'{where}.{f.name}' expects a list of integers, got {value!r}")
            value = tuple(int(v) for v in value)
        else:
            value = _typed_value(where, f.name, value, getattr(defaults, f.name))
        kwargs[f.name] = value
    return cls(**kwargs)


def config_from_dict(raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError(f"config root must be a mapping, got {type(raw).__name__}")
    top_scalars = {"seed", "deterministic"}
    unknown = sorted(set(raw) - top_scalars - set(_SECTIONS))
    if unknown:
        raise ConfigError(f"unknown top-level key(s) {unknown}")
    kwargs: dict = {}
    if "seed" in raw:
        kwargs["seed"] = _typed_value("<top>", "seed", raw["seed"], 0)
    if "deterministic" in raw:
        kwargs["deterministic"] = _typed_value("<top>", "deterministic", raw["deterministic"], True)
    for name, cls in _SECTIONS.items():
        section = raw.get(name, {})
        if not isinstance(section, dict):
            raise ConfigError(f"section '{name}' must be a mapping")
        kwargs[name] = _build_section(cls, section, name)
    cfg = RunConfig(**kwargs)
    cfg.model_config().check()  # surface inconsistent dims early
    return cfg


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML ({exc})") from exc
    return config_from_dict(raw if raw is not None else {})


def apply_overrides(cfg: RunConfig, overrides: list[str]) -> RunConfig:
    """``section.key=value`` (or ``seed=7``) strings, values parsed as YAML."""
    raw = cfg.to_dict()
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override '{item}' is not of the form key=value")
        dotted, _, text = item.partition("=")
        try:
            value = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"override '{item}': unparsable value ({exc})") from exc
        parts = dotted.strip().split(".")
        node = raw
        for p in parts[:-1]:
            if p not in node or not isinstance(node[p], dict):
                raise ConfigError(f"override '{item}': no section '{p}'")
            node = node[p]
        if parts[-1] not in node:
            raise ConfigError(f"override '{item}': unknown key '{parts[-1]}'")
        node[parts[-1]] = value
    return config_from_dict(raw)


def config_hash(cfg: RunConfig) -> str:
    blob = json.dumps(cfg.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:HASH_LEN]


def dump_config(cfg: RunConfig, path: str | Path) -> None:
    Path(path).write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=True))
