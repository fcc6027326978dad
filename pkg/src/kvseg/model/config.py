"""Model hyperparameters and feature flags."""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace

from ..errors import ConfigError


@dataclass(frozen=True)
class ModelConfig:
    thing_classes: tuple[int, ...] = (3, 4, 5)
    stuff_classes: tuple[int, ...] = (0, 1, 2)
    channels: int = 32
    stages: int = 3
    num_thing_kernels: int = 8
    heads: int = 4
    ffn_hidden: int = 64
    backbone_widths: tuple[int, int, int, int] = (16, 24, 32, 40)
    embed_dim: int = 32
    # video heads; each can be toggled independently for ablations
    use_embed: bool = True
    use_link: bool = True
    use_fuse: bool = True
    fuse_update: bool = True
    fuse_attend_prev: bool = True
    embed_prelink: bool = False  # embed raw final kernels instead of linked ones
    link_stage: int = 0  # 0 means "last stage"
    clip_mode: bool = False
    clip_fusion_layers: int = 3
    init_seed: int = 0

    @property
    def fusion_stage(self) -> int:
        return self.stages if self.link_stage == 0 else self.link_stage

    @property
    def num_kernels(self) -> int:
        return self.num_thing_kernels + len(self.stuff_classes)

    def check(self) -> None:
        if self.channels % 4 != 0:
            raise ConfigError("channels must be divisible by 4 for the positional encoding")
        if self.channels % self.heads != 0:
            raise ConfigError(f"channels {self.channels} not divisible by heads {self.heads}")
        if self.stages < 1:
            raise ConfigError("stages must be >= 1")
        if self.num_thing_kernels < 1:
            raise ConfigError("need at least one instance kernel")
        if not self.stuff_classes or not self.thing_classes:
            raise ConfigError("thing and stuff class sets must be non-empty")
        if set(self.thing_classes) & set(self.stuff_classes):
            raise ConfigError("thing and stuff class sets overlap")
        if len(self.backbone_widths) != 4:
            raise ConfigError("backbone_widths needs exactly 4 entries")
        if not (0 <= self.link_stage <= self.stages):
            raise ConfigError(f"link_stage {self.link_stage} outside 0..{self.stages}")
        if self.embed_dim < 1 or self.clip_fusion_layers < 1:
            raise ConfigError("embed_dim and clip_fusion_layers must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, raw: dict) -> "ModelConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(raw) - known
        if extra:
            raise ConfigError(f"unknown model config keys: {sorted(extra)}")
        kwargs = dict(raw)
        for key in ("thing_classes", "stuff_classes", "backbone_widths"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        cfg = cls(**kwargs)
        cfg.check()
        return cfg

    def with_overrides(self, **kwargs) -> "ModelConfig":
        cfg = replace(self, **kwargs)
        cfg.check()
        return cfg
