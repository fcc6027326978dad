"""Shared model-side value types."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..engine import Tensor

THING_ROLE = -1  # roles array entry for instance kernels; stuff entries hold their class id


@dataclass
class FeatureMap:
    values: Tensor  # [C, H, W]
    stride: int
    has_pos_enc: bool = False

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    @property
    def spatial(self) -> tuple[int, int]:
        return self.values.shape[1], self.values.shape[2]


@dataclass
class KernelSet:
    """N = N_thing + N_stuff kernels; things first, then one kernel per stuff
    class in declared order. roles[i] is THING_ROLE for things, else the fixed
    stuff class id."""

    kernels: Tensor  # [N, C]
    roles: np.ndarray  # [N] int64

    def __post_init__(self):
        if self.kernels.shape[0] != len(self.roles):
            raise ValueError(f"{self.kernels.shape[0]} kernels vs {len(self.roles)} roles")

    @property
    def n_total(self) -> int:
        return self.kernels.shape[0]

    @property
    def n_thing(self) -> int:
        return int(np.sum(self.roles == THING_ROLE))

    @property
    def thing_slice(self) -> slice:
        return slice(0, self.n_thing)

    def with_kernels(self, kernels: Tensor) -> "KernelSet":
        return KernelSet(kernels=kernels, roles=self.roles)

    def validate(self, stuff_classes: tuple[int, ...]) -> None:
        stuff_roles = [int(r) for r in self.roles if r != THING_ROLE]
        if stuff_roles != list(stuff_classes):
            raise ValueError(f"stuff kernel roles {stuff_roles} != expected {list(stuff_classes)}")
        if not np.all(self.roles[: self.n_thing] == THING_ROLE):
            raise ValueError("thing kernels must precede stuff kernels")
        if not np.all(np.isfinite(self.kernels.numpy())):
            raise ValueError("non-finite kernel values")


def make_roles(n_thing: int, stuff_classes: tuple[int, ...]) -> np.ndarray:
    return np.array([THING_ROLE] * n_thing + list(stuff_classes), dtype=np.int64)


@dataclass
class StageOutput:
    kernels: KernelSet  # post-update kernels
    mask_logits: Tensor  # [N, h, w] at feature stride
    class_logits: Tensor  # [N_thing, num_thing_classes]
