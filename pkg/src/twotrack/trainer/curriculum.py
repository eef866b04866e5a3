"""Codebook loss weights that start skewed toward coarse codebooks and relax to uniform."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, RangeError

HIGH_WEIGHT = 0.25
LOW_WEIGHT = 0.05


def initial_weights(num_codebooks, high=HIGH_WEIGHT, low=LOW_WEIGHT):
    """The first ceil(3 N_q / 8) codebooks carry ``high``, the rest ``low``, normalised."""
    n_high = math.ceil(3 * num_codebooks / 8)
    w = np.array([high] * n_high + [low] * (num_codebooks - n_high), dtype=np.float64)
    return w / w.sum()


@dataclass(frozen=True)
class CurriculumSchedule:
    num_codebooks: int
    ramp_steps: int
    high: float = HIGH_WEIGHT
    low: float = LOW_WEIGHT

    def __post_init__(self):
        if self.num_codebooks < 1:
            raise ConfigError("a curriculum needs at least one codebook")
        if self.ramp_steps < 0:
            raise ConfigError("ramp length must be nonnegative")
        if not self.high >= self.low >= 0 or self.high <= 0:
            raise ConfigError("curriculum needs high >= low >= 0 and high > 0")

    @classmethod
    def for_budget(cls, num_codebooks, steps, ramp_fraction=0.5):
        return cls(num_codebooks, int(round(ramp_fraction * steps)))

    @property
    def initial(self):
        return initial_weights(self.num_codebooks, self.high, self.low)

    @property
    def final(self):
        return np.full(self.num_codebooks, 1.0 / self.num_codebooks)

    def __call__(self, step):
        return curriculum_weights(step, self)


def curriculum_weights(step, schedule: CurriculumSchedule):
    if step < 0:
        raise RangeError(f"curriculum step must be >= 0, got {step}")
    alpha = 1.0 if schedule.ramp_steps == 0 else min(step / schedule.ramp_steps, 1.0)
    w = (1.0 - alpha) * schedule.initial + alpha * schedule.final
    return w / w.sum()
