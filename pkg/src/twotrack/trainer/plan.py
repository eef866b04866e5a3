"""Stage plans: which data, learning rate, dropout and frozen set each stage uses."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from ..errors import PlanError
from ..numerics.optim import BASE_LR, FINETUNE_LR
from ..patterns import PatternKind
from ..pipeline.manifest import HQ_FILTER, PRETRAIN_FILTER, FilterThresholds

DESK_STEPS = 2000
DESK_BATCH = 8
VOICE_DROPOUT = 0.5

FRESH = "fresh"
PREVIOUS = "previous"
FROM_MIXED = "mixed-step-1"

MIXED_ORDER = ("1", "2", "3")
DUAL_ORDER = ("1.5", "2", "3")


@dataclass
class TrainStage:
    name: str
    steps: int = DESK_STEPS
    lr: float = FINETUNE_LR
    filter: FilterThresholds | None = PRETRAIN_FILTER
    voice_dropout: float = 0.0
    frozen: tuple = ()  # parameter-name prefixes held fixed during the freeze phase
    freeze_fraction: float = 0.0  # leading share of the budget spent frozen
    init: str = PREVIOUS
    ramp_fraction: float = 0.5

    @property
    def freeze_steps(self):
        return int(round(self.freeze_fraction * self.steps)) if self.frozen else 0

    def frozen_at(self, step):
        return self.frozen if step < self.freeze_steps else ()


@dataclass
class TrainPlan:
    kind: PatternKind
    stages: list = field(default_factory=list)

    def __post_init__(self):
        self.kind = PatternKind.from_name(self.kind)
        order = tuple(s.name for s in self.stages)
        expected = MIXED_ORDER if self.kind.is_mixed else DUAL_ORDER
        if order != expected:
            raise PlanError(f"{self.kind.value} stages must run in order {list(expected)}, "
                            f"got {list(order)}")
        first = FRESH if self.kind.is_mixed else FROM_MIXED
        if self.stages[0].init != first or any(s.init != PREVIOUS for s in self.stages[1:]):
            raise PlanError(f"stage {order[0]} must start from '{first}' and later stages "
                            "from the previous stage")

    @property
    def names(self):
        return [s.name for s in self.stages]

    def index(self, name):
        if name not in self.names:
            raise PlanError(f"unknown stage {name!r} for {self.kind.value}; "
                            f"expected one of {self.names}")
        return self.names.index(name)

    def stage(self, name):
        return self.stages[self.index(name)]

    def previous(self, name):
        i = self.index(name)
        return self.stages[i - 1] if i else None


def default_plan(kind, steps=DESK_STEPS, voice_dropout=VOICE_DROPOUT, hq=HQ_FILTER,
                 pretrain=PRETRAIN_FILTER):
    """Desk-scale plan: pretrain, decoder-first fine-tune with voice dropout, HQ fine-tune."""
    kind = PatternKind.from_name(kind)
    if kind.is_mixed:
        first = TrainStage("1", steps, BASE_LR, pretrain, 0.0, init=FRESH)
    else:
        first = TrainStage("1.5", steps, FINETUNE_LR, pretrain, 0.0, init=FROM_MIXED)
    second = TrainStage("2", steps, FINETUNE_LR, pretrain, voice_dropout,
                        frozen=("conditioner",), freeze_fraction=0.5)
    third = TrainStage("3", steps, FINETUNE_LR, hq, voice_dropout)
    return TrainPlan(kind, [first, second, third])


def with_steps(plan: TrainPlan, steps):
    return TrainPlan(plan.kind, [replace(s, steps=steps) for s in plan.stages])
