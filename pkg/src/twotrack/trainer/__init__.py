"""Staged training: curriculum weights, stage plans, items and the optimisation loop."""

from .curriculum import CurriculumSchedule, curriculum_weights, initial_weights
from .data import (TrainItem, build_items, items_from_clips, make_item, padded_reference,
                   select_items)
from .loop import (CLIP_NORM, StageResult, StepMetrics, Trainer, apply_voice_dropout,
                   init_dual_from_mixed, named_parameters, run_plan, teacher_forced_loss,
                   teacher_forced_metrics,
                   train_step)
from .plan import (DESK_BATCH, DESK_STEPS, DUAL_ORDER, FRESH, FROM_MIXED, MIXED_ORDER, PREVIOUS,
                   VOICE_DROPOUT, TrainPlan, TrainStage, default_plan, with_steps)

__all__ = [
    "CLIP_NORM", "CurriculumSchedule", "DESK_BATCH", "DESK_STEPS", "DUAL_ORDER", "FRESH",
    "FROM_MIXED", "MIXED_ORDER", "PREVIOUS", "StageResult", "StepMetrics", "TrainItem",
    "TrainPlan", "TrainStage", "Trainer", "VOICE_DROPOUT", "apply_voice_dropout", "build_items",
    "curriculum_weights", "default_plan", "init_dual_from_mixed", "initial_weights",
    "items_from_clips", "make_item", "named_parameters", "padded_reference", "run_plan",
    "select_items", "teacher_forced_loss", "teacher_forced_metrics", "train_step", "with_steps",
]
