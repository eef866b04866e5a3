"""Teacher-forced optimisation steps and resumable stage runs."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..conditioning.encoders import ConditionBundle
from ..errors import NumericError, PlanError, RangeError
from ..model.decoder import Decoder
from ..model.io import build_from_meta, save_model, split_prefix
from ..model.losses import batch_loss, collate, compute_loss
from ..numerics.checkpoint import load_checkpoint
from ..numerics.optim import AdamW, clip_grad_norm, cosine_lr
from ..numerics.tensor import no_grad
from ..patterns import specials
from .curriculum import CurriculumSchedule
from .data import select_items
from .plan import FRESH, FROM_MIXED, TrainPlan, TrainStage

CLIP_NORM = 1.0


def apply_voice_dropout(bundle: ConditionBundle, p, rng):
    """Swap the voice segment for the null row with probability ``p``.

    One uniform draw is consumed per call whatever ``p`` is, so the random
    stream does not depend on the dropout rate.
    """
    if not 0.0 <= p <= 1.0:
        raise RangeError(f"dropout probability {p} outside [0, 1]")
    if rng.random() >= p:
        return bundle
    return ConditionBundle(bundle.null_voice, bundle.text, bundle.lyrics, False, bundle.null_voice)


@dataclass
class StepMetrics:
    loss: float
    per_codebook: dict
    grad_norm: float
    lr: float


def named_parameters(decoder, conditioner):
    out = [(f"decoder.{n}", p) for n, p in decoder.named_parameters()]
    if conditioner is not None:
        out += [(f"conditioner.{n}", p) for n, p in conditioner.named_parameters()]
    return out


def train_step(decoder, conditioner, optimizer, items, weights, lr, rng, voice_dropout=0.0,
               clip_norm=CLIP_NORM):
    """One teacher-forced update on ``items``; parameters with requires_grad off stay put."""
    kind = decoder.kind
    conds = []
    for it in items:
        bundle = conditioner(it.lyric_ids, it.caption, it.voice_stack)
        conds.append(apply_voice_dropout(bundle, voice_dropout, rng).cond)
    batch = collate([it.training(kind) for it in items], conds)
    optimizer.zero_grad()
    result = batch_loss(decoder, batch, weights)
    loss = result.item()
    if not math.isfinite(loss):
        raise NumericError(f"non-finite loss {loss}")
    result.total.backward()
    params = [p for p in optimizer.params.values() if p.requires_grad]
    norm = clip_grad_norm(params, clip_norm)
    if not math.isfinite(norm):
        raise NumericError(f"non-finite gradient norm {norm}")
    optimizer.step(lr)
    per = {k: [float(x) for x in v] for k, v in result.per_codebook.items()}
    return StepMetrics(loss, per, float(norm), float(lr))


def teacher_forced_metrics(decoder, conditioner, items, weights=None):
    """``(loss, accuracy)`` of one no-dropout teacher-forced pass over ``items``.

    Accuracy is the share of scored targets (real codes and EOS) whose
    argmax over the full vocabulary is correct.
    """
    n_q = decoder.config.num_codebooks
    weights = np.full(n_q, 1.0 / n_q) if weights is None else weights
    with no_grad():
        conds = [conditioner(it.lyric_ids, it.caption, it.voice_stack).cond for it in items]
        batch = collate([it.training(decoder.kind) for it in items], conds)
        hidden = decoder.forward(batch.inputs, batch.cond, batch.cond_mask)
        result = compute_loss(decoder, hidden, batch.streams, weights)
        pad, bos, _ = specials(decoder.config.codebook_size)
        hit = total = 0
        for s in batch.streams:
            pred = decoder.logits(hidden, s.head_group).data.argmax(-1)
            valid = (s.targets != pad) & (s.targets != bos)
            hit += int((pred == s.targets)[valid].sum())
            total += int(valid.sum())
    return result.item(), hit / max(total, 1)


def teacher_forced_loss(decoder, conditioner, items, weights=None):
    return teacher_forced_metrics(decoder, conditioner, items, weights)[0]


@dataclass
class StageResult:
    name: str
    checkpoint: Path | None
    log: Path | None
    losses: list = field(default_factory=list)
    steps_run: int = 0
    stopped_early: bool = False


def _set_frozen(named, prefixes):
    for name, p in named:
        p.requires_grad = not any(name == f or name.startswith(f + ".") for f in prefixes)


def init_dual_from_mixed(path, kind, seed=0):
    """A dual-track decoder seeded with every same-shaped weight of a mixed checkpoint.

    Returns ``(decoder, conditioner, loaded_names)``; weights the mixed model
    lacks (the second embedding table and head group) keep their fresh init.
    """
    path = Path(path)
    if not path.exists():
        raise PlanError(f"initialisation checkpoint {path} not found")
    arrays, meta = load_checkpoint(path)
    src, conditioner = build_from_meta(meta)
    if not src.kind.is_mixed:
        raise PlanError(f"{path} holds a {src.kind.value} model, not a mixed one")
    decoder = Decoder(src.config.with_kind(kind), np.random.default_rng([seed, 15]))
    loaded = decoder.load_state_dict(split_prefix(arrays, "decoder."), strict=False)
    if conditioner is not None:
        conditioner.load_state_dict(split_prefix(arrays, "conditioner."))
    return decoder, conditioner, loaded


class Trainer:
    """Owns one decoder/conditioner pair and runs plan stages on a fixed item list."""

    def __init__(self, decoder, conditioner, items, out_dir=None, seed=0, batch_size=8,
                 clip_norm=CLIP_NORM, checkpoint_every=0, curriculum=True):
        self.decoder = decoder
        self.conditioner = conditioner
        self.items = list(items)
        self.out_dir = None if out_dir is None else Path(out_dir)
        self.seed = seed
        self.batch_size = batch_size
        self.clip_norm = clip_norm
        self.checkpoint_every = checkpoint_every
        self.curriculum = curriculum

    # -- files --------------------------------------------------------------
    def checkpoint_path(self, name):
        return None if self.out_dir is None else self.out_dir / f"stage_{name}.ckpt"

    def resume_path(self, name):
        return None if self.out_dir is None else self.out_dir / f"stage_{name}.resume.ckpt"

    def log_path(self, name):
        return None if self.out_dir is None else self.out_dir / f"stage_{name}_log.csv"

    def _save(self, path, stage, step, optimizer):
        moments = {}
        for n, m in optimizer.state.m.items():
            moments[f"optim.m.{n}"] = m
            moments[f"optim.v.{n}"] = optimizer.state.v[n]
        extra = {"stage": stage.name, "step": step, "seed": self.seed,
                 "optimizer_step": optimizer.state.step}
        save_model(path, self.decoder, self.conditioner, extra=extra, arrays=moments)

    def _restore(self, path, optimizer):
        arrays, meta = load_checkpoint(path)
        self.decoder.load_state_dict(split_prefix(arrays, "decoder."))
        if self.conditioner is not None:
            self.conditioner.load_state_dict(split_prefix(arrays, "conditioner."))
        state = optimizer.state
        state.step = int(meta["optimizer_step"])
        state.m = {n: a.copy() for n, a in split_prefix(arrays, "optim.m.").items()}
        state.v = {n: a.copy() for n, a in split_prefix(arrays, "optim.v.").items()}
        return int(meta["step"])

    def _dump(self, stage, step, batch_ids, error):
        if self.out_dir is None:
            return None
        path = self.out_dir / f"stage_{stage.name}_numeric_dump.json"
        info = {"stage": stage.name, "step": step, "seed": self.seed, "batch": batch_ids,
                "error": str(error),
                "parameter_max_abs": {n: float(np.abs(p.data).max()) if p.data.size else 0.0
                                      for n, p in named_parameters(self.decoder,
                                                                   self.conditioner)}}
        path.write_text(json.dumps(info, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path

    # -- running --------------------------------------------------------------
    def _columns(self, items):
        names = [s.name for s in items[0].training(self.decoder.kind).streams]
        n_q = self.decoder.config.num_codebooks
        return ["step", "lr", "loss", "grad_norm"] + [f"{s}_cb{k + 1}" for s in names
                                                      for k in range(n_q)]

    def run_stage(self, stage: TrainStage, index, resume=False, early_stop=None):
        """Train for ``stage.steps``, or until ``early_stop`` says to stop.

        ``early_stop`` is a loss threshold for the step batch, or a callable
        ``(step, metrics) -> bool`` consulted after every update.

        Batch draws, dropout draws and nothing else come from
        ``default_rng([seed, index, step])``, so a run resumed from a
        periodic checkpoint replays the uninterrupted trace exactly.
        """
        items = select_items(self.items, stage.filter)
        named = named_parameters(self.decoder, self.conditioner)
        optimizer = AdamW(named, lr=stage.lr)
        schedule = CurriculumSchedule.for_budget(self.decoder.config.num_codebooks,
                                                 stage.steps, stage.ramp_fraction)
        start = 0
        rows = []
        log_path = self.log_path(stage.name)
        if self.out_dir is not None:
            self.out_dir.mkdir(parents=True, exist_ok=True)
        if resume and self.resume_path(stage.name) and self.resume_path(stage.name).exists():
            start = self._restore(self.resume_path(stage.name), optimizer)
            if log_path.exists():
                with open(log_path, newline="") as f:
                    rows = [r for r in csv.reader(f)][1:]
                rows = [r for r in rows if int(r[0]) < start]
        result = StageResult(stage.name, self.checkpoint_path(stage.name), log_path,
                             [float(r[2]) for r in rows])
        log = None
        if log_path is not None:
            log = open(log_path, "w", newline="")
            writer = csv.writer(log)
            writer.writerow(self._columns(items))
            writer.writerows(rows)
        try:
            step = start
            for step in range(start, stage.steps):
                rng = np.random.default_rng([self.seed, index, step])
                size = min(self.batch_size, len(items))
                pick = np.sort(rng.choice(len(items), size=size, replace=False))
                batch = [items[i] for i in pick]
                _set_frozen(named, stage.frozen_at(step))
                w = schedule(step) if self.curriculum else schedule.final
                lr = cosine_lr(step, stage.steps, stage.lr)
                try:
                    m = train_step(self.decoder, self.conditioner, optimizer, batch, w, lr, rng,
                                   stage.voice_dropout, self.clip_norm)
                except NumericError as exc:
                    dump = self._dump(stage, step, [it.id for it in batch], exc)
                    raise NumericError(f"stage {stage.name} step {step}: {exc}"
                                       + (f"; diagnostics in {dump}" if dump else "")) from None
                result.losses.append(m.loss)
                if log is not None:
                    writer.writerow([step, repr(m.lr), repr(m.loss), repr(m.grad_norm)]
                                    + [repr(x) for s in m.per_codebook.values() for x in s])
                    log.flush()
                done = step + 1
                if (self.checkpoint_every and done % self.checkpoint_every == 0
                        and done < stage.steps and self.out_dir is not None):
                    self._save(self.resume_path(stage.name), stage, done, optimizer)
                stop = (early_stop(step, m) if callable(early_stop)
                        else early_stop is not None and m.loss < early_stop)
                if stop:
                    result.stopped_early = True
                    break
            result.steps_run = len(result.losses)
        finally:
            _set_frozen(named, ())
            if log is not None:
                log.close()
        if self.out_dir is not None:
            self._save(result.checkpoint, stage, result.steps_run, optimizer)
        return result


def run_plan(plan: TrainPlan, build_model, items, names=None, resume=False,
             init_checkpoint=None, **trainer_args):
    """Run the named stages of ``plan`` in order (all by default).

    ``build_model()`` returns a fresh ``(decoder, conditioner)`` for a plan
    that starts from scratch. A stage whose predecessor is not part of this
    call continues from the predecessor's checkpoint in ``out_dir``.
    """
    names = plan.names if names is None else list(names)
    for n in names:
        plan.index(n)
    if [n for n in plan.names if n in names] != names:
        raise PlanError(f"stages {names} are out of order; plan order is {plan.names}")
    results, trainer = [], None
    for name in names:
        stage = plan.stage(name)
        if trainer is None:
            if stage.init == FROM_MIXED:
                if init_checkpoint is None:
                    raise PlanError(f"stage {name} needs the mixed stage-1 checkpoint")
                decoder, conditioner, _ = init_dual_from_mixed(init_checkpoint, plan.kind,
                                                               trainer_args.get("seed", 0))
            elif stage.init == FRESH:
                decoder, conditioner = build_model()
            else:
                decoder, conditioner = _load_previous(plan, name, trainer_args.get("out_dir"))
            trainer = Trainer(decoder, conditioner, items, **trainer_args)
        results.append(trainer.run_stage(stage, plan.index(name), resume=resume))
    return results, trainer


def _load_previous(plan, name, out_dir):
    prev = plan.previous(name)
    path = None if out_dir is None else Path(out_dir) / f"stage_{prev.name}.ckpt"
    if path is None or not path.exists():
        raise PlanError(f"stage {name} needs the stage {prev.name} checkpoint ({path})")
    arrays, meta = load_checkpoint(path)
    decoder, conditioner = build_from_meta(meta)
    decoder.load_state_dict(split_prefix(arrays, "decoder."))
    if conditioner is not None:
        conditioner.load_state_dict(split_prefix(arrays, "conditioner."))
    return decoder, conditioner
