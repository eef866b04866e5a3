import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import tiny_items, tiny_system
from twotrack.errors import DataError, NumericError, PlanError, RangeError
from twotrack.model import save_model
from twotrack.patterns import PatternKind
from twotrack.pipeline import HQ_FILTER, PRETRAIN_FILTER
from twotrack.trainer import (CurriculumSchedule, Trainer, TrainPlan, TrainStage,
                              apply_voice_dropout, curriculum_weights, default_plan,
                              init_dual_from_mixed, run_plan, select_items,
                              teacher_forced_metrics, with_steps)


def stage(name="1", steps=6, lr=1e-3, **kw):
    kw.setdefault("filter", None)
    kw.setdefault("init", "fresh" if name == "1" else "previous")
    return TrainStage(name, steps, lr, **kw)


def trainer_for(kind, tmp_path=None, n=4, seed=0, **kw):
    dec, cond = tiny_system(kind, seed=seed)
    return Trainer(dec, cond, tiny_items(cond, n), out_dir=tmp_path, seed=seed,
                   batch_size=2, **kw)


class TestCurriculum:
    def test_eight_codebooks_start(self):
        w = curriculum_weights(0, CurriculumSchedule(8, 100))
        np.testing.assert_allclose(w, [0.25] * 3 + [0.05] * 5, atol=1e-12)
        assert abs(w.sum() - 1.0) < 1e-9

    def test_four_codebooks_rescaled(self):
        w = curriculum_weights(0, CurriculumSchedule(4, 10))
        np.testing.assert_allclose(w, np.array([0.25, 0.25, 0.05, 0.05]) / 0.6)

    def test_endpoint_and_clamp(self):
        s = CurriculumSchedule(8, 100)
        for step in (100, 101, 10_000):
            np.testing.assert_allclose(curriculum_weights(step, s), np.full(8, 0.125))

    def test_midpoint(self):
        s = CurriculumSchedule(8, 100)
        np.testing.assert_allclose(curriculum_weights(50, s), (s.initial + s.final) / 2)

    def test_zero_ramp_is_uniform(self):
        np.testing.assert_allclose(curriculum_weights(0, CurriculumSchedule(4, 0)), [0.25] * 4)

    def test_budget_ramp(self):
        assert CurriculumSchedule.for_budget(4, 2000).ramp_steps == 1000

    def test_negative_step(self):
        with pytest.raises(RangeError):
            curriculum_weights(-1, CurriculumSchedule(4, 10))

    @given(st.integers(1, 16), st.integers(0, 500), st.integers(0, 1000))
    @settings(max_examples=200, deadline=None)
    def test_invariants(self, n_q, ramp, step):
        w = curriculum_weights(step, CurriculumSchedule(n_q, ramp))
        assert abs(w.sum() - 1.0) <= 1e-9
        assert np.all(w >= 0) and np.all(np.diff(w) <= 1e-15)


class TestVoiceDropout:
    def bundle(self):
        dec, cond = tiny_system(PatternKind.MIXED)
        item = tiny_items(cond, 1)[0]
        return cond, cond(item.lyric_ids, item.caption, item.voice_stack)

    def test_extremes(self):
        cond, b = self.bundle()
        rng = np.random.default_rng(0)
        for _ in range(20):
            assert apply_voice_dropout(b, 0.0, rng) is b
            out = apply_voice_dropout(b, 1.0, rng)
            assert not out.voice_present and out.voice is cond.null_voice

    def test_frequency(self):
        _, b = self.bundle()
        rng = np.random.default_rng(123)
        drops = sum(not apply_voice_dropout(b, 0.5, rng).voice_present for _ in range(10_000))
        assert 0.48 <= drops / 10_000 <= 0.52

    def test_text_and_lyrics_untouched(self):
        _, b = self.bundle()
        out = apply_voice_dropout(b, 1.0, np.random.default_rng(0))
        assert out.text is b.text and out.lyrics is b.lyrics

    def test_bad_probability(self):
        _, b = self.bundle()
        with pytest.raises(RangeError):
            apply_voice_dropout(b, 1.5, np.random.default_rng(0))


class TestPlan:
    def test_mixed_plan(self):
        plan = default_plan(PatternKind.MIXED)
        assert plan.names == ["1", "2", "3"]
        assert [s.lr for s in plan.stages] == [1e-4, 5e-5, 5e-5]
        assert plan.stage("3").filter == HQ_FILTER and plan.stage("1").filter == PRETRAIN_FILTER
        assert plan.stage("2").voice_dropout == 0.5 and plan.stage("2").freeze_steps == 1000
        assert plan.stage("1").steps == 2000

    def test_dual_plan(self):
        plan = default_plan("ParallelAV")
        assert plan.names == ["1.5", "2", "3"]
        assert plan.stages[0].init == "mixed-step-1"

    def test_bad_order(self):
        stages = default_plan(PatternKind.MIXED).stages
        with pytest.raises(PlanError):
            TrainPlan(PatternKind.MIXED, [stages[1], stages[0], stages[2]])
        with pytest.raises(PlanError):
            TrainPlan("InterleavingAV", stages)

    def test_unknown_stage(self):
        with pytest.raises(PlanError):
            default_plan(PatternKind.MIXED).index("4")

    def test_freeze_phases(self):
        s = default_plan(PatternKind.MIXED, steps=10).stage("2")
        assert [bool(s.frozen_at(i)) for i in range(10)] == [True] * 5 + [False] * 5


class TestTraining:
    def test_repeated_batch_loss_falls(self):
        tr = trainer_for(PatternKind.MIXED, n=2)
        res = tr.run_stage(stage(steps=200), 0)
        assert res.losses[199] < res.losses[0]

    def test_deterministic_trace(self):
        a = trainer_for(PatternKind.PARALLEL_AV).run_stage(stage(voice_dropout=0.5), 0)
        b = trainer_for(PatternKind.PARALLEL_AV).run_stage(stage(voice_dropout=0.5), 0)
        assert a.losses == b.losses

    def test_frozen_conditioner(self, monkeypatch):
        import twotrack.trainer.loop as loop

        tr = trainer_for(PatternKind.MIXED)
        before = tr.conditioner.state_dict()
        dec_before = tr.decoder.state_dict()
        seen = []
        real_step = loop.train_step

        def spy(decoder, conditioner, optimizer, *args, **kw):
            out = real_step(decoder, conditioner, optimizer, *args, **kw)
            seen.append([p.grad is None or not p.grad.any() for p in conditioner.parameters()])
            return out

        monkeypatch.setattr(loop, "train_step", spy)
        tr.run_stage(stage("2", steps=4, frozen=("conditioner",), freeze_fraction=1.0), 1)
        assert all(all(s) for s in seen)
        after = tr.conditioner.state_dict()
        assert all(np.array_equal(before[k], after[k]) for k in before)
        assert any(not np.array_equal(dec_before[k], v) for k, v in tr.decoder.state_dict().items())
        assert all(p.requires_grad for p in tr.conditioner.parameters())

    def test_unfrozen_phase_moves_conditioner(self):
        tr = trainer_for(PatternKind.MIXED)
        before = tr.conditioner.state_dict()
        tr.run_stage(stage("2", steps=4, frozen=("conditioner",), freeze_fraction=0.5), 1)
        after = tr.conditioner.state_dict()
        assert any(not np.array_equal(before[k], after[k]) for k in before)

    def test_empty_filter(self):
        dec, cond = tiny_system(PatternKind.MIXED)
        items = tiny_items(cond, 3, metrics={"edit_distance_rate": 0.5, "alignment_score": 1.0,
                                             "energy_vocal": 5e3, "energy_acc": 5e3})
        with pytest.raises(DataError):
            select_items(items, HQ_FILTER)
        with pytest.raises(DataError):
            Trainer(dec, cond, items).run_stage(stage(filter=HQ_FILTER), 0)

    def test_non_finite_loss_dumps(self, tmp_path):
        tr = trainer_for(PatternKind.MIXED, tmp_path)
        tr.decoder.heads[0].weight.data[:] = np.nan
        with pytest.raises(NumericError, match="diagnostics"):
            tr.run_stage(stage(), 0)
        assert (tmp_path / "stage_1_numeric_dump.json").exists()

    def test_log_and_checkpoint(self, tmp_path):
        tr = trainer_for(PatternKind.MIXED_PRO, tmp_path)
        res = tr.run_stage(stage(steps=3), 0)
        rows = list(csv.reader(open(res.log)))
        assert rows[0][:4] == ["step", "lr", "loss", "grad_norm"]
        assert rows[0][4:] == ["mixed_cb1", "mixed_cb2", "vocal_cb1", "vocal_cb2"]
        assert [float(r[2]) for r in rows[1:]] == res.losses
        assert res.checkpoint.exists()

    def test_resume_reproduces_trace(self, tmp_path):
        full = trainer_for(PatternKind.INTERLEAVING_AV, tmp_path / "a", checkpoint_every=3)
        ref = full.run_stage(stage(steps=7, voice_dropout=0.5), 0)
        part = trainer_for(PatternKind.INTERLEAVING_AV, tmp_path / "b", checkpoint_every=3)
        part.run_stage(stage(steps=7, voice_dropout=0.5), 0,
                       early_stop=lambda step, m: step == 4)
        again = trainer_for(PatternKind.INTERLEAVING_AV, tmp_path / "b", seed=0)
        again.decoder.heads[0].weight.data[:] = 0.0  # overwritten by the resume checkpoint
        res = again.run_stage(stage(steps=7, voice_dropout=0.5), 0, resume=True)
        assert res.losses == ref.losses
        a = list(csv.reader(open(tmp_path / "a" / "stage_1_log.csv")))
        b = list(csv.reader(open(tmp_path / "b" / "stage_1_log.csv")))
        assert a == b

    def test_teacher_forced_metrics_chance(self):
        tr = trainer_for(PatternKind.MIXED, n=3)
        loss, acc = teacher_forced_metrics(tr.decoder, tr.conditioner, tr.items)
        assert loss == pytest.approx(np.log(9), rel=0.05)
        assert 0.0 <= acc <= 0.5


class TestDualInit:
    def mixed_checkpoint(self, tmp_path, kind=PatternKind.MIXED):
        dec, cond = tiny_system(kind, seed=3)
        path = tmp_path / "stage_1.ckpt"
        save_model(path, dec, cond)
        return path, dec, cond

    @pytest.mark.parametrize("kind", [k for k in PatternKind if k.is_dual])
    def test_shared_weights_verbatim(self, tmp_path, kind):
        path, src, src_cond = self.mixed_checkpoint(tmp_path)
        dec, cond, loaded = init_dual_from_mixed(path, kind)
        src_state, state = src.state_dict(), dec.state_dict()
        shared = sorted(set(src_state) & set(state))
        assert sorted(loaded) == shared
        assert all(np.array_equal(src_state[n], state[n]) for n in shared)
        fresh = sorted(set(state) - set(src_state))
        assert fresh == (["embed.1", "heads.1.bias", "heads.1.weight"] if kind.is_parallel
                         else [])
        c1, c2 = src_cond.state_dict(), cond.state_dict()
        assert all(np.array_equal(c1[n], c2[n]) for n in c1)

    def test_missing_checkpoint(self, tmp_path):
        with pytest.raises(PlanError):
            init_dual_from_mixed(tmp_path / "nope.ckpt", PatternKind.PARALLEL_AV)

    def test_rejects_dual_source(self, tmp_path):
        path, _, _ = self.mixed_checkpoint(tmp_path, PatternKind.PARALLEL_VA)
        with pytest.raises(PlanError):
            init_dual_from_mixed(path, PatternKind.PARALLEL_AV)


class TestRunPlan:
    def build(self, kind):
        return lambda: tiny_system(kind)

    def test_mixed_then_dual(self, tmp_path):
        _, cond = tiny_system(PatternKind.MIXED)
        items = tiny_items(cond, 4)
        plan = with_steps(default_plan(PatternKind.MIXED), 3)
        results, _ = run_plan(plan, self.build(PatternKind.MIXED), items, out_dir=tmp_path / "m",
                              batch_size=2)
        assert [r.name for r in results] == ["1", "2", "3"]
        assert all((tmp_path / "m" / f"stage_{n}.ckpt").exists() for n in ("1", "2", "3"))
        dual = with_steps(default_plan(PatternKind.PARALLEL_AV), 3)
        results, tr = run_plan(dual, None, items, out_dir=tmp_path / "d", batch_size=2,
                               init_checkpoint=tmp_path / "m" / "stage_1.ckpt")
        assert [r.name for r in results] == ["1.5", "2", "3"]
        assert tr.decoder.kind is PatternKind.PARALLEL_AV

    def test_single_stage_continues_from_checkpoint(self, tmp_path):
        _, cond = tiny_system(PatternKind.MIXED)
        items = tiny_items(cond, 4)
        plan = with_steps(default_plan(PatternKind.MIXED), 2)
        with pytest.raises(PlanError):
            run_plan(plan, self.build(PatternKind.MIXED), items, names=["2"], out_dir=tmp_path)
        run_plan(plan, self.build(PatternKind.MIXED), items, names=["1"], out_dir=tmp_path)
        results, _ = run_plan(plan, self.build(PatternKind.MIXED), items, names=["2"],
                              out_dir=tmp_path)
        assert results[0].name == "2"

    def test_dual_needs_init(self, tmp_path):
        _, cond = tiny_system(PatternKind.MIXED)
        plan = with_steps(default_plan(PatternKind.INTERLEAVING_AV), 2)
        with pytest.raises(PlanError):
            run_plan(plan, None, tiny_items(cond, 2), out_dir=tmp_path)

    def test_out_of_order(self, tmp_path):
        plan = default_plan(PatternKind.MIXED)
        with pytest.raises(PlanError):
            run_plan(plan, None, [], names=["3", "1"])
