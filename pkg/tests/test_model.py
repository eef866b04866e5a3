import math

import numpy as np
import pytest

from conftest import CAPTIONS, LYRICS, random_training, tiny_system
from twotrack.errors import CapacityError, ConfigError, VocabularyError
from twotrack.model import (Decoder, DecoderConfig, batch_loss, collate, generate,
                            load_model, loss_from_logits, full_scale_config, save_model,
                            validate_weights)
from twotrack.numerics import Tensor, default_dtype, grad_check_parameters, no_grad
from twotrack.patterns import PatternKind, invert_pattern, specials

KINDS = list(PatternKind)


def small_decoder(kind, n_q=3, K=10, width=32, seed=0):
    cfg = DecoderConfig(kind=kind, layers=2, width=width, heads=2, num_codebooks=n_q,
                        codebook_size=K)
    return Decoder(cfg, np.random.default_rng(seed))


class TestConfig:
    def test_defaults(self):
        cfg = DecoderConfig()
        assert (cfg.layers, cfg.width, cfg.heads, cfg.num_codebooks, cfg.codebook_size) == \
            (4, 128, 4, 4, 64)
        assert cfg.vocal_weight == 0.1 and cfg.vocab == 67

    def test_full_scale_preset(self):
        cfg = full_scale_config(PatternKind.INTERLEAVING_AV)
        assert (cfg.layers, cfg.width, cfg.num_codebooks, cfg.codebook_size) == (24, 1024, 8, 1024)

    @pytest.mark.parametrize("bad", [dict(vocal_weight=-0.1), dict(heads=3), dict(width=31, heads=1),
                                     dict(kind="Stereo")])
    def test_invalid(self, bad):
        with pytest.raises(ConfigError):
            DecoderConfig(**bad)

    @pytest.mark.parametrize("kind,groups", [("Mixed", 1), ("MixedPro", 2), ("ParallelAV", 2),
                                             ("InterleavingVA", 1)])
    def test_head_groups(self, kind, groups):
        assert len(small_decoder(kind).heads) == groups


class TestEmbedding:
    def test_all_pad_is_position_only(self):
        d = small_decoder("Mixed")
        pad = specials(10)[0]
        out = d.embed_step(np.full((5, 1, 3), pad))
        from twotrack.numerics.nn import sinusoidal_positions
        np.testing.assert_allclose(out.data, sinusoidal_positions(5, 32), atol=1e-7)

    def test_single_codebook_lookup(self):
        d = small_decoder("Mixed", n_q=1)
        codes = np.array([[[4]], [[7]]])
        from twotrack.numerics.nn import sinusoidal_positions
        expected = d.embed[0].data[0, [4, 7]] + sinusoidal_positions(2, 32)
        np.testing.assert_allclose(d.embed_step(codes).data, expected, rtol=1e-6)

    def test_parallel_average(self):
        d = small_decoder("ParallelStd")
        d.embed[1].data[:] = d.embed[0].data
        codes = np.random.default_rng(0).integers(0, 10, size=(4, 1, 3))
        both = np.concatenate([codes, codes], axis=1)
        from twotrack.numerics.nn import sinusoidal_positions
        pe = sinusoidal_positions(4, 32)
        table = d.embed[0].data
        summed = sum(table[k, codes[:, 0, k]] for k in range(3))
        np.testing.assert_allclose(d.embed_step(both).data - pe, summed / 3, rtol=1e-5, atol=1e-7)

    def test_out_of_range(self):
        with pytest.raises(VocabularyError):
            small_decoder("Mixed").embed_step(np.full((2, 1, 3), 13))


class TestForward:
    def test_null_condition_row(self):
        d = small_decoder("MixedPro")
        h = d.forward(np.zeros((4, 1, 3), dtype=int), Tensor(np.ones((1, 32))))
        assert h.shape == (4, 32) and np.all(np.isfinite(h.data))

    @pytest.mark.parametrize("kind", ["Mixed", "ParallelVA", "InterleavingAV"])
    def test_causality(self, kind):
        d = small_decoder(kind)
        rng = np.random.default_rng(1)
        G = 2 if "Parallel" in kind else 1
        codes = rng.integers(0, 13, size=(8, G, 3))
        cond = Tensor(rng.normal(size=(5, 32)))
        base = d.forward(codes, cond).data
        changed = codes.copy()
        changed[5:] = rng.integers(0, 13, size=changed[5:].shape)
        after = d.forward(changed, cond).data
        np.testing.assert_array_equal(base[:5], after[:5])
        assert not np.allclose(base[5:], after[5:])

    def test_capacity(self):
        cfg = DecoderConfig(layers=1, width=16, heads=2, num_codebooks=2, codebook_size=4,
                            max_len=6)
        with pytest.raises(CapacityError):
            Decoder(cfg).forward(np.zeros((7, 1, 2), dtype=int), Tensor(np.ones((1, 16))))

    def test_attention_export(self):
        d = small_decoder("InterleavingAV")
        _, maps = d.forward(np.zeros((6, 1, 3), dtype=int), Tensor(np.ones((4, 32))),
                            return_attention=True)
        assert len(maps) == 2
        w_self, w_cross = maps[0]
        assert w_self.shape == (2, 6, 6) and w_cross.shape == (2, 6, 4)
        np.testing.assert_allclose(w_self.sum(-1), 1.0, rtol=1e-5)


class TestLoss:
    @pytest.mark.parametrize("kind", KINDS)
    @pytest.mark.parametrize("w", [[0.25] * 4, [0.4, 0.3, 0.2, 0.1], [1.0, 0, 0, 0]])
    def test_uniform_logits(self, kind, w):
        # K = 61 gives a per-codebook vocabulary of exactly 64
        with default_dtype(np.float64):
            rng = np.random.default_rng(0)
            tr = random_training(PatternKind(kind), 4, 61, 7, rng)
            b = collate([tr], [Tensor(np.ones((1, 8)))])
            logits = {s.head_group: Tensor(np.zeros(s.targets.shape + (64,))) for s in b.streams}
            lam = 0.1
            res = loss_from_logits(logits, b.streams, w, kind, lam)
            expected = math.log(64) * (1 + lam if kind is PatternKind.MIXED_PRO else 1.0)
            assert abs(res.item() - expected) < 1e-6

    def test_mixed_pro_zero_lambda_equals_mixed(self):
        rng = np.random.default_rng(3)
        mixed, _ = tiny_system("Mixed", seed=5)
        pro, _ = tiny_system("MixedPro", seed=5, vocal_weight=0.0)
        shared = mixed.state_dict()
        pro.load_state_dict(shared, strict=False)
        from twotrack.codec import TokenGrid
        from twotrack.patterns import build_mixed
        m, v = (TokenGrid(rng.integers(0, 6, (2, 9)), 6) for _ in range(2))
        cond = [Tensor(rng.normal(size=(3, 16)).astype(np.float32))]
        w = [0.6, 0.4]
        a = batch_loss(mixed, collate([build_mixed(m).training()], cond), w).item()
        b = batch_loss(pro, collate([build_mixed(m, v).training()], cond), w).item()
        assert a == b

    @pytest.mark.parametrize("w", [[0.5, 0.6], [0.2, 0.8], [1.2, -0.2]])
    def test_invalid_weights(self, w):
        with pytest.raises(ConfigError):
            validate_weights(w, 2)

    def test_masked_positions_have_zero_gradient(self):
        with default_dtype(np.float64):
            rng = np.random.default_rng(0)
            tr = random_training(PatternKind.PARALLEL_AV, 3, 5, 4, rng)
            b = collate([tr], [Tensor(np.ones((1, 4)))])
            logits = {s.head_group: Tensor(rng.normal(size=s.targets.shape + (8,)),
                                           requires_grad=True) for s in b.streams}
            loss_from_logits(logits, b.streams, [0.5, 0.3, 0.2], "ParallelAV", 0.1).total.backward()
            pad = specials(5)[0]
            for s in b.streams:
                g = logits[s.head_group].grad
                assert np.all(g[s.targets == pad] == 0.0)
                assert np.all(np.abs(g[s.targets != pad]).sum(-1) > 0)


@pytest.mark.parametrize("kind", KINDS)
def test_full_loss_gradient(kind):
    with default_dtype(np.float64):
        decoder, cond = tiny_system(kind)
    rng = np.random.default_rng(7)
    seqs = [random_training(kind, 2, 6, T, rng) for T in (3, 5)]
    stack = rng.normal(size=(2, 150, 4)) * 0.5

    def loss():
        bundles = [cond(LYRICS[0], CAPTIONS[0], stack), cond(LYRICS[1], CAPTIONS[1])]
        batch = collate(seqs, [b.cond for b in bundles])
        return batch_loss(decoder, batch, [0.7, 0.3]).total

    params = dict(decoder.named_parameters(prefix="decoder."))
    params.update(cond.named_parameters(prefix="conditioner."))
    errs = grad_check_parameters(loss, params.items(), max_entries=6)
    worst = max(errs, key=errs.get)
    assert errs[worst] < 1e-4, (worst, errs[worst])


class TestGenerate:
    def test_greedy_deterministic(self):
        d = small_decoder("InterleavingAV")
        cond = Tensor(np.random.default_rng(0).normal(size=(3, 32)))
        a = generate(d, cond, 6, temperature=0.0, seed=1)
        b = generate(d, cond, 6, temperature=0.0, seed=99)
        assert a == b

    def test_sampled_seeded(self):
        d = small_decoder("ParallelAV")
        cond = Tensor(np.ones((2, 32)))
        assert generate(d, cond, 6, seed=3) == generate(d, cond, 6, seed=3)

    @pytest.mark.parametrize("kind", KINDS)
    def test_valid_output(self, kind):
        d = small_decoder(kind, seed=2)
        seq = generate(d, Tensor(np.ones((2, 32))), 5, seed=4)
        inv = invert_pattern(seq)
        assert 1 <= seq.num_frames <= 5
        grids = [inv.mixed] if kind.is_mixed else [inv.vocal, inv.acc]
        for g in grids:
            assert g.num_frames == seq.num_frames and g.codes.max() < 10

    def test_max_frames_forces_end(self):
        d = small_decoder("Mixed")
        # make EOS impossible to pick so only the frame cap can end generation
        d.heads[0].bias.data.reshape(3, 13)[:, 12] = -1e4
        seq = generate(d, Tensor(np.ones((2, 32))), 4, temperature=0.0)
        assert seq.num_frames == 4

    def test_interleaving_parity(self):
        d = small_decoder("InterleavingVA", seed=5)
        seq = generate(d, Tensor(np.ones((2, 32))), 5, seed=0)
        assert seq.num_steps % 2 == 0
        assert seq.step_tracks()[:4] == ["vocal", "acc", "vocal", "acc"]

    def test_mixed_pro_aux_heads_do_not_matter(self):
        d = small_decoder("MixedPro", seed=8)
        cond = Tensor(np.random.default_rng(2).normal(size=(4, 32)))
        with_aux = generate(d, cond, 8, temperature=0.0)
        d.drop_auxiliary_heads()
        assert len(d.heads) == 1
        assert generate(d, cond, 8, temperature=0.0) == with_aux

    def test_capacity(self):
        cfg = DecoderConfig(layers=1, width=16, heads=2, num_codebooks=2, codebook_size=4,
                            max_len=8)
        with pytest.raises(CapacityError):
            generate(Decoder(cfg), Tensor(np.ones((1, 16))), 20)


def test_model_file_round_trip(tmp_path):
    d, c = tiny_system("ParallelVA")
    save_model(tmp_path / "m.ckpt", d, c, {"stage": "1"})
    d2, c2, meta, _ = load_model(tmp_path / "m.ckpt")
    assert meta["stage"] == "1" and d2.config == d.config
    for (n1, p1), (n2, p2) in zip(d.named_parameters(), d2.named_parameters()):
        assert n1 == n2 and np.array_equal(p1.data, p2.data)
    with no_grad():
        a = c("ba da", "calm pop").cond.data
        b = c2("ba da", "calm pop").cond.data
    np.testing.assert_array_equal(a, b)
