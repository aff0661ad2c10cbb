import numpy as np
import pytest
import torch

from glowgs.descriptor import FEATURE_DIM, describe
from glowgs.errors import InvalidInputError
from glowgs.featbank import (
    DEFAULT_THRESHOLD,
    FeatureBank,
    FeatureSet,
    build_bank,
    calibrate_threshold,
    retrieve,
    retrieve_batch,
    semantic_term,
    verify,
    view_distance,
)


def fs(global_, source_view=0):
    g = np.asarray(global_, dtype=np.float32)
    return FeatureSet(global_=g, patches=np.zeros((1, g.size), dtype=np.float32),
                      grid=(1, 1), source_view=source_view)


def make_bank(vectors):
    v = np.asarray(vectors, dtype=np.float32)
    return FeatureBank(
        dim=v.shape[1],
        vectors=v,
        source_views=np.zeros(v.shape[0], dtype=np.uint32),
        patch_indices=np.arange(v.shape[0], dtype=np.uint32),
    )


class TestViewDistance:
    def test_identical_sets(self, rng):
        g = rng.random(FEATURE_DIM).astype(np.float32)
        assert view_distance(fs(g), [fs(g)]) == 0.0

    def test_known_distance(self):
        a = fs(np.eye(4)[0])
        b = fs(np.eye(4)[1])
        assert view_distance(a, [b]) == pytest.approx(np.sqrt(2.0), rel=1e-6)

    def test_mean_over_frames(self):
        a = fs(np.eye(4)[0])
        cands = [fs(np.eye(4)[0]), fs(np.eye(4)[1])]
        assert view_distance(a, cands) == pytest.approx(np.sqrt(2.0) / 2, rel=1e-6)

    def test_empty_rejected(self):
        with pytest.raises(InvalidInputError):
            view_distance(fs(np.eye(4)[0]), [])

    def test_dim_mismatch_rejected(self):
        with pytest.raises(InvalidInputError):
            view_distance(fs(np.eye(4)[0]), [fs(np.zeros(3))])


class TestVerify:
    def test_identical_accepted(self, rng):
        g = rng.random(FEATURE_DIM).astype(np.float32)
        rep = verify(fs(g), [fs(g)])
        assert rep.accepted
        assert rep.distance == 0.0
        assert rep.rounds == 1

    def test_far_rejected_without_regen(self):
        rep = verify(fs(np.eye(4)[0] * 3), [fs(np.eye(4)[1] * 3)])
        assert not rep.accepted
        assert rep.distance > DEFAULT_THRESHOLD

    def test_regeneration_recovers(self):
        ref = fs(np.eye(4)[0])
        bad = [fs(np.eye(4)[1] * 3)]
        calls = []

        def regen(round_idx):
            calls.append(round_idx)
            return [ref]  # second attempt matches exactly

        rep = verify(ref, bad, regen=regen, max_rounds=2)
        assert rep.accepted
        assert rep.rounds == 2
        assert calls == [1]

    def test_rounds_exhausted(self):
        ref = fs(np.eye(4)[0])
        bad = [fs(np.eye(4)[1] * 3)]
        rep = verify(ref, bad, regen=lambda r: bad, max_rounds=3)
        assert not rep.accepted
        assert rep.rounds == 3


class TestBankBuild:
    def test_build_shapes(self, rng):
        views = [rng.random((300, 300, 3)) for _ in range(2)]
        bank = build_bank(views, crops_per_view=3, rng=np.random.default_rng(0))
        assert bank.dim == FEATURE_DIM
        assert bank.vectors.shape == (2 * 3 * 256, FEATURE_DIM)
        assert bank.source_views.max() == 1

    def test_deterministic_per_seed(self, rng):
        views = [rng.random((300, 300, 3))]
        a = build_bank(views, crops_per_view=2, rng=np.random.default_rng(7))
        b = build_bank(views, crops_per_view=2, rng=np.random.default_rng(7))
        assert (a.vectors == b.vectors).all()

    def test_small_view_upscaled(self, rng):
        views = [rng.random((128, 128, 3))]
        bank = build_bank(views, crops_per_view=1, rng=np.random.default_rng(0))
        assert bank.vectors.shape[0] == 256

    def test_empty_views_rejected(self):
        with pytest.raises(InvalidInputError):
            build_bank([], rng=np.random.default_rng(0))


class TestRetrieve:
    def test_exact_match(self):
        bank = make_bank(np.eye(5))
        idx, dist = retrieve(bank, np.eye(5)[3])
        assert idx == 3
        assert dist == 0.0

    def test_brute_force_oracle(self, rng):
        vecs = rng.random((50, FEATURE_DIM)).astype(np.float32)
        bank = make_bank(vecs)
        for _ in range(20):
            q = rng.random(FEATURE_DIM).astype(np.float32)
            idx, dist = retrieve(bank, q)
            dists = [float(np.linalg.norm(v.astype(np.float64) - q)) for v in vecs]
            best = int(np.argmin(dists))
            assert idx == best
            assert dist == pytest.approx(dists[best], rel=1e-5)

    def test_tie_lowest_index(self):
        v = np.ones((4, 3), dtype=np.float32)
        bank = make_bank(v)
        idx, _ = retrieve(bank, np.ones(3, dtype=np.float32) * 2)
        assert idx == 0

    def test_batch_matches_single(self, rng):
        vecs = rng.random((30, FEATURE_DIM)).astype(np.float32)
        bank = make_bank(vecs)
        queries = rng.random((10, FEATURE_DIM)).astype(np.float32)
        idxs, dists = retrieve_batch(bank, queries)
        for i, q in enumerate(queries):
            idx, dist = retrieve(bank, q)
            assert idxs[i] == idx
            assert dists[i] == pytest.approx(dist, rel=1e-5)

    def test_empty_bank_rejected(self):
        bank = make_bank(np.zeros((0, 3), dtype=np.float32).reshape(0, 3))
        with pytest.raises(InvalidInputError):
            retrieve(bank, np.zeros(3, dtype=np.float32))

    def test_dim_mismatch_rejected(self):
        bank = make_bank(np.eye(5))
        with pytest.raises(InvalidInputError):
            retrieve(bank, np.zeros(4, dtype=np.float32))


class TestSemanticTerm:
    def test_zero_when_bank_contains_patches(self, rng):
        img = rng.random((256, 256, 3))
        fset = describe(img)
        bank = make_bank(fset.patches)
        loss, matches = semantic_term(fset, bank)
        assert float(loss) == pytest.approx(0.0, abs=1e-6)
        assert len(matches) == fset.patches.shape[0]

    def test_value_oracle(self, rng):
        patches = rng.random((8, 5)).astype(np.float32)
        bank_vecs = rng.random((20, 5)).astype(np.float32)
        bank = make_bank(bank_vecs)
        loss, matches = semantic_term(patches, bank)
        expected = 0.0
        for p in patches:
            d = np.linalg.norm(bank_vecs.astype(np.float64) - p.astype(np.float64), axis=1)
            expected += d.min()
        expected /= len(patches)
        assert float(loss) == pytest.approx(expected, rel=1e-5)

    def test_torch_gradients_flow(self, rng):
        patches = torch.from_numpy(rng.random((8, 5))).requires_grad_(True)
        bank = make_bank(rng.random((20, 5)).astype(np.float32))
        loss, _ = semantic_term(patches, bank)
        loss.backward()
        assert patches.grad is not None
        assert torch.isfinite(patches.grad).all()

    def test_matches_frozen_during_grad(self, rng):
        # Gradient of the loss w.r.t. one patch must point toward its fixed
        # nearest neighbor, not re-match after perturbation.
        patches = torch.from_numpy(rng.random((4, 3))).requires_grad_(True)
        bank_vecs = rng.random((10, 3)).astype(np.float32)
        bank = make_bank(bank_vecs)
        loss, matches = semantic_term(patches, bank)
        loss.backward()
        p0 = patches.detach()[0].numpy()
        target = bank_vecs[matches[0]].astype(np.float64)
        direction = (p0 - target) / np.linalg.norm(p0 - target)
        g = patches.grad[0].numpy() * 4  # undo the mean over patches
        np.testing.assert_allclose(g, direction, atol=1e-5)


class TestCalibration:
    def test_separation(self, rng):
        imgs = [rng.random((300, 300, 3)) for _ in range(3)]
        report = calibrate_threshold(imgs, rng=np.random.default_rng(0))
        assert report["same_scene"].max() < report["noise"].min()
        t = report["suggested_threshold"]
        assert report["same_scene"].max() < t < report["noise"].min()
