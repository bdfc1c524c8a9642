import numpy as np
import pytest

from fds import InputError
from fds.matching import (
    PrototypeSet,
    build_prototypes,
    decide_mask,
    partition_support,
    similarity_maps,
    SimilarityMaps,
)


def _features(vectors_2d):
    """Build an HxWxC feature map from a nested list of vectors."""
    return np.asarray(vectors_2d, dtype=np.float32)


class TestPartitionSupport:
    def test_single_foreground_cell(self, rng):
        f = rng.standard_normal((2, 2, 5)).astype(np.float32)
        mask = np.array([[1, 0], [0, 0]], dtype=np.uint8)
        fg, bg = partition_support(f, mask)
        assert fg.shape == (1, 5)
        assert bg.shape == (3, 5)
        assert (fg[0] == f[0, 0]).all()

    def test_checkerboard(self, rng):
        f = rng.standard_normal((2, 2, 3)).astype(np.float32)
        mask = np.array([[1, 0], [0, 1]], dtype=np.uint8)
        fg, bg = partition_support(f, mask)
        assert fg.shape[0] == 2 and bg.shape[0] == 2
        assert fg.shape[0] + bg.shape[0] == 4

    def test_all_foreground_errors(self, rng):
        f = rng.standard_normal((2, 2, 3)).astype(np.float32)
        with pytest.raises(InputError, match="no background"):
            partition_support(f, np.ones((2, 2), dtype=np.uint8))

    def test_shape_mismatch_errors(self, rng):
        f = rng.standard_normal((2, 2, 3)).astype(np.float32)
        with pytest.raises(InputError, match="does not match"):
            partition_support(f, np.ones((3, 3), dtype=np.uint8))


class TestBuildPrototypes:
    def test_isolated_cell_patch_is_identity(self, rng):
        f = rng.standard_normal((4, 4, 3)).astype(np.float32)
        mask = np.zeros((4, 4), dtype=np.uint8)
        mask[1, 1] = 1
        ps = build_prototypes([(f, mask)], fg_strategy="patch")
        assert ps.foreground.shape == (1, 3)
        assert np.allclose(ps.foreground[0], f[1, 1], atol=1e-6)

    def test_adjacent_pair_patch_average(self, rng):
        f = rng.standard_normal((4, 4, 3)).astype(np.float32)
        mask = np.zeros((4, 4), dtype=np.uint8)
        mask[1, 1] = mask[1, 2] = 1
        ps = build_prototypes([(f, mask)], fg_strategy="patch")
        expected = (f[1, 1] + f[1, 2]) / 2
        assert ps.foreground.shape == (2, 3)
        assert np.allclose(ps.foreground[0], expected, atol=1e-6)
        assert np.allclose(ps.foreground[1], expected, atol=1e-6)

    def test_constant_map_any_strategy(self):
        f = np.full((3, 3, 4), 2.0, dtype=np.float32)
        mask = np.zeros((3, 3), dtype=np.uint8)
        mask[0, 0] = 1
        for strategy in ("dense", "patch", "pool"):
            ps = build_prototypes([(f, mask)], fg_strategy=strategy,
                                  bg_strategy=strategy)
            assert np.allclose(ps.foreground, 2.0)
            assert np.allclose(ps.background, 2.0)

    def test_pool_is_single_vector(self, rng):
        f = rng.standard_normal((4, 4, 3)).astype(np.float32)
        mask = np.zeros((4, 4), dtype=np.uint8)
        mask[:2] = 1
        ps = build_prototypes([(f, mask)], fg_strategy="pool", bg_strategy="pool")
        assert ps.foreground.shape == (1, 3)
        assert np.allclose(ps.foreground[0], f[:2].reshape(-1, 3).mean(axis=0),
                           atol=1e-5)

    def test_multi_shot_concatenates(self, rng):
        shots = []
        for _ in range(3):
            f = rng.standard_normal((4, 4, 3)).astype(np.float32)
            mask = np.zeros((4, 4), dtype=np.uint8)
            mask[2, 2] = 1
            shots.append((f, mask))
        ps = build_prototypes(shots, fg_strategy="dense")
        assert ps.foreground.shape == (3, 3)
        assert ps.background.shape == (45, 3)

    def test_zero_vectors_dropped(self):
        f = np.zeros((2, 2, 3), dtype=np.float32)
        f[0, 1] = [1, 0, 0]
        mask = np.array([[1, 0], [0, 0]], dtype=np.uint8)
        # The only foreground vector is all-zero.
        with pytest.raises(InputError, match="foreground prototype vectors are zero"):
            build_prototypes([(f, mask)], fg_strategy="dense")

    def test_even_patch_rejected(self, rng):
        f = rng.standard_normal((4, 4, 3)).astype(np.float32)
        mask = np.zeros((4, 4), dtype=np.uint8)
        mask[0, 0] = 1
        with pytest.raises(InputError, match="patch size"):
            build_prototypes([(f, mask)], patch=2)


class TestSimilarityMaps:
    def test_identical_vector_gives_one(self):
        v = np.array([1.0, 2.0, 3.0], dtype=np.float32)
        q = np.zeros((1, 2, 3), dtype=np.float32)
        q[0, 0] = v
        q[0, 1] = [0.0, 0.0, 1.0]
        ps = PrototypeSet(v[None, :], np.array([[0, 0, 1]], dtype=np.float32),
                          "dense", "dense")
        sims = similarity_maps(q, ps)
        assert sims.fg[0, 0] == pytest.approx(1.0, abs=1e-6)

    def test_orthogonal_background_gives_zero(self):
        q = np.zeros((1, 1, 2), dtype=np.float32)
        q[0, 0] = [1.0, 0.0]
        ps = PrototypeSet(np.array([[1.0, 0.0]], dtype=np.float32),
                          np.array([[0.0, 1.0]], dtype=np.float32),
                          "dense", "dense")
        sims = similarity_maps(q, ps)
        assert sims.bg[0, 0] == pytest.approx(0.0, abs=1e-7)

    def test_max_over_opposed_prototypes(self):
        v = np.array([1.0, 1.0], dtype=np.float32)
        q = v.reshape(1, 1, 2)
        ps = PrototypeSet(np.stack([v, -v]), np.array([[0.0, 1.0]], np.float32),
                          "dense", "dense")
        sims = similarity_maps(q, ps)
        assert sims.fg[0, 0] == pytest.approx(1.0, abs=1e-6)

    def test_channel_mismatch_errors(self, rng):
        q = rng.standard_normal((2, 2, 3)).astype(np.float32)
        ps = PrototypeSet(np.ones((1, 4), np.float32), np.ones((1, 4), np.float32),
                          "dense", "dense")
        with pytest.raises(InputError, match="channels"):
            similarity_maps(q, ps)

    def test_bounded_in_unit_interval(self, rng):
        q = rng.standard_normal((6, 6, 8)).astype(np.float32)
        protos = rng.standard_normal((10, 8)).astype(np.float32)
        ps = PrototypeSet(protos, protos, "dense", "dense")
        sims = similarity_maps(q, ps)
        for m in (sims.fg, sims.bg):
            assert (m <= 1 + 1e-6).all() and (m >= -1 - 1e-6).all()

    def test_scale_invariance(self, rng):
        q = rng.standard_normal((5, 5, 4)).astype(np.float32)
        protos = rng.standard_normal((6, 4)).astype(np.float32)
        ps = PrototypeSet(protos, protos[:3], "dense", "dense")
        a = similarity_maps(q, ps)
        b = similarity_maps(q * 37.5, ps)
        assert np.allclose(a.fg, b.fg, atol=1e-6)
        assert np.allclose(a.bg, b.bg, atol=1e-6)
        assert np.array_equal(decide_mask(a, 5, 5), decide_mask(b, 5, 5))

    def test_extra_prototype_only_increases(self, rng):
        q = rng.standard_normal((4, 4, 3)).astype(np.float32)
        protos = rng.standard_normal((3, 3)).astype(np.float32)
        bg = rng.standard_normal((2, 3)).astype(np.float32)
        base = similarity_maps(q, PrototypeSet(protos, bg, "dense", "dense"))
        extra = np.concatenate([protos, rng.standard_normal((1, 3)).astype(np.float32)])
        more = similarity_maps(q, PrototypeSet(extra, bg, "dense", "dense"))
        assert (more.fg >= base.fg - 1e-7).all()


class TestDecideMask:
    def test_strict_comparison(self):
        sims = SimilarityMaps(np.array([[0.9]]), np.array([[0.2]]))
        assert decide_mask(sims, 1, 1)[0, 0] == 1

    def test_tie_goes_to_background(self):
        sims = SimilarityMaps(np.array([[0.5]]), np.array([[0.5]]))
        assert decide_mask(sims, 1, 1)[0, 0] == 0

    def test_nearest_neighbor_upsample(self):
        sims = SimilarityMaps(
            np.array([[1.0, 0.0], [0.0, 0.0]]),
            np.array([[0.0, 1.0], [1.0, 1.0]]),
        )
        out = decide_mask(sims, 4, 4)
        expected = np.zeros((4, 4), dtype=np.uint8)
        expected[:2, :2] = 1
        assert (out == expected).all()


class TestSelfMatching:
    def test_support_as_query_reproduces_mask(self, rng):
        from testkit import defect_scene
        from fds.dataset import downsample_mask
        from fds.features import avgpool_features

        img, mask = defect_scene(rng, size=64, factor=4, noise=10.0)
        feats = avgpool_features(img, 4)
        small = downsample_mask(mask, 16, 16)
        ps = build_prototypes([(feats, small)])
        sims = similarity_maps(feats, ps)
        # Every foreground support cell matches itself perfectly.
        assert np.allclose(sims.fg[small > 0], 1.0, atol=1e-6)
        out = decide_mask(sims, 64, 64)
        inter = ((out > 0) & (mask > 0)).sum()
        union = ((out > 0) | (mask > 0)).sum()
        assert inter / union >= 0.95
