import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hybridlid.errors import DataError
from hybridlid.fusion import (
    FusionConfig,
    apply_temperature,
    default_grid,
    fuse,
    fusion_accuracy,
    read_fusion_config,
    tune_fusion,
    write_fusion_config,
)
from hybridlid.lid_gen import LidDistribution, classify


def dist(**probs):
    return LidDistribution(probs)


def disjoint_error_dev():
    """Each model is wrong on half the items, and is only mildly confident when wrong."""
    dev = []
    for i in range(10):
        truth, other = ("a", "b") if i % 2 == 0 else ("b", "a")
        right = {truth: 0.9, other: 0.1}
        wrong = {truth: 0.4, other: 0.6}
        if i < 5:
            dev.append((LidDistribution(right), LidDistribution(wrong), truth))
        else:
            dev.append((LidDistribution(wrong), LidDistribution(right), truth))
    return dev


def random_dist(rng, langs):
    p = rng.dirichlet(np.full(len(langs), 0.5))
    p = p / math.fsum(p)
    return LidDistribution(dict(zip(langs, map(float, p))))


class TestFuse:
    def test_arithmetic_mean(self):
        f = fuse(dist(a=0.6, b=0.4), dist(a=0.2, b=0.8))
        assert f.probs["a"] == pytest.approx(0.4, abs=1e-15)
        assert f.probs["b"] == pytest.approx(0.6, abs=1e-15)

    def test_fixed_point(self):
        p = dist(a=0.2, b=0.3, c=0.5)
        for w in (0.0, 0.3, 1.0):
            assert fuse(p, p, FusionConfig(w)).probs == pytest.approx(p.probs, abs=1e-15)

    def test_boundary_weight(self):
        e, g = dist(a=0.2, b=0.8), dist(a=0.9, b=0.1)
        f = fuse(e, g, FusionConfig(1.0, 2.0, 0.5))
        assert f.probs == pytest.approx(apply_temperature(e, 2.0), abs=1e-15)

    def test_temperature(self):
        t = apply_temperature(dist(a=0.2, b=0.8), 0.5)
        assert t["a"] == pytest.approx(0.04 / 0.68, abs=1e-15)
        flat = apply_temperature(dist(a=0.2, b=0.8), 1e6)
        assert flat["a"] == pytest.approx(0.5, abs=1e-5)

    def test_key_mismatch(self):
        with pytest.raises(DataError, match="differ"):
            fuse(dist(a=1.0), dist(b=1.0))

    def test_config_ranges(self):
        with pytest.raises(ValueError):
            FusionConfig(1.5)
        with pytest.raises(ValueError):
            FusionConfig(0.5, 0.0)

    @settings(max_examples=200, deadline=None)
    @given(
        st.integers(0, 2**31),
        st.floats(0, 1),
        st.sampled_from([0.25, 0.5, 1.0, 2.0, 4.0]),
        st.sampled_from([0.25, 0.5, 1.0, 2.0, 4.0]),
    )
    def test_shared_argmax_and_validity(self, seed, w, te, tg):
        rng = np.random.default_rng(seed)
        langs = ["a", "b", "c", "d"]
        e, g = random_dist(rng, langs), random_dist(rng, langs)
        f = fuse(e, g, FusionConfig(w, te, tg))
        assert math.fsum(f.probs.values()) == pytest.approx(1.0, abs=1e-9)
        assert all(p >= 0 for p in f.probs.values())
        if classify(e) == classify(g):
            assert classify(f) == classify(e)


class TestTune:
    def test_embedding_always_right(self):
        dev = [(dist(a=0.6, b=0.4), dist(a=0.01, b=0.99), "a") for _ in range(4)]
        grid = [FusionConfig(w / 4) for w in range(5)]
        assert tune_fusion(dev, grid).weight == 1.0

    def test_both_right_ties_to_half(self):
        dev = [(dist(a=0.9, b=0.1), dist(a=0.8, b=0.2), "a")] * 3
        assert tune_fusion(dev) == FusionConfig(0.5, 0.25, 0.25)
        assert tune_fusion(dev, [FusionConfig(w / 10) for w in range(11)]) == FusionConfig()

    def test_disjoint_errors(self):
        dev = disjoint_error_dev()
        assert fusion_accuracy(dev, FusionConfig(1.0)) == 0.5
        assert fusion_accuracy(dev, FusionConfig(0.0)) == 0.5
        assert fusion_accuracy(dev, FusionConfig()) == 1.0
        assert fusion_accuracy(dev, tune_fusion(dev)) == 1.0

    def test_never_worse_than_uniform(self, rng):
        langs = ["a", "b", "c"]
        for _ in range(20):
            dev = [(random_dist(rng, langs), random_dist(rng, langs), str(rng.choice(langs))) for _ in range(15)]
            best = tune_fusion(dev)
            assert fusion_accuracy(dev, best) >= fusion_accuracy(dev, FusionConfig())

    def test_grid_shapes(self):
        assert len(default_grid()) == 55
        assert all(c.temp_emb == c.temp_gen for c in default_grid())
        assert len(default_grid(tie_temperatures=False)) == 11 * 25

    def test_empty_dev(self):
        with pytest.raises(DataError):
            tune_fusion([])


def test_config_roundtrip(tmp_path):
    cfg = FusionConfig(0.3, 0.5, 2.0)
    write_fusion_config(cfg, tmp_path / "f.txt")
    assert read_fusion_config(tmp_path / "f.txt") == cfg
    (tmp_path / "bad.txt").write_text("weight=2\n")
    with pytest.raises(DataError):
        read_fusion_config(tmp_path / "bad.txt")
