import math

import numpy as np
import pytest

from hybridlid.errors import DataError
from hybridlid.lid_emb import (
    Embedding,
    LogRegModel,
    aggregate_layers,
    attention_weights,
    attentive_pool,
    embed_utterance,
    extract_embedding,
    fit_classifier,
    fit_lda,
    fit_logreg,
    init_pooler,
    length_normalize,
    logreg_loss_and_grad,
    pooler_logits,
    predict_proba,
    read_classifier,
    read_embeddings,
    read_encoder_activations,
    read_pooler,
    write_classifier,
    write_embeddings,
    write_encoder_activations,
    write_pooler,
)


def small(seed=0, n_classes=3):
    return init_pooler(seed, n_classes, n_layers=5, dim=6, n_heads=4, att_hidden=7, emb_dim=9)


class TestAggregate:
    def test_rows_sum_to_one(self):
        p = init_pooler(0, 10)
        assert p.layer_weights.shape == (1024, 24)
        assert np.allclose(p.layer_weights.sum(axis=1), 1.0, atol=1e-12)

    def test_equal_layers_fixed_point(self, rng):
        p = small()
        x = rng.normal(size=(8, 6))
        out = aggregate_layers(np.stack([x] * 5), p)
        assert np.allclose(out, x, atol=1e-12)

    def test_one_hot_selects_layer(self, rng):
        p = small()
        logits = np.full((6, 5), -1e3)
        logits[:, 2] = 0.0
        p = type(p)(**{**p.__dict__, "layer_logits": logits})
        x = rng.normal(size=(5, 4, 6))
        assert np.array_equal(aggregate_layers(x, p), x[2])

    def test_convex_bounds(self, rng):
        for seed in range(10):
            p = small(seed)
            x = rng.normal(size=(5, 7, 6))
            out = aggregate_layers(x, p)
            w = p.layer_weights
            direct = np.array([[sum(w[d, l] * x[l, t, d] for l in range(5)) for d in range(6)] for t in range(7)])
            assert np.allclose(out, direct, atol=1e-12)
            assert np.all(out <= x.max(axis=0) + 1e-12) and np.all(out >= x.min(axis=0) - 1e-12)

    def test_length_mismatch(self, rng):
        p = small()
        layers = [rng.normal(size=(4, 6))] * 4 + [rng.normal(size=(3, 6))]
        with pytest.raises(DataError, match="length"):
            aggregate_layers(layers, p)


class TestPool:
    def test_attention_rows_sum_to_one(self, rng):
        p = small()
        alpha = attention_weights(rng.normal(size=(11, 6)), p)
        assert alpha.shape == (4, 11)
        assert np.allclose(alpha.sum(axis=1), 1.0, atol=1e-12)

    def test_constant_sequence(self):
        p = small()
        c = np.arange(6, dtype=float)
        pooled = attentive_pool(np.tile(c, (9, 1)), p)
        for h in range(4):
            assert np.allclose(pooled[12 * h : 12 * h + 6], c, atol=1e-12)
            assert np.all(pooled[12 * h + 6 : 12 * h + 12] == 0.0)

    def test_single_frame(self, rng):
        x = rng.normal(size=(1, 6))
        for seed in range(3):
            pooled = attentive_pool(x, small(seed))
            assert np.allclose(pooled.reshape(4, 2, 6)[:, 0], x[0], atol=1e-12)
            assert np.all(pooled.reshape(4, 2, 6)[:, 1] == 0.0)

    def test_weighted_statistics(self, rng):
        p = small(3)
        x = rng.normal(size=(10, 6))
        alpha = attention_weights(x, p)
        pooled = attentive_pool(x, p).reshape(4, 2, 6)
        for h in range(4):
            mu = sum(alpha[h, t] * x[t] for t in range(10))
            var = sum(alpha[h, t] * (x[t] - mu) ** 2 for t in range(10))
            assert np.allclose(pooled[h, 0], mu, atol=1e-12)
            assert np.allclose(pooled[h, 1], np.sqrt(var), atol=1e-6)
            assert np.all(pooled[h, 1] >= 0)

    def test_uniform_attention_is_permutation_invariant(self, rng):
        p = small()
        p = type(p)(**{**p.__dict__, "att_w2": np.zeros_like(p.att_w2)})
        x = rng.normal(size=(8, 6))
        a = attentive_pool(x, p)
        b = attentive_pool(x[rng.permutation(8)], p)
        assert np.allclose(a, b, atol=1e-12)

    def test_heads_differ_by_temperature(self, rng):
        p = small()
        alpha = attention_weights(rng.normal(size=(12, 6)), p)
        # sharper heads concentrate more mass
        assert alpha[0].max() >= alpha[3].max() or not np.allclose(alpha[0], alpha[3])


class TestEmbedding:
    def test_full_dimension_chain(self, rng):
        p = init_pooler(1, n_classes=100)
        layers = rng.normal(size=(24, 5, 1024))
        seq = aggregate_layers(layers, p)
        assert seq.shape == (5, 1024)
        pooled = attentive_pool(seq, p)
        assert pooled.shape == (8192,)
        emb = extract_embedding(pooled, p)
        assert emb.vector.shape == (512,)
        assert pooler_logits(pooled, p).shape == (100,)
        assert np.array_equal(embed_utterance(layers, p).vector, emb.vector)

    def test_linearity(self, rng):
        p = small()
        zero = extract_embedding(np.zeros(p.pooled_dim), p)
        assert np.all(zero.vector == 0.0)
        v = rng.normal(size=p.pooled_dim)
        assert np.allclose(extract_embedding(2 * v, p).vector, 2 * extract_embedding(v, p).vector, atol=1e-12)
        assert np.allclose(extract_embedding(v, p).vector, p.hid1_w @ v + p.hid1_b, atol=0)

    def test_embedding_is_pre_relu(self, rng):
        p = small()
        v = extract_embedding(rng.normal(size=p.pooled_dim), p).vector
        assert (v < 0).any()

    def test_length_normalize(self):
        v = length_normalize(np.array([3.0, 4.0, 0.0]))
        assert np.allclose(v.vector, [0.6, 0.8, 0.0], atol=1e-15)
        assert np.allclose(length_normalize(v).vector, v.vector, atol=1e-15)
        with pytest.raises(DataError):
            length_normalize(np.zeros(3))

    def test_non_finite(self):
        with pytest.raises(DataError):
            Embedding(np.array([1.0, math.nan]))


def two_blobs(rng, n=40, sep=6.0):
    a = rng.normal(size=(n, 2)) + [sep, 0.0]
    b = rng.normal(size=(n, 2)) - [sep, 0.0]
    return np.vstack([a, b]), ["a"] * n + ["b"] * n


class TestLda:
    def test_matches_direct_eigen_solve(self, rng):
        x, y = two_blobs(rng)
        lda = fit_lda(x, y, out_dim=1, shrinkage=0.0)
        # oracle: hand-built 2x2 scatters, principal eigenvector of Sw^-1 Sb
        mu = x.mean(0)
        ma, mb = x[:40].mean(0), x[40:].mean(0)
        sb = 0.5 * (np.outer(ma - mu, ma - mu) + np.outer(mb - mu, mb - mu))
        sw = ((x[:40] - ma).T @ (x[:40] - ma) + (x[40:] - mb).T @ (x[40:] - mb)) / 80
        vals, vecs = np.linalg.eig(np.linalg.solve(sw, sb))
        v = np.real(vecs[:, np.argmax(np.real(vals))])
        w = lda.projection[:, 0]
        assert abs(abs(v @ w) / (np.linalg.norm(v) * np.linalg.norm(w)) - 1) < 1e-9
        z = lda.transform(x)[:, 0]
        pooled_std = math.sqrt((z[:40].var() + z[40:].var()) / 2)
        assert abs(z[:40].mean() - z[40:].mean()) > 5 * pooled_std

    def test_out_dim_bound(self, rng):
        x, y = two_blobs(rng)
        with pytest.raises(DataError, match="out_dim"):
            fit_lda(x, y, out_dim=2)

    def test_duplication_invariance(self, rng):
        x = rng.normal(size=(30, 5))
        y = [f"c{i % 3}" for i in range(30)]
        a = fit_lda(x, y, out_dim=2)
        b = fit_lda(np.vstack([x, x]), y + y, out_dim=2)
        assert np.allclose(a.projection, b.projection, atol=1e-9)

    def test_relabeling_invariance(self, rng):
        x = rng.normal(size=(30, 5)) + np.repeat(rng.normal(size=(3, 5)) * 3, 10, axis=0)
        y = [f"c{i // 10}" for i in range(30)]
        relabel = {"c0": "z", "c1": "m", "c2": "a"}
        a = fit_lda(x, y, out_dim=2)
        b = fit_lda(x, [relabel[v] for v in y], out_dim=2)
        assert np.allclose(a.projection, b.projection, atol=1e-9)

    def test_sign_convention(self, rng):
        x = rng.normal(size=(30, 5))
        lda = fit_lda(x, [f"c{i % 4}" for i in range(30)], out_dim=3)
        for col in lda.projection.T:
            assert col[np.flatnonzero(np.abs(col) > 1e-12)[0]] > 0

    def test_singular_without_shrinkage(self, rng):
        x = np.hstack([rng.normal(size=(20, 2)), np.zeros((20, 1))])
        y = ["a"] * 10 + ["b"] * 10
        with pytest.raises(DataError, match="shrinkage"):
            fit_lda(x, y, out_dim=1, shrinkage=0.0)
        fit_lda(x, y, out_dim=1, shrinkage=0.1)

    def test_too_few_samples(self):
        with pytest.raises(DataError, match="samples"):
            fit_lda(np.eye(3), ["a", "b", "b"], out_dim=1)


class TestLogReg:
    def test_gradient_check(self, rng):
        for _ in range(20):
            n, k, c = rng.integers(3, 12), rng.integers(1, 6), rng.integers(2, 5)
            x = rng.normal(size=(n, k))
            y = rng.integers(0, c, size=n)
            w, b = rng.normal(size=(k, c)), rng.normal(size=c)
            l2 = float(rng.uniform(0, 0.5))
            _, gw, gb = logreg_loss_and_grad(w, b, x, y, l2)
            h = 1e-6
            num_w = np.zeros_like(w)
            for idx in np.ndindex(w.shape):
                wp, wm = w.copy(), w.copy()
                wp[idx] += h
                wm[idx] -= h
                num_w[idx] = (logreg_loss_and_grad(wp, b, x, y, l2)[0] - logreg_loss_and_grad(wm, b, x, y, l2)[0]) / (2 * h)
            num_b = np.zeros_like(b)
            for j in range(c):
                bp, bm = b.copy(), b.copy()
                bp[j] += h
                bm[j] -= h
                num_b[j] = (logreg_loss_and_grad(w, bp, x, y, l2)[0] - logreg_loss_and_grad(w, bm, x, y, l2)[0]) / (2 * h)
            analytic = np.concatenate([gw.ravel(), gb])
            numeric = np.concatenate([num_w.ravel(), num_b])
            assert np.linalg.norm(analytic - numeric) / max(np.linalg.norm(analytic), 1e-12) < 1e-5

    def test_separable(self, rng):
        x, y = two_blobs(rng)
        # the separating direction is the first axis by construction
        assert np.all((x[:, 0] > 0) == (np.array(y) == "a"))
        model = fit_logreg(x, y)
        pred = np.array(model.classes)[model.proba(x).argmax(axis=1)]
        assert list(pred) == y
        assert model.classes[int(np.argmax(model.proba(x[:40].mean(0))))] == "a"

    def test_zero_weights_uniform(self):
        m = LogRegModel(np.zeros((3, 4)), np.zeros(4), ("a", "b", "c", "d"))
        assert np.allclose(m.proba(np.array([1.0, -2.0, 5.0])), 0.25)

    def test_non_finite_features(self):
        with pytest.raises(DataError, match="non-finite"):
            fit_logreg(np.array([[0.0], [math.inf]]), ["a", "b"])

    def test_deterministic(self, rng):
        x, y = two_blobs(rng, n=10)
        a, b = fit_logreg(x, y), fit_logreg(x, y)
        assert np.array_equal(a.weights, b.weights)


class TestBackend:
    def test_pipeline(self, rng):
        centers = rng.normal(size=(4, 20)) * 3
        x = np.repeat(centers, 15, axis=0) + rng.normal(size=(60, 20))
        y = [f"l{i // 15}" for i in range(60)]
        model = fit_classifier(x, y, out_dim=3)
        dist = predict_proba(centers[2], model.lda, model.logreg)
        assert max(dist.probs, key=dist.probs.get) == "l2"
        assert math.fsum(dist.probs.values()) == pytest.approx(1.0, abs=1e-12)


class TestIO:
    def test_pooler_roundtrip(self, tmp_path):
        p = small(5)
        write_pooler(p, tmp_path / "p.txt")
        q = read_pooler(tmp_path / "p.txt")
        for name in ("layer_logits", "att_w1", "hid1_w", "cls_b", "temperatures"):
            assert np.array_equal(getattr(p, name), getattr(q, name))

    def test_classifier_roundtrip(self, rng, tmp_path):
        x = rng.normal(size=(30, 6))
        model = fit_classifier(x, [f"c{i % 3}" for i in range(30)], out_dim=2)
        write_classifier(model, tmp_path / "m.txt")
        back = read_classifier(tmp_path / "m.txt")
        assert np.array_equal(back.lda.projection, model.lda.projection)
        assert np.array_equal(back.logreg.weights, model.logreg.weights)
        assert back.lda.classes == model.lda.classes

    def test_activations_roundtrip(self, rng, tmp_path):
        layers = rng.normal(size=(3, 4, 5))
        write_encoder_activations(layers, tmp_path / "a.txt")
        assert np.array_equal(read_encoder_activations(tmp_path / "a.txt"), layers)

    def test_activations_bad_count(self, tmp_path):
        (tmp_path / "a.txt").write_text("ENCACT1 2 2 1\n1\n2\n3\n")
        with pytest.raises(DataError, match="T\\*L=4"):
            read_encoder_activations(tmp_path / "a.txt")

    def test_embeddings_roundtrip(self, rng, tmp_path):
        embs = [Embedding(rng.normal(size=512), f"u{i}") for i in range(3)]
        write_embeddings(embs, tmp_path / "e.tsv")
        back = read_embeddings(tmp_path / "e.tsv", dim=512)
        assert list(back) == ["u0", "u1", "u2"]
        assert np.array_equal(back["u1"].vector, embs[1].vector)
        with pytest.raises(DataError, match="dimension"):
            read_embeddings(tmp_path / "e.tsv", dim=100)
