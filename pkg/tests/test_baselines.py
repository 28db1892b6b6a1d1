import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from localprop.baselines import (
    ClassBank,
    gap_vector,
    cosine_classify,
    gap_proto_predict,
    local_match_predict,
    matching_predict,
    nbnn_predict,
    nbnn_score,
    prototypes,
)
from localprop.core import Episode, FeatureTensor, MethodConfig

from conftest import episode_from_vectors, random_episode, tensor_from_rows

RAW = MethodConfig(use_attention=False, use_pooling=False)


def make_episode(supports, labels, queries, ways, shots):
    """Episode from lists of (positions, d) arrays, one per image."""
    return Episode(ways, shots, [tensor_from_rows(s) for s in supports], labels,
                   [tensor_from_rows(q) for q in queries])


def cos(a, b):
    return float(np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b)))


class TestCosineClassify:
    def test_two_classes(self):
        out = cosine_classify([1.0, 0.0], [[1.0, 0.0], [0.0, 1.0]], 1.0)
        e = np.e
        np.testing.assert_allclose(out, [e / (e + 1), 1 / (e + 1)])

    def test_exact_match_wins(self):
        out = cosine_classify([0.0, 0.0, 2.0], np.eye(3), 10.0)
        assert np.argmax(out) == 2

    def test_identical_weights_uniform(self):
        np.testing.assert_allclose(cosine_classify([0.3, -1.0], [[1.0, 1.0]] * 4, 10.0), 0.25)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            cosine_classify([1.0, 0.0, 0.0], [[1.0, 0.0]], 1.0)

    def test_batch(self):
        out = cosine_classify(np.eye(2), np.eye(2), 1.0)
        assert out.shape == (2, 2)


class TestPrototypes:
    def test_single_shot_is_support(self):
        ep = episode_from_vectors([[1.0, 2.0], [3.0, -1.0]], [0, 1], [[1.0, 1.0]], 2, 1)
        np.testing.assert_allclose(prototypes(ep, config=RAW), [[1.0, 2.0], [3.0, -1.0]])

    def test_opposite_supports_cancel(self):
        ep = episode_from_vectors([[1.0, 2.0], [-1.0, -2.0], [0.0, 1.0], [0.0, 1.0]], [0, 0, 1, 1], [[1.0, 1.0]], 2, 2)
        np.testing.assert_allclose(prototypes(ep, config=RAW)[0], 0.0)

    def test_mean(self):
        ep = episode_from_vectors([[1.0, 0.0], [0.0, 1.0]], [0, 0], [[1.0, 1.0]], 1, 2)
        np.testing.assert_allclose(prototypes(ep, config=RAW), [[0.5, 0.5]])

    def test_flatten(self):
        ep = make_episode([[[1.0, 0.0], [0.0, 2.0]]], [0], [[[1.0, 0.0], [1.0, 0.0]]], 1, 1)
        np.testing.assert_allclose(prototypes(ep, "flatten"), [[1.0, 0.0, 0.0, 2.0]])

    def test_unknown_mode(self):
        ep = episode_from_vectors([[1.0, 0.0]], [0], [[1.0, 0.0]], 1, 1)
        with pytest.raises(ValueError):
            prototypes(ep, "median")


class TestGapProto:
    def test_nearest_prototype(self):
        ep = episode_from_vectors(np.eye(3), [0, 1, 2], [[0.0, 0.0, 1.0]], 3, 1)
        assert gap_proto_predict(ep, RAW).labels.tolist() == [2]

    def test_tie_breaks_low(self):
        ep = episode_from_vectors([[1.0, 0.0], [0.0, 1.0]], [0, 1], [[1.0, 1.0]], 2, 1)
        p = gap_proto_predict(ep, RAW)
        np.testing.assert_allclose(p.scores, [[0.5, 0.5]])
        assert p.labels.tolist() == [0]

    def test_tau_zero_equals_no_attention(self, small_store):
        for seed in range(5):
            ep = random_episode(small_store, seed)
            a = gap_proto_predict(ep, MethodConfig(tau=0.0))
            b = gap_proto_predict(ep, MethodConfig(use_attention=False))
            np.testing.assert_array_equal(a.labels, b.labels)
            np.testing.assert_allclose(a.scores, b.scores, atol=1e-12)

    def test_one_shot_is_cosine_nearest_neighbor(self, small_store):
        for seed in range(10):
            ep = random_episode(small_store, seed, shots=1)
            config = MethodConfig()
            sup = np.array([gap_vector(t, config) for t in ep.support])
            expected = []
            for t in ep.query:
                q = gap_vector(t, config)
                sims = [cos(q, s) for s in sup]
                expected.append(ep.support_labels[int(np.argmax(sims))])
            assert gap_proto_predict(ep, config).labels.tolist() == expected


class TestMatching:
    def test_single_support(self):
        ep = episode_from_vectors([[1.0, 0.0]], [0], [[-1.0, 0.3]], 1, 1)
        np.testing.assert_allclose(matching_predict(ep, RAW).scores, [[1.0]])

    def test_orthogonal_query_ties(self):
        ep = episode_from_vectors([[1.0, 0, 0], [0, 1.0, 0]], [0, 1], [[0, 0, 1.0]], 2, 1)
        p = matching_predict(ep, RAW)
        np.testing.assert_allclose(p.scores, [[0.5, 0.5]])
        assert p.labels.tolist() == [0]

    def test_rho_sweep_keeps_argmax(self):
        sup = [[1.0, 0.0], [0.0, 1.0], [0.6, 0.8]]
        ep = episode_from_vectors(sup, [0, 1, 2], [[0.9, 0.1]], 3, 1)
        labels = {matching_predict(ep, MethodConfig(rho=r, use_attention=False, use_pooling=False)).labels[0]
                  for r in (1.0, 10.0, 100.0)}
        assert labels == {0}

    def test_formula(self):
        sup = np.array([[1.0, 0.0], [0.5, 0.5], [0.0, 1.0], [-1.0, 1.0]])
        labels = [0, 0, 1, 1]
        q = np.array([0.3, 0.7])
        ep = episode_from_vectors(sup, labels, [q], 2, 2)
        w = np.exp(10 * np.array([cos(q, s) for s in sup]))
        w /= w.sum()
        expected = [w[0] + w[1], w[2] + w[3]]
        np.testing.assert_allclose(matching_predict(ep, RAW).scores[0], expected)


def _local_oracle(support_rows, support_labels, query_rows, ways, rho):
    pairs = [(v, l) for rows, l in zip(support_rows, support_labels) for v in rows]
    total = np.zeros(ways)
    for q in query_rows:
        w = np.array([np.exp(rho * cos(q, v)) for v, _ in pairs])
        w /= w.sum()
        for wi, (_, l) in zip(w, pairs):
            total[l] += wi / len(query_rows)
    return total


class TestLocalMatch:
    def test_brute_force_toy(self):
        sup = [np.array([[1.0, 0.2], [0.8, 0.5]]), np.array([[0.1, 1.0], [-0.3, 0.9]])]
        query = np.array([[0.7, 0.6], [0.2, 0.9]])
        ep = make_episode(sup, [0, 1], [query], 2, 1)
        expected = _local_oracle(sup, [0, 1], query, 2, 10.0)
        np.testing.assert_allclose(local_match_predict(ep, RAW).scores[0], expected, atol=1e-12)

    def test_perfect_match(self):
        v = np.array([0.2, 0.9, 0.1])
        ep = make_episode([[[1.0, 0, 0]] * 2, [v, v], [[0, 0, 1.0]] * 2], [0, 1, 2], [[v, v]], 3, 1)
        assert local_match_predict(ep, RAW).labels.tolist() == [1]

    def test_single_position_is_matching(self):
        ep = episode_from_vectors([[1.0, 0.1], [0.9, -0.2], [0.2, 1.0], [0.5, 0.5]], [0, 0, 1, 1], [[0.4, 0.6]], 2, 2)
        np.testing.assert_allclose(local_match_predict(ep, RAW).scores, matching_predict(ep, RAW).scores)


def _nbnn_oracle(query_rows, bank_rows, knn):
    scores = []
    for vectors in bank_rows:
        s = 0.0
        for q in query_rows:
            sims = sorted((cos(q, v) for v in vectors), reverse=True)
            s += sum(sims[:knn])
        scores.append(s)
    return np.array(scores)


class TestNBNN:
    def test_single_vector_per_class(self):
        q = np.array([[1.0, 0.5], [0.2, 1.0], [-1.0, 0.3]])
        v = np.array([[1.0, 0.0], [0.0, 1.0]])
        expected = [sum(cos(r, v[j]) for r in q) for j in range(2)]
        np.testing.assert_allclose(nbnn_score(q, ClassBank([v[:1], v[1:]]), 1), expected)

    def test_large_knn_is_full_double_sum(self):
        rng = np.random.default_rng(0)
        q = rng.standard_normal((4, 5))
        bank = [rng.standard_normal((3, 5)), rng.standard_normal((6, 5))]
        expected = [sum(cos(a, b) for a in q for b in vecs) for vecs in bank]
        np.testing.assert_allclose(nbnn_score(q, ClassBank(bank), 100), expected, atol=1e-9)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000), st.integers(1, 5))
    def test_matches_brute_force(self, seed, knn):
        rng = np.random.default_rng(seed)
        q = rng.standard_normal((int(rng.integers(1, 6)), 4))
        bank = [rng.standard_normal((int(rng.integers(1, 6)), 4)) for _ in range(3)]
        np.testing.assert_allclose(nbnn_score(q, ClassBank(bank), knn), _nbnn_oracle(q, bank, knn), atol=1e-9)

    def test_identical_bank_dominates(self):
        v = np.array([0.3, 0.4, 0.5])
        ep = make_episode([[[1.0, 0, 0]] * 2, [[0, 1.0, 0]] * 2, [v, v]], [0, 1, 2], [[v, v]], 3, 1)
        assert nbnn_predict(ep, RAW).labels.tolist() == [2]

    def test_empty_bank(self):
        with pytest.raises(ValueError):
            ClassBank([])
        with pytest.raises(ValueError):
            ClassBank([np.zeros((0, 3))])

    def test_bad_knn(self):
        with pytest.raises(ValueError):
            nbnn_score(np.ones((1, 2)), ClassBank([np.ones((1, 2))]), 0)


@pytest.mark.parametrize("predict", [gap_proto_predict, matching_predict, local_match_predict, nbnn_predict])
def test_rescaling_invariance(predict, small_store):
    config = MethodConfig(clusters=3)
    for seed in range(3):
        ep = random_episode(small_store, seed)
        scaled = Episode(ep.ways, ep.shots,
                         [FeatureTensor(3.5 * t.data) for t in ep.support], ep.support_labels,
                         [FeatureTensor(3.5 * t.data) for t in ep.query], ep.query_labels)
        a, b = predict(ep, config), predict(scaled, config)
        np.testing.assert_array_equal(a.labels, b.labels)
        np.testing.assert_allclose(a.scores, b.scores, rtol=1e-6, atol=1e-9)
