import numpy as np
import pytest

from core.errors import ShapeMismatchError
from evaluation.metrics import (MapReport, average_precision, cross_modal_map, hamming, hamming_distances,
                                map_score, rank_gallery)


def random_codes(rng, n, q):
    return np.where(rng.random((n, q)) < 0.5, -1, 1)


def naive_map(query_codes, query_labels, gallery_codes, gallery_labels, k=None):
    """Independent AP@k: explicit loops, ranking by (distance, index)."""
    total = 0.0
    for qc, ql in zip(query_codes, query_labels):
        dists = [sum(1 for u, v in zip(qc, gc) if u != v) for gc in gallery_codes]
        order = sorted(range(len(gallery_codes)), key=lambda j: (dists[j], j))
        if k is not None:
            order = order[:k]
        hits, precisions = 0, []
        for r, j in enumerate(order, start=1):
            if gallery_labels[j] == ql:
                hits += 1
                precisions.append(hits / r)
        total += sum(precisions) / hits if hits else 0.0
    return total / len(query_codes)


# --- hamming ---

def test_hamming_identity_and_antipodes(rng):
    u = random_codes(rng, 1, 8)[0]
    assert hamming(u, u) == 0
    assert hamming(u, -u) == 8


def test_hamming_matches_loop(rng):
    u, v = random_codes(rng, 2, 16)
    assert hamming(u, v) == sum(1 for a, b in zip(u, v) if a != b)


def test_hamming_length_mismatch():
    with pytest.raises(ShapeMismatchError):
        hamming([1, -1], [1, -1, 1])


def test_hamming_distances_match_pairwise(rng):
    Q, G = random_codes(rng, 4, 12), random_codes(rng, 7, 12)
    d = hamming_distances(Q, G)
    for i in range(4):
        for j in range(7):
            assert d[i, j] == hamming(Q[i], G[j])


def test_rank_gallery_breaks_ties_by_index():
    np.testing.assert_array_equal(rank_gallery(np.array([2, 0, 2, 0, 1])), [1, 3, 4, 0, 2])


# --- average precision ---

def test_ap_perfect_ranking():
    assert average_precision([0, 1, 2], 5, np.array([5, 5, 5]), k=3) == 1.0


def test_ap_hand_computed():
    labels = np.array([1, 0, 1])
    assert average_precision([0, 1, 2], 1, labels, k=3) == pytest.approx((1 / 1 + 2 / 3) / 2)


def test_ap_zero_when_nothing_relevant_in_top_k():
    assert average_precision([0, 1, 2], 1, np.array([0, 0, 1]), k=2) == 0.0


# --- map_score ---

def test_map_single_class_identical_codes_is_one(rng):
    codes = random_codes(rng, 5, 8)
    assert map_score(codes, [0] * 5, codes, [0] * 5) == 1.0


def test_map_zero_for_adversarial_codes():
    q = 8
    query = np.ones((1, q), dtype=int)
    gallery = np.vstack([np.ones((3, q), dtype=int), -np.ones((2, q), dtype=int)])
    assert map_score(query, [1], gallery, [0, 0, 0, 1, 1], k=3) == 0.0


@pytest.mark.parametrize("seed", range(25))
def test_map_matches_naive_oracle(seed):
    rng = np.random.default_rng(seed)
    nq, ng, q = rng.integers(1, 7), rng.integers(1, 7), int(rng.integers(2, 6))
    Q, G = random_codes(rng, nq, q), random_codes(rng, ng, q)
    ql, gl = rng.integers(0, 3, nq), rng.integers(0, 3, ng)
    for k in (None, 1, 3):
        assert map_score(Q, ql, G, gl, k) == pytest.approx(naive_map(Q, ql, G, gl, k), rel=0, abs=1e-15)


def test_map_is_bounded(rng):
    for _ in range(10):
        Q, G = random_codes(rng, 8, 6), random_codes(rng, 12, 6)
        value = map_score(Q, rng.integers(0, 3, 8), G, rng.integers(0, 3, 12), k=5)
        assert 0.0 <= value <= 1.0


def test_map_gallery_permutation_invariance_without_ties():
    # query all +1; gallery rows at distances 0..5
    q = 5
    gallery = np.array([[1] * (q - d) + [-1] * d for d in range(q + 1)])
    labels = np.array([0, 1, 0, 0, 1, 1])
    query = np.ones((1, q), dtype=int)
    perm = np.random.default_rng(0).permutation(q + 1)
    assert map_score(query, [0], gallery, labels, k=4) == map_score(query, [0], gallery[perm], labels[perm], k=4)


@pytest.mark.parametrize("k", [5, None])
def test_adjacent_swap_toward_relevant_never_lowers_ap(rng, k):
    # a swap across the cutoff can pull a new relevant item into the top k and
    # grow R_k, so only swaps fully inside the top k are covered
    limit = 7 if k is None else k - 1
    for _ in range(50):
        labels = rng.integers(0, 2, 8)
        ranked = list(rng.permutation(8))
        for r in range(limit):
            if labels[ranked[r]] != 1 and labels[ranked[r + 1]] == 1:
                better = ranked.copy()
                better[r], better[r + 1] = better[r + 1], better[r]
                assert average_precision(better, 1, labels, k=k) >= average_precision(ranked, 1, labels, k=k)


def test_swap_across_cutoff_can_lower_ap():
    labels = np.array([1, 0, 0, 1])
    assert average_precision([0, 1, 2, 3], 1, labels, k=3) == 1.0
    # rank 4 moves into the top 3 and R_k grows from 1 to 2
    assert average_precision([0, 1, 3, 2], 1, labels, k=3) == pytest.approx((1 + 2 / 3) / 2)


def test_map_at_gallery_size_equals_map_at_all(rng):
    Q, G = random_codes(rng, 6, 8), random_codes(rng, 10, 8)
    ql, gl = rng.integers(0, 3, 6), rng.integers(0, 3, 10)
    assert map_score(Q, ql, G, gl, k=10) == map_score(Q, ql, G, gl)
    assert map_score(Q, ql, G, gl, k=50) == map_score(Q, ql, G, gl)


def test_exclude_self_drops_own_row():
    codes = np.array([[1, 1], [-1, -1], [1, -1]])
    labels = np.array([0, 1, 2])
    # every class has one row: only the query itself is relevant
    assert map_score(codes, labels, codes, labels, k=1) == 1.0
    assert map_score(codes, labels, codes, labels, k=1, exclude_self=True) == 0.0


def test_map_checks_shapes():
    with pytest.raises(ShapeMismatchError):
        map_score(np.ones((2, 4)), [0, 1], np.ones((3, 5)), [0, 1, 1])
    with pytest.raises(ShapeMismatchError):
        map_score(np.ones((2, 4)), [0, 1], np.ones((3, 4)), [0, 1])
    with pytest.raises(ValueError):
        map_score(np.ones((2, 4)), [0, 1], np.ones((3, 4)), [0, 1, 1], k=0)


def test_cross_modal_map_uses_opposite_gallery():
    x = np.array([[1, 1], [-1, -1]])
    y = np.array([[1, 1], [1, 1]])
    labels = np.array([0, 1])
    report = cross_modal_map(x, y, labels, x, y, labels, k=None)
    assert report.x_to_y == map_score(x, labels, y, labels)
    assert report.y_to_x == map_score(y, labels, x, labels)
    assert report.average == pytest.approx((report.x_to_y + report.y_to_x) / 2)


def test_map_report_average():
    assert MapReport(0.4, 0.6).average == pytest.approx(0.5)
