"""Similarity, kNN prediction, matrix factorization, and top-K ranking."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from noisegate.dataset import Scale
from noisegate.recsys import (
    KnnConfig,
    MfModel,
    SimilarityMatrix,
    knn_predict,
    load_model,
    mf_train,
    pearson_similarity,
    recommend_topk,
    save_model,
)

from .conftest import make_table


def _brute_pearson(a: dict[int, float], b: dict[int, float], cfg: KnnConfig) -> float:
    """Independent oracle: textbook Pearson times the significance weight."""
    common = sorted(set(a) & set(b))
    if len(common) < cfg.min_overlap:
        return 0.0
    xs = [a[i] for i in common]
    ys = [b[i] for i in common]
    mx = sum(xs) / len(xs)
    my = sum(ys) / len(ys)
    num = sum((x - mx) * (y - my) for x, y in zip(xs, ys))
    dx = sum((x - mx) ** 2 for x in xs) ** 0.5
    dy = sum((y - my) ** 2 for y in ys) ** 0.5
    if dx == 0 or dy == 0:
        return 0.0
    return (num / (dx * dy)) * min(len(common), cfg.significance_cap) / cfg.significance_cap


def test_pearson_identical_long_profiles_is_one():
    prof = {i: float(1 + (i % 9) * 0.5) for i in range(60)}
    cfg = KnnConfig(significance_cap=50)
    assert pearson_similarity(prof, dict(prof), cfg) == pytest.approx(1.0, abs=1e-9)


def test_pearson_overlap_below_min_is_zero():
    cfg = KnnConfig(min_overlap=2)
    assert pearson_similarity({1: 4.0}, {1: 2.0}, cfg) == 0.0


def test_pearson_reversed_triple_weighted():
    a = {1: 1.0, 2: 2.0, 3: 3.0}
    b = {1: 3.0, 2: 2.0, 3: 1.0}
    cfg = KnnConfig(significance_cap=50)
    assert pearson_similarity(a, b, cfg) == pytest.approx(-0.06, abs=1e-9)


def test_pearson_zero_variance_is_zero():
    a = {1: 3.0, 2: 3.0, 3: 3.0}
    b = {1: 1.0, 2: 2.0, 3: 5.0}
    assert pearson_similarity(a, b, KnnConfig()) == 0.0


@settings(max_examples=40, deadline=None)
@given(
    values=st.lists(
        st.tuples(st.floats(0.5, 5.0), st.floats(0.5, 5.0)), min_size=2, max_size=20
    ),
    cap=st.integers(1, 50),
)
def test_pearson_matches_brute_force_and_is_symmetric(values, cap):
    a = {i: round(v[0] * 2) / 2 for i, v in enumerate(values)}
    b = {i: round(v[1] * 2) / 2 for i, v in enumerate(values)}
    cfg = KnnConfig(min_overlap=2, significance_cap=cap)
    got = pearson_similarity(a, b, cfg)
    assert got == pytest.approx(_brute_pearson(a, b, cfg), abs=1e-9)
    assert got == pytest.approx(pearson_similarity(b, a, cfg), abs=1e-9)


def test_similarity_matrix_agrees_with_pairwise():
    rows = []
    rng = np.random.default_rng(7)
    for u in range(1, 7):
        for i in range(1, 15):
            if rng.random() < 0.7:
                rows.append((u, i, float(rng.integers(1, 11)) / 2, 0))
    t = make_table(rows)
    cfg = KnnConfig(min_overlap=2, significance_cap=50)
    sims = SimilarityMatrix(t, cfg)
    for u in t.user_ids():
        for v in t.user_ids():
            direct = pearson_similarity(t.user_profile(u), t.user_profile(v), cfg)
            assert sims.between(u, v) == pytest.approx(direct, abs=1e-9)


def _neighbor_fixture():
    # user 1: mean 3.0; neighbor 2 rates like user 1 on shared items and has
    # deviation +0.5 on the target item 99 (its own mean is 3.0 as well).
    rows = [
        (1, 1, 2.0, 0),
        (1, 2, 3.0, 0),
        (1, 3, 4.0, 0),
        (2, 1, 2.0, 0),
        (2, 2, 3.0, 0),
        (2, 3, 4.0, 0),
        (2, 4, 2.5, 0),
        (2, 99, 3.5, 0),
    ]
    return make_table(rows)


def test_knn_single_perfect_neighbor_deviation():
    t = _neighbor_fixture()
    cfg = KnnConfig(k=5, min_overlap=2, significance_cap=3)
    # neighbor similarity: identical over 3 co-rated items with variance -> 1.0
    assert pearson_similarity(t.user_profile(1), t.user_profile(2), cfg) == pytest.approx(1.0)
    # neighbor mean = (2+3+4+2.5+3.5)/5 = 3.0, deviation on item 99 = +0.5
    pred = knn_predict(t, 1, 99, cfg)
    assert pred == pytest.approx(3.5, abs=1e-9)


def test_knn_no_neighbor_rated_item_unpredictable():
    t = _neighbor_fixture()
    assert knn_predict(t, 1, 777, KnnConfig(min_overlap=2)) is None


def test_knn_all_similarities_zero_unpredictable():
    rows = [(1, 1, 3.0, 0), (1, 2, 3.0, 0), (2, 1, 1.0, 0), (2, 2, 5.0, 0), (2, 3, 4.0, 0)]
    t = make_table(rows)  # user 1 has zero variance -> similarity 0
    assert knn_predict(t, 1, 3, KnnConfig(min_overlap=2)) is None


def test_knn_unknown_user_raises():
    t = _neighbor_fixture()
    with pytest.raises(ValueError):
        knn_predict(t, 404, 1, KnnConfig())


def test_knn_prediction_clamped_to_scale():
    rows = [
        (1, 1, 5.0, 0), (1, 2, 4.5, 0), (1, 3, 5.0, 0),
        (2, 1, 5.0, 0), (2, 2, 4.5, 0), (2, 3, 5.0, 0), (2, 4, 5.0, 0),
    ]
    t = make_table(rows)
    pred = knn_predict(t, 1, 4, KnnConfig(min_overlap=2, significance_cap=3))
    assert pred is not None and 0.5 <= pred <= 5.0


def test_mf_constant_dataset_converges_to_mean():
    rows = [(u, i, 3.0, 0) for u in range(1, 6) for i in range(1, 9)]
    t = make_table(rows)
    model = mf_train(t, f=4, epochs=20, lr=0.01, reg=0.02, seed=0)
    assert model.global_mean == pytest.approx(3.0)
    preds = [model.predict(u, i) for u in range(1, 6) for i in range(1, 9)]
    rmse = float(np.sqrt(np.mean((np.array(preds) - 3.0) ** 2)))
    assert rmse < 1e-2


def test_mf_seed_determinism_bitwise():
    rows = [(u, i, float((u * i) % 9) / 2 + 0.5, 0) for u in range(1, 7) for i in range(1, 12)]
    t = make_table(rows)
    a = mf_train(t, f=5, epochs=10, seed=13)
    b = mf_train(t, f=5, epochs=10, seed=13)
    for u in t.user_ids():
        assert np.array_equal(a.user_vector(u), b.user_vector(u))


def test_mf_rank_one_pattern_fits():
    # 2x2 rank-1 pattern: r_ui = a_u * b_i scaled into the rating range
    rows = [(1, 1, 1.0, 0), (1, 2, 2.0, 0), (2, 1, 2.0, 0), (2, 2, 4.0, 0)]
    t = make_table(rows)
    model = mf_train(t, f=2, epochs=200, lr=0.05, reg=0.0, seed=3)
    preds = np.array([model.predict(r.user_id, r.item_id) for r in t])
    rmse = float(np.sqrt(np.mean((preds - t.values) ** 2)))
    assert rmse < 0.1


def _fixed_score_model(item_scores: dict[int, float], mu: float = 3.0) -> MfModel:
    """Model whose prediction for user 1 on item i is exactly item_scores[i]."""
    items = sorted(item_scores)
    bi = np.array([item_scores[i] - mu for i in items])
    return MfModel(
        users=[1],
        items=items,
        P=np.zeros((1, 1)),
        Q=np.zeros((len(items), 1)),
        bu=np.zeros(1),
        bi=bi,
        global_mean=mu,
        scale=Scale(),
    )


def test_topk_zero_is_empty():
    t = make_table([(1, 1, 3.0, 0)])
    model = _fixed_score_model({2: 4.0, 3: 3.0})
    assert recommend_topk(model, t, 1, 0).items == []


def test_topk_orders_by_score_then_item_id():
    t = make_table([(1, 1, 3.0, 0)])
    scores = {2: 4.1, 3: 3.9, 4: 2.0}
    model = _fixed_score_model(scores)
    # brute-force oracle: sort candidates by (-score, item)
    oracle = sorted(scores, key=lambda i: (-scores[i], i))[:2]
    got = recommend_topk(model, t, 1, 2)
    assert [i for i, _ in got.items] == oracle == [2, 3]
    assert got.items[0][1] == pytest.approx(4.1)


def test_topk_equal_scores_tie_break_by_item_id():
    t = make_table([(1, 1, 3.0, 0)])
    model = _fixed_score_model({5: 3.3, 4: 3.3, 6: 3.3})
    got = recommend_topk(model, t, 1, 2)
    assert [i for i, _ in got.items] == [4, 5]


def test_topk_excludes_already_rated():
    rows = [(1, 1, 3.0, 0), (1, 2, 4.0, 0), (2, 3, 2.0, 0)]
    t = make_table(rows)
    model = mf_train(t, f=2, epochs=5, seed=0)
    got = recommend_topk(model, t, 1, 10)
    assert [i for i, _ in got.items] == [3]


def test_model_save_load_roundtrip(tmp_path):
    rows = [(u, i, float((u + i) % 9) / 2 + 0.5, 0) for u in range(1, 5) for i in range(1, 9)]
    t = make_table(rows)
    model = mf_train(t, f=3, epochs=8, seed=5)
    p = tmp_path / "model.json"
    save_model(model, p)
    back = load_model(p)
    for u in t.user_ids():
        for i in t.item_ids():
            assert back.predict(u, i) == pytest.approx(model.predict(u, i), abs=1e-12)
