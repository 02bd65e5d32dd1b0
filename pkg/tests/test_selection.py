import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lpspu.datasets import gen_blobs, label_positives
from lpspu.embedding import BasisSpec, PreprocessSpec
from lpspu.model import PulModel, predict_features
from lpspu.network import init_network
from lpspu.selection import (AgreementMatrix, accuracy, agreement_fraction, f1, pu_strata, select_from_predictions,
                             select_models, spearman, stratified_folds, tune)
from lpspu.training import TrainConfig

from oracles import best_pair_brute, spearman_rank_formula


def rand_model(seed, n=3, d=3):
    return PulModel(init_network(n, d, 2, 1, seed), init_network(n, d, 2, 1, seed + 1000),
                    BasisSpec.uniform(n, d), PreprocessSpec.identity(["a", "b", "c"][:n]))


def test_agreement_self_and_complement(rng):
    a = rand_model(0)
    x = rng.random((200, 3))
    assert agreement_fraction(a, a, x) == 1.0
    swapped = PulModel(a.negative, a.positive, a.basis, a.preprocessing)
    # a zero margin would agree (both negative); random inputs avoid exact ties
    assert agreement_fraction(a, swapped, x) == 0.0


def test_agreement_matches_direct_enumeration(rng):
    a, b = rand_model(1), rand_model(2)
    x = rng.random((300, 3))
    la = predict_features(a, x)[0]
    lb = predict_features(b, x)[0]
    expected = sum(int(p == q) for p, q in zip(la, lb)) / 300
    assert agreement_fraction(a, b, x) == expected
    with pytest.raises(ValueError):
        agreement_fraction(a, b, np.zeros((0, 3)))


HAND_TABLE = np.array([
    [1, 1, 0, 0, 1, 0, 1, 1],
    [1, 0, 0, 0, 1, 0, 1, 0],
    [0, 1, 1, 0, 1, 1, 1, 1],
    [1, 1, 0, 1, 1, 0, 1, 1],
], bool)


def test_hand_table_pair():
    sel = select_from_predictions(HAND_TABLE)
    assert (sel.members, sel.estimate) == best_pair_brute(HAND_TABLE)
    assert sel.members == (0, 3) and sel.estimate == pytest.approx(7 / 8)


def test_tie_goes_to_lowest_indices():
    preds = np.array([[1, 0], [1, 0], [0, 1], [0, 1]], bool)
    assert select_from_predictions(preds).members == (0, 1)


def test_identical_pair_and_two_members(rng):
    models = [rand_model(3), rand_model(4), rand_model(3)]
    x = rng.random((100, 3))
    sel = select_models(models, x)
    assert sel.members == (0, 2) and sel.estimate == 1.0
    assert select_models(models[:2], x).members == (0, 1)
    with pytest.raises(ValueError):
        select_models(models[:1], x)


def test_k_group():
    sel = select_from_predictions(HAND_TABLE, k=3)
    assert len(sel.members) == 3
    with pytest.raises(ValueError):
        select_from_predictions(HAND_TABLE, k=5)


@given(st.lists(st.lists(st.booleans(), min_size=6, max_size=6), min_size=2, max_size=6))
def test_matrix_and_selection_properties(rows):
    preds = np.array(rows, bool)
    mat = AgreementMatrix.from_predictions(preds).values
    assert np.array_equal(mat, mat.T) and np.all(np.diag(mat) == 1.0)
    assert mat.min() >= 0 and mat.max() <= 1
    sel = select_from_predictions(preds)
    assert sel.estimate == best_pair_brute(preds)[1]
    perm = np.random.default_rng(len(rows)).permutation(len(rows))
    assert select_from_predictions(preds[perm]).estimate == sel.estimate


def test_metrics():
    t = np.array([1, 1, 1, 0, 0], bool)
    assert accuracy(t, t) == 1.0 and f1(t, t) == 1.0
    assert f1(np.zeros(5, bool), t) == 0.0
    assert f1(np.zeros(5, bool), np.zeros(5, bool)) == 0.0
    p = np.array([1, 1, 0, 1, 0], bool)  # TP=2 FP=1 FN=1
    assert f1(p, t) == pytest.approx(2 / 3)
    assert accuracy(p, t) == pytest.approx(3 / 5)
    with pytest.raises(ValueError):
        f1(p[:3], t)
    with pytest.raises(ValueError):
        accuracy([], [])


def test_spearman_examples():
    rho, p = spearman([1, 2, 3, 4], [10, 20, 30, 40])
    assert rho == 1.0 and p < 1e-6
    rho, p = spearman([1, 2, 3, 4], [4, 3, 2, 1])
    assert rho == -1.0
    xs, ys = [0.7, 0.2, 0.9, 0.4, 0.5], [3.0, 1.0, 2.0, 5.0, 4.0]
    assert spearman(xs, ys)[0] == pytest.approx(spearman_rank_formula(xs, ys))
    # rank differences (1, 0, 3, -3, -1): 1 - 6 * 20 / 120
    assert spearman_rank_formula(xs, ys) == 0.0
    assert np.isnan(spearman([1, 1, 1], [1, 2, 3])[0])
    with pytest.raises(ValueError):
        spearman([1, 2], [1, 2])


def test_spearman_p_value_t_approximation():
    xs = np.arange(12.0)
    ys = np.array([1, 3, 2, 5, 4, 7, 6, 9, 8, 12, 10, 11], float)
    rho, p = spearman(xs, ys)
    from scipy import stats

    ref = stats.spearmanr(xs, ys)
    assert rho == pytest.approx(ref.statistic, rel=1e-12)
    assert p == pytest.approx(ref.pvalue, rel=1e-9)


def test_stratified_folds_cover_and_balance():
    strata = np.r_[np.zeros(15), np.ones(35), np.full(50, 2)].astype(int)
    folds = stratified_folds(strata, 10, 0)
    assert sorted(np.concatenate(folds)) == list(range(100))
    for f in folds:
        assert abs(np.sum(strata[f] == 2) - 5) <= 1
    again = stratified_folds(strata, 10, 0)
    assert all(np.array_equal(a, b) for a, b in zip(folds, again))


def small_task():
    return label_positives(gen_blobs(80, std=0.4, seed=1), 12, 2)


def test_tune_one_tuple_and_resume(tmp_path):
    ds = small_task()
    base = TrainConfig(lr=0.1, epochs=3, d=2, bond=2, skip=2, ensemble_size=2)
    store = tmp_path / "cells.jsonl"
    res = tune(ds, [{"bond": 2}], base, folds=3, models_per_cell=2, store=str(store))
    assert res.chosen == 0 and len(res.cells) == 3
    assert 0 <= res.estimates[0] <= 1
    lines = store.read_text().splitlines()
    assert len(lines) == 3 and json.loads(lines[0])["tuple_id"] == 0
    # a rerun reads every cell back instead of training
    import lpspu.selection as sel_mod

    orig = sel_mod.run_fold
    sel_mod.run_fold = lambda *a, **k: pytest.fail("cell retrained")
    try:
        again = tune(ds, [{"bond": 2}], base, folds=3, models_per_cell=2, store=str(store))
    finally:
        sel_mod.run_fold = orig
    assert again.estimates == res.estimates
    csv_text = res.to_csv()
    assert csv_text.splitlines()[0] == "tuple_id,bond,fold,estimated_accuracy,test_f1"
    assert csv_text.splitlines()[-1].startswith("chosen,2,mean,")


def test_tune_tie_prefers_smaller_bond(monkeypatch):
    import lpspu.selection as sel_mod
    from lpspu.selection import Selection

    def fake(ds, tr, te, cfg, *a, **k):
        mat = AgreementMatrix(np.eye(2))
        return None, Selection((0, 1), 0.9, mat), 0.5

    monkeypatch.setattr(sel_mod, "run_fold", fake)
    grid = [{"bond": 6, "d": 4}, {"bond": 2, "d": 8}, {"bond": 2, "d": 4}]
    res = tune(small_task(), grid, TrainConfig(), folds=2, models_per_cell=2)
    assert res.chosen == 2


def test_tune_empty_grid():
    with pytest.raises(ValueError):
        tune(small_task(), [], TrainConfig())


def test_pu_strata():
    ds = small_task()
    s = pu_strata(ds)
    assert np.all((s == 0) == ds.labeled)
    assert np.all((s == 2) == ~ds.truth)
