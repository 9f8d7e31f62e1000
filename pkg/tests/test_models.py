import json

import numpy as np
import pandas as pd
import pytest

from amltriage.frame import FeatureFrame
from amltriage.metrics import recall_at_fpr
from amltriage.models import (
    GbdtParams,
    GlmParams,
    ModelArtifact,
    RfParams,
    hyperparameter_search,
    permutation_importance,
    predict,
    sample_params,
    train,
)
from amltriage.models.search import FAMILIES
from amltriage.rng import generator


def toy(n=1500, seed=0, k=5):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, k))
    y = (X[:, 0] + 0.7 * X[:, 1] * X[:, 2] + 0.5 * rng.normal(size=n) > 0.3).astype(int)
    return pd.DataFrame(X, columns=[f"raw_x{i}" for i in range(k)]), y


FAST = {
    "gbdt": GbdtParams(num_leaves=200, min_data_in_leaf=100, learning_rate=0.09, n_rounds=30),
    "rf": RfParams(max_depth=10, n_trees=100, min_instances_split=10),
    "glm": GlmParams(alpha=0.05),
}


def test_param_ranges():
    with pytest.raises(ValueError):
        GlmParams(alpha=0.5)
    with pytest.raises(ValueError):
        RfParams(max_depth=5)
    with pytest.raises(ValueError):
        GbdtParams(num_leaves=100)
    assert GbdtParams().effective_leaves(1000) == 10
    assert GbdtParams().effective_leaves(10**6) == 200


def test_gbdt_loss_strictly_decreases():
    X, y = toy()
    m = train(X, y, GbdtParams(num_leaves=200, min_data_in_leaf=100, learning_rate=0.09, n_rounds=50))
    trace = m.metadata["loss_trace"]
    assert len(trace) == 51
    assert all(b < a for a, b in zip(trace, trace[1:]))


def test_glm_separable_accuracy():
    rng = np.random.default_rng(1)
    x = rng.normal(size=400)
    X = pd.DataFrame({"raw_a": x, "raw_noise": rng.normal(size=400)})
    y = (x > 0).astype(int)
    m = train(X, y, GlmParams(alpha=0.05, l2_strength=1e-6))
    assert ((predict(m, X) > 0.5) == y).mean() == 1.0


def test_glm_scale_invariance():
    X, y = toy(seed=2)
    Z = X.copy()
    Z["raw_x0"] = Z["raw_x0"] * 1000 + 17
    Z["raw_x3"] = Z["raw_x3"] * 0.001 - 4
    a = predict(train(X, y, GlmParams(standardize_numericals=True)), X)
    b = predict(train(Z, y, GlmParams(standardize_numericals=True)), Z)
    assert np.max(np.abs(a - b)) < 1e-6


def test_zero_coefficient_glm_scores_half():
    X, _ = toy(n=10)
    art = ModelArtifact("glm", {}, list(X.columns), {"coef": [0.0] * 5, "intercept": 0.0, "mean": [0.0] * 5, "scale": [1.0] * 5})
    assert (predict(art, X) == 0.5).all()


@pytest.mark.parametrize("family", FAMILIES)
def test_determinism_and_threads(family):
    X, y = toy(seed=3)
    a = train(X, y, FAST[family], seed=5, n_jobs=1)
    b = train(X, y, FAST[family], seed=5, n_jobs=1)
    c = train(X, y, FAST[family], seed=5, n_jobs=4)
    assert a.to_json() == b.to_json() == c.to_json()


@pytest.mark.parametrize("family", FAMILIES)
def test_heldout_ordering(family):
    X, y = toy(n=2000, seed=4)
    m = train(X.iloc[:1500], y[:1500], FAST[family])
    s = predict(m, X.iloc[1500:])
    assert s[y[1500:] == 1].mean() > s[y[1500:] == 0].mean()
    assert ((s >= 0) & (s <= 1)).all()


@pytest.mark.parametrize("family", FAMILIES)
def test_row_independence(family, tmp_path):
    X, y = toy(seed=6)
    m = train(X, y, FAST[family])
    perm = np.random.default_rng(0).permutation(len(X))
    assert np.array_equal(predict(m, X)[perm], predict(m, X.iloc[perm]))
    p = tmp_path / "m.json"
    m.save(p)
    assert np.array_equal(predict(ModelArtifact.load(p), X), predict(m, X))


def test_column_mismatch_named():
    X, y = toy()
    m = train(X, y, FAST["glm"])
    with pytest.raises(ValueError, match=r"missing \['raw_x4'\].*extra \['raw_new'\]"):
        predict(m, X.drop(columns="raw_x4").assign(raw_new=1.0))


def test_training_errors():
    X, y = toy(n=50)
    with pytest.raises(ValueError, match="positive"):
        train(X, np.zeros(50, dtype=int), FAST["glm"])
    X.iloc[3, 1] = np.nan
    with pytest.raises(ValueError, match="non-finite"):
        train(X, y, FAST["glm"])


def test_load_rejects_foreign_file(tmp_path):
    p = tmp_path / "x.json"
    p.write_text(json.dumps({"format": "other"}))
    with pytest.raises(ValueError):
        ModelArtifact.load(p)


def frames(n=1200, seed=0):
    X, y = toy(n=n, seed=seed)
    keys = pd.DataFrame({"account_id": [f"a{i}" for i in range(n)], "day": np.arange(n)})
    f = FeatureFrame(keys, X, y)
    cut = int(0.7 * n)
    return f.rows(np.arange(cut)), y[:cut], f.rows(np.arange(cut, n)), y[cut:]


def test_search_single_trial():
    res = hyperparameter_search(*frames(), n_trials=1, gbdt_rounds=20)
    assert len(res.leaderboard) == 1 and res.best_trial == 0
    assert list(res.leaderboard.columns) == ["trial", "algorithm", "params", "val_recall_at_20fpr"]


def test_search_family_allocation_and_ties():
    res = hyperparameter_search(*frames(), n_trials=6, families=("glm", "glm"), gbdt_rounds=20)
    assert (res.leaderboard["algorithm"] == "glm").all()
    board = res.leaderboard
    best = board["val_recall_at_20fpr"].max()
    assert res.best_trial == int(board.loc[board["val_recall_at_20fpr"] == best, "trial"].min())
    counts = [sum(1 for t in range(50) if FAMILIES[t % 3] == f) for f in FAMILIES]
    assert counts == [17, 17, 16]


def test_sampling_inside_ranges():
    for t in range(60):
        for fam in FAMILIES:
            sample_params(fam, generator(0, t))  # validation in the params types raises if outside


def test_permutation_importance_properties():
    tr, ytr, va, yva = frames(n=3000, seed=7)
    noise = np.zeros(len(tr))
    m = train(tr.with_columns(pd.DataFrame({"raw_const": noise})), ytr, FAST["gbdt"])
    va2 = va.with_columns(pd.DataFrame({"raw_const": np.zeros(len(va))}))
    imp5 = permutation_importance(m, va2, yva, k=5, seed=1)
    imp1 = permutation_importance(m, va2, yva, k=1, seed=1)
    assert imp5["raw_const"] == 0.0
    assert imp5["raw_x0"] > 0 and imp1["raw_x0"] > 0
    assert imp5 == permutation_importance(m, va2, yva, k=5, seed=1)


def test_sole_predictive_column_importance():
    rng = np.random.default_rng(0)
    n = 4000
    x = rng.normal(size=n)
    X = pd.DataFrame({"raw_sig": x, "raw_noise": rng.normal(size=n)})
    y = (x + 0.3 * rng.normal(size=n) > 1).astype(int)
    m = train(X.iloc[:3000], y[:3000], FAST["glm"])
    imp = permutation_importance(m, X.iloc[3000:], y[3000:], k=5, seed=0)
    base = recall_at_fpr(predict(m, X.iloc[3000:]), y[3000:])
    # shuffling the signal leaves a random scorer, whose recall at 20% FPR is about 0.2
    assert imp["raw_sig"] == pytest.approx(base - 0.2, abs=0.08)
    assert abs(imp["raw_noise"]) < 0.02
