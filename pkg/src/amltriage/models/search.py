"""Random hyperparameter search over the three model families and permutation importance."""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass

import numpy as np
import pandas as pd

from ..frame import FeatureFrame
from ..metrics import recall_at_fpr
from ..rng import generator
from ._tree import tree_values
from .core import GbdtParams, GlmParams, ModelArtifact, RfParams, _forest_arrays, link, margin_matrix, predict, train

log = logging.getLogger(__name__)

FAMILIES = ("gbdt", "rf", "glm")
LEADERBOARD_COLUMNS = ["trial", "algorithm", "params", "val_recall_at_20fpr"]


def sample_params(family: str, rng: np.random.Generator, gbdt_rounds: int = 200):
    """Uniform draw from the documented search ranges (integers inclusive)."""
    if family == "glm":
        return GlmParams(alpha=float(rng.uniform(0.01, 0.09)), standardize_numericals=bool(rng.integers(0, 2)))
    if family == "rf":
        return RfParams(
            max_depth=int(rng.integers(10, 41)),
            n_trees=int(rng.integers(100, 201)),
            min_instances_split=int(rng.integers(10, 51)),
        )
    if family == "gbdt":
        return GbdtParams(
            num_leaves=int(rng.integers(200, 501)),
            min_data_in_leaf=int(rng.integers(100, 201)),
            learning_rate=float(rng.uniform(0.01, 0.09)),
            n_rounds=gbdt_rounds,
        )
    raise ValueError(f"unknown family {family!r}")


@dataclass
class SearchResult:
    best: ModelArtifact | None
    leaderboard: pd.DataFrame

    @property
    def best_trial(self) -> int:
        ok = self.leaderboard.dropna(subset=["val_recall_at_20fpr"])
        return int(ok.iloc[ok["val_recall_at_20fpr"].to_numpy().argmax()]["trial"])


def hyperparameter_search(
    train_frame: FeatureFrame,
    train_labels,
    val_frame: FeatureFrame,
    val_labels,
    n_trials: int = 50,
    seed: int = 0,
    target_fpr: float = 0.2,
    families=FAMILIES,
    gbdt_rounds: int = 200,
    n_jobs: int = 1,
) -> SearchResult:
    """Trial ``t`` uses family ``families[t % len(families)]``; the best validation recall wins.

    A trial that raises is kept in the leaderboard with an empty metric.
    Equal metrics go to the earlier trial.
    """
    rows = []
    best, best_score = None, -np.inf
    for t in range(n_trials):
        family = families[t % len(families)]
        params = sample_params(family, generator(seed, 23, t), gbdt_rounds)
        try:
            model = train(train_frame, train_labels, params, seed=seed + t, n_jobs=n_jobs)
            score = recall_at_fpr(predict(model, val_frame), val_labels, target_fpr)
        except Exception as exc:  # failed trials are recorded, not fatal
            log.warning("trial %d (%s) failed: %s", t, family, exc)
            rows.append((t, family, json.dumps(asdict(params), sort_keys=True), np.nan))
            continue
        log.info("trial %d %s recall=%.4f", t, family, score)
        rows.append((t, family, json.dumps(asdict(params), sort_keys=True), score))
        if score > best_score:
            best, best_score = model, score
    board = pd.DataFrame(rows, columns=LEADERBOARD_COLUMNS)
    if best is not None:
        best.metadata["search_trial"] = int(board.loc[board["val_recall_at_20fpr"] == best_score, "trial"].iloc[0])
        best.metadata["val_recall_at_fpr"] = float(best_score)
    return SearchResult(best, board)


def permutation_importance(
    artifact: ModelArtifact, frame: FeatureFrame, labels, k: int = 5, seed: int = 0, target_fpr: float = 0.2
) -> dict[str, float]:
    """Baseline recall@FPR minus the mean over ``k`` seeded shuffles of each column.

    Columns the model cannot use (no split, zero coefficient) get exactly 0.
    """
    labels = np.asarray(labels)
    X = frame.matrix(artifact.features) if isinstance(frame, FeatureFrame) else frame[artifact.features].to_numpy(float)
    X = np.array(X, dtype=float, copy=True)
    cols = artifact.features

    if artifact.algorithm == "glm":
        def margins(M, j):
            return margin_matrix(artifact, M)
    else:
        # tree models: cache per-tree leaf values and only redo trees that split on column j
        arrays = _forest_arrays(artifact.fitted)
        offsets, feature = arrays[0], arrays[1]
        n_trees = len(offsets) - 1
        all_trees = np.arange(n_trees)
        cache = np.empty((len(X), n_trees))
        tree_values(np.ascontiguousarray(X), *arrays, all_trees, cache)
        tree_of_node = np.repeat(all_trees, np.diff(offsets))
        uses = [np.unique(tree_of_node[feature == j]) for j in range(len(cols))]
        base_margin = artifact.fitted.get("base_margin", 0.0)
        scale = 1.0 if artifact.algorithm == "gbdt" else 1.0 / n_trees

        def margins(M, j):
            vals = cache
            if j is not None and len(uses[j]):
                vals = cache.copy()
                part = np.empty((len(M), len(uses[j])))
                tree_values(np.ascontiguousarray(M), *arrays, uses[j], part)
                vals[:, uses[j]] = part
            return base_margin + scale * vals.sum(axis=1)

    def score(M, j=None):
        return recall_at_fpr(link(artifact, margins(M, j)), labels, target_fpr)

    base = score(X)
    used = artifact.used_features()
    out = {}
    for j, c in enumerate(cols):
        if c not in used:
            out[c] = 0.0
            continue
        orig = X[:, j].copy()
        drops = []
        for r in range(k):
            X[:, j] = orig[generator(seed, 29, j, r).permutation(len(orig))]
            drops.append(score(X, j))
        X[:, j] = orig
        out[c] = float(base - np.mean(drops))
    return out
