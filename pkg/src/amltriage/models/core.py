"""Triage classifiers: elastic-net GLM, random forest and leaf-wise boosted trees."""
from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.optimize import minimize
from scipy.special import expit

from ..frame import FeatureFrame
from ..ingest import DataError
from ..rng import derive_seed, generator
from ._tree import build_tree, predict_forest, presort

FORMAT_VERSION = 1
GBDT_LAMBDA_L2 = 1.0


@dataclass(frozen=True)
class GlmParams:
    alpha: float = 0.05
    standardize_numericals: bool = True
    l2_strength: float = 1e-3
    max_iter: int = 2000

    algorithm = "glm"

    def __post_init__(self):
        if not 0.01 <= self.alpha <= 0.09:
            raise ValueError(f"alpha must be in [0.01, 0.09], got {self.alpha}")


@dataclass(frozen=True)
class RfParams:
    max_depth: int = 20
    n_trees: int = 100
    min_instances_split: int = 10

    algorithm = "rf"

    def __post_init__(self):
        if not 10 <= self.max_depth <= 40:
            raise ValueError("max_depth must be in [10, 40]")
        if not 100 <= self.n_trees <= 200:
            raise ValueError("n_trees must be in [100, 200]")
        if not 10 <= self.min_instances_split <= 50:
            raise ValueError("min_instances_split must be in [10, 50]")


@dataclass(frozen=True)
class GbdtParams:
    num_leaves: int = 200
    min_data_in_leaf: int = 100
    learning_rate: float = 0.05
    n_rounds: int = 200

    algorithm = "gbdt"

    def __post_init__(self):
        if not 200 <= self.num_leaves <= 500:
            raise ValueError("num_leaves must be in [200, 500]")
        if not 100 <= self.min_data_in_leaf <= 200:
            raise ValueError("min_data_in_leaf must be in [100, 200]")
        if not 0.01 <= self.learning_rate <= 0.09:
            raise ValueError("learning_rate must be in [0.01, 0.09]")
        if self.n_rounds < 1:
            raise ValueError("n_rounds must be positive")

    def effective_leaves(self, n_rows: int) -> int:
        return max(1, min(self.num_leaves, n_rows // self.min_data_in_leaf))


PARAM_TYPES = {"glm": GlmParams, "rf": RfParams, "gbdt": GbdtParams}


def params_from_dict(algorithm: str, d: dict):
    return PARAM_TYPES[algorithm](**d)


@dataclass
class ModelArtifact:
    algorithm: str
    params: dict
    features: list[str]
    fitted: dict
    metadata: dict = field(default_factory=dict)

    def to_json(self) -> str:
        doc = {"format": "amltriage-model", "version": FORMAT_VERSION, **asdict(self)}
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "ModelArtifact":
        doc = json.loads(Path(path).read_text())
        if doc.get("format") != "amltriage-model" or doc.get("version") != FORMAT_VERSION:
            raise DataError(f"{path}: not a version-{FORMAT_VERSION} model file")
        return cls(doc["algorithm"], doc["params"], doc["features"], doc["fitted"], doc.get("metadata", {}))

    def used_features(self) -> set[str]:
        """Columns that can influence predictions."""
        if self.algorithm == "glm":
            return {f for f, w in zip(self.features, self.fitted["coef"]) if w != 0.0}
        used = {int(f) for f in self.fitted["feature"] if f >= 0}
        return {self.features[i] for i in used}


def _matrix(frame, columns=None) -> tuple[np.ndarray, list[str]]:
    if isinstance(frame, FeatureFrame):
        cols = frame.columns if columns is None else list(columns)
        return frame.matrix(cols), cols
    if isinstance(frame, pd.DataFrame):
        cols = list(frame.columns) if columns is None else list(columns)
        return np.ascontiguousarray(frame[cols].to_numpy(dtype=np.float64)), cols
    raise TypeError("expected a FeatureFrame or DataFrame")


def _check_xy(X, y):
    y = np.asarray(y)
    if len(y) != len(X):
        raise ValueError("labels and rows differ in length")
    if not np.isin(y, [0, 1]).all():
        raise ValueError("labels must be 0/1")
    if y.all() or not y.any():
        raise ValueError("training needs at least one positive and one negative example")
    if not np.isfinite(X).all():
        raise ValueError("training features contain non-finite values")
    return y.astype(np.float64)


def logloss(y, margin) -> float:
    return float(np.mean(np.logaddexp(0.0, margin) - y * margin))


# GLM ------------------------------------------------------------------


def _fit_glm(X, y, p: GlmParams):
    n, k = X.shape
    if p.standardize_numericals:
        mu = X.mean(axis=0)
        sd = X.std(axis=0)
        sd = np.where(sd > 0, sd, 1.0)
    else:
        mu = np.zeros(k)
        sd = np.ones(k)
    Z = (X - mu) / sd
    lam1 = p.l2_strength * p.alpha
    lam2 = p.l2_strength * (1.0 - p.alpha)

    # w = u - v with u, v >= 0 turns the L1 term linear and smooth
    def f(theta):
        b, u, v = theta[0], theta[1 : k + 1], theta[k + 1 :]
        w = u - v
        m = Z @ w + b
        pr = expit(m)
        loss = np.mean(np.logaddexp(0.0, m) - y * m) + lam1 * (u.sum() + v.sum()) + 0.5 * lam2 * (w @ w)
        r = (pr - y) / n
        gw = Z.T @ r + lam2 * w
        grad = np.concatenate([[r.sum()], gw + lam1, -gw + lam1])
        return loss, grad

    x0 = np.zeros(2 * k + 1)
    prior = y.mean()
    x0[0] = np.log(prior / (1 - prior))
    bounds = [(None, None)] + [(0.0, None)] * (2 * k)
    res = minimize(f, x0, jac=True, method="L-BFGS-B", bounds=bounds, options={"maxiter": p.max_iter, "gtol": 1e-8, "ftol": 1e-15})
    b, u, v = res.x[0], res.x[1 : k + 1], res.x[k + 1 :]
    w = u - v
    return {
        "coef": w.tolist(),
        "intercept": float(b),
        "mean": mu.tolist(),
        "scale": sd.tolist(),
    }, {"converged": bool(res.success), "n_iter": int(res.nit)}


def _glm_margin(fitted, X):
    Z = (X - np.asarray(fitted["mean"])) / np.asarray(fitted["scale"])
    return Z @ np.asarray(fitted["coef"]) + fitted["intercept"]


# trees ------------------------------------------------------------------


def _pack(trees):
    offsets = np.zeros(len(trees) + 1, dtype=np.int64)
    for i, t in enumerate(trees):
        offsets[i + 1] = offsets[i] + len(t[0])
    cat = [np.concatenate([t[j] for t in trees]) if trees else np.zeros(0) for j in range(5)]
    return {
        "offsets": offsets.tolist(),
        "feature": cat[0].astype(np.int64).tolist(),
        "threshold": cat[1].astype(float).tolist(),
        "left": cat[2].astype(np.int64).tolist(),
        "right": cat[3].astype(np.int64).tolist(),
        "value": cat[4].astype(float).tolist(),
    }


def _forest_arrays(fitted):
    return (
        np.asarray(fitted["offsets"], dtype=np.int64),
        np.asarray(fitted["feature"], dtype=np.int64),
        np.asarray(fitted["threshold"], dtype=np.float64),
        np.asarray(fitted["left"], dtype=np.int64),
        np.asarray(fitted["right"], dtype=np.int64),
        np.asarray(fitted["value"], dtype=np.float64),
    )


def _fit_gbdt(X, y, p: GbdtParams, seed: int):
    n, k = X.shape
    Xt = np.ascontiguousarray(X.T)
    sorted_idx = presort(Xt)
    cnt = np.ones(n)
    prior = y.mean()
    base = float(np.log(prior / (1 - prior)))
    margin = np.full(n, base)
    leaves = p.effective_leaves(n)
    trees = []
    trace = [logloss(y, margin)]
    tmp = np.empty(n)
    for r in range(p.n_rounds):
        pr = expit(margin)
        g = pr - y
        h = pr * (1.0 - pr)
        S = sorted_idx.copy()
        t = build_tree(Xt, S, g, h, cnt, leaves, 10_000, float(p.min_data_in_leaf), 2.0 * p.min_data_in_leaf,
                       GBDT_LAMBDA_L2, 0, seed, True)
        feature, thr, left, right, value, _ = t
        value = value * p.learning_rate
        if len(feature) == 1:
            # no admissible split: keep the constant step but stop early
            trees.append((feature, thr, left, right, value))
            margin += value[0]
            trace.append(logloss(y, margin))
            break
        trees.append((feature, thr, left, right, value))
        tmp[:] = 0.0
        packed = _forest_arrays(_pack([trees[-1]]))
        predict_forest(X, *packed, 1.0, tmp)
        margin += tmp
        trace.append(logloss(y, margin))
    fitted = _pack(trees)
    fitted["base_margin"] = base
    return fitted, {"loss_trace": trace, "effective_leaves": leaves}


def _fit_rf(X, y, p: RfParams, seed: int, n_jobs: int):
    n, k = X.shape
    Xt = np.ascontiguousarray(X.T)
    sorted_idx = presort(Xt)
    mtry = max(1, int(np.sqrt(k)))

    def one(t):
        rng = generator(seed, 11, t)
        cnt = np.bincount(rng.integers(0, n, size=n), minlength=n).astype(np.float64)
        keep = cnt[sorted_idx] > 0
        S = sorted_idx[keep].reshape(k, -1).copy()
        g = -y * cnt
        return build_tree(Xt, S, g, cnt, cnt, n, p.max_depth, 1.0, float(p.min_instances_split), 0.0, mtry,
                          derive_seed(seed, "rf-tree", t) >> 1, False)[:5]

    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as ex:
            trees = list(ex.map(one, range(p.n_trees)))
    else:
        trees = [one(t) for t in range(p.n_trees)]
    return _pack(trees), {"mtry": mtry}


def train(frame, labels, params, seed: int = 0, n_jobs: int = 1, columns=None) -> ModelArtifact:
    """Fit one classifier; deterministic for fixed (data, params, seed) and any ``n_jobs``."""
    X, cols = _matrix(frame, columns)
    y = _check_xy(X, labels)
    algo = params.algorithm
    if algo == "glm":
        fitted, meta = _fit_glm(X, y, params)
    elif algo == "gbdt":
        fitted, meta = _fit_gbdt(X, y, params, seed)
    elif algo == "rf":
        fitted, meta = _fit_rf(X, y, params, seed, n_jobs)
    else:
        raise ValueError(f"unknown algorithm {algo!r}")
    meta.update({"seed": int(seed), "n_rows": int(len(y)), "n_positive": int(y.sum())})
    return ModelArtifact(algo, asdict(params), cols, fitted, meta)


def predict_margin(artifact: ModelArtifact, frame) -> np.ndarray:
    cols = frame.columns if isinstance(frame, FeatureFrame) else list(frame.columns)
    missing = [c for c in artifact.features if c not in cols]
    extra = [c for c in cols if c not in artifact.features]
    if missing or extra:
        raise ValueError(f"column mismatch: missing {missing}, extra {extra}")
    X, _ = _matrix(frame, artifact.features)
    return margin_matrix(artifact, X)


def margin_matrix(artifact: ModelArtifact, X: np.ndarray) -> np.ndarray:
    """Raw margins for a matrix whose columns follow ``artifact.features``."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    if artifact.algorithm == "glm":
        return _glm_margin(artifact.fitted, X)
    out = np.zeros(len(X))
    arrays = _forest_arrays(artifact.fitted)
    if artifact.algorithm == "gbdt":
        out += artifact.fitted["base_margin"]
        predict_forest(X, *arrays, 1.0, out)
        return out
    n_trees = len(arrays[0]) - 1
    predict_forest(X, *arrays, 1.0 / n_trees, out)
    return out


def link(artifact: ModelArtifact, margin: np.ndarray) -> np.ndarray:
    if artifact.algorithm == "rf":
        return np.clip(margin, 0.0, 1.0)
    return expit(margin)


def predict(artifact: ModelArtifact, frame) -> np.ndarray:
    """Scores in [0, 1]; GLM and GBDT go through the logistic link, RF averages leaf rates."""
    return link(artifact, predict_margin(artifact, frame))
