"""GuiltyWalker random-walk features and delay-aware label views.

Walks start at the target and step uniformly over the distinct neighbours
of the undirected retained graph. A walk succeeds when it steps onto an
account that is illicit according to the label view (the target itself
never counts), and fails on a dead end or after ``max_hops`` steps.
Every walk draws from its own counter-based stream keyed by
(seed, target, day, walk index).
"""
from __future__ import annotations

import hashlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numba
import numpy as np
import pandas as pd

from .graph import GraphSnapshot
from .rng import stream_key, uniform_at

GW_STATS = ("hit_rate", "n_illicit", "len_min", "len_max", "len_median", "len_mean", "len_std", "len_p25", "len_p75")


def gw_columns(prefix: str = "gw_") -> list[str]:
    return [prefix + s for s in GW_STATS]


@dataclass(frozen=True)
class WalkConfig:
    num_walks: int = 50
    max_hops: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.num_walks < 1:
            raise ValueError("num_walks must be at least 1")
        if self.max_hops < 1:
            raise ValueError("max_hops must be at least 1")


@dataclass(frozen=True)
class WalkFeatures:
    hit_rate: float
    n_illicit: int
    len_min: float
    len_max: float
    len_median: float
    len_mean: float
    len_std: float
    len_p25: float
    len_p75: float

    def as_dict(self, prefix: str = "gw_") -> dict[str, float]:
        return {prefix + s: float(getattr(self, s)) for s in GW_STATS}


def account_key(account) -> int:
    """Stable 63-bit key for an account id (independent of process hash seeds)."""
    h = hashlib.blake2b(str(account).encode(), digest_size=8).digest()
    return int.from_bytes(h, "little") >> 1


class LabelView:
    """Labels as visible on ``as_of_day`` under a label delay of ``delay`` days.

    An account-day older than the delay (``as_of_day - day > delay``) shows
    its true label; a more recent one shows the pseudo-label
    ``score >= threshold``. Days on or after ``as_of_day`` are never visible.
    """

    def __init__(self, as_of_day: int, delay: int, threshold: float, accounts, days, labels, scores=None):
        self.as_of_day = int(as_of_day)
        self.delay = int(delay)
        self.threshold = float(threshold)
        self.accounts = np.asarray(accounts)
        self.days = np.asarray(days, dtype=np.int64)
        self.labels = np.asarray(labels, dtype=np.int8)
        self.scores = None if scores is None else np.asarray(scores, dtype=float)

    def visible(self) -> np.ndarray:
        """Boolean per stored account-day: illicit as seen from ``as_of_day``."""
        age = self.as_of_day - self.days
        past = age > 0
        true_part = past & (age > self.delay) & (self.labels == 1)
        if self.delay == 0 or self.scores is None:
            return true_part
        pseudo = past & (age <= self.delay) & (self.scores >= self.threshold)
        return true_part | pseudo

    def illicit_accounts(self) -> set:
        return set(self.accounts[self.visible()].tolist())

    def label(self, account, day) -> int:
        sel = (self.accounts == account) & (self.days == day)
        if not sel.any() or day >= self.as_of_day:
            return 0
        return int(self.visible()[sel][0])


def make_label_view(scores, true_labels: pd.DataFrame, as_of_day: int, delay: int, threshold: float = 0.25) -> LabelView:
    """Build a :class:`LabelView` from true labels and (for recent days) model scores.

    ``true_labels`` and ``scores`` are frames with ``account_id, day`` plus
    ``label`` / ``score``. Every account-day inside the waiting period
    ``[as_of_day - delay, as_of_day - 1]`` needs a score.
    """
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must be in [0, 1]")
    tl = true_labels[["account_id", "day", "label"]]
    score_col = None
    if delay > 0:
        if scores is None:
            raise ValueError("scores are required when delay > 0")
        merged = tl.merge(scores[["account_id", "day", "score"]], on=["account_id", "day"], how="left")
        age = as_of_day - merged["day"].to_numpy()
        waiting = (age >= 1) & (age <= delay)
        missing = waiting & merged["score"].isna().to_numpy()
        if missing.any():
            row = merged[missing].iloc[0]
            raise ValueError(f"missing score for account {row['account_id']!r} on day {row['day']} inside the waiting period")
        score_col = merged["score"].fillna(0.0).to_numpy()
        tl = merged
    return LabelView(as_of_day, delay, threshold, tl["account_id"].to_numpy(), tl["day"].to_numpy(), tl["label"].to_numpy(), score_col)


@numba.njit(cache=True, nogil=True)
def _percentile_sorted(x, q):
    pos = q * (len(x) - 1)
    lo = int(np.floor(pos))
    hi = min(lo + 1, len(x) - 1)
    frac = pos - lo
    return x[lo] + (x[hi] - x[lo]) * frac


@numba.njit(cache=True, nogil=True)
def _walk_kernel(indptr, indices, illicit, starts, target_keys, seed, day, num_walks, max_hops, out):
    lengths = np.empty(num_walks, dtype=np.float64)
    ends = np.empty(num_walks, dtype=np.int64)
    sentinel = float(max_hops + 1)
    for i in range(len(starts)):
        start = starts[i]
        ok = 0
        if start >= 0:
            for w in range(num_walks):
                key = stream_key(np.uint64(seed), np.uint64(target_keys[i]), np.uint64(day), np.uint64(w))
                cur = start
                hops = 0
                while hops < max_hops:
                    deg = indptr[cur + 1] - indptr[cur]
                    if deg == 0:
                        break
                    u = uniform_at(key, hops)
                    k = int(u * deg)
                    if k >= deg:
                        k = deg - 1
                    cur = indices[indptr[cur] + k]
                    hops += 1
                    if cur != start and illicit[cur]:
                        lengths[ok] = hops
                        ends[ok] = cur
                        ok += 1
                        break
        out[i, 0] = ok / num_walks
        if ok == 0:
            out[i, 1] = 0.0
            for j in range(2, 9):
                out[i, j] = sentinel
            continue
        ln = np.sort(lengths[:ok])
        e = np.sort(ends[:ok])
        distinct = 1
        for j in range(1, ok):
            if e[j] != e[j - 1]:
                distinct += 1
        mean = ln.mean()
        out[i, 1] = distinct
        out[i, 2] = ln[0]
        out[i, 3] = ln[ok - 1]
        out[i, 4] = _percentile_sorted(ln, 0.5)
        out[i, 5] = mean
        out[i, 6] = np.sqrt(((ln - mean) ** 2).mean())
        out[i, 7] = _percentile_sorted(ln, 0.25)
        out[i, 8] = _percentile_sorted(ln, 0.75)


def undirected_csr(n_nodes: int, src: np.ndarray, dst: np.ndarray):
    """CSR of the simple undirected graph; neighbour lists sorted by node code."""
    if len(src) == 0:
        return np.zeros(n_nodes + 1, dtype=np.int64), np.zeros(0, dtype=np.int64)
    a = np.concatenate([src, dst]).astype(np.int64)
    b = np.concatenate([dst, src]).astype(np.int64)
    pairs = np.unique(a * n_nodes + b)
    a, b = pairs // n_nodes, pairs % n_nodes
    indptr = np.zeros(n_nodes + 1, dtype=np.int64)
    np.add.at(indptr, a + 1, 1)
    return np.cumsum(indptr), b


def walk_table(indptr, indices, illicit, starts, target_keys, day: int, config: WalkConfig, n_jobs: int = 1) -> np.ndarray:
    """GW feature rows for many targets; ``starts`` is -1 for targets absent from the graph."""
    starts = np.asarray(starts, dtype=np.int64)
    target_keys = np.asarray(target_keys, dtype=np.uint64)
    illicit = np.asarray(illicit, dtype=np.bool_)
    out = np.empty((len(starts), len(GW_STATS)))
    seed = np.uint64(config.seed & 0xFFFFFFFFFFFFFFFF)
    args = (indptr, indices, illicit)

    def run(lo, hi):
        _walk_kernel(*args, starts[lo:hi], target_keys[lo:hi], seed, np.uint64(day), config.num_walks, config.max_hops, out[lo:hi])

    if n_jobs <= 1 or len(starts) < 2:
        run(0, len(starts))
    else:
        bounds = np.linspace(0, len(starts), n_jobs + 1).astype(int)
        with ThreadPoolExecutor(n_jobs) as ex:
            list(ex.map(lambda b: run(*b), zip(bounds[:-1], bounds[1:])))
    return out


def run_walks(snapshot: GraphSnapshot, target, labels: LabelView, config: WalkConfig) -> WalkFeatures:
    """GuiltyWalker features for one target on one snapshot."""
    if labels.as_of_day != snapshot.as_of_day:
        raise ValueError("label view and snapshot refer to different days")
    src, dst, _, _ = snapshot.arrays()
    nodes = sorted(set(src.tolist()) | set(dst.tolist()) | {target})
    index = {n: i for i, n in enumerate(nodes)}
    s = np.array([index[x] for x in src.tolist()], dtype=np.int64)
    d = np.array([index[x] for x in dst.tolist()], dtype=np.int64)
    indptr, indices = undirected_csr(len(nodes), s, d)
    illicit = np.zeros(len(nodes), dtype=bool)
    for acct in labels.illicit_accounts():
        if acct in index:
            illicit[index[acct]] = True
    row = walk_table(indptr, indices, illicit, [index[target]], [account_key(target)], snapshot.as_of_day, config)[0]
    return WalkFeatures(float(row[0]), int(row[1]), *(float(v) for v in row[2:]))
