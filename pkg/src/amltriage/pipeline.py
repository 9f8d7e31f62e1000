"""Feature pipeline: records, profiles, degree and random-walk families on one frame.

Rows are the alerted account-days. Graph families replay the dynamic graph
day by day; the features of a row on day ``d`` come from the snapshot as
of ``d`` and from labels visible on ``d``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .frame import KEY_COLUMNS, FeatureFrame, raw_features
from .graph import WindowConfig, daily_edge_events, degree_columns, degree_table, replay
from .ingest import DatasetSplit, build_records, day_index, temporal_split
from .models import GbdtParams, predict, train
from .profiles import ProfileSpec, compute_profiles, default_specs, select_features
from .rng import derive_seed
from .walker import LabelView, WalkConfig, account_key, gw_columns, undirected_csr, walk_table

log = logging.getLogger(__name__)

# fixed model used inside feature construction and the figure experiments
DEFAULT_GBDT = GbdtParams(num_leaves=200, min_data_in_leaf=100, learning_rate=0.05, n_rounds=150)


@dataclass
class Dataset:
    """Alerted transactions with their account-day records and temporal split."""

    txns: pd.DataFrame
    records: pd.DataFrame
    split: DatasetSplit
    edges: pd.DataFrame
    node_types: dict

    @classmethod
    def from_transactions(cls, txns: pd.DataFrame, fractions=(0.6, 0.1, 0.3)) -> "Dataset":
        records = build_records(txns)
        split = temporal_split(records, fractions)
        edges = daily_edge_events(txns, day_index(txns))
        types = dict(zip(txns["sender_id"], txns["sender_type"]))
        types.update(zip(txns["receiver_id"], txns["receiver_type"]))
        return cls(txns, records, split, edges, types)

    @property
    def days(self) -> np.ndarray:
        return self.records["day"].to_numpy()

    @property
    def labels(self) -> np.ndarray:
        return self.records["label"].to_numpy()

    def mask(self, part: str) -> np.ndarray:
        return self.split.mask(self.days, part)

    @property
    def last_day(self) -> int:
        return int(self.days.max())


class LabelSource:
    """Per-day illicit node sets under a label delay, with optional pseudo-labels.

    Wraps :class:`LabelView` over all records so each day costs one
    vectorised pass.
    """

    def __init__(self, records: pd.DataFrame, delay: int = 0, scores=None, threshold: float = 0.25):
        if delay > 0:
            if scores is None:
                raise ValueError("pseudo-label scores are required when delay > 0")
            scores = np.asarray(scores, dtype=float)
            if len(scores) != len(records) or np.isnan(scores).any():
                raise ValueError("a score is needed for every record when delay > 0")
        self.accounts = records["account_id"].to_numpy()
        self.days = records["day"].to_numpy(dtype=np.int64)
        self.labels = records["label"].to_numpy(dtype=np.int8)
        self.scores = scores
        self.delay = int(delay)
        self.threshold = float(threshold)

    def view(self, day: int) -> LabelView:
        return LabelView(day, self.delay, self.threshold, self.accounts, self.days, self.labels, self.scores)

    def illicit_codes(self, day: int, index: pd.Index) -> np.ndarray:
        vis = self.view(day).visible()
        out = np.zeros(len(index), dtype=bool)
        codes = index.get_indexer(self.accounts[vis])
        out[codes[codes >= 0]] = True
        return out


@dataclass(frozen=True)
class WalkSpec:
    prefix: str
    labels: LabelSource
    config: WalkConfig = field(default_factory=WalkConfig)


def graph_features(
    ds: Dataset,
    window: WindowConfig,
    degrees: bool = True,
    weighted_degrees: bool = True,
    walks=(),
    n_jobs: int = 1,
) -> pd.DataFrame:
    """Degree and walk columns for every record, in record order."""
    recs = ds.records
    index = pd.Index(sorted(set(ds.edges["src"]) | set(ds.edges["dst"]) | set(recs["account_id"])))
    n = len(index)
    rec_codes = index.get_indexer(recs["account_id"])
    keys = np.array([account_key(a) for a in index], dtype=np.uint64)
    deg_cols = (degree_columns(False) if degrees else []) + (degree_columns(True) if weighted_degrees else [])
    walk_cols = [c for w in walks for c in gw_columns(w.prefix)]
    out = np.zeros((len(recs), len(deg_cols) + len(walk_cols)))
    if len(recs) == 0:
        return pd.DataFrame(out, columns=deg_cols + walk_cols)
    rows_by_day = pd.Series(np.arange(len(recs))).groupby(recs["day"].to_numpy()).indices
    first, last = int(recs["day"].min()), int(recs["day"].max())
    for day, snap in replay(ds.edges, window, first, last, ds.node_types):
        rows = rows_by_day.get(day)
        if rows is None:
            continue
        src, dst, _, amt = snap.arrays()
        s = index.get_indexer(src) if len(src) else np.zeros(0, dtype=np.int64)
        d = index.get_indexer(dst) if len(dst) else np.zeros(0, dtype=np.int64)
        targets = rec_codes[rows]
        col = 0
        if deg_cols:
            table = degree_table(n, s, d, amt)
            for c in deg_cols:
                out[rows, col] = table[c][targets]
                col += 1
        if walks:
            indptr, indices = undirected_csr(n, s, d)
            for w in walks:
                illicit = w.labels.illicit_codes(day, index)
                res = walk_table(indptr, indices, illicit, targets, keys[targets], day, w.config, n_jobs)
                out[rows, col : col + res.shape[1]] = res
                col += res.shape[1]
    return pd.DataFrame(out, columns=deg_cols + walk_cols)


def profile_frame(ds: Dataset, specs=None) -> FeatureFrame:
    specs = default_specs() if specs is None else [s if isinstance(s, ProfileSpec) else ProfileSpec.parse(s) for s in specs]
    return compute_profiles(ds.records, specs)


def base_frame(ds: Dataset, profiles: bool = True, select: bool = True, seed: int = 0, budget_fraction: float = 0.9):
    """Raw record columns plus (optionally selected) profiles; returns (frame, selected profile names)."""
    frame = raw_features(ds.records)
    if not profiles:
        return frame, []
    prof = profile_frame(ds)
    chosen = prof.columns
    if select:
        train_mask = ds.mask("train")
        chosen = select_features(prof.rows(train_mask), budget_fraction=budget_fraction, seed=derive_seed(seed, "selection") >> 1)
    return frame.with_columns(prof.features[chosen]), chosen


def pseudo_scores(frame: FeatureFrame, ds: Dataset, params: GbdtParams = DEFAULT_GBDT, seed: int = 0) -> np.ndarray:
    """Scores of a baseline trained on the first training half, for every row."""
    half1 = ds.mask("half1")
    model = train(frame.rows(half1), frame.y[half1], params, seed=seed)
    return predict(model, frame)


@dataclass(frozen=True)
class FeatureConfig:
    profiles: bool = True
    select_profiles: bool = True
    budget_fraction: float = 0.9
    degrees: bool = True
    weighted_degrees: bool = True
    gw: bool = False
    gwd: bool = False
    window: WindowConfig = field(default_factory=WindowConfig)
    walk: WalkConfig = field(default_factory=WalkConfig)
    gwd_threshold: float = 0.25

    def __post_init__(self):
        if self.gw and self.gwd:
            raise ValueError("gw and gwd are mutually exclusive")
        if self.gw and self.window.label_delay_days > 0:
            raise ValueError("plain gw assumes immediate labels; use gwd with a label delay")


def featurize(ds: Dataset, cfg: FeatureConfig, seed: int = 0, n_jobs: int = 1) -> tuple[FeatureFrame, dict]:
    """Build the frame for the toggled families; also returns provenance details."""
    frame, chosen = base_frame(ds, cfg.profiles, cfg.select_profiles, seed, cfg.budget_fraction)
    info = {"selected_profiles": list(chosen), "split": ds.split.to_dict()}
    walk_cfg = WalkConfig(cfg.walk.num_walks, cfg.walk.max_hops, derive_seed(seed, "walks", cfg.walk.seed) >> 1)
    walks = []
    if cfg.gw:
        walks.append(WalkSpec("gw_", LabelSource(ds.records), walk_cfg))
    graph = graph_features(ds, cfg.window, cfg.degrees, cfg.weighted_degrees, walks, n_jobs)
    frame = frame.with_columns(graph)
    if cfg.gwd:
        delay = cfg.window.label_delay_days
        scores = None
        if delay > 0:
            scores = pseudo_scores(frame, ds, seed=derive_seed(seed, "pseudo") >> 1)
        src = LabelSource(ds.records, delay, scores, cfg.gwd_threshold)
        extra = graph_features(ds, cfg.window, False, False, [WalkSpec("gwd_", src, walk_cfg)], n_jobs)
        frame = frame.with_columns(extra)
        info["gwd_threshold"] = cfg.gwd_threshold
    return frame, info
