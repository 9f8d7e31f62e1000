"""Entity-centric sliding-window profiles and permutation-based selection."""
from __future__ import annotations

import itertools
import logging
import warnings
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .frame import KEY_COLUMNS, FeatureFrame

log = logging.getLogger(__name__)

DIRECTIONS = ("sent", "received")
WINDOWS = (1, 7, 14, 30, 60)
AGGS = ("sum", "mean", "min", "max", "count")
OPS = ("ratio", "difference")
RATIO_CAP = 1e6


@dataclass(frozen=True, order=True)
class ProfileSpec:
    direction: str
    window_days: int
    agg: str
    comparison: tuple[int, str] | None = None

    def __post_init__(self):
        if self.direction not in DIRECTIONS:
            raise ValueError(f"direction must be one of {DIRECTIONS}")
        if self.agg not in AGGS:
            raise ValueError(f"agg must be one of {AGGS}")
        if self.window_days < 1:
            raise ValueError("window_days must be positive")
        if self.comparison is not None:
            other, op = self.comparison
            if op not in OPS:
                raise ValueError(f"comparison op must be one of {OPS}")
            if other == self.window_days:
                raise ValueError("comparison windows must differ")

    @property
    def base(self) -> "ProfileSpec":
        return ProfileSpec(self.direction, self.window_days, self.agg)

    @property
    def other(self) -> "ProfileSpec":
        return ProfileSpec(self.direction, self.comparison[0], self.agg)

    @property
    def name(self) -> str:
        s = f"prof_{self.agg}_{self.direction}_{self.window_days}d"
        if self.comparison is not None:
            s += f"_{self.comparison[1]}_{self.comparison[0]}d"
        return s

    @classmethod
    def parse(cls, text: str) -> "ProfileSpec":
        """Inverse of :attr:`name`, e.g. ``prof_sum_sent_7d_ratio_30d``."""
        parts = text.removeprefix("prof_").split("_")
        agg, direction, w = parts[0], parts[1], int(parts[2].rstrip("d"))
        comp = None
        if len(parts) == 5:
            comp = (int(parts[4].rstrip("d")), parts[3])
        elif len(parts) != 3:
            raise ValueError(f"cannot parse profile spec {text!r}")
        return cls(direction, w, agg, comp)


def default_specs(windows=WINDOWS, aggs=AGGS) -> list[ProfileSpec]:
    """All base aggregations plus ratio/difference for every window pair (short vs long)."""
    specs = [ProfileSpec(d, w, a) for d in DIRECTIONS for w in windows for a in aggs]
    for d, (w1, w2), a, op in itertools.product(DIRECTIONS, itertools.combinations(sorted(windows), 2), aggs, OPS):
        specs.append(ProfileSpec(d, w1, a, (w2, op)))
    return specs


class _RangeMin:
    """Sparse table for O(1) range-minimum queries over a fixed array."""

    def __init__(self, values: np.ndarray):
        self.levels = [np.asarray(values, dtype=float)]
        k = 1
        while 2 * k <= len(values):
            prev = self.levels[-1]
            self.levels.append(np.minimum(prev[:-k], prev[k:]))
            k *= 2

    def query(self, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
        """Minimum over inclusive index ranges [lo, hi]; requires lo <= hi."""
        length = hi - lo + 1
        lvl = np.floor(np.log2(length)).astype(int)
        out = np.empty(len(lo))
        for j in np.unique(lvl):
            sel = lvl == j
            tab = self.levels[j]
            out[sel] = np.minimum(tab[lo[sel]], tab[hi[sel] - (1 << j) + 1])
        return out


class _Windows:
    """Per-account day-ordered record arrays with prefix sums for fast windows."""

    def __init__(self, records: pd.DataFrame):
        acct_codes, _ = pd.factorize(records["account_id"], sort=True)
        day = records["day"].to_numpy(dtype=np.int64)
        order = np.lexsort((day, acct_codes))
        self.order = order
        self.acct = acct_codes[order].astype(np.int64)
        self.day = day[order]
        self.span = int(day.max() - day.min() + 2) if len(day) else 1
        self.offset = int(day.min()) if len(day) else 0
        self.key = self.acct * self.span + (self.day - self.offset)
        self.cols = {}
        for direction in DIRECTIONS:
            total = records[f"total_{direction}"].to_numpy(dtype=float)[order]
            count = records[f"{direction}_count"].to_numpy(dtype=np.int64)[order]
            lo = records[f"min_{direction}"].to_numpy(dtype=float)[order]
            hi = records[f"max_{direction}"].to_numpy(dtype=float)[order]
            has = count > 0
            self.cols[direction] = {
                "psum": np.r_[0.0, np.cumsum(total)],
                "pcount": np.r_[0, np.cumsum(count)],
                "min": _RangeMin(np.where(has, lo, np.inf)),
                "negmax": _RangeMin(np.where(has, -hi, np.inf)),
            }
        self._starts = {}

    def start(self, window: int) -> np.ndarray:
        if window not in self._starts:
            lo_key = self.acct * self.span + np.maximum(self.day - window + 1 - self.offset, 0)
            self._starts[window] = np.searchsorted(self.key, lo_key, side="left")
        return self._starts[window]

    def aggregate(self, direction: str, window: int, agg: str) -> np.ndarray:
        c = self.cols[direction]
        j = self.start(window)
        i = np.arange(len(self.day))
        s = c["psum"][i + 1] - c["psum"][j]
        n = c["pcount"][i + 1] - c["pcount"][j]
        if agg == "sum":
            return s
        if agg == "count":
            return n.astype(float)
        if agg == "mean":
            return np.divide(s, n, out=np.zeros_like(s), where=n > 0)
        if agg == "min":
            v = c["min"].query(j, i)
        else:
            v = -c["negmax"].query(j, i)
        return np.where(np.isfinite(v), v, 0.0)


def compare(a: np.ndarray, b: np.ndarray, op: str) -> np.ndarray:
    """Ratio or difference of two windows; 0/0 is 1 and x/0 is capped at +-1e6."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if op == "difference":
        return a - b
    with np.errstate(divide="ignore", invalid="ignore"):
        r = a / b
    r = np.where(b == 0, np.where(a == 0, 1.0, np.sign(a) * RATIO_CAP), r)
    return np.clip(r, -RATIO_CAP, RATIO_CAP)


def compute_profiles(records: pd.DataFrame, specs) -> FeatureFrame:
    """Profile columns for every record row (rows keep the order of ``records``).

    A window of ``w`` days at evaluation day ``d`` covers days ``(d - w, d]``,
    so the evaluation day's own transfers are included.
    """
    specs = list(specs)
    win = _Windows(records)
    inverse = np.empty_like(win.order)
    inverse[win.order] = np.arange(len(win.order))
    base_values: dict[ProfileSpec, np.ndarray] = {}

    def base(spec: ProfileSpec) -> np.ndarray:
        if spec not in base_values:
            base_values[spec] = win.aggregate(spec.direction, spec.window_days, spec.agg)[inverse]
        return base_values[spec]

    cols = {}
    for spec in specs:
        if spec.comparison is None:
            cols[spec.name] = base(spec)
    frame = FeatureFrame(records[KEY_COLUMNS], pd.DataFrame(cols), records.get("label"))
    comps = [s for s in specs if s.comparison is not None]
    if comps:
        # feed the comparison step with the base columns it needs, then drop extras
        needed = {s.base for s in comps} | {s.other for s in comps}
        helper = frame.with_columns(pd.DataFrame({s.name: base(s) for s in needed if s.name not in cols}))
        extra = compute_cross_window(helper, comps)
        frame = frame.with_columns(extra)
    return frame.select([s.name for s in specs])


def compute_cross_window(frame: FeatureFrame, specs) -> pd.DataFrame:
    """Ratio/difference columns from base window columns already in ``frame``."""
    out = {}
    for spec in specs:
        a = frame.features[spec.base.name].to_numpy()
        b = frame.features[spec.other.name].to_numpy()
        out[spec.name] = compare(a, b, spec.comparison[1])
    return pd.DataFrame(out)


def select_features(
    frame: FeatureFrame,
    labels=None,
    budget_fraction: float = 0.9,
    seed: int = 0,
    params=None,
    candidates=None,
    sample_size: int = 20_000,
    holdout_fraction: float = 0.3,
    k: int = 5,
    target_fpr: float = 0.2,
) -> list[str]:
    """Smallest importance-ranked prefix reaching ``budget_fraction`` of total importance.

    A boosted-tree model is fit on the older part of a training sample and
    permutation importance (drop in recall at ``target_fpr``) is measured on
    the most recent ``holdout_fraction`` of it. Ties in importance are broken
    by column name.
    """
    from .models import GbdtParams, permutation_importance, train

    y = frame.y if labels is None else np.asarray(labels)
    candidates = frame.columns if candidates is None else list(candidates)
    days = frame.days
    order = np.argsort(days, kind="stable")
    if len(order) > sample_size:
        rng = np.random.default_rng(seed)
        order = np.sort(rng.choice(order, size=sample_size, replace=False))
        order = order[np.argsort(days[order], kind="stable")]
    cut = int(round(len(order) * (1 - holdout_fraction)))
    fit_idx, hold_idx = order[:cut], order[cut:]
    sub = frame.select(candidates)
    params = params or GbdtParams(num_leaves=200, min_data_in_leaf=100, learning_rate=0.09, n_rounds=60)
    model = train(sub.rows(fit_idx), y[fit_idx], params, seed=seed)
    imp = permutation_importance(model, sub.rows(hold_idx), y[hold_idx], k=k, seed=seed, target_fpr=target_fpr)
    ranked = sorted(imp.items(), key=lambda kv: (-kv[1], kv[0]))
    positive = [(c, v) for c, v in ranked if v > 0]
    if not positive:
        warnings.warn("no feature has positive permutation importance; keeping the top-ranked one")
        return [ranked[0][0]]
    total = sum(v for _, v in positive)
    chosen, acc = [], 0.0
    for c, v in positive:
        chosen.append(c)
        acc += v
        if acc >= budget_fraction * total - 1e-12:
            break
    log.info("selected %d of %d profile columns", len(chosen), len(candidates))
    return chosen
