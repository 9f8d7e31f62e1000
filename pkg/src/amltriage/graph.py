"""Dynamic directed transaction graph with separate legitimate/suspicious retention.

Edges are daily aggregates per ordered account pair. An edge's label is
only known once it is older than the label delay (age > delay, where
age = as_of_day - edge day); until then it is treated as unknown and kept
under the legitimate window. Amounts are held in integer cents so cached
weighted degrees stay exact under repeated add/remove.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np
import pandas as pd

LEGITIMATE = 0
SUSPICIOUS = 1
UNKNOWN = -1
MAX_WINDOW = 90


class EdgeEvent(NamedTuple):
    src: object
    dst: object
    day: int
    amount: float
    label: int = UNKNOWN


@dataclass(frozen=True)
class WindowConfig:
    twl_days: int = 60
    tws_days: int = 60
    label_delay_days: int = 0

    def __post_init__(self):
        for name in ("twl_days", "tws_days"):
            v = getattr(self, name)
            if not 0 <= v <= MAX_WINDOW:
                raise ValueError(f"{name} must be in [0, {MAX_WINDOW}], got {v}")
        if self.label_delay_days < 0:
            raise ValueError("label_delay_days must be nonnegative")
        if self.label_delay_days > 0 and self.twl_days < self.label_delay_days:
            raise ValueError(
                f"twl_days ({self.twl_days}) must be at least label_delay_days ({self.label_delay_days})"
            )

    @property
    def horizon(self) -> int:
        return max(self.twl_days, self.tws_days)

    def known(self, age) -> np.ndarray | bool:
        return age > self.label_delay_days

    def retained(self, age, label):
        """Retention rule for edges of a given age (days) and true label."""
        age = np.asarray(age)
        susp = (np.asarray(label) == SUSPICIOUS) & self.known(age)
        return (age >= 0) & np.where(susp, age < self.tws_days, age < self.twl_days)


def cents(amount) -> np.ndarray:
    return np.rint(np.asarray(amount, dtype=float) * 100).astype(np.int64)


@dataclass(frozen=True)
class GraphSnapshot:
    """Immutable view of the retained graph as of one day.

    ``edges`` maps (src, dst, day) to (amount_cents, visible_label); the
    visible label is UNKNOWN while the edge is within the label delay.
    """

    as_of_day: int
    edges: dict
    node_types: dict = field(default_factory=dict)
    in_degree: dict = field(default_factory=dict)
    out_degree: dict = field(default_factory=dict)
    in_weight: dict = field(default_factory=dict)
    out_weight: dict = field(default_factory=dict)

    @property
    def nodes(self) -> set:
        return set(self.in_degree) | set(self.out_degree)

    def edge_set(self) -> set:
        return {(s, d, day, a, lab) for (s, d, day), (a, lab) in self.edges.items()}

    def arrays(self):
        """Retained edges as numpy arrays (src, dst, day, amount_cents)."""
        if not self.edges:
            z = np.zeros(0, dtype=np.int64)
            return z, z, z, z
        keys = list(self.edges)
        src = np.array([k[0] for k in keys])
        dst = np.array([k[1] for k in keys])
        day = np.fromiter((k[2] for k in keys), dtype=np.int64, count=len(keys))
        amt = np.fromiter((v[0] for v in self.edges.values()), dtype=np.int64, count=len(keys))
        return src, dst, day, amt

    def to_csv(self, path) -> None:
        rows = sorted(self.edges.items(), key=lambda kv: (kv[0][2], str(kv[0][0]), str(kv[0][1])))
        pd.DataFrame(
            [(s, d, day, f"{a / 100:.2f}", {1: "suspicious", 0: "legitimate"}.get(lab, "unknown")) for (s, d, day), (a, lab) in rows],
            columns=["src", "dst", "day", "amount", "label"],
        ).to_csv(path, index=False, lineterminator="\n")

    def same_as(self, other: "GraphSnapshot") -> bool:
        return (
            self.as_of_day == other.as_of_day
            and self.nodes == other.nodes
            and self.edge_set() == other.edge_set()
            and self.in_degree == other.in_degree
            and self.out_degree == other.out_degree
            and self.in_weight == other.in_weight
            and self.out_weight == other.out_weight
        )


class DynamicGraph:
    """Single-writer sliding-window graph; :meth:`advance_day` moves it one day forward.

    Storage only keeps days that can still be retained under either window.
    """

    def __init__(self, config: WindowConfig, start_day: int = 0, node_types: dict | None = None):
        self.config = config
        self.as_of_day = start_day - 1
        self.node_types = dict(node_types or {})
        # day -> {(src, dst): [cents, true_label, retained]}
        self._store: dict[int, dict] = {}
        self._retained: dict[tuple, tuple] = {}
        self.in_degree: dict = {}
        self.out_degree: dict = {}
        self.in_weight: dict = {}
        self.out_weight: dict = {}

    # degree cache -----------------------------------------------------
    @staticmethod
    def _bump(d: dict, key, delta):
        v = d.get(key, 0) + delta
        if v:
            d[key] = v
        else:
            d.pop(key, None)

    def _attach(self, src, dst, day, amount, label_visible):
        self._retained[(src, dst, day)] = (amount, label_visible)
        self._bump(self.out_degree, src, 1)
        self._bump(self.in_degree, dst, 1)
        self._bump(self.out_weight, src, amount)
        self._bump(self.in_weight, dst, amount)

    def _detach(self, src, dst, day):
        amount, _ = self._retained.pop((src, dst, day))
        self._bump(self.out_degree, src, -1)
        self._bump(self.in_degree, dst, -1)
        self._bump(self.out_weight, src, -amount)
        self._bump(self.in_weight, dst, -amount)

    def _refresh(self, day: int):
        bucket = self._store.get(day)
        if not bucket:
            return
        age = self.as_of_day - day
        cfg = self.config
        known = age > cfg.label_delay_days
        for (src, dst), entry in bucket.items():
            amount, label, was = entry
            susp = known and label == SUSPICIOUS
            now = age < (cfg.tws_days if susp else cfg.twl_days)
            visible = label if known else UNKNOWN
            if was and not now:
                self._detach(src, dst, day)
            elif now and not was:
                self._attach(src, dst, day, amount, visible)
            elif now and was:
                self._retained[(src, dst, day)] = (amount, visible)
            entry[2] = now

    def advance_day(self, day: int, new_events: Iterable[EdgeEvent] = (), label_updates: Iterable[EdgeEvent] = ()):
        """Move to ``day`` (must be as_of_day + 1), expire old edges and add new ones.

        ``new_events`` may carry their true label; it stays hidden until the
        delay has elapsed. ``label_updates`` sets labels of stored edges
        (matched on src, dst, day).
        """
        if day != self.as_of_day + 1:
            raise ValueError(f"advance_day expects day {self.as_of_day + 1}, got {day}")
        self.as_of_day = day
        cfg = self.config
        bucket = self._store.setdefault(day, {})
        for ev in new_events:
            if ev.day != day:
                raise ValueError(f"event for day {ev.day} passed while advancing to {day}")
            key = (ev.src, ev.dst)
            amt = round(ev.amount * 100)  # half-to-even, same as np.rint
            if key in bucket:
                # suspicious > legitimate > unknown
                bucket[key][0] += amt
                bucket[key][1] = max(bucket[key][1], ev.label)
            else:
                bucket[key] = [amt, ev.label, False]
        touched = {day, day - cfg.twl_days, day - cfg.tws_days, day - cfg.label_delay_days - 1}
        for ev in label_updates:
            entry = self._store.get(ev.day, {}).get((ev.src, ev.dst))
            if entry is not None:
                entry[1] = ev.label
                touched.add(ev.day)
        for d in sorted(touched):
            self._refresh(d)
        for d in [d for d in self._store if day - d >= cfg.horizon]:
            for (src, dst), entry in self._store.pop(d).items():
                if entry[2]:
                    self._detach(src, dst, d)
        return self

    def snapshot(self) -> GraphSnapshot:
        nodes = set(self.in_degree) | set(self.out_degree)
        return GraphSnapshot(
            as_of_day=self.as_of_day,
            edges=dict(self._retained),
            node_types={n: self.node_types.get(n) for n in nodes},
            in_degree=dict(self.in_degree),
            out_degree=dict(self.out_degree),
            in_weight=dict(self.in_weight),
            out_weight=dict(self.out_weight),
        )


def daily_edge_events(txns: pd.DataFrame, day: np.ndarray) -> pd.DataFrame:
    """Aggregate transfers to one edge per (src, dst, day); suspicious if any transfer is."""
    df = pd.DataFrame(
        {
            "src": txns["sender_id"].to_numpy(),
            "dst": txns["receiver_id"].to_numpy(),
            "day": day,
            "amount": cents(txns["amount"].to_numpy()),
            "label": txns["label"].to_numpy(dtype=np.int8),
        }
    )
    out = df.groupby(["src", "dst", "day"], sort=True).agg(amount=("amount", "sum"), label=("label", "max")).reset_index()
    out["amount"] = out["amount"] / 100.0
    return out


def build_from_scratch(events, config: WindowConfig, as_of_day: int, node_types: dict | None = None) -> GraphSnapshot:
    """Reference construction: keep every event the retention rule admits at ``as_of_day``."""
    if isinstance(events, pd.DataFrame):
        events = [EdgeEvent(*r) for r in events[["src", "dst", "day", "amount", "label"]].itertuples(index=False)]
    agg: dict[tuple, list] = {}
    for ev in events:
        if ev.day > as_of_day:
            continue
        key = (ev.src, ev.dst, ev.day)
        amt = round(ev.amount * 100)  # half-to-even, same as np.rint
        if key in agg:
            agg[key][0] += amt
            agg[key][1] = max(agg[key][1], ev.label)
        else:
            agg[key] = [amt, ev.label]
    edges, ind, outd, inw, outw = {}, {}, {}, {}, {}
    ages = as_of_day - np.array([k[2] for k in agg], dtype=np.int64)
    labels = np.array([v[1] for v in agg.values()], dtype=np.int64)
    keep, known = config.retained(ages, labels), config.known(ages)
    for i, ((src, dst, day), (amt, label)) in enumerate(agg.items()):
        if not keep[i]:
            continue
        edges[(src, dst, day)] = (amt, label if known[i] else UNKNOWN)
        outd[src] = outd.get(src, 0) + 1
        ind[dst] = ind.get(dst, 0) + 1
        outw[src] = outw.get(src, 0) + amt
        inw[dst] = inw.get(dst, 0) + amt
    # zero-amount edges would leave zero weights in the cache; drop them like the incremental path
    inw = {k: v for k, v in inw.items() if v}
    outw = {k: v for k, v in outw.items() if v}
    node_types = node_types or {}
    nodes = set(ind) | set(outd)
    return GraphSnapshot(as_of_day, edges, {n: node_types.get(n) for n in nodes}, ind, outd, inw, outw)


def replay(events: pd.DataFrame, config: WindowConfig, first_day: int, last_day: int, node_types=None):
    """Yield ``(day, snapshot)`` for every day in [first_day, last_day] using the incremental engine."""
    g = DynamicGraph(config, start_day=first_day, node_types=node_types)
    by_day: dict[int, list] = {}
    for r in events[["src", "dst", "day", "amount", "label"]].itertuples(index=False):
        by_day.setdefault(r[2], []).append(EdgeEvent(*r))
    for day in range(first_day, last_day + 1):
        g.advance_day(day, by_day.get(day, ()))
        yield day, g.snapshot()


# degree features ------------------------------------------------------

DEGREE_STATS = ("mean", "min", "max")


def degree_columns(weighted: bool) -> list[str]:
    p = "deg_w_" if weighted else "deg_"
    cols = [f"{p}in", f"{p}out"]
    for side in ("succ", "pred"):
        for kind in ("in", "out"):
            cols += [f"{p}{side}_{kind}_{s}" for s in DEGREE_STATS]
    return cols


def _neighbour_stats(n: int, owner: np.ndarray, other: np.ndarray, value: np.ndarray):
    """mean/min/max of ``value[other]`` grouped by ``owner`` over distinct pairs; 0 when empty."""
    mean = np.zeros(n)
    lo = np.zeros(n)
    hi = np.zeros(n)
    if len(owner) == 0:
        return mean, lo, hi
    order = np.lexsort((other, owner))
    owner, other = owner[order], other[order]
    v = value[other].astype(float)
    starts = np.r_[0, np.flatnonzero(np.diff(owner)) + 1]
    keys = owner[starts]
    counts = np.diff(np.r_[starts, len(owner)])
    mean[keys] = np.add.reduceat(v, starts) / counts
    lo[keys] = np.minimum.reduceat(v, starts)
    hi[keys] = np.maximum.reduceat(v, starts)
    return mean, lo, hi


def degree_table(n_nodes: int, src: np.ndarray, dst: np.ndarray, amount_cents: np.ndarray) -> dict[str, np.ndarray]:
    """All 28 degree columns for nodes 0..n_nodes-1 of an integer-coded edge list."""
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    indeg = np.bincount(dst, minlength=n_nodes).astype(float)
    outdeg = np.bincount(src, minlength=n_nodes).astype(float)
    inw = np.bincount(dst, weights=np.asarray(amount_cents, dtype=float), minlength=n_nodes) / 100.0
    outw = np.bincount(src, weights=np.asarray(amount_cents, dtype=float), minlength=n_nodes) / 100.0
    if len(src):
        pairs = np.unique(src * n_nodes + dst)
        ps, pd_ = pairs // n_nodes, pairs % n_nodes
    else:
        ps = pd_ = np.zeros(0, dtype=np.int64)
    out = {}
    for weighted, (vin, vout) in ((False, (indeg, outdeg)), (True, (inw, outw))):
        p = "deg_w_" if weighted else "deg_"
        out[f"{p}in"] = vin
        out[f"{p}out"] = vout
        for side, owner, other in (("succ", ps, pd_), ("pred", pd_, ps)):
            for kind, val in (("in", vin), ("out", vout)):
                m, lo, hi = _neighbour_stats(n_nodes, owner, other, val)
                out[f"{p}{side}_{kind}_mean"] = m
                out[f"{p}{side}_{kind}_min"] = lo
                out[f"{p}{side}_{kind}_max"] = hi
    return out


def degree_features(snapshot: GraphSnapshot, target) -> dict[str, float]:
    """28 degree values (unweighted then amount-weighted) for one account; zeros if absent."""
    names = degree_columns(False) + degree_columns(True)
    if target not in snapshot.nodes:
        return dict.fromkeys(names, 0.0)
    src, dst, _, amt = snapshot.arrays()
    codes, uniques = pd.factorize(np.concatenate([src, dst]))
    n = len(uniques)
    table = degree_table(n, codes[: len(src)], codes[len(src):], amt)
    t = int(np.flatnonzero(uniques == target)[0])
    return {k: float(table[k][t]) for k in names}
