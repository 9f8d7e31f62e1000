"""Transaction ingestion, daily account aggregation, labels and temporal splits."""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np
import pandas as pd

TXN_COLUMNS = [
    "txn_id",
    "timestamp",
    "sender_id",
    "receiver_id",
    "amount",
    "sender_type",
    "receiver_type",
    "label",
]
ACCOUNT_TYPES = ("internal", "external")

RECORD_COLUMNS = [
    "account_id",
    "day",
    "account_type",
    "total_sent",
    "total_received",
    "sent_count",
    "received_count",
    "min_sent",
    "max_sent",
    "min_received",
    "max_received",
    "counterparties",
]


class DataError(ValueError):
    """Input data violates the documented schema or invariants."""


def _fail(mask: np.ndarray, df: pd.DataFrame, field: str, what: str):
    pos = int(np.flatnonzero(mask)[0])
    line = int(df.index[pos]) + 2  # header is line 1
    raise DataError(f"line {line}: field '{field}': {what} (got {df[field].iloc[pos]!r})")


def validate_transactions(df: pd.DataFrame) -> pd.DataFrame:
    """Coerce a raw string frame into typed transactions, raising on bad rows.

    Row positions in ``df.index`` are taken as zero-based data-row numbers
    when reporting line numbers.
    """
    missing = [c for c in TXN_COLUMNS if c not in df.columns]
    if missing:
        raise DataError(f"missing columns: {', '.join(missing)}")
    df = df[TXN_COLUMNS].copy()

    for col in ("txn_id", "sender_id", "receiver_id"):
        bad = df[col].isna().to_numpy() | (df[col].astype(str).str.strip() == "").to_numpy()
        if bad.any():
            _fail(bad, df, col, "empty identifier")
        df[col] = df[col].astype(str)

    ts = pd.to_datetime(df["timestamp"], utc=True, format="ISO8601", errors="coerce")
    if ts.isna().any():
        _fail(ts.isna().to_numpy(), df, "timestamp", "not an RFC 3339 timestamp")

    amount = pd.to_numeric(df["amount"], errors="coerce")
    if amount.isna().any() or not np.isfinite(amount.to_numpy()).all():
        _fail(~np.isfinite(amount.to_numpy(dtype=float, na_value=np.nan)), df, "amount", "not a decimal number")
    if (amount <= 0).any():
        _fail((amount <= 0).to_numpy(), df, "amount", "amount must be positive")

    for col in ("sender_type", "receiver_type"):
        bad = ~df[col].isin(ACCOUNT_TYPES).to_numpy()
        if bad.any():
            _fail(bad, df, col, "expected 'internal' or 'external'")

    label = pd.to_numeric(df["label"], errors="coerce")
    bad = ~label.isin([0, 1]).to_numpy()
    if bad.any():
        _fail(bad, df, "label", "expected 0 or 1")

    same = (df["sender_id"] == df["receiver_id"]).to_numpy()
    if same.any():
        _fail(same, df, "receiver_id", "sender and receiver are the same account")
    both_ext = ((df["sender_type"] == "external") & (df["receiver_type"] == "external")).to_numpy()
    if both_ext.any():
        _fail(both_ext, df, "receiver_type", "transfer between two external accounts")

    dup = df["txn_id"].duplicated().to_numpy()
    if dup.any():
        _fail(dup, df, "txn_id", "duplicate transaction id")

    df["timestamp"] = ts
    df["amount"] = amount.astype(float)
    df["label"] = label.astype(np.int8)

    types = pd.concat(
        [
            df[["sender_id", "sender_type"]].set_axis(["account_id", "account_type"], axis=1),
            df[["receiver_id", "receiver_type"]].set_axis(["account_id", "account_type"], axis=1),
        ]
    )
    n_types = types.groupby("account_id")["account_type"].nunique()
    if (n_types > 1).any():
        acct = n_types.index[n_types.to_numpy() > 1][0]
        raise DataError(f"account {acct!r} appears with conflicting account types")

    df = df.sort_values(["timestamp", "txn_id"], kind="stable").reset_index(drop=True)
    return df


def parse_transactions(path: str | Path) -> pd.DataFrame:
    """Read a transactions CSV and return rows ordered by (timestamp, txn_id)."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    raw = pd.read_csv(path, dtype=str, keep_default_na=False)
    if list(raw.columns) != TXN_COLUMNS:
        raise DataError(f"{path}: header must be exactly {','.join(TXN_COLUMNS)}")
    raw = raw.replace("", np.nan)
    return validate_transactions(raw)


def write_transactions(txns: pd.DataFrame, path: str | Path) -> None:
    out = txns[TXN_COLUMNS].copy()
    out["timestamp"] = out["timestamp"].dt.strftime("%Y-%m-%dT%H:%M:%SZ")
    out["amount"] = out["amount"].map(lambda a: f"{a:.2f}")
    out.to_csv(path, index=False, lineterminator="\n")


def day_index(txns: pd.DataFrame) -> np.ndarray:
    """Whole days since the calendar date of the earliest transaction."""
    if len(txns) == 0:
        return np.zeros(0, dtype=np.int64)
    dates = txns["timestamp"].dt.floor("D")
    return ((dates - dates.min()).dt.days).to_numpy(dtype=np.int64)


def aggregate_daily(txns: pd.DataFrame) -> pd.DataFrame:
    """One record per (account, day) with at least one transaction.

    Besides totals and counts, per-day min/max transfer amounts are kept so
    windowed min/max over individual transactions stay exact downstream.
    """
    if len(txns) == 0:
        return pd.DataFrame({c: pd.Series(dtype=object) for c in RECORD_COLUMNS})
    day = day_index(txns)
    base = pd.DataFrame(
        {
            "sender_id": txns["sender_id"].to_numpy(),
            "receiver_id": txns["receiver_id"].to_numpy(),
            "amount": txns["amount"].to_numpy(),
            "day": day,
        }
    )
    sent = (
        base.groupby(["sender_id", "day"])["amount"]
        .agg(total_sent="sum", sent_count="size", min_sent="min", max_sent="max")
        .rename_axis(["account_id", "day"])
    )
    received = (
        base.groupby(["receiver_id", "day"])["amount"]
        .agg(total_received="sum", received_count="size", min_received="min", max_received="max")
        .rename_axis(["account_id", "day"])
    )
    rec = sent.join(received, how="outer").fillna(0.0)

    pairs = pd.DataFrame(
        {
            "account_id": np.concatenate([base["sender_id"], base["receiver_id"]]),
            "day": np.concatenate([day, day]),
            "cp": np.concatenate([base["receiver_id"], base["sender_id"]]),
        }
    )
    cps = pairs.groupby(["account_id", "day"])["cp"].agg(lambda s: frozenset(s))
    rec["counterparties"] = cps

    types = pd.concat(
        [
            pd.Series(txns["sender_type"].to_numpy(), index=txns["sender_id"].to_numpy()),
            pd.Series(txns["receiver_type"].to_numpy(), index=txns["receiver_id"].to_numpy()),
        ]
    )
    types = types[~types.index.duplicated()]
    rec = rec.reset_index()
    rec["account_type"] = (rec["account_id"].map(types) == "internal").astype(np.int8)
    for col in ("sent_count", "received_count"):
        rec[col] = rec[col].astype(np.int64)
    rec["day"] = rec["day"].astype(np.int64)
    rec = rec.sort_values(["day", "account_id"], kind="stable").reset_index(drop=True)
    return rec[RECORD_COLUMNS]


def infer_account_labels(txns: pd.DataFrame, records: pd.DataFrame) -> pd.DataFrame:
    """Mark an account-day suspicious iff a suspicious transfer touches it that day."""
    records = records.copy()
    if len(records) == 0:
        records["label"] = pd.Series(dtype=np.int8)
        return records
    day = day_index(txns)
    susp = txns["label"].to_numpy() == 1
    flagged = set(zip(txns["sender_id"].to_numpy()[susp], day[susp]))
    flagged |= set(zip(txns["receiver_id"].to_numpy()[susp], day[susp]))
    keys = zip(records["account_id"].to_numpy(), records["day"].to_numpy())
    records["label"] = np.fromiter((k in flagged for k in keys), dtype=bool, count=len(records)).astype(np.int8)
    return records


def build_records(txns: pd.DataFrame) -> pd.DataFrame:
    """Aggregate and label in one go."""
    return infer_account_labels(txns, aggregate_daily(txns))


def write_records(records: pd.DataFrame, path: str | Path) -> None:
    out = records.copy()
    out["counterparties"] = out["counterparties"].map(lambda s: ";".join(sorted(s)))
    out.to_csv(path, index=False, lineterminator="\n", float_format="%.10g")


@dataclass(frozen=True)
class DatasetSplit:
    """Inclusive day ranges for the three temporal periods.

    ``train_half_boundary`` is the first day of the second training half.
    """

    train_days: tuple[int, int]
    val_days: tuple[int, int]
    test_days: tuple[int, int]
    train_half_boundary: int

    def assign(self, days) -> np.ndarray:
        """Split name per day: 'train', 'val' or 'test'."""
        days = np.asarray(days)
        out = np.full(days.shape, "test", dtype=object)
        out[days <= self.val_days[1]] = "val"
        out[days <= self.train_days[1]] = "train"
        return out

    def mask(self, days, part: str) -> np.ndarray:
        days = np.asarray(days)
        if part == "half1":
            return (days >= self.train_days[0]) & (days < self.train_half_boundary)
        if part == "half2":
            return (days >= self.train_half_boundary) & (days <= self.train_days[1])
        lo, hi = {"train": self.train_days, "val": self.val_days, "test": self.test_days}[part]
        return (days >= lo) & (days <= hi)

    def to_dict(self) -> dict:
        return {
            "train_days": list(self.train_days),
            "val_days": list(self.val_days),
            "test_days": list(self.test_days),
            "train_half_boundary": self.train_half_boundary,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetSplit":
        return cls(tuple(d["train_days"]), tuple(d["val_days"]), tuple(d["test_days"]), int(d["train_half_boundary"]))


def temporal_split(records: pd.DataFrame, fractions=(0.6, 0.1, 0.3)) -> DatasetSplit:
    """Snap train/val/test boundaries to whole days by cumulative event count.

    Boundaries minimise ``|F(train end) - f_train| + |F(val end) - (f_train + f_val)|``
    over distinct record days, where F is the cumulative share of records;
    ties go to the earliest boundaries. Train keeps at least two days so it
    can be halved the same way.
    """
    if len(fractions) != 3 or abs(sum(fractions) - 1.0) > 1e-9 or min(fractions) < 0:
        raise ValueError(f"fractions must be three nonnegative numbers summing to 1, got {fractions}")
    days, counts = np.unique(np.asarray(records["day"], dtype=np.int64), return_counts=True)
    k = len(days)
    if k < 4:
        raise DataError(f"need at least 4 distinct days to split, got {k}")
    cum = np.cumsum(counts).tolist()
    n = cum[-1]
    t1 = Fraction(str(fractions[0]))
    t2 = t1 + Fraction(str(fractions[1]))
    dev1 = [abs(Fraction(c, n) - t1) for c in cum]
    dev2 = [abs(Fraction(c, n) - t2) for c in cum]

    best = None
    best_i = None  # running argmin of dev1 over i in [1, j-1]
    for j in range(2, k - 1):
        i = j - 1
        if best_i is None or dev1[i] < dev1[best_i]:
            best_i = i
        cand = (dev1[best_i] + dev2[j], best_i, j)
        if best is None or cand < best:
            best = cand
    _, i, j = best

    h_best = None
    for h in range(1, i + 1):
        d = abs(Fraction(cum[h - 1], cum[i]) - Fraction(1, 2))
        if h_best is None or d < h_best[0]:
            h_best = (d, h)
    return DatasetSplit(
        train_days=(int(days[0]), int(days[i])),
        val_days=(int(days[i + 1]), int(days[j])),
        test_days=(int(days[j + 1]), int(days[-1])),
        train_half_boundary=int(days[h_best[1]]),
    )
