"""FeatureFrame: per-(account, day) feature matrix shared by all feature families."""
from __future__ import annotations

from pathlib import Path

import numpy as np
import pandas as pd

from .ingest import DataError

KEY_COLUMNS = ["account_id", "day"]
TAGS = ("raw", "profile", "degree", "gw", "gwd")
_PREFIX_TAG = {"raw_": "raw", "prof_": "profile", "deg_": "degree", "gwd_": "gwd", "gw_": "gw"}


def tag_of(column: str) -> str:
    for prefix, tag in _PREFIX_TAG.items():
        if column.startswith(prefix):
            return tag
    raise ValueError(f"column {column!r} has no known feature prefix")


class FeatureFrame:
    """Rows keyed by (account_id, day); numeric feature columns plus a label.

    Column provenance is carried by the name prefix (``raw_``, ``prof_``,
    ``deg_``, ``gw_``, ``gwd_``).
    """

    def __init__(self, keys: pd.DataFrame, features: pd.DataFrame | None = None, labels=None):
        self.keys = keys[KEY_COLUMNS].reset_index(drop=True)
        self.features = (
            pd.DataFrame(index=self.keys.index) if features is None else features.reset_index(drop=True)
        )
        if len(self.features) != len(self.keys):
            raise ValueError("features and keys differ in length")
        self.labels = None if labels is None else np.asarray(labels, dtype=np.int8)
        self._check()

    def _check(self):
        cols = list(self.features.columns)
        if len(set(cols)) != len(cols):
            dup = sorted({c for c in cols if cols.count(c) > 1})
            raise ValueError(f"duplicate feature columns: {dup}")
        for c in cols:
            tag_of(c)
        if cols:
            vals = self.features.to_numpy(dtype=float)
            if not np.isfinite(vals).all():
                bad = [c for c in cols if not np.isfinite(self.features[c].to_numpy(dtype=float)).all()]
                raise ValueError(f"non-finite values in columns: {bad[:5]}")

    def __len__(self):
        return len(self.keys)

    @property
    def columns(self) -> list[str]:
        return list(self.features.columns)

    @property
    def days(self) -> np.ndarray:
        return self.keys["day"].to_numpy()

    @property
    def y(self) -> np.ndarray:
        if self.labels is None:
            raise ValueError("frame has no labels")
        return self.labels

    def tags(self) -> dict[str, str]:
        return {c: tag_of(c) for c in self.columns}

    def columns_tagged(self, *tags: str) -> list[str]:
        return [c for c in self.columns if tag_of(c) in tags]

    def matrix(self, columns=None) -> np.ndarray:
        cols = self.columns if columns is None else list(columns)
        return np.ascontiguousarray(self.features[cols].to_numpy(dtype=np.float64))

    def select(self, columns) -> "FeatureFrame":
        return FeatureFrame(self.keys, self.features[list(columns)], self.labels)

    def rows(self, mask) -> "FeatureFrame":
        """Subset by boolean mask or integer positions."""
        mask = np.asarray(mask)
        labels = None if self.labels is None else self.labels[mask]
        return FeatureFrame(self.keys.iloc[mask], self.features.iloc[mask], labels)

    def with_columns(self, extra: pd.DataFrame) -> "FeatureFrame":
        """New frame with ``extra`` (row-aligned) appended; same-name columns are replaced."""
        base = self.features.drop(columns=[c for c in extra.columns if c in self.features.columns])
        joined = pd.concat([base, extra.reset_index(drop=True)], axis=1)
        return FeatureFrame(self.keys, joined, self.labels)

    def drop_tagged(self, *tags: str) -> "FeatureFrame":
        return self.select([c for c in self.columns if tag_of(c) not in tags])

    def to_csv(self, path: str | Path) -> None:
        out = pd.concat([self.keys, self.features], axis=1)
        if self.labels is not None:
            out["label"] = self.labels
        out.to_csv(path, index=False, lineterminator="\n", float_format="%.17g")

    @classmethod
    def read_csv(cls, path: str | Path) -> "FeatureFrame":
        df = pd.read_csv(path, dtype={"account_id": str})
        for c in KEY_COLUMNS:
            if c not in df.columns:
                raise DataError(f"{path}: missing column {c!r}")
        labels = df.pop("label").to_numpy() if "label" in df.columns else None
        keys = df[KEY_COLUMNS]
        feats = df.drop(columns=KEY_COLUMNS).astype(np.float64)
        return cls(keys, feats, labels)


def raw_features(records: pd.DataFrame) -> FeatureFrame:
    """The per-record columns used as-is (account type as one binary column)."""
    feats = pd.DataFrame(
        {
            "raw_is_internal": records["account_type"].to_numpy(dtype=float),
            "raw_total_sent": records["total_sent"].to_numpy(dtype=float),
            "raw_total_received": records["total_received"].to_numpy(dtype=float),
            "raw_sent_count": records["sent_count"].to_numpy(dtype=float),
            "raw_received_count": records["received_count"].to_numpy(dtype=float),
            "raw_n_counterparties": records["counterparties"].map(len).to_numpy(dtype=float),
        }
    )
    labels = records["label"].to_numpy() if "label" in records.columns else None
    return FeatureFrame(records[KEY_COLUMNS], feats, labels)
