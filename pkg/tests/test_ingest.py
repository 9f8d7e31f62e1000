import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from amltriage.ingest import (
    DataError,
    aggregate_daily,
    build_records,
    infer_account_labels,
    parse_transactions,
    temporal_split,
    validate_transactions,
    write_transactions,
)
from oracles import exhaustive_split, naive_aggregate

HEADER = "txn_id,timestamp,sender_id,receiver_id,amount,sender_type,receiver_type,label\n"


def write_csv(tmp_path, rows):
    p = tmp_path / "t.csv"
    p.write_text(HEADER + "".join(r + "\n" for r in rows))
    return p


def txn_frame(rows):
    """rows of (id, day, sender, receiver, amount, label); all accounts internal."""
    return validate_transactions(
        pd.DataFrame(
            {
                "txn_id": [r[0] for r in rows],
                "timestamp": [f"2024-03-{r[1] + 1:02d}T10:00:00Z" for r in rows],
                "sender_id": [r[2] for r in rows],
                "receiver_id": [r[3] for r in rows],
                "amount": [str(r[4]) for r in rows],
                "sender_type": "internal",
                "receiver_type": "internal",
                "label": [str(r[5]) for r in rows],
            }
        )
    )


def test_parse_orders_by_time_then_id(tmp_path):
    p = write_csv(
        tmp_path,
        [
            "t3,2024-01-02T00:00:00Z,A,B,5.00,internal,internal,0",
            "t2,2024-01-01T08:00:00Z,B,C,7.50,internal,external,0",
            "t1,2024-01-01T08:00:00Z,C,A,1.25,external,internal,1",
        ],
    )
    df = parse_transactions(p)
    assert df["txn_id"].tolist() == ["t1", "t2", "t3"]
    assert df["amount"].tolist() == [1.25, 7.5, 5.0]


@pytest.mark.parametrize(
    "row, field",
    [
        ("t1,2024-01-01T00:00:00Z,A,B,-5.0,internal,internal,0", "amount"),
        ("t1,2024-01-01T00:00:00Z,A,B,abc,internal,internal,0", "amount"),
        ("t1,yesterday,A,B,5.0,internal,internal,0", "timestamp"),
        ("t1,2024-01-01T00:00:00Z,A,A,5.0,internal,internal,0", "receiver_id"),
        ("t1,2024-01-01T00:00:00Z,A,B,5.0,external,external,0", "receiver_type"),
        ("t1,2024-01-01T00:00:00Z,A,B,5.0,internal,internal,2", "label"),
    ],
)
def test_bad_row_names_line_and_field(tmp_path, row, field):
    p = write_csv(tmp_path, ["t0,2024-01-01T00:00:00Z,A,B,1.0,internal,internal,0", row])
    with pytest.raises(DataError, match=rf"line 3: field '{field}'"):
        parse_transactions(p)


def test_duplicate_id_rejected(tmp_path):
    p = write_csv(
        tmp_path,
        ["t1,2024-01-01T00:00:00Z,A,B,1.0,internal,internal,0", "t1,2024-01-02T00:00:00Z,A,B,1.0,internal,internal,0"],
    )
    with pytest.raises(DataError, match="duplicate"):
        parse_transactions(p)


def test_conflicting_account_type_rejected(tmp_path):
    p = write_csv(
        tmp_path,
        ["t1,2024-01-01T00:00:00Z,A,B,1.0,internal,internal,0", "t2,2024-01-02T00:00:00Z,B,A,1.0,external,internal,0"],
    )
    with pytest.raises(DataError, match="conflicting"):
        parse_transactions(p)


def test_csv_round_trip(tmp_path, small_alerted):
    p = tmp_path / "x.csv"
    write_transactions(small_alerted, p)
    back = parse_transactions(p)
    pd.testing.assert_frame_equal(back, small_alerted, check_dtype=False)


def test_aggregate_example():
    df = txn_frame([("a", 1, "A", "B", 10, 0), ("b", 1, "A", "C", 20, 0)])
    rec = aggregate_daily(df).set_index("account_id")
    assert rec.loc["A", "total_sent"] == 30
    assert rec.loc["A", "sent_count"] == 2
    assert rec.loc["A", "counterparties"] == frozenset({"B", "C"})
    assert rec.loc["A", "day"] == 0


def test_aggregate_skips_idle_days():
    df = txn_frame([("a", 1, "A", "B", 10, 0), ("b", 3, "A", "B", 10, 0)])
    rec = aggregate_daily(df)
    assert sorted(rec.loc[rec["account_id"] == "A", "day"]) == [0, 2]


def test_aggregate_empty():
    assert len(aggregate_daily(txn_frame([]).iloc[:0])) == 0


def test_aggregate_matches_naive_recount(small_alerted):
    rec = aggregate_daily(small_alerted)
    ref = naive_aggregate(small_alerted)
    assert len(rec) == len(ref)
    for row in rec.itertuples(index=False):
        r = ref[(row.account_id, row.day)]
        assert row.total_sent == pytest.approx(r["total_sent"], rel=1e-12)
        assert row.total_received == pytest.approx(r["total_received"], rel=1e-12)
        assert (row.sent_count, row.received_count) == (r["sent_count"], r["received_count"])
        assert row.counterparties == r["cps"]


def test_amount_round_trip(small_alerted):
    rec = aggregate_daily(small_alerted)
    total = small_alerted["amount"].sum()
    assert rec["total_sent"].sum() == pytest.approx(total, rel=1e-12)
    assert rec["total_received"].sum() == pytest.approx(total, rel=1e-12)


def test_labels_connected_pairs():
    df = txn_frame([("a", 5, "A", "B", 10, 1), ("b", 5, "C", "D", 10, 0), ("c", 6, "A", "D", 3, 0)])
    rec = build_records(df).set_index(["account_id", "day"])["label"]
    assert rec[("A", 0)] == 1 and rec[("B", 0)] == 1
    assert rec[("C", 0)] == 0 and rec[("D", 0)] == 0
    assert rec[("A", 1)] == 0


def test_label_inference_monotone(small_alerted):
    before = build_records(small_alerted)
    flipped = small_alerted.copy()
    legit = np.flatnonzero(flipped["label"].to_numpy() == 0)[:25]
    flipped.loc[legit, "label"] = 1
    after = infer_account_labels(flipped, before.drop(columns="label"))
    assert (after["label"].to_numpy() >= before["label"].to_numpy()).all()


def uniform_records(n_days, per_day):
    return pd.DataFrame({"day": np.repeat(np.arange(1, n_days + 1), per_day)})


def test_split_uniform_ten_days():
    s = temporal_split(uniform_records(10, 100))
    assert s.train_days == (1, 6) and s.val_days == (7, 7) and s.test_days == (8, 10)


def test_split_four_days_minimum():
    s = temporal_split(uniform_records(4, 1))
    assert s.train_days[0] <= s.train_days[1] < s.val_days[0] <= s.val_days[1] < s.test_days[0] <= s.test_days[1]


def test_split_too_few_days():
    with pytest.raises(DataError):
        temporal_split(uniform_records(3, 5))


def test_split_skewed_volume():
    counts = [(d, 1) for d in range(9)] + [(9, 81)]
    recs = pd.DataFrame({"day": np.repeat([d for d, _ in counts], [c for _, c in counts])})
    s = temporal_split(recs)
    assert (s.train_days[1], s.val_days[1]) == exhaustive_split(counts)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(1, 50), min_size=4, max_size=25))
def test_split_matches_exhaustive_search(counts):
    day_counts = list(enumerate(counts))
    recs = pd.DataFrame({"day": np.repeat(np.arange(len(counts)), counts)})
    s = temporal_split(recs)
    assert (s.train_days[1], s.val_days[1]) == exhaustive_split(day_counts)
    # partition of days
    parts = s.assign(np.arange(len(counts)))
    assert set(parts) == {"train", "val", "test"}
    assert s.train_days[0] < s.train_half_boundary <= s.train_days[1]
