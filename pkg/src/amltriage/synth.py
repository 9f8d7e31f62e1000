"""Seeded synthetic transfers with planted laundering rings and an emulated rule stage.

The rule stage is a stand-in for a bank's alerting rules: a large-amount
rule, a per-day velocity rule and a repeated-structuring rule. Its amount
threshold is tuned so the alerted subset carries a configured share of
false positives.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, fields, replace

import numpy as np
import pandas as pd
from scipy.special import ndtr, ndtri

from .ingest import TXN_COLUMNS
from .rng import generator

log = logging.getLogger(__name__)

RING_PATTERNS = ("chain", "fan_in", "fan_out")

_BACKGROUND = 1
_RING = 2
_SETUP = 3


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    n_accounts: int = 10_000
    external_fraction: float = 0.3
    n_days: int = 180
    background_rate: float = 0.0556
    amount_log_mean: float = 7.0
    amount_log_sd: float = 1.0
    n_rings: int = 20
    ring_size: int = 5
    ring_pattern: str = "mixed"
    ring_activity_days: int = 10
    target_alert_fp_rate: float = 0.97
    # spread of per-account activity (lognormal sd of the sampling weight)
    activity_sd: float = 1.5
    # ring active days are drawn from a span of this many days
    ring_span_days: int = 40
    # share of ring transfers placed just under the amount threshold
    structuring_share: float = 0.15
    start_date: str = "2023-01-01"

    def __post_init__(self):
        if self.n_accounts < 2:
            raise ValueError("n_accounts must be at least 2")
        if not 0.0 <= self.external_fraction < 1.0:
            raise ValueError("external_fraction must be in [0, 1)")
        if self.n_days < 1:
            raise ValueError("n_days must be positive")
        if self.background_rate < 0:
            raise ValueError("background_rate must be nonnegative")
        if self.amount_log_sd <= 0:
            raise ValueError("amount_log_sd must be positive")
        if self.ring_pattern not in RING_PATTERNS + ("mixed",):
            raise ValueError(f"ring_pattern must be one of {RING_PATTERNS + ('mixed',)}")
        if self.n_rings < 0:
            raise ValueError("n_rings must be nonnegative")
        if self.n_rings and self.ring_size > self.n_accounts:
            raise ValueError(f"ring_size {self.ring_size} exceeds n_accounts {self.n_accounts}")
        if self.n_rings and self.ring_size < 2:
            raise ValueError("ring_size must be at least 2")
        if not 0.0 <= self.target_alert_fp_rate <= 1.0:
            raise ValueError("target_alert_fp_rate must be in [0, 1]")
        if self.n_rings and self.ring_activity_days > min(self.ring_span_days, self.n_days):
            raise ValueError("ring_activity_days exceeds the ring span")

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        known = {f.name for f in fields(cls)}
        for key in d:
            if key not in known:
                raise KeyError(f"unknown synth config key: {key!r}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def n_internal(self) -> int:
        return self.n_accounts - int(round(self.external_fraction * self.n_accounts))


@dataclass(frozen=True)
class RuleSet:
    """Alerting rules. A rule is disabled by setting it to ``None``."""

    amount_threshold: float | None = None
    velocity_threshold: int | None = None
    structuring_band: tuple[float, float] | None = None

    def __post_init__(self):
        if self.amount_threshold is None and self.velocity_threshold is None and self.structuring_band is None:
            raise ValueError("at least one rule must be enabled")


def _pattern(config: SynthConfig, ring: int) -> str:
    if config.ring_pattern == "mixed":
        return RING_PATTERNS[ring % len(RING_PATTERNS)]
    return config.ring_pattern


def ring_txns_per_day(config: SynthConfig) -> int:
    # every pattern moves money along ring_size - 1 edges per active day
    return config.ring_size - 1


def nominal_threshold(config: SynthConfig) -> float:
    """Amount threshold that would alone give the target false-positive share."""
    n_bg = config.background_rate * config.n_accounts * config.n_days
    n_susp = config.n_rings * config.ring_activity_days * ring_txns_per_day(config)
    fp = config.target_alert_fp_rate
    if n_bg <= 0 or n_susp == 0 or fp >= 1.0:
        return float(np.exp(config.amount_log_mean + 2 * config.amount_log_sd))
    wanted = n_susp * fp / (1.0 - fp)
    q = float(np.clip(1.0 - wanted / n_bg, 1e-6, 1 - 1e-6))
    return float(np.exp(config.amount_log_mean + config.amount_log_sd * ndtri(q)))


def default_rules(config: SynthConfig) -> RuleSet:
    t0 = round(nominal_threshold(config), 2)
    return RuleSet(amount_threshold=t0, velocity_threshold=8, structuring_band=(round(0.8 * t0, 2), t0))


def _accounts(config: SynthConfig):
    rng = generator(config.seed, _SETUP, 0, 0)
    n_ext = config.n_accounts - config.n_internal
    is_internal = np.ones(config.n_accounts, dtype=bool)
    is_internal[rng.choice(config.n_accounts, size=n_ext, replace=False)] = False
    weight = rng.lognormal(0.0, config.activity_sd, size=config.n_accounts)
    weight /= weight.sum()
    internal = np.flatnonzero(is_internal)
    need = config.n_rings * config.ring_size
    if need > len(internal):
        raise ValueError(f"{config.n_rings} rings of size {config.ring_size} need {need} internal accounts, have {len(internal)}")
    # members are drawn like ordinary busy accounts so activity alone does not give them away
    p = weight[internal] / weight[internal].sum()
    members = rng.choice(internal, size=need, replace=False, p=p).reshape(config.n_rings, config.ring_size)
    return is_internal, weight, members


def _ring_amounts(config: SynthConfig, rng: np.random.Generator, n: int) -> np.ndarray:
    # Mostly large transfers that look like the legitimate alerted tail,
    # plus a share kept just under the threshold (structuring).
    t0 = nominal_threshold(config)
    z0 = (np.log(t0) - config.amount_log_mean) / config.amount_log_sd
    u = rng.uniform(ndtr(z0), 1.0, size=n)
    big = np.exp(config.amount_log_mean + config.amount_log_sd * ndtri(np.minimum(u, 1 - 1e-12)))
    small = rng.uniform(0.8 * t0, t0, size=n)
    struct = rng.uniform(size=n) < config.structuring_share
    return np.round(np.where(struct, small, big), 2)


def _background_day(config, day, is_internal, weight, internal):
    rng = generator(config.seed, _BACKGROUND, 0, day)
    n = rng.poisson(config.background_rate * config.n_accounts)
    src = rng.choice(config.n_accounts, size=n, p=weight)
    dst = rng.choice(config.n_accounts, size=n, p=weight)
    fix = rng.integers(0, len(internal), size=n)
    bad = (src == dst) | (~is_internal[src] & ~is_internal[dst])
    alt = internal[fix]
    alt = np.where(alt == src, internal[(fix + 1) % len(internal)], alt)
    dst = np.where(bad, alt, dst)
    amount = np.round(rng.lognormal(config.amount_log_mean, config.amount_log_sd, size=n), 2)
    amount = np.maximum(amount, 0.01)
    secs = rng.integers(0, 86_400, size=n)
    return src, dst, amount, secs, np.zeros(n, dtype=np.int8)


def _ring_schedule(config: SynthConfig) -> list[list[int]]:
    out = []
    for r in range(config.n_rings):
        rng = generator(config.seed, _RING, r, -1)
        span = min(config.ring_span_days, config.n_days)
        start = int(rng.integers(0, config.n_days - span + 1))
        days = np.sort(rng.choice(span, size=config.ring_activity_days, replace=False)) + start
        out.append(days.tolist())
    return out


def _ring_day(config, ring, day, members):
    rng = generator(config.seed, _RING, ring, day)
    m = members[ring]
    pattern = _pattern(config, ring)
    if pattern == "chain":
        src, dst = m[:-1], m[1:]
    elif pattern == "fan_in":
        src, dst = m[1:], np.full(len(m) - 1, m[0])
    else:
        src, dst = np.full(len(m) - 1, m[0]), m[1:]
    n = len(src)
    amount = _ring_amounts(config, rng, n)
    secs = rng.integers(0, 86_400, size=n)
    return src, dst, amount, secs, np.ones(n, dtype=np.int8)


def generate_dataset(config: SynthConfig) -> pd.DataFrame:
    """All transfers (before alerting) as a transactions frame.

    Output is a pure function of ``config``; days are generated from
    independent keyed streams and concatenated in day order.
    """
    is_internal, weight, members = _accounts(config)
    internal = np.flatnonzero(is_internal)
    schedule = _ring_schedule(config)
    active: dict[int, list[int]] = {}
    for r, days in enumerate(schedule):
        for d in days:
            active.setdefault(d, []).append(r)

    parts = []
    for day in range(config.n_days):
        chunks = [_background_day(config, day, is_internal, weight, internal)]
        chunks += [_ring_day(config, r, day, members) for r in active.get(day, [])]
        src, dst, amount, secs, label = (np.concatenate(x) for x in zip(*chunks))
        parts.append((np.full(len(src), day), src, dst, amount, secs, label))
    day, src, dst, amount, secs, label = (np.concatenate(x) for x in zip(*parts))

    seq = np.zeros(len(day), dtype=np.int64)
    if len(day):
        starts = np.r_[0, np.flatnonzero(np.diff(day)) + 1]
        seq = np.arange(len(day)) - np.repeat(starts, np.diff(np.r_[starts, len(day)]))
    width = max(5, len(str(config.n_accounts - 1)))
    ids = np.array([f"A{i:0{width}d}" for i in range(config.n_accounts)], dtype=object)
    kind = np.where(is_internal, "internal", "external").astype(object)
    start = pd.Timestamp(config.start_date, tz="UTC")
    df = pd.DataFrame(
        {
            "txn_id": [f"T{d:04d}{s:06d}" for d, s in zip(day, seq)],
            "timestamp": start + pd.to_timedelta(day, unit="D") + pd.to_timedelta(secs, unit="s"),
            "sender_id": ids[src],
            "receiver_id": ids[dst],
            "amount": amount.astype(float),
            "sender_type": kind[src],
            "receiver_type": kind[dst],
            "label": label.astype(np.int8),
        }
    )
    df = df.sort_values(["timestamp", "txn_id"], kind="stable").reset_index(drop=True)
    return df[TXN_COLUMNS]


def rule_hits(txns: pd.DataFrame, rules: RuleSet) -> np.ndarray:
    """Boolean mask of transfers matching at least one rule (labels ignored)."""
    hit = np.zeros(len(txns), dtype=bool)
    if len(txns) == 0:
        return hit
    amount = txns["amount"].to_numpy()
    if rules.amount_threshold is not None:
        hit |= amount >= rules.amount_threshold
    day = txns["timestamp"].dt.floor("D")
    if rules.velocity_threshold is not None:
        n = txns.groupby([txns["sender_id"], day])["txn_id"].transform("size").to_numpy()
        hit |= n > rules.velocity_threshold
    if rules.structuring_band is not None:
        lo, hi = rules.structuring_band
        in_band = (amount >= lo) & (amount < hi)
        reps = pd.Series(in_band).groupby([txns["sender_id"].to_numpy(), day.to_numpy()]).transform("sum").to_numpy()
        hit |= in_band & (reps >= 2)
    return hit


def fp_share(txns: pd.DataFrame, rules: RuleSet) -> float:
    alerted = rule_hits(txns, rules) | (txns["label"].to_numpy() == 1)
    if not alerted.any():
        return float("nan")
    return float((txns["label"].to_numpy()[alerted] == 0).mean())


def tune_amount_threshold(
    txns: pd.DataFrame, rules: RuleSet, target_fp_rate: float, tol: float = 0.02, max_iter: int = 60
) -> RuleSet:
    """Bisect the amount threshold (in log space) toward a target false-positive share."""
    amount = txns["amount"].to_numpy()
    lo, hi = np.log(max(amount.min(), 0.01)) - 1.0, np.log(amount.max()) + 1.0
    best = None
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        cand = replace(rules, amount_threshold=round(float(np.exp(mid)), 2))
        fp = fp_share(txns, cand)
        if best is None or abs(fp - target_fp_rate) < abs(best[0] - target_fp_rate):
            best = (fp, cand)
        if abs(fp - target_fp_rate) <= tol / 4:
            break
        # higher threshold -> fewer legitimate alerts -> lower fp share
        if fp > target_fp_rate:
            lo = mid
        else:
            hi = mid
    fp, cand = best
    if not abs(fp - target_fp_rate) <= tol:
        raise ValueError(f"could not reach false-positive share {target_fp_rate:.3f}; best achieved {fp:.4f}")
    log.info("tuned amount threshold %.2f -> fp share %.4f", cand.amount_threshold, fp)
    return cand


def apply_rules(txns: pd.DataFrame, rules: RuleSet, target_fp_rate: float | None = None) -> pd.DataFrame:
    """Alerted subset: rule matches plus every suspicious transfer.

    With ``target_fp_rate`` set, the amount threshold is tuned first.
    """
    if target_fp_rate is not None:
        rules = tune_amount_threshold(txns, rules, target_fp_rate)
    keep = rule_hits(txns, rules) | (txns["label"].to_numpy() == 1)
    out = txns[keep].reset_index(drop=True)
    out.attrs["rules"] = rules
    return out


def synthesize(config: SynthConfig, rules: RuleSet | None = None) -> tuple[pd.DataFrame, RuleSet]:
    """Generate, tune rules and return the alerted subset with the rules used."""
    txns = generate_dataset(config)
    rules = rules or default_rules(config)
    target = config.target_alert_fp_rate if txns["label"].any() else None
    alerted = apply_rules(txns, rules, target)
    return alerted, alerted.attrs["rules"]
