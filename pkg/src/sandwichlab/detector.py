"""Sandwich-pair detection over exported swap logs.

Implements the heuristic matching over a cross-chain swap record and
the per-pool swap logs of its destination chain: same-direction front
candidates between the source commit and the victim, opposite-direction
back candidates in a bounded block window after the victim, amount-band
matching with receive-address priority, and single- vs cross-chain
classification. A direct, unoptimized reference implementation is kept
alongside the production matcher so the two can be cross-checked.
"""

from __future__ import annotations

import csv
import enum
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field, replace
from decimal import Decimal
from fractions import Fraction
from typing import Iterable, Mapping, Optional, Sequence

from .amm import Direction

DEFAULT_STABLECOINS = frozenset(
    {"USDT", "USDC", "BUSD", "DAI", "TUSD", "USDD", "FRAX", "USDP", "GUSD", "LUSD"}
)


class MissingPrice(KeyError):
    pass


class Classification(enum.Enum):
    CROSS_CHAIN = "cross_chain"
    SINGLE_CHAIN = "single_chain"


@dataclass(frozen=True)
class SwapLog:
    """One decoded swap event; (block_number, log_index) totally orders
    logs within a chain."""

    tx_hash: str
    block_number: int
    log_index: int
    pool_address: str
    chain_id: int
    direction: Direction
    token_in_amount: int
    token_out_amount: int
    sender: str
    recipient: str
    gas_price: int
    timestamp: float

    def position(self) -> tuple[int, int]:
        return (self.block_number, self.log_index)


@dataclass(frozen=True)
class VictimHop:
    pool_address: str
    token_in: str
    token_out: str
    direction: Direction
    amount_in: int
    amount_out: int
    min_return: int


@dataclass(frozen=True)
class CrossChainTx:
    """One bridged swap: the source commit and the destination execution."""

    record_id: str
    src_tx_hash: str
    src_chain_id: int
    src_block_number: int
    src_timestamp: float
    dst_tx_hash: str
    dst_chain_id: int
    dst_block_number: int
    dst_timestamp: float
    dst_gas_price: int
    hops: tuple[VictimHop, ...]

    def __post_init__(self) -> None:
        if not self.hops:
            raise ValueError("CrossChainTx needs at least one pool hop")
        if self.dst_timestamp < self.src_timestamp:
            raise ValueError("destination precedes source")


@dataclass(frozen=True)
class DetectionConfig:
    num_blocks: int = 100
    band_low: Fraction = Fraction(9, 10)
    band_high: Fraction = Fraction(11, 10)
    max_interval: float = 100.0
    stablecoin_set: frozenset[str] = DEFAULT_STABLECOINS

    def __post_init__(self) -> None:
        if self.num_blocks < 1:
            raise ValueError("num_blocks must be >= 1")
        if not self.band_low < 1 < self.band_high:
            raise ValueError("amount band must straddle 1")

    def in_band(self, back_in: int, front_out: int) -> bool:
        """back_in / front_out within [band_low, band_high], exact."""
        if front_out <= 0:
            return False
        lo, hi = self.band_low, self.band_high
        return (
            back_in * lo.denominator >= front_out * lo.numerator
            and back_in * hi.denominator <= front_out * hi.numerator
        )


@dataclass(frozen=True)
class SandwichPair:
    record_id: str
    pool_address: str
    front: SwapLog
    victim: SwapLog
    back: SwapLog
    classification: Classification
    token_in: str
    front_window_start_block: int
    profit_token: Optional[int] = None
    profit_rate: Optional[Fraction] = None
    profit_usd: Optional[Decimal] = None


@dataclass(frozen=True)
class PriceTable:
    prices: Mapping[str, Decimal]
    decimals: Mapping[str, int]
    snapshot_date: str = ""

    def usd(self, token: str, amount: int) -> Decimal:
        if token not in self.prices:
            raise MissingPrice(token)
        scale = Decimal(10) ** self.decimals.get(token, 18)
        return Decimal(amount) / scale * self.prices[token]

    @classmethod
    def from_csv(cls, path: str) -> "PriceTable":
        prices: dict[str, Decimal] = {}
        decimals: dict[str, int] = {}
        snapshot = ""
        with open(path, newline="") as handle:
            for row in csv.DictReader(handle):
                token = row["token_id"]
                prices[token] = Decimal(row["usd_price"])
                decimals[token] = int(row.get("decimals") or 18)
                snapshot = row.get("snapshot_date", "") or snapshot
        return cls(prices=prices, decimals=decimals, snapshot_date=snapshot)


def _is_stable_hop(hop: VictimHop, stable: frozenset[str]) -> bool:
    return hop.token_in.upper() in stable and hop.token_out.upper() in stable


def prefilter(
    records: Iterable[CrossChainTx], cfg: DetectionConfig
) -> list[CrossChainTx]:
    """Drop stable-to-stable-only records and stale relays.

    The interval bound is inclusive: exactly max_interval seconds
    between source commit and destination execution still passes.
    """
    kept = []
    for record in records:
        if record.dst_timestamp - record.src_timestamp > cfg.max_interval:
            continue
        if all(_is_stable_hop(hop, cfg.stablecoin_set) for hop in record.hops):
            continue
        kept.append(record)
    return kept


def _front_window_start(logs: Sequence[SwapLog], src_timestamp: float) -> int:
    """Earliest destination block eligible to hold a front-run: the
    first block (seen in these logs) timestamped at or after the source
    commit."""
    index = bisect_left(logs, src_timestamp, key=lambda log: log.timestamp)
    if index < len(logs):
        return logs[index].block_number
    return 0


def _find_victim(
    logs: Sequence[SwapLog], tx_hash: str, block_hint: int
) -> Optional[SwapLog]:
    lo = bisect_left(logs, block_hint, key=lambda log: log.block_number)
    hi = bisect_right(logs, block_hint, key=lambda log: log.block_number)
    for log in logs[lo:hi]:
        if log.tx_hash == tx_hash:
            return log
    # Hinted block missed (foreign export): fall back to a full scan.
    for log in logs:
        if log.tx_hash == tx_hash:
            return log
    return None


def detect_pairs(
    record: CrossChainTx,
    logs_by_pool: Mapping[str, Sequence[SwapLog]],
    cfg: DetectionConfig,
) -> list[SandwichPair]:
    """Match (front, victim, back) triples for one cross-chain record.

    Per pool hop: fronts are same-direction swaps timestamped at or
    after the source commit and positioned before the victim's log;
    backs are opposite-direction swaps positioned after the victim,
    within num_blocks blocks. Fronts are scanned in chain order; each
    takes the earliest amount-band back candidate, with candidates
    whose receive address matches the front taking priority. Every back
    is consumed at most once.

    Requires logs sorted by (block_number, log_index) with timestamps
    nondecreasing along that order; candidate windows are then located
    by bisection so large corpora stay cheap.
    """
    pairs: list[SandwichPair] = []
    for hop in record.hops:
        logs = logs_by_pool.get(hop.pool_address, ())
        victim = _find_victim(logs, record.dst_tx_hash, record.dst_block_number)
        if victim is None:
            continue
        direction = victim.direction
        window_start = _front_window_start(logs, record.src_timestamp)
        start = bisect_left(logs, record.src_timestamp, key=lambda log: log.timestamp)
        victim_index = bisect_left(logs, victim.position(), key=SwapLog.position)
        back_end = bisect_right(
            logs,
            victim.block_number + cfg.num_blocks,
            key=lambda log: log.block_number,
        )
        fronts = [
            log for log in logs[start:victim_index] if log.direction is direction
        ]
        backs = [
            log
            for log in logs[victim_index + 1 : back_end]
            if log.direction is direction.opposite()
        ]
        consumed: set[tuple[int, int]] = set()
        for front in sorted(fronts, key=SwapLog.position):
            chosen = None
            for back in backs:
                if back.position() in consumed:
                    continue
                if not cfg.in_band(back.token_in_amount, front.token_out_amount):
                    continue
                if back.recipient == front.recipient:
                    chosen = back
                    break
                if chosen is None:
                    chosen = back
            if chosen is None:
                continue
            consumed.add(chosen.position())
            classification = (
                Classification.SINGLE_CHAIN
                if front.block_number == victim.block_number
                else Classification.CROSS_CHAIN
            )
            pairs.append(
                SandwichPair(
                    record_id=record.record_id,
                    pool_address=hop.pool_address,
                    front=front,
                    victim=victim,
                    back=chosen,
                    classification=classification,
                    token_in=hop.token_in,
                    front_window_start_block=window_start,
                )
            )
    pairs.sort(key=lambda p: (p.victim.position(), p.front.position()))
    return pairs


def reference_detect_pairs(
    record: CrossChainTx,
    logs_by_pool: Mapping[str, Sequence[SwapLog]],
    cfg: DetectionConfig,
) -> list[SandwichPair]:
    """Unoptimized reference matcher: literal list surgery, rebuilt
    candidate lists per front. Must produce exactly the same pairs as
    detect_pairs; kept for cross-checking, not for large corpora."""
    pairs: list[SandwichPair] = []
    for hop in record.hops:
        logs = list(logs_by_pool.get(hop.pool_address, ()))
        logs.sort(key=SwapLog.position)
        victim = None
        for log in logs:
            if log.tx_hash == record.dst_tx_hash:
                victim = log
                break
        if victim is None:
            continue
        window_start = _front_window_start(logs, record.src_timestamp)
        front_logs = []
        back_logs = []
        for log in logs:
            if (
                log.direction is victim.direction
                and log.timestamp >= record.src_timestamp
                and log.position() < victim.position()
            ):
                front_logs.append(log)
            if (
                log.direction is victim.direction.opposite()
                and log.position() > victim.position()
                and log.block_number <= victim.block_number + cfg.num_blocks
            ):
                back_logs.append(log)
        for front in front_logs:
            similar = []
            for back in back_logs:
                ratio = Fraction(back.token_in_amount, max(front.token_out_amount, 1))
                if cfg.band_low <= ratio <= cfg.band_high and front.token_out_amount > 0:
                    similar.append(back)
            target = None
            for back in similar:
                if back.recipient == front.recipient:
                    target = back
                    break
            if target is None and similar:
                target = similar[0]
            if target is None:
                continue
            back_logs.remove(target)
            pairs.append(
                SandwichPair(
                    record_id=record.record_id,
                    pool_address=hop.pool_address,
                    front=front,
                    victim=victim,
                    back=target,
                    classification=(
                        Classification.SINGLE_CHAIN
                        if front.block_number == victim.block_number
                        else Classification.CROSS_CHAIN
                    ),
                    token_in=hop.token_in,
                    front_window_start_block=window_start,
                )
            )
    pairs.sort(key=lambda p: (p.victim.position(), p.front.position()))
    return pairs


def classify_and_price(
    pairs: Sequence[SandwichPair], prices: PriceTable
) -> tuple[list[SandwichPair], set[str]]:
    """Fill in token profit, profit rate, and USD profit.

    Gas costs are deliberately excluded. Pairs whose input token is not
    in the price table are retained with profit_usd unknown; the set of
    missing tokens is returned alongside.
    """
    enriched = []
    missing: set[str] = set()
    for pair in pairs:
        profit = pair.back.token_out_amount - pair.front.token_in_amount
        rate = Fraction(profit, pair.front.token_in_amount)
        try:
            usd = prices.usd(pair.token_in, profit)
        except MissingPrice:
            missing.add(pair.token_in)
            usd = None
        enriched.append(
            replace(pair, profit_token=profit, profit_rate=rate, profit_usd=usd)
        )
    return enriched, missing


def _histogram(values: Iterable[float], bins: int = 10) -> list[int]:
    counts = [0] * bins
    for value in values:
        index = min(int(max(value, 0.0) * bins), bins - 1)
        counts[index] += 1
    return counts


@dataclass
class Report:
    total_pairs: int = 0
    single_chain_pairs: int = 0
    cross_chain_pairs: int = 0
    total_profit_usd: Decimal = Decimal(0)
    single_chain_profit_usd: Decimal = Decimal(0)
    cross_chain_profit_usd: Decimal = Decimal(0)
    max_single_profit_usd: Decimal = Decimal(0)
    chain_pairs: dict = field(default_factory=dict)
    pool_counts: dict = field(default_factory=dict)
    front_position_hist: list = field(default_factory=list)
    back_position_hist: list = field(default_factory=list)
    front_position_hist_profitable: list = field(default_factory=list)
    back_position_hist_profitable: list = field(default_factory=list)
    front_gas_ratio_lt_1: float = 0.0
    zero_gas_front_runs: int = 0
    back_gas_delta_buckets: dict = field(default_factory=dict)


def aggregate(
    pairs: Sequence[SandwichPair],
    records: Sequence[CrossChainTx],
    num_blocks: int = 100,
) -> Report:
    """Corpus-level rollup: per chain-pair profit, per-pool attack
    counts, relative-position histograms, gas-price statistics, and the
    single- vs cross-chain split. Cross-chain profit totals exclude
    same-block (single-chain-classified) pairs."""
    report = Report()
    records_by_id = {record.record_id: record for record in records}

    front_rel: list[float] = []
    back_rel: list[float] = []
    front_rel_profit: list[float] = []
    back_rel_profit: list[float] = []
    gas_lt_1 = 0
    delta_buckets = {"<0": 0, "[0,1)": 0, "[1,10)": 0, ">=10": 0}
    gwei = 10**9

    for pair in pairs:
        report.total_pairs += 1
        single = pair.classification is Classification.SINGLE_CHAIN
        if single:
            report.single_chain_pairs += 1
        else:
            report.cross_chain_pairs += 1
        usd = pair.profit_usd
        if usd is not None:
            report.total_profit_usd += usd
            if single:
                report.single_chain_profit_usd += usd
            else:
                report.cross_chain_profit_usd += usd
            if usd > report.max_single_profit_usd:
                report.max_single_profit_usd = usd
            record = records_by_id.get(pair.record_id)
            if record is not None:
                key = f"{record.src_chain_id}->{record.dst_chain_id}"
                bucket = report.chain_pairs.setdefault(
                    key, {"pairs": 0, "profit_usd": Decimal(0)}
                )
                bucket["pairs"] += 1
                bucket["profit_usd"] += usd

        report.pool_counts[pair.pool_address] = (
            report.pool_counts.get(pair.pool_address, 0) + 1
        )

        span = pair.victim.block_number - pair.front_window_start_block
        if span > 0:
            rel = (pair.front.block_number - pair.front_window_start_block) / span
            front_rel.append(rel)
            if usd is not None and usd > 0:
                front_rel_profit.append(rel)
        rel_back = (pair.back.block_number - pair.victim.block_number) / num_blocks
        back_rel.append(rel_back)
        if usd is not None and usd > 0:
            back_rel_profit.append(rel_back)

        if pair.front.gas_price < pair.victim.gas_price:
            gas_lt_1 += 1
        if pair.front.gas_price == 0:
            report.zero_gas_front_runs += 1
        delta = pair.victim.gas_price - pair.back.gas_price
        if delta < 0:
            delta_buckets["<0"] += 1
        elif delta < gwei:
            delta_buckets["[0,1)"] += 1
        elif delta < 10 * gwei:
            delta_buckets["[1,10)"] += 1
        else:
            delta_buckets[">=10"] += 1

    report.front_position_hist = _histogram(front_rel)
    report.back_position_hist = _histogram(back_rel)
    report.front_position_hist_profitable = _histogram(front_rel_profit)
    report.back_position_hist_profitable = _histogram(back_rel_profit)
    report.front_gas_ratio_lt_1 = gas_lt_1 / report.total_pairs if pairs else 0.0
    report.back_gas_delta_buckets = delta_buckets
    report.pool_counts = dict(
        sorted(report.pool_counts.items(), key=lambda kv: -kv[1])
    )
    return report
