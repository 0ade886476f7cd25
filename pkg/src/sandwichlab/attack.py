"""Cross-chain attacker decision model.

Ordering-scenario classification, the noisy-transaction black box
(replay of a pool timeline between the source-chain commit and the
victim's execution), expected profit, and empirical estimation of the
model parameters (q, p, r+, r-) from corpora.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional, Sequence

from .amm import (
    Direction,
    Pool,
    SwapRequest,
    backrun_output,
    execute_swap,
    largest_frontrun_for_min_out,
    quote_output,
)


class MalformedSequence(ValueError):
    """A transaction-label sequence violates its ordering preconditions."""


class EmptyInput(ValueError):
    pass


@dataclass(frozen=True)
class NoiseParams:
    """q: probability of an empty noise window; p: probability of
    non-loss given a non-empty window (None when unobservable)."""

    q: Fraction
    p: Optional[Fraction]

    def __post_init__(self) -> None:
        if not 0 <= self.q <= 1:
            raise ValueError(f"q out of [0,1]: {self.q}")
        if self.p is not None and not 0 <= self.p <= 1:
            raise ValueError(f"p out of [0,1]: {self.p}")


@dataclass(frozen=True)
class ReturnRates:
    r_plus: Fraction
    r_minus: Fraction

    def __post_init__(self) -> None:
        if self.r_plus < 0:
            raise ValueError("r_plus must be >= 0")
        if self.r_minus > 0:
            raise ValueError("r_minus must be <= 0")


class TxLabel(enum.Enum):
    TS = "Ts"
    TA1 = "TA1"
    TA2 = "TA2"
    TV = "Tv"
    TB1 = "TB1"
    TB2 = "TB2"
    NOISE = "Noise"


class OrderingScenario(enum.Enum):
    NO_ATTACK = "no_attack"
    SINGLE_CHAIN_ONLY = "single_chain_only"
    CROSS_CHAIN_NO_BOT = "cross_chain_no_bot"
    CROSS_WINS_BACKRUN_RACE = "cross_wins_backrun_race"
    CROSS_LOSES_BACKRUN_RACE = "cross_loses_backrun_race"
    ATTACKER_SANDWICHED = "attacker_sandwiched"


@dataclass(frozen=True)
class PoolTimeline:
    """Pool snapshot at commit time plus everything that hits the pool
    before the victim: the raw material for replaying what-if attacks.

    ``noisy_swaps`` excludes the attacker's own front-run (the
    hypothesis under test) and the victim itself.
    """

    pool: Pool
    noisy_swaps: tuple[tuple[Direction, int], ...]
    victim: SwapRequest
    victim_tolerance: Fraction


def success_probability(params: NoiseParams) -> Fraction:
    """q + (1-q)*p: the chance the attack ends without a loss."""
    if params.p is None:
        if params.q == 1:
            return Fraction(1)
        raise EmptyInput("p is unobservable but q < 1")
    return params.q + (1 - params.q) * params.p


def expected_profit(
    frontrun_in: int, params: NoiseParams, rates: ReturnRates
) -> Fraction:
    """dx_A1 * ((q + (1-q)p) r+ + (1-q)(1-p) r-), exact."""
    win = success_probability(params)
    return frontrun_in * (win * rates.r_plus + (1 - win) * rates.r_minus)


def _positions(seq: Sequence[TxLabel], label: TxLabel) -> list[int]:
    return [i for i, item in enumerate(seq) if item is label]


def classify_ordering(seq: Sequence[TxLabel]) -> OrderingScenario:
    """Total classification of a well-formed label sequence.

    Noise labels never affect the outcome; only the relative order of
    the attacker's, the bot's, and the victim's transactions matters.
    """
    singles = {}
    for label in (TxLabel.TV, TxLabel.TA1, TxLabel.TA2, TxLabel.TB1, TxLabel.TB2):
        where = _positions(seq, label)
        if len(where) > 1:
            raise MalformedSequence(f"{label.value} appears more than once")
        singles[label] = where[0] if where else None

    ta1, ta2 = singles[TxLabel.TA1], singles[TxLabel.TA2]
    tb1, tb2 = singles[TxLabel.TB1], singles[TxLabel.TB2]
    tv = singles[TxLabel.TV]
    if ta1 is not None and ta2 is not None and ta2 < ta1:
        raise MalformedSequence("TA2 precedes TA1")
    if tb1 is not None and tb2 is not None and tb2 < tb1:
        raise MalformedSequence("TB2 precedes TB1")

    has_a = ta1 is not None or ta2 is not None
    has_b = tb1 is not None or tb2 is not None
    if not has_a and not has_b:
        return OrderingScenario.NO_ATTACK
    if not has_a:
        return OrderingScenario.SINGLE_CHAIN_ONLY
    if not has_b:
        return OrderingScenario.CROSS_CHAIN_NO_BOT
    if ta1 is not None and tb1 is not None and tb2 is not None and tb1 < ta1 < tb2:
        return OrderingScenario.ATTACKER_SANDWICHED
    if ta2 is not None and tb2 is not None:
        if ta2 < tb2:
            return OrderingScenario.CROSS_WINS_BACKRUN_RACE
        return OrderingScenario.CROSS_LOSES_BACKRUN_RACE
    if ta2 is not None:
        return OrderingScenario.CROSS_WINS_BACKRUN_RACE
    if tb2 is not None:
        return OrderingScenario.CROSS_LOSES_BACKRUN_RACE
    _ = tv  # victim position itself never changes the scenario
    return OrderingScenario.CROSS_CHAIN_NO_BOT


def replay_timeline(
    timeline: PoolTimeline, frontrun_in: int
) -> tuple[bool, int]:
    """Replay front-run, noise, victim, back-run on the snapshot.

    The victim respects its min_out (a revert leaves the pool
    untouched); the attacker back-runs unconditionally right after.
    Returns (victim_executed, backrun_out in the victim's input token).
    """
    pool = timeline.pool
    direction = timeline.victim.direction
    frontrun_out = 0
    if frontrun_in:
        frontrun_out = quote_output(pool, direction, frontrun_in)
        pool = pool.after_swap(direction, frontrun_in, frontrun_out)
    for noise_direction, amount in timeline.noisy_swaps:
        outcome = execute_swap(pool, SwapRequest(noise_direction, amount))
        pool = outcome.pool_after
    victim_outcome = execute_swap(pool, timeline.victim)
    pool = victim_outcome.pool_after
    if direction is Direction.X_FOR_Y:
        recovered = backrun_output(pool, frontrun_out)
    else:
        recovered = backrun_output(pool.mirrored(), frontrun_out)
    return (not victim_outcome.reverted, recovered)


def optimal_frontrun_for_timeline(
    timeline: PoolTimeline, theta: Fraction = Fraction(1)
) -> int:
    """The attacker's sizing decision at commit time: it sees only the
    snapshot, never the noise."""
    pool = timeline.pool
    victim = timeline.victim
    if victim.direction is Direction.Y_FOR_X:
        pool = pool.mirrored()
    quote = quote_output(pool, Direction.X_FOR_Y, victim.amount_in)
    if quote <= 0:
        return 0
    effective = _effective_min_out(quote, victim.min_out, theta)
    return largest_frontrun_for_min_out(pool, Direction.X_FOR_Y, victim.amount_in, effective)


def _effective_min_out(quote: int, frozen_min_out: int, theta: Fraction) -> int:
    """Target floor at extraction fraction theta.

    theta = 1 aims exactly at the victim's frozen floor; theta < 1
    leaves a fraction (1 - theta) of the quoted buffer untouched.
    """
    if theta == 1:
        return frozen_min_out
    buffer = quote - frozen_min_out
    scaled = buffer * theta.numerator // theta.denominator
    return quote - scaled


def estimate_noise_params(
    timelines: Sequence[PoolTimeline], theta: Fraction = Fraction(1)
) -> NoiseParams:
    """Empirical (q, p) from a corpus of pool timelines.

    q is the fraction of empty noise windows. p is measured over the
    non-empty windows by replaying the attacker's optimal front-run:
    non-loss means the victim executed and the back-run recovered at
    least the front-run input (ties count as non-loss).
    """
    if not timelines:
        raise EmptyInput("no timelines")
    empty = sum(1 for t in timelines if not t.noisy_swaps)
    q = Fraction(empty, len(timelines))
    noisy = [t for t in timelines if t.noisy_swaps]
    if not noisy:
        return NoiseParams(q=q, p=None)
    non_loss = 0
    for timeline in noisy:
        frontrun_in = optimal_frontrun_for_timeline(timeline, theta)
        executed, recovered = replay_timeline(timeline, frontrun_in)
        if executed and recovered >= frontrun_in:
            non_loss += 1
    return NoiseParams(q=q, p=Fraction(non_loss, len(noisy)))


def estimate_return_rates(
    rates: Iterable[Fraction], percentile: Fraction = Fraction(95)
) -> ReturnRates:
    """Sign-conditioned trimmed means of profit rates.

    Rates are split into non-loss (>= 0) and loss (< 0) classes; within
    each class, values whose magnitude exceeds the given percentile of
    |rate| (nearest rank) are discarded before averaging, excluding
    black-swan outliers. An empty class contributes a zero rate.
    """
    rates = [Fraction(r) for r in rates]
    if not rates:
        raise EmptyInput("no profit rates")
    if not 0 < percentile <= 100:
        raise ValueError("percentile must be in (0, 100]")

    def trimmed_mean(values: list[Fraction]) -> Fraction:
        if not values:
            return Fraction(0)
        magnitudes = sorted(abs(v) for v in values)
        rank = -(-percentile.numerator * len(values) // (percentile.denominator * 100))
        threshold = magnitudes[max(rank, 1) - 1]
        kept = [v for v in values if abs(v) <= threshold]
        return sum(kept, Fraction(0)) / len(kept)

    return ReturnRates(
        r_plus=trimmed_mean([r for r in rates if r >= 0]),
        r_minus=trimmed_mean([r for r in rates if r < 0]),
    )
