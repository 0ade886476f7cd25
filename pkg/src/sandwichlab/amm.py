"""Exact constant-product swap math and sandwich construction.

All pool math runs on arbitrary-precision integers (token base units,
capped at 256 bits like the EVM) with a single floor per quote, so that
replays are bit-exact and the simulator and the detector agree on every
amount. Rates (fees, slippage tolerances, extraction fractions) are
exact rationals.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from fractions import Fraction

MAX_AMOUNT = 2**256 - 1


class AmmError(Exception):
    pass


class ZeroInput(AmmError):
    """Swap input amount was zero."""


class Overflow(AmmError):
    """An amount or updated reserve exceeded 256 bits."""


class Direction(enum.Enum):
    X_FOR_Y = "x_for_y"
    Y_FOR_X = "y_for_x"

    def opposite(self) -> "Direction":
        return Direction.Y_FOR_X if self is Direction.X_FOR_Y else Direction.X_FOR_Y


class PoolProtocol(enum.Enum):
    UNISWAP_V2 = "uniswap_v2"
    UNISWAP_V3 = "uniswap_v3"
    PANCAKE_V2 = "pancake_v2"
    PANCAKE_V3 = "pancake_v3"
    OTHER = "other"


def _check_amount(name: str, value: int, minimum: int = 0) -> None:
    if not isinstance(value, int) or isinstance(value, bool):
        raise TypeError(f"{name} must be an int, got {type(value).__name__}")
    if value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    if value > MAX_AMOUNT:
        raise Overflow(f"{name} exceeds 256 bits")


def _check_rate(name: str, value: Fraction, lo_open: bool = True, hi_closed: bool = False) -> None:
    lo_ok = value > 0 if lo_open else value >= 0
    hi_ok = value <= 1 if hi_closed else value < 1
    if not (lo_ok and hi_ok):
        raise ValueError(f"{name} out of range: {value}")


def _ceil_div(n: int, d: int) -> int:
    return -(-n // d)


@dataclass(frozen=True)
class Pool:
    """Constant-product pool state.

    Concentrated-liquidity (V3-style) pools are treated as CPMMs at
    their current in-range liquidity; tick crossings are out of scope.
    """

    token_x: str
    token_y: str
    reserve_x: int
    reserve_y: int
    fee: Fraction = Fraction(0)
    address: str = "0x" + "00" * 20
    protocol: PoolProtocol = PoolProtocol.OTHER

    def __post_init__(self) -> None:
        _check_amount("reserve_x", self.reserve_x, minimum=1)
        _check_amount("reserve_y", self.reserve_y, minimum=1)
        if not isinstance(self.fee, Fraction):
            object.__setattr__(self, "fee", Fraction(self.fee))
        _check_rate("fee", self.fee, lo_open=False)

    @property
    def k(self) -> int:
        return self.reserve_x * self.reserve_y

    def reserves(self, direction: Direction) -> tuple[int, int]:
        """(reserve_in, reserve_out) for the given swap direction."""
        if direction is Direction.X_FOR_Y:
            return self.reserve_x, self.reserve_y
        return self.reserve_y, self.reserve_x

    def after_swap(self, direction: Direction, amount_in: int, amount_out: int) -> "Pool":
        if direction is Direction.X_FOR_Y:
            return replace(
                self,
                reserve_x=self.reserve_x + amount_in,
                reserve_y=self.reserve_y - amount_out,
            )
        return replace(
            self,
            reserve_x=self.reserve_x - amount_out,
            reserve_y=self.reserve_y + amount_in,
        )

    def mirrored(self) -> "Pool":
        """The same pool with token roles swapped."""
        return replace(
            self,
            token_x=self.token_y,
            token_y=self.token_x,
            reserve_x=self.reserve_y,
            reserve_y=self.reserve_x,
        )


@dataclass(frozen=True)
class SwapRequest:
    direction: Direction
    amount_in: int
    min_out: int = 0
    sender: str = "0x" + "00" * 20
    recipient: str = "0x" + "00" * 20

    def __post_init__(self) -> None:
        _check_amount("amount_in", self.amount_in, minimum=1)
        _check_amount("min_out", self.min_out)


@dataclass(frozen=True)
class SwapOutcome:
    amount_in: int
    amount_out: int
    pool_after: Pool
    reverted: bool


@dataclass(frozen=True)
class SandwichPlan:
    """A fully replayed (front-run, victim, back-run) construction.

    ``profit`` is denominated in the victim's input token and may be
    negative (it is exactly ``backrun_out - frontrun_in - gas_cost``).
    """

    frontrun_in: int
    frontrun_out: int
    expected_victim_out: int
    backrun_out: int
    gas_cost: int
    profit: int


def quote_output(pool: Pool, direction: Direction, amount_in: int) -> int:
    """Exact swap quote: floor(out * (1-f) * dx / (in + (1-f) * dx)).

    Computed as a single rational expression with one final floor.
    """
    if amount_in == 0:
        raise ZeroInput("swap amount_in is zero")
    _check_amount("amount_in", amount_in, minimum=1)
    reserve_in, reserve_out = pool.reserves(direction)
    if reserve_in + amount_in > MAX_AMOUNT:
        raise Overflow("updated reserve exceeds 256 bits")
    fn, fd = pool.fee.numerator, pool.fee.denominator
    g = fd - fn  # fee-retained numerator: (1 - f) = g / fd
    out = (reserve_out * g * amount_in) // (reserve_in * fd + g * amount_in)
    return out


def execute_swap(pool: Pool, req: SwapRequest) -> SwapOutcome:
    """Apply a swap; reverting (output below min_out) is a normal outcome."""
    out = quote_output(pool, req.direction, req.amount_in)
    if out < req.min_out:
        return SwapOutcome(req.amount_in, 0, pool, reverted=True)
    return SwapOutcome(
        req.amount_in,
        out,
        pool.after_swap(req.direction, req.amount_in, out),
        reverted=False,
    )


def min_out_from_tolerance(quote: int, tolerance: Fraction) -> int:
    """ceil((1 - s) * quote), so integer revert matches out' >= (1-s)*out."""
    _check_amount("quote", quote)
    _check_rate("tolerance", tolerance)
    keep = 1 - tolerance
    return _ceil_div(quote * keep.numerator, keep.denominator)


def max_extractable(victim_in: int, tolerance: Fraction) -> int:
    """floor(s * dx): the victim's maximum tolerable loss in its input token.

    First-order bound; the exact zero-fee closed form exceeds it by a
    factor (x0 + dx) / x0, which vanishes for trades small relative to
    the pool.
    """
    _check_amount("victim_in", victim_in)
    _check_rate("tolerance", tolerance)
    return victim_in * tolerance.numerator // tolerance.denominator


def victim_output_after_frontrun(
    pool: Pool, direction: Direction, frontrun_in: int, victim_in: int
) -> int:
    """The victim's output if a same-direction front-run of the given size
    lands first. frontrun_in == 0 means no front-run."""
    if frontrun_in:
        out = quote_output(pool, direction, frontrun_in)
        pool = pool.after_swap(direction, frontrun_in, out)
    return quote_output(pool, direction, victim_in)


def _isqrt_fraction(value: Fraction) -> Fraction:
    """Floor square root of a non-negative rational, exact to < 1/denominator."""
    n, d = value.numerator, value.denominator
    return Fraction(math.isqrt(n * d), d)


def _analytic_frontrun_root(
    pool: Pool, direction: Direction, victim_in: int, min_out: int
) -> int:
    """Real-valued positive root of the boundary quadratic, floored.

    The boundary condition (victim output exactly at min_out, with the
    post-front-run reserve taken as x0 + a) expands to
        g*a^2 + (x0*(1+g) + g^2*dx)*a + x0*(x0 + g*dx) - x0*y0*g*dx/m <= 0
    with g = 1 - f and m = min_out.
    """
    x0, y0 = pool.reserves(direction)
    g = 1 - pool.fee
    dx = victim_in
    b = x0 * (1 + g) + g * g * dx
    c = x0 * (x0 + g * dx) - Fraction(x0 * y0, min_out) * g * dx
    disc = b * b - 4 * g * c
    if disc < 0:
        return 0
    root = (-b + _isqrt_fraction(disc)) / (2 * g)
    return max(0, math.floor(root))


def optimal_frontrun_input(
    pool: Pool,
    victim_in: int,
    victim_tolerance: Fraction,
    theta: Fraction = Fraction(1),
) -> int:
    """Largest front-run input that still lets the victim execute.

    The victim's floor is taken at the effective tolerance s*theta:
    theta = 1 drives the victim exactly to its limit, theta < 1 leaves
    (1-theta)*s of the quoted output as a safety buffer.

    Returns 0 when there is no room for even a one-unit front-run.
    """
    _check_amount("victim_in", victim_in, minimum=1)
    _check_rate("victim_tolerance", victim_tolerance)
    _check_rate("theta", theta, hi_closed=True)
    quote = quote_output(pool, Direction.X_FOR_Y, victim_in)
    if quote <= 0:
        raise ZeroInput("victim's unattacked quote is zero")
    min_out = min_out_from_tolerance(quote, victim_tolerance * theta)
    return largest_frontrun_for_min_out(pool, Direction.X_FOR_Y, victim_in, min_out)


def largest_frontrun_for_min_out(
    pool: Pool, direction: Direction, victim_in: int, min_out: int
) -> int:
    """Largest a >= 0 such that the victim still clears min_out after a
    same-direction front-run of a. Analytic root plus integer local
    search; galloping fallback keeps maximality exact even when integer
    flooring shifts the boundary away from the real-valued root.
    """
    _check_amount("victim_in", victim_in, minimum=1)
    _check_amount("min_out", min_out)
    if min_out == 0:
        min_out = 1  # a zero floor gives unbounded room; treat as one base unit

    def fits(a: int) -> bool:
        return victim_output_after_frontrun(pool, direction, a, victim_in) >= min_out

    if not fits(0):
        return 0
    a = _analytic_frontrun_root(pool, direction, victim_in, min_out)
    if fits(a):
        steps = 0
        while fits(a + 1):
            a += 1
            steps += 1
            if steps >= 64:  # analytic start was far off; gallop instead
                lo, step = a, 64
                while fits(lo + step):
                    lo += step
                    step *= 2
                hi = lo + step
                while lo + 1 < hi:
                    mid = (lo + hi) // 2
                    if fits(mid):
                        lo = mid
                    else:
                        hi = mid
                return lo
        return a
    while a > 0 and not fits(a):
        a -= 1
    return a


def backrun_output(pool_after_victim: Pool, frontrun_out: int) -> int:
    """Output of swapping the front-run proceeds back after the victim."""
    if frontrun_out == 0:
        return 0
    return quote_output(pool_after_victim, Direction.Y_FOR_X, frontrun_out)


def plan_sandwich(
    pool: Pool,
    victim: SwapRequest,
    victim_tolerance: Fraction,
    theta: Fraction = Fraction(1),
    gas_cost: int = 0,
) -> SandwichPlan:
    """Size the front-run, replay all three swaps, and account the profit.

    A Y-for-X victim is handled by mirroring the pool; amounts in the
    returned plan are then denominated in the victim's input token.
    """
    _check_amount("gas_cost", gas_cost)
    if victim.direction is Direction.Y_FOR_X:
        mirrored = plan_sandwich(
            pool.mirrored(),
            replace(victim, direction=Direction.X_FOR_Y),
            victim_tolerance,
            theta,
            gas_cost,
        )
        return mirrored

    quote = quote_output(pool, Direction.X_FOR_Y, victim.amount_in)
    frontrun_in = optimal_frontrun_input(pool, victim.amount_in, victim_tolerance, theta)
    if frontrun_in == 0:
        return SandwichPlan(
            frontrun_in=0,
            frontrun_out=0,
            expected_victim_out=quote,
            backrun_out=0,
            gas_cost=gas_cost,
            profit=-gas_cost,
        )

    frontrun_out = quote_output(pool, Direction.X_FOR_Y, frontrun_in)
    pool_1 = pool.after_swap(Direction.X_FOR_Y, frontrun_in, frontrun_out)
    victim_out = quote_output(pool_1, Direction.X_FOR_Y, victim.amount_in)
    pool_2 = pool_1.after_swap(Direction.X_FOR_Y, victim.amount_in, victim_out)
    recovered = backrun_output(pool_2, frontrun_out)
    return SandwichPlan(
        frontrun_in=frontrun_in,
        frontrun_out=frontrun_out,
        expected_victim_out=victim_out,
        backrun_out=recovered,
        gas_cost=gas_cost,
        profit=recovered - frontrun_in - gas_cost,
    )
