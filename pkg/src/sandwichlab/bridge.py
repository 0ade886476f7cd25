"""Deterministic discrete-event simulation of a liquidity-pool bridge.

Two block-producing chains, a relayer set running the commit / verify /
consensus / execute pipeline, and three agent kinds on the destination
chain: a cross-chain attacker that reacts to source-chain commit events,
a classical same-block sandwich bot that only sees the destination
mempool, and memoryless noise traders. All randomness flows from one
seeded generator, so identical configs produce bit-identical traces.
"""

from __future__ import annotations

import hashlib
import heapq
import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .amm import (
    Direction,
    Pool,
    SwapRequest,
    execute_swap,
    largest_frontrun_for_min_out,
    min_out_from_tolerance,
    quote_output,
)
from .attack import PoolTimeline, TxLabel, classify_ordering
from .detector import CrossChainTx, SwapLog, VictimHop

GWEI = 10**9


class InvalidConfig(ValueError):
    pass


class NoQuorum(RuntimeError):
    pass


@dataclass(frozen=True)
class DistSpec:
    """A sampleable distribution: family plus parameters.

    Families: fixed {value}; uniform {low, high}; exponential {rate};
    lognormal {sigma, p95} or {mu, sigma}. Optional min/max clamp the
    sample.
    """

    family: str
    params: dict

    def sample(self, rng: random.Random) -> float:
        p = self.params
        if self.family == "fixed":
            value = float(p["value"])
        elif self.family == "uniform":
            value = rng.uniform(float(p["low"]), float(p["high"]))
        elif self.family == "exponential":
            value = rng.expovariate(float(p["rate"]))
        elif self.family == "lognormal":
            sigma = float(p["sigma"])
            if "p95" in p:
                mu = math.log(float(p["p95"])) - 1.6448536269514722 * sigma
            else:
                mu = float(p["mu"])
            value = rng.lognormvariate(mu, sigma)
        else:
            raise InvalidConfig(f"unknown distribution family {self.family!r}")
        if "min" in p:
            value = max(value, float(p["min"]))
        if "max" in p:
            value = min(value, float(p["max"]))
        return value

    @classmethod
    def from_dict(cls, data: dict) -> "DistSpec":
        data = dict(data)
        family = data.pop("family")
        return cls(family=family, params=data)

    def to_dict(self) -> dict:
        return {"family": self.family, **self.params}


@dataclass(frozen=True)
class AttackerConfig:
    enabled: bool = True
    theta: Fraction = Fraction(1)
    capital_limit: Optional[int] = None
    uses_private_submission: bool = False
    backrun_on_mempool: bool = False
    gas_price: int = GWEI

    def __post_init__(self) -> None:
        if not 0 < self.theta <= 1:
            raise InvalidConfig("theta must be in (0, 1]")


@dataclass(frozen=True)
class BotConfig:
    enabled: bool = False
    gas_premium: int = GWEI
    min_profit: int = 0


@dataclass(frozen=True)
class SimConfig:
    seed: int = 0
    horizon: float = 600.0
    src_block_interval: float = 12.0
    dst_block_interval: float = 3.0
    src_chain_id: int = 1
    dst_chain_id: int = 56
    relay_delay: DistSpec = field(
        default_factory=lambda: DistSpec(
            "lognormal", {"sigma": 0.6, "p95": 100.0, "min": 5.0}
        )
    )
    relayer_count: int = 3
    consensus_threshold: Fraction = Fraction(2, 3)
    noise_arrival_rate: float = 0.01  # per pool, per second
    noise_size: DistSpec = field(
        default_factory=lambda: DistSpec("lognormal", {"mu": 32.0, "sigma": 1.0})
    )
    noise_gas: DistSpec = field(
        default_factory=lambda: DistSpec("uniform", {"low": 1.0, "high": 8.0})
    )
    victim_arrival_rate: float = 0.5  # per second, across all pools
    victim_size: DistSpec = field(
        default_factory=lambda: DistSpec("lognormal", {"mu": 33.0, "sigma": 1.0})
    )
    victim_tolerance: DistSpec = field(
        default_factory=lambda: DistSpec("uniform", {"low": 0.005, "high": 0.03})
    )
    victim_gas: DistSpec = field(
        default_factory=lambda: DistSpec("uniform", {"low": 2.0, "high": 10.0})
    )
    attacker: AttackerConfig = field(default_factory=AttackerConfig)
    bot: BotConfig = field(default_factory=BotConfig)
    pools: tuple[Pool, ...] = ()

    def __post_init__(self) -> None:
        if self.horizon <= 0:
            raise InvalidConfig("horizon must be > 0")
        if self.src_block_interval <= 0 or self.dst_block_interval <= 0:
            raise InvalidConfig("block intervals must be > 0")
        if self.relayer_count < 1:
            raise InvalidConfig("relayer_count must be >= 1")
        if not self.consensus_threshold > Fraction(1, 2):
            raise InvalidConfig("consensus_threshold must exceed 1/2")
        if not self.pools:
            raise InvalidConfig("at least one pool is required")


@dataclass(frozen=True)
class RelayMessage:
    """The public commit event: leaks the full destination swap."""

    id: str
    source_height: int
    dest_chain_id: int
    pool_address: str
    direction: Direction
    victim_in: int
    min_return: int
    recipient: str
    emit_time: float


@dataclass
class PendingTx:
    tx_hash: str
    kind: str  # victim | noise | attacker_front | attacker_back | bot_front | bot_back
    gas_price: int
    submit_time: float
    seq: int
    pool_address: str
    direction: Direction
    amount_in: Optional[int]  # back-runs resolve at execution time
    min_out: int
    sender: str
    recipient: str
    victim_id: Optional[int] = None
    private: bool = False


@dataclass(frozen=True)
class TraceEvent:
    time: float
    kind: str
    chain_id: int
    tx_hash: str
    label: str
    pool_address: str
    direction: Optional[Direction]
    amount_in: int
    amount_out: int
    gas_price: int
    block_number: int
    log_index: Optional[int]
    sender: str
    recipient: str
    victim_id: Optional[int]
    reverted: bool = False


@dataclass
class VictimRecord:
    victim_id: int
    pool_address: str
    direction: Direction
    amount_in: int
    tolerance: Fraction
    gas_price: int
    sender: str
    recipient: str
    src_tx_hash: str = ""
    src_block: int = 0
    emit_time: float = 0.0
    min_return: int = 0
    quote_at_commit: int = 0
    pool_snapshot: Optional[Pool] = None
    delivery_time: Optional[float] = None
    leader: Optional[int] = None
    dst_tx_hash: str = ""
    exec_block: Optional[int] = None
    exec_time: Optional[float] = None
    executed: bool = False
    reverted: bool = False
    amount_out: int = 0
    dropped: bool = False
    attacker_in: int = 0
    attacker_front_hash: str = ""
    attacker_front_block: Optional[int] = None
    attacker_front_out: int = 0
    attacker_back_hash: str = ""
    attacker_back_block: Optional[int] = None
    attacker_back_out: int = 0
    bot_in: int = 0
    bot_front_hash: str = ""
    bot_front_block: Optional[int] = None
    bot_front_out: int = 0
    bot_back_hash: str = ""
    bot_back_block: Optional[int] = None
    bot_back_out: int = 0


@dataclass
class SimTrace:
    config: SimConfig
    events: list[TraceEvent] = field(default_factory=list)
    victims: dict[int, VictimRecord] = field(default_factory=dict)
    blocks: dict[int, list[tuple[int, float]]] = field(default_factory=dict)
    final_pools: dict[str, Pool] = field(default_factory=dict)
    agent_balances: dict[str, dict[str, int]] = field(default_factory=dict)


@dataclass
class SimMetrics:
    victims_total: int = 0
    victims_executed: int = 0
    victims_reverted: int = 0
    victims_dropped: int = 0
    measured_q: Optional[Fraction] = None
    scenario_counts: dict = field(default_factory=dict)
    contested_cases: int = 0
    contested_front_precedes_bot: int = 0
    attacker_same_block_victims: int = 0
    attacker_attacked: int = 0
    attacker_profit_by_token: dict = field(default_factory=dict)
    bot_attacked: int = 0
    bot_profit_by_token: dict = field(default_factory=dict)


@dataclass
class Corpus:
    timelines: list[PoolTimeline]
    swap_logs: list[SwapLog]
    records: list[CrossChainTx]
    labels: list[dict]


ATTACKER_ADDR = "0x" + "aa" * 20
BOT_ADDR = "0x" + "bb" * 20
NOISE_ADDR = "0x" + "cc" * 20


def ccmp_verify(message: RelayMessage, known_pools: set[str], seen_ids: set[str]) -> bool:
    """Honest relayer check: known destination pool, fresh message id."""
    return message.pool_address in known_pools and message.id not in seen_ids


def ccmp_consensus(
    message: RelayMessage, approvals: list[int], relayer_count: int, threshold: Fraction
) -> int:
    """Deterministic leader rotation among approvers once quorum holds."""
    if len(approvals) * threshold.denominator <= relayer_count * threshold.numerator:
        raise NoQuorum(f"{len(approvals)}/{relayer_count} approvals")
    index = int(message.id[-8:], 16) % len(approvals)
    return sorted(approvals)[index]


class Simulation:
    """One seeded run over an event queue; single logical thread."""

    def __init__(self, config: SimConfig):
        self.config = config
        self.rng = random.Random(config.seed)
        self.trace = SimTrace(config=config)
        self.pools: dict[str, Pool] = {p.address: p for p in config.pools}
        if len(self.pools) != len(config.pools):
            raise InvalidConfig("duplicate pool addresses")
        self.initial_pools = dict(self.pools)
        self.queue: list[tuple[float, int, str, object]] = []
        self.seq = 0
        self.src_mempool: list[PendingTx] = []
        self.dst_mempool: list[PendingTx] = []
        self.tx_seq = 0
        self.src_height = 0
        self.dst_height = 0
        self.victim_counter = 0
        self.seen_message_ids: set[str] = set()
        self.balances: dict[str, dict[str, int]] = {
            ATTACKER_ADDR: {},
            BOT_ADDR: {},
        }
        self.trace.blocks = {config.src_chain_id: [], config.dst_chain_id: []}

    # -- plumbing ----------------------------------------------------------

    def _push(self, time: float, action: str, payload: object = None) -> None:
        self.seq += 1
        heapq.heappush(self.queue, (time, self.seq, action, payload))

    def _next_tx_seq(self) -> int:
        self.tx_seq += 1
        return self.tx_seq

    def _hash(self, *parts: object) -> str:
        digest = hashlib.sha256(
            ":".join(str(p) for p in (self.config.seed, *parts)).encode()
        ).hexdigest()
        return "0x" + digest

    def _credit(self, agent: str, token: str, amount: int) -> None:
        book = self.balances[agent]
        book[token] = book.get(token, 0) + amount

    def _gwei(self, spec: DistSpec) -> int:
        return max(0, int(round(spec.sample(self.rng) * GWEI)))

    def _tolerance(self) -> Fraction:
        value = self.config.victim_tolerance.sample(self.rng)
        value = min(max(value, 1e-6), 0.999)
        return Fraction(round(value * 10**6), 10**6)

    # -- protocol steps ----------------------------------------------------

    def ccmp_commit(self, victim: VictimRecord, src_block: int, now: float) -> RelayMessage:
        """Source-side commit: freeze minReturnAmount at the current
        destination pool state and emit the (public) relay message."""
        pool = self.pools[victim.pool_address]
        quote = quote_output(pool, victim.direction, victim.amount_in)
        min_return = min_out_from_tolerance(quote, victim.tolerance)
        victim.min_return = min_return
        victim.quote_at_commit = quote
        victim.pool_snapshot = pool
        victim.src_block = src_block
        victim.emit_time = now
        message = RelayMessage(
            id=victim.src_tx_hash,
            source_height=src_block,
            dest_chain_id=self.config.dst_chain_id,
            pool_address=victim.pool_address,
            direction=victim.direction,
            victim_in=victim.amount_in,
            min_return=min_return,
            recipient=victim.recipient,
            emit_time=now,
        )
        return message

    def _relay(self, message: RelayMessage, victim: VictimRecord, now: float) -> None:
        approvals = [
            i
            for i in range(self.config.relayer_count)
            if ccmp_verify(message, set(self.pools), self.seen_message_ids)
        ]
        self.seen_message_ids.add(message.id)
        try:
            leader = ccmp_consensus(
                message, approvals, self.config.relayer_count, self.config.consensus_threshold
            )
        except NoQuorum:
            victim.dropped = True
            return
        victim.leader = leader
        delay = self.config.relay_delay.sample(self.rng)
        delivery = now + delay
        victim.delivery_time = delivery
        if delivery > self.config.horizon:
            victim.dropped = True
            return
        self._push(delivery, "deliver_victim", victim.victim_id)

    # -- agents ------------------------------------------------------------

    def _attacker_react(self, message: RelayMessage, victim: VictimRecord, now: float) -> None:
        cfg = self.config.attacker
        pool = self.pools[message.pool_address]
        if message.direction is Direction.Y_FOR_X:
            pool = pool.mirrored()
        try:
            quote = quote_output(pool, Direction.X_FOR_Y, message.victim_in)
        except Exception:
            return
        if quote <= message.min_return:
            return
        buffer = quote - message.min_return
        taken = buffer * cfg.theta.numerator // cfg.theta.denominator
        target_floor = quote - taken
        amount = largest_frontrun_for_min_out(
            pool, Direction.X_FOR_Y, message.victim_in, max(target_floor, message.min_return)
        )
        if cfg.capital_limit is not None:
            amount = min(amount, cfg.capital_limit)
        if amount <= 0:
            return
        victim.attacker_in = amount
        victim.attacker_front_hash = self._hash("TA1", victim.victim_id)
        tx = PendingTx(
            tx_hash=victim.attacker_front_hash,
            kind="attacker_front",
            gas_price=0 if cfg.uses_private_submission else cfg.gas_price,
            submit_time=now,
            seq=self._next_tx_seq(),
            pool_address=message.pool_address,
            direction=message.direction,
            amount_in=amount,
            min_out=0,
            sender=ATTACKER_ADDR,
            recipient=ATTACKER_ADDR,
            victim_id=victim.victim_id,
            private=cfg.uses_private_submission,
        )
        self.dst_mempool.append(tx)

    def _attacker_backrun(self, victim: VictimRecord, now: float) -> None:
        if victim.attacker_front_out <= 0 or victim.attacker_back_hash:
            return
        victim.attacker_back_hash = self._hash("TA2", victim.victim_id)
        self.dst_mempool.append(
            PendingTx(
                tx_hash=victim.attacker_back_hash,
                kind="attacker_back",
                gas_price=self.config.attacker.gas_price,
                submit_time=now,
                seq=self._next_tx_seq(),
                pool_address=victim.pool_address,
                direction=victim.direction.opposite(),
                amount_in=None,
                min_out=0,
                sender=ATTACKER_ADDR,
                recipient=ATTACKER_ADDR,
                victim_id=victim.victim_id,
            )
        )

    def _bot_react(self, victim: VictimRecord, now: float) -> None:
        cfg = self.config.bot
        pool = self.pools[victim.pool_address]
        oriented = pool if victim.direction is Direction.X_FOR_Y else pool.mirrored()
        amount = largest_frontrun_for_min_out(
            oriented, Direction.X_FOR_Y, victim.amount_in, victim.min_return
        )
        if amount <= 0:
            return
        # hypothetical same-block bracket on the current state
        front_out = quote_output(oriented, Direction.X_FOR_Y, amount)
        pool_1 = oriented.after_swap(Direction.X_FOR_Y, amount, front_out)
        victim_out = quote_output(pool_1, Direction.X_FOR_Y, victim.amount_in)
        if victim_out < victim.min_return:
            return
        pool_2 = pool_1.after_swap(Direction.X_FOR_Y, victim.amount_in, victim_out)
        recovered = quote_output(pool_2, Direction.Y_FOR_X, front_out)
        if recovered - amount < cfg.min_profit:
            return
        victim.bot_in = amount
        victim.bot_front_hash = self._hash("TB1", victim.victim_id)
        victim.bot_back_hash = self._hash("TB2", victim.victim_id)
        self.dst_mempool.append(
            PendingTx(
                tx_hash=victim.bot_front_hash,
                kind="bot_front",
                gas_price=victim.gas_price + cfg.gas_premium,
                submit_time=now,
                seq=self._next_tx_seq(),
                pool_address=victim.pool_address,
                direction=victim.direction,
                amount_in=amount,
                min_out=0,
                sender=BOT_ADDR,
                recipient=BOT_ADDR,
                victim_id=victim.victim_id,
            )
        )
        self.dst_mempool.append(
            PendingTx(
                tx_hash=victim.bot_back_hash,
                kind="bot_back",
                gas_price=max(victim.gas_price - 1, 0),
                submit_time=now,
                seq=self._next_tx_seq(),
                pool_address=victim.pool_address,
                direction=victim.direction.opposite(),
                amount_in=None,
                min_out=0,
                sender=BOT_ADDR,
                recipient=BOT_ADDR,
                victim_id=victim.victim_id,
            )
        )

    # -- event handlers ----------------------------------------------------

    def _on_victim_arrival(self, now: float) -> None:
        self.victim_counter += 1
        vid = self.victim_counter
        pool = self.config.pools[self.rng.randrange(len(self.config.pools))]
        direction = Direction.X_FOR_Y if self.rng.random() < 0.5 else Direction.Y_FOR_X
        size = max(1, int(self.config.victim_size.sample(self.rng)))
        victim = VictimRecord(
            victim_id=vid,
            pool_address=pool.address,
            direction=direction,
            amount_in=size,
            tolerance=self._tolerance(),
            gas_price=self._gwei(self.config.victim_gas),
            sender=f"0xuser{vid:036x}",
            recipient=f"0xuser{vid:036x}",
        )
        victim.src_tx_hash = self._hash("Ts", vid)
        victim.dst_tx_hash = self._hash("Tv", vid)
        self.trace.victims[vid] = victim
        self.src_mempool.append(
            PendingTx(
                tx_hash=victim.src_tx_hash,
                kind="victim",
                gas_price=victim.gas_price,
                submit_time=now,
                seq=self._next_tx_seq(),
                pool_address=pool.address,
                direction=direction,
                amount_in=size,
                min_out=0,
                sender=victim.sender,
                recipient=victim.recipient,
                victim_id=vid,
            )
        )
        interval = self.rng.expovariate(self.config.victim_arrival_rate)
        if now + interval <= self.config.horizon:
            self._push(now + interval, "victim_arrival")

    def _on_noise_arrival(self, pool_address: str, now: float) -> None:
        direction = Direction.X_FOR_Y if self.rng.random() < 0.5 else Direction.Y_FOR_X
        size = max(1, int(self.config.noise_size.sample(self.rng)))
        self.dst_mempool.append(
            PendingTx(
                tx_hash=self._hash("noise", pool_address, now, self.seq),
                kind="noise",
                gas_price=self._gwei(self.config.noise_gas),
                submit_time=now,
                seq=self._next_tx_seq(),
                pool_address=pool_address,
                direction=direction,
                amount_in=size,
                min_out=0,
                sender=NOISE_ADDR,
                recipient=NOISE_ADDR,
            )
        )
        interval = self.rng.expovariate(self.config.noise_arrival_rate)
        if now + interval <= self.config.horizon:
            self._push(now + interval, "noise_arrival", pool_address)

    def _on_src_block(self, now: float) -> None:
        self.src_height += 1
        self.trace.blocks[self.config.src_chain_id].append((self.src_height, now))
        txs = sorted(self.src_mempool, key=lambda t: (-t.gas_price, t.submit_time, t.seq))
        self.src_mempool = []
        for index, tx in enumerate(txs):
            victim = self.trace.victims[tx.victim_id]
            message = self.ccmp_commit(victim, self.src_height, now)
            self.trace.events.append(
                TraceEvent(
                    time=now,
                    kind="commit",
                    chain_id=self.config.src_chain_id,
                    tx_hash=tx.tx_hash,
                    label="Ts",
                    pool_address=tx.pool_address,
                    direction=tx.direction,
                    amount_in=tx.amount_in or 0,
                    amount_out=victim.min_return,
                    gas_price=tx.gas_price,
                    block_number=self.src_height,
                    log_index=index,
                    sender=tx.sender,
                    recipient=tx.recipient,
                    victim_id=tx.victim_id,
                )
            )
            if self.config.attacker.enabled:
                self._attacker_react(message, victim, now)
            self._relay(message, victim, now)
        next_time = now + self.config.src_block_interval
        if next_time <= self.config.horizon:
            self._push(next_time, "src_block")

    def _on_deliver_victim(self, victim_id: int, now: float) -> None:
        victim = self.trace.victims[victim_id]
        self.dst_mempool.append(
            PendingTx(
                tx_hash=victim.dst_tx_hash,
                kind="victim",
                gas_price=victim.gas_price,
                submit_time=now,
                seq=self._next_tx_seq(),
                pool_address=victim.pool_address,
                direction=victim.direction,
                amount_in=victim.amount_in,
                min_out=victim.min_return,
                sender=victim.sender,
                recipient=victim.recipient,
                victim_id=victim_id,
            )
        )
        if self.config.bot.enabled:
            self._bot_react(victim, now)
        if self.config.attacker.enabled and self.config.attacker.backrun_on_mempool:
            # mempool-triggered back-run: undercut the victim's gas so the
            # back-run lands after it inside the same block
            if victim.attacker_front_out > 0 and not victim.attacker_back_hash:
                victim.attacker_back_hash = self._hash("TA2", victim_id)
                self.dst_mempool.append(
                    PendingTx(
                        tx_hash=victim.attacker_back_hash,
                        kind="attacker_back",
                        gas_price=max(victim.gas_price - 2, 0),
                        submit_time=now,
                        seq=self._next_tx_seq(),
                        pool_address=victim.pool_address,
                        direction=victim.direction.opposite(),
                        amount_in=None,
                        min_out=0,
                        sender=ATTACKER_ADDR,
                        recipient=ATTACKER_ADDR,
                        victim_id=victim_id,
                    )
                )

    def _resolve_amount(self, tx: PendingTx) -> Optional[int]:
        if tx.amount_in is not None:
            return tx.amount_in
        victim = self.trace.victims[tx.victim_id]
        if tx.kind == "attacker_back":
            return victim.attacker_front_out or None
        if tx.kind == "bot_back":
            return victim.bot_front_out or None
        return None

    def _label_for(self, tx: PendingTx) -> str:
        return {
            "victim": "Tv",
            "noise": "Noise",
            "attacker_front": "TA1",
            "attacker_back": "TA2",
            "bot_front": "TB1",
            "bot_back": "TB2",
        }[tx.kind]

    def _on_dst_block(self, now: float) -> None:
        self.dst_height += 1
        block = self.dst_height
        self.trace.blocks[self.config.dst_chain_id].append((block, now))
        txs = sorted(self.dst_mempool, key=lambda t: (-t.gas_price, t.submit_time, t.seq))
        self.dst_mempool = []
        log_index = 0
        for tx in txs:
            amount = self._resolve_amount(tx)
            if amount is None or amount <= 0:
                continue
            pool = self.pools[tx.pool_address]
            outcome = execute_swap(
                pool, SwapRequest(tx.direction, amount, tx.min_out, tx.sender, tx.recipient)
            )
            self.pools[tx.pool_address] = outcome.pool_after
            event_index: Optional[int] = None
            if not outcome.reverted:
                event_index = log_index
                log_index += 1
            self.trace.events.append(
                TraceEvent(
                    time=now,
                    kind="swap",
                    chain_id=self.config.dst_chain_id,
                    tx_hash=tx.tx_hash,
                    label=self._label_for(tx),
                    pool_address=tx.pool_address,
                    direction=tx.direction,
                    amount_in=amount,
                    amount_out=outcome.amount_out,
                    gas_price=tx.gas_price,
                    block_number=block,
                    log_index=event_index,
                    sender=tx.sender,
                    recipient=tx.recipient,
                    victim_id=tx.victim_id,
                    reverted=outcome.reverted,
                )
            )
            self._post_execute(tx, outcome.reverted, outcome.amount_out, block, now)
        next_time = now + self.config.dst_block_interval
        if next_time <= self.config.horizon:
            self._push(next_time, "dst_block")

    def _post_execute(
        self, tx: PendingTx, reverted: bool, amount_out: int, block: int, now: float
    ) -> None:
        pool = self.initial_pools[tx.pool_address]
        token_in, token_out = (
            (pool.token_x, pool.token_y)
            if tx.direction is Direction.X_FOR_Y
            else (pool.token_y, pool.token_x)
        )
        victim = self.trace.victims.get(tx.victim_id) if tx.victim_id else None
        if tx.kind == "victim" and victim is not None:
            victim.exec_block = block
            victim.exec_time = now
            victim.executed = not reverted
            victim.reverted = reverted
            victim.amount_out = amount_out
            if self.config.attacker.enabled and not self.config.attacker.backrun_on_mempool:
                self._attacker_backrun(victim, now)
            return
        if reverted:
            return
        if tx.kind == "attacker_front" and victim is not None:
            victim.attacker_front_block = block
            victim.attacker_front_out = amount_out
            self._credit(ATTACKER_ADDR, token_in, -(tx.amount_in or 0))
            self._credit(ATTACKER_ADDR, token_out, amount_out)
        elif tx.kind == "attacker_back" and victim is not None:
            victim.attacker_back_block = block
            victim.attacker_back_out = amount_out
            self._credit(ATTACKER_ADDR, token_in, -victim.attacker_front_out)
            self._credit(ATTACKER_ADDR, token_out, amount_out)
        elif tx.kind == "bot_front" and victim is not None:
            victim.bot_front_block = block
            victim.bot_front_out = amount_out
            self._credit(BOT_ADDR, token_in, -(tx.amount_in or 0))
            self._credit(BOT_ADDR, token_out, amount_out)
        elif tx.kind == "bot_back" and victim is not None:
            victim.bot_back_block = block
            victim.bot_back_out = amount_out
            self._credit(BOT_ADDR, token_in, -victim.bot_front_out)
            self._credit(BOT_ADDR, token_out, amount_out)

    # -- driver ------------------------------------------------------------

    def run(self) -> SimTrace:
        config = self.config
        self._push(config.src_block_interval, "src_block")
        self._push(config.dst_block_interval, "dst_block")
        if config.victim_arrival_rate > 0:
            first = self.rng.expovariate(config.victim_arrival_rate)
            if first <= config.horizon:
                self._push(first, "victim_arrival")
        if config.noise_arrival_rate > 0:
            for pool in config.pools:
                first = self.rng.expovariate(config.noise_arrival_rate)
                if first <= config.horizon:
                    self._push(first, "noise_arrival", pool.address)
        while self.queue:
            time, _, action, payload = heapq.heappop(self.queue)
            if action == "src_block":
                self._on_src_block(time)
            elif action == "dst_block":
                self._on_dst_block(time)
            elif action == "victim_arrival":
                self._on_victim_arrival(time)
            elif action == "noise_arrival":
                self._on_noise_arrival(payload, time)
            elif action == "deliver_victim":
                self._on_deliver_victim(payload, time)
        for victim in self.trace.victims.values():
            if victim.exec_block is None:
                victim.dropped = True
        self.trace.final_pools = dict(self.pools)
        self.trace.agent_balances = self.balances
        return self.trace


def run(config: SimConfig) -> tuple[SimTrace, SimMetrics]:
    """Run one simulation and derive its metrics."""
    trace = Simulation(config).run()
    return trace, compute_metrics(trace)


class _TraceIndex:
    """Per-pool executed-swap order plus tx positions, built in one pass."""

    def __init__(self, trace: SimTrace):
        self.events_by_pool: dict[str, list[TraceEvent]] = {}
        self.index_in_pool: dict[str, int] = {}
        self.position_of: dict[str, tuple[int, int]] = {}
        for event in trace.events:
            if event.kind != "swap" or event.reverted:
                continue
            bucket = self.events_by_pool.setdefault(event.pool_address, [])
            self.index_in_pool[event.tx_hash] = len(bucket)
            bucket.append(event)
            self.position_of[event.tx_hash] = (event.block_number, event.log_index or 0)

    def window(self, victim: VictimRecord) -> list[TraceEvent]:
        """Executed swaps on the victim's pool strictly between its
        source commit and its own execution, excluding the attacker's
        front-run for this victim (the hypothesis, not noise). Other
        victims' attack traffic does count as noise."""
        where = self.index_in_pool.get(victim.dst_tx_hash)
        if where is None:
            return []
        events = self.events_by_pool[victim.pool_address]
        out: list[TraceEvent] = []
        i = where - 1
        while i >= 0:
            event = events[i]
            if event.time <= victim.emit_time:
                break
            if event.tx_hash != victim.attacker_front_hash:
                out.append(event)
            i -= 1
        out.reverse()
        return out


def compute_metrics(trace: SimTrace) -> SimMetrics:
    metrics = SimMetrics()
    metrics.victims_total = len(trace.victims)
    index = _TraceIndex(trace)
    completed = []
    window_cache: dict[int, list[TraceEvent]] = {}
    for victim in trace.victims.values():
        if victim.dropped or victim.exec_block is None:
            metrics.victims_dropped += 1
            continue
        if victim.reverted:
            metrics.victims_reverted += 1
        else:
            metrics.victims_executed += 1
        completed.append(victim)
        window_cache[victim.victim_id] = index.window(victim)

    if completed:
        empty = sum(1 for v in completed if not window_cache[v.victim_id])
        metrics.measured_q = Fraction(empty, len(completed))

    for victim in completed:
        sequence = _label_sequence(index, victim)
        scenario = classify_ordering(sequence)
        metrics.scenario_counts[scenario.value] = (
            metrics.scenario_counts.get(scenario.value, 0) + 1
        )
        if victim.attacker_front_block is not None:
            metrics.attacker_attacked += 1
            if victim.attacker_front_block == victim.exec_block:
                metrics.attacker_same_block_victims += 1
            if victim.bot_front_block is not None:
                metrics.contested_cases += 1
                if victim.attacker_front_block < victim.bot_front_block:
                    metrics.contested_front_precedes_bot += 1
        if victim.bot_front_block is not None:
            metrics.bot_attacked += 1

    pool_tokens = {p.address: p for p in trace.config.pools}
    for victim in completed:
        pool = pool_tokens[victim.pool_address]
        token_in = (
            pool.token_x if victim.direction is Direction.X_FOR_Y else pool.token_y
        )
        if victim.attacker_front_block is not None and victim.attacker_back_block is not None:
            profit = victim.attacker_back_out - victim.attacker_in
            metrics.attacker_profit_by_token[token_in] = (
                metrics.attacker_profit_by_token.get(token_in, 0) + profit
            )
        if victim.bot_front_block is not None and victim.bot_back_block is not None:
            profit = victim.bot_back_out - victim.bot_in
            metrics.bot_profit_by_token[token_in] = (
                metrics.bot_profit_by_token.get(token_in, 0) + profit
            )
    return metrics


def _label_sequence(index: _TraceIndex, victim: VictimRecord) -> list[TxLabel]:
    """Execution-ordered labels of this victim's own attack transactions."""
    own = {
        victim.dst_tx_hash: TxLabel.TV,
        victim.attacker_front_hash: TxLabel.TA1,
        victim.attacker_back_hash: TxLabel.TA2,
        victim.bot_front_hash: TxLabel.TB1,
        victim.bot_back_hash: TxLabel.TB2,
    }
    own.pop("", None)
    tagged = [
        (index.position_of[tx_hash], label)
        for tx_hash, label in own.items()
        if tx_hash in index.position_of
    ]
    tagged.sort(key=lambda item: item[0])
    return [label for _, label in tagged]


def extract_corpus(trace: SimTrace) -> Corpus:
    """Bridge the trace into the analysis input formats: per-victim pool
    timelines, decoded swap logs, cross-chain records, and ground-truth
    labels kept separately for detector evaluation."""
    pool_meta = {p.address: p for p in trace.config.pools}
    swap_logs: list[SwapLog] = []
    block_times = dict(trace.blocks[trace.config.dst_chain_id])
    for event in trace.events:
        if event.kind != "swap" or event.reverted:
            continue
        swap_logs.append(
            SwapLog(
                tx_hash=event.tx_hash,
                block_number=event.block_number,
                log_index=event.log_index or 0,
                pool_address=event.pool_address,
                chain_id=event.chain_id,
                direction=event.direction,
                token_in_amount=event.amount_in,
                token_out_amount=event.amount_out,
                sender=event.sender,
                recipient=event.recipient,
                gas_price=event.gas_price,
                timestamp=block_times.get(event.block_number, event.time),
            )
        )

    index = _TraceIndex(trace)
    timelines: list[PoolTimeline] = []
    records: list[CrossChainTx] = []
    labels: list[dict] = []
    for victim in trace.victims.values():
        if victim.dropped or not victim.executed or victim.pool_snapshot is None:
            continue
        window = index.window(victim)
        timelines.append(
            PoolTimeline(
                pool=victim.pool_snapshot,
                noisy_swaps=tuple(
                    (event.direction, event.amount_in) for event in window
                ),
                victim=SwapRequest(
                    direction=victim.direction,
                    amount_in=victim.amount_in,
                    min_out=victim.min_return,
                    sender=victim.sender,
                    recipient=victim.recipient,
                ),
                victim_tolerance=victim.tolerance,
            )
        )
        pool = pool_meta[victim.pool_address]
        token_in, token_out = (
            (pool.token_x, pool.token_y)
            if victim.direction is Direction.X_FOR_Y
            else (pool.token_y, pool.token_x)
        )
        records.append(
            CrossChainTx(
                record_id=f"rec-{victim.victim_id}",
                src_tx_hash=victim.src_tx_hash,
                src_chain_id=trace.config.src_chain_id,
                src_block_number=victim.src_block,
                src_timestamp=victim.emit_time,
                dst_tx_hash=victim.dst_tx_hash,
                dst_chain_id=trace.config.dst_chain_id,
                dst_block_number=victim.exec_block or 0,
                dst_timestamp=victim.exec_time or 0.0,
                dst_gas_price=victim.gas_price,
                hops=(
                    VictimHop(
                        pool_address=victim.pool_address,
                        token_in=token_in,
                        token_out=token_out,
                        direction=victim.direction,
                        amount_in=victim.amount_in,
                        amount_out=victim.amount_out,
                        min_return=victim.min_return,
                    ),
                ),
            )
        )
        labels.append(
            {
                "victim_id": victim.victim_id,
                "record_id": f"rec-{victim.victim_id}",
                "victim_tx": victim.dst_tx_hash,
                "attacker_front_tx": victim.attacker_front_hash or None,
                "attacker_back_tx": victim.attacker_back_hash or None,
                "attacker_front_block": victim.attacker_front_block,
                "attacker_back_block": victim.attacker_back_block,
                "bot_front_tx": victim.bot_front_hash or None,
                "bot_back_tx": victim.bot_back_hash or None,
            }
        )
    return Corpus(timelines=timelines, swap_logs=swap_logs, records=records, labels=labels)
