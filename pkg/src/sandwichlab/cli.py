"""Command-line front end.

Subcommands: simulate (run the bridge simulator, export trace and
corpus), detect (run the pair-matching pipeline over exported records
and logs), params (estimate or evaluate the attack-model parameters),
analyze (aggregate detected pairs into a report), selftest (cross-check
the fast implementations against their reference oracles).

Exit codes: 0 success, 1 validation error, 2 I/O error. The environment
variable SANDWICHLAB_CONFIG overrides any --config path.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import random
import sys
from dataclasses import asdict
from fractions import Fraction
from pathlib import Path
from typing import Optional

import yaml

from . import amm, attack, bridge, detector, ingest

__version__ = "0.1.0"


class ValidationFailure(ValueError):
    pass


def _fraction(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, str) and "/" in value:
        num, _, den = value.partition("/")
        return Fraction(int(num), int(den))
    return Fraction(str(value))


def _dist(data) -> bridge.DistSpec:
    if isinstance(data, (int, float)):
        return bridge.DistSpec("fixed", {"value": float(data)})
    return bridge.DistSpec.from_dict(data)


def sim_config_from_dict(data: dict) -> bridge.SimConfig:
    """Build a SimConfig from a parsed YAML document."""
    kwargs: dict = {}
    for key in (
        "seed",
        "horizon",
        "src_block_interval",
        "dst_block_interval",
        "src_chain_id",
        "dst_chain_id",
        "relayer_count",
        "noise_arrival_rate",
        "victim_arrival_rate",
    ):
        if key in data:
            kwargs[key] = data[key]
    if "consensus_threshold" in data:
        kwargs["consensus_threshold"] = _fraction(data["consensus_threshold"])
    for key in (
        "relay_delay",
        "noise_size",
        "noise_gas",
        "victim_size",
        "victim_tolerance",
        "victim_gas",
    ):
        if key in data:
            kwargs[key] = _dist(data[key])
    if "attacker" in data:
        a = dict(data["attacker"])
        if "theta" in a:
            a["theta"] = _fraction(a["theta"])
        kwargs["attacker"] = bridge.AttackerConfig(**a)
    if "bot" in data:
        kwargs["bot"] = bridge.BotConfig(**data["bot"])
    pools = []
    for entry in data.get("pools", []):
        entry = dict(entry)
        entry.setdefault("protocol", "other")
        pools.append(ingest.pool_from_dict(entry))
    kwargs["pools"] = tuple(pools)
    try:
        return bridge.SimConfig(**kwargs)
    except (TypeError, bridge.InvalidConfig, ValueError) as exc:
        raise ValidationFailure(f"bad simulation config: {exc}") from exc


def detection_config_from_dict(data: dict) -> detector.DetectionConfig:
    kwargs: dict = {}
    if "num_blocks" in data:
        kwargs["num_blocks"] = int(data["num_blocks"])
    if "band_low" in data:
        kwargs["band_low"] = _fraction(data["band_low"])
    if "band_high" in data:
        kwargs["band_high"] = _fraction(data["band_high"])
    if "max_interval" in data:
        kwargs["max_interval"] = float(data["max_interval"])
    if "stablecoins" in data:
        kwargs["stablecoin_set"] = frozenset(
            token.upper() for token in data["stablecoins"]
        )
    try:
        return detector.DetectionConfig(**kwargs)
    except ValueError as exc:
        raise ValidationFailure(f"bad detection config: {exc}") from exc


def _load_yaml(path: str) -> dict:
    with open(path) as handle:
        data = yaml.safe_load(handle)
    if not isinstance(data, dict):
        raise ValidationFailure(f"config file {path} must hold a mapping")
    return data


def _config_path(args_path: Optional[str]) -> Optional[str]:
    return os.environ.get("SANDWICHLAB_CONFIG") or args_path


def _manifest(command: str, config: dict, inputs: dict, seed=None) -> ingest.RunManifest:
    digests = {}
    for name, path in inputs.items():
        if path and os.path.exists(path):
            digests[name] = ingest.file_digest(path)
    return ingest.RunManifest(
        command=command,
        config=config,
        input_digests=digests,
        seed=seed,
        tool_version=__version__,
    )


def cmd_simulate(args) -> int:
    config_path = _config_path(args.config)
    if not config_path:
        raise ValidationFailure("simulate requires --config (or SANDWICHLAB_CONFIG)")
    raw = _load_yaml(config_path)
    config = sim_config_from_dict(raw)
    trace, metrics = bridge.run(config)
    corpus = bridge.extract_corpus(trace)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = _manifest("simulate", raw, {"config": config_path}, seed=config.seed)

    ingest.write_jsonl(
        str(out / "swap_logs.jsonl"),
        (ingest.swap_log_to_dict(log) for log in corpus.swap_logs),
        manifest,
    )
    ingest.write_jsonl(
        str(out / "records.jsonl"),
        (ingest.record_to_dict(record) for record in corpus.records),
        manifest,
    )
    ingest.write_jsonl(
        str(out / "timelines.jsonl"),
        (ingest.timeline_to_dict(timeline) for timeline in corpus.timelines),
        manifest,
    )
    ingest.write_jsonl(str(out / "labels.jsonl"), corpus.labels, manifest)

    metrics_dict = asdict(metrics)
    if metrics.measured_q is not None:
        metrics_dict["measured_q"] = float(metrics.measured_q)
    with open(out / "metrics.json", "w") as handle:
        json.dump(metrics_dict, handle, indent=2, sort_keys=True, default=str)
    manifest.output_paths = sorted(p.name for p in out.iterdir())
    with open(out / "manifest.json", "w") as handle:
        json.dump(asdict(manifest), handle, indent=2, sort_keys=True, default=str)

    print(
        f"simulated {metrics.victims_total} victims "
        f"({metrics.victims_executed} executed, {metrics.victims_reverted} reverted, "
        f"{metrics.victims_dropped} dropped) -> {out}"
    )
    return 0


def cmd_detect(args) -> int:
    config_path = _config_path(args.config)
    cfg = (
        detection_config_from_dict(_load_yaml(config_path))
        if config_path
        else detector.DetectionConfig()
    )
    records = [ingest.record_from_dict(row) for row in ingest.read_jsonl(args.records)]
    logs_by_pool: dict[str, list[detector.SwapLog]] = {}
    for row in ingest.read_jsonl(args.logs):
        log = ingest.swap_log_from_dict(row)
        logs_by_pool.setdefault(log.pool_address, []).append(log)
    for logs in logs_by_pool.values():
        logs.sort(key=detector.SwapLog.position)

    kept = detector.prefilter(records, cfg)
    pairs: list[detector.SandwichPair] = []
    for record in kept:
        pairs.extend(detector.detect_pairs(record, logs_by_pool, cfg))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = _manifest(
        "detect",
        {"num_blocks": cfg.num_blocks, "max_interval": cfg.max_interval},
        {"records": args.records, "logs": args.logs, "config": config_path},
    )
    ingest.write_jsonl(
        str(out / "pairs.jsonl"),
        (ingest.pair_to_dict(pair) for pair in pairs),
        manifest,
    )
    with open(out / "manifest.json", "w") as handle:
        json.dump(asdict(manifest), handle, indent=2, sort_keys=True, default=str)
    print(
        f"{len(records)} records in, {len(kept)} past prefilter, "
        f"{len(pairs)} sandwich pairs -> {out / 'pairs.jsonl'}"
    )
    return 0


def _params_from_values(args) -> tuple[attack.NoiseParams, attack.ReturnRates]:
    params = attack.NoiseParams(
        q=_fraction(args.q),
        p=None if args.p is None else _fraction(args.p),
    )
    rates = attack.ReturnRates(
        r_plus=_fraction(args.r_plus), r_minus=_fraction(args.r_minus)
    )
    return params, rates


def cmd_params(args) -> int:
    if args.timelines:
        timelines = [
            ingest.timeline_from_dict(row) for row in ingest.read_jsonl(args.timelines)
        ]
        if not timelines:
            raise ValidationFailure(f"no timelines in {args.timelines}")
        theta = _fraction(args.theta)
        params = attack.estimate_noise_params(timelines, theta)
        rate_samples = []
        for timeline in timelines:
            frontrun_in = attack.optimal_frontrun_for_timeline(timeline, theta)
            if frontrun_in == 0:
                continue
            _, recovered = attack.replay_timeline(timeline, frontrun_in)
            rate_samples.append(Fraction(recovered - frontrun_in, frontrun_in))
        if not rate_samples:
            raise ValidationFailure("no attackable timelines; cannot estimate rates")
        rates = attack.estimate_return_rates(rate_samples, _fraction(args.percentile))
    else:
        if args.q is None or args.r_plus is None or args.r_minus is None:
            raise ValidationFailure(
                "params needs either --timelines or all of --q/--r-plus/--r-minus"
            )
        params, rates = _params_from_values(args)

    win = attack.success_probability(params)
    expected_rate = attack.expected_profit(1, params, rates)
    print(f"q         = {float(params.q):.4f}")
    print(f"p         = {'n/a' if params.p is None else f'{float(params.p):.4f}'}")
    print(f"r+        = {float(rates.r_plus) * 100:.4f}%")
    print(f"r-        = {float(rates.r_minus) * 100:.4f}%")
    print(f"E(r)      = {float(expected_rate) * 100:.4f}%")
    print(f"success   = {float(win) * 100:.2f}%")
    return 0


def cmd_analyze(args) -> int:
    pairs = [ingest.pair_from_dict(row) for row in ingest.read_jsonl(args.pairs)]
    records = (
        [ingest.record_from_dict(row) for row in ingest.read_jsonl(args.records)]
        if args.records
        else []
    )
    prices = detector.PriceTable.from_csv(args.prices)
    enriched, missing = detector.classify_and_price(pairs, prices)
    report = detector.aggregate(enriched, records)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report_dict = asdict(report)
    report_dict["missing_price_tokens"] = sorted(missing)
    with open(out / "report.json", "w") as handle:
        json.dump(report_dict, handle, indent=2, sort_keys=True, default=str)
    with open(out / "pool_counts.csv", "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["pool_address", "pairs"])
        writer.writerows(report.pool_counts.items())
    with open(out / "chain_pairs.csv", "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["chain_pair", "pairs", "profit_usd"])
        for key, bucket in report.chain_pairs.items():
            writer.writerow([key, bucket["pairs"], bucket["profit_usd"]])
    manifest = _manifest(
        "analyze", {}, {"pairs": args.pairs, "prices": args.prices}
    )
    manifest.output_paths = ["report.json", "pool_counts.csv", "chain_pairs.csv"]
    with open(out / "manifest.json", "w") as handle:
        json.dump(asdict(manifest), handle, indent=2, sort_keys=True, default=str)
    print(
        f"{report.total_pairs} pairs "
        f"({report.single_chain_pairs} same-block, {report.cross_chain_pairs} cross-chain), "
        f"total profit {report.total_profit_usd} USD -> {out / 'report.json'}"
    )
    if missing:
        print(f"warning: no USD price for {len(missing)} token(s): {sorted(missing)}")
    return 0


def _selftest_solver(rng: random.Random, trials: int) -> bool:
    from .amm import Direction, Pool, victim_output_after_frontrun

    for _ in range(trials):
        pool = Pool(
            token_x="X",
            token_y="Y",
            reserve_x=rng.randrange(10**6, 10**12),
            reserve_y=rng.randrange(10**6, 10**12),
            fee=Fraction(rng.choice([0, 5, 30, 100]), 10_000),
        )
        victim_in = rng.randrange(1, pool.reserve_x // 10 + 2)
        tolerance = Fraction(rng.randrange(10, 500), 10_000)
        best = amm.optimal_frontrun_input(pool, victim_in, tolerance)
        quote = amm.quote_output(pool, Direction.X_FOR_Y, victim_in)
        floor = amm.min_out_from_tolerance(quote, tolerance)
        if floor == 0:
            floor = 1
        ok = (
            victim_output_after_frontrun(pool, Direction.X_FOR_Y, best, victim_in)
            >= floor
        )
        over = (
            victim_output_after_frontrun(
                pool, Direction.X_FOR_Y, best + 1, victim_in
            )
            < floor
        )
        if not (ok and over):
            return False
    return True


def _selftest_detector(rng: random.Random, trials: int) -> bool:
    from .amm import Direction

    cfg = detector.DetectionConfig()
    for _ in range(trials):
        pool_address = "0x" + "11" * 20
        logs = []
        victim_block = 50
        for i in range(rng.randrange(4, 16)):
            block = victim_block + rng.randrange(-3, 6)
            logs.append(
                detector.SwapLog(
                    tx_hash=f"0x{i:064x}",
                    block_number=block,
                    log_index=rng.randrange(100),
                    pool_address=pool_address,
                    chain_id=56,
                    direction=rng.choice([Direction.X_FOR_Y, Direction.Y_FOR_X]),
                    token_in_amount=rng.randrange(1, 10**6),
                    token_out_amount=rng.randrange(1, 10**6),
                    sender="0x" + "22" * 20,
                    recipient="0x" + f"{rng.randrange(4):02x}" * 20,
                    gas_price=rng.randrange(10**9),
                    timestamp=float(block * 3),
                )
            )
        victim = detector.SwapLog(
            tx_hash="0x" + "ff" * 32,
            block_number=victim_block,
            log_index=1_000,
            pool_address=pool_address,
            chain_id=56,
            direction=Direction.X_FOR_Y,
            token_in_amount=10**6,
            token_out_amount=10**6,
            sender="0x" + "33" * 20,
            recipient="0x" + "33" * 20,
            gas_price=5 * 10**9,
            timestamp=float(victim_block * 3),
        )
        logs.append(victim)
        logs.sort(key=detector.SwapLog.position)
        record = detector.CrossChainTx(
            record_id="r0",
            src_tx_hash="0x" + "01" * 32,
            src_chain_id=1,
            src_block_number=10,
            src_timestamp=float(victim_block * 3 - 60),
            dst_tx_hash=victim.tx_hash,
            dst_chain_id=56,
            dst_block_number=victim_block,
            dst_timestamp=victim.timestamp,
            dst_gas_price=victim.gas_price,
            hops=(
                detector.VictimHop(
                    pool_address=pool_address,
                    token_in="X",
                    token_out="Y",
                    direction=Direction.X_FOR_Y,
                    amount_in=victim.token_in_amount,
                    amount_out=victim.token_out_amount,
                    min_return=0,
                ),
            ),
        )
        fast = detector.detect_pairs(record, {pool_address: logs}, cfg)
        slow = detector.reference_detect_pairs(record, {pool_address: logs}, cfg)
        if fast != slow:
            return False
    return True


def _selftest_replay(rng: random.Random, trials: int) -> bool:
    from .amm import Direction, Pool, SwapRequest

    for _ in range(trials):
        pool = Pool(
            token_x="X",
            token_y="Y",
            reserve_x=rng.randrange(10**8, 10**12),
            reserve_y=rng.randrange(10**8, 10**12),
            fee=Fraction(rng.choice([0, 30]), 10_000),
        )
        victim_in = rng.randrange(1_000, pool.reserve_x // 20)
        tolerance = Fraction(rng.randrange(10, 300), 10_000)
        plan = amm.plan_sandwich(pool, SwapRequest(Direction.X_FOR_Y, victim_in), tolerance)
        quote = amm.quote_output(pool, Direction.X_FOR_Y, victim_in)
        timeline = attack.PoolTimeline(
            pool=pool,
            noisy_swaps=(),
            victim=SwapRequest(
                Direction.X_FOR_Y,
                victim_in,
                min_out=amm.min_out_from_tolerance(quote, tolerance),
            ),
            victim_tolerance=tolerance,
        )
        executed, recovered = attack.replay_timeline(timeline, plan.frontrun_in)
        if not executed or recovered != plan.backrun_out:
            return False
    return True


def cmd_selftest(args) -> int:
    rng = random.Random(20_240_817)
    checks = [
        ("front-run solver maximality", _selftest_solver(rng, 60)),
        ("detector fast == reference", _selftest_detector(rng, 120)),
        ("timeline replay == sandwich plan", _selftest_replay(rng, 60)),
    ]
    failed = 0
    for name, ok in checks:
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
        failed += 0 if ok else 1
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sandwichlab",
        description="Cross-chain sandwich-attack laboratory: simulate, detect, analyze.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run the bridge simulator")
    p.add_argument("--config", help="YAML simulation config")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("detect", help="match sandwich pairs in exported logs")
    p.add_argument("--records", required=True, help="cross-chain records JSONL")
    p.add_argument("--logs", required=True, help="swap logs JSONL")
    p.add_argument("--config", help="YAML detection config")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("params", help="estimate or evaluate model parameters")
    p.add_argument("--timelines", help="pool timelines JSONL")
    p.add_argument("--theta", default="1", help="extraction fraction (default 1)")
    p.add_argument("--percentile", default="95", help="outlier-trim percentile")
    p.add_argument("--q", help="empty-window probability (direct mode)")
    p.add_argument("--p", help="non-loss probability given noise (direct mode)")
    p.add_argument("--r-plus", dest="r_plus", help="non-loss return rate")
    p.add_argument("--r-minus", dest="r_minus", help="loss return rate")
    p.set_defaults(func=cmd_params)

    p = sub.add_parser("analyze", help="aggregate detected pairs into a report")
    p.add_argument("--pairs", required=True, help="detected pairs JSONL")
    p.add_argument("--prices", required=True, help="token price CSV")
    p.add_argument("--records", help="cross-chain records JSONL (chain-pair stats)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("selftest", help="cross-check against reference oracles")
    p.set_defaults(func=cmd_selftest)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValidationFailure, bridge.InvalidConfig, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
