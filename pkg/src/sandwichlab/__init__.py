"""Cross-chain sandwich-attack laboratory.

Exact constant-product swap math and sandwich construction, a
discrete-event simulator of cross-chain bridge swaps with attacker,
bot, and noise agents, a heuristic sandwich-pair detector over exported
swap logs, and codecs/CLI tying the pieces together.
"""

from .amm import (
    MAX_AMOUNT,
    AmmError,
    Direction,
    Overflow,
    Pool,
    PoolProtocol,
    SandwichPlan,
    SwapOutcome,
    SwapRequest,
    ZeroInput,
    backrun_output,
    execute_swap,
    largest_frontrun_for_min_out,
    max_extractable,
    min_out_from_tolerance,
    optimal_frontrun_input,
    plan_sandwich,
    quote_output,
    victim_output_after_frontrun,
)
from .attack import (
    EmptyInput,
    MalformedSequence,
    NoiseParams,
    OrderingScenario,
    PoolTimeline,
    ReturnRates,
    TxLabel,
    classify_ordering,
    estimate_noise_params,
    estimate_return_rates,
    expected_profit,
    optimal_frontrun_for_timeline,
    replay_timeline,
    success_probability,
)
from .bridge import (
    AttackerConfig,
    BotConfig,
    Corpus,
    DistSpec,
    InvalidConfig,
    SimConfig,
    SimMetrics,
    SimTrace,
    Simulation,
    compute_metrics,
    extract_corpus,
)
from .detector import (
    Classification,
    CrossChainTx,
    DetectionConfig,
    MissingPrice,
    PriceTable,
    Report,
    SandwichPair,
    SwapLog,
    VictimHop,
    aggregate,
    classify_and_price,
    detect_pairs,
    prefilter,
    reference_detect_pairs,
)
from .ingest import (
    DEFAULT_REGISTRY,
    BridgeIntent,
    MalformedData,
    RawLogRecord,
    RunManifest,
    SignatureRegistry,
    SKIP,
    UnknownSelector,
    decode_bridge_intent,
    decode_swap_log,
    encode_bridge_intent,
)

from .bridge import run as run_simulation

__version__ = "0.1.0"
