"""Offline and online ranking-service simulation loops.

Offline mode serves every user exactly once with true relevance labels and
accrues expected gains. Online mode serves one uniformly sampled user per
step: the ranker sees only relevance estimated from past feedback
(cumulative purchases over accumulated exposure), purchases are Bernoulli
samples of examination probability times true relevance, and exposure gain
accrues deterministically from the expected examination mass.

Every run owns its own seeded random generator and gain ledger, so runs are
reproducible bit for bit and can execute concurrently without sharing state.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import Catalog, PositionModel, ProviderProfile, RankList, RelevanceTable, provider_arrays
from .metrics import (
    GainLedger,
    RunResult,
    alignment_diagnostics,
    andcg,
    cndcg_update,
    dcg,
    ideal_dcg,
    unfairness,
)
from .rankers import PolicyConfig, allocate_vertical, offline_rank_user, online_step_rank

__all__ = [
    "OnlineState",
    "OnlineTrace",
    "SimConfig",
    "apply_expected_feedback",
    "apply_feedback",
    "estimate_relevance",
    "make_online_state",
    "prefilter_candidates",
    "run_offline",
    "run_online",
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SimConfig:
    """Simulation protocol parameters.

    ``cutoff`` (the evaluation prefix) defaults to the full list size.
    ``checkpoint_every`` controls how often the online loop records a
    (step, cndcg, unfairness) sample; the final step is always recorded.
    """

    list_size: int = 5
    total_steps: int = 250_000
    gamma: float = 0.995
    cutoff: int | None = None
    prefilter_size: int = 20
    prefilter_noise: float = 0.1
    checkpoint_every: int = 1000
    mode: str = "offline"
    record_ndcg: bool = False

    def __post_init__(self) -> None:
        if self.list_size < 1:
            raise ValueError("list_size must be positive")
        if self.total_steps < 0:
            raise ValueError("total_steps must be nonnegative")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        if self.cutoff is not None and not 1 <= self.cutoff <= self.list_size:
            raise ValueError("cutoff must lie in [1, list_size]")
        if self.prefilter_size < self.list_size:
            raise ValueError("prefilter_size must be at least list_size")
        if self.prefilter_noise < 0:
            raise ValueError("prefilter_noise must be nonnegative")
        if self.checkpoint_every < 1:
            raise ValueError("checkpoint_every must be positive")
        if self.mode not in ("offline", "online"):
            raise ValueError("mode must be 'offline' or 'online'")

    @property
    def eval_cutoff(self) -> int:
        return self.cutoff if self.cutoff is not None else self.list_size


@dataclass
class OnlineState:
    """Mutable state of one online run: ledger, estimator counters, rng.

    The estimator's per-(user, item) exposure and purchase counters are the
    ledger's; this object adds the candidate sets, the running discounted
    effectiveness, and the step counter.
    """

    ledger: GainLedger
    candidate_sets: list[np.ndarray]
    rng: np.random.Generator
    cndcg: float = 0.0
    step: int = 0
    ideal_cache: np.ndarray | None = None

    @property
    def estimator_exposure(self) -> dict[tuple[int, int], float]:
        return self.ledger.item_exposure

    @property
    def estimator_purchases(self) -> dict[tuple[int, int], int]:
        return self.ledger.item_purchases

    def relevance_of(self, user: int, items: np.ndarray) -> np.ndarray:
        """Estimated relevance for a candidate vector (see estimate_relevance)."""
        exposure = self.ledger.item_exposure
        purchases = self.ledger.item_purchases
        user = int(user)
        out = np.empty(len(items), dtype=np.float64)
        for j, item in enumerate(items):
            key = (user, int(item))
            e = exposure.get(key, 0.0)
            if e <= 0.0:
                out[j] = 1.0
            else:
                out[j] = min(1.0, purchases.get(key, 0) / e)
        return out


def estimate_relevance(user: int, item: int, state: OnlineState) -> float:
    """Unbiased estimator cumB / E, clamped to [0, 1].

    Never-exposed pairs read the optimistic prior 1.0, which guarantees that
    every candidate is eventually tried without an explicit exploration
    bonus. The clamp is needed because exposure accrues in fractional
    examination-probability units while purchases are whole events, so the
    raw ratio can transiently exceed 1.
    """
    key = (int(user), int(item))
    e = state.ledger.item_exposure.get(key, 0.0)
    if e <= 0.0:
        return 1.0
    return min(1.0, state.ledger.item_purchases.get(key, 0) / e)


def apply_feedback(
    ranklist: RankList,
    user: int,
    rel: RelevanceTable,
    profiles: Sequence[ProviderProfile],
    catalog: Catalog,
    state: OnlineState,
    pm: PositionModel,
) -> np.ndarray:
    """Simulate one user's interaction with a served list.

    Exposure gain accrues deterministically (examination probability times
    the provider's exposure value); purchases are Bernoulli draws with
    probability p_k * relevance, paying the provider's purchase value and
    feeding the estimator's counters. Returns the per-position purchase
    outcomes.
    """
    ledger = state.ledger
    user = int(user)
    draws = state.rng.random(len(ranklist.positions))
    bought = np.zeros(len(ranklist.positions), dtype=bool)
    for k0, item in enumerate(ranklist.positions):
        p_k = float(pm.probs[k0])
        g = int(catalog.group_of[item])
        profile = profiles[g]
        ledger.exposure_gain[g] += p_k * profile.exposure_value
        if draws[k0] < p_k * rel.get(user, item):
            ledger.purchase_gain[g] += profile.purchase_value
            ledger.add_item_purchase(user, item)
            bought[k0] = True
        ledger.add_item_exposure(user, item, p_k)
        ledger.group_exposure[g] += p_k
    ledger.step_count += 1
    return bought


def apply_expected_feedback(
    ranklist: RankList,
    user: int,
    rel: RelevanceTable,
    profiles: Sequence[ProviderProfile],
    catalog: Catalog,
    ledger: GainLedger,
    pm: PositionModel,
) -> None:
    """Accrue one served list's expected gains (offline mode; no sampling)."""
    user = int(user)
    for k0, item in enumerate(ranklist.positions):
        p_k = float(pm.probs[k0])
        g = int(catalog.group_of[item])
        profile = profiles[g]
        ledger.exposure_gain[g] += p_k * profile.exposure_value
        ledger.purchase_gain[g] += p_k * rel.get(user, item) * profile.purchase_value
        ledger.add_item_exposure(user, item, p_k)
        ledger.group_exposure[g] += p_k
    ledger.step_count += 1


def prefilter_candidates(
    user: int,
    rel: RelevanceTable,
    item_count: int,
    size: int,
    noise_sd: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Coarse-ranking stand-in: top ``size`` items by noisy true relevance.

    The degraded signal is the true relevance plus zero-mean Gaussian noise;
    with noise_sd = 0 it is exactly the true top ``size``. The result is
    fixed for the run (callers draw it once per user).
    """
    if size > item_count:
        raise ValueError(f"prefilter size {size} exceeds item count {item_count}")
    noisy = rel.dense_row(user, item_count) + rng.normal(0.0, noise_sd, item_count)
    order = np.lexsort((np.arange(item_count), -noisy))
    return np.sort(order[:size]).astype(np.int64)


@dataclass
class OnlineTrace:
    """Per-run time series: (step, cndcg, unfairness) checkpoints."""

    checkpoints: list[tuple[int, float, float]] = field(default_factory=list)
    ndcg_series: np.ndarray | None = None


def _result(
    mode: str,
    policy: str,
    alpha: float,
    seed: int,
    effectiveness: float,
    ledger: GainLedger,
    profiles: Sequence[ProviderProfile],
    wall: float,
) -> RunResult:
    _, _, y = provider_arrays(profiles)
    if ledger.step_count > 0:
        unfair = unfairness(ledger.averaged_gains(), y)
    else:
        unfair = math.nan
    try:
        diag = alignment_diagnostics(ledger, profiles)
        msd, pearson = diag.msd, diag.pearson
    except ValueError:
        msd, pearson = math.nan, math.nan
    return RunResult(
        mode=mode,
        policy=policy,
        alpha=alpha,
        seed=seed,
        effectiveness=effectiveness,
        unfairness=unfair,
        msd=msd,
        pearson=pearson,
        wall_time=wall,
    )


def _check_dataset(dataset, cfg: SimConfig) -> tuple[Catalog, list[ProviderProfile], RelevanceTable]:
    catalog, profiles, rel = dataset.catalog, dataset.profiles, dataset.relevance
    if len(profiles) != catalog.provider_count:
        raise ValueError("profile list does not match the catalog's provider count")
    if catalog.item_count < cfg.list_size:
        raise ValueError("catalog has fewer items than the list size")
    if rel.max_item_id() >= catalog.item_count:
        raise ValueError("relevance table references items beyond the catalog")
    return catalog, profiles, rel


def run_offline(dataset, policy: str, alpha: float, seed: int, cfg: SimConfig) -> RunResult:
    """Serve every user once with true relevance and expected-gain accrual.

    Users are visited in a seeded shuffled order (the same order feeds the
    vertical allocator, which revisits it level by level). Effectiveness is
    the mean NDCG at the evaluation cutoff; unfairness is computed on
    per-list averaged gains.
    """
    catalog, profiles, rel = _check_dataset(dataset, cfg)
    pm = PositionModel.logarithmic(cfg.list_size)
    policy_cfg = PolicyConfig(kind=policy, alpha=alpha)
    rng = np.random.default_rng(seed)
    user_order = rng.permutation(rel.user_count)
    # the visit order is a pure function of the run seed; log its head so a
    # run can be cross-checked without rerunning
    logger.debug("offline run policy=%s alpha=%s seed=%s user order head=%s", policy, alpha, seed, user_order[:8])

    start = time.perf_counter()
    ledger = GainLedger.empty(catalog.provider_count)
    if policy == "EquityRankV":
        lists = allocate_vertical(user_order, rel, ledger, catalog, profiles, alpha, pm)
    else:
        candidates = np.arange(catalog.item_count, dtype=np.int64)
        lists = []
        for user in user_order:
            rl = offline_rank_user(policy_cfg, candidates, int(user), rel, ledger, catalog, profiles, pm)
            apply_expected_feedback(rl, int(user), rel, profiles, catalog, ledger, pm)
            lists.append(rl)
    effectiveness = andcg(lists, rel, cfg.eval_cutoff, pm)
    wall = time.perf_counter() - start
    return _result("offline", policy, alpha, seed, effectiveness, ledger, profiles, wall)


def make_online_state(dataset, seed: int, cfg: SimConfig) -> OnlineState:
    """Initialize an online run: seeded rng, prefiltered candidate sets, caches.

    The prefilter size is capped at the catalog size so small datasets can
    run with the protocol defaults.
    """
    catalog, profiles, rel = _check_dataset(dataset, cfg)
    pm = PositionModel.logarithmic(cfg.list_size)
    rng = np.random.default_rng(seed)
    size = min(cfg.prefilter_size, catalog.item_count)
    candidate_sets = [
        prefilter_candidates(u, rel, catalog.item_count, size, cfg.prefilter_noise, rng)
        for u in range(rel.user_count)
    ]
    ideal = np.array([ideal_dcg(rel.user_values(u), cfg.eval_cutoff, pm) for u in range(rel.user_count)])
    return OnlineState(
        ledger=GainLedger.empty(catalog.provider_count),
        candidate_sets=candidate_sets,
        rng=rng,
        ideal_cache=ideal,
    )


def run_online(dataset, policy: str, alpha: float, seed: int, cfg: SimConfig) -> tuple[RunResult, OnlineTrace]:
    """Simulate the online service loop for ``cfg.total_steps`` steps.

    Each step samples a user uniformly, ranks their prefiltered candidates
    with estimated relevance, applies sampled feedback, and updates the
    discounted cumulative NDCG (computed against true relevance). Emits the
    final result plus the checkpoint time series.
    """
    if policy == "EquityRankV":
        raise ValueError("EquityRankV requires offline mode (vertical allocation needs all users at once)")
    catalog, profiles, rel = _check_dataset(dataset, cfg)
    pm = PositionModel.logarithmic(cfg.list_size)
    policy_cfg = PolicyConfig(kind=policy, alpha=alpha)
    _, _, y = provider_arrays(profiles)

    start = time.perf_counter()
    state = make_online_state(dataset, seed, cfg)
    trace = OnlineTrace()
    ndcg_series = np.empty(cfg.total_steps, dtype=np.float64) if cfg.record_ndcg else None

    for t in range(1, cfg.total_steps + 1):
        user = int(state.rng.integers(rel.user_count))
        candidates = state.candidate_sets[user]
        rl = online_step_rank(policy_cfg, candidates, user, state, state.ledger, catalog, profiles, pm)
        apply_feedback(rl, user, rel, profiles, catalog, state, pm)
        ideal = state.ideal_cache[user]
        ndcg_t = 1.0 if ideal == 0.0 else dcg(rl, rel, cfg.eval_cutoff, pm) / ideal
        state.cndcg = cndcg_update(state.cndcg, ndcg_t, cfg.gamma)
        state.step = t
        if ndcg_series is not None:
            ndcg_series[t - 1] = ndcg_t
        if t % cfg.checkpoint_every == 0 or t == cfg.total_steps:
            trace.checkpoints.append((t, state.cndcg, unfairness(state.ledger.averaged_gains(), y)))

    wall = time.perf_counter() - start
    trace.ndcg_series = ndcg_series
    result = _result("online", policy, alpha, seed, state.cndcg, state.ledger, profiles, wall)
    return result, trace
