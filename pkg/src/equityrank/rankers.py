"""Ranking policies behind a single dispatch interface.

All policies consume a candidate set, a relevance source (true labels or an
online estimator), and a gain ledger snapshot, and emit a top-K list:

* ``TopK``       -- pure relevance ordering.
* ``PoorK``      -- slot by slot, serve the provider with the lowest
                    gain-to-target ratio, picking its most relevant item.
* ``FairCoStar`` -- proportional-controller boost for lagging providers.
* ``MMFStar``    -- per-slot blend of normalized relevance and a worst-off
                    provider indicator; degrades to PoorK at alpha = 1.
* ``EquityRank`` -- relevance plus the analytic fairness gradient of each
                    item's provider, scaled by the item's gain weights.
* ``EquityRankV``-- EquityRank with vertical allocation: offline only, all
                    users' slot k is filled before any slot k+1.

Rankers read raw cumulative gains (no per-step averaging) and recompute the
fairness gradient from scratch on every request; the provider count is small
compared to the item count, so this is cheap.

Tie-breaking is deterministic everywhere: score descending, then relevance
descending, then item id ascending ("relevance_then_id"); the "id" rule
skips the relevance key.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import Catalog, PositionModel, ProviderProfile, RankList, provider_arrays
from .metrics import GainLedger, fairness_gradient

__all__ = [
    "POLICY_KINDS",
    "TIE_BREAK_RULES",
    "PolicyConfig",
    "ScoreVector",
    "allocate_vertical",
    "equityrank_scores",
    "offline_rank_user",
    "online_step_rank",
    "rank_by_scores",
    "rank_fairco_star",
    "rank_mmf_star",
    "rank_poork",
    "relevance_scores",
]

POLICY_KINDS = ("TopK", "PoorK", "FairCoStar", "MMFStar", "EquityRank", "EquityRankV")
TIE_BREAK_RULES = ("relevance_then_id", "id")


@dataclass(frozen=True)
class PolicyConfig:
    """A ranking policy selection with its balance parameter."""

    kind: str
    alpha: float = 0.0
    tie_break: str = "relevance_then_id"

    def __post_init__(self) -> None:
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}; expected one of {POLICY_KINDS}")
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")
        if self.tie_break not in TIE_BREAK_RULES:
            raise ValueError(f"unknown tie-break rule {self.tie_break!r}")


@dataclass(frozen=True)
class ScoreVector:
    """Per-candidate scores plus the relevance used for tie-breaking."""

    item_ids: np.ndarray
    scores: np.ndarray
    relevance: np.ndarray

    def __post_init__(self) -> None:
        if not (self.item_ids.shape == self.scores.shape == self.relevance.shape):
            raise ValueError("item_ids, scores, and relevance must align")
        if not np.all(np.isfinite(self.scores)):
            raise ValueError("scores must be finite")


def _candidate_array(candidates: Sequence[int] | np.ndarray, catalog: Catalog) -> np.ndarray:
    ids = np.asarray(candidates, dtype=np.int64)
    if ids.ndim != 1 or ids.size == 0:
        raise ValueError("candidates must be a nonempty 1-d sequence of item ids")
    if ids.min() < 0 or ids.max() >= catalog.item_count:
        raise ValueError("candidate set contains an unknown item id")
    return ids


def _sorted_order(sv: ScoreVector, tie_break: str) -> np.ndarray:
    # np.lexsort sorts by the last key first, so keys are listed least
    # significant to most significant.
    if tie_break == "relevance_then_id":
        return np.lexsort((sv.item_ids, -sv.relevance, -sv.scores))
    if tie_break == "id":
        return np.lexsort((sv.item_ids, -sv.scores))
    raise ValueError(f"unknown tie-break rule {tie_break!r}")


def rank_by_scores(sv: ScoreVector, k: int, tie_break: str = "relevance_then_id") -> np.ndarray:
    """Top-``k`` item ids by descending score with deterministic tie-breaking.

    When k is small relative to the candidate count, an O(n) partition
    narrows the field to the candidates at or above the k-th score (ties
    included) before the full sort, without changing the selected list.
    """
    size = sv.item_ids.size
    if size < k:
        raise ValueError(f"need at least {k} candidates, got {size}")
    if 4 * k <= size:
        neg = -sv.scores
        kth = np.partition(neg, k - 1)[k - 1]
        keep = np.flatnonzero(neg <= kth)
        sv = ScoreVector(sv.item_ids[keep], sv.scores[keep], sv.relevance[keep])
    order = _sorted_order(sv, tie_break)
    return sv.item_ids[order[:k]]


def _argbest(ids: np.ndarray, scores: np.ndarray, rel: np.ndarray) -> int:
    """Index of the single best entry under (score desc, rel desc, id asc)."""
    tied = np.flatnonzero(scores == scores.max())
    if tied.size == 1:
        return int(tied[0])
    sub = tied[np.lexsort((ids[tied], -rel[tied]))]
    return int(sub[0])


def relevance_scores(candidates, user: int, rel_source, catalog: Catalog) -> ScoreVector:
    """TopK scoring: the score of an item is its relevance."""
    ids = _candidate_array(candidates, catalog)
    rel = rel_source.relevance_of(user, ids)
    return ScoreVector(item_ids=ids, scores=rel, relevance=rel)


# ---------------------------------------------------------------------------
# EquityRank
# ---------------------------------------------------------------------------


def _equity_score_values(
    rel: np.ndarray,
    groups: np.ndarray,
    raw_gains: np.ndarray,
    ve: np.ndarray,
    vb: np.ndarray,
    y: np.ndarray,
    alpha: float,
) -> np.ndarray:
    if alpha == 0.0:
        return rel.copy()
    b = fairness_gradient(raw_gains, y)
    return rel + alpha * b[groups] * (ve[groups] + rel * vb[groups])


def equityrank_scores(
    candidates,
    user: int,
    rel_source,
    ledger: GainLedger,
    catalog: Catalog,
    profiles: Sequence[ProviderProfile],
    alpha: float,
) -> ScoreVector:
    """Gradient scores: relevance plus the provider's fairness gradient scaled
    by the item's marginal gain per unit exposure.

    The fairness gradient is computed once per call from the ledger's raw
    cumulative gains, then broadcast to candidates through their groups.
    """
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    ids = _candidate_array(candidates, catalog)
    rel = rel_source.relevance_of(user, ids)
    groups = catalog.group_of[ids]
    ve, vb, y = provider_arrays(profiles)
    scores = _equity_score_values(rel, groups, ledger.raw_gains(), ve, vb, y, alpha)
    return ScoreVector(item_ids=ids, scores=scores, relevance=rel)


# ---------------------------------------------------------------------------
# Baselines
# ---------------------------------------------------------------------------


def rank_poork(
    candidates,
    user: int,
    rel_source,
    ledger: GainLedger,
    catalog: Catalog,
    profiles: Sequence[ProviderProfile],
    pm: PositionModel,
) -> RankList:
    """Serve the poorest provider first.

    Each slot goes to the provider with the smallest gain-to-target ratio
    among providers that still have candidates (ties: lowest provider id),
    filled with that provider's most relevant remaining item (ties: lowest
    item id). The placed item's expected gain, weighted by the slot's
    examination probability, is added to a slot-local gain copy before the
    next slot is decided.
    """
    ids = _candidate_array(candidates, catalog)
    k_slots = pm.list_size
    if ids.size < k_slots:
        raise ValueError(f"need at least {k_slots} candidates, got {ids.size}")
    rel = rel_source.relevance_of(user, ids)
    groups = catalog.group_of[ids]
    ve, vb, y = provider_arrays(profiles)
    gains = ledger.raw_gains().copy()

    queues: dict[int, deque[int]] = {}
    for idx in np.lexsort((ids, -rel)):
        queues.setdefault(int(groups[idx]), deque()).append(int(idx))

    chosen: list[int] = []
    for k0 in range(k_slots):
        live = [g for g in sorted(queues) if queues[g]]
        ratios = [gains[g] / y[g] for g in live]
        g_star = live[int(np.argmin(ratios))]
        idx = queues[g_star].popleft()
        chosen.append(int(ids[idx]))
        gains[g_star] += pm.probs[k0] * (ve[g_star] + rel[idx] * vb[g_star])
    return RankList(tuple(chosen), user)


def rank_fairco_star(
    candidates,
    user: int,
    rel_source,
    ledger: GainLedger,
    catalog: Catalog,
    profiles: Sequence[ProviderProfile],
    alpha: float,
    pm: PositionModel,
    tie_break: str = "relevance_then_id",
) -> RankList:
    """Proportional-controller scoring under the gain-to-target metric.

    A provider lagging behind the currently best-served provider gets its
    items boosted by alpha times the ratio shortfall; the error term is
    clipped at zero so no item scores below its own relevance.
    """
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    ids = _candidate_array(candidates, catalog)
    rel = rel_source.relevance_of(user, ids)
    groups = catalog.group_of[ids]
    _, _, y = provider_arrays(profiles)
    ratios = ledger.raw_gains() / y
    err = np.maximum(0.0, ratios.max() - ratios)
    sv = ScoreVector(item_ids=ids, scores=rel + alpha * err[groups], relevance=rel)
    return RankList(tuple(rank_by_scores(sv, pm.list_size, tie_break)), user)


def rank_mmf_star(
    candidates,
    user: int,
    rel_source,
    ledger: GainLedger,
    catalog: Catalog,
    profiles: Sequence[ProviderProfile],
    alpha: float,
    pm: PositionModel,
) -> RankList:
    """Per-slot blend of normalized relevance and a worst-off provider bonus.

    score = (1 - alpha) * minmax(relevance) + alpha * [provider is worst off],
    recomputed per slot over the remaining candidates with the same
    slot-local gain updates as PoorK. alpha = 0 reproduces TopK; alpha = 1
    reproduces PoorK.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1] for this policy")
    ids = _candidate_array(candidates, catalog)
    k_slots = pm.list_size
    if ids.size < k_slots:
        raise ValueError(f"need at least {k_slots} candidates, got {ids.size}")
    rel = rel_source.relevance_of(user, ids)
    groups = catalog.group_of[ids]
    ve, vb, y = provider_arrays(profiles)
    gains = ledger.raw_gains().copy()
    avail = np.ones(ids.size, dtype=bool)

    chosen: list[int] = []
    for k0 in range(k_slots):
        idxs = np.flatnonzero(avail)
        r = rel[idxs]
        lo, hi = r.min(), r.max()
        norm = (r - lo) / (hi - lo) if hi > lo else np.zeros_like(r)
        live = np.unique(groups[idxs])
        worst = int(live[int(np.argmin(gains[live] / y[live]))])
        scores = (1.0 - alpha) * norm + alpha * (groups[idxs] == worst)
        pick = int(idxs[_argbest(ids[idxs], scores, r)])
        chosen.append(int(ids[pick]))
        gains[groups[pick]] += pm.probs[k0] * (ve[groups[pick]] + rel[pick] * vb[groups[pick]])
        avail[pick] = False
    return RankList(tuple(chosen), user)


def _rank_equityrank_slotwise(
    candidates,
    user: int,
    rel_source,
    ledger: GainLedger,
    catalog: Catalog,
    profiles: Sequence[ProviderProfile],
    alpha: float,
    pm: PositionModel,
) -> RankList:
    """Offline EquityRank: refresh the gradient after every filled slot."""
    ids = _candidate_array(candidates, catalog)
    k_slots = pm.list_size
    if ids.size < k_slots:
        raise ValueError(f"need at least {k_slots} candidates, got {ids.size}")
    rel = rel_source.relevance_of(user, ids)
    groups = catalog.group_of[ids]
    ve, vb, y = provider_arrays(profiles)
    gains = ledger.raw_gains().copy()
    avail = np.ones(ids.size, dtype=bool)

    chosen: list[int] = []
    for k0 in range(k_slots):
        idxs = np.flatnonzero(avail)
        r = rel[idxs]
        scores = _equity_score_values(r, groups[idxs], gains, ve, vb, y, alpha)
        pick = int(idxs[_argbest(ids[idxs], scores, r)])
        chosen.append(int(ids[pick]))
        gains[groups[pick]] += pm.probs[k0] * (ve[groups[pick]] + rel[pick] * vb[groups[pick]])
        avail[pick] = False
    return RankList(tuple(chosen), user)


# ---------------------------------------------------------------------------
# Vertical allocation
# ---------------------------------------------------------------------------


def allocate_vertical(
    users: Sequence[int],
    rel,
    ledger: GainLedger,
    catalog: Catalog,
    profiles: Sequence[ProviderProfile],
    alpha: float,
    pm: PositionModel,
) -> list[RankList]:
    """Fill slot k for every user before any slot k+1 (offline only).

    Iterates position levels top to bottom, visiting users in the given
    order within each level. Every assignment takes the item with the
    largest current gradient among the user's unassigned items and
    immediately commits its expected gain (weighted by the level's
    examination probability) to the ledger, so later assignments see the
    updated provider balance. Returns one list per user, in input order.
    """
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    n = catalog.item_count
    if n < pm.list_size:
        raise ValueError(f"need at least {pm.list_size} items, got {n}")
    user_ids = [int(u) for u in users]
    rows = {u: rel.relevance_of(u, np.arange(n, dtype=np.int64)) for u in user_ids}
    groups = catalog.group_of
    ve, vb, y = provider_arrays(profiles)
    avail = {u: np.ones(n, dtype=bool) for u in user_ids}
    slots: dict[int, list[int]] = {u: [] for u in user_ids}

    for k0 in range(pm.list_size):
        p_k = pm.probs[k0]
        for u in user_ids:
            idxs = np.flatnonzero(avail[u])
            r = rows[u][idxs]
            scores = _equity_score_values(r, groups[idxs], ledger.raw_gains(), ve, vb, y, alpha)
            item = int(idxs[_argbest(idxs, scores, r)])
            g = int(groups[item])
            r_item = float(rows[u][item])
            ledger.exposure_gain[g] += p_k * ve[g]
            ledger.purchase_gain[g] += p_k * r_item * vb[g]
            ledger.group_exposure[g] += p_k
            ledger.add_item_exposure(u, item, p_k)
            avail[u][item] = False
            slots[u].append(item)
    ledger.step_count += len(user_ids)
    return [RankList(tuple(slots[u]), u) for u in user_ids]


# ---------------------------------------------------------------------------
# Dispatch
# ---------------------------------------------------------------------------


def _rank_scored(sv: ScoreVector, user: int, pm: PositionModel, tie_break: str) -> RankList:
    return RankList(tuple(rank_by_scores(sv, pm.list_size, tie_break)), user)


def online_step_rank(
    policy: PolicyConfig,
    candidates,
    user: int,
    estimator,
    ledger: GainLedger,
    catalog: Catalog,
    profiles: Sequence[ProviderProfile],
    pm: PositionModel,
) -> RankList:
    """Rank one user's candidates with estimated relevance (online mode)."""
    if policy.kind == "EquityRankV":
        raise ValueError("EquityRankV requires offline mode (vertical allocation needs all users at once)")
    if policy.kind == "TopK":
        return _rank_scored(relevance_scores(candidates, user, estimator, catalog), user, pm, policy.tie_break)
    if policy.kind == "EquityRank":
        sv = equityrank_scores(candidates, user, estimator, ledger, catalog, profiles, policy.alpha)
        return _rank_scored(sv, user, pm, policy.tie_break)
    if policy.kind == "FairCoStar":
        return rank_fairco_star(candidates, user, estimator, ledger, catalog, profiles, policy.alpha, pm, policy.tie_break)
    if policy.kind == "PoorK":
        return rank_poork(candidates, user, estimator, ledger, catalog, profiles, pm)
    if policy.kind == "MMFStar":
        return rank_mmf_star(candidates, user, estimator, ledger, catalog, profiles, policy.alpha, pm)
    raise ValueError(f"unknown policy kind {policy.kind!r}")


def offline_rank_user(
    policy: PolicyConfig,
    candidates,
    user: int,
    rel,
    ledger: GainLedger,
    catalog: Catalog,
    profiles: Sequence[ProviderProfile],
    pm: PositionModel,
) -> RankList:
    """Rank one user's candidates with true relevance (offline mode).

    EquityRank refreshes its gradient per slot here; the other policies
    behave exactly as in the online dispatch.
    """
    if policy.kind == "EquityRankV":
        raise ValueError("EquityRankV lists are built jointly; use allocate_vertical")
    if policy.kind == "EquityRank":
        return _rank_equityrank_slotwise(candidates, user, rel, ledger, catalog, profiles, policy.alpha, pm)
    return online_step_rank(policy, candidates, user, rel, ledger, catalog, profiles, pm)
