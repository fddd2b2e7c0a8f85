"""Evaluation mathematics for fairness-aware ranking.

Effectiveness is measured with position-discounted gain (DCG/NDCG and its
offline average / online discounted-cumulative forms). Provider-side
fairness compares accrued gains against each provider's declared
gain target: the system is perfectly fair when gains are proportional to
targets, and the unfairness score is the mean squared cross-provider
disparity of target-weighted gains. The analytic gradient of fairness with
respect to each provider's gain drives the gradient-based rankers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .core import Catalog, PositionModel, ProviderProfile, RankList, RelevanceTable

__all__ = [
    "AlignmentDiagnostics",
    "GainLedger",
    "RunResult",
    "RESULT_FIELDS",
    "alignment_diagnostics",
    "andcg",
    "cndcg_update",
    "dcg",
    "expected_gain",
    "exposure_unfairness",
    "fairness_gradient",
    "format_float",
    "ideal_dcg",
    "ndcg",
    "tradeoff_envelope",
    "unfairness",
]


@dataclass
class GainLedger:
    """Running accumulators for provider gains and item exposure.

    A ledger is owned and mutated by exactly one simulation run; metric code
    only reads it. ``exposure_gain`` and ``purchase_gain`` accrue the two
    gain components per provider, ``group_exposure`` the raw examination
    mass per provider, and the per-(user, item) dicts back the online
    relevance estimator. ``step_count`` counts served lists.
    """

    exposure_gain: np.ndarray
    purchase_gain: np.ndarray
    group_exposure: np.ndarray
    item_exposure: dict[tuple[int, int], float] = field(default_factory=dict)
    item_purchases: dict[tuple[int, int], int] = field(default_factory=dict)
    step_count: int = 0

    @classmethod
    def empty(cls, provider_count: int) -> GainLedger:
        if provider_count < 1:
            raise ValueError("need at least one provider")
        zeros = lambda: np.zeros(provider_count, dtype=np.float64)  # noqa: E731
        return cls(exposure_gain=zeros(), purchase_gain=zeros(), group_exposure=zeros())

    @property
    def provider_count(self) -> int:
        return self.exposure_gain.size

    def raw_gains(self) -> np.ndarray:
        """Cumulative provider gains without the 1/T averaging."""
        return self.exposure_gain + self.purchase_gain

    def averaged_gains(self) -> np.ndarray:
        """Per-step averaged provider gains; requires at least one served list."""
        if self.step_count <= 0:
            raise ValueError("ledger has no served lists yet")
        return self.raw_gains() / self.step_count

    def add_item_exposure(self, user: int, item: int, amount: float) -> None:
        key = (int(user), int(item))
        self.item_exposure[key] = self.item_exposure.get(key, 0.0) + amount

    def add_item_purchase(self, user: int, item: int) -> None:
        key = (int(user), int(item))
        self.item_purchases[key] = self.item_purchases.get(key, 0) + 1


# ---------------------------------------------------------------------------
# Effectiveness
# ---------------------------------------------------------------------------


def dcg(ranklist: RankList, rel: RelevanceTable, k_c: int, pm: PositionModel) -> float:
    """Position-discounted gain of the top ``k_c`` positions of one list."""
    if not 1 <= k_c <= pm.list_size:
        raise ValueError(f"cutoff {k_c} must lie in [1, {pm.list_size}]")
    total = 0.0
    for k0 in range(min(k_c, len(ranklist.positions))):
        total += rel.get(ranklist.user, ranklist.positions[k0]) * pm.probs[k0]
    return total


def ideal_dcg(relevances: np.ndarray, k_c: int, pm: PositionModel) -> float:
    """DCG of the best possible ordering of ``relevances`` (descending sort)."""
    if not 1 <= k_c <= pm.list_size:
        raise ValueError(f"cutoff {k_c} must lie in [1, {pm.list_size}]")
    values = np.sort(np.asarray(relevances, dtype=np.float64))[::-1][:k_c]
    if values.size == 0:
        return 0.0
    return float(values @ pm.probs[: values.size])


def ndcg(ranklist: RankList, rel: RelevanceTable, k_c: int, pm: PositionModel) -> float:
    """Normalized DCG in [0, 1]; defined as 1.0 for users with no relevant items."""
    ideal = ideal_dcg(rel.user_values(ranklist.user), k_c, pm)
    if ideal == 0.0:
        return 1.0
    return dcg(ranklist, rel, k_c, pm) / ideal


def andcg(lists: Sequence[RankList], rel: RelevanceTable, k_c: int, pm: PositionModel) -> float:
    """Mean NDCG over one list per user (offline effectiveness)."""
    if len(lists) == 0:
        raise ValueError("need at least one rank list")
    return sum(ndcg(rl, rel, k_c, pm) for rl in lists) / len(lists)


def cndcg_update(prev: float, ndcg_t: float, gamma: float) -> float:
    """One step of the discounted cumulative NDCG recurrence.

    Applying this per step yields sum_t gamma^(T-t) * NDCG_t at every T.
    """
    if not 0.0 < gamma <= 1.0:
        raise ValueError("gamma must lie in (0, 1]")
    return gamma * prev + ndcg_t


# ---------------------------------------------------------------------------
# Provider gain and fairness
# ---------------------------------------------------------------------------


def expected_gain(
    g: int,
    ranklist: RankList,
    user: int,
    catalog: Catalog,
    profile: ProviderProfile,
    rel: RelevanceTable,
    pm: PositionModel,
) -> float:
    """Expected gain provider ``g`` harvests from one served list.

    Each of g's listed items contributes its examination probability times
    (relevance * purchase_value + exposure_value); unlisted providers get 0.
    """
    total = 0.0
    for k0, item in enumerate(ranklist.positions[: pm.list_size]):
        if catalog.group_of[item] == g:
            r = rel.get(user, item)
            total += pm.probs[k0] * (r * profile.purchase_value + profile.exposure_value)
    return total


def _check_gain_args(gains: np.ndarray, targets: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    gains = np.asarray(gains, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if gains.shape != targets.shape or gains.ndim != 1:
        raise ValueError("gains and targets must be 1-d arrays of equal length")
    if gains.size < 2:
        raise ValueError("pairwise unfairness needs at least two providers")
    if np.any(targets <= 0):
        raise ValueError("gain targets must be strictly positive")
    return gains, targets


def unfairness(gains: np.ndarray, targets: np.ndarray) -> float:
    """Mean squared cross-provider disparity of target-weighted gains.

    Zero exactly when gains are proportional to targets. The sum runs over
    ordered provider pairs; the diagonal terms are identically zero.
    """
    gains, targets = _check_gain_args(gains, targets)
    m = gains.size
    cross = np.outer(gains, targets)
    disparity = cross - cross.T
    return float(np.sum(disparity * disparity) / (m * (m - 1)))


def fairness_gradient(gains: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Analytic derivative of fairness (= -unfairness) w.r.t. each provider's gain.

    Closed form: (4 / (m (m-1))) * (y_g * sum(G y) - G_g * sum(y^2)); positive
    entries mark under-served providers whose gain should grow.
    """
    gains, targets = _check_gain_args(gains, targets)
    m = gains.size
    gy = float(gains @ targets)
    yy = float(targets @ targets)
    return (4.0 / (m * (m - 1))) * (targets * gy - gains * yy)


def exposure_unfairness(ledger: GainLedger, catalog: Catalog, rel: RelevanceTable) -> float:
    """Classic exposure unfairness as the unit-gain special case.

    Setting every exposure value to 1 and purchase value to 0 makes a
    provider's gain its accumulated examination mass, and taking each
    group's mean relevance as its gain target recovers the
    exposure-proportional-to-merit criterion.
    """
    if ledger.step_count <= 0:
        raise ValueError("ledger has no served lists yet")
    item_rel = rel.item_mean_relevance(catalog.item_count)
    targets = np.array([item_rel[items].mean() for items in catalog.items_of])
    if np.any(targets <= 0):
        bad = int(np.flatnonzero(targets <= 0)[0])
        raise ValueError(f"group {bad} has zero mean relevance; exposure target undefined")
    gains = ledger.group_exposure / ledger.step_count
    return unfairness(gains, targets)


# ---------------------------------------------------------------------------
# Alignment diagnostics and trade-off curves
# ---------------------------------------------------------------------------


class AlignmentDiagnostics(NamedTuple):
    msd: float
    pearson: float
    excluded: int


def alignment_diagnostics(ledger: GainLedger, profiles: Sequence[ProviderProfile]) -> AlignmentDiagnostics:
    """How well realized gain ratios match the providers' declared preferences.

    Compares each provider's purchase/exposure gain ratio with its
    purchase_value/exposure_value weight ratio: ``msd`` is the mean squared
    difference, ``pearson`` the correlation of the two ratio vectors.
    Providers whose realized exposure gain (or exposure weight) is zero have
    no defined ratio; they are excluded and counted rather than failing the
    run. Pearson is NaN when either ratio vector is constant.
    """
    realized = []
    declared = []
    excluded = 0
    for g, profile in enumerate(profiles):
        if ledger.exposure_gain[g] <= 0 or profile.exposure_value <= 0:
            excluded += 1
            continue
        realized.append(ledger.purchase_gain[g] / ledger.exposure_gain[g])
        declared.append(profile.purchase_value / profile.exposure_value)
    if not realized:
        raise ValueError("every provider lacks exposure gain; diagnostics undefined")
    realized_arr = np.array(realized)
    declared_arr = np.array(declared)
    msd = float(np.mean((realized_arr - declared_arr) ** 2))
    if realized_arr.size < 2 or np.ptp(realized_arr) == 0 or np.ptp(declared_arr) == 0:
        pearson = math.nan
    else:
        pearson = float(np.corrcoef(realized_arr, declared_arr)[0, 1])
    return AlignmentDiagnostics(msd=msd, pearson=pearson, excluded=excluded)


def tradeoff_envelope(points: Sequence[tuple[float, float]]) -> list[tuple[float, float]]:
    """Best effectiveness achievable under each unfairness ceiling.

    For every distinct unfairness value, in ascending order, emits the
    maximum effectiveness among points at or below that ceiling; the result
    is nondecreasing in effectiveness.
    """
    if len(points) == 0:
        raise ValueError("need at least one (unfairness, effectiveness) point")
    best: dict[float, float] = {}
    for u, e in points:
        if u not in best or e > best[u]:
            best[u] = e
    envelope = []
    running = -math.inf
    for u in sorted(best):
        running = max(running, best[u])
        envelope.append((u, running))
    return envelope


# ---------------------------------------------------------------------------
# Run results
# ---------------------------------------------------------------------------

RESULT_FIELDS = ("mode", "policy", "alpha", "seed", "effectiveness", "unfairness", "msd", "pearson", "wall_ms")


def format_float(x: float) -> str:
    """Serialize a float with 17 significant digits (exact round trip)."""
    if math.isnan(x):
        return "nan"
    return format(x, ".17g")


@dataclass(frozen=True)
class RunResult:
    """Outcome of one (policy, alpha, seed) simulation run."""

    mode: str
    policy: str
    alpha: float
    seed: int
    effectiveness: float
    unfairness: float
    msd: float
    pearson: float
    wall_time: float

    def csv_row(self) -> str:
        return ",".join(
            (
                self.mode,
                self.policy,
                format_float(self.alpha),
                str(self.seed),
                format_float(self.effectiveness),
                format_float(self.unfairness),
                format_float(self.msd),
                format_float(self.pearson),
                format_float(self.wall_time * 1000.0),
            )
        )

    @staticmethod
    def csv_header() -> str:
        return ",".join(RESULT_FIELDS)
