"""Synthetic dataset generation and dataset file I/O.

Provider gain weights are sampled from scenario-specific normal
distributions (rejecting non-positive draws): the Common scenario draws
exposure values around 10 and purchase values around 100; Exp1st draws both
from the purchase-scale distribution (exposure-hungry providers); Sale1st
inflates purchase values tenfold (sale-season providers). Relevance comes
from a latent-factor model squashed through a logistic, sparsified per user.

Datasets round-trip through a three-file CSV directory::

    catalog.csv     item_id,provider_id
    providers.csv   provider_id,v_e,v_b,y
    relevance.csv   user_id,item_id,relevance

External ids may be arbitrary strings; they are mapped to dense 0-based ids
in file order and kept in a side lookup for reporting. Floats are written
with 17 significant digits so save -> load reproduces every value bit for
bit.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
import numpy as np

from .core import Catalog, ProviderProfile, RelevanceTable
from .metrics import format_float

__all__ = [
    "Dataset",
    "DatasetError",
    "DatasetLabels",
    "GeneratorSpec",
    "ScenarioSpec",
    "assign_groups",
    "generate_dataset",
    "generate_relevance",
    "load_dataset",
    "sample_profiles",
    "save_dataset",
]

logger = logging.getLogger(__name__)


class DatasetError(ValueError):
    """A dataset directory is missing, malformed, or violates an invariant."""


@dataclass(frozen=True)
class ScenarioSpec:
    """Normal-distribution parameters for provider gain weights."""

    name: str
    ve_mean: float
    ve_sd: float
    vb_mean: float
    vb_sd: float
    y_mean: float
    y_sd: float

    def __post_init__(self) -> None:
        if min(self.ve_mean, self.vb_mean, self.y_mean) <= 0:
            raise ValueError("all scenario means must be positive")
        if min(self.ve_sd, self.vb_sd, self.y_sd) < 0:
            raise ValueError("scenario standard deviations must be nonnegative")

    @classmethod
    def common(cls) -> ScenarioSpec:
        return cls("Common", 10.0, 2.5, 100.0, 25.0, 50.0, 25.0)

    @classmethod
    def exp1st(cls) -> ScenarioSpec:
        return cls("Exp1st", 100.0, 25.0, 100.0, 25.0, 50.0, 25.0)

    @classmethod
    def sale1st(cls) -> ScenarioSpec:
        return cls("Sale1st", 10.0, 2.5, 1000.0, 250.0, 50.0, 25.0)

    @classmethod
    def by_name(cls, name: str) -> ScenarioSpec:
        table = {"common": cls.common, "exp1st": cls.exp1st, "sale1st": cls.sale1st}
        try:
            return table[name.lower()]()
        except KeyError:
            raise ValueError(f"unknown scenario {name!r}; expected one of {sorted(table)}") from None


@dataclass(frozen=True)
class GeneratorSpec:
    """Parameters of the synthetic dataset generator (desk-scale defaults)."""

    n_users: int = 500
    n_items: int = 1000
    n_providers: int = 20
    group_size_skew: float = 0.8
    latent_dim: int = 8
    sparsity: float = 0.05
    seed: int = 0

    def __post_init__(self) -> None:
        if min(self.n_users, self.n_items, self.n_providers, self.latent_dim) < 1:
            raise ValueError("counts and latent_dim must be positive")
        if self.n_providers > self.n_items:
            raise ValueError("cannot have more providers than items")
        if self.group_size_skew < 0:
            raise ValueError("group_size_skew must be nonnegative")
        if not 0.0 < self.sparsity <= 1.0:
            raise ValueError("sparsity must lie in (0, 1]")


@dataclass(frozen=True)
class DatasetLabels:
    """Original external ids, indexed by dense id."""

    users: tuple[str, ...]
    items: tuple[str, ...]
    providers: tuple[str, ...]


@dataclass(frozen=True)
class Dataset:
    """A complete simulation input: catalog, provider profiles, relevance."""

    catalog: Catalog
    profiles: tuple[ProviderProfile, ...]
    relevance: RelevanceTable
    labels: DatasetLabels | None = None


def _positive_normal(rng: np.random.Generator, mean: float, sd: float) -> float:
    # Rejection keeps the draw strictly positive without the point mass at 0
    # that clamping would create.
    while True:
        x = rng.normal(mean, sd)
        if x > 0:
            return float(x)


def sample_profiles(m: int, scenario: ScenarioSpec, rng: np.random.Generator) -> list[ProviderProfile]:
    """Draw ``m`` provider profiles from the scenario's distributions."""
    if m < 2:
        raise ValueError("need at least two providers")
    return [
        ProviderProfile(
            exposure_value=_positive_normal(rng, scenario.ve_mean, scenario.ve_sd),
            purchase_value=_positive_normal(rng, scenario.vb_mean, scenario.vb_sd),
            gain_target=_positive_normal(rng, scenario.y_mean, scenario.y_sd),
        )
        for _ in range(m)
    ]


def generate_relevance(spec: GeneratorSpec, rng: np.random.Generator) -> RelevanceTable:
    """Latent-factor relevance: logistic(user . item / sqrt(dim)), sparsified.

    Each user keeps a random ``sparsity`` fraction of items (at least one);
    the rest read as 0. Retained values are strictly inside (0, 1).
    """
    users = rng.normal(size=(spec.n_users, spec.latent_dim))
    items = rng.normal(size=(spec.n_items, spec.latent_dim))
    scores = users @ items.T / math.sqrt(spec.latent_dim)
    values = 1.0 / (1.0 + np.exp(-scores))
    keep = max(1, round(spec.sparsity * spec.n_items))
    entries = []
    for u in range(spec.n_users):
        for item in rng.choice(spec.n_items, size=keep, replace=False):
            entries.append((u, int(item), float(values[u, item])))
    return RelevanceTable(spec.n_users, entries)


def _apportion(weights: np.ndarray, total: int) -> np.ndarray:
    """Integer sizes proportional to weights, each >= 1, summing to total."""
    m = weights.size
    if total < m:
        raise ValueError(f"cannot give {m} groups at least one of {total} items")
    raw = weights / weights.sum() * total
    sizes = np.maximum(1, np.floor(raw).astype(np.int64))
    remainders = raw - np.floor(raw)
    order = np.lexsort((np.arange(m), -remainders))
    i = 0
    while sizes.sum() < total:
        sizes[order[i % m]] += 1
        i += 1
    while sizes.sum() > total:
        candidates = np.flatnonzero(sizes > 1)
        sizes[candidates[np.argmax(sizes[candidates])]] -= 1
    return sizes


def assign_groups(n_items: int, n_providers: int, skew: float, rng: np.random.Generator) -> Catalog:
    """Partition items into groups with rank-power-law sizes.

    Group g's size is proportional to (g+1)^-skew (skew 0 gives an even
    split); items are laid out contiguously per group and then shuffled so
    group membership is independent of item id.
    """
    if n_providers > n_items:
        raise ValueError("cannot have more providers than items")
    if skew < 0:
        raise ValueError("skew must be nonnegative")
    weights = np.arange(1, n_providers + 1, dtype=np.float64) ** (-skew)
    sizes = _apportion(weights, n_items)
    contiguous = np.repeat(np.arange(n_providers, dtype=np.int64), sizes)
    return Catalog.from_assignments(rng.permutation(contiguous), n_providers)


def generate_dataset(spec: GeneratorSpec, scenario: ScenarioSpec) -> Dataset:
    """Generate a full synthetic dataset; pure function of (spec, scenario)."""
    rng = np.random.default_rng(spec.seed)
    catalog = assign_groups(spec.n_items, spec.n_providers, spec.group_size_skew, rng)
    profiles = tuple(sample_profiles(spec.n_providers, scenario, rng))
    relevance = generate_relevance(spec, rng)
    return Dataset(catalog=catalog, profiles=profiles, relevance=relevance)


# ---------------------------------------------------------------------------
# File I/O
# ---------------------------------------------------------------------------

CATALOG_FILE = "catalog.csv"
PROVIDERS_FILE = "providers.csv"
RELEVANCE_FILE = "relevance.csv"


def save_dataset(dataset: Dataset, directory: str | Path) -> None:
    """Write the three-file CSV layout (17 significant digits for floats)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    labels = dataset.labels
    item_label = (lambda i: labels.items[i]) if labels else str
    provider_label = (lambda g: labels.providers[g]) if labels else str
    user_label = (lambda u: labels.users[u]) if labels else str

    with open(directory / CATALOG_FILE, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["item_id", "provider_id"])
        for item in range(dataset.catalog.item_count):
            writer.writerow([item_label(item), provider_label(int(dataset.catalog.group_of[item]))])

    with open(directory / PROVIDERS_FILE, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["provider_id", "v_e", "v_b", "y"])
        for g, profile in enumerate(dataset.profiles):
            writer.writerow(
                [
                    provider_label(g),
                    format_float(profile.exposure_value),
                    format_float(profile.purchase_value),
                    format_float(profile.gain_target),
                ]
            )

    with open(directory / RELEVANCE_FILE, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["user_id", "item_id", "relevance"])
        for user, item, value in dataset.relevance.iter_entries():
            writer.writerow([user_label(user), item_label(item), format_float(value)])


def _read_rows(path: Path, expected_header: list[str]) -> list[tuple[int, list[str]]]:
    if not path.is_file():
        raise DatasetError(f"missing dataset file {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError(f"{path.name} is empty") from None
        if header != expected_header:
            raise DatasetError(f"{path.name} row 1: expected header {','.join(expected_header)}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(expected_header):
                raise DatasetError(f"{path.name} row {lineno}: expected {len(expected_header)} columns")
            rows.append((lineno, row))
    return rows


def _parse_float(text: str, path: str, lineno: int, column: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise DatasetError(f"{path} row {lineno}: {column} {text!r} is not a number") from None


def load_dataset(directory: str | Path, strict: bool = False) -> Dataset:
    """Load a dataset directory, mapping external ids to dense ids.

    Relevance values must land in [0, 1]. A user whose values exceed 1 has
    the whole row divided by its maximum (logged); under ``strict`` any
    out-of-range value is an error instead. Negative relevance is always an
    error. All failures cite the file and row number.
    """
    directory = Path(directory)

    # providers.csv row order defines the dense provider ids, so a saved
    # dataset loads back with identical ids.
    provider_ids: dict[str, int] = {}
    profile_list: list[ProviderProfile] = []
    for lineno, (provider, ve, vb, y) in _read_rows(directory / PROVIDERS_FILE, ["provider_id", "v_e", "v_b", "y"]):
        if provider in provider_ids:
            raise DatasetError(f"{PROVIDERS_FILE} row {lineno}: duplicate provider {provider!r}")
        values = {
            "v_e": _parse_float(ve, PROVIDERS_FILE, lineno, "v_e"),
            "v_b": _parse_float(vb, PROVIDERS_FILE, lineno, "v_b"),
            "y": _parse_float(y, PROVIDERS_FILE, lineno, "y"),
        }
        if values["v_e"] < 0 or values["v_b"] < 0:
            raise DatasetError(f"{PROVIDERS_FILE} row {lineno}: gain weights must be nonnegative")
        if values["y"] <= 0:
            raise DatasetError(f"{PROVIDERS_FILE} row {lineno}: y must be strictly positive")
        provider_ids[provider] = len(provider_ids)
        profile_list.append(ProviderProfile(values["v_e"], values["v_b"], values["y"]))

    item_ids: dict[str, int] = {}
    group_assignments: list[int] = []
    for lineno, (item, provider) in _read_rows(directory / CATALOG_FILE, ["item_id", "provider_id"]):
        if item in item_ids:
            raise DatasetError(f"{CATALOG_FILE} row {lineno}: duplicate item id {item!r}")
        if provider not in provider_ids:
            raise DatasetError(f"{CATALOG_FILE} row {lineno}: unknown provider id {provider!r}")
        item_ids[item] = len(item_ids)
        group_assignments.append(provider_ids[provider])

    user_ids: dict[str, int] = {}
    triples: list[tuple[int, int, float]] = []
    for lineno, (user, item, value_text) in _read_rows(directory / RELEVANCE_FILE, ["user_id", "item_id", "relevance"]):
        if item not in item_ids:
            raise DatasetError(f"{RELEVANCE_FILE} row {lineno}: unknown item id {item!r}")
        value = _parse_float(value_text, RELEVANCE_FILE, lineno, "relevance")
        if value < 0:
            raise DatasetError(f"{RELEVANCE_FILE} row {lineno}: relevance {value} is negative")
        if value > 1 and strict:
            raise DatasetError(f"{RELEVANCE_FILE} row {lineno}: relevance {value} exceeds 1 (strict mode)")
        triples.append((user_ids.setdefault(user, len(user_ids)), item_ids[item], value))
    if not user_ids:
        raise DatasetError(f"{RELEVANCE_FILE}: contains no relevance rows")

    row_max: dict[int, float] = {}
    for u, _, value in triples:
        row_max[u] = max(row_max.get(u, 0.0), value)
    rescaled = {u for u, peak in row_max.items() if peak > 1.0}
    if rescaled:
        logger.warning("rescaled relevance rows of %d user(s) whose maximum exceeded 1", len(rescaled))
        triples = [(u, i, v / row_max[u] if u in rescaled else v) for u, i, v in triples]

    try:
        catalog = Catalog.from_assignments(np.array(group_assignments, dtype=np.int64), len(provider_ids))
    except ValueError as exc:
        raise DatasetError(f"{CATALOG_FILE}: {exc}") from None
    profiles = tuple(profile_list)
    relevance = RelevanceTable(len(user_ids), triples)
    labels = DatasetLabels(
        users=tuple(user_ids),
        items=tuple(item_ids),
        providers=tuple(provider_ids),
    )
    return Dataset(catalog=catalog, profiles=profiles, relevance=relevance, labels=labels)
