"""Energy-price datasets: CSV ingestion, synthetic generation, splits.

A dataset is day grouped: ``features`` has shape (days, 48, F) and
``targets`` has shape (days, 48). One day is one optimization instance.

CSV schema (strict): ``day,slot,<feature columns...>,actual_price`` with one
row per half-hour slot and 48 slots per day.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional

import numpy as np

from .model import Standardizer

SLOTS = 48
TARGET_COLUMN = "actual_price"
SPLIT_FRACTIONS = (0.70, 0.10, 0.20)


class DataPoint(NamedTuple):
    day_index: int
    slot_index: int
    features: np.ndarray
    true_value: float


@dataclass
class Dataset:
    days: np.ndarray
    features: np.ndarray
    targets: np.ndarray
    feature_names: tuple
    weights: Optional[np.ndarray] = None  # per-slot knapsack weights, shared by all days
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.days = np.asarray(self.days, dtype=int)
        self.features = np.asarray(self.features, dtype=float)
        self.targets = np.asarray(self.targets, dtype=float)
        self.feature_names = tuple(self.feature_names)
        d = self.days.shape[0]
        if self.features.shape[:2] != (d, SLOTS) or self.targets.shape != (d, SLOTS):
            raise ValueError(f"expected (days, {SLOTS}, F) features and (days, {SLOTS}) targets")
        if self.features.shape[2] != len(self.feature_names):
            raise ValueError("feature_names do not match the feature count")

    def __len__(self):
        return self.days.shape[0]

    @property
    def feature_count(self) -> int:
        return self.features.shape[2]

    def subset(self, index) -> "Dataset":
        return replace(self, days=self.days[index], features=self.features[index],
                       targets=self.targets[index], meta=dict(self.meta))

    def points(self):
        for i, d in enumerate(self.days):
            for s in range(SLOTS):
                yield DataPoint(int(d), s, self.features[i, s], float(self.targets[i, s]))


# CSV -----------------------------------------------------------------------

def ingest_csv(path) -> Dataset:
    """Read a day/slot CSV; incomplete days are dropped with a warning."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if len(header) < 4 or header[:2] != ["day", "slot"] or header[-1] != TARGET_COLUMN:
            raise ValueError(f"{path}: header must be day,slot,<features...>,{TARGET_COLUMN}")
        names = tuple(header[2:-1])
        by_day: dict = {}
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ValueError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                day, slot = int(row[0]), int(row[1])
                values = [float(c) for c in row[2:]]
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
            if not 0 <= slot < SLOTS:
                raise ValueError(f"{path}:{lineno}: slot {slot} outside [0, {SLOTS})")
            if not all(math.isfinite(v) for v in values):
                raise ValueError(f"{path}:{lineno}: non-finite value")
            slots = by_day.setdefault(day, {})
            if slot in slots:
                raise ValueError(f"{path}:{lineno}: duplicate slot {slot} for day {day}")
            slots[slot] = values
    days, feats, targets = [], [], []
    for day in sorted(by_day):
        slots = by_day[day]
        if len(slots) != SLOTS:
            warnings.warn(f"day {day} has {len(slots)} of {SLOTS} slots; dropped", stacklevel=2)
            continue
        rows = np.array([slots[s] for s in range(SLOTS)])
        days.append(day)
        feats.append(rows[:, :-1])
        targets.append(rows[:, -1])
    F = len(names)
    return Dataset(np.array(days, dtype=int),
                   np.array(feats).reshape(len(days), SLOTS, F),
                   np.array(targets).reshape(len(days), SLOTS), names)


def emit_csv(dataset: Dataset, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["day", "slot", *dataset.feature_names, TARGET_COLUMN])
        for i, day in enumerate(dataset.days):
            for s in range(SLOTS):
                writer.writerow([int(day), s, *(repr(float(v)) for v in dataset.features[i, s]),
                                 repr(float(dataset.targets[i, s]))])


# synthetic data ---------------------------------------------------------------

BASE_FEATURES = ("dow_sin", "dow_cos", "slot_sin", "slot_cos", "temperature",
                 "load_forecast", "wind_forecast", "price_forecast")

# ground-truth linear map on the raw base features
TRUE_BIAS = 20.0
TRUE_WEIGHTS = np.array([0.0, 1.5, -6.0, -4.0, -0.4, 9.0, -7.0, 0.0])


def synthesize(seed: int, day_count: int, feature_count: int = len(BASE_FEATURES),
               noise_scale: float = 1.0, nonlinearity: float = 2.0) -> Dataset:
    """Seeded stand-in for the half-hourly price data.

    Features carry calendar structure (day of week, slot of day) and
    day-ahead style forecasts. The price is a linear map of a feature subset
    plus load-driven price spikes (scaled by ``nonlinearity``, invisible to a
    linear model) and AR(1) noise (scaled by ``noise_scale``). With both set
    to zero the price is exactly ``TRUE_WEIGHTS . x + TRUE_BIAS``. Extra
    features beyond the base eight are pure noise.
    """
    if day_count < 10:
        raise ValueError("day_count must be at least 10")
    if feature_count < len(BASE_FEATURES):
        raise ValueError(f"feature_count must be at least {len(BASE_FEATURES)}")
    rng = np.random.default_rng(seed)
    D, S = day_count, SLOTS
    day = np.arange(D)[:, None] * np.ones((1, S))
    slot = np.ones((D, 1)) * np.arange(S)[None, :]
    dow = day % 7
    dow_sin, dow_cos = np.sin(2 * np.pi * dow / 7), np.cos(2 * np.pi * dow / 7)
    slot_sin, slot_cos = np.sin(2 * np.pi * slot / S), np.cos(2 * np.pi * slot / S)

    season = 10 + 6 * np.sin(2 * np.pi * day / 365.0)
    temperature = season + rng.normal(0, 2.0, (D, 1)) + 3 * np.sin(2 * np.pi * (slot - 14) / S) \
        + rng.normal(0, 0.7, (D, S))
    daily_shape = 0.6 * np.exp(-((slot - 36) / 5.0) ** 2) + 0.4 * np.exp(-((slot - 18) / 4.0) ** 2)
    weekday = (dow < 5).astype(float)
    load = 3.0 + 1.2 * daily_shape + 0.4 * weekday - 0.03 * (temperature - 10) \
        + rng.normal(0, 0.15, (D, 1)) + rng.normal(0, 0.08, (D, S))
    wind = np.empty((D, S))
    level = rng.uniform(0.2, 1.5)
    for d in range(D):
        for s in range(S):
            level = 0.97 * level + 0.03 * 0.8 + rng.normal(0, 0.08)
            level = min(max(level, 0.0), 2.5)
            wind[d, s] = level
    wind_fc = np.clip(wind + rng.normal(0, 0.1, (D, S)), 0, None)

    base = np.stack([dow_sin, dow_cos, slot_sin, slot_cos, temperature, load, wind_fc,
                     np.zeros((D, S))], axis=-1)
    linear = base @ TRUE_WEIGHTS + TRUE_BIAS
    base[..., 7] = linear + rng.normal(0, 3.0, (D, S))  # day-ahead price forecast

    load_z = (load - load.mean()) / load.std()
    spikes = 12.0 * np.maximum(load_z - 0.8, 0.0) ** 2 - 8.0 * np.maximum(wind - 1.4, 0.0)

    eps = np.empty(D * S)
    e = 0.0
    z = rng.normal(0, 1.0, D * S)
    for k in range(D * S):
        e = 0.9 * e + math.sqrt(1 - 0.81) * 6.0 * z[k]
        eps[k] = e
    price = linear + nonlinearity * spikes + noise_scale * eps.reshape(D, S)

    names = list(BASE_FEATURES)
    feats = base
    extra = feature_count - len(BASE_FEATURES)
    if extra:
        feats = np.concatenate([base, rng.normal(0, 1, (D, S, extra))], axis=-1)
        names += [f"noise_{k}" for k in range(extra)]
    meta = {"source": "synthetic", "seed": seed, "noise_scale": noise_scale, "nonlinearity": nonlinearity}
    return Dataset(np.arange(D), feats, price, tuple(names), meta=meta)


def true_weights(feature_count: int = len(BASE_FEATURES)):
    """Ground-truth (weights, bias) on raw features of :func:`synthesize`."""
    w = np.zeros(feature_count)
    w[:len(TRUE_WEIGHTS)] = TRUE_WEIGHTS
    return w, TRUE_BIAS


# knapsack transforms ------------------------------------------------------------

WEIGHT_CHOICES = (3, 5, 7)
VALUE_NOISE_SD = 25.0


def to_weighted_knapsack(dataset: Dataset, seed: int) -> Dataset:
    """Per-slot weights from {3,5,7}; targets become (v + xi) * w with xi ~ N(0, 25^2).

    Weights are drawn once per slot position and shared by every day.
    """
    rng = np.random.default_rng(seed)
    w = rng.choice(WEIGHT_CHOICES, size=SLOTS)
    xi = rng.normal(0.0, VALUE_NOISE_SD, dataset.targets.shape)
    values = (dataset.targets + xi) * w
    meta = dict(dataset.meta, weighted_seed=seed)
    return replace(dataset, targets=values, weights=w.astype(int), meta=meta)


# splitting --------------------------------------------------------------------

@dataclass
class Split:
    """A standardized chronological slice of days."""

    name: str
    days: np.ndarray
    X: np.ndarray  # (days, 48, F) standardized
    y: np.ndarray  # (days, 48)

    def __len__(self):
        return self.days.shape[0]


def split_counts(day_count: int, fractions=SPLIT_FRACTIONS):
    if not math.isclose(sum(fractions), 1.0):
        raise ValueError("split fractions must sum to 1")
    n_train = int(math.floor(fractions[0] * day_count + 1e-9))
    n_val = int(math.floor(fractions[1] * day_count + 1e-9))
    return n_train, n_val, day_count - n_train - n_val


def split_dataset(dataset: Dataset, fractions=SPLIT_FRACTIONS):
    """Chronological train/validation/test split by whole days.

    Returns ``(train, val, test, standardizer)``; the standardizer is fitted
    on the training days only and applied to all three.
    """
    order = np.argsort(dataset.days, kind="stable")
    n_train, n_val, _ = split_counts(len(dataset), fractions)
    idx = (order[:n_train], order[n_train:n_train + n_val], order[n_train + n_val:])
    std = Standardizer.fit(dataset.features[idx[0]].reshape(-1, dataset.feature_count))
    splits = [Split(name, dataset.days[i], std.transform(dataset.features[i]), dataset.targets[i])
              for name, i in zip(("train", "validation", "test"), idx)]
    return splits[0], splits[1], splits[2], std
