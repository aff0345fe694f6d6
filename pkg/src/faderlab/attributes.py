"""The four continuous musical attributes measured on pitch sequences.

All four are total functions of a token array: degenerate inputs (fewer
than two notes) yield 0 for contour and pitch range, and an empty window
yields 0 density and 0 rhythm complexity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tokens import MAX_PITCH, SEQ_LEN

# 16-pulse metrical hierarchy for one 4/4 bar, tiled over the four bars
# of a window. No extra weight distinguishes bar 1 from later bars.
BAR_WEIGHTS = (5, 1, 2, 1, 3, 1, 2, 1, 4, 1, 2, 1, 3, 1, 2, 1)
METRICAL_WEIGHTS = np.tile(np.asarray(BAR_WEIGHTS, dtype=np.int64), SEQ_LEN // len(BAR_WEIGHTS))

PIANO_KEYS = 88  # pitch range normalizer

ATTRIBUTE_NAMES = ("contour", "note_density", "pitch_range", "rhythm_complexity")


@dataclass(frozen=True, slots=True)
class AttributeVector:
    contour: float
    note_density: float
    pitch_range: float
    rhythm_complexity: float

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.contour, self.note_density, self.pitch_range, self.rhythm_complexity],
            dtype=np.float64,
        )

    def as_dict(self) -> dict[str, float]:
        return {name: float(getattr(self, name)) for name in ATTRIBUTE_NAMES}


def onsets(tokens: np.ndarray) -> np.ndarray:
    """Grid indices whose token is a pitch (<= 127)."""
    arr = np.asarray(tokens)
    return np.flatnonzero(arr <= MAX_PITCH)


def onset_pitches(tokens: np.ndarray) -> np.ndarray:
    arr = np.asarray(tokens)
    return arr[arr <= MAX_PITCH]


def contour(tokens: np.ndarray) -> float:
    """Mean absolute pitch difference between consecutive notes."""
    pitches = onset_pitches(tokens)
    if pitches.size < 2:
        return 0.0
    return float(np.mean(np.abs(np.diff(pitches.astype(np.float64)))))


def note_density(tokens: np.ndarray) -> float:
    """Fraction of grid steps carrying a note onset, in [0, 1]."""
    return onsets(tokens).size / SEQ_LEN


def pitch_range(tokens: np.ndarray) -> float:
    """(max - min) pitch over the notes, per 88-key piano span."""
    pitches = onset_pitches(tokens)
    if pitches.size < 2:
        return 0.0
    return float(int(pitches.max()) - int(pitches.min())) / PIANO_KEYS


def rhythm_complexity(tokens: np.ndarray) -> float:
    """Metrical-weight deficit of the onset pattern, per note.

    With onset set O of size n over the tiled weight table W, metricity
    m = sum of W at O, and m* = sum of the n largest entries of W; the
    score is (m* - m) / n, which is 0 exactly when the onsets occupy a
    maximal-weight configuration.
    """
    idx = onsets(tokens)
    n = idx.size
    if n == 0:
        return 0.0
    m = int(METRICAL_WEIGHTS[idx].sum())
    top = np.sort(METRICAL_WEIGHTS)[::-1][:n]
    m_star = int(top.sum())
    return (m_star - m) / n


def measure(tokens: np.ndarray) -> AttributeVector:
    return AttributeVector(
        contour=contour(tokens),
        note_density=note_density(tokens),
        pitch_range=pitch_range(tokens),
        rhythm_complexity=rhythm_complexity(tokens),
    )


@dataclass(frozen=True, slots=True)
class AttributeStats:
    """Per-attribute summary over a training split."""

    mean: float
    std: float
    min: float
    max: float
    p99: float

    def as_dict(self) -> dict[str, float]:
        return {
            "mean": self.mean,
            "std": self.std,
            "min": self.min,
            "max": self.max,
            "p99": self.p99,
        }

    @classmethod
    def from_dict(cls, d: dict[str, float]) -> "AttributeStats":
        return cls(mean=d["mean"], std=d["std"], min=d["min"], max=d["max"], p99=d["p99"])


def column_stats(values: np.ndarray) -> AttributeStats:
    """Population mean/std, extremes, and interpolated 99th percentile."""
    vals = np.asarray(values, dtype=np.float64)
    if vals.size == 0:
        raise ValueError("empty attribute column")
    return AttributeStats(
        mean=float(vals.mean()),
        std=float(vals.std()),
        min=float(vals.min()),
        max=float(vals.max()),
        p99=float(np.percentile(vals, 99.0, method="linear")),
    )


def attribute_stats(columns: dict[str, np.ndarray]) -> dict[str, AttributeStats]:
    return {name: column_stats(vals) for name, vals in columns.items()}
