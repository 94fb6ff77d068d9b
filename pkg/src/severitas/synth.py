"""Bundled synthetic crash-record generator.

The real crash dataset cannot be redistributed, so the end-to-end paths run
on a 3-class Gaussian-mixture stand-in with the same shape: mixed
categorical/numeric predictors, a year column for the descriptive report,
and a configurable class imbalance.  Five of the six categorical fields and
all numerics carry class signal; ``intersection`` is pure noise (useful as
a permutation-importance null).  ``class_sep`` scales the numeric mean gaps
and ``informative_prob`` the categorical signal, so tests can dial the
problem from trivially separable down to heavily overlapping.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .ingest import SEVERITY_CLASSES

# vocabularies are listed in encoding (lexicographic) order already
CATEGORICAL_FIELDS = {
    "weather": ["clear", "fog", "rain", "snow"],
    "lighting": ["dark_lighted", "dark_not_lighted", "daylight"],
    "road_alignment": ["curve", "grade", "straight"],
    "surface": ["dry", "icy", "wet"],
    "traffic_control": ["none", "signal", "stop_sign", "yield"],
    "intersection": ["no", "yes"],
}

# preferred category per class (KA, BC, O); None marks the noise field
PREFERRED = {
    "weather": ("rain", "fog", "clear"),
    "lighting": ("dark_not_lighted", "dark_lighted", "daylight"),
    "road_alignment": ("curve", "grade", "straight"),
    "surface": ("icy", "wet", "dry"),
    "traffic_control": ("none", "yield", "signal"),
    "intersection": None,
}

# numeric fields: (base, per-class offsets scaled by class_sep, std)
NUMERIC_FIELDS = {
    "speed_limit": (40.0, (15.0, 0.0, -15.0), 8.0),
    "rider_age": (10.0, (-3.0, 0.0, 3.0), 2.0),
    "traffic_volume": (50.0, (20.0, 0.0, -20.0), 15.0),
}

YEARS = (2017, 2018, 2019, 2020, 2021, 2022)


@dataclass
class SynthSpec:
    counts: dict = field(default_factory=lambda: {"KA": 600, "BC": 120, "O": 480})
    seed: int = 0
    class_sep: float = 1.0
    informative_prob: float = 0.65

    def __post_init__(self):
        unknown = set(self.counts) - set(SEVERITY_CLASSES)
        if unknown:
            raise ValueError(f"unknown classes in counts: {sorted(unknown)}")
        if not 0.0 < self.informative_prob < 1.0:
            raise ValueError("informative_prob must lie in (0, 1)")


def header() -> list:
    return ["year", *CATEGORICAL_FIELDS, *NUMERIC_FIELDS, "severity"]


def schema_config_dict(mode: str = "strict") -> dict:
    """Schema declaration matching the generated CSV (year left undeclared)."""
    columns = {name: "categorical" for name in CATEGORICAL_FIELDS}
    columns.update({name: "numerical" for name in NUMERIC_FIELDS})
    columns["severity"] = "label"
    return {"columns": columns, "mode": mode}


def generate_rows(spec: SynthSpec) -> list:
    """All rows (shuffled), as lists of strings aligned with ``header()``."""
    rng = np.random.default_rng(np.random.SeedSequence([int(spec.seed), 0x51F7]))
    rows = []
    for ci, cls in enumerate(SEVERITY_CLASSES):
        for _ in range(int(spec.counts.get(cls, 0))):
            row = [str(rng.choice(YEARS))]
            for name, vocab in CATEGORICAL_FIELDS.items():
                preferred = PREFERRED[name]
                if preferred is None:
                    row.append(vocab[int(rng.integers(0, len(vocab)))])
                else:
                    probs = np.full(len(vocab), (1.0 - spec.informative_prob) / (len(vocab) - 1))
                    probs[vocab.index(preferred[ci])] = spec.informative_prob
                    row.append(vocab[int(rng.choice(len(vocab), p=probs))])
            for name, (base, offsets, std) in NUMERIC_FIELDS.items():
                value = base + spec.class_sep * offsets[ci] + std * rng.standard_normal()
                row.append(f"{value:.2f}")
            row.append(cls)
            rows.append(row)
    order = rng.permutation(len(rows))
    return [rows[i] for i in order]


def write_dataset(csv_path, schema_path, spec: SynthSpec, mode: str = "strict") -> None:
    import json

    rows = generate_rows(spec)
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header())
        writer.writerows(rows)
    with open(schema_path, "w", encoding="utf-8") as fh:
        json.dump(schema_config_dict(mode), fh, indent=2)
        fh.write("\n")
