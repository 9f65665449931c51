"""Seeded synthetic corpora: metadata with injected inconsistencies at
known rates, plus 60x70 face-proxy images carrying a learnable race and
age signal.

The image model is deliberately analytic rather than photographic: each
image is a noisy base intensity (brighter for white-labeled subjects) with
salt-and-pepper speckle whose density grows linearly with age.  The
speckle is split between the top and bottom halves of the image according
to a per-subject race-mix coefficient, so texture features can recover
both race (where the speckle lives) and age (how much there is).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import date, timedelta

import zlib

import numpy as np

from .records import Record

IMAGE_W, IMAGE_H = 60, 70

WINDOW_START = date(2003, 1, 1)
WINDOW_DAYS = 5 * 365  # arrests fall inside a five-year span

# Distinct-subject cell proportions of the source database's demographic
# table (race x gender), used by the paper-shaped spec.
REFERENCE_CELL_COUNTS = {
    ("B", "M"): 8838, ("W", "M"): 2070, ("A", "M"): 49, ("H", "M"): 517, ("O", "M"): 15,
    ("B", "F"): 1494, ("W", "F"): 634, ("A", "F"): 6, ("H", "F"): 30, ("O", "F"): 5,
}
REFERENCE_SUBJECTS = 13617
REFERENCE_CONFLICTS = {"gender": 1, "race": 33, "dob_small": 1709, "dob_large": 70}


@dataclass
class GenSpec:
    subject_count: int = 100
    mean_arrests: float = 4.0
    max_arrests: int = 20
    cell_proportions: dict = field(default_factory=lambda: {
        cell: n / sum(REFERENCE_CELL_COUNTS.values())
        for cell, n in REFERENCE_CELL_COUNTS.items()
    })
    age_distribution: str = "morph_like"  # or "uniform"
    rate_gender_flip: float = 0.0
    rate_race_flip: float = 0.0
    rate_dob_small: float = 0.0
    rate_dob_large: float = 0.0
    base_intensity: float = 90.0
    race_brightness_span: float = 70.0
    speckle_floor: float = 0.05
    speckle_slope: float = 0.55
    speckle_amplitude: float = 70.0
    noise_sd: float = 4.0
    master_seed: int = 0


@dataclass
class GroundTruth:
    subjects: dict = field(default_factory=dict)   # sid -> true gender/race/dob
    injections: dict = field(default_factory=dict)  # sid -> injection descriptor
    expected_indicator: dict = field(default_factory=dict)  # image_id -> 0..8
    expected_values: dict = field(default_factory=dict)  # image_id -> cleaned fields
    realized_counts: dict = field(default_factory=dict)
    race_mix: dict = field(default_factory=dict)   # sid -> mix coefficient

    def required_decisions(self):
        """(kind, subject_id, decision) triples for injected ties."""
        out = []
        for sid, inj in self.injections.items():
            dec = inj.get("expected_decision")
            if dec is not None:
                kind = "gender_tie" if inj["attribute"] == "gender" else "race_no_majority"
                out.append((kind, sid, dec))
        return out


def mirror_paper_shape(scale: float = 0.1, master_seed: int = 0) -> GenSpec:
    """Spec shaped like the reference database at a desk-scale fraction."""
    return GenSpec(
        subject_count=round(REFERENCE_SUBJECTS * scale),
        age_distribution="morph_like",
        rate_gender_flip=REFERENCE_CONFLICTS["gender"] / REFERENCE_SUBJECTS,
        rate_race_flip=REFERENCE_CONFLICTS["race"] / REFERENCE_SUBJECTS,
        rate_dob_small=REFERENCE_CONFLICTS["dob_small"] / REFERENCE_SUBJECTS,
        rate_dob_large=REFERENCE_CONFLICTS["dob_large"] / REFERENCE_SUBJECTS,
        master_seed=master_seed,
    )


def _draw_cell(rng, proportions):
    cells = sorted(proportions)
    probs = np.array([proportions[c] for c in cells])
    return cells[rng.choice(len(cells), p=probs / probs.sum())]


def _draw_age(rng, kind):
    if kind == "uniform":
        return float(rng.uniform(16.0, 72.0))
    # right-skewed bimodal: young mode near 24, secondary mode near 42
    if rng.random() < 0.62:
        age = 16.0 + float(rng.gamma(2.4, 4.0))
    else:
        age = float(rng.normal(42.0, 7.0))
    return float(np.clip(age, 16.0, 72.0))


def _mean_date(dobs) -> date:
    ords = [d.toordinal() for d in dobs]
    return date.fromordinal(int(sum(ords) / len(ords) + 0.5))


def _strict_majority(values):
    counts: dict = {}
    for v in values:
        counts[v] = counts.get(v, 0) + 1
    for v, c in counts.items():
        if 2 * c > len(values):
            return v
    return None


def generate(spec: GenSpec, with_images: bool = False):
    """Build a corpus deterministically from the master seed.

    Returns ``(records, images, ground_truth)``; images is a dict
    image_id -> uint8 array (empty unless requested).
    """
    subjects = []
    truth = GroundTruth()
    for i in range(spec.subject_count):
        rng = np.random.default_rng([spec.master_seed, i])
        sid = f"{i:06d}"
        race, gender = _draw_cell(rng, spec.cell_proportions)
        p = 1.0 / spec.mean_arrests
        k = int(min(rng.geometric(p), spec.max_arrests))
        age0 = _draw_age(rng, spec.age_distribution)
        dob = WINDOW_START - timedelta(days=round(age0 * 365.25))
        arrest_days = np.sort(rng.integers(0, WINDOW_DAYS, size=k))
        arrests = [WINDOW_START + timedelta(days=int(d)) for d in arrest_days]
        mix_u = rng.random()
        if race == "W":
            mix = 0.55 + 0.4 * mix_u
        elif race == "B":
            mix = 0.05 + 0.4 * mix_u
        else:
            mix = 0.5
        truth.subjects[sid] = {"gender": gender, "race": race, "dob": dob}
        truth.race_mix[sid] = mix
        subjects.append((sid, gender, race, dob, arrests, rng))

    # Disjoint injection draw: each multi-record subject lands in at most
    # one corruption category, so expected indicators stay unambiguous.
    inj_rng = np.random.default_rng([spec.master_seed, 10**6])
    counts = {"gender": 0, "race": 0, "dob_small": 0, "dob_large": 0}
    categories = []
    for sid, gender, race, dob, arrests, _ in subjects:
        u = inj_rng.random()
        cat = None
        if len(arrests) >= 2:
            edges = np.cumsum([
                spec.rate_gender_flip, spec.rate_race_flip,
                spec.rate_dob_small, spec.rate_dob_large,
            ])
            for name, edge in zip(("gender", "race", "dob_small", "dob_large"), edges):
                if u < edge:
                    cat = name
                    break
        if cat:
            counts[cat] += 1
        categories.append(cat)
    truth.realized_counts = counts

    records = []
    for (sid, gender, race, dob, arrests, rng), cat in zip(subjects, categories):
        k = len(arrests)
        genders = [gender] * k
        races = [race] * k
        dobs = [dob] * k
        exp_genders, exp_races, exp_dobs = list(genders), list(races), list(dobs)
        indicators = [0] * k

        if cat == "gender":
            flip = int(rng.integers(0, k))
            genders[flip] = "M" if gender == "F" else "F"
            indicators[flip] = 8
            truth.injections[sid] = {
                "attribute": "gender", "mode": "majority" if k >= 3 else "tie",
                "expected_decision": gender if k == 2 else None,
            }
        elif cat == "race":
            flip = int(rng.integers(0, k))
            others = [r for r in ("B", "W", "A", "H", "O") if r != race]
            races[flip] = others[int(rng.integers(0, len(others)))]
            if k >= 3:
                indicators[flip] = 4
                truth.injections[sid] = {"attribute": "race", "mode": "majority",
                                         "expected_decision": None}
            else:
                # two-record tie: adjudicated to the true race, or to
                # Other/unclear for a fraction of cases
                if rng.random() < 0.3:
                    decision = "O"
                    for j in range(k):
                        exp_races[j] = "O"
                        if races[j] != "O":
                            indicators[j] = 6
                else:
                    decision = race
                    for j in range(k):
                        if races[j] != race:
                            indicators[j] = 5
                truth.injections[sid] = {"attribute": "race", "mode": "tie",
                                         "expected_decision": decision}
        elif cat == "dob_small":
            if k >= 3 and rng.random() < 0.85:
                flip = int(rng.integers(0, k))
                delta = int(rng.integers(1, 367))
                dobs[flip] = dob - timedelta(days=delta)
                indicators[flip] = 1
                mode = "majority"
            else:
                step = max(1, 330 // k)
                for j in range(1, k):
                    dobs[j] = dob - timedelta(days=j * step)
                mean = _mean_date(dobs)
                for j in range(k):
                    exp_dobs[j] = mean
                    if dobs[j] != mean:
                        indicators[j] = 2
                mode = "mean"
            truth.injections[sid] = {"attribute": "dob", "mode": mode,
                                     "expected_decision": None}
        elif cat == "dob_large":
            for j in range(1, k):
                dobs[j] = dob - timedelta(days=400 + 80 * j)
            for j in range(k):
                exp_dobs[j] = dobs[j]  # uncorrectable: values stay as reported
                indicators[j] = 3
            truth.injections[sid] = {"attribute": "dob", "mode": "uncorrectable",
                                     "expected_decision": None}

        for j in range(k):
            image_id = f"{sid}_{j:02d}"
            records.append(Record(
                image_id=image_id,
                subject_id=sid,
                dob=dobs[j],
                arrest_date=arrests[j],
                gender=genders[j],
                race=races[j],
                image_path=f"{sid}/{image_id}.pgm",
            ))
            truth.expected_indicator[image_id] = indicators[j]
            truth.expected_values[image_id] = {
                "gender": exp_genders[j],
                "race": exp_races[j],
                "dob": exp_dobs[j],
            }

    images = {}
    if with_images:
        for r in records:
            images[r.image_id] = render_image(r, truth, spec)
    return records, images, truth


def render_image(record: Record, truth: GroundTruth, spec: GenSpec) -> np.ndarray:
    """Render one 70x60 uint8 face proxy for a record."""
    key = zlib.crc32(record.image_id.encode())
    rng = np.random.default_rng([spec.master_seed, 2 * 10**6, key])
    mix = truth.race_mix[record.subject_id]
    age = (record.arrest_date.toordinal()
           - truth.subjects[record.subject_id]["dob"].toordinal()) / 365.25
    density = spec.speckle_floor + spec.speckle_slope * np.clip((age - 16.0) / 61.0, 0, 1)
    base = spec.base_intensity + spec.race_brightness_span * mix
    # a fixed steep ridge pattern keeps binary-pattern codes deterministic
    # away from speckle, so texture changes stand out against pixel noise
    yy, xx = np.mgrid[:IMAGE_H, :IMAGE_W]
    ridges = 14.0 * (np.sin(2 * np.pi * xx / 5.7) + np.sin(2 * np.pi * yy / 6.3))
    img = base + ridges + rng.normal(0.0, spec.noise_sd, (IMAGE_H, IMAGE_W))
    half = IMAGE_H // 2
    for sl, d in ((np.s_[:half], mix * density), (np.s_[half:], (1 - mix) * density)):
        block = img[sl]
        mask = rng.random(block.shape) < d
        signs = rng.choice([-1.0, 1.0], size=block.shape)
        block[mask] += spec.speckle_amplitude * signs[mask]
    if truth.subjects[record.subject_id]["gender"] == "M":
        img[:, :8] -= 45.0
    return np.clip(img, 0, 255).astype(np.uint8)
