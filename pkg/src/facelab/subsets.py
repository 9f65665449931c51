"""Subject-disjoint S1/S2/R splitting under exact ratio constraints.

All white-female subjects anchor the split: their image total fixes the
per-side targets for every race-gender cell (1:1 white:black, 3:1
male:female by default).  Hitting an exact image count with multi-image
subjects is a subset-sum problem, solved by a seeded greedy fill plus a
bounded local-repair search; seeds that cannot be repaired are reported
infeasible rather than silently relaxed.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from . import gof

CELL_ORDER = [("W", "F"), ("B", "F"), ("W", "M"), ("B", "M")]
REPAIR_BUDGET = 10_000


class InfeasibleSplit(RuntimeError):
    def __init__(self, cell, target, best_achieved):
        super().__init__(
            f"cell {cell}: no subject packing reaches {target} images per side "
            f"(best deviation {best_achieved})"
        )
        self.cell = cell
        self.target = target
        self.best_achieved = best_achieved


class AllSeedsInfeasible(RuntimeError):
    pass


@dataclass(frozen=True)
class SubsetSpec:
    male_female_ratio: int = 3
    white_black_ratio: int = 1
    anchor: tuple = ("W", "F")
    slack: int = 0
    permutations: int = 10_000
    score_combiner: str = "min"  # or "mean"

    def spec_hash(self) -> str:
        payload = json.dumps(self.__dict__, sort_keys=True, default=list)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class SeedScore:
    seed: int
    p_ks: float
    p_ad: float
    combined: float


@dataclass
class SplitAssignment:
    assignment: dict  # image_id -> "S1" | "S2" | "R"
    seed: int
    spec_hash: str
    image_counts: dict = field(default_factory=dict)  # (race, gender) -> {S1,S2,R}
    subject_counts: dict = field(default_factory=dict)
    certificate: dict = field(default_factory=dict)

    def images(self, part):
        return [i for i, p in self.assignment.items() if p == part]


def _cell_targets(counts_per_cell, spec: SubsetSpec):
    """Per-side image targets derived from the anchor cell's total."""
    anchor_total = counts_per_cell[spec.anchor]
    return {
        ("W", "F"): anchor_total / 2,
        ("B", "F"): anchor_total / 2 * spec.white_black_ratio,
        ("W", "M"): anchor_total / 2 * spec.male_female_ratio,
        ("B", "M"): anchor_total / 2 * spec.male_female_ratio * spec.white_black_ratio,
    }


def _deviation(s1, s2, pool, target, must_use_all):
    d = abs(s1 - target) + abs(s2 - target)
    if must_use_all:
        d += pool
    return d


def _pack_cell(subject_images, target, slack, rng, must_use_all):
    """Pick two disjoint subject groups each totalling ``target`` images.

    Returns (side1, side2) subject-id lists, with remaining subjects
    implicitly destined for R.  Raises InfeasibleSplit when the greedy
    fill plus 10k repair moves cannot reach the target within slack.
    """
    subjects = list(subject_images)
    rng.shuffle(subjects)
    sizes = {s: subject_images[s] for s in subjects}
    side = {s: None for s in subjects}
    sums = {1: 0, 2: 0}
    for which in (1, 2):
        for s in subjects:
            if side[s] is None and sums[which] + sizes[s] <= target:
                side[s] = which
                sums[which] += sizes[s]

    def pool():
        return [s for s in subjects if side[s] is None]

    def ok():
        close = abs(sums[1] - target) <= slack and abs(sums[2] - target) <= slack
        return close and (not must_use_all or not pool())

    dev = _deviation(sums[1], sums[2], sum(sizes[s] for s in pool()), target, must_use_all)
    moves = 0
    while not ok() and moves < REPAIR_BUDGET:
        moves += 1
        kind = rng.integers(0, 3)
        cand = None
        if kind == 0 and not must_use_all:  # move one subject in/out of a side
            s = subjects[rng.integers(0, len(subjects))]
            new_side = [None, 1, 2][rng.integers(0, 3)]
            if new_side != side[s]:
                cand = [(s, new_side)]
        elif kind == 1:  # swap two subjects between locations
            a = subjects[rng.integers(0, len(subjects))]
            b = subjects[rng.integers(0, len(subjects))]
            if side[a] != side[b]:
                cand = [(a, side[b]), (b, side[a])]
        else:  # move between the two sides
            s = subjects[rng.integers(0, len(subjects))]
            if side[s] in (1, 2):
                cand = [(s, 3 - side[s])]
            elif must_use_all:
                cand = [(s, [1, 2][rng.integers(0, 2)])]
        if not cand:
            continue
        old = [(s, side[s]) for s, _ in cand]
        for s, ns in cand:
            if side[s] in (1, 2):
                sums[side[s]] -= sizes[s]
            side[s] = ns
            if ns in (1, 2):
                sums[ns] += sizes[s]
        new_dev = _deviation(
            sums[1], sums[2], sum(sizes[s] for s in pool()), target, must_use_all
        )
        if new_dev < dev or (new_dev == dev and rng.random() < 0.3):
            dev = new_dev
        else:
            for s, ns in old:
                if side[s] in (1, 2):
                    sums[side[s]] -= sizes[s]
                side[s] = ns
                if ns in (1, 2):
                    sums[ns] += sizes[s]
    if not ok():
        raise InfeasibleSplit(None, target, dev)
    return ([s for s in subjects if side[s] == 1], [s for s in subjects if side[s] == 2])


def allocate(records, spec: SubsetSpec, seed: int) -> SplitAssignment:
    """Deterministically split records into S1/S2/R for one seed."""
    by_cell: dict = {cell: {} for cell in CELL_ORDER}
    subject_cell: dict = {}
    for r in records:
        subject_cell[r.subject_id] = (r.race, r.gender)
        if (r.race, r.gender) in by_cell:
            by_cell[(r.race, r.gender)][r.subject_id] = (
                by_cell[(r.race, r.gender)].get(r.subject_id, 0) + 1
            )
    for cell in CELL_ORDER:
        if not by_cell[cell]:
            raise InfeasibleSplit(cell, 0, 0)
    totals = {cell: sum(by_cell[cell].values()) for cell in CELL_ORDER}
    targets = _cell_targets(totals, spec)

    placement: dict[str, str] = {}
    for idx, cell in enumerate(CELL_ORDER):
        target = targets[cell]
        if target != int(target) and spec.slack == 0:
            raise InfeasibleSplit(cell, target, None)
        rng = np.random.default_rng([seed, idx])
        try:
            s1_subs, s2_subs = _pack_cell(
                by_cell[cell], int(round(target)), spec.slack, rng,
                must_use_all=(cell == spec.anchor),
            )
        except InfeasibleSplit as e:
            raise InfeasibleSplit(cell, int(round(target)), e.best_achieved) from None
        for s in s1_subs:
            placement[s] = "S1"
        for s in s2_subs:
            placement[s] = "S2"

    assignment = {r.image_id: placement.get(r.subject_id, "R") for r in records}
    out = SplitAssignment(assignment, seed, spec.spec_hash())
    _summarize(out, records)
    _certify(out, records, spec, targets)
    return out


def _summarize(split: SplitAssignment, records):
    img: dict = {}
    subj: dict = {}
    for r in records:
        part = split.assignment[r.image_id]
        cell = (r.race, r.gender)
        img.setdefault(cell, {"S1": 0, "S2": 0, "R": 0})[part] += 1
        subj.setdefault(cell, {"S1": set(), "S2": set(), "R": set()})[part].add(
            r.subject_id
        )
    split.image_counts = img
    split.subject_counts = {
        cell: {p: len(s) for p, s in parts.items()} for cell, parts in subj.items()
    }


def _certify(split: SplitAssignment, records, spec: SubsetSpec, targets):
    parts_by_subject: dict = {}
    for r in records:
        parts_by_subject.setdefault(r.subject_id, set()).add(
            split.assignment[r.image_id]
        )
    disjoint = all(len(p) == 1 for p in parts_by_subject.values())

    counts = split.image_counts
    per_cell_ok = True
    for cell in CELL_ORDER:
        c = counts.get(cell, {"S1": 0, "S2": 0})
        t = int(round(targets[cell]))
        if abs(c["S1"] - t) > spec.slack or abs(c["S2"] - t) > spec.slack:
            per_cell_ok = False

    def n(cell, part):
        return counts.get(cell, {}).get(part, 0)

    ratios_ok = True
    for part in ("S1", "S2"):
        wf, bf = n(("W", "F"), part), n(("B", "F"), part)
        wm, bm = n(("W", "M"), part), n(("B", "M"), part)
        if abs(wm - spec.male_female_ratio * wf) > 2 * spec.slack:
            ratios_ok = False
        if abs(bm - spec.male_female_ratio * bf) > 2 * spec.slack:
            ratios_ok = False
        if abs(wf - spec.white_black_ratio * bf) > 2 * spec.slack:
            ratios_ok = False
    anchor_in_s = all(
        split.assignment[r.image_id] != "R"
        for r in records
        if (r.race, r.gender) == spec.anchor
    )
    others_in_r = all(
        split.assignment[r.image_id] == "R"
        for r in records
        if r.race not in ("B", "W")
    )
    split.certificate = {
        "subject_disjoint": disjoint,
        "per_cell_equality": per_cell_ok,
        "ratios": ratios_ok,
        "anchor_fully_included": anchor_in_s,
        "other_races_in_r": others_in_r,
    }


def score_split(split: SplitAssignment, records, spec: SubsetSpec) -> SeedScore:
    """Permutation p-values comparing S1 and S2 decimal-age samples."""
    ages = {"S1": [], "S2": []}
    for r in records:
        part = split.assignment[r.image_id]
        if part in ages:
            ages[part].append(r.age_dec)
    p_ks = gof.permutation_p_value(
        ages["S1"], ages["S2"], gof.ks_statistic, spec.permutations, seed=split.seed
    ).p_value
    p_ad = gof.permutation_p_value(
        ages["S1"], ages["S2"], gof.ad_statistic, spec.permutations, seed=split.seed
    ).p_value
    combined = min(p_ks, p_ad) if spec.score_combiner == "min" else (p_ks + p_ad) / 2
    return SeedScore(split.seed, p_ks, p_ad, combined)


def search_seeds(records, spec: SubsetSpec, seeds):
    """Allocate and score every feasible seed; return the best split.

    Result is (best SplitAssignment, [SeedScore ...] ranked best-first).
    """
    scores = []
    splits = {}
    for seed in seeds:
        try:
            split = allocate(records, spec, seed)
        except InfeasibleSplit:
            continue
        splits[seed] = split
        scores.append(score_split(split, records, spec))
    if not scores:
        raise AllSeedsInfeasible(f"none of {len(list(seeds))} seeds produced a split")
    ranked = sorted(scores, key=lambda s: (-s.combined, s.seed))
    return splits[ranked[0].seed], ranked


def five_number_summary(values):
    v = np.asarray(values, dtype=float)
    q1, med, q3 = np.percentile(v, [25, 50, 75])
    return {
        "min": float(v.min()), "q1": float(q1), "median": float(med),
        "q3": float(q3), "max": float(v.max()),
        "mean": float(v.mean()), "sd": float(v.std(ddof=1)) if v.size > 1 else 0.0,
    }


def emit_summaries(split: SplitAssignment, records):
    """Numeric and plot-ready summaries of the assignment."""
    ages = {"S1": [], "S2": [], "W": []}
    for r in records:
        part = split.assignment[r.image_id]
        ages["W"].append(r.age_dec)
        if part in ("S1", "S2"):
            ages[part].append(r.age_dec)
    summaries = {k: five_number_summary(v) for k, v in ages.items() if v}
    hist = {}
    edges = np.arange(16, 80, 4.0)
    for k, v in ages.items():
        counts, _ = np.histogram(v, bins=edges)
        hist[k] = {"edges": edges.tolist(), "counts": counts.tolist()}
    ecdf = {}
    for k in ("S1", "S2"):
        if ages[k]:
            xs = np.sort(ages[k])
            ecdf[k] = {"x": xs.tolist(),
                       "F": ((np.arange(xs.size) + 1) / xs.size).tolist()}
    return {
        "age_summary": summaries,
        "image_counts": {f"{r}{g}": c for (r, g), c in split.image_counts.items()},
        "subject_counts": {f"{r}{g}": c for (r, g), c in split.subject_counts.items()},
        "age_histograms": hist,
        "age_ecdf": ecdf,
        "certificate": split.certificate,
        "seed": split.seed,
    }


def save_assignment(split: SplitAssignment, records, path):
    subject_of = {r.image_id: r.subject_id for r in records}
    with open(path, "w") as fh:
        fh.write("image_id,subject_id,set\n")
        for image_id in sorted(split.assignment):
            fh.write(f"{image_id},{subject_of[image_id]},{split.assignment[image_id]}\n")
        fh.write(f"# seed={split.seed} spec_hash={split.spec_hash}\n")


def load_assignment(path):
    assignment = {}
    seed = spec_hash = None
    with open(path) as fh:
        header = fh.readline()
        for line in fh:
            line = line.strip()
            if line.startswith("#"):
                fields = dict(p.split("=") for p in line[1:].split())
                seed, spec_hash = int(fields["seed"]), fields["spec_hash"]
            elif line:
                image_id, _, part = line.split(",")
                assignment[image_id] = part
    return SplitAssignment(assignment, seed, spec_hash)
