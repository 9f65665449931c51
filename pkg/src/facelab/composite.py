"""Posterior-weighted race-composite age estimation and its cross-set
evaluation protocol.

Each directional fold trains everything — standardizer, PCA basis, race
classifier, sigmoid calibration, and both per-race age regressors — on one
side of the split and scores the other side, so no test subject ever
touches a fitted model.  The composite estimate blends the two per-race
age predictions by the calibrated posterior; the hard baseline simply
picks the higher-posterior race's prediction.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace

import numpy as np

from .features import PcaReducer, extract_lbp
from .learners import (
    EpsilonSVR,
    HingeSVC,
    PlattCalibrator,
    Standardizer,
)
from .records import compute_age_dec
from .subsets import SubsetSpec, allocate
from .synthgen import GenSpec, generate

ESTIMATION_RACES = ("B", "W")
GENDERS = ("F", "M")
CELLS = tuple(f"{r.lower()}{g.lower()}_{s}"
              for r in ESTIMATION_RACES for g in GENDERS for s in (1, 2))


class MissingFeatures(KeyError):
    def __init__(self, image_ids):
        super().__init__(f"{len(image_ids)} images lack cached features")
        self.image_ids = list(image_ids)


class LeakageDetected(RuntimeError):
    pass


@dataclass(frozen=True)
class CompositeEstimate:
    image_id: str
    w: float           # posterior P(White | decision value)
    yhat_W: float
    yhat_B: float
    y_star: float
    y_hard: float

    @property
    def b(self) -> float:
        return 1.0 - self.w


@dataclass
class ProtocolConfig:
    pca_components: int = 400
    svm_C: float = 1.0
    svr_C: float = 1.0
    epsilon: float = 1.0
    tol: float = 1e-3
    max_iter: int = 300
    gender_mode: str = "oracle"  # or "classified"
    use_grid: bool = False
    seed: int = 0

    def config_hash(self) -> str:
        payload = json.dumps(self.__dict__, sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


@dataclass
class EvalReport:
    mae: dict = field(default_factory=dict)           # cell -> float
    weighted_mae: dict = field(default_factory=dict)  # cell -> float
    counts: dict = field(default_factory=dict)        # cell -> int
    config_hash: str = ""
    gender_mode: str = "oracle"
    estimates: list = field(default_factory=list)

    def as_text(self) -> str:
        lines = [f"{'cell':>6}  {'n':>5}  {'MAE':>8}  {'wMAE':>8}"]
        for cell in CELLS:
            if cell in self.counts:
                lines.append(f"{cell:>6}  {self.counts[cell]:>5}  "
                             f"{self.mae[cell]:>8.3f}  "
                             f"{self.weighted_mae[cell]:>8.3f}")
        return "\n".join(lines)


def composite_age(w: float, yhat_B: float, yhat_W: float):
    """Blend the per-race predictions; ties on the hard pick go to White."""
    if not 0.0 <= w <= 1.0:
        raise ValueError(f"posterior out of range: {w}")
    y_star = (1.0 - w) * yhat_B + w * yhat_W
    y_hard = yhat_W if w >= 0.5 else yhat_B
    return y_star, y_hard


def _cell_of(record, side: int) -> str:
    return f"{record.race.lower()}{record.gender.lower()}_{side}"


class _FoldModels:
    """Everything fitted on one (gender, training side) slice."""

    def __init__(self, train_records, features, config):
        X = np.array([features[r.image_id] for r in train_records], dtype=np.float64)
        y_race = np.array([1.0 if r.race == "W" else -1.0 for r in train_records])
        ages = np.array([_age_of(r) for r in train_records])
        self.subjects = {r.subject_id for r in train_records}

        self.scaler = Standardizer().fit(X)
        k = min(config.pca_components, X.shape[0] - 1, X.shape[1])
        self.pca = PcaReducer(n_components=k).fit(self.scaler.transform(X))
        Z = self.pca.transform(self.scaler.transform(X))

        self.svm = HingeSVC(C=config.svm_C, tol=config.tol,
                            max_iter=config.max_iter).fit(Z, y_race)
        self.platt = PlattCalibrator().fit(self.svm.decision_function(Z), y_race)
        self.svr = {}
        for race, mask in (("B", y_race < 0), ("W", y_race > 0)):
            self.svr[race] = EpsilonSVR(
                C=config.svr_C, epsilon=config.epsilon, tol=config.tol,
                max_iter=config.max_iter).fit(Z[mask], ages[mask])

    def project(self, x):
        return self.pca.transform(self.scaler.transform(np.atleast_2d(x)))

    def score(self, record, features) -> CompositeEstimate:
        z = self.project(features[record.image_id])
        f = float(self.svm.decision_function(z)[0])
        w = float(self.platt.predict_proba([f])[0])
        yhat_B = float(self.svr["B"].predict(z)[0])
        yhat_W = float(self.svr["W"].predict(z)[0])
        y_star, y_hard = composite_age(w, yhat_B, yhat_W)
        return CompositeEstimate(record.image_id, w, yhat_W, yhat_B,
                                 y_star, y_hard)


class _GenderModels:
    """Gender classifier fitted on one training side, both races."""

    def __init__(self, train_records, features, config):
        X = np.array([features[r.image_id] for r in train_records], dtype=np.float64)
        y = np.array([1.0 if r.gender == "M" else -1.0 for r in train_records])
        self.scaler = Standardizer().fit(X)
        k = min(config.pca_components, X.shape[0] - 1, X.shape[1])
        self.pca = PcaReducer(n_components=k).fit(self.scaler.transform(X))
        Z = self.pca.transform(self.scaler.transform(X))
        self.svm = HingeSVC(C=config.svm_C, tol=config.tol,
                            max_iter=config.max_iter).fit(Z, y)

    def predict_gender(self, record, features) -> str:
        z = self.pca.transform(self.scaler.transform(
            np.atleast_2d(features[record.image_id])))
        return "M" if self.svm.decision_function(z)[0] >= 0 else "F"


def _age_of(record) -> float:
    if record.age_dec is not None:
        return record.age_dec
    return compute_age_dec(record.dob, record.arrest_date)


def run_protocol(features: dict, records, assignment, config=None) -> EvalReport:
    """Score every S-image through the opposite-side models.

    ``features`` maps image_id to a raw feature vector; ``assignment``
    is a subject-disjoint S1/S2/R split of ``records``.
    """
    config = config or ProtocolConfig()
    by_part = {"S1": [], "S2": []}
    for r in records:
        part = assignment.assignment.get(r.image_id)
        if part in by_part and r.race in ESTIMATION_RACES:
            by_part[part].append(r)
    missing = [r.image_id for rs in by_part.values() for r in rs
               if r.image_id not in features]
    if missing:
        raise MissingFeatures(missing)

    side_of = {"S1": 1, "S2": 2}
    folds = {}
    gender_clf = {}
    for part, train in by_part.items():
        for g in GENDERS:
            rows = [r for r in train if r.gender == g]
            folds[(g, part)] = _FoldModels(rows, features, config)
        if config.gender_mode == "classified":
            gender_clf[part] = _GenderModels(train, features, config)

    per_cell: dict = {c: [] for c in CELLS}
    estimates = []
    for test_part, train_part in (("S1", "S2"), ("S2", "S1")):
        test_subjects = {r.subject_id for r in by_part[test_part]}
        for (g, part), fold in folds.items():
            if part == train_part and fold.subjects & test_subjects:
                raise LeakageDetected(
                    f"training subjects of ({g}, {part}) appear in {test_part}")
        for r in by_part[test_part]:
            if config.gender_mode == "classified":
                g = gender_clf[train_part].predict_gender(r, features)
            else:
                g = r.gender
            est = folds[(g, train_part)].score(r, features)
            estimates.append(est)
            per_cell[_cell_of(r, side_of[test_part])].append(
                (abs(_age_of(r) - est.y_hard), abs(_age_of(r) - est.y_star)))

    report = EvalReport(config_hash=config.config_hash(),
                        gender_mode=config.gender_mode, estimates=estimates)
    for cell, pairs in per_cell.items():
        if pairs:
            hard, soft = np.array(pairs).T
            report.mae[cell] = float(hard.mean())
            report.weighted_mae[cell] = float(soft.mean())
            report.counts[cell] = len(pairs)
    return report


def export_estimates(report: EvalReport, records) -> str:
    """CSV of per-image predictions alongside the true decimal age."""
    ages = {r.image_id: _age_of(r) for r in records}
    lines = ["image_id,w,yhat_B,yhat_W,y_star,y_hard,age_dec"]
    for e in sorted(report.estimates, key=lambda e: e.image_id):
        lines.append(f"{e.image_id},{e.w:.6f},{e.yhat_B:.4f},{e.yhat_W:.4f},"
                     f"{e.y_star:.4f},{e.y_hard:.4f},{ages[e.image_id]:.4f}")
    return "\n".join(lines) + "\n"


TOY_PROPORTIONS = {("B", "F"): 0.25, ("W", "F"): 0.25,
                   ("B", "M"): 0.25, ("W", "M"): 0.25}


def toy_corpus(master_seed: int = 0):
    """1,000 single-image subjects, uniform ages, balanced cells."""
    spec = GenSpec(subject_count=1000, mean_arrests=1.0, max_arrests=1,
                   cell_proportions=dict(TOY_PROPORTIONS),
                   age_distribution="uniform", master_seed=master_seed)
    records, images, truth = generate(spec, with_images=True)
    records = [r.with_age() for r in records]
    features = {iid: extract_lbp(img) for iid, img in images.items()}
    return records, features, truth


def toy_mode(config=None, master_seed: int = 0, slack: int = 2) -> EvalReport:
    """Build the balanced toy corpus, split it, and run the protocol."""
    config = config or ProtocolConfig()
    records, features, _ = toy_corpus(master_seed)
    # anchor the smallest cell so the 1:1:1:1 targets stay reachable
    # despite binomial noise in the generated cell sizes
    sizes: dict = {}
    for r in records:
        sizes[(r.race, r.gender)] = sizes.get((r.race, r.gender), 0) + 1
    anchor = min(sizes, key=lambda c: (sizes[c], c))
    split = allocate(records, SubsetSpec(male_female_ratio=1,
                                        white_black_ratio=1, anchor=anchor,
                                        slack=slack),
                     seed=config.seed)
    return run_protocol(features, records, split, config)
