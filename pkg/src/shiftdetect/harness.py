"""End-to-end experiment pipeline.

Fits every requested reducer once on the training split, re-splits
validation/test per run, applies each shift to the test side only, sweeps
target sample sizes, and records one TestOutcome per grid cell. Cells are
independent given the fitted reducers; every random choice derives from
(base seed, cell coordinates), so results do not depend on scheduling and
a fixed base seed reproduces the result bit-exactly.
"""

from __future__ import annotations

import csv
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import nets, shifts
from .data import DataSplit, TensorDataset, flatten, random_split
from .dimred import DrKind, Representation, build_srp, fit_pca, reduce
from .errors import ConfigInvalid, EmptyResult, NotFound, ShiftDetectError
from .nets import SoftmaxClassifier, TrainConfig
from .stattest import (
    MULTIVARIATE_SAMPLE_CAP,
    TestMode,
    TestOutcome,
    TestTag,
    binomial_two_sided,
    bonferroni_aggregate,
    dispatch_test,
    ks_pvalues_by_column,
)


@dataclass(frozen=True)
class MethodSpec:
    kind: DrKind
    mode: TestMode = TestMode.UNIVARIATE


@dataclass(frozen=True)
class NamedShift:
    name: str
    spec: shifts.ShiftSpec
    intensity: str = "custom"


@dataclass(frozen=True)
class ExperimentConfig:
    methods: tuple
    shifts: tuple
    n_train: int
    n_val: int
    n_test: int
    sample_sizes: tuple = (10, 20, 50, 100, 200, 500, 1000, 10000)
    runs: int = 5
    alpha: float = 0.05
    seed: int = 0
    latent_dim: int = 32
    hidden_dim: int = 256
    domain_hidden_dim: int = 32
    ae_epochs: int = 15
    clf_epochs: int = 15
    domain_epochs: int = 10
    batch_size: int = 128
    domain_batch_size: int = 32  # domain pools are tiny; keep enough updates per epoch
    lr0: float = 0.1
    ae_lr0: float = 2.0  # per-element MSE gradients are ~1/D the CE scale
    momentum: float = 0.9
    patience: int = 5
    n_perms: int = 1000

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ConfigInvalid(f"alpha must be in (0, 1), got {self.alpha}")
        if self.runs < 1:
            raise ConfigInvalid("runs must be >= 1")
        if not self.methods:
            raise ConfigInvalid("at least one method is required")
        if not self.shifts:
            raise ConfigInvalid("at least one shift is required")
        if min(self.sample_sizes) < 1:
            raise ConfigInvalid("sample sizes must be positive")

    @staticmethod
    def from_dict(raw: dict) -> "ExperimentConfig":
        raw = dict(raw)
        raw.pop("dataset", None)
        try:
            methods = tuple(_method_from_entry(m) for m in raw.pop("methods"))
            named = tuple(_shift_from_entry(s) for s in raw.pop("shifts"))
        except KeyError as exc:
            raise ConfigInvalid(f"missing config key: {exc}") from exc
        if "sample_sizes" in raw:
            raw["sample_sizes"] = tuple(int(s) for s in raw["sample_sizes"])
        try:
            return ExperimentConfig(methods=methods, shifts=named, **raw)
        except TypeError as exc:
            raise ConfigInvalid(str(exc)) from exc

    def train_config(self, epochs: int, seed: int, lr0: float | None = None) -> TrainConfig:
        return TrainConfig(batch_size=self.batch_size, lr0=lr0 or self.lr0,
                           momentum=self.momentum, max_epochs=epochs,
                           patience=self.patience, seed=seed)


def _method_from_entry(entry) -> MethodSpec:
    if isinstance(entry, str):
        return MethodSpec(kind=DrKind(entry))
    if isinstance(entry, (list, tuple)):
        kind, mode = entry
        return MethodSpec(kind=DrKind(kind), mode=TestMode(mode))
    return MethodSpec(kind=DrKind(entry["kind"]),
                      mode=TestMode(entry.get("mode", "univariate")))


def _shift_from_entry(entry) -> NamedShift:
    if isinstance(entry, NamedShift):
        return entry
    entry = dict(entry)
    label = entry.pop("name", None)
    intensity = entry.pop("intensity", None)
    if "preset" in entry:
        preset_name = entry.pop("preset")
        try:
            spec = shifts.preset(preset_name, **entry)
        except (TypeError, ValueError) as exc:
            raise ConfigInvalid(f"bad shift entry {preset_name!r}: {exc}") from exc
        return NamedShift(name=label or f"{preset_name}@d{spec.delta:g}", spec=spec,
                          intensity=intensity or shifts.intensity_of(preset_name))
    if label is None:
        raise ConfigInvalid("custom shift entries need a 'name'")
    try:
        spec = shifts.ShiftSpec.from_dict(entry)
    except (TypeError, ValueError) as exc:
        raise ConfigInvalid(f"bad shift entry {label!r}: {exc}") from exc
    return NamedShift(name=label, spec=spec, intensity=intensity or "custom")


@dataclass
class Record:
    shift: str
    intensity: str
    delta: float
    method: str
    mode: str
    sample_size: int
    run: int
    status: str                      # "ok" or "skipped"
    outcome: TestOutcome | None = None
    reason: str = ""


@dataclass
class ExperimentResult:
    records: list
    metadata: dict = field(default_factory=dict)


@dataclass
class FittedReducers:
    pca: object = None
    srp: object = None
    uae: object = None
    tae: object = None
    label_clf: SoftmaxClassifier | None = None

    def handle_for(self, kind: DrKind):
        return {
            DrKind.NORED: None,
            DrKind.PCA: self.pca,
            DrKind.SRP: self.srp,
            DrKind.UAE: self.uae,
            DrKind.TAE: self.tae,
            DrKind.BBSDS: self.label_clf,
            DrKind.BBSDH: self.label_clf,
        }[kind]


def _derive_seed(*parts) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


def _spec_needs_classifier(spec: shifts.ShiftSpec) -> bool:
    if spec.kind == shifts.KIND_ADVERSARIAL:
        return True
    return any(_spec_needs_classifier(p) for p in spec.parts)


def concat_datasets(a: TensorDataset, b: TensorDataset) -> TensorDataset:
    if a.image_shape != b.image_shape or a.num_classes != b.num_classes:
        raise ConfigInvalid("datasets disagree in shape or class count")
    return TensorDataset(np.concatenate([a.images, b.images]),
                         np.concatenate([a.labels, b.labels]), a.num_classes)


def fit_reducers(train: TensorDataset, cfg: ExperimentConfig) -> FittedReducers:
    """Fit every reducer the config needs, using training data only.

    The label classifier and trained autoencoder carve an internal 90/10
    early-stopping split out of the training part; validation and test data
    are never seen here.
    """
    kinds = {m.kind for m in cfg.methods}
    x = flatten(train)
    d = x.shape[1]
    fitted = FittedReducers()

    if DrKind.PCA in kinds:
        fitted.pca = fit_pca(x, cfg.latent_dim)
    if DrKind.SRP in kinds:
        fitted.srp = build_srp(d, cfg.latent_dim, seed=_derive_seed(cfg.seed, 11))
    arch = (d, cfg.hidden_dim, cfg.latent_dim)
    if DrKind.UAE in kinds:
        fitted.uae = nets.train_autoencoder(
            x, x[:1], arch, cfg.train_config(0, _derive_seed(cfg.seed, 12)))

    inner_n = max(1, int(0.9 * train.n))
    perm = np.random.default_rng(_derive_seed(cfg.seed, 13)).permutation(train.n)
    x_fit, x_stop = x[perm[:inner_n]], x[perm[inner_n:]]
    y = train.labels
    y_fit, y_stop = y[perm[:inner_n]], y[perm[inner_n:]]
    if x_stop.shape[0] == 0:
        x_stop, y_stop = x_fit, y_fit

    if DrKind.TAE in kinds:
        fitted.tae = nets.train_autoencoder(
            x_fit, x_stop, arch,
            cfg.train_config(cfg.ae_epochs, _derive_seed(cfg.seed, 14), lr0=cfg.ae_lr0))
    needs_clf = bool(kinds & {DrKind.BBSDS, DrKind.BBSDH}) or any(
        _spec_needs_classifier(s.spec) for s in cfg.shifts)
    if needs_clf:
        fitted.label_clf = nets.train_label_classifier(
            (x_fit, y_fit), (x_stop, y_stop), train.num_classes,
            cfg.train_config(cfg.clf_epochs, _derive_seed(cfg.seed, 15)),
            hidden_dims=(cfg.hidden_dim,))
    return fitted


# ---------------------------------------------------------------------------
# Domain-classifier path

@dataclass
class DomainCheck:
    clf: SoftmaxClassifier
    outcome: TestOutcome
    accuracy: float
    n_heldout: int
    heldout_source: np.ndarray
    heldout_target: np.ndarray
    heldout_target_indices: np.ndarray


def run_domain_classifier_test(source: np.ndarray, target: np.ndarray,
                               train_cfg: TrainConfig, alpha: float = 0.05,
                               seed: int = 0, hidden_dims=(32,)) -> DomainCheck:
    """Half-split domain-classifier protocol with an exact binomial test.

    Both sides are shuffled by the seed and split 50/50; the first halves
    train a source-vs-target classifier, the second halves are scored, and
    held-out accuracy is compared against chance with a two-sided binomial
    test over all held-out samples.
    """
    source = np.atleast_2d(np.asarray(source, dtype=np.float64))
    target = np.atleast_2d(np.asarray(target, dtype=np.float64))
    rng = np.random.default_rng(seed)
    src_order = rng.permutation(source.shape[0])
    tgt_order = rng.permutation(target.shape[0])
    half_src, half_tgt = source.shape[0] // 2, target.shape[0] // 2
    if half_src < 2 or half_tgt < 2:
        raise ConfigInvalid("need at least 2 samples per half on each side")

    clf = nets.train_domain_classifier(
        source[src_order[:half_src]], target[tgt_order[:half_tgt]],
        train_cfg, hidden_dims=hidden_dims)

    held_src = source[src_order[half_src:]]
    held_tgt_idx = tgt_order[half_tgt:]
    held_tgt = target[held_tgt_idx]
    preds_src = nets.hard_predictions(clf, held_src)
    preds_tgt = nets.hard_predictions(clf, held_tgt)
    correct = int(np.sum(preds_src == 0) + np.sum(preds_tgt == 1))
    n_heldout = held_src.shape[0] + held_tgt.shape[0]
    p = binomial_two_sided(correct, n_heldout)
    acc = correct / n_heldout
    outcome = TestOutcome(statistic=acc, p_value=p, alpha=alpha,
                          reject=p < alpha, test_tag=TestTag.BINOMIAL)
    return DomainCheck(clf=clf, outcome=outcome, accuracy=acc, n_heldout=n_heldout,
                       heldout_source=held_src, heldout_target=held_tgt,
                       heldout_target_indices=held_tgt_idx)


@dataclass
class ExemplarReport:
    gate_passed: bool
    binomial_p: float
    top_different: list  # (index, score), scores descending
    top_similar: list    # (index, score), scores ascending


def top_exemplars(domain_clf: SoftmaxClassifier, target_heldout: np.ndarray,
                  k: int, binomial_p: float, alpha: float = 0.05) -> ExemplarReport:
    """Most/least target-typical held-out samples by domain-classifier score.

    Only reported when the binomial test rejects; otherwise the report is
    empty with the gate recorded.
    """
    if binomial_p >= alpha:
        return ExemplarReport(gate_passed=False, binomial_p=binomial_p,
                              top_different=[], top_similar=[])
    scores = nets.domain_scores(domain_clf, target_heldout)
    desc = np.argsort(-scores, kind="stable")[:k]
    asc = np.argsort(scores, kind="stable")[:k]
    return ExemplarReport(
        gate_passed=True,
        binomial_p=binomial_p,
        top_different=[(int(i), float(scores[i])) for i in desc],
        top_similar=[(int(i), float(scores[i])) for i in asc],
    )


# ---------------------------------------------------------------------------
# The experiment grid

def _slice_representation(rep: Representation, s: int) -> Representation:
    return Representation(values=rep.values[:s], arity=rep.arity)


def run_experiment(dataset: TensorDataset, cfg: ExperimentConfig,
                   threads: int = 1) -> ExperimentResult:
    """Execute the full (shift x method x sample size x run) grid.

    The training split is fixed once; each run re-splits the remaining pool
    into validation (source) and test (target), applies every shift to the
    test side only, and draws nested subsamples of each requested size from
    one per-(run, shift) shuffled order. Cells run in a thread pool of the
    requested size; records come back in grid order regardless of threads.
    """
    started = time.time()
    split = random_split(dataset, cfg.n_train, cfg.n_val, cfg.n_test, seed=cfg.seed)
    fitted = fit_reducers(split.train, cfg)
    vt_pool = concat_datasets(split.val, split.test)

    pool = ThreadPoolExecutor(max_workers=max(1, threads)) if threads > 1 else None
    keyed_records = []
    try:
        for run in range(cfg.runs):
            perm = np.random.default_rng(
                np.random.SeedSequence([cfg.seed, 21, run])).permutation(vt_pool.n)
            val_r = vt_pool.subset(perm[:cfg.n_val])
            test_r = vt_pool.subset(perm[cfg.n_val:cfg.n_val + cfg.n_test])
            source_flat_full = flatten(val_r)

            for shift_idx, named in enumerate(cfg.shifts):
                spec = shifts.with_seed(named.spec,
                                        _derive_seed(cfg.seed, 31, run, shift_idx))
                shifted = shifts.apply_shift(spec, test_r, classifier=fitted.label_clf)
                target_flat = flatten(shifted)
                src_order = np.random.default_rng(
                    np.random.SeedSequence([cfg.seed, 41, run, shift_idx])
                ).permutation(source_flat_full.shape[0])
                tgt_order = np.random.default_rng(
                    np.random.SeedSequence([cfg.seed, 42, run, shift_idx])
                ).permutation(target_flat.shape[0])
                source_flat = source_flat_full[src_order]
                target_shuffled = target_flat[tgt_order]

                reps = {}
                for midx, method in enumerate(cfg.methods):
                    if method.kind == DrKind.CLASSIF:
                        continue
                    handle = fitted.handle_for(method.kind)
                    reps[midx] = (reduce(method.kind, handle, source_flat),
                                  reduce(method.kind, handle, target_shuffled))

                block = []
                for midx, method in enumerate(cfg.methods):
                    for s in cfg.sample_sizes:
                        key = (shift_idx, midx, s, run)
                        base = dict(shift=named.name, intensity=named.intensity,
                                    delta=named.spec.delta, method=method.kind.value,
                                    mode=method.mode.value, sample_size=s, run=run)
                        block.append((key, _make_cell(cfg, method, base, s, midx, reps,
                                                      source_flat, target_shuffled,
                                                      run, shift_idx)))
                if pool is not None:
                    results = pool.map(lambda kv: (kv[0], kv[1]()), block)
                else:
                    results = ((key, job()) for key, job in block)
                keyed_records.extend(results)
    finally:
        if pool is not None:
            pool.shutdown()

    keyed_records.sort(key=lambda kv: kv[0])
    metadata = {
        "n_records": len(keyed_records),
        "elapsed_seconds": time.time() - started,
        "seed": cfg.seed,
        "alpha": cfg.alpha,
    }
    return ExperimentResult(records=[r for _, r in keyed_records], metadata=metadata)


def _make_cell(cfg, method, base, s, midx, reps, source_flat, target_shuffled,
               run, shift_idx):
    def cell() -> Record:
        n_src = source_flat.shape[0]
        n_tgt = target_shuffled.shape[0]
        if s > n_src or s > n_tgt:
            return Record(**base, status="skipped",
                          reason=f"insufficient samples (source {n_src}, target {n_tgt})")
        try:
            if method.kind == DrKind.CLASSIF:
                if s // 2 < 2:
                    return Record(**base, status="skipped",
                                  reason="fewer than 2 samples per half")
                domain_cfg = TrainConfig(
                    batch_size=cfg.domain_batch_size, lr0=cfg.lr0,
                    momentum=cfg.momentum, max_epochs=cfg.domain_epochs,
                    patience=cfg.patience,
                    seed=_derive_seed(cfg.seed, 51, run, shift_idx, s))
                check = run_domain_classifier_test(
                    source_flat[:s], target_shuffled[:s], domain_cfg,
                    alpha=cfg.alpha,
                    seed=_derive_seed(cfg.seed, 52, run, shift_idx, s),
                    hidden_dims=(cfg.domain_hidden_dim,))
                return Record(**base, status="ok", outcome=check.outcome)
            if method.mode == TestMode.MULTIVARIATE and s > MULTIVARIATE_SAMPLE_CAP:
                return Record(**base, status="skipped",
                              reason=f"multivariate mode capped at {MULTIVARIATE_SAMPLE_CAP}")
            rep_src, rep_tgt = reps[midx]
            outcome = dispatch_test(
                _slice_representation(rep_src, s), _slice_representation(rep_tgt, s),
                method.kind, method.mode, alpha=cfg.alpha,
                seed=_derive_seed(cfg.seed, 61, run, shift_idx, midx, s),
                n_perms=cfg.n_perms)
        except ShiftDetectError as exc:
            return Record(**base, status="skipped", reason=str(exc))
        return Record(**base, status="ok", outcome=outcome)

    return cell


# ---------------------------------------------------------------------------
# Aggregation

def _ok_records(result: ExperimentResult) -> list:
    return [r for r in result.records if r.status == "ok"]


def detection_accuracy(result: ExperimentResult, group_by: tuple) -> list:
    """Rejection rate within each group of non-skipped records.

    group_by names Record fields, e.g. ("method", "sample_size"). Returns
    sorted rows of {field: value, ..., "accuracy": rate, "n": count}.
    """
    usable = _ok_records(result)
    if not usable:
        raise EmptyResult("no usable records")
    groups: dict = {}
    for rec in usable:
        key = tuple(getattr(rec, f) for f in group_by)
        hits, total = groups.get(key, (0, 0))
        groups[key] = (hits + int(rec.outcome.reject), total + 1)
    def mixed_key(key):
        # numbers sort numerically, everything else as text
        return tuple((0, v, "") if isinstance(v, (int, float)) else (1, 0, str(v))
                     for v in key)

    rows = []
    for key in sorted(groups, key=mixed_key):
        hits, total = groups[key]
        row = dict(zip(group_by, key))
        row["accuracy"] = hits / total
        row["n"] = total
        rows.append(row)
    return rows


def pvalue_evolution(result: ExperimentResult, shift: str, method: str) -> list:
    """Mean and min/max p-value per sample size for one (shift, method) pair."""
    recs = [r for r in _ok_records(result) if r.shift == shift and r.method == method]
    if not recs:
        raise NotFound(f"no records for shift={shift!r}, method={method!r}")
    by_size: dict = {}
    for rec in recs:
        by_size.setdefault(rec.sample_size, []).append(rec.outcome.p_value)
    return [
        {"sample_size": s, "mean_p": float(np.mean(ps)), "min_p": float(np.min(ps)),
         "max_p": float(np.max(ps)), "n": len(ps)}
        for s, ps in sorted(by_size.items())
    ]


def original_split_check(given: DataSplit, random_seed: int, alpha: float = 0.05,
                         restrict_class: int | None = None) -> tuple:
    """Raw-pixel KS-Bonferroni on a canonical split vs a random re-split.

    Compares the train and test parts of the given split as distributions
    (optionally restricted to one class), then pools those parts, re-splits
    them at the same sizes with the given seed, and tests again. Returns
    (canonical outcome, re-split outcome): an iid split should fail to
    reject in both; a non-iid canonical split rejects only in the first.
    """
    part_a, part_b = given.train, given.test
    if restrict_class is not None:
        part_a = part_a.subset(part_a.class_indices(restrict_class))
        part_b = part_b.subset(part_b.class_indices(restrict_class))
    canonical = bonferroni_aggregate(
        ks_pvalues_by_column(flatten(part_a), flatten(part_b)), alpha)

    pooled = concat_datasets(part_a, part_b)
    perm = np.random.default_rng(random_seed).permutation(pooled.n)
    re_a = pooled.subset(perm[:part_a.n])
    re_b = pooled.subset(perm[part_a.n:])
    resplit = bonferroni_aggregate(
        ks_pvalues_by_column(flatten(re_a), flatten(re_b)), alpha)
    return canonical, resplit


# ---------------------------------------------------------------------------
# CSV persistence

RECORD_COLUMNS = ("shift", "intensity", "delta", "method", "mode", "sample_size",
                  "run", "status", "test_tag", "statistic", "p_value", "reject",
                  "reason")


def write_records_csv(result: ExperimentResult, path) -> None:
    """One row per grid cell; floats keep full round-trip precision."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(RECORD_COLUMNS)
        for r in result.records:
            if r.outcome is None:
                tag, stat, p, reject = "", "", "", ""
            else:
                tag = r.outcome.test_tag.value
                stat = repr(r.outcome.statistic)
                p = repr(r.outcome.p_value)
                reject = "true" if r.outcome.reject else "false"
            writer.writerow([r.shift, r.intensity, repr(float(r.delta)), r.method,
                             r.mode, r.sample_size, r.run, r.status, tag, stat, p,
                             reject, r.reason])


def read_records_csv(path, alpha: float = 0.05) -> ExperimentResult:
    records = []
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        for row in reader:
            outcome = None
            if row["status"] == "ok":
                outcome = TestOutcome(statistic=float(row["statistic"]),
                                      p_value=float(row["p_value"]), alpha=alpha,
                                      reject=row["reject"] == "true",
                                      test_tag=TestTag(row["test_tag"]))
            records.append(Record(
                shift=row["shift"], intensity=row["intensity"],
                delta=float(row["delta"]), method=row["method"], mode=row["mode"],
                sample_size=int(row["sample_size"]), run=int(row["run"]),
                status=row["status"], outcome=outcome, reason=row["reason"]))
    return ExperimentResult(records=records)


def write_accuracy_csv(result: ExperimentResult, group_by: tuple, path) -> None:
    rows = detection_accuracy(result, group_by)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow([*group_by, "accuracy", "n"])
        for row in rows:
            writer.writerow([*(row[g] for g in group_by), repr(row["accuracy"]), row["n"]])


def write_pvalue_curves_csv(result: ExperimentResult, path) -> None:
    pairs = sorted({(r.shift, r.method) for r in _ok_records(result)})
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["shift", "method", "sample_size", "mean_p", "min_p",
                         "max_p", "n"])
        for shift_name, method in pairs:
            for row in pvalue_evolution(result, shift_name, method):
                writer.writerow([shift_name, method, row["sample_size"],
                                 repr(row["mean_p"]), repr(row["min_p"]),
                                 repr(row["max_p"]), row["n"]])
