"""Dataset contracts and the three trainable stages behind zero-shot and
generalized zero-shot evaluation.

Data flows in as line-delimited feature records (either a pre-extracted
vector or a raw joints x coords x frames sequence per sample), a semantic
embedding file, and a seen/unseen class split. Stage 2 jointly trains the
twin VAEs and the frequency-band weights on seen-class batches. Stage 3
trains a softmax classifier over unseen classes purely from latents sampled
out of each unseen class's text posterior. Stage 4 trains a seen-class
softmax classifier on skeleton latent means plus a two-feature logistic
gate (top-1 seen probability, prediction entropy) that routes each test
sample to the seen or unseen classifier.

Split hygiene is enforced, not assumed: training touches only train-seen
records, and no unseen class id can enter a training batch.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import minimize

from . import crossvae, frequency, losses, numkit, semantics
from .numkit import Array

PARTITIONS = ("train-seen", "test-seen", "test-unseen")


# ---- records, datasets, splits ----


class FeatureFormatError(ValueError):
    """Raised when a feature or split file violates its schema."""


@dataclass(frozen=True)
class FeatureRecord:
    """One sample: either a feature vector or a raw motion sequence."""

    sample_id: str
    class_id: int
    partition: str
    vector: Array | None = None
    sequence: Array | None = None

    def __post_init__(self) -> None:
        if self.partition not in PARTITIONS:
            raise FeatureFormatError(
                f"sample {self.sample_id!r}: unknown partition {self.partition!r}")
        if (self.vector is None) == (self.sequence is None):
            raise FeatureFormatError(
                f"sample {self.sample_id!r}: need exactly one of vector/sequence")
        payload = self.vector if self.vector is not None else self.sequence
        arr = np.asarray(payload, dtype=np.float64)
        if self.vector is not None and arr.ndim != 1:
            raise FeatureFormatError(f"sample {self.sample_id!r}: vector must be 1-D")
        if self.sequence is not None and arr.ndim != 3:
            raise FeatureFormatError(
                f"sample {self.sample_id!r}: sequence must be joints x coords x frames")
        if not np.all(np.isfinite(arr)):
            raise FeatureFormatError(f"sample {self.sample_id!r}: non-finite entries")

    @property
    def kind(self) -> str:
        return "vector" if self.vector is not None else "sequence"

    @property
    def payload(self) -> Array:
        return self.vector if self.vector is not None else self.sequence


@dataclass
class FeatureDataset:
    """Homogeneous list of records (all vectors or all sequences, one shape)."""

    records: list[FeatureRecord]

    def __post_init__(self) -> None:
        if not self.records:
            raise FeatureFormatError("dataset holds no records")
        kinds = {r.kind for r in self.records}
        if len(kinds) != 1:
            raise FeatureFormatError("dataset mixes vector and sequence records")
        shapes = {np.shape(r.payload) for r in self.records}
        if len(shapes) != 1:
            raise FeatureFormatError(f"records disagree on shape: {sorted(shapes)}")
        ids = [r.sample_id for r in self.records]
        if len(set(ids)) != len(ids):
            raise FeatureFormatError("duplicate sample ids")

    @property
    def kind(self) -> str:
        return self.records[0].kind

    @property
    def payload_shape(self) -> tuple[int, ...]:
        return np.shape(self.records[0].payload)

    def by_partition(self, name: str) -> list[FeatureRecord]:
        if name not in PARTITIONS:
            raise ValueError(f"unknown partition {name!r}")
        return [r for r in self.records if r.partition == name]

    def class_ids(self) -> tuple[int, ...]:
        return tuple(sorted({r.class_id for r in self.records}))


@dataclass(frozen=True)
class SplitSpec:
    """Disjoint seen/unseen class id sets."""

    seen: tuple[int, ...]
    unseen: tuple[int, ...]

    def __post_init__(self) -> None:
        seen, unseen = set(self.seen), set(self.unseen)
        if len(seen) != len(self.seen) or len(unseen) != len(self.unseen):
            raise ValueError("duplicate class ids inside a split group")
        if seen & unseen:
            raise ValueError(f"classes in both groups: {sorted(seen & unseen)}")
        if not seen or not unseen:
            raise ValueError("both split groups must be non-empty")


def validate_split(dataset: FeatureDataset, split: SplitSpec) -> None:
    """Enforce split hygiene over a dataset's partitions."""
    seen, unseen = set(split.seen), set(split.unseen)
    for rec in dataset.records:
        if rec.partition in ("train-seen", "test-seen") and rec.class_id not in seen:
            raise ValueError(
                f"sample {rec.sample_id!r}: class {rec.class_id} in {rec.partition} "
                "is not a seen class")
        if rec.partition == "test-unseen" and rec.class_id not in unseen:
            raise ValueError(
                f"sample {rec.sample_id!r}: class {rec.class_id} in test-unseen "
                "is not an unseen class")
    uncovered = set(dataset.class_ids()) - seen - unseen
    if uncovered:
        raise ValueError(f"dataset classes missing from the split: {sorted(uncovered)}")


# ---- file formats ----


def write_feature_file(path, dataset: FeatureDataset) -> int:
    """Line-delimited records: sample_id, class_id, partition, vector|sequence."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in dataset.records:
            obj = {"sample_id": rec.sample_id, "class_id": int(rec.class_id),
                   "partition": rec.partition}
            if rec.vector is not None:
                obj["vector"] = [float(v) for v in rec.vector]
            else:
                obj["sequence"] = np.asarray(rec.sequence, dtype=np.float64).tolist()
            fh.write(json.dumps(obj, sort_keys=True) + "\n")
    return len(dataset.records)


def load_feature_file(path) -> FeatureDataset:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FeatureFormatError(f"line {lineno}: not valid JSON ({exc.msg})") from exc
            if not isinstance(obj, dict):
                raise FeatureFormatError(f"line {lineno}: record must be an object")
            try:
                sid = obj["sample_id"]
                cid = obj["class_id"]
                part = obj["partition"]
            except KeyError as exc:
                raise FeatureFormatError(f"line {lineno}: missing field {exc}") from exc
            if not isinstance(sid, str) or isinstance(cid, bool) or not isinstance(cid, int):
                raise FeatureFormatError(f"line {lineno}: bad sample_id/class_id types")
            vector = obj.get("vector")
            sequence = obj.get("sequence")
            try:
                records.append(FeatureRecord(
                    sid, cid, part,
                    None if vector is None else np.asarray(vector, dtype=np.float64),
                    None if sequence is None else np.asarray(sequence, dtype=np.float64)))
            except (ValueError, TypeError) as exc:
                raise FeatureFormatError(f"line {lineno}: {exc}") from exc
    return FeatureDataset(records)


def write_split_file(path, split: SplitSpec, config_hash: str | None = None) -> None:
    obj = {"seen": sorted(int(c) for c in split.seen),
           "unseen": sorted(int(c) for c in split.unseen)}
    if config_hash is not None:
        obj["config_hash"] = config_hash
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_split_file(path) -> SplitSpec:
    with open(path, encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FeatureFormatError(f"split file: not valid JSON ({exc.msg})") from exc
    if not isinstance(obj, dict) or "seen" not in obj or "unseen" not in obj:
        raise FeatureFormatError("split file must be an object with seen/unseen arrays")
    for key in ("seen", "unseen"):
        if (not isinstance(obj[key], list)
                or any(isinstance(c, bool) or not isinstance(c, int) for c in obj[key])):
            raise FeatureFormatError(f"split file: {key} must be an integer array")
    return SplitSpec(tuple(obj["seen"]), tuple(obj["unseen"]))


# ---- skeleton featurizer ----


@dataclass(frozen=True)
class SkeletonFeaturizer:
    """Turns records into the flat feature block the skeleton encoder consumes.

    Sequences are band-enhanced over the temporal axis and flattened.
    Vector records pass through unchanged unless enhance_vectors is set, in
    which case the same band logic runs over the feature axis.
    """

    enhancement: frequency.EnhancementConfig | None = None
    enhance_vectors: bool = False

    def _stack(self, records: Sequence[FeatureRecord]) -> Array:
        return np.stack([np.asarray(r.payload, dtype=np.float64) for r in records])

    def feature_dim(self, dataset_or_records) -> int:
        recs = getattr(dataset_or_records, "records", dataset_or_records)
        return int(np.prod(np.shape(recs[0].payload)))

    def features_with_cache(self, records: Sequence[FeatureRecord]):
        """(N, d) feature block plus the enhancement cache (None if untouched)."""
        block = self._stack(records)
        is_seq = block.ndim == 4
        cache = None
        if self.enhancement is not None and (is_seq or self.enhance_vectors):
            block, cache = frequency.enhance_sequence_with_cache(block, self.enhancement)
        return block.reshape(block.shape[0], -1), cache

    def features(self, records: Sequence[FeatureRecord]) -> Array:
        return self.features_with_cache(records)[0]

    def with_weights(self, weights) -> "SkeletonFeaturizer":
        if self.enhancement is None:
            raise ValueError("featurizer has no enhancement to reweight")
        return replace(self, enhancement=self.enhancement.with_weights(weights))


# ---- softmax classifiers ----


@dataclass
class SoftmaxClassifier:
    """Linear softmax head; class_ids maps row indices back to class labels."""

    class_ids: tuple[int, ...]
    weights: Array
    bias: Array

    def predict_proba(self, latents: Array) -> Array:
        z = np.asarray(latents, dtype=np.float64) @ self.weights.T + self.bias
        z -= z.max(axis=-1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=-1, keepdims=True)

    def predict(self, latents: Array) -> Array:
        idx = np.argmax(self.predict_proba(np.atleast_2d(latents)), axis=-1)
        return np.asarray(self.class_ids)[idx]


def train_softmax_classifier(latents: Array, labels: Array,
                             class_ids: Sequence[int], *, epochs: int,
                             lr: float) -> SoftmaxClassifier:
    """Full-batch Adam on mean cross-entropy from a zero init (convex problem)."""
    class_ids = tuple(int(c) for c in class_ids)
    if len(class_ids) == 1:
        warnings.warn("classifier over a single class predicts it constantly")
    x = np.asarray(latents, dtype=np.float64)
    index = {c: i for i, c in enumerate(class_ids)}
    try:
        y = np.asarray([index[int(l)] for l in labels])
    except KeyError as exc:
        raise ValueError(f"label {exc} missing from class_ids") from exc
    n, d = x.shape
    k = len(class_ids)
    onehot = np.zeros((n, k))
    onehot[np.arange(n), y] = 1.0
    clf = SoftmaxClassifier(class_ids, np.zeros((k, d)), np.zeros(k))
    opt = numkit.AdamState(lr=lr)
    for _ in range(epochs):
        p = clf.predict_proba(x)
        diff = (p - onehot) / n
        numkit.adam_step(opt, [clf.weights, clf.bias], [diff.T @ x, diff.sum(axis=0)])
    return clf


# ---- gate ----


@dataclass
class GateModel:
    """Binary logistic head over (top-1 seen probability, prediction entropy)."""

    weights: Array
    bias: float
    c: float

    def predict_proba_seen(self, feats: Array) -> Array:
        z = np.asarray(feats, dtype=np.float64) @ self.weights + self.bias
        out = np.empty_like(z)
        pos = z >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
        e = np.exp(z[~pos])
        out[~pos] = e / (1.0 + e)
        return out


def gate_features(seen_clf: SoftmaxClassifier, latents: Array) -> Array:
    """(N, 2) block: max seen-class probability and prediction entropy."""
    p = seen_clf.predict_proba(np.atleast_2d(latents))
    top1 = p.max(axis=-1)
    ent = -np.sum(np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0), axis=-1)
    return np.stack([top1, ent], axis=-1)


def train_gate(seen_clf: SoftmaxClassifier, unseen_latents: Array,
               heldout_seen_latents: Array, c: float = 1.0) -> GateModel:
    """L2-regularized logistic regression (quasi-Newton), seen side positive.

    Objective 0.5 ||w||^2 + c * sum softplus(-y z) with the intercept
    unregularized; c plays the usual inverse-regularization role.
    """
    f_pos = gate_features(seen_clf, heldout_seen_latents)
    f_neg = gate_features(seen_clf, unseen_latents)
    x = np.concatenate([f_pos, f_neg])
    y = np.concatenate([np.ones(len(f_pos)), -np.ones(len(f_neg))])

    def objective(theta):
        w, b = theta[:-1], theta[-1]
        m = -y * (x @ w + b)
        soft = np.where(m > 0, m + np.log1p(np.exp(-m)), np.log1p(np.exp(np.minimum(m, 0))))
        sig = np.where(m > 0, 1.0 / (1.0 + np.exp(-m)),
                       np.exp(np.minimum(m, 0)) / (1.0 + np.exp(np.minimum(m, 0))))
        dz = -y * sig * c
        grad = np.append(w + x.T @ dz, dz.sum())
        return 0.5 * float(w @ w) + c * float(soft.sum()), grad

    res = minimize(objective, np.zeros(x.shape[1] + 1), jac=True, method="L-BFGS-B")
    return GateModel(res.x[:-1].copy(), float(res.x[-1]), c)


# ---- stage 2: joint VAE + band-weight training ----


def encode_latent_means(params: crossvae.VaeParams, featurizer: SkeletonFeaturizer,
                        records: Sequence[FeatureRecord]) -> Array:
    """Posterior means of the skeleton encoder for a record list."""
    if not records:
        raise ValueError("no records to encode")
    return encode_feature_means(params, featurizer.features(records))


def encode_feature_means(params: crossvae.VaeParams, feats: Array) -> Array:
    return np.asarray(crossvae.encode(params, "skeleton", feats).mu)


def run_stage2(dataset: FeatureDataset, table: semantics.SemanticTable,
               split: SplitSpec, featurizer: SkeletonFeaturizer,
               cfg: losses.LossConfig, *, epochs: int, lr: float,
               batch_size: int, latent_dim: int, rng: np.random.Generator,
               hidden: tuple[int, ...] = (128, 128),
               align_loss: str = "calibrated", train_weights: bool = True):
    """Jointly train the twin VAEs and (if enhancing) the band weights.

    Returns (params, featurizer, loss_log): the featurizer carries the final
    trained weights, and loss_log has one row of batch-mean scalars per
    epoch. epochs=0 returns the freshly initialized parameters untouched.
    """
    validate_split(dataset, split)
    records = dataset.by_partition("train-seen")
    if not records:
        raise ValueError("training partition is empty")
    labels_all = np.asarray([r.class_id for r in records])
    if not set(labels_all.tolist()) <= set(split.seen):
        raise ValueError("training batch would contain unseen class ids")

    fused = semantics.fuse_all(table)
    missing = [c for c in sorted(set(labels_all.tolist())) if c not in fused]
    if missing:
        raise KeyError(f"no semantic embeddings for seen classes {missing}")
    text_dim = len(next(iter(fused.values())))
    skel_dim = featurizer.feature_dim(records)

    params = crossvae.init_vae_params(skel_dim, text_dim, latent_dim, rng, hidden)
    trainable = params.param_arrays()
    raw = None
    if featurizer.enhancement is not None and train_weights:
        raw = frequency.raw_from_weights(np.asarray(featurizer.enhancement.weights))
        trainable = trainable + [raw]
    opt = numkit.AdamState(lr=lr)

    n = len(records)
    loss_log: list[dict] = []
    for epoch in range(epochs):
        order = rng.permutation(n)
        sums: dict[str, float] = {}
        batches = 0
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            labels = labels_all[idx]
            if len(set(labels.tolist())) < 2:
                continue  # alignment needs a valid negative per item
            batch_records = [records[i] for i in idx]
            if raw is not None:
                featurizer = featurizer.with_weights(frequency.weights_from_raw(raw))
            f_s, cache = featurizer.features_with_cache(batch_records)
            f_t = np.stack([fused[c] for c in labels])
            negatives = losses.sample_negatives(labels, rng)
            eps_s = rng.standard_normal((len(idx), latent_dim))
            eps_t = rng.standard_normal((len(idx), latent_dim))
            breakdown, grads, d_f_s, _ = crossvae.stage2_loss(
                params, f_s, f_t, labels, negatives, eps_s, eps_t, cfg, align_loss)
            if raw is not None:
                w = frequency.weights_from_raw(raw)
                d_w = frequency.enhance_weight_grads(
                    cache, d_f_s.reshape((len(idx),) + np.shape(batch_records[0].payload)))
                grads = grads + [d_w * w * (1.0 - w)]
            numkit.adam_step(opt, trainable, grads)
            for key, val in breakdown.items():
                sums[key] = sums.get(key, 0.0) + val
            batches += 1
        row = {"epoch": epoch}
        row.update({k: v / max(batches, 1) for k, v in sums.items()})
        loss_log.append(row)
    if raw is not None:
        featurizer = featurizer.with_weights(frequency.weights_from_raw(raw))
    return params, featurizer, loss_log


# ---- stage 3: unseen classifier from sampled text latents ----


def synthesize_unseen_classifier(params: crossvae.VaeParams,
                                 table: semantics.SemanticTable,
                                 unseen_ids: Sequence[int], *,
                                 n_samples: int = 500, epochs: int = 300,
                                 lr: float = 1e-3,
                                 rng: np.random.Generator) -> SoftmaxClassifier:
    """Train the unseen-class softmax head on latents drawn per class posterior."""
    unseen_ids = tuple(int(c) for c in unseen_ids)
    if not unseen_ids:
        raise ValueError("no unseen classes given")
    if n_samples < 1:
        raise ValueError("need at least one latent sample per class")
    xs, ys = [], []
    for cid in unseen_ids:
        fused = semantics.fuse(table, cid).vector
        xs.append(crossvae.sample_class_latents(params, fused, n_samples, rng))
        ys.extend([cid] * n_samples)
    return train_softmax_classifier(np.concatenate(xs), np.asarray(ys), unseen_ids,
                                    epochs=epochs, lr=lr)


# ---- stage 4: seen classifier and gate ----


def train_seen_classifier(params: crossvae.VaeParams, featurizer: SkeletonFeaturizer,
                          records: Sequence[FeatureRecord],
                          class_ids: Sequence[int], *, epochs: int = 300,
                          lr: float = 1e-3) -> SoftmaxClassifier:
    """Softmax head over skeleton latent means of seen-class training records."""
    if not records:
        raise ValueError("no training records")
    latents = encode_latent_means(params, featurizer, records)
    labels = np.asarray([r.class_id for r in records])
    return train_softmax_classifier(latents, labels, tuple(int(c) for c in class_ids),
                                    epochs=epochs, lr=lr)


# ---- evaluation ----


@dataclass
class EvalReport:
    """Accuracies for one evaluation run; harmonic ties seen and unseen."""

    seen_accuracy: float | None
    unseen_accuracy: float | None
    harmonic: float | None
    zsl_accuracy: float | None
    per_class: dict[int, float]


def harmonic_mean(s: float, u: float) -> float:
    """2su/(s+u) with the s+u=0 case pinned to 0. Scale-covariant, so
    fractions and percentages both work."""
    if s < 0 or u < 0:
        raise ValueError("accuracies must be non-negative")
    if s + u == 0:
        return 0.0
    return 2.0 * s * u / (s + u)


def evaluate_zsl(params: crossvae.VaeParams, featurizer: SkeletonFeaturizer,
                 classifier, records: Sequence[FeatureRecord]) -> float:
    """Accuracy of the unseen classifier over test-unseen records."""
    if not records:
        raise ValueError("empty test set")
    latents = encode_latent_means(params, featurizer, records)
    pred = classifier.predict(latents)
    truth = np.asarray([r.class_id for r in records])
    return float(np.mean(pred == truth))


def evaluate_gzsl(params: crossvae.VaeParams, featurizer: SkeletonFeaturizer,
                  gate: GateModel, seen_clf: SoftmaxClassifier,
                  unseen_clf: SoftmaxClassifier,
                  test_seen: Sequence[FeatureRecord],
                  test_unseen: Sequence[FeatureRecord]) -> EvalReport:
    """Gate-routed evaluation over both test partitions."""
    if not test_seen or not test_unseen:
        raise ValueError("both test partitions must be non-empty")
    correct: dict[int, int] = {}
    totals: dict[int, int] = {}
    group_acc = []
    for group_records, group_clf_side in ((test_seen, "seen"), (test_unseen, "unseen")):
        latents = encode_latent_means(params, featurizer, group_records)
        p_seen = gate.predict_proba_seen(gate_features(seen_clf, latents))
        route_seen = p_seen >= 0.5
        pred = np.where(route_seen, seen_clf.predict(latents), unseen_clf.predict(latents))
        truth = np.asarray([r.class_id for r in group_records])
        hits = pred == truth
        group_acc.append(float(np.mean(hits)))
        for cid, hit in zip(truth.tolist(), hits.tolist()):
            totals[cid] = totals.get(cid, 0) + 1
            correct[cid] = correct.get(cid, 0) + int(hit)
    per_class = {cid: correct[cid] / totals[cid] for cid in sorted(totals)}
    s, u = group_acc
    return EvalReport(s, u, harmonic_mean(s, u), None, per_class)


# ---- artifact writers ----


def write_report(path, report: EvalReport, config_hash: str, mode: str) -> None:
    obj = {
        "mode": mode,
        "config_hash": config_hash,
        "seen_accuracy": report.seen_accuracy,
        "unseen_accuracy": report.unseen_accuracy,
        "harmonic": report.harmonic,
        "zsl_accuracy": report.zsl_accuracy,
        "per_class": {str(k): v for k, v in sorted(report.per_class.items())},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True, indent=1)
        fh.write("\n")


def export_latents(params: crossvae.VaeParams, featurizer: SkeletonFeaturizer,
                   records: Iterable[FeatureRecord], path) -> int:
    """CSV of skeleton latent means (full float precision); returns row count.

    An empty record list still writes the header line.
    """
    records = list(records)
    ld = params.latent_dim
    header = "sample_id,class_id," + ",".join(f"z{i}" for i in range(ld))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        if not records:
            return 0
        latents = encode_latent_means(params, featurizer, records)
        for rec, z in zip(records, latents):
            vals = ",".join(repr(float(v)) for v in z)
            fh.write(f"{rec.sample_id},{rec.class_id},{vals}\n")
    return len(records)
