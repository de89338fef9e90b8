"""Per-domain feature matrices, labels, manifests, and train/validation splits.

File formats (all little-endian):

* feature file: magic ``FZF1``, u32 n_rows, u32 n_cols, then n_rows*n_cols
  f32 values in row-major order;
* label file: magic ``FZL1``, u32 n, then n u32 labels;
* manifest: UTF-8 JSON document, see ``ZooManifest``. Paths inside the
  manifest are relative to the manifest file's directory.

Validation splits are a pure function of (dataset_name, domain_id, seed), so
every encoder of a dataset sees the same rows of a domain in the same split,
and reruns reproduce the split bit-for-bit on any platform.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ValidationError

FEATURE_MAGIC = b"FZF1"
LABEL_MAGIC = b"FZL1"


@dataclass(frozen=True)
class FeatureSet:
    """Encoder outputs for one domain, with labels and a frozen split.

    ``split_mask`` is True on validation rows. ``features`` keeps the on-disk
    float32 payload; the ``train_*`` / ``val_*`` accessors hand out float64
    copies for numerical work.
    """

    domain_id: str
    features: np.ndarray
    labels: np.ndarray
    split_mask: np.ndarray

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def train_features(self) -> np.ndarray:
        return self.features[~self.split_mask].astype(np.float64)

    @property
    def val_features(self) -> np.ndarray:
        return self.features[self.split_mask].astype(np.float64)

    @property
    def train_labels(self) -> np.ndarray:
        return self.labels[~self.split_mask]

    @property
    def val_labels(self) -> np.ndarray:
        return self.labels[self.split_mask]


@dataclass(frozen=True)
class DomainInfo:
    domain_id: str
    n_samples: int
    label_file: str


@dataclass(frozen=True)
class EncoderInfo:
    encoder_id: str
    dim: int
    files: dict[str, str]  # domain_id -> feature file path, manifest-relative


@dataclass(frozen=True)
class ZooManifest:
    """Dataset bookkeeping: domains, encoders, and where their files live."""

    dataset_name: str
    n_classes: int
    split_ratio: float
    domains: tuple[DomainInfo, ...]
    encoders: tuple[EncoderInfo, ...]
    root: Path = field(default_factory=Path)

    def domain(self, domain_id: str) -> DomainInfo:
        for d in self.domains:
            if d.domain_id == domain_id:
                return d
        raise ValidationError(f"unknown domain id '{domain_id}'")

    def encoder(self, encoder_id: str) -> EncoderInfo:
        for e in self.encoders:
            if e.encoder_id == encoder_id:
                return e
        raise ValidationError(f"unknown encoder id '{encoder_id}'")

    @property
    def domain_ids(self) -> list[str]:
        return [d.domain_id for d in self.domains]

    @property
    def encoder_ids(self) -> list[str]:
        return [e.encoder_id for e in self.encoders]

    def feature_path(self, encoder_id: str, domain_id: str) -> Path:
        enc = self.encoder(encoder_id)
        if domain_id not in enc.files:
            raise ValidationError(
                f"encoder '{encoder_id}' has no feature file for domain '{domain_id}'"
            )
        return self.root / enc.files[domain_id]

    def label_path(self, domain_id: str) -> Path:
        return self.root / self.domain(domain_id).label_file


def write_features(path: Path | str, matrix: np.ndarray) -> None:
    """Write a 2-D array as an FZF1 file (values stored as little-endian f32)."""
    arr = np.ascontiguousarray(matrix, dtype="<f4")
    if arr.ndim != 2:
        raise ValidationError(f"feature matrix must be 2-D, got shape {arr.shape}")
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(struct.pack("<II", arr.shape[0], arr.shape[1]))
        fh.write(arr.tobytes(order="C"))


def read_feature_header(path: Path | str) -> tuple[int, int]:
    """Read (n_rows, n_cols) from an FZF1 header without loading the payload."""
    with open(path, "rb") as fh:
        head = fh.read(12)
    if len(head) < 12 or head[:4] != FEATURE_MAGIC:
        raise ValidationError(f"malformed feature file header: {path}")
    return struct.unpack("<II", head[4:12])


def read_features(path: Path | str) -> np.ndarray:
    """Load an FZF1 file into a float32 matrix, rejecting NaN/Inf payloads."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 12 or data[:4] != FEATURE_MAGIC:
        raise ValidationError(f"malformed feature file header: {path}")
    n, d = struct.unpack("<II", data[4:12])
    expected = 12 + 4 * n * d
    if len(data) != expected:
        raise ValidationError(
            f"feature file {path}: expected {expected} bytes for {n}x{d}, got {len(data)}"
        )
    arr = np.frombuffer(data, dtype="<f4", offset=12).reshape(n, d)
    if not np.isfinite(arr).all():
        raise ValidationError(f"feature file {path}: non-finite payload")
    return arr.copy()


def write_labels(path: Path | str, labels: np.ndarray) -> None:
    arr = np.ascontiguousarray(labels, dtype="<u4")
    if arr.ndim != 1:
        raise ValidationError(f"label vector must be 1-D, got shape {arr.shape}")
    with open(path, "wb") as fh:
        fh.write(LABEL_MAGIC)
        fh.write(struct.pack("<I", arr.shape[0]))
        fh.write(arr.tobytes(order="C"))


def read_labels(path: Path | str) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 8 or data[:4] != LABEL_MAGIC:
        raise ValidationError(f"malformed label file header: {path}")
    (n,) = struct.unpack("<I", data[4:8])
    if len(data) != 8 + 4 * n:
        raise ValidationError(f"label file {path}: truncated payload")
    return np.frombuffer(data, dtype="<u4", offset=8).astype(np.int64)


def split_mask(dataset_name: str, domain_id: str, n: int, ratio: float, seed: int) -> np.ndarray:
    """Deterministic validation mask: last floor(ratio*n) of a keyed permutation.

    The permutation is seeded from a SHA-256 digest of
    ``dataset_name|domain_id|seed``, so the split is shared by every encoder
    of the dataset and is stable across runs and platforms.
    """
    if not 0.0 < ratio < 1.0:
        raise ValidationError(f"split ratio must be in (0,1), got {ratio}")
    n_val = int(ratio * n + 1e-9)
    digest = hashlib.sha256(f"{dataset_name}|{domain_id}|{seed}".encode()).digest()
    words = struct.unpack("<8I", digest)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(words)))
    perm = rng.permutation(n)
    mask = np.zeros(n, dtype=bool)
    if n_val:
        mask[perm[n - n_val:]] = True
    return mask


def build_feature_set(
    domain_id: str,
    features: np.ndarray,
    labels: np.ndarray,
    *,
    dataset_name: str,
    n_classes: int,
    split_ratio: float,
    seed: int,
) -> FeatureSet:
    """Assemble and validate a FeatureSet from in-memory arrays."""
    features = np.ascontiguousarray(features, dtype=np.float32)
    labels = np.asarray(labels, dtype=np.int64)
    if features.ndim != 2:
        raise ValidationError("features must be a 2-D matrix")
    if not np.isfinite(features).all():
        raise ValidationError(f"domain '{domain_id}': non-finite feature values")
    if labels.shape != (features.shape[0],):
        raise ValidationError(
            f"domain '{domain_id}': {labels.shape[0]} labels for {features.shape[0]} rows"
        )
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        bad = int(labels.min()) if labels.min() < 0 else int(labels.max())
        raise ValidationError(f"domain '{domain_id}': label out of range ({bad})")
    mask = split_mask(dataset_name, domain_id, features.shape[0], split_ratio, seed)
    return FeatureSet(domain_id=domain_id, features=features, labels=labels, split_mask=mask)


def load_feature_set(
    features_path: Path | str,
    labels_path: Path | str,
    domain_id: str,
    manifest: ZooManifest,
    seed: int = 0,
    expected_dim: int | None = None,
) -> FeatureSet:
    """Load and validate one (encoder, domain) feature file plus its labels."""
    features = read_features(features_path)
    labels = read_labels(labels_path)
    info = manifest.domain(domain_id)
    if features.shape[0] != info.n_samples:
        raise ValidationError(
            f"domain '{domain_id}': manifest declares {info.n_samples} samples, "
            f"file has {features.shape[0]}"
        )
    if expected_dim is not None and features.shape[1] != expected_dim:
        raise ValidationError(
            f"domain '{domain_id}': dim mismatch, manifest {expected_dim} vs file "
            f"{features.shape[1]}"
        )
    return build_feature_set(
        domain_id,
        features,
        labels,
        dataset_name=manifest.dataset_name,
        n_classes=manifest.n_classes,
        split_ratio=manifest.split_ratio,
        seed=seed,
    )


def save_feature_set(fs: FeatureSet, features_path: Path | str, labels_path: Path | str) -> None:
    """Persist a FeatureSet; ``load_feature_set`` restores it bit-exactly."""
    if not np.isfinite(fs.features).all():
        raise ValidationError(f"domain '{fs.domain_id}': non-finite feature values")
    write_features(features_path, fs.features)
    write_labels(labels_path, fs.labels)


def load_domain_features(
    manifest: ZooManifest, encoder_id: str, domain_id: str, seed: int = 0
) -> FeatureSet:
    """Manifest-level loader resolving file paths for (encoder, domain)."""
    enc = manifest.encoder(encoder_id)
    return load_feature_set(
        manifest.feature_path(encoder_id, domain_id),
        manifest.label_path(domain_id),
        domain_id,
        manifest,
        seed=seed,
        expected_dim=enc.dim,
    )


def load_manifest(path: Path | str, validate: bool = True) -> ZooManifest:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read manifest {path}: {exc}") from exc
    try:
        manifest = ZooManifest(
            dataset_name=str(doc["dataset_name"]),
            n_classes=int(doc["n_classes"]),
            split_ratio=float(doc.get("split_ratio", 0.2)),
            domains=tuple(
                DomainInfo(str(d["id"]), int(d["n_samples"]), str(d["label_file"]))
                for d in doc["domains"]
            ),
            encoders=tuple(
                EncoderInfo(str(e["id"]), int(e["dim"]), dict(e["files"]))
                for e in doc["encoders"]
            ),
            root=path.parent,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"manifest {path} is missing or has malformed fields: {exc}") from exc
    if validate:
        validate_manifest(manifest)
    return manifest


def validate_manifest(manifest: ZooManifest) -> None:
    """Check id uniqueness and that every referenced file exists with matching dims."""
    if manifest.n_classes < 1:
        raise ValidationError("manifest n_classes must be >= 1")
    if not 0.0 < manifest.split_ratio < 1.0:
        raise ValidationError(f"manifest split_ratio must be in (0,1), got {manifest.split_ratio}")
    domain_ids = manifest.domain_ids
    if len(set(domain_ids)) != len(domain_ids):
        raise ValidationError("duplicate domain ids in manifest")
    encoder_ids = manifest.encoder_ids
    if len(set(encoder_ids)) != len(encoder_ids):
        raise ValidationError("duplicate encoder ids in manifest")
    for dom in manifest.domains:
        lp = manifest.label_path(dom.domain_id)
        if not lp.is_file():
            raise ValidationError(f"label file missing: {lp}")
    for enc in manifest.encoders:
        for dom in manifest.domains:
            fp = manifest.feature_path(enc.encoder_id, dom.domain_id)
            if not fp.is_file():
                raise ValidationError(f"feature file missing: {fp}")
            n, d = read_feature_header(fp)
            if n != dom.n_samples or d != enc.dim:
                raise ValidationError(
                    f"{fp}: header {n}x{d} does not match manifest "
                    f"({dom.n_samples}x{enc.dim})"
                )


def save_manifest(manifest: ZooManifest, path: Path | str) -> None:
    doc = {
        "dataset_name": manifest.dataset_name,
        "n_classes": manifest.n_classes,
        "split_ratio": manifest.split_ratio,
        "domains": [
            {"id": d.domain_id, "n_samples": d.n_samples, "label_file": d.label_file}
            for d in manifest.domains
        ],
        "encoders": [
            {"id": e.encoder_id, "dim": e.dim, "files": dict(sorted(e.files.items()))}
            for e in manifest.encoders
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
