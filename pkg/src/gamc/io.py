"""On-disk formats and deterministic train/test splitting.

Frame files ("GAMC"): little-endian header (magic, u16 version, u64 frame
count, u32 frame length) followed by packed records of
{u16 label id, f32 snr_db, 1024 x (f32 I, f32 Q)}.

Model files ("GAMCMODL"): little-endian header (magic, u32 version), a
length-prefixed JSON metadata document (config, class list, group map,
selected feature indices, layout hash, per-ensemble structure), then named
binary arrays (dictionaries as float64 atom matrices, tree node tables as
int32 / float64 columns). Files are self-describing: inference needs no
external configuration. Unknown versions are a hard error, never a
best-effort parse.
"""

from __future__ import annotations

import json
import struct
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import CorruptFile, FormatError, InvalidConfig
from .gbt import GradientBoostedClassifier, RegressionTree
from .hier import GROUP_MAP, HierarchicalClassifier
from .siggen import FRAME_LEN, MOD_CLASSES, FrameSet
from .sparse import Dictionary, DictionarySet, PyramidConfig

#: group name per class, for JSON metadata
GROUP_MAP_NAME = {m: GROUP_MAP[m].name for m in MOD_CLASSES}

FRAME_MAGIC = b"GAMC"
FRAME_VERSION = 1
_FRAME_HEADER = struct.Struct("<4sHQI")

_RECORD_DTYPE = np.dtype(
    [("label", "<u2"), ("snr", "<f4"), ("iq", "<f4", (FRAME_LEN, 2))]
)

MODEL_MAGIC = b"GAMCMODL"
MODEL_VERSION = 1
_MODEL_HEADER = struct.Struct("<8sI")

_ARRAY_CODES = {0: np.dtype("<f8"), 1: np.dtype("<i4"), 2: np.dtype("<i8")}


# ---------------------------------------------------------------------------
# frame files
# ---------------------------------------------------------------------------

def write_frames(path, frames: FrameSet) -> None:
    n = len(frames)
    labels = np.asarray(frames.labels, dtype=np.uint16)
    if n and int(labels.max()) >= len(MOD_CLASSES):
        raise InvalidConfig("labels must be class ids in 0..23")
    rec = np.empty(n, dtype=_RECORD_DTYPE)
    rec["label"] = labels
    rec["snr"] = np.asarray(frames.snr_db, dtype=np.float32)
    rec["iq"][:, :, 0] = frames.samples.real.astype(np.float32)
    rec["iq"][:, :, 1] = frames.samples.imag.astype(np.float32)
    with open(path, "wb") as fh:
        fh.write(_FRAME_HEADER.pack(FRAME_MAGIC, FRAME_VERSION, n, FRAME_LEN))
        fh.write(rec.tobytes())


class FrameWriter:
    """Streaming frame-file writer; the header count is fixed up on close,
    so cells can be appended without materializing the whole dataset."""

    def __init__(self, path):
        self._fh = open(path, "wb")
        self._count = 0
        self._fh.write(_FRAME_HEADER.pack(FRAME_MAGIC, FRAME_VERSION, 0, FRAME_LEN))

    def append(self, samples: np.ndarray, labels, snr_db) -> None:
        samples = np.asarray(samples)
        n = samples.shape[0]
        labels = np.broadcast_to(np.asarray(labels, dtype=np.uint16), (n,))
        snrs = np.broadcast_to(np.asarray(snr_db, dtype=np.float32), (n,))
        if n and int(labels.max()) >= len(MOD_CLASSES):
            raise InvalidConfig("labels must be class ids in 0..23")
        rec = np.empty(n, dtype=_RECORD_DTYPE)
        rec["label"] = labels
        rec["snr"] = snrs
        rec["iq"][:, :, 0] = samples.real.astype(np.float32)
        rec["iq"][:, :, 1] = samples.imag.astype(np.float32)
        self._fh.write(rec.tobytes())
        self._count += n

    def close(self) -> None:
        self._fh.seek(0)
        self._fh.write(_FRAME_HEADER.pack(FRAME_MAGIC, FRAME_VERSION, self._count, FRAME_LEN))
        self._fh.close()

    def __enter__(self) -> "FrameWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def read_frames(path) -> FrameSet:
    with open(path, "rb") as fh:
        head = fh.read(_FRAME_HEADER.size)
        if len(head) < _FRAME_HEADER.size:
            raise CorruptFile(f"{path}: truncated header")
        magic, version, count, frame_len = _FRAME_HEADER.unpack(head)
        if magic != FRAME_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}")
        if version != FRAME_VERSION:
            raise FormatError(
                f"{path}: unsupported frame file version {version} "
                f"(this build reads version {FRAME_VERSION})"
            )
        if frame_len != FRAME_LEN:
            raise FormatError(f"{path}: frame length {frame_len} != {FRAME_LEN}")
        payload = fh.read()
    expected = count * _RECORD_DTYPE.itemsize
    if len(payload) != expected:
        raise CorruptFile(
            f"{path}: declares {count} frames ({expected} payload bytes) "
            f"but holds {len(payload)}"
        )
    rec = np.frombuffer(payload, dtype=_RECORD_DTYPE)
    if count and int(rec["label"].max()) >= len(MOD_CLASSES):
        raise CorruptFile(f"{path}: label id out of range 0..{len(MOD_CLASSES) - 1}")
    samples = rec["iq"][:, :, 0].astype(np.complex64)
    samples += 1j * rec["iq"][:, :, 1].astype(np.complex64)
    return FrameSet(
        samples=samples,
        labels=rec["label"].astype(np.int16),
        snr_db=rec["snr"].astype(np.float32),
    )


# ---------------------------------------------------------------------------
# train/test splitting
# ---------------------------------------------------------------------------

def split_indices(labels, snr_db, train_fraction: float, seed: int
                  ) -> tuple[np.ndarray, np.ndarray]:
    """Stratified (class, SNR) split; disjoint, exhaustive, deterministic.

    Strata with a single frame go to the training side with a warning.
    """
    if not 0.0 < train_fraction < 1.0:
        raise InvalidConfig(f"train_fraction must lie in (0, 1), got {train_fraction}")
    labels = np.asarray(labels)
    snr_db = np.asarray(snr_db)
    rng = np.random.default_rng(seed)
    train_parts, test_parts = [], []
    keys = sorted({(int(l), float(s)) for l, s in zip(labels, snr_db)})
    for label, snr in keys:
        idx = np.flatnonzero((labels == label) & (snr_db == snr))
        idx = idx[rng.permutation(len(idx))]
        if len(idx) < 2:
            warnings.warn(
                f"stratum (class {label}, snr {snr:g}) has {len(idx)} frame(s); "
                "assigned to train"
            )
            train_parts.append(idx)
            continue
        n_train = min(max(int(len(idx) * train_fraction), 1), len(idx) - 1)
        train_parts.append(idx[:n_train])
        test_parts.append(idx[n_train:])
    train = np.sort(np.concatenate(train_parts)) if train_parts else np.empty(0, np.int64)
    test = np.sort(np.concatenate(test_parts)) if test_parts else np.empty(0, np.int64)
    return train, test


def split_train_test(frames: FrameSet, train_fraction: float, seed: int
                     ) -> tuple[FrameSet, FrameSet]:
    train_idx, test_idx = split_indices(frames.labels, frames.snr_db,
                                        train_fraction, seed)
    return frames.subset(train_idx), frames.subset(test_idx)


# ---------------------------------------------------------------------------
# model files
# ---------------------------------------------------------------------------

@dataclass
class ModelBundle:
    """Everything inference needs: pyramid config + dictionaries, selected
    feature indices, the hierarchical classifier, and the training config."""

    pyramid: PyramidConfig
    dictionaries: DictionarySet
    selected_features: np.ndarray
    model: HierarchicalClassifier
    layout_hash: str
    config: dict = field(default_factory=dict)
    selector_losses: np.ndarray | None = None


def _pyramid_to_dict(cfg: PyramidConfig) -> dict:
    return {
        "global_length": cfg.global_length,
        "residual_levels": [list(t) for t in cfg.residual_levels],
        "sparsity_set_global": list(cfg.sparsity_set_global),
        "sparsity_set_residual": list(cfg.sparsity_set_residual),
        "atom_count": cfg.atom_count,
        "decimation": cfg.decimation,
    }


def _pyramid_from_dict(d: dict) -> PyramidConfig:
    return PyramidConfig(
        global_length=d["global_length"],
        residual_levels=tuple(tuple(t) for t in d["residual_levels"]),
        sparsity_set_global=tuple(d["sparsity_set_global"]),
        sparsity_set_residual=tuple(d["sparsity_set_residual"]),
        atom_count=d["atom_count"],
        decimation=d["decimation"],
    )


def _pack_ensemble(prefix: str, clf: GradientBoostedClassifier, arrays: dict) -> dict:
    trees = [t for row in clf.trees_ for t in row]
    offsets = np.zeros(len(trees) + 1, dtype=np.int64)
    for i, t in enumerate(trees):
        offsets[i + 1] = offsets[i] + t.n_nodes
    arrays[f"{prefix}.offsets"] = offsets
    arrays[f"{prefix}.feature"] = np.concatenate([t.feature for t in trees]).astype(np.int32)
    arrays[f"{prefix}.threshold"] = np.concatenate([t.threshold for t in trees])
    arrays[f"{prefix}.left"] = np.concatenate([t.left for t in trees]).astype(np.int32)
    arrays[f"{prefix}.right"] = np.concatenate([t.right for t in trees]).astype(np.int32)
    arrays[f"{prefix}.value"] = np.concatenate([t.value for t in trees])
    arrays[f"{prefix}.classes"] = clf.classes_.astype(np.int64)
    return {
        "n_rounds": len(clf.trees_),
        "n_classes": len(clf.classes_),
        "n_features_in": clf.n_features_in_,
        "params": {
            "learning_rate": clf.learning_rate,
            "max_depth": clf.max_depth,
            "n_rounds": clf.n_rounds,
            "l2_reg": clf.l2_reg,
            "min_child_weight": clf.min_child_weight,
        },
        "train_losses": [float(v) for v in clf.train_losses_],
    }


def _unpack_ensemble(prefix: str, meta: dict, arrays: dict) -> GradientBoostedClassifier:
    p = meta["params"]
    clf = GradientBoostedClassifier(
        learning_rate=p["learning_rate"],
        max_depth=p["max_depth"],
        n_rounds=p["n_rounds"],
        l2_reg=p["l2_reg"],
        min_child_weight=p["min_child_weight"],
    )
    offsets = arrays[f"{prefix}.offsets"]
    feature = arrays[f"{prefix}.feature"]
    threshold = arrays[f"{prefix}.threshold"]
    left = arrays[f"{prefix}.left"]
    right = arrays[f"{prefix}.right"]
    value = arrays[f"{prefix}.value"]
    trees = []
    for i in range(len(offsets) - 1):
        sl = slice(offsets[i], offsets[i + 1])
        trees.append(RegressionTree(
            feature[sl].copy(), threshold[sl].copy(), left[sl].copy(),
            right[sl].copy(), value[sl].copy(),
        ))
    n_classes = meta["n_classes"]
    clf.trees_ = [trees[i : i + n_classes] for i in range(0, len(trees), n_classes)]
    clf.classes_ = arrays[f"{prefix}.classes"].copy()
    clf.n_features_in_ = meta["n_features_in"]
    clf.train_losses_ = list(meta["train_losses"])
    return clf


def _write_array(fh, name: str, arr: np.ndarray) -> None:
    kind = arr.dtype.str.lstrip("<>|=")
    if kind == "f8":
        code = 0
    elif kind == "i4":
        code = 1
    elif kind == "i8":
        code = 2
    else:
        raise InvalidConfig(f"array {name!r} has unsupported dtype {arr.dtype}")
    data = np.ascontiguousarray(arr).astype(_ARRAY_CODES[code], copy=False)
    name_b = name.encode()
    fh.write(struct.pack("<H", len(name_b)))
    fh.write(name_b)
    fh.write(struct.pack("<BB", code, data.ndim))
    fh.write(struct.pack(f"<{data.ndim}Q", *data.shape))
    fh.write(data.tobytes())


def _read_array(fh) -> tuple[str, np.ndarray]:
    raw = fh.read(2)
    if len(raw) < 2:
        raise CorruptFile("truncated array record")
    (name_len,) = struct.unpack("<H", raw)
    name = fh.read(name_len).decode()
    code, ndim = struct.unpack("<BB", fh.read(2))
    if code not in _ARRAY_CODES:
        raise CorruptFile(f"array {name!r}: unknown dtype code {code}")
    shape = struct.unpack(f"<{ndim}Q", fh.read(8 * ndim))
    dtype = _ARRAY_CODES[code]
    nbytes = int(np.prod(shape)) * dtype.itemsize if ndim else dtype.itemsize
    data = fh.read(nbytes)
    if len(data) != nbytes:
        raise CorruptFile(f"array {name!r}: truncated payload")
    return name, np.frombuffer(data, dtype=dtype).reshape(shape).copy()


def save_model(path, bundle: ModelBundle) -> None:
    arrays: dict[str, np.ndarray] = {}
    arrays["dict.global"] = bundle.dictionaries.global_dict.atoms
    for i, dic in enumerate(bundle.dictionaries.residual_dicts):
        arrays[f"dict.residual{i}"] = dic.atoms
    arrays["selected_features"] = np.asarray(bundle.selected_features, dtype=np.int64)
    if bundle.selector_losses is not None:
        arrays["selector_losses"] = np.asarray(bundle.selector_losses, dtype=np.float64)

    model = bundle.model
    ensembles = {"coarse": model.coarse_}
    refinement_meta = {}
    for slot, ref in model.refinements_.items():
        if isinstance(ref, GradientBoostedClassifier):
            ensembles[slot] = ref
            refinement_meta[slot] = {"kind": "ensemble"}
        elif isinstance(ref, int):
            refinement_meta[slot] = {"kind": "constant", "class_id": ref}
        else:
            refinement_meta[slot] = {"kind": "skipped"}
    ensemble_meta = {name: _pack_ensemble(f"ens.{name}", clf, arrays)
                     for name, clf in ensembles.items()}

    meta = {
        "format_version": MODEL_VERSION,
        "pyramid": _pyramid_to_dict(bundle.pyramid),
        "layout_hash": bundle.layout_hash,
        "config": bundle.config,
        "classes": [m.value for m in MOD_CLASSES],
        "group_map": {m.value: GROUP_MAP_NAME[m] for m in MOD_CLASSES},
        "refinements": refinement_meta,
        "ensembles": ensemble_meta,
        "skipped_groups": model.skipped_groups_,
        "classes_present": [int(c) for c in model.classes_],
        "hier_params": model.get_params(),
        "n_residual_dicts": len(bundle.dictionaries.residual_dicts),
    }
    blob = json.dumps(meta, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_MODEL_HEADER.pack(MODEL_MAGIC, MODEL_VERSION))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<I", len(arrays)))
        for name in sorted(arrays):
            _write_array(fh, name, arrays[name])


def load_model(path) -> ModelBundle:
    with open(path, "rb") as fh:
        head = fh.read(_MODEL_HEADER.size)
        if len(head) < _MODEL_HEADER.size:
            raise CorruptFile(f"{path}: truncated header")
        magic, version = _MODEL_HEADER.unpack(head)
        if magic != MODEL_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}")
        if version != MODEL_VERSION:
            raise FormatError(
                f"{path}: unsupported model version {version} "
                f"(this build reads version {MODEL_VERSION})"
            )
        (json_len,) = struct.unpack("<I", fh.read(4))
        try:
            meta = json.loads(fh.read(json_len).decode())
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CorruptFile(f"{path}: bad metadata block: {exc}") from None
        if meta.get("format_version") != MODEL_VERSION:
            raise FormatError(f"{path}: metadata version mismatch")
        (n_arrays,) = struct.unpack("<I", fh.read(4))
        arrays = {}
        for _ in range(n_arrays):
            name, arr = _read_array(fh)
            arrays[name] = arr

    pyramid = _pyramid_from_dict(meta["pyramid"])
    residual = tuple(
        Dictionary(arrays[f"dict.residual{i}"]) for i in range(meta["n_residual_dicts"])
    )
    dictionaries = DictionarySet(Dictionary(arrays["dict.global"]), residual)

    hp = meta["hier_params"]
    model = HierarchicalClassifier(**hp)
    model.coarse_ = _unpack_ensemble("ens.coarse", meta["ensembles"]["coarse"], arrays)
    model.refinements_ = {}
    for slot, info in meta["refinements"].items():
        if info["kind"] == "ensemble":
            model.refinements_[slot] = _unpack_ensemble(
                f"ens.{slot}", meta["ensembles"][slot], arrays
            )
        elif info["kind"] == "constant":
            model.refinements_[slot] = int(info["class_id"])
        else:
            model.refinements_[slot] = None
    model.skipped_groups_ = list(meta["skipped_groups"])
    model.n_features_in_ = model.coarse_.n_features_in_
    model.classes_ = np.array(meta["classes_present"], dtype=np.int64)

    return ModelBundle(
        pyramid=pyramid,
        dictionaries=dictionaries,
        selected_features=arrays["selected_features"],
        model=model,
        layout_hash=meta["layout_hash"],
        config=meta.get("config", {}),
        selector_losses=arrays.get("selector_losses"),
    )
