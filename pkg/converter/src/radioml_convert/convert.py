"""Streaming conversion of the RadioML 2018.01A release to GAMC frame files.

The release stores X as float32 (N, 1024, 2) I/Q, Y as a one-hot (N, 24)
class matrix, and Z as the per-frame SNR in dB. The GAMC frame format is a
little-endian header (magic "GAMC", u16 version 1, u64 count, u32 frame
length 1024) followed by {u16 label, f32 snr, 1024 x (f32 I, f32 Q)}
records. Conversion is chunked (bounded memory), deterministic (first
frames per (class, SNR) cell win when a limit is set), and lossless:
float32 sample values pass through bit-exactly.

Class naming: the release's names win; they are mapped to the pipeline's
canonical spellings (e.g. "8ASK" -> "ASK8", "16APSK" -> "APSK16"). The
canonical order below defines label ids 0..23 and matches the pipeline's
ModClass ordering.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field

import h5py
import numpy as np

FRAME_LEN = 1024
FRAME_MAGIC = b"GAMC"
FRAME_VERSION = 1
_HEADER = struct.Struct("<4sHQI")
_RECORD_DTYPE = np.dtype([("label", "<u2"), ("snr", "<f4"),
                          ("iq", "<f4", (FRAME_LEN, 2))])

#: canonical class order shared with the pipeline; index = on-disk label id
CANONICAL_CLASSES = (
    "OOK", "ASK4", "ASK8", "BPSK", "QPSK", "OQPSK", "PSK8", "PSK16", "PSK32",
    "APSK16", "APSK32", "APSK64", "APSK128", "QAM16", "QAM32", "QAM64",
    "QAM128", "QAM256", "GMSK", "AM-SSB-WC", "AM-SSB-SC", "AM-DSB-WC",
    "AM-DSB-SC", "FM",
)

#: column order of the release's one-hot Y matrix (its classes.json);
#: override with an explicit classes.json if a variant release differs
RELEASE_CLASS_ORDER = (
    "32PSK", "16APSK", "32QAM", "FM", "GMSK", "32APSK", "OQPSK", "8ASK",
    "BPSK", "8PSK", "AM-SSB-SC", "4ASK", "16PSK", "64APSK", "128QAM",
    "128APSK", "AM-DSB-SC", "AM-SSB-WC", "64QAM", "QPSK", "256QAM",
    "AM-DSB-WC", "OOK", "16QAM",
)

#: release spelling -> canonical spelling
RELEASE_TO_CANONICAL = {
    "OOK": "OOK", "4ASK": "ASK4", "8ASK": "ASK8", "BPSK": "BPSK",
    "QPSK": "QPSK", "OQPSK": "OQPSK", "8PSK": "PSK8", "16PSK": "PSK16",
    "32PSK": "PSK32", "16APSK": "APSK16", "32APSK": "APSK32",
    "64APSK": "APSK64", "128APSK": "APSK128", "16QAM": "QAM16",
    "32QAM": "QAM32", "64QAM": "QAM64", "128QAM": "QAM128", "256QAM": "QAM256",
    "GMSK": "GMSK", "AM-SSB-WC": "AM-SSB-WC", "AM-SSB-SC": "AM-SSB-SC",
    "AM-DSB-WC": "AM-DSB-WC", "AM-DSB-SC": "AM-DSB-SC", "FM": "FM",
}

_CANONICAL_ID = {name: i for i, name in enumerate(CANONICAL_CLASSES)}

MAX_FRAMES_PER_CELL = 4096


class SchemaError(RuntimeError):
    """Source file does not look like the RadioML 2018.01A release."""


class AmbiguousLabel(RuntimeError):
    """A one-hot label row has no unique maximum."""


@dataclass
class ConversionManifest:
    source: str
    destination: str
    class_table: dict[str, int]  # canonical name -> label id
    snr_list: list[float]
    cell_counts: dict[str, int]  # "<class>@<snr>" -> frames written
    total_frames: int
    output_sha256: str
    release_order: list[str] = field(default_factory=list)

    def validate(self) -> None:
        ids = sorted(self.class_table.values())
        if len(self.class_table) != 24 or ids != list(range(24)):
            raise SchemaError("class table must be a bijection over 24 classes")
        over = {k: v for k, v in self.cell_counts.items() if v > MAX_FRAMES_PER_CELL}
        if over:
            raise SchemaError(f"cell counts exceed {MAX_FRAMES_PER_CELL}: {over}")

    def to_text(self) -> str:
        lines = [
            "radioml-convert manifest",
            f"source: {self.source}",
            f"destination: {self.destination}",
            f"total_frames: {self.total_frames}",
            f"output_sha256: {self.output_sha256}",
            f"snr_list: {','.join(f'{s:g}' for s in self.snr_list)}",
            "class_table:",
        ]
        for name, label in sorted(self.class_table.items(), key=lambda kv: kv[1]):
            lines.append(f"  {label:2d} {name}")
        lines.append("cell_counts:")
        for key in sorted(self.cell_counts):
            lines.append(f"  {key}: {self.cell_counts[key]}")
        return "\n".join(lines) + "\n"


def _load_release_order(classes_json) -> tuple[str, ...]:
    if classes_json is None:
        return RELEASE_CLASS_ORDER
    with open(classes_json, encoding="utf-8") as fh:
        names = json.load(fh)
    if not isinstance(names, list) or len(names) != 24:
        raise SchemaError(f"{classes_json}: expected a JSON list of 24 class names")
    return tuple(str(n) for n in names)


def _check_schema(h5: h5py.File) -> tuple[h5py.Dataset, h5py.Dataset, h5py.Dataset]:
    expected = {"X": ("N", FRAME_LEN, 2), "Y": ("N", 24), "Z": ("N", "1?")}
    missing = [k for k in ("X", "Y", "Z") if k not in h5]
    if missing:
        raise SchemaError(
            f"missing datasets {missing}; expected layout {expected}, "
            f"found keys {sorted(h5.keys())}"
        )
    X, Y, Z = h5["X"], h5["Y"], h5["Z"]
    n = X.shape[0]
    problems = []
    if X.ndim != 3 or X.shape[1] != FRAME_LEN or X.shape[2] != 2:
        problems.append(f"X has shape {X.shape}, expected (N, {FRAME_LEN}, 2)")
    if Y.ndim != 2 or Y.shape != (n, 24):
        problems.append(f"Y has shape {Y.shape}, expected ({n}, 24)")
    if not (Z.shape == (n,) or Z.shape == (n, 1)):
        problems.append(f"Z has shape {Z.shape}, expected ({n},) or ({n}, 1)")
    if problems:
        raise SchemaError("source schema mismatch: " + "; ".join(problems))
    return X, Y, Z


def convert(src, dst, class_subset=None, snr_subset=None,
            max_frames_per_cell: int | None = None, classes_json=None,
            chunk_size: int = 4096) -> ConversionManifest:
    """Convert the HDF5 release at ``src`` into a GAMC frame file at ``dst``.

    class_subset: canonical class names to keep (default all 24);
    snr_subset: SNR values in dB to keep (default all); max_frames_per_cell
    caps each (class, SNR) cell, keeping the first frames in file order so
    re-runs are byte-identical.
    """
    release_order = _load_release_order(classes_json)
    unknown = [n for n in release_order if n not in RELEASE_TO_CANONICAL]
    if unknown:
        raise SchemaError(f"unknown release class names {unknown}; "
                          f"known names: {sorted(RELEASE_TO_CANONICAL)}")
    col_to_label = np.array(
        [_CANONICAL_ID[RELEASE_TO_CANONICAL[n]] for n in release_order],
        dtype=np.int64,
    )

    keep_labels = None
    if class_subset is not None:
        bad = [c for c in class_subset if c not in _CANONICAL_ID]
        if bad:
            raise SchemaError(f"unknown class names {bad}; "
                              f"canonical names: {list(CANONICAL_CLASSES)}")
        keep_labels = {_CANONICAL_ID[c] for c in class_subset}
    keep_snrs = None if snr_subset is None else {float(s) for s in snr_subset}
    cap = MAX_FRAMES_PER_CELL if max_frames_per_cell is None else int(max_frames_per_cell)

    cell_counts: dict[tuple[int, float], int] = {}
    total = 0
    with h5py.File(src, "r") as h5:
        X, Y, Z = _check_schema(h5)
        n = X.shape[0]
        with open(dst, "wb") as out:
            out.write(_HEADER.pack(FRAME_MAGIC, FRAME_VERSION, 0, FRAME_LEN))
            for start in range(0, n, chunk_size):
                stop = min(start + chunk_size, n)
                y = np.asarray(Y[start:stop])
                # collapse one-hot rows; reject rows without a unique max
                top = y.argmax(axis=1)
                sorted_rows = np.sort(y, axis=1)
                if np.any(sorted_rows[:, -1] == sorted_rows[:, -2]):
                    bad = int(start + np.flatnonzero(
                        sorted_rows[:, -1] == sorted_rows[:, -2])[0])
                    raise AmbiguousLabel(
                        f"row {bad}: one-hot label has no unique maximum"
                    )
                labels = col_to_label[top]
                snrs = np.asarray(Z[start:stop]).reshape(-1).astype(np.float32)

                keep = np.ones(stop - start, dtype=bool)
                if keep_labels is not None:
                    keep &= np.isin(labels, list(keep_labels))
                if keep_snrs is not None:
                    keep &= np.isin(snrs.astype(float), list(keep_snrs))
                rows = np.flatnonzero(keep)
                # enforce the per-cell cap in file order
                chosen = []
                for r in rows:
                    key = (int(labels[r]), float(snrs[r]))
                    c = cell_counts.get(key, 0)
                    if c >= cap:
                        continue
                    cell_counts[key] = c + 1
                    chosen.append(r)
                if not chosen:
                    continue
                chosen = np.asarray(chosen)
                samples = np.asarray(X[start:stop])[chosen]
                rec = np.empty(len(chosen), dtype=_RECORD_DTYPE)
                rec["label"] = labels[chosen].astype(np.uint16)
                rec["snr"] = snrs[chosen]
                rec["iq"] = samples  # float32 passthrough, bit-exact
                out.write(rec.tobytes())
                total += len(chosen)
            out.seek(0)
            out.write(_HEADER.pack(FRAME_MAGIC, FRAME_VERSION, total, FRAME_LEN))

    digest = hashlib.sha256()
    with open(dst, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)

    manifest = ConversionManifest(
        source=str(src),
        destination=str(dst),
        class_table=dict(_CANONICAL_ID),
        snr_list=sorted({snr for _, snr in cell_counts}),
        cell_counts={
            f"{CANONICAL_CLASSES[label]}@{snr:g}": count
            for (label, snr), count in sorted(cell_counts.items())
        },
        total_frames=total,
        output_sha256=digest.hexdigest(),
        release_order=list(release_order),
    )
    manifest.validate()
    return manifest
