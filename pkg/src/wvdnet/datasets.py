"""WAV ingestion, dataset manifests, seeded splits, and batch preprocessing.

The WAV reader handles RIFF containers with PCM 16-bit or IEEE float 32-bit
payloads at any rate and channel count; unknown chunks are skipped, malformed
ones are rejected with the offending chunk named. Manifests cover the two
CSV-described corpus layouts plus a generic folder-per-class tree.

Batch preprocessing materializes one raw float32 array file per clip plus an
`index.csv` (file,label,fold) and a JSON metadata sidecar; re-running with
identical inputs and config is byte-identical, and clips may be processed by
a worker pool without changing the output.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import struct
import wave
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .config import RunConfig, config_hash
from .errors import DataError
from .ioutil import atomic_write_bytes, atomic_write_text
from .pipeline import clip_to_image, working_rate_hz
from .signal_core import Signal, average_channels

URBANSOUND8K_NUM_CLASSES = 10
ESC50_NUM_CLASSES = 50


# -- WAV codec ----------------------------------------------------------------


def _iter_chunks(data: bytes):
    if len(data) < 12:
        raise DataError("truncated RIFF header")
    if data[0:4] != b"RIFF":
        raise DataError("not a RIFF file")
    if data[8:12] != b"WAVE":
        raise DataError("RIFF file is not WAVE")
    offset = 12
    while offset + 8 <= len(data):
        tag = data[offset : offset + 4]
        (size,) = struct.unpack_from("<I", data, offset + 4)
        payload_end = offset + 8 + size
        if payload_end > len(data):
            raise DataError(f"truncated {tag.decode('ascii', 'replace')!r} chunk")
        yield tag, data[offset + 8 : payload_end]
        offset = payload_end + (size & 1)  # chunks pad to even size


def decode_wav(data: bytes) -> list[Signal]:
    """Decode PCM16 / float32 WAV bytes into one Signal per channel.

    Integer samples are scaled by 1/32768 so full negative scale maps to -1.
    """
    fmt = None
    payload = None
    for tag, chunk in _iter_chunks(data):
        if tag == b"fmt " and fmt is None:
            if len(chunk) < 16:
                raise DataError("'fmt ' chunk too short")
            fmt = struct.unpack_from("<HHIIHH", chunk, 0)
        elif tag == b"data" and payload is None:
            payload = chunk
    if fmt is None:
        raise DataError("missing 'fmt ' chunk")
    if payload is None:
        raise DataError("missing 'data' chunk")
    audio_format, channels, rate, _byte_rate, block_align, bits = fmt
    if channels < 1:
        raise DataError("'fmt ' chunk declares zero channels")
    if rate <= 0:
        raise DataError("'fmt ' chunk declares a non-positive sample rate")
    if audio_format == 1:
        if bits != 16:
            raise DataError(f"unsupported PCM bit depth {bits} in 'fmt ' chunk (16 only)")
        dtype = "<i2"
    elif audio_format == 3:
        if bits != 32:
            raise DataError(f"unsupported float bit depth {bits} in 'fmt ' chunk (32 only)")
        dtype = "<f4"
    else:
        raise DataError(
            f"unsupported audio format tag {audio_format} in 'fmt ' chunk "
            "(PCM 16-bit and IEEE float 32-bit only)"
        )
    bytes_per_frame = channels * bits // 8
    if block_align and block_align != bytes_per_frame:
        raise DataError("'fmt ' chunk block alignment contradicts its sample layout")
    frames = len(payload) // bytes_per_frame
    if frames == 0:
        raise DataError("'data' chunk holds no complete frames")
    raw = np.frombuffer(payload[: frames * bytes_per_frame], dtype=dtype)
    raw = raw.reshape(frames, channels).astype(np.float64)
    if audio_format == 1:
        raw /= 32768.0
    return [Signal(raw[:, ch].copy(), float(rate)) for ch in range(channels)]


def write_wav_pcm16(path: str | Path, samples: np.ndarray, rate_hz: float) -> None:
    """Write a mono PCM16 WAV; samples are clipped to [-1, 1] before quantizing."""
    quantized = np.clip(np.round(np.asarray(samples) * 32767.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as handle:
        handle.setnchannels(1)
        handle.setsampwidth(2)
        handle.setframerate(round(rate_hz))
        handle.writeframes(quantized.tobytes())


def probe_wav(path: str | Path):
    """Cheap header probe: (rate_hz, channels, frames) without decoding audio."""
    with open(path, "rb") as handle:
        head = handle.read(12)
        if len(head) < 12 or head[0:4] != b"RIFF" or head[8:12] != b"WAVE":
            raise DataError(f"{path}: not a RIFF/WAVE file")
        fmt = None
        data_size = None
        while True:
            header = handle.read(8)
            if len(header) < 8:
                break
            tag = header[0:4]
            (size,) = struct.unpack("<I", header[4:8])
            if tag == b"fmt ":
                chunk = handle.read(min(size, 16))
                if len(chunk) < 16:
                    raise DataError(f"{path}: 'fmt ' chunk too short")
                fmt = struct.unpack_from("<HHIIHH", chunk, 0)
                handle.seek(size - len(chunk) + (size & 1), 1)
            else:
                if tag == b"data":
                    data_size = size
                handle.seek(size + (size & 1), 1)
        if fmt is None or data_size is None:
            raise DataError(f"{path}: missing 'fmt ' or 'data' chunk")
        _, channels, rate, _, _, bits = fmt
        if channels < 1 or rate <= 0 or bits % 8:
            raise DataError(f"{path}: malformed 'fmt ' chunk")
        return float(rate), channels, data_size // (channels * bits // 8)


# -- manifests ----------------------------------------------------------------


@dataclass(frozen=True)
class ClipRecord:
    path: str
    label: int
    class_name: str
    fold: int | None
    duration_s: float


@dataclass(frozen=True)
class DatasetManifest:
    records: tuple
    class_names: tuple
    source: str

    def __post_init__(self):
        if not self.class_names:
            raise ValueError("manifest needs at least one class name")
        if len(set(self.class_names)) != len(self.class_names):
            raise ValueError("class names must be unique")
        for rec in self.records:
            if not 0 <= rec.label < len(self.class_names):
                raise ValueError(f"record {rec.path} label {rec.label} out of range")
            if rec.fold is not None and rec.fold < 1:
                raise ValueError(f"record {rec.path} has fold {rec.fold}; folds start at 1")

    def __len__(self) -> int:
        return len(self.records)


def _probe_duration(path: Path) -> float:
    try:
        rate, _, frames = probe_wav(path)
        return frames / rate
    except (DataError, OSError):
        return 0.0  # undecodable clips surface later in the preprocessing skip report


def _load_csv_manifest(root, csv_path, audio_path_for, cols, class_col, id_col, max_id, source):
    if not csv_path.is_file():
        raise DataError(f"metadata CSV not found: {csv_path}")
    with open(csv_path, newline="") as handle:
        reader = csv.DictReader(handle)
        missing = [c for c in cols if c not in (reader.fieldnames or [])]
        if missing:
            raise DataError(f"{csv_path}: missing required columns {missing}")
        rows = list(reader)
    names_by_id: dict[int, str] = {}
    raw_records = []
    for lineno, row in enumerate(rows, start=2):  # header is line 1
        try:
            class_id = int(row[id_col])
        except ValueError:
            raise DataError(f"{csv_path} row {lineno}: {id_col} {row[id_col]!r} is not an integer")
        if not 0 <= class_id < max_id:
            raise DataError(
                f"{csv_path} row {lineno}: {id_col} {class_id} out of range 0..{max_id - 1}"
            )
        name = row[class_col]
        if names_by_id.setdefault(class_id, name) != name:
            raise DataError(
                f"{csv_path} row {lineno}: {id_col} {class_id} maps to both "
                f"{names_by_id[class_id]!r} and {name!r}"
            )
        try:
            fold = int(row["fold"])
        except ValueError:
            raise DataError(f"{csv_path} row {lineno}: fold {row['fold']!r} is not an integer")
        clip = audio_path_for(row)
        if not clip.is_file():
            raise DataError(f"{csv_path} row {lineno}: referenced file not found: {clip}")
        raw_records.append((str(clip), class_id, name, fold))
    ordered_ids = sorted(names_by_id)
    remap = {cid: i for i, cid in enumerate(ordered_ids)}
    class_names = tuple(names_by_id[cid] for cid in ordered_ids)
    records = tuple(
        ClipRecord(p, remap[cid], name, fold, _probe_duration(Path(p)))
        for p, cid, name, fold in sorted(raw_records)
    )
    return DatasetManifest(records, class_names, source)


def load_manifest(root: str | Path, source: str) -> DatasetManifest:
    """Build a manifest for one of the supported dataset layouts.

    Record order is deterministic (sorted by path); class names are ordered
    by class id for the CSV layouts and alphabetically for folder_per_class.
    """
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"dataset root not found: {root}")
    if source == "urbansound8k":
        return _load_csv_manifest(
            root,
            root / "metadata" / "UrbanSound8K.csv",
            lambda row: root / "audio" / f"fold{int(row['fold'])}" / row["slice_file_name"],
            ["slice_file_name", "fold", "classID", "class"],
            "class",
            "classID",
            URBANSOUND8K_NUM_CLASSES,
            source,
        )
    if source == "esc50":
        return _load_csv_manifest(
            root,
            root / "meta" / "esc50.csv",
            lambda row: root / "audio" / row["filename"],
            ["filename", "fold", "target", "category"],
            "category",
            "target",
            ESC50_NUM_CLASSES,
            source,
        )
    if source == "folder_per_class":
        class_dirs = sorted(d for d in root.iterdir() if d.is_dir())
        records = []
        class_names = []
        for directory in class_dirs:
            clips = sorted(directory.glob("*.wav"))
            if not clips:
                continue
            label = len(class_names)
            class_names.append(directory.name)
            for clip in clips:
                records.append(
                    ClipRecord(str(clip), label, directory.name, None, _probe_duration(clip))
                )
        if not class_names:
            raise DataError(f"no class directories with .wav files under {root}")
        records.sort(key=lambda r: r.path)
        return DatasetManifest(tuple(records), tuple(class_names), source)
    raise DataError(f"unknown dataset source kind {source!r}")


# -- splits -------------------------------------------------------------------


def stratified_holdout_indices(labels, train_fraction: float, seed: int):
    """Seeded per-class partition of index positions into (train, test)."""
    if not 0 < train_fraction < 1:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    train_idx, test_idx = [], []
    for cls in np.unique(labels):
        members = np.flatnonzero(labels == cls)
        shuffled = members[rng.permutation(len(members))]
        n_test = round((1.0 - train_fraction) * len(members))
        test_idx.extend(shuffled[:n_test])
        train_idx.extend(shuffled[n_test:])
    return np.sort(np.array(train_idx, dtype=int)), np.sort(np.array(test_idx, dtype=int))


def plain_holdout_indices(n: int, train_fraction: float, seed: int):
    """Unstratified seeded partition of range(n) into (train, test)."""
    if not 0 < train_fraction < 1:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    shuffled = np.random.default_rng(seed).permutation(n)
    n_test = round((1.0 - train_fraction) * n)
    return np.sort(shuffled[n_test:]), np.sort(shuffled[:n_test])


def split_holdout(manifest: DatasetManifest, fraction: float, seed: int, stratified: bool = True):
    """Partition a manifest into (train, test); fraction is the train share."""
    labels = [rec.label for rec in manifest.records]
    if stratified:
        train_idx, test_idx = stratified_holdout_indices(labels, fraction, seed)
    else:
        train_idx, test_idx = plain_holdout_indices(len(labels), fraction, seed)
    pick = lambda idx: replace(manifest, records=tuple(manifest.records[i] for i in idx))
    return pick(train_idx), pick(test_idx)


def split_folds(manifest: DatasetManifest, test_fold: int):
    """Leave-one-fold-out partition: (train = other folds, test = test_fold)."""
    folds = {rec.fold for rec in manifest.records}
    if None in folds:
        raise ValueError("fold split requested but some records carry no fold metadata")
    if test_fold not in folds:
        raise ValueError(f"unknown fold {test_fold}; manifest has folds {sorted(folds)}")
    train = tuple(r for r in manifest.records if r.fold != test_fold)
    test = tuple(r for r in manifest.records if r.fold == test_fold)
    return replace(manifest, records=train), replace(manifest, records=test)


# -- batch preprocessing ------------------------------------------------------


def _array_filename(index: int, clip_path: str) -> str:
    return f"{index:05d}_{Path(clip_path).stem}.f32"


def _preprocess_clip(task):
    """Worker: decode one clip, run the pipeline, write its array file."""
    cfg_dict, clip_path, out_file = task
    cfg = RunConfig(**cfg_dict)
    try:
        channels = decode_wav(Path(clip_path).read_bytes())
        signal = average_channels(channels)
        image = clip_to_image(signal, cfg)
        atomic_write_bytes(out_file, image.values.astype("<f4").tobytes())
        return {
            "ok": True,
            "source_rate_hz": signal.sample_rate_hz,
            "working_rate_hz": working_rate_hz(cfg, signal.sample_rate_hz),
        }
    except (DataError, OSError, ValueError) as exc:
        return {"ok": False, "reason": str(exc)}


def preprocess_dataset(
    manifest: DatasetManifest, cfg: RunConfig, out_dir: str | Path, workers: int = 1
) -> dict:
    """Materialize the per-clip arrays, index, metadata, and skip report.

    Undecodable clips are recorded in `skipped.txt` rather than aborting the
    run. The index is written last, temp-and-rename, so an interrupted run
    never leaves a readable-but-partial store.
    """
    out_dir = Path(out_dir)
    arrays_dir = out_dir / "arrays"
    arrays_dir.mkdir(parents=True, exist_ok=True)
    cfg_dict = dataclasses.asdict(cfg)
    tasks = []
    for i, rec in enumerate(manifest.records):
        tasks.append((cfg_dict, rec.path, str(arrays_dir / _array_filename(i, rec.path))))

    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_preprocess_clip, tasks))
    else:
        results = [_preprocess_clip(task) for task in tasks]

    kept, skipped = [], []
    for rec, task, result in zip(manifest.records, tasks, results):
        if result["ok"]:
            kept.append((Path(task[2]).name, rec, result))
        else:
            skipped.append(f"{rec.path}: {result['reason']}")

    meta = {
        "format": 1,
        "class_names": list(manifest.class_names),
        "image_rows": cfg.image_rows,
        "image_cols": cfg.image_cols,
        "config_hash": config_hash(cfg),
        "clips": [
            {
                "file": f"arrays/{name}",
                "label": rec.label,
                "fold": rec.fold,
                "source_rate_hz": result["source_rate_hz"],
                "working_rate_hz": result["working_rate_hz"],
            }
            for name, rec, result in kept
        ],
    }
    atomic_write_text(out_dir / "skipped.txt", "".join(line + "\n" for line in skipped))
    atomic_write_text(out_dir / "store.json", json.dumps(meta, sort_keys=True, indent=1) + "\n")
    index_lines = ["file,label,fold"]
    for name, rec, _ in kept:
        fold = "" if rec.fold is None else str(rec.fold)
        index_lines.append(f"arrays/{name},{rec.label},{fold}")
    atomic_write_text(out_dir / "index.csv", "".join(line + "\n" for line in index_lines))
    return {"written": len(kept), "skipped": len(skipped)}


def is_store_current(manifest: DatasetManifest, cfg: RunConfig, out_dir: str | Path) -> bool:
    """True when the store matches this manifest + config and is complete."""
    out_dir = Path(out_dir)
    store_path = out_dir / "store.json"
    if not store_path.is_file() or not (out_dir / "index.csv").is_file():
        return False
    try:
        meta = json.loads(store_path.read_text())
    except json.JSONDecodeError:
        return False
    if meta.get("config_hash") != config_hash(cfg):
        return False
    if meta.get("class_names") != list(manifest.class_names):
        return False
    expected = {
        f"arrays/{_array_filename(i, rec.path)}" for i, rec in enumerate(manifest.records)
    }
    skipped_file = out_dir / "skipped.txt"
    n_skipped = len(skipped_file.read_text().splitlines()) if skipped_file.is_file() else 0
    stored = {clip["file"] for clip in meta.get("clips", [])}
    if len(stored) + n_skipped != len(expected) or not stored <= expected:
        return False
    return all((out_dir / f).is_file() for f in stored)


@dataclass(frozen=True)
class ArrayStore:
    """Preprocessed images loaded back from disk."""

    images: np.ndarray  # [N, 1, rows, cols] float32
    labels: np.ndarray  # [N] int64
    folds: np.ndarray  # [N] int64, -1 where absent
    class_names: tuple
    config_hash: str

    def __len__(self) -> int:
        return len(self.labels)


def load_store(out_dir: str | Path) -> ArrayStore:
    out_dir = Path(out_dir)
    store_path = out_dir / "store.json"
    if not store_path.is_file():
        raise DataError(f"no preprocessed store at {out_dir} (missing store.json)")
    meta = json.loads(store_path.read_text())
    rows, cols = meta["image_rows"], meta["image_cols"]
    images, labels, folds = [], [], []
    for clip in meta["clips"]:
        raw = np.fromfile(out_dir / clip["file"], dtype="<f4")
        if raw.size != rows * cols:
            raise DataError(
                f"{clip['file']}: expected {rows * cols} values, found {raw.size}"
            )
        images.append(raw.reshape(1, rows, cols))
        labels.append(clip["label"])
        folds.append(-1 if clip["fold"] is None else clip["fold"])
    if not images:
        images_arr = np.zeros((0, 1, rows, cols), dtype=np.float32)
    else:
        images_arr = np.stack(images).astype(np.float32)
    return ArrayStore(
        images_arr,
        np.asarray(labels, dtype=np.int64),
        np.asarray(folds, dtype=np.int64),
        tuple(meta["class_names"]),
        meta["config_hash"],
    )
