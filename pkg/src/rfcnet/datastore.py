"""Sharded on-disk dataset with manifest, checksums, and streaming readers.

Shard layout (little-endian):
    bytes 0..15   magic "RFCNETDS" padded with zeros
    bytes 16..19  format version (u32)
    then per-sample records:
        u64 sample index | u32 T, C, H, W | u32 LH, LW
        frames payload | clean-frames payload | label (LH*LW u8)

Frame payloads are float32, or uint8 with quantization step 1/255 when the
dataset was written with quantize=True (flagged in the manifest). The JSON
manifest is written last, atomically, and echoes everything needed to
regenerate the dataset bit-identically: scene config, seed, split sizes.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import multiprocessing
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ChecksumError, DataMissing, UnknownSplit
from .mnist import resolve_glyph_bank
from .scene import SceneConfig, SequenceSample, generate_sequence

SHARD_MAGIC = b"RFCNETDS" + b"\x00" * 8
FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.json"

DEFAULT_SPLITS = {"train": 20000, "val": 4000, "test": 1000, "clean_test": 1000}
TINY_SPLITS = {"train": 500, "val": 100, "test": 100, "clean_test": 100}

# clean_test shares the test split's scene seed stream with perturbations
# disabled, making the clean/perturbed comparison paired.
_SPLIT_SEED_CODES = {"train": 0, "val": 1, "test": 2, "clean_test": 2}
_GLYPH_SPLITS = {"train": "train", "val": "train", "test": "test", "clean_test": "test"}

_RECORD_FIXED = struct.Struct("<QIIIIII")


@dataclass(frozen=True)
class ShardInfo:
    file: str
    start: int
    count: int
    sha256: str


@dataclass
class DatasetManifest:
    version: int
    seed: int
    config_echo: dict
    splits: dict[str, int]
    quantized: bool
    shards: dict[str, list[ShardInfo]]
    root: Path | None = None

    def to_json(self) -> str:
        payload = {
            "version": self.version,
            "seed": self.seed,
            "config_echo": self.config_echo,
            "splits": self.splits,
            "dtype": {"frames": "u1" if self.quantized else "<f4", "label": "u1"},
            "quantized": self.quantized,
            "shards": {
                split: [dataclasses.asdict(s) for s in infos]
                for split, infos in self.shards.items()
            },
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str, root: Path | None = None) -> "DatasetManifest":
        payload = json.loads(text)
        shards = {
            split: [ShardInfo(**info) for info in infos]
            for split, infos in payload["shards"].items()
        }
        return cls(
            version=payload["version"],
            seed=payload["seed"],
            config_echo=payload["config_echo"],
            splits=payload["splits"],
            quantized=payload["quantized"],
            shards=shards,
            root=root,
        )

    def scene_config(self) -> SceneConfig:
        fields = dict(self.config_echo["scene"])
        for key, value in fields.items():
            if isinstance(value, list):
                fields[key] = tuple(value)
        return SceneConfig(**fields)


def load_manifest(path: str | Path) -> DatasetManifest:
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    if not path.exists():
        raise DataMissing(f"no dataset manifest at {path}")
    return DatasetManifest.from_json(path.read_text(), root=path.parent)


def _encode_frames(frames: np.ndarray, quantized: bool) -> bytes:
    if quantized:
        return np.round(frames * 255.0).astype(np.uint8).tobytes()
    return np.ascontiguousarray(frames, dtype="<f4").tobytes()


def _frames_nbytes(shape: tuple[int, ...], quantized: bool) -> int:
    return int(np.prod(shape)) * (1 if quantized else 4)


def _encode_record(index: int, sample: SequenceSample, quantized: bool) -> bytes:
    t, c, h, w = sample.frames.shape
    lh, lw = sample.label.shape
    header = _RECORD_FIXED.pack(index, t, c, h, w, lh, lw)
    return b"".join([
        header,
        _encode_frames(sample.frames, quantized),
        _encode_frames(sample.clean_frames, quantized),
        np.ascontiguousarray(sample.label, dtype=np.uint8).tobytes(),
    ])


def _decode_record(buf: memoryview, offset: int, quantized: bool):
    index, t, c, h, w, lh, lw = _RECORD_FIXED.unpack_from(buf, offset)
    offset += _RECORD_FIXED.size
    nbytes = _frames_nbytes((t, c, h, w), quantized)

    def read_frames(off):
        if quantized:
            raw = np.frombuffer(buf, dtype=np.uint8, count=nbytes, offset=off)
            arr = (raw.astype(np.float32) / np.float32(255.0)).reshape(t, c, h, w)
        else:
            arr = np.frombuffer(buf, dtype="<f4", count=t * c * h * w,
                                offset=off).reshape(t, c, h, w).copy()
        return arr

    frames = read_frames(offset)
    clean = read_frames(offset + nbytes)
    offset += 2 * nbytes
    label = np.frombuffer(buf, dtype=np.uint8, count=lh * lw,
                          offset=offset).reshape(lh, lw).copy()
    offset += lh * lw
    return index, SequenceSample(frames=frames, clean_frames=clean, label=label), offset


def write_shards(samples, out_dir: str | Path, split: str,
                 shard_size: int = 512, quantized: bool = False) -> list[ShardInfo]:
    """Write an iterable of (index, SequenceSample) into fixed-size shards."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    infos: list[ShardInfo] = []
    shard_idx = 0
    pending: list[bytes] = []
    start = 0

    def flush():
        nonlocal shard_idx, start, pending
        if not pending:
            return
        name = f"{split}-{shard_idx:05d}.rds"
        digest = hashlib.sha256()
        with open(out_dir / name, "wb") as fh:
            head = SHARD_MAGIC + struct.pack("<I", FORMAT_VERSION)
            fh.write(head)
            digest.update(head)
            for record in pending:
                fh.write(record)
                digest.update(record)
        infos.append(ShardInfo(file=name, start=start, count=len(pending),
                               sha256=digest.hexdigest()))
        start += len(pending)
        shard_idx += 1
        pending = []

    for index, sample in samples:
        pending.append(_encode_record(index, sample, quantized))
        if len(pending) == shard_size:
            flush()
    flush()
    return infos


def verify_checksums(manifest: DatasetManifest, split: str | None = None) -> None:
    """Re-hash shard files against the manifest; ChecksumError names offenders."""
    splits = [split] if split else sorted(manifest.shards)
    for name in splits:
        for info in manifest.shards[name]:
            path = manifest.root / info.file
            digest = hashlib.sha256(path.read_bytes()).hexdigest()
            if digest != info.sha256:
                raise ChecksumError(f"shard {info.file} is corrupt "
                                    f"(sha256 {digest} != manifest {info.sha256})")


def open_split(manifest: DatasetManifest, split: str, shuffle_seed: int | None = None):
    """Yield the split's samples in deterministic (optionally shuffled) order."""
    if split not in manifest.shards:
        raise UnknownSplit(f"split {split!r} not in manifest "
                           f"(have {sorted(manifest.shards)})")
    reader = SplitReader(manifest, split)
    order = np.arange(len(reader))
    if shuffle_seed is not None:
        np.random.Generator(np.random.PCG64(shuffle_seed)).shuffle(order)
    for i in order:
        yield reader[int(i)]


class SplitReader:
    """Random access over one split; shards are memory-mapped lazily."""

    def __init__(self, manifest: DatasetManifest, split: str):
        if split not in manifest.shards:
            raise UnknownSplit(f"split {split!r} not in manifest")
        self.manifest = manifest
        self.split = split
        self.infos = manifest.shards[split]
        self.count = manifest.splits[split]
        self._maps: dict[str, memoryview] = {}
        self._record_size: int | None = None

    def __len__(self) -> int:
        return self.count

    def _shard_for(self, index: int) -> ShardInfo:
        for info in self.infos:
            if info.start <= index < info.start + info.count:
                return info
        raise IndexError(index)

    def _buffer(self, info: ShardInfo) -> memoryview:
        if info.file not in self._maps:
            path = self.manifest.root / info.file
            if not path.exists():
                raise DataMissing(f"missing shard {path}")
            data = np.memmap(path, dtype=np.uint8, mode="r")
            if bytes(data[:16]) != SHARD_MAGIC:
                raise ChecksumError(f"shard {info.file} has a bad magic header")
            self._maps[info.file] = memoryview(data)
        return self._maps[info.file]

    def __getitem__(self, index: int) -> SequenceSample:
        if not 0 <= index < self.count:
            raise IndexError(index)
        info = self._shard_for(index)
        buf = self._buffer(info)
        header_size = len(SHARD_MAGIC) + 4
        if self._record_size is None:
            _, _, end = _decode_record(buf, header_size, self.manifest.quantized)
            self._record_size = end - header_size
        offset = header_size + (index - info.start) * self._record_size
        stored_index, sample, _ = _decode_record(buf, offset, self.manifest.quantized)
        if stored_index != index:
            raise ChecksumError(
                f"shard {info.file}: record at offset {offset} claims index "
                f"{stored_index}, expected {index}")
        return sample


# --- dataset generation -----------------------------------------------------

def sequence_seed(seed: int, split: str, index: int) -> tuple[int, int, int]:
    return (seed, _SPLIT_SEED_CODES[split], index)


def _split_config(config: SceneConfig, split: str) -> SceneConfig:
    if split == "clean_test":
        return dataclasses.replace(config, perturbations=False)
    return config


_worker_state: dict = {}


def _init_worker(config: SceneConfig, seed: int, split: str, mnist_dir: str | None):
    _worker_state["config"] = _split_config(config, split)
    _worker_state["seed"] = seed
    _worker_state["split"] = split
    _worker_state["glyphs"] = resolve_glyph_bank(
        config.glyph_source, _GLYPH_SPLITS[split], mnist_dir)


def _generate_one(index: int):
    return index, generate_sequence(
        _worker_state["config"],
        sequence_seed(_worker_state["seed"], _worker_state["split"], index),
        glyphs=_worker_state["glyphs"],
    )


def iter_split_samples(config: SceneConfig, seed: int, split: str, count: int,
                       workers: int = 1, mnist_dir: str | None = None):
    """Yield (index, sample) in index order; parallelism never changes bytes.

    Every sample is a pure function of (config, seed, split, index), so
    workers just partition the index range.
    """
    if workers <= 1:
        _init_worker(config, seed, split, mnist_dir)
        for index in range(count):
            yield _generate_one(index)
        return
    ctx = multiprocessing.get_context("fork")
    with ctx.Pool(workers, initializer=_init_worker,
                  initargs=(config, seed, split, mnist_dir)) as pool:
        yield from pool.imap(_generate_one, range(count), chunksize=16)


def build_dataset(config: SceneConfig, seed: int, out_dir: str | Path,
                  splits: dict[str, int] | None = None, shard_size: int = 512,
                  quantized: bool = False, workers: int = 1,
                  mnist_dir: str | None = None,
                  progress=None) -> DatasetManifest:
    """Generate all splits, write shards, then the manifest (last, atomically)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    splits = dict(splits or DEFAULT_SPLITS)

    shard_map: dict[str, list[ShardInfo]] = {}
    for split in ("train", "val", "test", "clean_test"):
        count = splits.get(split, 0)
        samples = iter_split_samples(config, seed, split, count,
                                     workers=workers, mnist_dir=mnist_dir)
        if progress is not None:
            samples = progress(split, count, samples)
        shard_map[split] = write_shards(samples, out_dir, split,
                                        shard_size=shard_size, quantized=quantized)

    manifest = DatasetManifest(
        version=FORMAT_VERSION,
        seed=seed,
        config_echo={
            "scene": dataclasses.asdict(config),
            "splits": splits,
            "shard_size": shard_size,
            "workers_are_immaterial": True,
        },
        splits=splits,
        quantized=quantized,
        shards=shard_map,
    )
    tmp = out_dir / (MANIFEST_NAME + ".tmp")
    tmp.write_text(manifest.to_json())
    os.replace(tmp, out_dir / MANIFEST_NAME)
    manifest.root = out_dir
    return manifest
