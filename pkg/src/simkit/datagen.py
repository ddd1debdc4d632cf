"""Paired (SIM stack, ground truth) synthesis from frame sequences.

A source is an ordered list of frames (one video, or a single still image
treated as a static scene). Each sample takes 9 frames at stride 1 + skip,
crops them, keeps the centre frame as the pristine target and images the
2x-downsampled frames through the optics model.

Every sample draws from its own generator seeded by
``SeedSequence([global_seed, index])``, so results do not depend on the
number of worker threads or the order in which samples finish.
"""
from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image
from scipy import ndimage

from .image import (STACK_SIZE, ImageReadError, PatternMeta, atomic_write, read_image,
                    write_container, write_png16)
from .optics import NoiseConfig, OpticalConfig, default_pattern_set, form_stack, make_otf

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".tif", ".tiff", ".jpg", ".jpeg", ".bmp")
CENTER = STACK_SIZE // 2
MANIFEST_NAME = "manifest.jsonl"
MANIFEST_VERSION = 1


class SourceError(ValueError):
    """A frame source is empty, inconsistent or too short."""


@dataclass(frozen=True)
class SequenceSource:
    """Ordered frames of one video; a single frame means a static scene."""

    paths: tuple[Path, ...] = ()
    frames: np.ndarray | None = field(default=None, compare=False, repr=False)
    name: str = ""

    def __post_init__(self):
        if self.frames is None and not self.paths:
            raise SourceError("source has no frames")

    @classmethod
    def from_dir(cls, directory) -> "SequenceSource":
        """Frames in lexicographic filename order; all must share one size."""
        directory = Path(directory)
        if not directory.is_dir():
            raise FileNotFoundError(f"frame directory not found: {directory}")
        paths = tuple(sorted(p for p in directory.iterdir()
                             if p.suffix.lower() in IMAGE_SUFFIXES))
        if not paths:
            raise SourceError(f"no image frames in {directory}")
        sizes = set()
        for p in paths:
            try:
                with Image.open(p) as im:
                    sizes.add(im.size)
            except OSError as exc:
                # left in place: samples touching this frame fail on their own
                log.warning("unreadable frame %s: %s", p, exc)
        if not sizes:
            raise ImageReadError(f"no readable frames in {directory}")
        if len(sizes) != 1:
            raise SourceError(f"frames in {directory} differ in size: {sorted(sizes)}")
        return cls(paths=paths, name=str(directory))

    @classmethod
    def from_array(cls, frames, name: str = "memory") -> "SequenceSource":
        frames = np.asarray(frames, dtype=np.float64)
        if frames.ndim == 2:
            frames = frames[None]
        if frames.ndim != 3 or frames.shape[0] == 0:
            raise SourceError("expected a (N, H, W) frame array")
        frames = frames.copy()
        frames.setflags(write=False)
        return cls(frames=frames, name=name)

    def __len__(self) -> int:
        return len(self.frames) if self.frames is not None else len(self.paths)

    @property
    def static(self) -> bool:
        return len(self) == 1

    @property
    def shape(self) -> tuple[int, int]:
        if self.frames is not None:
            return self.frames.shape[1:]
        for p in self.paths:
            try:
                with Image.open(p) as im:
                    w, h = im.size
                return h, w
            except OSError:
                continue
        raise ImageReadError(f"no readable frames in source {self.name!r}")

    def frame(self, index: int) -> np.ndarray:
        if self.frames is not None:
            return self.frames[index]
        return read_image(self.paths[index])


@dataclass(frozen=True)
class SampleSpec:
    crop_size: int = 128  # low-resolution input size
    scale: int = 2
    frame_skip: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.crop_size <= 0 or self.crop_size % 2:
            raise ValueError("crop_size must be a positive even number")
        if self.scale != 2:
            raise ValueError("only a 2x scale is supported")
        if self.frame_skip < 0:
            raise ValueError("frame_skip must be >= 0")

    @property
    def span(self) -> int:
        """Source frames covered by one 9-frame sequence."""
        return STACK_SIZE + (STACK_SIZE - 1) * self.frame_skip

    @property
    def target_size(self) -> int:
        return self.crop_size * self.scale


@dataclass(frozen=True)
class Selection:
    """Where a sequence comes from: frame indices and crop origin (high-res pixels)."""

    frames: tuple[int, ...]
    origin: tuple[int, int]
    size: int


def check_source(source: SequenceSource, spec: SampleSpec) -> None:
    h, w = source.shape
    if spec.target_size > min(h, w):
        raise SourceError(f"crop {spec.target_size}px exceeds source size {h}x{w}")
    if not source.static and len(source) < spec.span:
        raise SourceError(f"source {source.name!r} has {len(source)} frames; "
                          f"skip {spec.frame_skip} needs {spec.span}")


def select_sequence(source: SequenceSource, spec: SampleSpec,
                    rng: np.random.Generator) -> Selection:
    """Draw a start frame, then a crop origin."""
    check_source(source, spec)
    if source.static:
        frames = (0,) * STACK_SIZE
    else:
        start = int(rng.integers(0, len(source) - spec.span + 1))
        frames = tuple(start + i * (1 + spec.frame_skip) for i in range(STACK_SIZE))
    h, w = source.shape
    size = spec.target_size
    origin = (int(rng.integers(0, h - size + 1)), int(rng.integers(0, w - size + 1)))
    return Selection(frames, origin, size)


def load_sequence(source: SequenceSource, sel: Selection) -> np.ndarray:
    """(9, size, size) high-resolution crops for a selection."""
    y, x = sel.origin
    cache = {}
    out = []
    for idx in sel.frames:
        if idx not in cache:
            cache[idx] = source.frame(idx)[y:y + sel.size, x:x + sel.size]
        out.append(cache[idx])
    return np.stack(out)


def sample_sequences(source: SequenceSource, count: int, spec: SampleSpec) -> list[np.ndarray]:
    """``count`` 9-frame high-resolution sequences drawn with ``spec.seed``."""
    rng = np.random.default_rng(spec.seed)
    return [load_sequence(source, select_sequence(source, spec, rng)) for _ in range(count)]


def shuffle_patterns(metas: Sequence[PatternMeta], rng) -> list[PatternMeta]:
    """Uniformly permute a full 9-pattern cycle (without replacement)."""
    metas = list(metas)
    if sorted(m.order_index for m in metas) != list(range(STACK_SIZE)):
        raise ValueError("shuffle needs a complete cycle of 9 patterns")
    return [metas[i] for i in rng.permutation(STACK_SIZE)]


def downsample(frames: np.ndarray, factor: int = 2, method: str = "box") -> np.ndarray:
    """Reduce the last two axes by ``factor``: box averaging or bilinear resampling."""
    frames = np.asarray(frames, dtype=np.float64)
    *lead, h, w = frames.shape
    if h % factor or w % factor:
        raise ValueError(f"frame size {h}x{w} is not divisible by {factor}")
    if method == "box":
        return frames.reshape(*lead, h // factor, factor, w // factor, factor).mean(axis=(-3, -1))
    if method == "bilinear":
        zoom = [1.0] * len(lead) + [1.0 / factor, 1.0 / factor]
        return ndimage.zoom(frames, zoom, order=1, mode="nearest", grid_mode=True)
    raise ValueError(f"unknown downsampling method {method!r}")


@dataclass(frozen=True)
class SynthesisConfig:
    """Everything besides the sample spec that shapes a synthesized pair."""

    optics: OpticalConfig = OpticalConfig()
    noise: NoiseConfig = NoiseConfig.default()
    shuffle: bool = False
    pattern_factor: float = 0.8
    modulation: float = 0.8
    downsample: str = "box"

    def to_dict(self) -> dict:
        return {"optics": asdict(self.optics), "noise": asdict(self.noise),
                "shuffle": self.shuffle, "pattern_factor": self.pattern_factor,
                "modulation": self.modulation, "downsample": self.downsample}

    @classmethod
    def from_dict(cls, d: dict) -> "SynthesisConfig":
        return cls(OpticalConfig(**d["optics"]), NoiseConfig(**d["noise"]), d["shuffle"],
                   d["pattern_factor"], d["modulation"], d["downsample"])


def synthesize_pair(sequence, config: SynthesisConfig, rng: np.random.Generator):
    """(input SimStack, target image) for nine high-resolution frames.

    The target is the untouched centre frame. The input images each frame,
    2x downsampled, under its pattern of the (optionally shuffled) cycle.
    """
    seq = np.asarray(sequence, dtype=np.float64)
    if seq.ndim != 3 or seq.shape[0] != STACK_SIZE:
        raise ValueError(f"expected 9 frames, got shape {seq.shape}")
    if seq.shape[1] % 2 or seq.shape[2] % 2:
        raise ValueError(f"high-resolution frames must have even size, got {seq.shape[1:]}")
    target = seq[CENTER].copy()
    low = downsample(seq, 2, config.downsample)
    metas = default_pattern_set(config.optics, rng, config.pattern_factor, config.modulation)
    if config.shuffle:
        metas = shuffle_patterns(metas, rng)
    otf = make_otf(config.optics, *low.shape[1:])
    stack = form_stack(low, metas, config.optics, config.noise, rng, otf)
    return stack, target


# -- datasets ---------------------------------------------------------------------

def sample_seed(global_seed: int, index: int) -> int:
    """64-bit per-sample seed derived from the global seed and the sample index."""
    return int(np.random.SeedSequence([global_seed, index]).generate_state(1, np.uint64)[0])


def sample_names(index: int) -> tuple[str, str]:
    return f"inputs/{index:06d}.vsim", f"targets/{index:06d}.png"


def _meta_record(m: PatternMeta) -> dict:
    return {"theta": m.theta, "phi": m.phi, "k0": m.k0, "m": m.m, "order_index": m.order_index}


def _generate(index: int, seed: int, sources: Sequence[SequenceSource], spec: SampleSpec,
              config: SynthesisConfig, out_dir: Path) -> dict:
    rng = np.random.default_rng(seed)
    src_idx = int(rng.integers(len(sources))) if len(sources) > 1 else 0
    source = sources[src_idx]
    record = {"index": index, "seed": seed, "source": source.name}
    try:
        sel = select_sequence(source, spec, rng)
        record.update(frames=list(sel.frames), crop=list(sel.origin))
        stack, target = synthesize_pair(load_sequence(source, sel), config, rng)
        record["metas"] = [_meta_record(m) for m in stack.metas]
        inp, tgt = sample_names(index)
        write_container(stack, out_dir / inp)
        write_png16(target, out_dir / tgt)
        record.update(input=inp, target=tgt, status="ok")
    except (OSError, ValueError) as exc:
        log.warning("sample %d failed: %s", index, exc)
        record.update(status="error", error=f"{type(exc).__name__}: {exc}")
    return record


@dataclass
class Manifest:
    header: dict
    records: list[dict]

    @property
    def failures(self) -> list[dict]:
        return [r for r in self.records if r["status"] != "ok"]

    def dumps(self) -> str:
        lines = [json.dumps(self.header, sort_keys=True)]
        lines += [json.dumps(r, sort_keys=True) for r in self.records]
        return "\n".join(lines) + "\n"

    def write(self, path) -> None:
        with atomic_write(path) as tmp, open(tmp, "w", encoding="utf-8") as fh:
            fh.write(self.dumps())

    @classmethod
    def read(cls, path) -> "Manifest":
        with open(path, encoding="utf-8") as fh:
            lines = [json.loads(line) for line in fh if line.strip()]
        if not lines or lines[0].get("kind") != "config":
            raise ValueError(f"{path} is not a dataset manifest")
        return cls(lines[0], lines[1:])


def build_dataset(sources: Sequence[SequenceSource], count: int, spec: SampleSpec,
                  config: SynthesisConfig, out_dir, threads: int = 1) -> Manifest:
    """Write ``count`` samples and a JSON-lines manifest under ``out_dir``.

    A failing sample is recorded with ``status: error`` and does not stop
    the others.
    """
    if count < 0:
        raise ValueError("count must be >= 0")
    if threads < 1:
        raise ValueError("threads must be >= 1")
    if count and not sources:
        raise SourceError("no frame sources given")
    for s in sources:
        check_source(s, spec)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if count:
        (out_dir / "inputs").mkdir(exist_ok=True)
        (out_dir / "targets").mkdir(exist_ok=True)
    header = {"kind": "config", "version": MANIFEST_VERSION, "count": count,
              "spec": asdict(spec), "synthesis": config.to_dict(),
              "sources": [s.name for s in sources]}
    seeds = [sample_seed(spec.seed, i) for i in range(count)]

    def job(i):
        return _generate(i, seeds[i], sources, spec, config, out_dir)

    if threads == 1:
        records = [job(i) for i in range(count)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(job, range(count)))
    manifest = Manifest(header, records)
    manifest.write(out_dir / MANIFEST_NAME)
    return manifest


def replay_manifest(manifest_path, out_dir, threads: int = 1,
                    sources: Sequence[SequenceSource] | None = None) -> Manifest:
    """Regenerate a dataset from its manifest; the result is byte-identical.

    ``sources`` defaults to the directories named in the manifest.
    """
    old = Manifest.read(manifest_path)
    h = old.header
    spec = SampleSpec(**h["spec"])
    config = SynthesisConfig.from_dict(h["synthesis"])
    if sources is None:
        sources = [SequenceSource.from_dir(n) for n in h["sources"]]
    new = build_dataset(sources, h["count"], spec, config, out_dir, threads)
    for a, b in zip(old.records, new.records):
        if a.get("frames") != b.get("frames") or a.get("crop") != b.get("crop"):
            raise ValueError(f"replay diverged at sample {a['index']}: sources changed?")
    return new


def sequence_from_source(source: SequenceSource, frame_skip: int = 0, start: int = 0) -> np.ndarray:
    """Nine full frames at stride 1 + frame_skip (for motion statistics)."""
    if source.static:
        return np.stack([source.frame(0)] * STACK_SIZE)
    span = STACK_SIZE + (STACK_SIZE - 1) * frame_skip
    if start < 0 or start + span > len(source):
        raise SourceError(f"source has {len(source)} frames; need {start + span}")
    return np.stack([source.frame(start + i * (1 + frame_skip)) for i in range(STACK_SIZE)])


def dataset_files(out_dir) -> dict[str, bytes]:
    """Relative path -> bytes for every file under ``out_dir`` (for comparisons)."""
    out_dir = Path(out_dir)
    return {str(p.relative_to(out_dir)): p.read_bytes()
            for p in sorted(out_dir.rglob("*")) if p.is_file()}


__all__ = [
    "Manifest", "SampleSpec", "Selection", "SequenceSource", "SourceError", "SynthesisConfig",
    "build_dataset", "check_source", "dataset_files", "downsample", "load_sequence",
    "replay_manifest", "sample_seed", "sample_sequences", "select_sequence",
    "sequence_from_source", "shuffle_patterns", "synthesize_pair",
]
