"""Synthetic fake-media task factory.

Each synthetic generator plants a frequency-domain fingerprint: the "real"
class is smoothed noise, the "fake" class is the same base plus a sum of
cosine gratings at generator-specific frequencies. Families of generators
share base frequencies so that transfer and forgetting behave like they do
across real generative model families, and a noise level knob makes some
tasks intentionally hard.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import ConfigError, IngestionError
from .pgmio import read_pgm, write_pgm
from ._util import seeded_rng, mix_seed as _mix

PATCH_SIDE = 32
FAMILIES = ("gan_like", "cg_like", "unknown_like")
DEFAULT_SIZES = {"train": 256, "val": 96, "test": 256}


@dataclass(frozen=True)
class GeneratorSpec:
    """A synthetic source: named frequency fingerprint plus a noise level."""

    name: str
    family: str
    fingerprint: tuple[tuple[int, int, float], ...]
    noise_level: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown family {self.family!r}")
        fp = tuple((int(u), int(v), float(a)) for u, v, a in self.fingerprint)
        object.__setattr__(self, "fingerprint", fp)
        for u, v, a in fp:
            if not (0 <= u <= PATCH_SIDE // 2 and 0 <= v < PATCH_SIDE) or (u, v) == (0, 0):
                raise ConfigError(f"fingerprint frequency ({u},{v}) outside the half-spectrum")
            if not np.isfinite(a):
                raise ConfigError("fingerprint amplitudes must be finite")
        if self.noise_level < 0:
            raise ConfigError("noise_level must be >= 0")

    @property
    def max_amplitude(self) -> float:
        return max((abs(a) for _u, _v, a in self.fingerprint), default=0.0)


@dataclass(frozen=True)
class Split:
    patches: np.ndarray  # (n, 32, 32) float64 in [0, 1]
    labels: np.ndarray  # (n,) int64, 0 real / 1 fake

    def __len__(self) -> int:
        return int(self.labels.shape[0])


@dataclass(frozen=True)
class TaskDataset:
    """One labeled batch of the stream, split train/val/test."""

    name: str
    train: Split
    val: Split
    test: Split
    provenance: GeneratorSpec | str = "external"

    def split(self, which: str) -> Split:
        return {"train": self.train, "val": self.val, "test": self.test}[which]


@dataclass(frozen=True)
class SequenceSpec:
    """Ordered task names, optionally partitioned into consecutive groups."""

    order: tuple[str, ...]
    grouping: tuple[tuple[str, ...], ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "order", tuple(self.order))
        if self.grouping is not None:
            groups = tuple(tuple(g) for g in self.grouping)
            object.__setattr__(self, "grouping", groups)
            flat = [n for g in groups for n in g]
            if sorted(flat) != sorted(self.order):
                raise ConfigError("grouping must cover the sequence names exactly once")


_YY, _XX = np.meshgrid(np.arange(PATCH_SIDE), np.arange(PATCH_SIDE), indexing="ij")


def _box_blur3(img: np.ndarray) -> np.ndarray:
    """Fixed 3x3 box blur with circular wrap-around."""
    out = np.zeros_like(img)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            out += np.roll(img, (dy, dx), axis=(0, 1))
    return out / 9.0


def _base_patch(rng: np.random.Generator, noise_level: float) -> np.ndarray:
    base = _box_blur3(rng.standard_normal((PATCH_SIDE, PATCH_SIDE)))
    if noise_level > 0:
        base = base + noise_level * rng.standard_normal((PATCH_SIDE, PATCH_SIDE))
    lo = base.min()
    hi = base.max()
    return (base - lo) / (hi - lo)


def synth_real(count: int, seed: int, noise_level: float = 0.0) -> np.ndarray:
    """(count, 32, 32) smoothed-noise patches in [0, 1], counter-seeded per patch."""
    if count < 1:
        raise ConfigError(f"count must be >= 1, got {count}")
    return np.stack([_base_patch(seeded_rng(seed, i), noise_level) for i in range(count)])


def synth_fake(gen: GeneratorSpec, count: int, seed: int) -> np.ndarray:
    """Real-style base plus the generator's cosine fingerprint, clipped to [0, 1].

    Uses the same per-patch seed path as synth_real, so a zero-amplitude
    fingerprint reproduces the real patches bit for bit.
    """
    if count < 1:
        raise ConfigError(f"count must be >= 1, got {count}")
    patches = np.empty((count, PATCH_SIDE, PATCH_SIDE))
    for i in range(count):
        rng = seeded_rng(seed, i)
        base = _base_patch(rng, gen.noise_level)
        print_ = np.zeros((PATCH_SIDE, PATCH_SIDE))
        for u, v, amp in gen.fingerprint:
            phase = rng.uniform(0.0, 2.0 * np.pi)
            print_ += amp * np.cos(2.0 * np.pi * (u * _XX + v * _YY) / PATCH_SIDE + phase)
        patches[i] = np.clip(base + print_, 0.0, 1.0)
    return patches


def make_task(gen: GeneratorSpec, sizes: dict[str, int] | None = None, seed: int = 0) -> TaskDataset:
    """Balanced real/fake task with disjoint seeded streams per split."""
    sizes = dict(DEFAULT_SIZES if sizes is None else sizes)
    for k in ("train", "val", "test"):
        if sizes.get(k, 0) < 2:
            raise ConfigError(f"split {k!r} needs at least 2 samples")
    splits = {}
    for which in ("train", "val", "test"):
        n = sizes[which]
        n_fake = n // 2
        n_real = n - n_fake
        reals = synth_real(n_real, _mix(seed, gen.seed, which, "real"), gen.noise_level)
        fakes = synth_fake(gen, n_fake, _mix(seed, gen.seed, which, "fake"))
        patches = np.concatenate([reals, fakes])
        labels = np.concatenate([np.zeros(n_real, np.int64), np.ones(n_fake, np.int64)])
        order = seeded_rng(_mix(seed, gen.seed, which, "shuffle")).permutation(n)
        splits[which] = Split(patches[order], labels[order])
    return TaskDataset(gen.name, splits["train"], splits["val"], splits["test"], provenance=gen)


def merge_tasks(tasks: list[TaskDataset], name: str | None = None) -> TaskDataset:
    """Union of several tasks as one macro task (splits concatenated, reshuffled)."""
    if not tasks:
        raise ConfigError("cannot merge an empty task list")
    name = name or "+".join(t.name for t in tasks)
    merged = {}
    for which in ("train", "val", "test"):
        patches = np.concatenate([t.split(which).patches for t in tasks])
        labels = np.concatenate([t.split(which).labels for t in tasks])
        order = seeded_rng(_mix("merge", name, which)).permutation(labels.shape[0])
        merged[which] = Split(patches[order], labels[order])
    return TaskDataset(name, merged["train"], merged["val"], merged["test"], provenance="merged")


def similarity(a: GeneratorSpec, b: GeneratorSpec) -> float:
    """Euclidean distance between amplitude-weighted fingerprint spectra.

    0 means identical generators; the score is symmetric and acts as the
    task-ordering pseudometric for grouping.
    """
    spectrum_a: dict[tuple[int, int], float] = {}
    spectrum_b: dict[tuple[int, int], float] = {}
    for spectrum, gen in ((spectrum_a, a), (spectrum_b, b)):
        for u, v, amp in gen.fingerprint:
            spectrum[(u, v)] = spectrum.get((u, v), 0.0) + amp
    keys = set(spectrum_a) | set(spectrum_b)
    return float(np.sqrt(sum((spectrum_a.get(k, 0.0) - spectrum_b.get(k, 0.0)) ** 2 for k in keys)))


def group_tasks(specs: list[GeneratorSpec], group_size: int, mode: str = "greedy") -> list[list[str]]:
    """Partition generator names into groups of the requested size.

    greedy: each group seeds on the first unassigned generator and pulls
    in its nearest remaining neighbours by fingerprint distance.
    paper_order: consecutive chunks in the given order (fixed partitions).
    The last group may be smaller.
    """
    if not specs:
        raise ConfigError("cannot group an empty generator list")
    if group_size < 1:
        raise ConfigError("group_size must be >= 1")
    if mode == "paper_order":
        names = [g.name for g in specs]
        return [names[i : i + group_size] for i in range(0, len(names), group_size)]
    if mode != "greedy":
        raise ConfigError(f"unknown grouping mode {mode!r}")
    remaining = list(range(len(specs)))
    groups = []
    while remaining:
        anchor = remaining.pop(0)
        dists = sorted(remaining, key=lambda j: (similarity(specs[anchor], specs[j]), j))
        members = sorted([anchor] + dists[: group_size - 1])
        for j in members[1:]:
            remaining.remove(j)
        groups.append([specs[j].name for j in members])
    return groups


# Preset catalog: two fingerprint families plus intentionally hard
# high-noise "unknown" sources. Family bases are shared so that generators
# in a family transfer to each other; specifics give each source identity.
_GAN_BASE = ((5, 2, 0.22), (2, 6, 0.16))
_CG_BASE = ((11, 4, 0.22), (6, 12, 0.16))
_SPECIFIC_AMP = 0.09


def _gan(name: str, spec_freq: tuple[int, int], seed: int) -> GeneratorSpec:
    return GeneratorSpec(name, "gan_like", _GAN_BASE + ((*spec_freq, _SPECIFIC_AMP),), 0.0, seed)


def _cg(name: str, spec_freq: tuple[int, int], seed: int) -> GeneratorSpec:
    return GeneratorSpec(name, "cg_like", _CG_BASE + ((*spec_freq, _SPECIFIC_AMP),), 0.0, seed)


_CATALOG = (
    _gan("gan-alpha", (7, 3), 101),
    _gan("gan-beta", (4, 7), 102),
    _gan("gan-gamma", (8, 2), 103),
    _cg("cg-alpha", (13, 7), 201),
    _cg("cg-beta", (8, 14), 202),
    _cg("cg-gamma", (14, 3), 203),
    GeneratorSpec("wild-alpha", "unknown_like", ((12, 9, 0.14), (7, 13, 0.10)), 0.9, 301),
    _cg("cg-delta", (10, 10), 204),
    _gan("gan-delta", (3, 9), 104),
    _gan("gan-epsilon", (9, 5), 105),
    GeneratorSpec("wild-beta", "unknown_like", ((13, 12, 0.14), (5, 15, 0.10)), 0.75, 302),
    _cg("cg-epsilon", (15, 6), 205),
)

PRESET_KINDS = ("easy_like", "long_like")


def preset_sequence(kind: str) -> tuple[list[GeneratorSpec], SequenceSpec]:
    """Fixed generator catalogs: 7-task easy_like, 12-task long_like."""
    if kind == "easy_like":
        specs = list(_CATALOG[:7])
    elif kind == "long_like":
        specs = list(_CATALOG)
    else:
        raise ConfigError(f"unknown preset {kind!r} (choose from {PRESET_KINDS})")
    return specs, SequenceSpec(tuple(g.name for g in specs))


# ---------------------------------------------------------------------------
# Manifest round-trip: a run is reproducible from the manifest JSON alone.
# ---------------------------------------------------------------------------

def catalog_to_manifest(specs: list[GeneratorSpec], sequence: SequenceSpec) -> dict:
    return {
        "format": "cldetect-manifest",
        "version": 1,
        "generators": [
            {
                "name": g.name,
                "family": g.family,
                "fingerprint": [[u, v, a] for u, v, a in g.fingerprint],
                "noise_level": g.noise_level,
                "seed": g.seed,
            }
            for g in specs
        ],
        "sequence": {
            "order": list(sequence.order),
            "grouping": None if sequence.grouping is None else [list(g) for g in sequence.grouping],
        },
    }


def manifest_to_catalog(manifest: dict) -> tuple[list[GeneratorSpec], SequenceSpec]:
    try:
        specs = [
            GeneratorSpec(
                g["name"],
                g["family"],
                tuple((u, v, a) for u, v, a in g["fingerprint"]),
                g.get("noise_level", 0.0),
                g.get("seed", 0),
            )
            for g in manifest["generators"]
        ]
        seq = manifest["sequence"]
        grouping = seq.get("grouping")
        sequence = SequenceSpec(
            tuple(seq["order"]),
            None if grouping is None else tuple(tuple(g) for g in grouping),
        )
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed manifest: {exc}") from exc
    known = {g.name for g in specs}
    missing = [n for n in sequence.order if n not in known]
    if missing:
        raise ConfigError(f"sequence references unknown generators: {missing}")
    return specs, sequence


def save_manifest(path, specs: list[GeneratorSpec], sequence: SequenceSpec) -> None:
    Path(path).write_text(
        json.dumps(catalog_to_manifest(specs, sequence), indent=2, sort_keys=True) + "\n"
    )


def load_manifest(path) -> tuple[list[GeneratorSpec], SequenceSpec]:
    try:
        manifest = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot load manifest {path}: {exc}") from exc
    return manifest_to_catalog(manifest)


# ---------------------------------------------------------------------------
# Directory ingestion (PGM layout) and materialization.
# ---------------------------------------------------------------------------

def _downscale_to_patch(img: np.ndarray) -> np.ndarray:
    """Center-crop to square, then area-average down to 32x32, rescale to [0,1]."""
    h, w = img.shape
    side = min(h, w)
    r0 = (h - side) // 2
    c0 = (w - side) // 2
    sq = img[r0 : r0 + side, c0 : c0 + side].astype(np.float64)
    edges = (np.arange(PATCH_SIDE + 1) * side) // PATCH_SIDE
    counts = np.diff(edges).astype(np.float64)
    rows = np.add.reduceat(sq, edges[:-1], axis=0) / counts[:, None]
    cells = np.add.reduceat(rows, edges[:-1], axis=1) / counts[None, :]
    return cells / 255.0


def load_directory(path) -> TaskDataset:
    """Ingest `<task>/{train,val,test}/{real,fake}/*.pgm` as an external task."""
    root = Path(path)
    if not root.is_dir():
        raise IngestionError(f"task directory not found: {root}")
    splits = {}
    for which in ("train", "val", "test"):
        split_dir = root / which
        if not split_dir.is_dir():
            raise IngestionError(f"missing split directory: {split_dir}")
        patches = []
        labels = []
        for cls, label in (("real", 0), ("fake", 1)):
            cls_dir = split_dir / cls
            if not cls_dir.is_dir():
                raise IngestionError(f"missing class directory: {cls_dir}")
            files = sorted(cls_dir.glob("*.pgm"))
            if not files:
                raise IngestionError(f"no PGM files in {cls_dir}")
            for f in files:
                img = read_pgm(f)
                if min(img.shape) < PATCH_SIDE:
                    raise IngestionError(f"{f}: image smaller than {PATCH_SIDE}x{PATCH_SIDE}")
                patches.append(_downscale_to_patch(img))
                labels.append(label)
        splits[which] = Split(np.stack(patches), np.asarray(labels, np.int64))
    return TaskDataset(root.name, splits["train"], splits["val"], splits["test"], provenance="external")


def save_task_directory(task: TaskDataset, out_dir) -> Path:
    """Materialize a task in the PGM directory layout (8-bit quantized)."""
    root = Path(out_dir) / task.name
    for which in ("train", "val", "test"):
        split = task.split(which)
        counters = {0: 0, 1: 0}
        for cls_dir in ("real", "fake"):
            (root / which / cls_dir).mkdir(parents=True, exist_ok=True)
        for patch, label in zip(split.patches, split.labels):
            cls = "fake" if label == 1 else "real"
            idx = counters[int(label)]
            counters[int(label)] += 1
            img = np.round(np.clip(patch, 0.0, 1.0) * 255.0).astype(np.uint8)
            write_pgm(root / which / cls / f"{cls}_{idx:05d}.pgm", img)
    return root


# Patch-to-input helpers shared by training, evaluation and serving.

def flatten_patches(patches: np.ndarray) -> np.ndarray:
    return np.asarray(patches, dtype=np.float64).reshape(patches.shape[0], -1)


def center_crop(patches: np.ndarray, side: int) -> np.ndarray:
    full = patches.shape[-1]
    off = (full - side) // 2
    return patches[..., off : off + side, off : off + side]


def random_crop(patches: np.ndarray, side: int, rng: np.random.Generator) -> np.ndarray:
    full = patches.shape[-1]
    out = np.empty((patches.shape[0], side, side))
    offs = rng.integers(0, full - side + 1, size=(patches.shape[0], 2))
    for i, (r, c) in enumerate(offs):
        out[i] = patches[i, r : r + side, c : c + side]
    return out
