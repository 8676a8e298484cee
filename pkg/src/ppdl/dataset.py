"""Folder-of-class-folders ingestion, stratified splitting, manifests and
plain/encrypted materialisation.

Manifest file (UTF-8 JSON lines, compact separators, fixed key order): the
first line is the header

    {"format":"ppdl-manifest","version":1,"classes":[...],"seed":S,
     "ratios":[train,val,test],"rounding":"largest-remainder","encryption":E}

where ``E`` is null or ``{"mode":..., "key_fingerprint":..., "seed":...}``,
followed by one line per image

    {"path":...,"label":...,"split":...,"source":...}

``path`` is relative to the dataset root the manifest describes; ``source``
is the path in the original ingested dataset and never changes across
materialisations.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path, PurePosixPath

import numpy as np
from PIL import Image

from .errors import BadRatios, DataError, EmptyClass, ManifestError
from .imaging import (
    CIPHER_SUFFIX,
    IMAGE_SUFFIXES,
    ImageTensor,
    build_substitution_table,
    cipher_image_to_view,
    encrypt_image_deterministic,
    encrypt_image_randomized,
    load_pixels,
    probe_image,
    read_image,
    write_cipher_image,
    write_image,
)
from .paillier import PublicKey
from .rng import SplitMix64

MANIFEST_NAME = "manifest.jsonl"
MANIFEST_VERSION = 1
SPLITS = ("train", "val", "test")
DEFAULT_RATIOS = (0.8, 0.1, 0.1)
MODES = ("plain", "deterministic", "randomized")


@dataclass(frozen=True)
class Entry:
    path: str
    label: str
    split: str
    source: str


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple[Entry, ...]
    classes: tuple[str, ...]
    seed: int
    ratios: tuple[float, float, float] = DEFAULT_RATIOS
    encryption: dict | None = None
    rounding: str = field(default="largest-remainder")

    def __post_init__(self):
        known = set(self.classes)
        seen = set()
        for e in self.entries:
            if e.label not in known:
                raise ManifestError(f"entry label {e.label!r} is not a declared class", e.path)
            if e.split not in SPLITS:
                raise ManifestError(f"unknown split {e.split!r}", e.path)
            if e.path in seen:
                raise ManifestError("duplicate entry", e.path)
            seen.add(e.path)

    def split_entries(self, split: str) -> list[Entry]:
        return [e for e in self.entries if e.split == split]

    def label_index(self, label: str) -> int:
        return self.classes.index(label)

    def counts(self) -> dict[str, dict[str, int]]:
        out = {c: {s: 0 for s in SPLITS} for c in self.classes}
        for e in self.entries:
            out[e.label][e.split] += 1
        return out

    def source_map(self) -> dict[str, tuple[str, str]]:
        return {e.source: (e.split, e.label) for e in self.entries}

    def to_bytes(self) -> bytes:
        header = {
            "format": "ppdl-manifest",
            "version": MANIFEST_VERSION,
            "classes": list(self.classes),
            "seed": self.seed,
            "ratios": list(self.ratios),
            "rounding": self.rounding,
            "encryption": self.encryption,
        }
        lines = [_dumps(header)]
        lines += [
            _dumps({"path": e.path, "label": e.label, "split": e.split, "source": e.source})
            for e in self.entries
        ]
        return ("\n".join(lines) + "\n").encode("utf-8")

    @classmethod
    def from_bytes(cls, data: bytes, path=None) -> "DatasetManifest":
        try:
            lines = data.decode("utf-8").splitlines()
            header = json.loads(lines[0])
            if header.get("format") != "ppdl-manifest":
                raise ValueError("not a ppdl manifest")
            if header.get("version") != MANIFEST_VERSION:
                raise ValueError(f"unsupported manifest version {header.get('version')}")
            entries = []
            for line in lines[1:]:
                rec = json.loads(line)
                entries.append(Entry(rec["path"], rec["label"], rec["split"], rec["source"]))
            return cls(
                tuple(entries),
                tuple(header["classes"]),
                int(header["seed"]),
                tuple(header["ratios"]),
                header["encryption"],
                header["rounding"],
            )
        except (IndexError, KeyError, TypeError, ValueError) as e:
            raise ManifestError(f"malformed manifest ({e})", path) from e

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        path = Path(path)
        try:
            data = path.read_bytes()
        except OSError as e:
            raise ManifestError(f"cannot read manifest ({e.strerror})", path) from e
        return cls.from_bytes(data, path)


def _dumps(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=False)


# -- ingestion and splitting -------------------------------------------------


def ingest(root, verify: bool = True) -> dict[str, list[str]]:
    """Map each class (immediate subdirectory, sorted) to its sorted image paths.

    Paths are POSIX-style and relative to ``root``.  Hidden entries and
    files with unknown suffixes are ignored.
    """
    root = Path(root)
    if not root.is_dir():
        raise DataError("dataset root is not a directory", root)
    classes = sorted(
        d.name for d in root.iterdir() if d.is_dir() and not d.name.startswith(".")
    )
    if not classes:
        raise EmptyClass("dataset root contains no class directories", root)
    out = {}
    for c in classes:
        files = sorted(
            f.name
            for f in (root / c).iterdir()
            if f.is_file() and not f.name.startswith(".") and f.suffix.lower() in IMAGE_SUFFIXES
        )
        if not files:
            raise EmptyClass("class directory contains no images", root / c)
        if verify:
            for f in files:
                probe_image(root / c / f)
        out[c] = [f"{c}/{f}" for f in files]
    return out


def split_sizes(n: int, ratios) -> tuple[int, ...]:
    """Apportion ``n`` items by largest remainder.

    Each split first gets ``floor(ratio * n)``; the leftover items go to the
    splits with the largest fractional parts, ties going to the later split.
    Ratios are converted through their decimal string so ``0.1`` means 1/10.
    """
    fr = [Fraction(str(r)) for r in ratios]
    quotas = [f * n for f in fr]
    sizes = [q.numerator // q.denominator for q in quotas]
    rest = n - sum(sizes)
    order = sorted(range(len(fr)), key=lambda i: (quotas[i] - sizes[i], i), reverse=True)
    for i in order[:rest]:
        sizes[i] += 1
    return tuple(sizes)


def _check_ratios(ratios) -> tuple[float, float, float]:
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise BadRatios(f"ratios must be three non-negative fractions summing to 1, got {ratios}")
    return ratios


def split(per_class: dict[str, list[str]], ratios=DEFAULT_RATIOS, seed: int = 0) -> DatasetManifest:
    """Stratified seeded split.

    Classes are processed in sorted order with one SplitMix64 stream; each
    class list is Fisher-Yates shuffled and cut into train/val/test.
    Entries are listed in class order, then original file order.
    """
    ratios = _check_ratios(ratios)
    rng = SplitMix64(seed)
    entries = []
    for c in sorted(per_class):
        files = list(per_class[c])
        if not files:
            raise EmptyClass("class has no files", c)
        n_train, n_val, _ = split_sizes(len(files), ratios)
        order = list(range(len(files)))
        rng.shuffle(order)
        assign = {}
        for pos, i in enumerate(order):
            assign[i] = "train" if pos < n_train else "val" if pos < n_train + n_val else "test"
        entries += [Entry(f, c, assign[i], f) for i, f in enumerate(files)]
    return DatasetManifest(tuple(entries), tuple(sorted(per_class)), seed, ratios)


# -- materialisation ---------------------------------------------------------


def _output_name(entry: Entry, suffix: str) -> str:
    p = PurePosixPath(entry.source)
    return str(PurePosixPath(entry.split) / entry.label / (p.stem + suffix))


def _encrypt_one(job):
    src, dst, mode, payload, view_dst = job
    img = read_image(src)
    if mode == "plain":
        write_image(img, dst)
    elif mode == "deterministic":
        write_image(encrypt_image_deterministic(img, payload), dst)
    else:
        pk, seed, source = payload
        rng = SplitMix64.derive("pixel-r", pk.fingerprint, seed, source)
        ci = encrypt_image_randomized(img, pk, rng)
        write_cipher_image(ci, dst)
        if view_dst is not None:
            write_image(cipher_image_to_view(ci), view_dst)
    return dst


def materialize(
    manifest: DatasetManifest,
    src_root,
    out,
    mode: str = "plain",
    pk: PublicKey | None = None,
    seed: int = 0,
    emit_view: bool = False,
    workers: int = 1,
) -> DatasetManifest:
    """Write ``out/<split>/<class>/<file>`` plus ``out/manifest.jsonl``.

    ``plain`` and ``deterministic`` write PNGs; ``randomized`` writes
    cipher-image files (``.pci``) and, with ``emit_view``, low-byte PNG
    previews under ``out/view/``.  ``seed`` is the substitution-table seed or
    the randomizer seed.  Split assignment is copied unchanged.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    if mode != "plain" and pk is None:
        raise ValueError(f"{mode} mode needs a public key")
    src_root, out = Path(src_root), Path(out)

    if mode == "deterministic":
        table = build_substitution_table(pk, seed)
        encryption = {"mode": mode, "key_fingerprint": pk.fingerprint, "seed": seed}
    elif mode == "randomized":
        encryption = {"mode": mode, "key_fingerprint": pk.fingerprint, "seed": seed}
    else:
        encryption = None

    suffix = CIPHER_SUFFIX if mode == "randomized" else ".png"
    jobs, new_entries, taken = [], [], set()
    for e in manifest.entries:
        rel = _output_name(e, suffix)
        if rel in taken:
            raise DataError("two source files map to the same output name", rel)
        taken.add(rel)
        dst = out / rel
        dst.parent.mkdir(parents=True, exist_ok=True)
        view_dst = None
        if mode == "randomized" and emit_view:
            view_dst = out / "view" / _output_name(e, ".png")
            view_dst.parent.mkdir(parents=True, exist_ok=True)
        payload = table if mode == "deterministic" else (pk, seed, e.source) if mode == "randomized" else None
        jobs.append((src_root / e.path, dst, mode, payload, view_dst))
        new_entries.append(replace(e, path=rel))

    try:
        if workers > 1:
            with ProcessPoolExecutor(workers) as ex:
                list(ex.map(_encrypt_one, jobs, chunksize=8))
        else:
            for job in jobs:
                _encrypt_one(job)
    except OSError as e:
        raise DataError(f"I/O failure ({e.strerror})", e.filename) from e

    result = replace(manifest, entries=tuple(new_entries), encryption=encryption)
    result.save(out / MANIFEST_NAME)
    return result


# -- loading for the learner -------------------------------------------------


def to_input(img: ImageTensor, size: int, channels: int = 1) -> np.ndarray:
    """``(channels, size, size)`` float array in [0, 1].

    Resizing is nearest-neighbour so every input value is an actual pixel
    value (substituted intensities are never blended).
    """
    px = img.pixels
    if px.shape[2] != channels:
        if channels == 1:
            px = np.asarray(Image.fromarray(px).convert("L"))[:, :, None]
        else:
            px = np.repeat(px, 3, axis=2)
    if px.shape[0] != size or px.shape[1] != size:
        mode_arr = px[:, :, 0] if channels == 1 else px
        px = np.asarray(Image.fromarray(mode_arr).resize((size, size), Image.Resampling.NEAREST))
        if px.ndim == 2:
            px = px[:, :, None]
    return px.transpose(2, 0, 1).astype(np.float64) / 255.0


def load_split(manifest: DatasetManifest, root, split_name: str, size: int, channels: int = 1):
    """Stack one split as ``(x, y)``; labels index ``manifest.classes``."""
    root = Path(root)
    entries = manifest.split_entries(split_name)
    x = np.zeros((len(entries), channels, size, size))
    y = np.zeros(len(entries), dtype=np.int64)
    for i, e in enumerate(entries):
        p = root / e.path
        if not p.exists():
            raise DataError("image listed in manifest is missing", p)
        x[i] = to_input(load_pixels(p), size, channels)
        y[i] = manifest.label_index(e.label)
    return x, y


def default_workers() -> int:
    return max(1, min(4, os.cpu_count() or 1))
