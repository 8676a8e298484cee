"""8-bit images, image file I/O and Paillier-based image encryption.

Two encryption modes are offered:

deterministic
    One randomizer ``r`` is derived from the key fingerprint and a seed.
    The 256 ciphertexts ``E(v, r)`` for ``v = 0..255`` are sorted and each
    pixel value is replaced by the rank of its ciphertext.  The result is a
    key-dependent permutation of intensities, so encrypted images are still
    ordinary 8-bit images a classifier can train on.  Equal pixels map to
    equal pixels: this is a substitution cipher and leaks the histogram
    shape and spatial structure.  It must not be treated as semantically
    secure.

randomized
    Every pixel is encrypted independently with a fresh ``r``.  This is
    semantically secure; ciphertexts carry no usable signal for a
    classifier, which ``cipher_image_to_view`` makes visible.

Cipher-image file layout (ASCII)::

    PPDLCIPHER 1
    <width> <height> <channels> <key fingerprint>
    <hex length> <hex ciphertext>        # width*height*channels lines, row-major
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import gmpy2
import numpy as np
from PIL import Image

from .errors import BadImage, ImageFormatError, KeyMismatch, ModulusTooSmall
from .paillier import Ciphertext, PrivateKey, PublicKey, decrypt, draw_randomizer, encrypt
from .rng import SplitMix64

CIPHER_MAGIC = "PPDLCIPHER"
CIPHER_VERSION = 1
PNM_SUFFIXES = {".pgm", ".ppm", ".pnm"}
IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff"} | PNM_SUFFIXES
CIPHER_SUFFIX = ".pci"


@dataclass(frozen=True, eq=False)
class ImageTensor:
    """Row-major 8-bit image stored as a ``(height, width, channels)`` array."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim == 2:
            px = px[:, :, None]
        if px.ndim != 3 or px.shape[2] not in (1, 3):
            raise ImageFormatError(f"expected (H, W, 1|3) pixels, got shape {px.shape}")
        if px.dtype != np.uint8:
            if px.size and (px.min() < 0 or px.max() > 255):
                raise ImageFormatError("intensities must lie in [0, 255]")
            px = px.astype(np.uint8)
        px = np.ascontiguousarray(px)
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    def __eq__(self, other):
        if not isinstance(other, ImageTensor):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and bool(
            np.array_equal(self.pixels, other.pixels)
        )

    def flat(self) -> np.ndarray:
        return self.pixels.reshape(-1)


# -- file I/O ----------------------------------------------------------------


def _read_pnm(data: bytes, path) -> ImageTensor:
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise BadImage("truncated PNM header", path)
        tokens.append(data[start:pos])
    pos += 1  # single whitespace before raster
    magic = tokens[0]
    if magic not in (b"P5", b"P6"):
        raise BadImage(f"unsupported PNM type {magic!r}", path)
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise BadImage("malformed PNM header", path) from None
    if maxval != 255:
        raise BadImage("only 8-bit PNM (maxval 255) is supported", path)
    c = 1 if magic == b"P5" else 3
    raster = data[pos : pos + w * h * c]
    if len(raster) != w * h * c:
        raise BadImage("truncated PNM raster", path)
    return ImageTensor(np.frombuffer(raster, dtype=np.uint8).reshape(h, w, c))


def _write_pnm(img: ImageTensor) -> bytes:
    magic = b"P5" if img.channels == 1 else b"P6"
    return magic + f"\n{img.width} {img.height}\n255\n".encode() + img.pixels.tobytes()


def read_image(path) -> ImageTensor:
    """Load an 8-bit grayscale or RGB image (PNG via Pillow, PGM/PPM natively)."""
    path = Path(path)
    try:
        if path.suffix.lower() in PNM_SUFFIXES:
            return _read_pnm(path.read_bytes(), path)
        with Image.open(path) as im:
            im.load()
            if im.mode in ("1", "L", "LA"):
                arr = np.asarray(im.convert("L"))
            elif im.mode in ("P", "RGB", "RGBA"):
                arr = np.asarray(im.convert("RGB"))
                if im.mode == "P" and (arr == arr[:, :, :1]).all():
                    arr = arr[:, :, 0]
            else:
                raise BadImage(f"unsupported image mode {im.mode!r}", path)
    except BadImage:
        raise
    except (OSError, ValueError, SyntaxError) as e:
        raise BadImage(f"cannot read image ({e})", path) from e
    return ImageTensor(arr)


def probe_image(path) -> None:
    """Cheap header check; raises BadImage when the file cannot be decoded."""
    path = Path(path)
    if path.suffix.lower() in PNM_SUFFIXES:
        read_image(path)
        return
    try:
        with Image.open(path) as im:
            im.verify()
    except (OSError, ValueError, SyntaxError) as e:
        raise BadImage(f"cannot read image ({e})", path) from e


def write_image(img: ImageTensor, path) -> None:
    """Write PNG, or binary PGM/PPM when the suffix asks for it."""
    path = Path(path)
    if path.suffix.lower() in PNM_SUFFIXES:
        path.write_bytes(_write_pnm(img))
        return
    arr = img.pixels[:, :, 0] if img.channels == 1 else img.pixels
    Image.fromarray(arr).save(path, format="PNG")


# -- deterministic substitution ----------------------------------------------


@dataclass(frozen=True)
class SubstitutionTable:
    table: tuple[int, ...]
    key_fingerprint: str
    seed: int
    array: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if sorted(self.table) != list(range(len(self.table))):
            raise ValueError("substitution table must be a permutation")
        arr = np.asarray(self.table, dtype=np.uint8 if len(self.table) <= 256 else np.int64)
        arr.setflags(write=False)
        object.__setattr__(self, "array", arr)

    def inverse(self) -> "SubstitutionTable":
        inv = [0] * len(self.table)
        for v, t in enumerate(self.table):
            inv[t] = v
        return SubstitutionTable(tuple(inv), self.key_fingerprint, self.seed)


def derive_table_randomizer(pk: PublicKey, seed: int) -> int:
    return draw_randomizer(pk, SplitMix64.derive("substitution-r", pk.fingerprint, seed))


def build_substitution_table(pk: PublicKey, seed: int, levels: int = 256) -> SubstitutionTable:
    """Rank-based pixel bijection from fixed-randomizer Paillier ciphertexts.

    ``table[v]`` is the position of ``E(v, r)`` among the ``levels``
    ciphertexts sorted ascending.  Encryption under a fixed ``r`` is
    injective in the message, so the ranks form a permutation.
    """
    if pk.n < levels:
        raise ModulusTooSmall(f"modulus n={pk.n} cannot encode {levels} pixel levels")
    r = derive_table_randomizer(pk, seed)
    values = [encrypt(pk, v, r).value for v in range(levels)]
    order = sorted(range(levels), key=values.__getitem__)
    table = [0] * levels
    for rank, v in enumerate(order):
        table[v] = rank
    return SubstitutionTable(tuple(table), pk.fingerprint, seed)


def encrypt_image_deterministic(img: ImageTensor, table: SubstitutionTable) -> ImageTensor:
    return ImageTensor(table.array[img.pixels])


def decrypt_image_deterministic(img: ImageTensor, table: SubstitutionTable) -> ImageTensor:
    return ImageTensor(table.inverse().array[img.pixels])


# -- randomized per-pixel encryption -------------------------------------------


@dataclass(frozen=True, eq=False)
class RandomizedCipherImage:
    width: int
    height: int
    channels: int
    values: tuple[int, ...]
    key_fingerprint: str

    def __post_init__(self):
        if len(self.values) != self.width * self.height * self.channels:
            raise ImageFormatError("ciphertext count does not match image dimensions")

    @property
    def ciphertexts(self) -> list[Ciphertext]:
        return [Ciphertext(v, self.key_fingerprint) for v in self.values]

    def __eq__(self, other):
        if not isinstance(other, RandomizedCipherImage):
            return NotImplemented
        return (
            (self.width, self.height, self.channels, self.key_fingerprint)
            == (other.width, other.height, other.channels, other.key_fingerprint)
            and self.values == other.values
        )


def encrypt_image_randomized(img: ImageTensor, pk: PublicKey, rng) -> RandomizedCipherImage:
    """Encrypt every pixel under its own randomizer drawn from ``rng``."""
    if pk.n < 256:
        raise ModulusTooSmall(f"modulus n={pk.n} cannot encode 256 pixel levels")
    n2 = gmpy2.mpz(pk.n_squared)
    nm = gmpy2.mpz(pk.n)
    g_m = [pk.g_pow(v) for v in range(256)]
    out = []
    for v in img.flat().tolist():
        r = draw_randomizer(pk, rng)
        out.append(int(g_m[v] * gmpy2.powmod(r, nm, n2) % n2))
    return RandomizedCipherImage(img.width, img.height, img.channels, tuple(out), pk.fingerprint)


def decrypt_cipher_image(ci: RandomizedCipherImage, pk: PublicKey, sk: PrivateKey) -> ImageTensor:
    if ci.key_fingerprint != pk.fingerprint:
        raise KeyMismatch("cipher image was produced under a different key")
    flat = [decrypt(sk, pk, c) for c in ci.ciphertexts]
    return ImageTensor(np.array(flat, dtype=np.uint8).reshape(ci.height, ci.width, ci.channels))


def cipher_image_to_view(ci: RandomizedCipherImage) -> ImageTensor:
    """Low-order byte of every ciphertext, for display or as learner input."""
    flat = np.fromiter((v & 0xFF for v in ci.values), dtype=np.uint8, count=len(ci.values))
    return ImageTensor(flat.reshape(ci.height, ci.width, ci.channels))


def serialize_cipher_image(ci: RandomizedCipherImage) -> bytes:
    lines = [
        f"{CIPHER_MAGIC} {CIPHER_VERSION}",
        f"{ci.width} {ci.height} {ci.channels} {ci.key_fingerprint}",
    ]
    for v in ci.values:
        h = format(v, "x")
        lines.append(f"{len(h)} {h}")
    return ("\n".join(lines) + "\n").encode("ascii")


def deserialize_cipher_image(data: bytes, path=None) -> RandomizedCipherImage:
    try:
        lines = data.decode("ascii").split("\n")
        if lines[-1] != "":
            raise ValueError("missing trailing newline")
        magic, version = lines[0].split(" ")
        if magic != CIPHER_MAGIC:
            raise ValueError("bad magic")
        if int(version) != CIPHER_VERSION:
            raise ValueError(f"unsupported version {version}")
        w, h, c, fp = lines[1].split(" ")
        w, h, c = int(w), int(h), int(c)
        body = lines[2:-1]
        if len(body) != w * h * c:
            raise ValueError("ciphertext count does not match header")
        values = []
        for line in body:
            length, hx = line.split(" ")
            if int(length) != len(hx):
                raise ValueError("length prefix does not match ciphertext")
            values.append(int(hx, 16))
    except (UnicodeDecodeError, ValueError) as e:
        raise BadImage(f"malformed cipher image ({e})", path) from e
    return RandomizedCipherImage(w, h, c, tuple(values), fp)


def read_cipher_image(path) -> RandomizedCipherImage:
    path = Path(path)
    return deserialize_cipher_image(path.read_bytes(), path)


def write_cipher_image(ci: RandomizedCipherImage, path) -> None:
    Path(path).write_bytes(serialize_cipher_image(ci))


def load_pixels(path) -> ImageTensor:
    """Image for a learner: cipher-image files yield their low-byte view."""
    path = Path(path)
    if path.suffix == CIPHER_SUFFIX:
        return cipher_image_to_view(read_cipher_image(path))
    return read_image(path)
