"""Image loading/saving and seeded Gaussian noise.

PNG goes through Pillow; binary PGM (P5) and PPM (P6) are parsed here so that
8- and 16-bit files map exactly to v/255 and v/65535.

Noise uses a SplitMix64 counter stream fed through Box-Muller, so a given seed
reproduces the same samples in any implementation:

    z_k   = mix(seed + k * 0x9E3779B97F4A7C15)  (mod 2^64), k = 1, 2, ...
    u_k   = (z_k >> 11) * 2^-53
    for each pair (u_{2m-1}, u_{2m}):
        rad = sqrt(-2 ln(1 - u_{2m-1}))
        n_{2m-1} = rad * cos(2 pi u_{2m}),  n_{2m} = rad * sin(2 pi u_{2m})

where mix is the SplitMix64 finaliser. Samples are consumed in row-major
(row, column, channel) order.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .retinex import PlanarImage

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


class ImageFormatError(ValueError):
    pass


def _pnm_tokens(buf: bytes, count: int, pos: int):
    tokens = []
    while len(tokens) < count:
        while pos < len(buf) and buf[pos:pos + 1].isspace():
            pos += 1
        if buf[pos:pos + 1] == b"#":
            while pos < len(buf) and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(buf) and not buf[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ImageFormatError("truncated PNM header")
        tokens.append(buf[start:pos])
    return tokens, pos + 1  # exactly one whitespace byte before the raster


def read_pnm(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    magic = buf[:2]
    if magic not in (b"P5", b"P6"):
        raise ImageFormatError(f"unsupported PNM variant {magic!r} (only binary P5/P6)")
    (w, h, maxval), pos = _pnm_tokens(buf, 3, 2)
    w, h, maxval = int(w), int(h), int(maxval)
    ch = 1 if magic == b"P5" else 3
    if not 0 < maxval < 65536:
        raise ImageFormatError(f"bad PNM maxval {maxval}")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    need = w * h * ch * dtype.itemsize
    raster = buf[pos:pos + need]
    if len(raster) != need:
        raise ImageFormatError("truncated PNM raster")
    arr = np.frombuffer(raster, dtype=dtype).reshape(h, w, ch)
    return arr.astype(np.float64) / (65535.0 if maxval > 255 else 255.0)


def load_image(path) -> PlanarImage:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such image file: {path}")
    with open(path, "rb") as fh:
        head = fh.read(8)
    if head[:1] == b"P" and head[1:2] in b"123456":
        return PlanarImage(read_pnm(path))
    if head[:8] != b"\x89PNG\r\n\x1a\n":
        raise ImageFormatError(f"unsupported image format in {path.name} (expected PNG or binary PPM/PGM)")
    with Image.open(path) as im:
        mode = im.mode
        if mode in ("I;16", "I;16B", "I;16L", "I"):
            arr = np.asarray(im, dtype=np.float64) / 65535.0
        elif mode == "L":
            arr = np.asarray(im, dtype=np.float64) / 255.0
        elif mode == "RGB":
            arr = np.asarray(im, dtype=np.float64) / 255.0
        elif mode in ("RGBA", "LA", "P", "1", "CMYK", "YCbCr"):
            target = "L" if mode in ("LA", "1") else "RGB"
            arr = np.asarray(im.convert(target), dtype=np.float64) / 255.0
        else:
            raise ImageFormatError(f"unsupported PNG mode {mode}")
    return PlanarImage(arr)


def to_uint8(img: PlanarImage) -> np.ndarray:
    return np.round(np.clip(img.data, 0.0, 1.0) * 255.0).astype(np.uint8)


def save_image(img: PlanarImage, path) -> None:
    """Write an 8-bit PNG (or binary PGM/PPM when the suffix asks for it)."""
    path = Path(path)
    arr = to_uint8(img)
    if path.suffix.lower() in (".pgm", ".ppm"):
        magic = b"P5" if arr.shape[2] == 1 else b"P6"
        header = magic + f"\n{arr.shape[1]} {arr.shape[0]}\n255\n".encode()
        path.write_bytes(header + arr.tobytes())
        return
    pil = Image.fromarray(arr[:, :, 0] if arr.shape[2] == 1 else arr)
    pil.save(path, format="PNG")


def splitmix64(seed: int, count: int, start: int = 1) -> np.ndarray:
    """``count`` outputs of the SplitMix64 counter stream for ``seed``."""
    k = np.arange(start, start + count, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = np.uint64(seed & 0xFFFFFFFFFFFFFFFF) + k * GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def uniform_stream(seed: int, count: int) -> np.ndarray:
    return (splitmix64(seed, count) >> np.uint64(11)).astype(np.float64) * 2.0 ** -53


def gaussian_stream(seed: int, count: int) -> np.ndarray:
    pairs = (count + 1) // 2
    u = uniform_stream(seed, 2 * pairs)
    rad = np.sqrt(-2.0 * np.log1p(-u[0::2]))
    theta = 2.0 * np.pi * u[1::2]
    out = np.empty(2 * pairs)
    out[0::2] = rad * np.cos(theta)
    out[1::2] = rad * np.sin(theta)
    return out[:count]


def add_noise(img: PlanarImage, sigma: float, seed: int = 0) -> PlanarImage:
    if sigma < 0:
        raise ValueError("noise sigma must be non-negative")
    if sigma == 0:
        return PlanarImage(img.data.copy())
    z = gaussian_stream(seed, img.data.size).reshape(img.data.shape)
    return PlanarImage(np.clip(img.data + sigma * z, 0.0, 1.0))


def crop_to_multiple(img: PlanarImage, n: int) -> PlanarImage:
    h = img.height - img.height % n
    w = img.width - img.width % n
    if h == 0 or w == 0:
        raise ValueError(f"image {img.height}x{img.width} is smaller than one {n}x{n} patch")
    return PlanarImage(img.data[:h, :w].copy())
