"""Binary netpbm (P5/P6) I/O, bilinear resizing and YUV conversion."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAXVAL = 255
_MAGIC = {1: b"P5", 3: b"P6"}


class ImageFormatError(ValueError):
    """Base class for unreadable image files."""


class UnsupportedMagicError(ImageFormatError):
    pass


class MaxvalError(ImageFormatError):
    pass


class HeaderError(ImageFormatError):
    pass


class TruncatedPayloadError(ImageFormatError):
    pass


@dataclass
class Image:
    """Float image in [0, 1]: ``H x W`` for gray, ``H x W x 3`` for RGB."""

    data: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.float64)
        if d.ndim == 3 and d.shape[2] == 1:
            d = d[:, :, 0]
        if d.ndim not in (2, 3) or (d.ndim == 3 and d.shape[2] != 3):
            raise ValueError(f"image data must be HxW or HxWx3, got shape {d.shape}")
        self.data = d

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return 1 if self.data.ndim == 2 else 3

    @property
    def size(self) -> tuple[int, int]:
        return self.width, self.height

    def to_bytes(self) -> bytes:
        return quantize8(self.data).tobytes()


def _array(img) -> np.ndarray:
    return img.data if isinstance(img, Image) else np.asarray(img, dtype=np.float64)


def quantize8(values) -> np.ndarray:
    """Round-half-up to 8 bits: ``floor(v * 255 + 0.5)`` clipped to [0, 255]."""
    v = np.floor(np.asarray(values, dtype=np.float64) * MAXVAL + 0.5)
    return np.clip(v, 0, MAXVAL).astype(np.uint8)


# -- netpbm ---------------------------------------------------------------------
def _header_tokens(buf: bytes, count: int) -> tuple[list[bytes], int]:
    """Read ``count`` whitespace-separated header tokens, skipping comments.

    Returns the tokens and the offset of the byte after the single
    whitespace character that ends the last token.
    """
    tokens, i, n = [], 0, len(buf)
    while len(tokens) < count:
        while i < n and buf[i:i + 1].isspace():
            i += 1
        if i < n and buf[i:i + 1] == b"#":
            while i < n and buf[i:i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        start = i
        while i < n and not buf[i:i + 1].isspace() and buf[i:i + 1] != b"#":
            i += 1
        if start == i:
            raise HeaderError("header ends early")
        tokens.append(buf[start:i])
    if i >= n:
        raise TruncatedPayloadError("no payload after header")
    return tokens, i + 1


def decode_netpbm(buf: bytes, channels: int, source: str = "<bytes>") -> Image:
    magic = buf[:2]
    if magic != _MAGIC[channels]:
        raise UnsupportedMagicError(
            f"{source}: unsupported magic {magic!r}, expected {_MAGIC[channels].decode()}")
    tokens, offset = _header_tokens(buf[2:], 3)
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError:
        raise HeaderError(f"{source}: non-numeric header field in {tokens}") from None
    if width < 1 or height < 1:
        raise HeaderError(f"{source}: bad dimensions {width}x{height}")
    if maxval != MAXVAL:
        raise MaxvalError(f"{source}: maxval {maxval} not supported (only 255)")
    need = width * height * channels
    payload = buf[2 + offset:2 + offset + need]
    if len(payload) < need:
        raise TruncatedPayloadError(
            f"{source}: payload has {len(payload)} bytes, expected {need}")
    pix = np.frombuffer(payload, dtype=np.uint8).astype(np.float64) / MAXVAL
    shape = (height, width) if channels == 1 else (height, width, 3)
    return Image(pix.reshape(shape))


def encode_netpbm(img: Image) -> bytes:
    header = b"%s\n%d %d\n%d\n" % (_MAGIC[img.channels], img.width, img.height, MAXVAL)
    return header + img.to_bytes()


def _load(path, channels: int) -> Image:
    path = Path(path)
    return decode_netpbm(path.read_bytes(), channels, str(path))


def _save(img, path, channels: int) -> None:
    img = img if isinstance(img, Image) else Image(img)
    if img.channels != channels:
        kind = "gray" if channels == 1 else "RGB"
        raise ValueError(f"expected a {kind} image, got {img.channels} channels")
    Path(path).write_bytes(encode_netpbm(img))


def load_pgm(path) -> Image:
    return _load(path, 1)


def save_pgm(img, path) -> None:
    _save(img, path, 1)


def load_ppm(path) -> Image:
    return _load(path, 3)


def save_ppm(img, path) -> None:
    _save(img, path, 3)


def load_image(path) -> Image:
    """Load P5 or P6 depending on the file's magic."""
    buf = Path(path).read_bytes()
    return decode_netpbm(buf, 3 if buf[:2] == b"P6" else 1, str(path))


def save_image(img, path) -> None:
    img = img if isinstance(img, Image) else Image(img)
    _save(img, path, img.channels)


# -- resampling -------------------------------------------------------------------
def _axis_weights(n_in: int, n_out: int):
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0, n_in - 1)
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, src - lo


def resize_bilinear(img, out_w: int, out_h: int):
    """Half-pixel-centre (align-corners false) bilinear resize.

    Returns the same kind of object it was given (:class:`Image` or array).
    """
    if out_w < 1 or out_h < 1:
        raise ValueError(f"target size must be at least 1x1, got {out_w}x{out_h}")
    a = _array(img)
    if a.shape[:2] != (out_h, out_w):
        r0, r1, fr = _axis_weights(a.shape[0], out_h)
        c0, c1, fc = _axis_weights(a.shape[1], out_w)
        fr = fr.reshape((-1,) + (1,) * (a.ndim - 1))
        rows = a[r0] * (1 - fr) + a[r1] * fr
        fc = fc.reshape((1, -1) + (1,) * (a.ndim - 2))
        a = rows[:, c0] * (1 - fc) + rows[:, c1] * fc
    else:
        a = a.copy()
    return Image(a) if isinstance(img, Image) else a


# -- colour ------------------------------------------------------------------------
KR, KG, KB = 0.299, 0.587, 0.114  # BT.601 luma weights


def rgb_to_yuv(rgb) -> tuple[Image, Image, Image]:
    """Full-range BT.601: Y in [0, 1], U and V centred on 0.5."""
    a = _array(rgb)
    if a.ndim != 3 or a.shape[2] != 3:
        raise ValueError(f"rgb_to_yuv needs 3 channels, got shape {a.shape}")
    r, g, b = a[..., 0], a[..., 1], a[..., 2]
    y = KR * r + KG * g + KB * b
    u = (b - y) / (2 * (1 - KB)) + 0.5
    v = (r - y) / (2 * (1 - KR)) + 0.5
    return Image(y), Image(u), Image(v)


def yuv_to_rgb(y, u, v, clamp: bool = True) -> Image:
    """Algebraic inverse of :func:`rgb_to_yuv`, clamped to [0, 1] by default."""
    y, u, v = _array(y), _array(u), _array(v)
    if not (y.shape == u.shape == v.shape):
        raise ValueError(f"Y/U/V sizes differ: {y.shape}, {u.shape}, {v.shape}")
    r = y + 2 * (1 - KR) * (v - 0.5)
    b = y + 2 * (1 - KB) * (u - 0.5)
    g = (y - KR * r - KB * b) / KG
    rgb = np.stack([r, g, b], axis=-1)
    return Image(np.clip(rgb, 0, 1) if clamp else rgb)
