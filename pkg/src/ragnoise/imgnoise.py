"""Document-image distortions that produce realistic degradation before OCR.

Eight distortion kinds, grouped by whether they preserve text clarity (weak:
background texture, binarization, small rotation, PSF blur) or degrade
readability (strong: salt-and-pepper, dirty rollers, warping, shadows), with
three per-page application modes. Images are HxWx3 uint8 RGB arrays; every
distortion preserves dimensions and is deterministic under its seed.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
from PIL import Image


class ImgNoiseError(ValueError):
    pass


class UnknownKind(ImgNoiseError):
    pass


class EmptyImage(ImgNoiseError):
    pass


class DistortionKind(str, Enum):
    BACKGROUND = "background"
    SALT_PEPPER = "salt_pepper"
    DIRTY_ROLLERS = "dirty_rollers"
    ROTATION = "rotation"
    BINARIZATION = "binarization"
    WARPING = "warping"
    SHADOWS = "shadows"
    PSF_BLUR = "psf_blur"


WEAK_KINDS = frozenset({
    DistortionKind.BACKGROUND,
    DistortionKind.BINARIZATION,
    DistortionKind.ROTATION,
    DistortionKind.PSF_BLUR,
})
STRONG_KINDS = frozenset({
    DistortionKind.SALT_PEPPER,
    DistortionKind.DIRTY_ROLLERS,
    DistortionKind.WARPING,
    DistortionKind.SHADOWS,
})

DEFAULT_PARAMS: dict[DistortionKind, dict] = {
    DistortionKind.BACKGROUND: {"blend": 0.2, "texture_count": 15},
    DistortionKind.SALT_PEPPER: {"ratio": 0.01},
    DistortionKind.DIRTY_ROLLERS: {"line_prob": 0.05, "min_thickness": 1, "max_thickness": 3},
    DistortionKind.ROTATION: {"max_degrees": 3.0},
    DistortionKind.BINARIZATION: {},
    DistortionKind.WARPING: {"amplitude": 3.0},
    DistortionKind.SHADOWS: {"min_factor": 0.6},
    DistortionKind.PSF_BLUR: {"kernel_count": 100, "kernel_size": 7},
}


class SeverityMode(str, Enum):
    ONE_WEAK = "one-weak"
    ONE_STRONG = "one-strong"
    TWO_RANDOM = "two-random"


@dataclass(frozen=True)
class DistortionSpec:
    kind: DistortionKind
    seed: int
    params: dict = field(default_factory=dict)

    @property
    def strength_class(self) -> str:
        return "weak" if self.kind in WEAK_KINDS else "strong"

    def param(self, name: str):
        if name in self.params:
            return self.params[name]
        return DEFAULT_PARAMS[self.kind][name]

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "seed": self.seed,
                "strength_class": self.strength_class, "params": dict(self.params)}


def derive_seed(*parts) -> int:
    digest = hashlib.sha256("|".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "big")


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def _check_image(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3 or image.shape[0] == 0 or image.shape[1] == 0:
        raise EmptyImage(f"expected non-empty HxWx3 image, got shape {image.shape}")
    return image.astype(np.uint8, copy=False)


# --- individual distortions --------------------------------------------------

_TEXTURE_BANK_SEED = 0x7E57_7E57


def paper_texture(height: int, width: int, texture_id: int) -> np.ndarray:
    """Procedural paper texture: warm base tone with low-frequency mottling
    and fine fiber noise. The bank is fixed; ``texture_id`` selects a sheet."""
    rng = _rng(derive_seed(_TEXTURE_BANK_SEED, texture_id))
    base = rng.uniform(208, 240)
    coarse = rng.normal(0.0, 1.0, (max(2, height // 48), max(2, width // 48)))
    pil = Image.fromarray(((coarse - coarse.min()) / (np.ptp(coarse) + 1e-9) * 255).astype(np.uint8))
    field = np.asarray(pil.resize((width, height), Image.BILINEAR), dtype=np.float64)
    field = (field - field.mean()) / 255.0
    fine = rng.normal(0.0, 2.5, (height, width))
    sheet = np.clip(base + 24.0 * field + fine, 170, 255)
    tint = rng.uniform(-4, 4, 3)
    return np.clip(sheet[:, :, None] + tint[None, None, :], 0, 255).astype(np.uint8)


def _background(image, spec, rng):
    h, w = image.shape[:2]
    texture_id = int(rng.integers(int(spec.param("texture_count"))))
    texture = paper_texture(h, w, texture_id)
    blend = float(spec.param("blend"))
    out = (1.0 - blend) * image.astype(np.float64) + blend * texture
    return np.clip(out, 0, 255).astype(np.uint8)


def _salt_pepper(image, spec, rng):
    h, w = image.shape[:2]
    n = int(h * w * float(spec.param("ratio")))
    if n == 0:
        return image.copy()
    flat = image.reshape(-1, 3).copy()
    positions = rng.choice(h * w, size=n, replace=False)
    values = rng.integers(0, 2, size=n).astype(np.uint8) * 255
    flat[positions] = values[:, None]
    return flat.reshape(h, w, 3)


def _dirty_rollers(image, spec, rng):
    h, w = image.shape[:2]
    prob = float(spec.param("line_prob"))
    t_lo = int(spec.param("min_thickness"))
    t_hi = int(spec.param("max_thickness"))
    out = image.astype(np.float64)
    for axis, size in ((0, h), (1, w)):
        coins = rng.random(size)
        for i in range(size):
            if coins[i] >= prob:
                continue
            thickness = int(rng.integers(t_lo, t_hi + 1))
            shade = float(rng.integers(0, 90))
            sl = slice(i, min(i + thickness, size))
            if axis == 0:
                out[sl, :, :] = 0.3 * out[sl, :, :] + 0.7 * shade
            else:
                out[:, sl, :] = 0.3 * out[:, sl, :] + 0.7 * shade
    return np.clip(out, 0, 255).astype(np.uint8)


def _rotation(image, spec, rng):
    if "degrees" in spec.params:
        degrees = float(spec.params["degrees"])
    else:
        limit = float(spec.param("max_degrees"))
        degrees = float(rng.uniform(-limit, limit))
    pil = Image.fromarray(image).rotate(
        degrees, resample=Image.BILINEAR, expand=False, fillcolor=(255, 255, 255))
    return np.asarray(pil, dtype=np.uint8)


def _binarization(image, spec, rng):
    threshold = float(spec.params.get("threshold", rng.integers(150, 200)))
    gray = image.mean(axis=2)
    binary = np.where(gray > threshold, 255.0, 0.0)
    # simplified morphological pass: grow (dilate) or thin (erode) dark strokes
    dilate_text = bool(rng.integers(0, 2))
    shifted = binary.copy()
    reducer = np.minimum if dilate_text else np.maximum
    shifted[1:, :] = reducer(shifted[1:, :], binary[:-1, :])
    shifted[:, 1:] = reducer(shifted[:, 1:], shifted[:, :-1])
    return np.repeat(shifted[:, :, None], 3, axis=2).astype(np.uint8)


def _warping(image, spec, rng):
    h, w = image.shape[:2]
    amp = float(spec.param("amplitude"))
    out = image.astype(np.float64)
    xs = np.arange(w, dtype=np.float64)
    ys = np.arange(h, dtype=np.float64)
    # horizontal sinusoidal shift per row, then vertical per column
    phase_r, phase_c = rng.uniform(0, 2 * math.pi, 2)
    wl_r = max(32.0, h / float(rng.uniform(1.5, 3.0)))
    wl_c = max(32.0, w / float(rng.uniform(1.5, 3.0)))
    dx = amp * np.sin(2 * math.pi * ys / wl_r + phase_r)
    dy = 0.6 * amp * np.sin(2 * math.pi * xs / wl_c + phase_c)
    warped = np.empty_like(out)
    for y in range(h):
        sample = xs - dx[y]
        for c in range(3):
            warped[y, :, c] = np.interp(sample, xs, out[y, :, c])
    final = np.empty_like(out)
    for x in range(w):
        sample = ys - dy[x]
        for c in range(3):
            final[:, x, c] = np.interp(sample, ys, warped[:, x, c])
    return np.clip(final, 0, 255).astype(np.uint8)


def _shadows(image, spec, rng):
    h, w = image.shape[:2]
    min_factor = float(spec.param("min_factor"))
    theta = float(rng.uniform(0, 2 * math.pi))
    ys, xs = np.mgrid[0:h, 0:w]
    proj = math.cos(theta) * xs / max(1, w - 1) + math.sin(theta) * ys / max(1, h - 1)
    proj = (proj - proj.min()) / (np.ptp(proj) + 1e-9)
    factor = 1.0 - (1.0 - min_factor) * proj
    out = image.astype(np.float64) * factor[:, :, None]
    return np.clip(out, 0, 255).astype(np.uint8)


_PSF_BANK_SEED = 0x9A5F
_psf_cache: dict[tuple, np.ndarray] = {}


def psf_bank(count: int = 100, size: int = 7, cache_dir: str | Path | None = None) -> np.ndarray:
    """Fixed bank of normalized point-spread-function kernels (motion lines
    and defocus disks), generated once from a constant seed and optionally
    cached to disk as .npz."""
    key = (count, size)
    if key in _psf_cache:
        return _psf_cache[key]
    cache_path = None
    if cache_dir is not None:
        cache_path = Path(cache_dir) / f"psf_{count}x{size}.npz"
        if cache_path.exists():
            bank = np.load(cache_path)["bank"]
            _psf_cache[key] = bank
            return bank
    rng = _rng(derive_seed(_PSF_BANK_SEED, count, size))
    kernels = []
    center = (size - 1) / 2.0
    ys, xs = np.mgrid[0:size, 0:size]
    for _ in range(count):
        kernel = np.zeros((size, size))
        if rng.random() < 0.5:  # motion blur line
            angle = rng.uniform(0, math.pi)
            length = rng.uniform(2.0, size - 1)
            steps = np.linspace(-length / 2, length / 2, 4 * size)
            px = np.clip(np.round(center + steps * math.cos(angle)).astype(int), 0, size - 1)
            py = np.clip(np.round(center + steps * math.sin(angle)).astype(int), 0, size - 1)
            kernel[py, px] = 1.0
        else:  # defocus disk
            radius = rng.uniform(1.0, (size - 1) / 2.0)
            kernel[(ys - center) ** 2 + (xs - center) ** 2 <= radius ** 2] = 1.0
        kernels.append(kernel / kernel.sum())
    bank = np.stack(kernels)
    _psf_cache[key] = bank
    if cache_path is not None:
        cache_path.parent.mkdir(parents=True, exist_ok=True)
        np.savez_compressed(cache_path, bank=bank)
    return bank


def _psf_blur(image, spec, rng):
    bank = psf_bank(int(spec.param("kernel_count")), int(spec.param("kernel_size")))
    kernel = bank[int(rng.integers(len(bank)))]
    kh, kw = kernel.shape
    ph, pw = kh // 2, kw // 2
    h, w = image.shape[:2]
    out = np.zeros((h, w, 3), dtype=np.float64)
    padded = np.pad(image.astype(np.float64), ((ph, ph), (pw, pw), (0, 0)), mode="edge")
    for i in range(kh):
        for j in range(kw):
            weight = kernel[i, j]
            if weight:
                out += weight * padded[i : i + h, j : j + w, :]
    return np.clip(out, 0, 255).astype(np.uint8)


_DISTORTIONS = {
    DistortionKind.BACKGROUND: _background,
    DistortionKind.SALT_PEPPER: _salt_pepper,
    DistortionKind.DIRTY_ROLLERS: _dirty_rollers,
    DistortionKind.ROTATION: _rotation,
    DistortionKind.BINARIZATION: _binarization,
    DistortionKind.WARPING: _warping,
    DistortionKind.SHADOWS: _shadows,
    DistortionKind.PSF_BLUR: _psf_blur,
}


def distort(image: np.ndarray, spec: DistortionSpec) -> np.ndarray:
    """Apply one distortion; output has the input's dimensions and the result
    is a pure function of (image, spec)."""
    image = _check_image(image)
    try:
        kind = DistortionKind(spec.kind)
    except ValueError:
        raise UnknownKind(f"unknown distortion kind {spec.kind!r}") from None
    out = _DISTORTIONS[kind](image, spec, _rng(spec.seed))
    assert out.shape == image.shape
    return out


def mode_kinds(mode: SeverityMode | str, seed: int) -> list[DistortionKind]:
    """The distortion kind(s) a severity mode draws for a given seed."""
    mode = SeverityMode(mode)
    rng = _rng(derive_seed(seed, "mode", mode.value))
    if mode is SeverityMode.ONE_WEAK:
        pool = sorted(WEAK_KINDS)
        return [pool[int(rng.integers(len(pool)))]]
    if mode is SeverityMode.ONE_STRONG:
        pool = sorted(STRONG_KINDS)
        return [pool[int(rng.integers(len(pool)))]]
    pool = sorted(DistortionKind)
    picks = rng.choice(len(pool), size=2, replace=False)
    return [pool[int(i)] for i in picks]


def apply_mode(
    image: np.ndarray, mode: SeverityMode | str, seed: int
) -> tuple[np.ndarray, list[DistortionSpec]]:
    """Draw distortion(s) for one page according to the severity mode and
    apply them; returns the distorted image plus the applied specs."""
    kinds = mode_kinds(mode, seed)
    specs = [
        DistortionSpec(kind=kind, seed=derive_seed(seed, i, kind.value))
        for i, kind in enumerate(kinds)
    ]
    out = image
    for spec in specs:
        out = distort(out, spec)
    return out, specs


def load_image(path: str | Path) -> np.ndarray:
    return np.asarray(Image.open(path).convert("RGB"), dtype=np.uint8)


def save_image(image: np.ndarray, path: str | Path) -> None:
    Image.fromarray(_check_image(image)).save(path)
