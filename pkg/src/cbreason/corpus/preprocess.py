"""Image preprocessing: ROI cropping, resizing to the model input size, augmentation."""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Optional

from PIL import Image

INPUT_SIZE = 224


class RoiBoundsError(ValueError):
    """Raised when a requested ROI falls outside the image."""


@dataclass(frozen=True)
class AugmentConfig:
    """Ranges for the training-time transforms: translation, rotation, horizontal flip."""

    max_translate_frac: float = 0.10
    max_rotate_deg: float = 15.0
    flip_prob: float = 0.5


def crop_and_resize(image: Image.Image, roi: Optional[tuple[int, int, int, int]] = None) -> Image.Image:
    """Crop to an optional (left, top, right, bottom) ROI and resize to 224x224.

    Bounds checking is strict: an ROI outside the frame is an annotation bug
    and raises rather than being clamped.
    """
    width, height = image.size
    if roi is not None:
        left, top, right, bottom = roi
        if left < 0 or top < 0 or right > width or bottom > height:
            raise RoiBoundsError(
                f"roi {roi} outside image bounds {width}x{height}"
            )
        if right <= left or bottom <= top:
            raise RoiBoundsError(f"roi {roi} has non-positive extent")
        image = image.crop((left, top, right, bottom))
    if image.size == (INPUT_SIZE, INPUT_SIZE):
        return image.copy()
    return image.resize((INPUT_SIZE, INPUT_SIZE), Image.Resampling.BILINEAR)


def augment(image: Image.Image, seed: int, config: AugmentConfig = AugmentConfig()) -> Image.Image:
    """Apply a seeded translation + rotation + horizontal flip.

    Deterministic for a fixed seed. With all ranges zero the input pixels are
    returned unchanged; the flip (an exact involution) is applied last.
    """
    if image.size != (INPUT_SIZE, INPUT_SIZE):
        raise ValueError(f"augment expects a {INPUT_SIZE}x{INPUT_SIZE} image, got {image.size}")
    rng = random.Random(seed)
    t = config.max_translate_frac
    tx = rng.uniform(-t, t) * image.size[0] if t > 0 else 0.0
    ty = rng.uniform(-t, t) * image.size[1] if t > 0 else 0.0
    angle = rng.uniform(-config.max_rotate_deg, config.max_rotate_deg) if config.max_rotate_deg > 0 else 0.0
    do_flip = config.flip_prob > 0 and rng.random() < config.flip_prob
    out = image
    if angle != 0.0 or tx != 0.0 or ty != 0.0:
        out = out.rotate(
            angle,
            translate=(int(round(tx)), int(round(ty))),
            resample=Image.Resampling.BILINEAR,
            fillcolor=0,
        )
    if do_flip:
        out = out.transpose(Image.Transpose.FLIP_LEFT_RIGHT)
    return out.copy() if out is image else out
