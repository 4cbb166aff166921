"""Synthetic ambiguous-boundary images and simulated annotators.

A phantom is a smooth radially decaying blob with a little seeded noise;
an annotator is just an intensity threshold, so annotators with lower
thresholds produce strictly larger masks (the over/under-segmentation
preference axis).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import rle

NOISE_AMPLITUDE = 0.03  # well under the 0.05 bound


@dataclass(frozen=True)
class PhantomImage:
    intensities: np.ndarray  # (H, W) floats in [0, 1]
    blob_center: tuple[float, float]
    blob_scale: float

    def __post_init__(self):
        object.__setattr__(
            self, "intensities", np.asarray(self.intensities, dtype=float)
        )

    @property
    def height(self) -> int:
        return self.intensities.shape[0]

    @property
    def width(self) -> int:
        return self.intensities.shape[1]

    def to_dict(self) -> dict:
        return {
            "height": self.height,
            "width": self.width,
            "intensities": self.intensities.tolist(),
            "blob_center": list(self.blob_center),
            "blob_scale": self.blob_scale,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PhantomImage":
        img = cls(
            intensities=np.asarray(d["intensities"], dtype=float),
            blob_center=tuple(d["blob_center"]),
            blob_scale=float(d["blob_scale"]),
        )
        if img.intensities.shape != (d["height"], d["width"]):
            raise ValueError("declared size does not match intensity grid")
        return img


@dataclass(frozen=True)
class ClinicianProfile:
    """A simulated annotator: a boundary threshold and an approval bar."""

    id: int
    threshold: float
    approval_dice: float = 0.9

    def __post_init__(self):
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("threshold must lie in (0, 1)")
        if not 0.0 < self.approval_dice:
            raise ValueError("approval_dice must be positive")


@dataclass(frozen=True)
class AnnotationSet:
    image_id: str
    masks: dict[int, np.ndarray]  # clinician_id -> binary mask


def generate_phantom(seed: int, height: int, width: int) -> PhantomImage:
    """Seeded blob image: Gaussian radial falloff plus bounded noise."""
    if height < 8 or width < 8:
        raise ValueError("phantom must be at least 8x8")
    rng = np.random.default_rng(seed)
    cy = height / 2.0 + rng.uniform(-height / 10.0, height / 10.0)
    cx = width / 2.0 + rng.uniform(-width / 10.0, width / 10.0)
    scale = rng.uniform(0.22, 0.32) * min(height, width)
    yy, xx = np.mgrid[0:height, 0:width]
    r2 = (yy - cy) ** 2 + (xx - cx) ** 2
    base = np.exp(-0.5 * r2 / scale**2)
    noise = rng.uniform(-NOISE_AMPLITUDE, NOISE_AMPLITUDE, size=(height, width))
    img = np.clip(base + noise, 0.0, 1.0)
    return PhantomImage(intensities=img, blob_center=(cy, cx), blob_scale=scale)


def annotate(profile: ClinicianProfile, image: PhantomImage) -> np.ndarray:
    """Binary mask: foreground wherever intensity reaches the threshold."""
    return (image.intensities >= profile.threshold).astype(np.uint8)


def fuse_annotations(
    masks: list[np.ndarray], weights: np.ndarray | None = None
) -> np.ndarray:
    """Weighted per-pixel average binarized at 0.5; exact ties go foreground."""
    if len(masks) == 0:
        raise ValueError("need at least one mask")
    shape = masks[0].shape
    if any(m.shape != shape for m in masks):
        raise ValueError("mask shapes differ")
    if weights is None:
        weights = np.full(len(masks), 1.0 / len(masks))
    else:
        weights = np.asarray(weights, dtype=float)
        if weights.shape != (len(masks),) or abs(weights.sum() - 1.0) > 1e-9:
            raise ValueError("weights must be a simplex over the masks")
    avg = np.tensordot(weights, np.stack([m.astype(float) for m in masks]), axes=1)
    return (avg >= 0.5).astype(np.uint8)


def export_dataset(
    out_dir: str | Path,
    images: list[tuple[str, PhantomImage]],
    annotations: list[AnnotationSet],
) -> Path:
    """Write PNG images plus a JSON manifest with RLE-encoded annotations."""
    from PIL import Image

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest: dict = {"images": [], "annotations": []}
    for image_id, img in images:
        arr = np.round(img.intensities * 255.0).astype(np.uint8)
        Image.fromarray(arr, mode="L").save(out / f"{image_id}.png")
        entry = img.to_dict()
        del entry["intensities"]
        entry["id"] = image_id
        entry["file"] = f"{image_id}.png"
        manifest["images"].append(entry)
    for ann in annotations:
        manifest["annotations"].append(
            {
                "image_id": ann.image_id,
                "masks": {
                    str(cid): rle.encode(mask) for cid, mask in ann.masks.items()
                },
            }
        )
    with open(out / "manifest.json", "w") as f:
        json.dump(manifest, f)
    return out
