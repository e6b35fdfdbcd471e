"""End-to-end embed/verify orchestration over pluggable backends.

The stub diffusion backend treats an "image" as the serialized latent itself, and
the stub extractor reads descriptors from a sidecar file. Real diffusion models and
vision-language extractors plug in behind :class:`DiffusionBackend` and
:class:`SemanticExtractor`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import numpy as np

from slicewm import slce
from slicewm.core import DescriptorSet, LatentGrid, PartitionLayout, SecretKey
from slicewm.detection import ThresholdSet, VerificationReport, verify
from slicewm.synthesis import synthesize_latent

PAYLOAD_NAME = "payload.slce"
META_NAME = "meta.txt"
SIDECAR_NAME = "descriptors.json"


class BundleError(ValueError):
    pass


@dataclass(frozen=True)
class ImageBundle:
    payload: bytes
    prompt: str = ""
    descriptors: DescriptorSet | None = None

    def with_descriptors(self, descriptors: DescriptorSet | None) -> ImageBundle:
        return ImageBundle(self.payload, self.prompt, descriptors)

    def save(self, directory: str | Path) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        (directory / PAYLOAD_NAME).write_bytes(self.payload)
        (directory / META_NAME).write_text(self.prompt, encoding="utf-8")
        sidecar = directory / SIDECAR_NAME
        if self.descriptors is not None:
            write_descriptors(self.descriptors, sidecar)
        elif sidecar.exists():
            sidecar.unlink()
        return directory

    @classmethod
    def load(cls, directory: str | Path) -> ImageBundle:
        directory = Path(directory)
        payload_path = directory / PAYLOAD_NAME
        if not payload_path.is_file():
            raise BundleError(f"bundle {directory} has no {PAYLOAD_NAME}")
        meta = directory / META_NAME
        prompt = meta.read_text(encoding="utf-8") if meta.exists() else ""
        sidecar = directory / SIDECAR_NAME
        descriptors = read_descriptors(sidecar) if sidecar.exists() else None
        return cls(payload_path.read_bytes(), prompt, descriptors)


def parse_descriptors(text: str) -> DescriptorSet:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise BundleError(f"descriptor file is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise BundleError("descriptor file must hold a JSON object")
    extra = sorted(set(data) - {"sub", "env", "act", "det"})
    if extra:
        raise BundleError(f"unexpected descriptor key(s): {', '.join(extra)}")
    return DescriptorSet.from_mapping(data)


def read_descriptors(path: str | Path) -> DescriptorSet:
    return parse_descriptors(Path(path).read_text(encoding="utf-8"))


def write_descriptors(descriptors: DescriptorSet, path: str | Path) -> None:
    Path(path).write_text(json.dumps(descriptors.to_dict(), indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


class DiffusionBackend(Protocol):
    def generate(self, latent: LatentGrid, prompt: str) -> ImageBundle: ...

    def invert(self, image: ImageBundle) -> LatentGrid: ...


class SemanticExtractor(Protocol):
    def extract(self, image: ImageBundle) -> DescriptorSet: ...


def stub_generate(z: LatentGrid, prompt: str = "") -> ImageBundle:
    return ImageBundle(slce.dumps(z), prompt)


def stub_invert(img: ImageBundle, noise_sigma: float = 0.0, rng: np.random.Generator | None = None) -> LatentGrid:
    """Decode the payload latent and add i.i.d. Gaussian noise of scale ``noise_sigma``."""
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be >= 0")
    z = slce.loads(img.payload)
    if noise_sigma == 0:
        return z
    if rng is None:
        rng = np.random.default_rng(0)
    return LatentGrid(z.values + noise_sigma * rng.standard_normal(z.shape))


def sidecar_extract(img: ImageBundle) -> DescriptorSet:
    if img.descriptors is None:
        raise BundleError("image has no descriptor sidecar")
    return img.descriptors


@dataclass
class StubDiffusionBackend:
    noise_sigma: float = 0.0
    seed: int = 0

    def generate(self, latent: LatentGrid, prompt: str) -> ImageBundle:
        return stub_generate(latent, prompt)

    def invert(self, image: ImageBundle) -> LatentGrid:
        return stub_invert(image, self.noise_sigma, np.random.default_rng(self.seed))


class SidecarExtractor:
    def extract(self, image: ImageBundle) -> DescriptorSet:
        return sidecar_extract(image)


def embed_pipeline(
    descriptors: DescriptorSet,
    prompt: str,
    layout: PartitionLayout,
    d: int,
    key: SecretKey,
    backend: DiffusionBackend | None = None,
) -> tuple[ImageBundle, LatentGrid]:
    backend = backend or StubDiffusionBackend()
    z_T = synthesize_latent(descriptors, layout, d, key)
    bundle = backend.generate(z_T, prompt).with_descriptors(descriptors)
    return bundle, z_T


def verify_pipeline(
    img: ImageBundle,
    layout: PartitionLayout,
    d: int,
    key: SecretKey,
    thresholds: ThresholdSet | None = None,
    backend: DiffusionBackend | None = None,
    extractor: SemanticExtractor | None = None,
) -> VerificationReport:
    backend = backend or StubDiffusionBackend()
    extractor = extractor or SidecarExtractor()
    z_inv = backend.invert(img)
    if z_inv.d != d or (z_inv.h, z_inv.w) != (layout.h, layout.w):
        raise ValueError(f"inverted latent {z_inv.shape} does not match layout {layout.h}x{layout.w} and d={d}")
    return verify(z_inv, extractor.extract(img), layout, key, thresholds)
