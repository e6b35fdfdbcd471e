"""Core domain types: factors, positions, latent grids, keys, descriptor sets and partition layouts."""

from __future__ import annotations

import enum
import hmac
import math
from collections.abc import Iterator, Mapping
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np


class FactorKey(enum.Enum):
    SUB = "sub"
    ENV = "env"
    ACT = "act"
    DET = "det"

    @property
    def index(self) -> int:
        return _FACTOR_INDEX[self]

    @property
    def letter(self) -> str:
        return _FACTOR_LETTER[self]

    def __lt__(self, other: FactorKey) -> bool:
        if not isinstance(other, FactorKey):
            return NotImplemented
        return self.index < other.index

    @classmethod
    def parse(cls, name: str | FactorKey) -> FactorKey:
        if isinstance(name, FactorKey):
            return name
        try:
            return cls(name.strip().lower())
        except ValueError:
            raise ValueError(f"unknown factor {name!r}; expected one of sub, env, act, det") from None


# Fixed order used for serialization, reporting and tie-breaking.
FACTORS: tuple[FactorKey, ...] = (FactorKey.SUB, FactorKey.ENV, FactorKey.ACT, FactorKey.DET)
_FACTOR_INDEX = {k: n for n, k in enumerate(FACTORS)}
_FACTOR_LETTER = {FactorKey.SUB: "S", FactorKey.ENV: "E", FactorKey.ACT: "A", FactorKey.DET: "D"}
_LETTER_FACTOR = {v: k for k, v in _FACTOR_LETTER.items()}


class Position(NamedTuple):
    i: int
    j: int


@dataclass(frozen=True, eq=False)
class LatentGrid:
    """An h x w x d latent tensor (z_T, an inverted latent, or a reconstruction).

    Values are held as float64 with shape ``(h, w, d)``, row-major over (i, j, channel).
    """

    values: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.values, dtype=np.float64, copy=True)
        if arr.ndim != 3:
            raise ValueError(f"latent must be 3-dimensional (h, w, d), got shape {arr.shape}")
        h, w, d = arr.shape
        if h < 2 or w < 2 or d < 1:
            raise ValueError(f"latent dims too small: h={h}, w={w}, d={d} (need h>=2, w>=2, d>=1)")
        if not np.all(np.isfinite(arr)):
            raise ValueError("latent contains non-finite values")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.values.shape  # type: ignore[return-value]

    @property
    def h(self) -> int:
        return self.values.shape[0]

    @property
    def w(self) -> int:
        return self.values.shape[1]

    @property
    def d(self) -> int:
        return self.values.shape[2]

    def at(self, p: Position | tuple[int, int]) -> np.ndarray:
        return self.values[p[0], p[1]]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LatentGrid):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.values, other.values))

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True, eq=False)
class SecretKey:
    """256 bits of watermarking key material."""

    material: bytes = field(repr=False)

    LENGTH = 32

    def __post_init__(self) -> None:
        if not isinstance(self.material, (bytes, bytearray)) or len(self.material) != self.LENGTH:
            raise ValueError(f"secret key must be exactly {self.LENGTH} bytes")
        object.__setattr__(self, "material", bytes(self.material))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SecretKey):
            return NotImplemented
        return hmac.compare_digest(self.material, other.material)

    def __hash__(self) -> int:
        return hash(self.material)

    def __repr__(self) -> str:
        return "SecretKey(<32 bytes>)"

    @classmethod
    def load(cls, path: str | Path) -> SecretKey:
        return cls(Path(path).read_bytes())

    def save(self, path: str | Path) -> None:
        path = Path(path)
        path.write_bytes(self.material)
        try:
            path.chmod(0o600)
        except OSError:  # pragma: no cover - platform dependent
            pass


@dataclass(frozen=True)
class DescriptorSet(Mapping[FactorKey, str]):
    """The four normalized semantic descriptors, one per factor."""

    descriptors: tuple[str, str, str, str]

    def __post_init__(self) -> None:
        # local import: synthesis depends on core
        from slicewm.synthesis import normalize_descriptor

        if len(self.descriptors) != len(FACTORS):
            raise ValueError("descriptor set needs exactly four descriptors")
        normed = tuple(normalize_descriptor(s) for s in self.descriptors)
        object.__setattr__(self, "descriptors", normed)

    @classmethod
    def from_mapping(cls, mapping: Mapping[str | FactorKey, str]) -> DescriptorSet:
        parsed: dict[FactorKey, str] = {}
        for key, text in mapping.items():
            k = FactorKey.parse(key)
            if not isinstance(text, str):
                raise ValueError(f"descriptor for factor {k.value} must be a string")
            parsed[k] = text
        missing = [k.value for k in FACTORS if k not in parsed]
        if missing:
            raise ValueError(f"descriptor set missing factor(s): {', '.join(missing)}")
        return cls(tuple(parsed[k] for k in FACTORS))  # type: ignore[arg-type]

    def replace(self, factor: FactorKey | str, text: str) -> DescriptorSet:
        k = FactorKey.parse(factor)
        items = list(self.descriptors)
        items[k.index] = text
        return DescriptorSet(tuple(items))  # type: ignore[arg-type]

    def to_dict(self) -> dict[str, str]:
        return {k.value: self.descriptors[k.index] for k in FACTORS}

    def __getitem__(self, key: FactorKey | str) -> str:
        return self.descriptors[FactorKey.parse(key).index]

    def __iter__(self) -> Iterator[FactorKey]:
        return iter(FACTORS)

    def __len__(self) -> int:
        return len(FACTORS)


# ---------------------------------------------------------------------------
# Partition layouts
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PartitionLayout:
    """Assignment of grid positions to factor regions.

    ``membership[k, i, j]`` is True when position (i, j) belongs to factor ``FACTORS[k]``.
    Layouts returned by :func:`build_layout` and :func:`read_mask` always satisfy disjointness
    and coverage; :meth:`unchecked` lets callers hold a possibly-corrupt layout for
    :func:`validate_layout`.
    """

    membership: np.ndarray

    def __post_init__(self) -> None:
        m = np.array(self.membership, dtype=bool, copy=True)
        if m.ndim != 3 or m.shape[0] != len(FACTORS):
            raise ValueError(f"membership must have shape (4, h, w), got {m.shape}")
        m.setflags(write=False)
        object.__setattr__(self, "membership", m)

    @classmethod
    def from_factor_map(cls, factor_map: np.ndarray) -> PartitionLayout:
        fm = np.asarray(factor_map)
        layout = cls(np.stack([fm == n for n in range(len(FACTORS))]))
        _raise_if_invalid(layout)
        return layout

    @classmethod
    def unchecked(cls, membership: np.ndarray) -> PartitionLayout:
        return cls(membership)

    @property
    def h(self) -> int:
        return self.membership.shape[1]

    @property
    def w(self) -> int:
        return self.membership.shape[2]

    @property
    def hw(self) -> int:
        return self.h * self.w

    @property
    def factor_map(self) -> np.ndarray:
        """Dense int8 map of factor indices; -1 marks unassigned or multiply-assigned cells."""
        counts = self.membership.sum(axis=0)
        fm = np.argmax(self.membership, axis=0).astype(np.int8)
        fm[counts != 1] = -1
        return fm

    @property
    def region_sizes(self) -> dict[FactorKey, int]:
        return {k: int(self.membership[k.index].sum()) for k in FACTORS}

    def mask(self, k: FactorKey | str) -> np.ndarray:
        return self.membership[FactorKey.parse(k).index]

    def factor_at(self, p: Position | tuple[int, int]) -> FactorKey:
        return FACTORS[int(self.factor_map[p[0], p[1]])]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PartitionLayout):
            return NotImplemented
        return bool(np.array_equal(self.membership, other.membership))

    __hash__ = None  # type: ignore[assignment]


class LayoutError(ValueError):
    pass


def parse_layout_spec(spec: str) -> tuple[str, int | None]:
    """Parse ``quadrant``, ``row-stripes`` or ``block-interleave:<b>``."""
    name, _, arg = spec.strip().partition(":")
    name = name.lower()
    if name in ("quadrant", "row-stripes"):
        if arg:
            raise LayoutError(f"layout {name!r} takes no argument")
        return name, None
    if name == "block-interleave":
        try:
            b = int(arg)
        except ValueError:
            raise LayoutError("block-interleave needs an integer block size, e.g. block-interleave:4") from None
        if b < 1:
            raise LayoutError("block size must be >= 1")
        return name, b
    raise LayoutError(f"unknown layout spec {spec!r}")


def build_layout(h: int, w: int, spec: str | np.ndarray = "quadrant") -> PartitionLayout:
    """Build a partition layout.

    ``spec`` is ``"quadrant"``, ``"row-stripes"``, ``"block-interleave:<b>"`` or an explicit
    h x w array of factor indices (0..3 in factor order).
    """
    if h < 2 or w < 2:
        raise LayoutError(f"grid dims too small: {h}x{w} (need at least 2x2)")
    if isinstance(spec, np.ndarray):
        fm = np.asarray(spec)
        if fm.shape != (h, w):
            raise LayoutError(f"explicit mask has shape {fm.shape}, expected {(h, w)}")
        return _checked_layout(fm)

    name, arg = parse_layout_spec(spec)
    ii, jj = np.indices((h, w))
    if name == "quadrant":
        top = ii < math.ceil(h / 2)
        left = jj < math.ceil(w / 2)
        fm = np.where(top, np.where(left, 0, 1), np.where(left, 2, 3))
    elif name == "row-stripes":
        fm = (ii * len(FACTORS)) // h
    else:
        assert arg is not None
        fm = ((ii // arg) % 2) * 2 + (jj // arg) % 2
    return _checked_layout(fm.astype(np.int8))


def _checked_layout(fm: np.ndarray) -> PartitionLayout:
    layout = PartitionLayout(np.stack([fm == n for n in range(len(FACTORS))]))
    _raise_if_invalid(layout)
    return layout


def _raise_if_invalid(layout: PartitionLayout) -> None:
    violations = validate_layout(layout)
    if violations:
        shown = "; ".join(violations[:5])
        more = f" (+{len(violations) - 5} more)" if len(violations) > 5 else ""
        raise LayoutError(f"invalid layout: {shown}{more}")


def validate_layout(layout: PartitionLayout) -> list[str]:
    """Return every violated invariant; an empty list means the layout is valid."""
    violations: list[str] = []
    counts = layout.membership.sum(axis=0)
    for i, j in zip(*np.nonzero(counts > 1)):
        owners = ",".join(k.value for k in FACTORS if layout.membership[k.index, i, j])
        violations.append(f"position ({i},{j}) assigned to multiple factors: {owners}")
    for i, j in zip(*np.nonzero(counts == 0)):
        violations.append(f"position ({i},{j}) unassigned")
    for k in FACTORS:
        if not layout.membership[k.index].any():
            violations.append(f"empty region {k.value}")
    return violations


def region_positions(layout: PartitionLayout, k: FactorKey | str) -> list[Position]:
    ii, jj = np.nonzero(layout.mask(k))
    return [Position(int(i), int(j)) for i, j in zip(ii, jj)]


# ---------------------------------------------------------------------------
# Mask files: "h w" header, then h lines of w letters from {S, E, A, D}
# ---------------------------------------------------------------------------


def format_mask(layout: PartitionLayout) -> str:
    fm = layout.factor_map
    if (fm < 0).any():
        raise LayoutError("cannot serialize an invalid layout")
    letters = np.array([k.letter for k in FACTORS])
    rows = ["".join(letters[row]) for row in fm]
    return f"{layout.h} {layout.w}\n" + "\n".join(rows) + "\n"


def parse_mask(text: str, *, strict: bool = True) -> PartitionLayout:
    """Parse mask text. With ``strict=False`` a malformed mask is returned unchecked."""
    lines = [ln.rstrip("\r") for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise LayoutError("empty mask file")
    try:
        h, w = (int(x) for x in lines[0].split())
    except ValueError:
        raise LayoutError("mask header must be 'h w'") from None
    body = lines[1:]
    if len(body) != h:
        raise LayoutError(f"mask declares {h} rows but has {len(body)}")
    membership = np.zeros((len(FACTORS), h, w), dtype=bool)
    for i, row in enumerate(body):
        row = row.strip()
        if len(row) != w and strict:
            raise LayoutError(f"mask row {i} has {len(row)} cells, expected {w}")
        for j, ch in enumerate(row[:w]):
            k = _LETTER_FACTOR.get(ch.upper())
            if k is None:
                if strict:
                    raise LayoutError(f"mask cell ({i},{j}) has invalid letter {ch!r}")
                continue
            membership[k.index, i, j] = True
    layout = PartitionLayout(membership)
    if strict:
        _raise_if_invalid(layout)
    return layout


def write_mask(layout: PartitionLayout, path: str | Path) -> None:
    Path(path).write_text(format_mask(layout), encoding="ascii")


def read_mask(path: str | Path, *, strict: bool = True) -> PartitionLayout:
    return parse_mask(Path(path).read_text(encoding="ascii"), strict=strict)


def resolve_layout(h: int, w: int, spec: str) -> PartitionLayout:
    """Layout from a spec string; ``mask:<path>`` loads an explicit mask file."""
    if spec.startswith("mask:"):
        layout = read_mask(spec[len("mask:"):])
        if (layout.h, layout.w) != (h, w):
            raise LayoutError(f"mask is {layout.h}x{layout.w}, expected {h}x{w}")
        return layout
    return build_layout(h, w, spec)
