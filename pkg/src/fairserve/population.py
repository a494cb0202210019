"""Requester identities and the sensitive groups fairness is measured over."""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import Mapping

import numpy as np


class Race(IntEnum):
    White = 0
    Black = 1
    AmericanIndian = 2
    Asian = 3
    NativeHawaiian = 4
    OtherRace = 5


class Gender(IntEnum):
    Female = 0
    Male = 1
    Other = 2


class AgeBand(IntEnum):
    Child = 0
    Teenager = 1
    Adult = 2
    MiddleAged = 3
    Elder = 4


class Disability(IntEnum):
    No = 0
    Yes = 1


class SkinType(IntEnum):
    I = 0  # noqa: E741
    II = 1
    III = 2
    IV = 3
    V = 4
    VI = 5


# Attribute order is fixed: it defines the one-hot layout and group order.
ATTRIBUTES: tuple[tuple[str, type[IntEnum]], ...] = (
    ("race", Race),
    ("gender", Gender),
    ("age", AgeBand),
    ("disability", Disability),
    ("skin", SkinType),
)
ATTRIBUTE_SIZES = tuple(len(enum) for _, enum in ATTRIBUTES)
ENCODING_DIM = sum(ATTRIBUTE_SIZES)  # 22
_OFFSETS = tuple(int(x) for x in np.cumsum((0,) + ATTRIBUTE_SIZES[:-1]))


@dataclass(frozen=True)
class IdentityProfile:
    race: Race
    gender: Gender
    age_band: AgeBand
    disabled: bool
    skin_type: SkinType

    def indices(self) -> tuple[int, int, int, int, int]:
        """Value index per attribute, in ATTRIBUTES order."""
        return (
            int(self.race),
            int(self.gender),
            int(self.age_band),
            int(self.disabled),
            int(self.skin_type),
        )

    @classmethod
    def from_indices(cls, idx) -> IdentityProfile:
        r, g, a, d, s = (int(i) for i in idx)
        return cls(Race(r), Gender(g), AgeBand(a), bool(d), SkinType(s))

    def to_dict(self) -> dict[str, object]:
        return {
            "race": self.race.name,
            "gender": self.gender.name,
            "age_band": self.age_band.name,
            "disabled": self.disabled,
            "skin_type": self.skin_type.name,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, object]) -> IdentityProfile:
        return cls(
            Race[d["race"]],
            Gender[d["gender"]],
            AgeBand[d["age_band"]],
            bool(d["disabled"]),
            SkinType[d["skin_type"]],
        )


@dataclass(frozen=True)
class SensitiveGroup:
    attribute: str
    value: int

    @property
    def label(self) -> str:
        enum = dict(ATTRIBUTES)[self.attribute]
        return f"{self.attribute}={enum(self.value).name}"

    @property
    def attribute_index(self) -> int:
        return [a for a, _ in ATTRIBUTES].index(self.attribute)


def encode(p: IdentityProfile) -> np.ndarray:
    """One-hot encode a profile into a 22-vector with exactly five ones."""
    x = np.zeros(ENCODING_DIM)
    for off, i in zip(_OFFSETS, p.indices()):
        x[off + i] = 1.0
    return x


def encode_indices(idx: np.ndarray) -> np.ndarray:
    """Vectorised encode for an (n, 5) array of attribute indices."""
    idx = np.asarray(idx, dtype=np.int64)
    out = np.zeros((idx.shape[0], ENCODING_DIM))
    rows = np.arange(idx.shape[0])
    for k, off in enumerate(_OFFSETS):
        out[rows, off + idx[:, k]] = 1.0
    return out


def decode(x: np.ndarray) -> IdentityProfile:
    x = np.asarray(x)
    idx = []
    for off, size in zip(_OFFSETS, ATTRIBUTE_SIZES):
        block = x[off:off + size]
        if np.count_nonzero(block) != 1:
            raise ValueError("encoding block is not one-hot")
        idx.append(int(np.argmax(block)))
    return IdentityProfile.from_indices(idx)


def decode_indices(x: np.ndarray) -> np.ndarray:
    """Inverse of encode_indices over the identity part of encodings."""
    x = np.asarray(x)
    cols = [np.argmax(x[:, off:off + size], axis=1)
            for off, size in zip(_OFFSETS, ATTRIBUTE_SIZES)]
    return np.stack(cols, axis=1)


def _normalized_weights(weights: Mapping[str, Mapping[str, float]] | None):
    probs = []
    for name, enum in ATTRIBUTES:
        w = np.ones(len(enum))
        given = (weights or {}).get(name, {})
        for key, value in given.items():
            try:
                member = enum[key]
            except KeyError:
                raise ValueError(f"unknown {name} value {key!r}") from None
            if value < 0:
                raise ValueError(f"negative population weight for {name}.{key}")
            w[int(member)] = float(value)
        if w.sum() <= 0:
            raise ValueError(f"population weights for {name} sum to zero")
        probs.append(w / w.sum())
    return probs


def sample_indices(rng: np.random.Generator, n: int,
                   weights: Mapping[str, Mapping[str, float]] | None = None) -> np.ndarray:
    """Draw n identities as an (n, 5) index array.

    One draw per attribute per person, attribute-major within a person, so the
    stream consumption does not depend on the weights.
    """
    probs = _normalized_weights(weights)
    u = rng.random((n, len(ATTRIBUTES)))
    out = np.empty((n, len(ATTRIBUTES)), dtype=np.int64)
    for k, p in enumerate(probs):
        cdf = np.cumsum(p)
        cdf[-1] = 1.0
        out[:, k] = np.searchsorted(cdf, u[:, k], side="right")
    return out


def sample_identity(rng: np.random.Generator,
                    weights: Mapping[str, Mapping[str, float]] | None = None) -> IdentityProfile:
    return IdentityProfile.from_indices(sample_indices(rng, 1, weights)[0])


def enumerate_groups() -> list[SensitiveGroup]:
    return [SensitiveGroup(name, int(v)) for name, enum in ATTRIBUTES for v in enum]


def one_hot_column(g: SensitiveGroup) -> int:
    """Column of the identity encoding that is 1 exactly for members of g."""
    return _OFFSETS[g.attribute_index] + g.value


def in_group(p: IdentityProfile, g: SensitiveGroup) -> bool:
    return p.indices()[g.attribute_index] == g.value


def membership_matrix(idx: np.ndarray, groups: list[SensitiveGroup]) -> np.ndarray:
    """Boolean (n, len(groups)) membership of index-encoded identities."""
    idx = np.asarray(idx)
    cols = [idx[:, g.attribute_index] == g.value for g in groups]
    return np.stack(cols, axis=1) if cols else np.zeros((len(idx), 0), bool)


def group_by_label(label: str) -> SensitiveGroup:
    """Parse 'race=Black' (or a bare value name such as 'Black')."""
    if "=" in label:
        attr, value = label.split("=", 1)
        enum = dict(ATTRIBUTES).get(attr)
        if enum is None or value not in enum.__members__:
            raise ValueError(f"unknown group {label!r}")
        return SensitiveGroup(attr, int(enum[value]))
    matches = [SensitiveGroup(a, int(e[label])) for a, e in ATTRIBUTES
               if label in e.__members__]
    if len(matches) != 1:
        raise ValueError(f"ambiguous or unknown group {label!r}")
    return matches[0]
