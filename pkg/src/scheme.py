#!/usr/bin/env python3
"""
Group Scheme Module

Builds, validates and serializes filter-group size arrays for uniform and
logarithmic filter grouping, including the canonical per-layer tables used
by the shallow network (layer 2 has 128 channels, layer 3 has 256).

Logarithmic arrays follow [c/2, c/4, ..., c/2^(n-1), c/2^(n-1)]. When n is
too large for that form, the three published logarithmic tables are used
verbatim where they apply; any other (c, n) is refined by repeatedly
splitting the largest group into two equal halves.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Tuple

from .errors import InvalidSchemeError, UnknownSchemeError, UnsupportedChannelsError

logger = logging.getLogger(__name__)

# Channel depth of the two grouped modules, keyed by layer index
LAYER_CHANNELS: Dict[int, int] = {2: 128, 3: 256}

CANONICAL_SCHEME_NAMES: Tuple[str, ...] = (
    "Uniform-4",
    "Uniform-8",
    "Uniform-16",
    "Logarithmic-4",
    "Logarithmic-8",
    "Logarithmic-16",
    "Baseline",
)

# The printed layer-2 row of Logarithmic-16 lists 15 groups summing to 124.
# This 16-group array (sum 128, sum of squares 1942) is the smallest change
# that reproduces the published parameter totals for that scheme.
LOG16_LAYER2_CORRECTED: Tuple[int, ...] = (32, 16, 16, 8, 8, 8, 8, 8, 4, 4, 4, 4, 4, 2, 1, 1)
LOG16_LAYER2_PRINTED: Tuple[int, ...] = (32, 16, 16, 8, 8, 8, 8, 8, 4, 4, 4, 4, 2, 1, 1)

CANONICAL_LOG_ARRAYS: Dict[Tuple[int, int], Tuple[int, ...]] = {
    (128, 4): (64, 32, 16, 16),
    (128, 8): (64, 32, 16, 8, 4, 2, 1, 1),
    (128, 16): LOG16_LAYER2_CORRECTED,
    (256, 2): (128, 128),
    (256, 4): (128, 64, 32, 32),
    (256, 8): (128, 64, 32, 16, 8, 4, 2, 2),
}

CORRECTION_NOTICE = (
    "layer 2 array is a derived correction: the published row has 15 entries "
    "summing to 124; this 16-entry array reproduces the published totals "
    "190,036 (6 classes) and 191,060 (10 classes)"
)


class GroupFamily(Enum):
    """Grouping family of a layer."""

    NONE = "None"
    UNIFORM = "Uniform"
    LOGARITHMIC = "Logarithmic"


@dataclass(frozen=True)
class GroupScheme:
    """Group size array of one grouped layer."""

    family: GroupFamily
    channels: int
    group_count: int
    sizes: Tuple[int, ...]

    def __post_init__(self):
        """Check the array against the family's invariants."""
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))
        if self.channels < 1 or self.group_count < 1:
            raise InvalidSchemeError(
                f"channels and group_count must be positive, got {self.channels}, {self.group_count}"
            )
        if len(self.sizes) != self.group_count:
            raise InvalidSchemeError(
                f"{len(self.sizes)} group sizes given for group_count {self.group_count}"
            )
        if any(s < 1 for s in self.sizes):
            raise InvalidSchemeError(f"group sizes must be positive: {list(self.sizes)}")
        if sum(self.sizes) != self.channels:
            raise InvalidSchemeError(
                f"group sizes sum to {sum(self.sizes)}, expected {self.channels}"
            )
        if any(a < b for a, b in zip(self.sizes, self.sizes[1:])):
            raise InvalidSchemeError(f"group sizes must be non-increasing: {list(self.sizes)}")

        if self.family is GroupFamily.NONE and self.sizes != (self.channels,):
            raise InvalidSchemeError("an ungrouped layer has a single group of full depth")
        if self.family is GroupFamily.UNIFORM:
            if self.channels % self.group_count:
                raise InvalidSchemeError(
                    f"{self.group_count} uniform groups do not divide {self.channels} channels"
                )
            width = self.channels // self.group_count
            if any(s != width for s in self.sizes):
                raise InvalidSchemeError(f"uniform groups must all be {width} wide")

    def sum_of_squares(self) -> int:
        """Return sum(g_i^2), the per-tap weight count of the grouped layer."""
        return sum(s * s for s in self.sizes)

    def to_dict(self) -> Dict[str, Any]:
        """Serialize to plain data for YAML export."""
        return {
            "family": self.family.value,
            "channels": self.channels,
            "group_count": self.group_count,
            "sizes": list(self.sizes),
        }


@dataclass(frozen=True)
class SchemeTable:
    """Per-layer grouping of the network, keyed by layer index (2, 3)."""

    name: str
    per_layer: Dict[int, GroupScheme]
    notes: Dict[int, str] = field(default_factory=dict)

    def __post_init__(self):
        """Enforce the halving rule between consecutive grouped layers."""
        layers = sorted(self.per_layer)
        for shallow, deep in zip(layers, layers[1:]):
            a, b = self.per_layer[shallow], self.per_layer[deep]
            if a.family is GroupFamily.NONE and b.family is GroupFamily.NONE:
                continue
            if b.group_count * 2 != a.group_count:
                raise InvalidSchemeError(
                    f"{self.name}: layer {deep} has {b.group_count} groups, "
                    f"expected half of layer {shallow}'s {a.group_count}"
                )

    @property
    def family(self) -> GroupFamily:
        """Family of the first grouped layer (NONE for the baseline)."""
        return self.per_layer[min(self.per_layer)].family

    def to_dict(self) -> Dict[str, Any]:
        """Serialize to plain data for YAML export."""
        data: Dict[str, Any] = {"name": self.name, "layers": {}}
        for index in sorted(self.per_layer):
            entry = self.per_layer[index].to_dict()
            if index in self.notes:
                entry["note"] = self.notes[index]
            data["layers"][f"layer{index}"] = entry
        return data


def _is_power_of_two(value: int) -> bool:
    return value > 0 and value & (value - 1) == 0


def _check_counts(channels: int, group_count: int) -> None:
    if group_count < 1:
        raise InvalidSchemeError(f"group_count must be >= 1, got {group_count}")
    if channels < 1:
        raise InvalidSchemeError(f"channels must be >= 1, got {channels}")
    if group_count > channels:
        raise InvalidSchemeError(
            f"cannot split {channels} channels into {group_count} non-empty groups"
        )


def _pure_log_limit(channels: int) -> int:
    """Largest n for which [c/2, ..., c/2^(n-1), c/2^(n-1)] stays integral."""
    return channels.bit_length()


def _pure_log_sizes(channels: int, group_count: int) -> List[int]:
    if group_count == 1:
        return [channels]
    sizes = [channels >> i for i in range(1, group_count)]
    sizes.append(sizes[-1])
    return sizes


def _split_largest(sizes: List[int], group_count: int) -> List[int]:
    """Halve the largest group (earliest on ties) until group_count groups exist."""
    sizes = list(sizes)
    while len(sizes) < group_count:
        largest = max(sizes)
        index = sizes.index(largest)
        half = largest // 2
        sizes[index:index + 1] = [half, half]
    return sorted(sizes, reverse=True)


def log_group_sizes(channels: int, group_count: int) -> List[int]:
    """Return the logarithmic group size array for (channels, group_count)."""
    _check_counts(channels, group_count)
    if not _is_power_of_two(channels):
        raise UnsupportedChannelsError(
            f"logarithmic grouping needs a power-of-two channel count, got {channels}"
        )

    canonical = CANONICAL_LOG_ARRAYS.get((channels, group_count))
    if canonical is not None:
        return list(canonical)

    limit = _pure_log_limit(channels)
    if group_count <= limit:
        return _pure_log_sizes(channels, group_count)

    logger.debug("refining %d-channel array to %d groups by equal splits", channels, group_count)
    return _split_largest(_pure_log_sizes(channels, limit), group_count)


def uniform_group_sizes(channels: int, group_count: int) -> List[int]:
    """Return group_count equal groups covering channels."""
    _check_counts(channels, group_count)
    if channels % group_count:
        raise InvalidSchemeError(
            f"{group_count} uniform groups do not divide {channels} channels"
        )
    return [channels // group_count] * group_count


def make_scheme(family: GroupFamily, channels: int, group_count: int) -> GroupScheme:
    """Build a validated GroupScheme of the given family."""
    if family is GroupFamily.NONE:
        if group_count != 1:
            raise InvalidSchemeError("an ungrouped layer has exactly one group")
        sizes = [channels]
    elif family is GroupFamily.UNIFORM:
        sizes = uniform_group_sizes(channels, group_count)
    else:
        sizes = log_group_sizes(channels, group_count)
    return GroupScheme(family=family, channels=channels, group_count=group_count, sizes=tuple(sizes))


def parse_scheme_name(name: str) -> Tuple[GroupFamily, int]:
    """Split a scheme name like "Logarithmic-8" into (family, layer-2 group count)."""
    if name == "Baseline":
        return GroupFamily.NONE, 1
    if name not in CANONICAL_SCHEME_NAMES:
        raise UnknownSchemeError(
            f"unknown scheme '{name}'; expected one of {', '.join(CANONICAL_SCHEME_NAMES)}"
        )
    family_name, count = name.split("-")
    return GroupFamily(family_name), int(count)


def canonical_scheme_table(name: str) -> SchemeTable:
    """Return the per-layer grouping of a canonical scheme."""
    family, groups = parse_scheme_name(name)

    if family is GroupFamily.NONE:
        per_layer = {index: make_scheme(family, c, 1) for index, c in LAYER_CHANNELS.items()}
        return SchemeTable(name=name, per_layer=per_layer)

    # Degree of grouping halves from layer 2 to layer 3
    per_layer = {
        2: make_scheme(family, LAYER_CHANNELS[2], groups),
        3: make_scheme(family, LAYER_CHANNELS[3], groups // 2),
    }
    notes = {}
    if name == "Logarithmic-16":
        notes[2] = CORRECTION_NOTICE
    return SchemeTable(name=name, per_layer=per_layer, notes=notes)


def format_scheme_table(table: SchemeTable) -> str:
    """Render a scheme table as the plain-text listing printed by `plan`."""
    lines = [f"scheme: {table.name}"]
    for index in sorted(table.per_layer):
        scheme = table.per_layer[index]
        sizes = ", ".join(str(s) for s in scheme.sizes)
        lines.append(
            f"  layer{index}: channels={scheme.channels} groups={scheme.group_count} sizes=[{sizes}]"
        )
        if index in table.notes:
            lines.append(f"    note: {table.notes[index]}")
    return "\n".join(lines)
