"""Role labels for observed nodes."""
from __future__ import annotations

from typing import Iterable

import numpy as np

from .exceptions import ValidationError

S, B, Z = 0, 1, 2
ROLE_NAMES = ("S", "B", "Z")


class Partition:
    """Immutable per-node labels over {S=0, B=1, Z=2}."""

    __slots__ = ("_labels",)

    def __init__(self, labels: Iterable[int]):
        lab = np.array(list(labels) if not isinstance(labels, np.ndarray) else labels, dtype=np.int8)
        if lab.ndim != 1 or lab.size == 0:
            raise ValidationError("partition labels must be a non-empty 1-D sequence")
        if np.any((lab < 0) | (lab > 2)):
            raise ValidationError("partition labels must be in {0, 1, 2}")
        lab.setflags(write=False)
        self._labels = lab

    @classmethod
    def from_roles(cls, roles: Iterable[str]) -> "Partition":
        return cls([ROLE_NAMES.index(r) for r in roles])

    @property
    def labels(self) -> np.ndarray:
        return self._labels

    def __len__(self):
        return self._labels.size

    def __eq__(self, other):
        return isinstance(other, Partition) and np.array_equal(self._labels, other._labels)

    def __hash__(self):
        return hash(self._labels.tobytes())

    def __repr__(self):
        return f"Partition({''.join(ROLE_NAMES[x] for x in self._labels)})"

    def members(self, role: int) -> np.ndarray:
        return np.flatnonzero(self._labels == role)

    @property
    def blanket(self) -> np.ndarray:
        return self.members(B)

    @property
    def n_blanket(self) -> int:
        return int(np.sum(self._labels == B))

    def sizes(self) -> tuple:
        return tuple(int(np.sum(self._labels == r)) for r in (S, B, Z))

    @property
    def is_valid(self) -> bool:
        """Every role holds at least one node."""
        return min(self.sizes()) > 0

    def roles(self) -> str:
        return "".join(ROLE_NAMES[x] for x in self._labels)

    def permuted(self, perm) -> "Partition":
        return Partition(self._labels[np.asarray(perm)])
