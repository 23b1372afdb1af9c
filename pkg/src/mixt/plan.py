"""Which blocks get their linear maps replaced, and by what structure."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import PlanInvalid

_DIRECTION_ALIASES = {
    "back-to-front": "back-to-front",
    "b2f": "back-to-front",
    "front-to-back": "front-to-back",
    "f2b": "front-to-back",
}


def normalize_direction(direction: str) -> str:
    try:
        return _DIRECTION_ALIASES[direction]
    except KeyError:
        raise PlanInvalid(
            f"direction must be one of {sorted(set(_DIRECTION_ALIASES))}, got {direction!r}"
        ) from None


@dataclass(frozen=True)
class CompressionPlan:
    """Replace all seven linear maps in ``n_b`` blocks.

    ``direction`` selects which end of the stack is replaced first:
    back-to-front replaces the last ``n_b`` blocks, front-to-back the
    first ``n_b``. ``n_t`` and ``d`` fix the mixture structure of every
    replacement operator.
    """

    n_b: int
    n_t: int
    d: int = 2
    direction: str = "back-to-front"

    def __post_init__(self):
        object.__setattr__(self, "direction", normalize_direction(self.direction))
        if self.n_b < 0:
            raise PlanInvalid(f"n_b must be >= 0, got {self.n_b}")
        if self.n_t < 1:
            raise PlanInvalid(f"n_t must be >= 1, got {self.n_t}")
        if self.d < 2:
            raise PlanInvalid(f"d must be >= 2, got {self.d}")

    def blocks_to_replace(self, num_blocks: int) -> list[int]:
        """Indices of the replaced blocks in a stack of ``num_blocks``."""
        if self.n_b > num_blocks:
            raise PlanInvalid(
                f"plan replaces {self.n_b} blocks but the model has {num_blocks}"
            )
        if self.direction == "back-to-front":
            return list(range(num_blocks - self.n_b, num_blocks))
        return list(range(self.n_b))
