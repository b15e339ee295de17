"""MCMC run configuration."""

from __future__ import annotations

from dataclasses import asdict, dataclass

from ..errors import ConfigError

FULL_SCALE = dict(iterations=100_000, burn_in=10_000, thin=90)


@dataclass(frozen=True)
class McmcConfig:
    """Sweep counts and the move mix.

    Each sweep runs, in order: the parameter updates; the count Gibbs step
    plus ``cell_moves`` single-cell birth/death attempts and
    ``component_moves`` whole-component birth/death attempts; ``allocation_moves``
    reallocation attempts; one split/combine attempt.

    ``split_prob`` is the probability of proposing a split when both a split
    and a combine are possible; ``birth_prob`` plays the same role for the
    birth/death moves.
    """

    iterations: int = 20_000
    burn_in: int = 2_000
    thin: int = 18
    seed: int = 0
    split_prob: float = 0.5
    birth_prob: float = 0.5
    cell_moves: int = 10
    component_moves: int = 5
    allocation_moves: int = 5
    debug: bool = False

    def __post_init__(self):
        for name in ("iterations", "thin"):
            v = getattr(self, name)
            if not (isinstance(v, int) and v >= 1):
                raise ConfigError(f"mcmc field {name!r} must be a positive integer, got {v!r}")
        for name in ("burn_in", "cell_moves", "component_moves", "allocation_moves", "seed"):
            v = getattr(self, name)
            if not (isinstance(v, int) and v >= 0):
                raise ConfigError(f"mcmc field {name!r} must be a non-negative integer, got {v!r}")
        if self.burn_in >= self.iterations:
            raise ConfigError(f"burn_in ({self.burn_in}) must be smaller than iterations ({self.iterations})")
        for name in ("split_prob", "birth_prob"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and 0.0 < v < 1.0):
                raise ConfigError(f"mcmc field {name!r} must lie in (0, 1), got {v!r}")

    @property
    def n_draws(self) -> int:
        return (self.iterations - self.burn_in) // self.thin

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "McmcConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown mcmc fields: {sorted(unknown)}")
        return cls(**d)
