"""Random architecture and optimizer-constant sampling for the model pool."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Architecture:
    """Shape of a stacked recurrent network."""

    input_dim: int
    units: tuple[int, ...]
    peepholes: bool
    projections: tuple[int | None, ...]

    def __post_init__(self):
        if len(self.units) != len(self.projections):
            raise ValueError("units and projections must have one entry per layer")
        if any(u < 1 for u in self.units):
            raise ValueError("layer sizes must be positive")
        for h, k in zip(self.units, self.projections):
            if k is not None and not (1 <= k <= h):
                raise ValueError(f"projection dim {k} must lie in [1, {h}]")

    def output_dim(self, layer: int) -> int:
        k = self.projections[layer]
        return self.units[layer] if k is None else k


@dataclass(frozen=True)
class Hyperparams:
    step_rate: float
    beta1: float
    beta2: float
    epsilon: float
    batch_size: int


@dataclass(frozen=True)
class ArchitectureSpace:
    """Ranges the pool samples from; defaults follow the published setup."""

    layer_choices: tuple[int, ...] = (2, 3)
    unit_range: tuple[int, int] = (20, 200)
    peephole_prob: float = 0.5
    projection_prob: float = 0.5
    step_rates: tuple[float, ...] = (1e-1, 1e-2)
    batch_sizes: tuple[int, ...] = (200, 500, 1000)
    beta1s: tuple[float, ...] = (0.2, 0.7, 0.9)
    beta2s: tuple[float, ...] = (0.9, 0.99, 0.999)
    epsilons: tuple[float, ...] = (1e-8, 1e-5)


DESK_SPACE = ArchitectureSpace(
    layer_choices=(2,),
    unit_range=(8, 24),
    batch_sizes=(50, 100),
)


def sample_architecture(
    rng: np.random.Generator,
    alphabet_size: int,
    space: ArchitectureSpace = ArchitectureSpace(),
) -> tuple[Architecture, Hyperparams]:
    """Draw a random stack plus optimizer constants.

    Layer widths are sorted so layers closer to the input are never smaller
    than deeper ones.
    """
    n_layers = int(rng.choice(space.layer_choices))
    lo, hi = space.unit_range
    units = tuple(sorted((int(rng.integers(lo, hi + 1)) for _ in range(n_layers)), reverse=True))
    peepholes = bool(rng.random() < space.peephole_prob)
    projections = []
    for h in units:
        if h >= 4 and rng.random() < space.projection_prob:
            projections.append(int(rng.integers(max(2, h // 4), h)))
        else:
            projections.append(None)
    arch = Architecture(
        input_dim=alphabet_size,
        units=units,
        peepholes=peepholes,
        projections=tuple(projections),
    )
    hyper = Hyperparams(
        step_rate=float(rng.choice(space.step_rates)),
        beta1=float(rng.choice(space.beta1s)),
        beta2=float(rng.choice(space.beta2s)),
        epsilon=float(rng.choice(space.epsilons)),
        batch_size=int(rng.choice(space.batch_sizes)),
    )
    return arch, hyper
