"""Quenched disorder fields J = (J_i) and the functional X_n."""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field

import numpy as np

from .lattice import LatticeSpec

DISTRIBUTIONS = ("gaussian", "rademacher")


class DisorderError(ValueError):
    pass


def derive_seed(master_seed: int, purpose: str, *index: int) -> int:
    """64-bit seed keyed by (master seed, purpose tag, indices).

    Streams for different purposes or indices are independent, so a
    disorder field can be regenerated without replaying any sampler.
    """
    key = [int(master_seed) & 0xFFFFFFFFFFFFFFFF, zlib.crc32(purpose.encode()), *map(int, index)]
    state = np.random.SeedSequence(key).generate_state(1, dtype=np.uint64)
    return int(state[0])


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))


@dataclass(frozen=True)
class DisorderField:
    lattice: LatticeSpec
    values: np.ndarray = field(repr=False, compare=False)
    distribution: str = "gaussian"
    seed: int = 0

    def __post_init__(self):
        if self.values.shape != (self.lattice.num_sites,):
            raise DisorderError(
                f"expected {self.lattice.num_sites} values, got shape {self.values.shape}"
            )
        if self.distribution not in DISTRIBUTIONS + ("custom",):
            raise DisorderError(f"unknown distribution {self.distribution!r}")
        self.values.flags.writeable = False

    @classmethod
    def from_values(cls, lattice: LatticeSpec, values, distribution="custom", seed=0):
        return cls(lattice, np.array(values, dtype=np.float64), distribution, seed)

    def __eq__(self, other):
        if not isinstance(other, DisorderField):
            return NotImplemented
        return (
            self.lattice == other.lattice
            and self.distribution == other.distribution
            and self.seed == other.seed
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None


def sample_disorder(lattice: LatticeSpec, distribution: str, seed: int) -> DisorderField:
    if distribution not in DISTRIBUTIONS:
        raise DisorderError(f"unknown distribution {distribution!r}; expected one of {DISTRIBUTIONS}")
    rng = make_rng(seed)
    if distribution == "gaussian":
        values = rng.standard_normal(lattice.num_sites)
    else:
        values = np.where(rng.random(lattice.num_sites) < 0.5, -1.0, 1.0)
    return DisorderField(lattice, values, distribution, int(seed))


def field_sum_Xn(disorder: DisorderField, q: float, beta: float, h: float) -> float:
    """sqrt(q) * beta * h * sum(J) / sqrt(|B_n|)."""
    if not q > 0:
        raise DisorderError(f"q must be positive, got {q!r}")
    values = disorder.values
    return math.sqrt(q) * beta * h * math.fsum(values) / math.sqrt(values.shape[0])


def gauge_flip_field(disorder: DisorderField) -> DisorderField:
    """J_i -> (-1)^{|i|_1} J_i."""
    values = disorder.values * disorder.lattice.parity
    return DisorderField(disorder.lattice, values, disorder.distribution, disorder.seed)
