"""Spin configurations and exact observables of the random field Ising model."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .disorder import DisorderField
from .lattice import LatticeSpec

INTERACTIONS = ("ferro", "antiferro")


class GibbsError(ValueError):
    pass


@dataclass(frozen=True)
class ModelParams:
    beta: float
    h: float = 0.0
    interaction: str = "ferro"

    def __post_init__(self):
        if not (math.isfinite(self.beta) and self.beta >= 0):
            raise GibbsError(f"beta must be finite and non-negative, got {self.beta!r}")
        if not math.isfinite(self.h):
            raise GibbsError(f"h must be finite, got {self.h!r}")
        if self.interaction not in INTERACTIONS:
            raise GibbsError(f"interaction must be one of {INTERACTIONS}, got {self.interaction!r}")

    @property
    def coupling_sign(self) -> int:
        """+1 for ferro, -1 for antiferro."""
        return 1 if self.interaction == "ferro" else -1

    @staticmethod
    def field_scale(lattice: LatticeSpec) -> float:
        return 1.0 / math.sqrt(lattice.num_sites)

    def site_fields(self, disorder: DisorderField) -> np.ndarray:
        """Per-site field h J_i / sqrt|B_n|."""
        return self.h * self.field_scale(disorder.lattice) * np.asarray(disorder.values)


@dataclass(frozen=True)
class SpinConfig:
    lattice: LatticeSpec
    spins: np.ndarray = field(repr=False, compare=False)

    def __post_init__(self):
        spins = np.asarray(self.spins)
        if spins.shape != (self.lattice.num_sites,):
            raise GibbsError(f"expected {self.lattice.num_sites} spins, got shape {spins.shape}")
        if not np.all(np.abs(spins) == 1):
            raise GibbsError("spins must be exactly +1 or -1")
        spins = spins.astype(np.int8, copy=True)
        spins.flags.writeable = False
        object.__setattr__(self, "spins", spins)

    @classmethod
    def all_plus(cls, lattice: LatticeSpec) -> "SpinConfig":
        return cls(lattice, np.ones(lattice.num_sites, dtype=np.int8))

    def flipped(self) -> "SpinConfig":
        return SpinConfig(self.lattice, -self.spins)

    def __eq__(self, other):
        if not isinstance(other, SpinConfig):
            return NotImplemented
        return self.lattice == other.lattice and np.array_equal(self.spins, other.spins)

    __hash__ = None


def _check_same(*lattices: LatticeSpec):
    first = lattices[0]
    for lat in lattices[1:]:
        if lat != first:
            raise GibbsError(f"lattice mismatch: {first} vs {lat}")


def bond_sum(lattice: LatticeSpec, spins: np.ndarray) -> np.ndarray | float:
    """Sum over edges of s_i s_j; works on one config or a stack of them."""
    s = np.asarray(spins, dtype=np.int8)
    e = lattice.edges
    return (s[..., e[:, 0]] * s[..., e[:, 1]]).sum(axis=-1, dtype=np.int64)


def energy(params: ModelParams, disorder: DisorderField, config: SpinConfig) -> float:
    _check_same(disorder.lattice, config.lattice)
    lat = config.lattice
    interaction = -params.coupling_sign * float(bond_sum(lat, config.spins))
    fields = params.site_fields(disorder)
    return interaction - float(np.dot(fields, config.spins))


def energy_batch(params: ModelParams, disorder: DisorderField, spins: np.ndarray) -> np.ndarray:
    """Energies of a (k, N) stack of +-1 rows."""
    spins = np.asarray(spins)
    interaction = -params.coupling_sign * bond_sum(disorder.lattice, spins).astype(np.float64)
    return interaction - spins.astype(np.float64) @ params.site_fields(disorder)


def local_energy_change(params: ModelParams, disorder: DisorderField, config: SpinConfig, i: int) -> float:
    """H(config with spin i flipped) - H(config)."""
    lat = config.lattice
    offsets, targets = lat.neighbors
    s = config.spins
    nb = int(s[targets[offsets[i] : offsets[i + 1]]].sum())
    h_i = params.h * ModelParams.field_scale(lat) * disorder.values[i]
    return 2.0 * s[i] * (params.coupling_sign * nb + h_i)


def magnetization(config: SpinConfig) -> float:
    return float(config.spins.astype(np.int64).sum()) / config.lattice.num_sites


def overlap(c1: SpinConfig, c2: SpinConfig) -> float:
    _check_same(c1.lattice, c2.lattice)
    agree = int(np.dot(c1.spins.astype(np.int64), c2.spins.astype(np.int64)))
    return agree / c1.lattice.num_sites


def field_log_weight_L(config: SpinConfig, disorder: DisorderField, beta: float, h: float) -> float:
    """L = beta h |B_n|^{-1/2} sum_i J_i s_i."""
    if beta < 0:
        raise GibbsError(f"beta must be non-negative, got {beta!r}")
    _check_same(config.lattice, disorder.lattice)
    scale = beta * h / math.sqrt(config.lattice.num_sites)
    return scale * float(np.dot(disorder.values, config.spins))


def log_weights_L(spins: np.ndarray, disorder: DisorderField, beta: float, h: float) -> np.ndarray:
    """L for every row of a (k, N) stack."""
    scale = beta * h / math.sqrt(disorder.lattice.num_sites)
    return scale * (np.asarray(spins, dtype=np.float64) @ disorder.values)


def gauge_map(config: SpinConfig) -> SpinConfig:
    """eta_i = (-1)^{|i|_1} s_i."""
    return SpinConfig(config.lattice, config.spins * config.lattice.parity)
