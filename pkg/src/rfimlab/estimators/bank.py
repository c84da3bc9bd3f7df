"""Zero-field sample banks shared by every disorder realization."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..disorder import DisorderField
from ..gibbs import ModelParams
from ..lattice import LatticeSpec
from ..samplers import SampleSchedule, run_chain


@dataclass
class SampleBank:
    """Configurations of the h = 0 model at one (d, n, beta).

    ``groups`` assigns each row to a contiguous stretch of the chain; error
    bars are jackknifed over groups. A symmetrized bank appends the global
    flip of every row (the h = 0 law is flip invariant) and gives the
    flipped row the group of its source.
    """

    lattice: LatticeSpec
    beta: float
    spins: np.ndarray = field(repr=False)
    groups: np.ndarray = field(repr=False)
    interaction: str = "ferro"
    meta: dict = field(default_factory=dict)

    @property
    def size(self) -> int:
        return self.spins.shape[0]

    @property
    def num_groups(self) -> int:
        return int(self.groups.max()) + 1 if self.size else 0

    @classmethod
    def from_chain(cls, lattice, beta, schedule: SampleSchedule, seed: int, *,
                   symmetrize=True, n_groups=20, interaction="ferro") -> "SampleBank":
        zero = DisorderField.from_values(lattice, np.zeros(lattice.num_sites))
        spins = run_chain(ModelParams(beta, 0.0, interaction), zero, schedule, seed)
        return cls.from_samples(lattice, beta, spins, symmetrize=symmetrize, n_groups=n_groups,
                                interaction=interaction,
                                meta={"schedule": schedule.__dict__.copy(), "seed": int(seed)})

    @classmethod
    def from_samples(cls, lattice, beta, spins, *, symmetrize=False, n_groups=20,
                     interaction="ferro", meta=None) -> "SampleBank":
        spins = np.ascontiguousarray(spins, dtype=np.int8)
        s0 = spins.shape[0]
        g = max(1, min(n_groups, s0))
        groups = (np.arange(s0) * g // max(s0, 1)).astype(np.int64)
        if symmetrize:
            spins = np.concatenate([spins, -spins])
            groups = np.concatenate([groups, groups])
        meta = dict(meta or {})
        meta["symmetrized"] = bool(symmetrize)
        return cls(lattice, float(beta), spins, groups, interaction, meta)

    def gauge_mapped(self) -> "SampleBank":
        """The antiferromagnetic bank eta -> (-1)^{|i|_1} eta."""
        other = "antiferro" if self.interaction == "ferro" else "ferro"
        spins = self.spins * self.lattice.parity
        return SampleBank(self.lattice, self.beta, spins, self.groups.copy(), other, dict(self.meta))
