"""FK-Ising random-cluster model: weights, sampling, connectivity,
Edwards-Sokal colouring, good blocks and the estimate of q."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from . import _kernels as K
from .disorder import DisorderField, make_rng
from .gibbs import ModelParams, SpinConfig
from .lattice import Block, LatticeSpec
from .samplers import SampleSchedule, _run

BOUNDARY_CONDITIONS = ("free", "wired")
PATTERNS = ("all_connected", "pair_xy_wz", "pair_xw_yz", "pair_xz_yw", "other")
# self-dual point of the square lattice, beta_c = log(1 + sqrt 2) / 2
P_SELF_DUAL_2D = math.sqrt(2) / (1 + math.sqrt(2))


class FKError(ValueError):
    pass


def beta_to_p(beta: float) -> float:
    if not beta > 0:
        raise FKError(f"beta must be positive, got {beta!r}")
    return -math.expm1(-2.0 * beta)


def p_to_beta(p: float) -> float:
    if not 0 < p < 1:
        raise FKError(f"p must lie in (0, 1), got {p!r}")
    return -0.5 * math.log1p(-p)


def onsager_q(beta: float) -> float:
    """q* = (1 - sinh(2 beta)^-4)^(1/4), the squared spontaneous magnetization in d = 2."""
    s = math.sinh(2.0 * beta)
    if s <= 1.0:
        raise FKError(f"beta = {beta} is not above the critical point")
    return (1.0 - s**-4) ** 0.25


@dataclass(frozen=True)
class BondConfig:
    lattice: LatticeSpec
    bonds: np.ndarray = field(repr=False, compare=False)
    boundary_condition: str = "free"

    def __post_init__(self):
        b = np.asarray(self.bonds)
        if b.shape != (self.lattice.num_edges,):
            raise FKError(f"expected {self.lattice.num_edges} bonds, got shape {b.shape}")
        if not np.all((b == 0) | (b == 1)):
            raise FKError("bond values must be 0 or 1")
        if self.boundary_condition not in BOUNDARY_CONDITIONS:
            raise FKError(f"unknown boundary condition {self.boundary_condition!r}")
        b = b.astype(np.uint8, copy=True)
        b.flags.writeable = False
        object.__setattr__(self, "bonds", b)

    @property
    def num_open(self) -> int:
        return int(self.bonds.sum())


def _merge_mask(lattice: LatticeSpec, bc: str) -> np.ndarray:
    if bc == "wired":
        return lattice.boundary_mask
    return np.zeros(lattice.num_sites, dtype=np.bool_)


def _labels(lattice: LatticeSpec, bonds: np.ndarray, bc: str) -> np.ndarray:
    bonds = np.atleast_2d(np.asarray(bonds, dtype=np.uint8))
    e = lattice.edges
    return K.labels_from_bonds(bonds, e[:, 0].copy(), e[:, 1].copy(), lattice.num_sites, _merge_mask(lattice, bc))


@dataclass(frozen=True)
class ClusterPartition:
    lattice: LatticeSpec
    labels: np.ndarray = field(repr=False, compare=False)
    boundary_condition: str = "free"

    @property
    def num_components(self) -> int:
        return int(np.count_nonzero(self.labels == np.arange(self.labels.shape[0])))

    def connected(self, x: int, y: int) -> bool:
        return bool(self.labels[x] == self.labels[y])

    def connected_to_boundary(self, x: int) -> bool:
        lat = self.lattice
        if lat.boundary_mask[x]:
            return True
        return bool(np.isin(self.labels[x], self.labels[lat.boundary_mask]))

    def component_sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.labels.shape[0])


def cluster_partition(omega: BondConfig) -> ClusterPartition:
    labels = _labels(omega.lattice, omega.bonds, omega.boundary_condition)[0]
    return ClusterPartition(omega.lattice, labels, omega.boundary_condition)


def rc_weight(omega: BondConfig, p: float) -> float:
    """log of p^E (1-p)^(|E|-E) 2^k."""
    if not 0 < p < 1:
        raise FKError(f"p must lie in (0, 1), got {p!r}")
    k = cluster_partition(omega).num_components
    e = omega.num_open
    return e * math.log(p) + (omega.lattice.num_edges - e) * math.log1p(-p) + k * math.log(2.0)


@dataclass
class RCStream:
    """Bond samples from the random-cluster measure, one row per sample."""

    lattice: LatticeSpec
    p: float
    boundary_condition: str
    bonds: np.ndarray = field(repr=False)
    _labels: np.ndarray | None = field(default=None, repr=False)

    def __len__(self):
        return self.bonds.shape[0]

    def __iter__(self):
        for row in self.bonds:
            yield BondConfig(self.lattice, row, self.boundary_condition)

    @property
    def labels(self) -> np.ndarray:
        if self._labels is None:
            self._labels = _labels(self.lattice, self.bonds, self.boundary_condition)
        return self._labels

    def connection_indicator(self, x: int, y: int) -> np.ndarray:
        lab = self.labels
        return lab[:, x] == lab[:, y]

    def boundary_indicator(self, x: int) -> np.ndarray:
        """Per sample, whether x is joined to some site of the boundary."""
        lab = self.labels
        bmask = self.lattice.boundary_mask
        if bmask[x]:
            return np.ones(len(self), dtype=bool)
        return np.any(lab[:, bmask] == lab[:, [x]], axis=1)


def rc_sample(p: float, bc: str, lattice: LatticeSpec, schedule: SampleSchedule, seed: int) -> RCStream:
    """Random-cluster samples via the Edwards-Sokal alternation.

    Wired samples come from the same Swendsen-Wang kernel with every
    boundary spin tied to a ghost fixed at +1, which puts all boundary
    vertices in one cluster.
    """
    if bc not in BOUNDARY_CONDITIONS:
        raise FKError(f"unknown boundary condition {bc!r}")
    if schedule.update_kind != "cluster":
        schedule = SampleSchedule(schedule.burn_in_sweeps, schedule.thinning, schedule.samples, "cluster")
    if p >= 1.0:
        bonds = np.ones((schedule.samples, lattice.num_edges), dtype=np.uint8)
        return RCStream(lattice, p, bc, bonds)
    if p <= 0.0:
        bonds = np.zeros((schedule.samples, lattice.num_edges), dtype=np.uint8)
        return RCStream(lattice, p, bc, bonds)
    params = ModelParams(p_to_beta(p), 0.0)
    dis = DisorderField.from_values(lattice, np.zeros(lattice.num_sites))
    _, bonds = _run(params, dis, schedule, seed, record_bonds=True, wired=bc == "wired")
    return RCStream(lattice, p, bc, bonds)


def color_clusters(omega: BondConfig, seed: int) -> SpinConfig:
    """Independent uniform sign per open cluster."""
    if omega.boundary_condition != "free":
        raise FKError("colouring is defined for the free boundary condition only")
    part = cluster_partition(omega)
    rng = make_rng(seed)
    colors = np.where(rng.random(omega.lattice.num_sites) < 0.5, -1, 1).astype(np.int8)
    return SpinConfig(omega.lattice, colors[part.labels])


def color_stream(stream: RCStream, seed: int) -> np.ndarray:
    """Colour every sample of a free-boundary stream; (samples, N) int8."""
    if stream.boundary_condition != "free":
        raise FKError("colouring is defined for the free boundary condition only")
    rng = make_rng(seed)
    lab = stream.labels
    colors = np.where(rng.random(lab.shape) < 0.5, -1, 1).astype(np.int8)
    return np.take_along_axis(colors, lab.astype(np.int64), axis=1)


def _pattern(lx, ly, lw, lz) -> str:
    if lx == ly == lw == lz:
        return "all_connected"
    if lx == ly and lw == lz:
        return "pair_xy_wz"
    if lx == lw and ly == lz:
        return "pair_xw_yz"
    if lx == lz and ly == lw:
        return "pair_xz_yw"
    return "other"


def four_point_classify(partition: ClusterPartition, x: int, y: int, w: int, z: int) -> str:
    if len({x, y, w, z}) != 4:
        raise FKError("four_point_classify needs four distinct sites")
    lab = partition.labels
    return _pattern(lab[x], lab[y], lab[w], lab[z])


def four_point_even(labels: np.ndarray, x, y, w, z) -> np.ndarray:
    """Indicator that every cluster holds an even number of {x, y, w, z};
    its mean estimates <s_x s_y s_w s_z> at zero field."""
    lx, ly, lw, lz = labels[..., x], labels[..., y], labels[..., w], labels[..., z]
    all_c = (lx == ly) & (ly == lw) & (lw == lz)
    pairs = ((lx == ly) & (lw == lz)) | ((lx == lw) & (ly == lz)) | ((lx == lz) & (ly == lw))
    return all_c | pairs


def is_good_block(omega: BondConfig, block: Block) -> bool:
    """Good-block test on the open edges inside the block.

    (i) one cluster touches all 2d faces, and (ii) every other cluster has
    coordinate extent (l-infinity diameter) below k, so no long open path
    escapes the crossing cluster.
    """
    if not block.interior:
        raise FKError("good-block test needs a block fully inside B_n")
    lat = omega.lattice
    sites = block.sites
    inside = np.zeros(lat.num_sites, dtype=bool)
    inside[sites] = True
    e = lat.edges
    keep = inside[e[:, 0]] & inside[e[:, 1]] & (omega.bonds == 1)
    bonds = keep.astype(np.uint8)[None, :]
    labels = K.labels_from_bonds(bonds, e[:, 0].copy(), e[:, 1].copy(), lat.num_sites,
                                 np.zeros(lat.num_sites, dtype=np.bool_))[0]
    sub = labels[sites]
    face_sets = [set(labels[f].tolist()) for f in block.faces]
    crossing = set.intersection(*face_sets)
    if len(crossing) != 1:
        return False
    (giant,) = crossing
    coords = lat.coords[sites]
    order = np.argsort(sub, kind="stable")
    sub_sorted = sub[order]
    starts = np.flatnonzero(np.r_[True, sub_sorted[1:] != sub_sorted[:-1]])
    lo = np.minimum.reduceat(coords[order], starts, axis=0)
    hi = np.maximum.reduceat(coords[order], starts, axis=0)
    extent = (hi - lo).max(axis=1)
    others = sub_sorted[starts] != giant
    return bool(np.all(extent[others] < block.k))


def good_block_fraction(stream: RCStream, blocks) -> float:
    blocks = [b for b in blocks if b.interior]
    hits = [is_good_block(omega, b) for omega in stream for b in blocks]
    return float(np.mean(hits))


@dataclass(frozen=True)
class SqrtQEstimate:
    n: int
    value: float
    stderr: float
    samples: int


@dataclass(frozen=True)
class QEstimate:
    p: float
    per_n: tuple
    q_hat: float
    q_stderr: float
    provenance: str = "fk-estimate"


def estimate_sqrt_q(p: float, n_list, samples: int, d: int = 2, seed: int = 0,
                    burn_in: int = 500, thinning: int = 2, n_batches: int = 50) -> QEstimate:
    """Monte Carlo P(0 <-> boundary of B_n) under free boundary, per n.

    q_hat is the square of the estimate at the largest n.
    """
    from .lattice import build_lattice
    from .stats import batch_means
    from .disorder import derive_seed

    if d == 2 and p <= P_SELF_DUAL_2D:
        warnings.warn(f"p = {p} is not supercritical in d = 2", stacklevel=2)
    per_n = []
    for n in sorted(n_list):
        lat = build_lattice(d, n)
        origin = lat.index((0,) * d)
        if p >= 1.0 or p <= 0.0:
            val = 1.0 if (p >= 1.0 or n == 0) else 0.0
            per_n.append(SqrtQEstimate(n, val, 0.0, samples))
            continue
        sched = SampleSchedule(burn_in, thinning, samples, "cluster")
        stream = rc_sample(p, "free", lat, sched, derive_seed(seed, "estimate-q", n))
        hit = stream.boundary_indicator(origin).astype(np.float64)
        mean, se = batch_means(hit, min(n_batches, max(1, samples)))
        per_n.append(SqrtQEstimate(n, mean, se, samples))
    last = per_n[-1]
    return QEstimate(p, tuple(per_n), last.value**2, 2 * last.value * last.stderr)


# -- exact enumeration of the bond model ---------------------------------------


@dataclass
class RCEnumeration:
    lattice: LatticeSpec
    p: float
    boundary_condition: str
    bonds: np.ndarray
    probs: np.ndarray
    labels: np.ndarray

    def connection_matrix(self) -> np.ndarray:
        lab = self.labels
        n = lab.shape[1]
        out = np.empty((n, n))
        for i in range(n):
            out[i] = self.probs @ (lab == lab[:, [i]])
        return out

    def four_point(self, x, y, w, z) -> float:
        return float(self.probs @ four_point_even(self.labels, x, y, w, z))

    def pattern_probs(self, x, y, w, z) -> dict:
        lab = self.labels
        pats = [_pattern(*row) for row in lab[:, [x, y, w, z]]]
        out = dict.fromkeys(PATTERNS, 0.0)
        for pat, pr in zip(pats, self.probs):
            out[pat] += pr
        return out


def enumerate_rc(lattice: LatticeSpec, p: float, bc: str = "free", max_edges: int = 20) -> RCEnumeration:
    """Exact random-cluster law over all 2^|E| bond states."""
    m = lattice.num_edges
    if m > max_edges:
        raise FKError(f"{m} edges exceeds the bond enumeration cap of {max_edges}")
    idx = np.arange(1 << m, dtype=np.int64)[:, None]
    bonds = ((idx >> np.arange(m, dtype=np.int64)) & 1).astype(np.uint8)
    labels = _labels(lattice, bonds, bc)
    k = K.count_components(labels)
    e = bonds.sum(axis=1)
    logw = e * math.log(p) + (m - e) * math.log1p(-p) + k * math.log(2.0)
    w = np.exp(logw - logw.max())
    return RCEnumeration(lattice, p, bc, bonds, w / w.sum(), labels)


def corner_quadruples(lattice: LatticeSpec):
    n, d = lattice.n, lattice.d
    corners = [lattice.index(c) for c in np.array(np.meshgrid(*[[-n, n]] * d, indexing="ij")).reshape(d, -1).T]
    return list(combinations(corners, 4))
