"""Geometry of the cube B_n = {-n, ..., n}^d under free boundary conditions."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property

import numpy as np


class LatticeError(ValueError):
    """Raised for invalid dimension, radius or block parameters."""


@dataclass(frozen=True)
class LatticeSpec:
    """Sites, nearest-neighbour edges and boundary of B_n.

    Sites are ordered lexicographically on their coordinates and edges
    lexicographically on (min endpoint, max endpoint), so indices depend
    only on ``(d, n)``.
    """

    d: int
    n: int
    coords: np.ndarray = field(repr=False, compare=False)
    edges: np.ndarray = field(repr=False, compare=False)

    @property
    def side(self) -> int:
        return 2 * self.n + 1

    @property
    def num_sites(self) -> int:
        return self.coords.shape[0]

    @property
    def num_edges(self) -> int:
        return self.edges.shape[0]

    @property
    def sites(self) -> list[tuple[int, ...]]:
        return [tuple(int(c) for c in row) for row in self.coords]

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        mask = np.any(np.abs(self.coords) == self.n, axis=1)
        mask.flags.writeable = False
        return mask

    @property
    def boundary(self) -> frozenset[int]:
        return frozenset(np.flatnonzero(self.boundary_mask).tolist())

    @cached_property
    def parity(self) -> np.ndarray:
        """(-1)^{|i|_1} per site, as int8."""
        par = np.where(np.abs(self.coords).sum(axis=1) % 2 == 0, 1, -1).astype(np.int8)
        par.flags.writeable = False
        return par

    @cached_property
    def degree(self) -> np.ndarray:
        deg = np.bincount(self.edges.ravel(), minlength=self.num_sites)
        deg.flags.writeable = False
        return deg

    @cached_property
    def neighbors(self) -> tuple[np.ndarray, np.ndarray]:
        """CSR adjacency ``(offsets, targets)``; neighbours of i are
        ``targets[offsets[i]:offsets[i+1]]`` in increasing order."""
        both = np.concatenate([self.edges, self.edges[:, ::-1]])
        order = np.lexsort((both[:, 1], both[:, 0]))
        both = both[order]
        offsets = np.zeros(self.num_sites + 1, dtype=np.int64)
        np.cumsum(np.bincount(both[:, 0], minlength=self.num_sites), out=offsets[1:])
        return offsets, np.ascontiguousarray(both[:, 1])

    def index(self, point) -> int:
        """Site index of a coordinate tuple."""
        point = tuple(int(c) for c in point)
        if len(point) != self.d or any(abs(c) > self.n for c in point):
            raise LatticeError(f"{point} is not a site of B_{self.n} in d={self.d}")
        idx = 0
        for c in point:
            idx = idx * self.side + (c + self.n)
        return idx

    def l1_distance(self, i, j) -> np.ndarray | int:
        return np.abs(self.coords[i] - self.coords[j]).sum(axis=-1)

    def linf_distance(self, i, j) -> np.ndarray | int:
        return np.abs(self.coords[i] - self.coords[j]).max(axis=-1)

    def cube_sites(self, radius: int, center=None) -> np.ndarray:
        """Indices of B_radius(center) ∩ B_n, in site order."""
        center = np.zeros(self.d, dtype=np.int64) if center is None else np.asarray(center)
        inside = np.all(np.abs(self.coords - center) <= radius, axis=1)
        return np.flatnonzero(inside)


def build_lattice(d: int, n: int) -> LatticeSpec:
    if int(d) != d or d < 2:
        raise LatticeError(f"dimension must be an integer >= 2, got {d!r}")
    if int(n) != n or n < 0:
        raise LatticeError(f"radius must be an integer >= 0, got {n!r}")
    d, n = int(d), int(n)
    side = 2 * n + 1
    coords = np.array(list(itertools.product(range(-n, n + 1), repeat=d)), dtype=np.int64)
    coords = coords.reshape(side**d, d)
    idx = np.arange(side**d).reshape((side,) * d)
    pairs = []
    for axis in range(d):
        lo = np.take(idx, np.arange(side - 1), axis=axis).ravel()
        hi = np.take(idx, np.arange(1, side), axis=axis).ravel()
        pairs.append(np.stack([lo, hi], axis=1))
    edges = np.concatenate(pairs) if pairs else np.zeros((0, 2), dtype=np.int64)
    edges = edges[np.lexsort((edges[:, 1], edges[:, 0]))].astype(np.int64)
    coords.flags.writeable = False
    edges.flags.writeable = False
    return LatticeSpec(d=d, n=n, coords=coords, edges=edges)


def window_radius(n: int, eps: float) -> int:
    """floor((1 - eps) * n), computed without float round-off."""
    frac = Fraction(str(eps)) if isinstance(eps, float) else Fraction(eps)
    return math.floor((1 - frac) * n)


def interior_window(lattice: LatticeSpec, eps: float) -> np.ndarray:
    if not 0 < eps < 1:
        raise LatticeError(f"eps must lie in (0, 1), got {eps!r}")
    return lattice.cube_sites(window_radius(lattice.n, eps))


@dataclass(frozen=True)
class Block:
    """The cube B_k(x) clipped to B_n."""

    center: tuple[int, ...]
    k: int
    sites: np.ndarray = field(repr=False, compare=False)
    faces: tuple[np.ndarray, ...] = field(repr=False, compare=False)
    interior: bool = True

    @property
    def num_sites(self) -> int:
        return self.sites.shape[0]

    def is_neighbor(self, other: "Block") -> bool:
        diff = np.abs(np.subtract(self.center, other.center))
        return bool(diff.sum() == self.k and diff.max() == self.k)


def _make_block(lattice: LatticeSpec, center, k: int) -> Block:
    center = np.asarray(center, dtype=np.int64)
    sites = lattice.cube_sites(k, center)
    rel = lattice.coords[sites] - center
    faces = []
    for axis in range(lattice.d):
        for sign in (-1, 1):
            faces.append(sites[rel[:, axis] == sign * k])
    interior = bool(np.all(np.abs(center) + k <= lattice.n))
    return Block(tuple(int(c) for c in center), k, sites, tuple(faces), interior)


def block_grid(lattice: LatticeSpec, k: int) -> list[Block]:
    """Blocks B_k(x) for all centres x in kZ^d ∩ B_n, in lexicographic order."""
    if int(k) != k or not 1 <= k <= lattice.n:
        raise LatticeError(f"block radius must lie in [1, {lattice.n}], got {k!r}")
    k = int(k)
    axis_centers = [c for c in range(-lattice.n, lattice.n + 1) if c % k == 0]
    return [
        _make_block(lattice, center, k)
        for center in itertools.product(axis_centers, repeat=lattice.d)
    ]
