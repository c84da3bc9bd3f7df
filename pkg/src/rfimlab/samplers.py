"""Local and cluster Monte Carlo for the random field Ising model, plus
exact enumeration on small lattices."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import logsumexp

from . import _kernels as K
from .disorder import DisorderField, make_rng
from .gibbs import ModelParams, SpinConfig, energy_batch, log_weights_L
from .lattice import LatticeSpec

UPDATE_KINDS = ("metropolis", "cluster", "mixed")
ENUMERATION_CAP = 20
# uniforms drawn per chunk are capped at roughly this many doubles
_CHUNK_DOUBLES = 1 << 22


class SamplerError(ValueError):
    pass


@dataclass(frozen=True)
class SampleSchedule:
    burn_in_sweeps: int = 2000
    thinning: int = 10
    samples: int = 1000
    update_kind: str = "cluster"
    global_flip: bool = True

    def __post_init__(self):
        for name in ("burn_in_sweeps", "samples"):
            if int(getattr(self, name)) < 0:
                raise SamplerError(f"{name} must be >= 0")
        if int(self.thinning) < 1:
            raise SamplerError("thinning must be >= 1")
        if self.update_kind not in UPDATE_KINDS:
            raise SamplerError(f"update_kind must be one of {UPDATE_KINDS}, got {self.update_kind!r}")


@dataclass
class _Frame:
    """Arrays the kernels need, in the frame where updates happen.

    Cluster moves for an antiferromagnet run on eta = parity * sigma with
    the gauge-flipped field; the frame remembers how to map back.
    """

    parity: np.ndarray | None
    hfield: np.ndarray
    csign: int
    p_bond: float
    ghost_p: np.ndarray
    ghost_sign: np.ndarray
    bh: np.ndarray
    e0: np.ndarray
    e1: np.ndarray
    offsets: np.ndarray
    targets: np.ndarray


def _make_frame(params: ModelParams, disorder: DisorderField, gauge: bool, wired: bool = False) -> _Frame:
    lat = disorder.lattice
    hfield = params.site_fields(disorder)
    parity = None
    csign = params.coupling_sign
    if gauge:
        parity = lat.parity.astype(np.int8)
        hfield = hfield * parity
        csign = 1
    beta = params.beta
    ghost_p = -np.expm1(-2.0 * beta * np.abs(hfield))
    ghost_sign = np.where(hfield >= 0, 1, -1).astype(np.int8)
    if wired:
        ghost_p = np.where(lat.boundary_mask, 1.0, ghost_p)
        ghost_sign = np.where(lat.boundary_mask, 1, ghost_sign).astype(np.int8)
    offsets, targets = lat.neighbors
    return _Frame(
        parity=parity,
        hfield=np.ascontiguousarray(hfield, dtype=np.float64),
        csign=csign,
        p_bond=-math.expm1(-2.0 * beta),
        ghost_p=np.ascontiguousarray(ghost_p, dtype=np.float64),
        ghost_sign=ghost_sign,
        bh=np.ascontiguousarray(beta * hfield),
        e0=np.ascontiguousarray(lat.edges[:, 0]),
        e1=np.ascontiguousarray(lat.edges[:, 1]),
        offsets=offsets,
        targets=targets,
    )


@dataclass
class ChainState:
    """Mutable state of one Markov chain; owned by exactly one caller."""

    params: ModelParams
    disorder: DisorderField
    spins: np.ndarray
    rng: np.random.Generator
    sweep_count: int = 0
    global_flip: bool = True
    _frames: dict = field(default_factory=dict, repr=False)

    @classmethod
    def start(cls, params, disorder, seed, init="random", global_flip=True) -> "ChainState":
        rng = make_rng(seed)
        n = disorder.lattice.num_sites
        if init == "random":
            spins = np.where(rng.random(n) < 0.5, -1, 1).astype(np.int8)
        elif init == "plus":
            spins = np.ones(n, dtype=np.int8)
        else:
            raise SamplerError(f"unknown init {init!r}")
        return cls(params, disorder, spins, rng, 0, global_flip)

    @property
    def config(self) -> SpinConfig:
        return SpinConfig(self.disorder.lattice, self.spins)

    def frame(self, gauge: bool) -> _Frame:
        if gauge not in self._frames:
            self._frames[gauge] = _make_frame(self.params, self.disorder, gauge)
        return self._frames[gauge]


def metropolis_sweep(state: ChainState) -> ChainState:
    """One sequential pass of single-site Metropolis proposals."""
    fr = state.frame(False)
    n = state.spins.shape[0]
    U = state.rng.random((1, n))
    empty = np.empty((0, n), dtype=np.int8)
    K.metropolis_updates(state.spins, fr.offsets, fr.targets, fr.hfield, state.params.beta, fr.csign, U, empty, 1)
    state.sweep_count += 1
    return state


def _sw_width(frame: _Frame, n: int, mixed: bool) -> int:
    return frame.e0.shape[0] + 2 * n + 1 + (n if mixed else 0)


def _cluster_step(state: ChainState, gauge: bool, mixed: bool = False) -> ChainState:
    fr = state.frame(gauge)
    n = state.spins.shape[0]
    spins = state.spins * fr.parity if gauge else state.spins
    U = state.rng.random((1, _sw_width(fr, n, mixed)))
    do_flip = state.global_flip and state.params.h != 0
    K.sw_updates(
        spins, fr.e0, fr.e1, fr.p_bond, fr.ghost_p, fr.ghost_sign, fr.bh, do_flip,
        fr.offsets, fr.targets, fr.hfield, state.params.beta, mixed,
        U, np.empty((0, n), np.int8), np.empty((0, fr.e0.shape[0]), np.uint8), 1,
    )
    state.spins[:] = spins * fr.parity if gauge else spins
    state.sweep_count += 1
    return state


def cluster_update(state: ChainState) -> ChainState:
    """One Swendsen-Wang update with ghost-spin field bonds.

    Ferromagnetic couplings only; see gauge_cluster_update for the
    antiferromagnet.
    """
    if state.params.interaction != "ferro":
        raise SamplerError("cluster updates need ferromagnetic couplings; use gauge_cluster_update")
    return _cluster_step(state, gauge=False)


def gauge_cluster_update(state: ChainState) -> ChainState:
    """Cluster update for either sign of coupling.

    Antiferro chains are mapped to eta = (-1)^{|i|_1} sigma, updated as a
    ferromagnet in the gauge-flipped field, and mapped back.
    """
    return _cluster_step(state, gauge=state.params.interaction == "antiferro")


def _run(params, disorder, schedule, seed, *, record_bonds=False, wired=False, init="random"):
    lat = disorder.lattice
    n = lat.num_sites
    kind = schedule.update_kind
    thin = int(schedule.thinning)
    n_samples = int(schedule.samples)
    rng = make_rng(seed)
    if wired:
        init = "plus"
    if init == "random":
        spins = np.where(rng.random(n) < 0.5, -1, 1).astype(np.int8)
    else:
        spins = np.ones(n, dtype=np.int8)

    gauge = kind != "metropolis" and params.interaction == "antiferro"
    fr = _make_frame(params, disorder, gauge, wired=wired)
    if gauge:
        spins = spins * fr.parity
    m = fr.e0.shape[0]
    out_spins = np.empty((n_samples, n), dtype=np.int8)
    out_bonds = np.empty((n_samples if record_bonds else 0, m), dtype=np.uint8)

    if kind == "metropolis":
        if record_bonds:
            raise SamplerError("bond records need cluster updates")
        width = n

        def step(U, o_s, o_b, th):
            K.metropolis_updates(spins, fr.offsets, fr.targets, fr.hfield, params.beta, fr.csign, U, o_s, th)

    else:
        mixed = kind == "mixed"
        width = _sw_width(fr, n, mixed)
        do_flip = bool(schedule.global_flip and params.h != 0 and not wired)

        def step(U, o_s, o_b, th):
            K.sw_updates(
                spins, fr.e0, fr.e1, fr.p_bond, fr.ghost_p, fr.ghost_sign, fr.bh, do_flip,
                fr.offsets, fr.targets, fr.hfield, params.beta, mixed, U, o_s, o_b, th,
            )

    chunk = max(thin, (_CHUNK_DOUBLES // width) // thin * thin)
    left = int(schedule.burn_in_sweeps)
    no_s = np.empty((0, n), np.int8)
    no_b = np.empty((0, m), np.uint8)
    while left > 0:
        c = min(left, chunk)
        step(rng.random((c, width)), no_s, no_b, 1)
        left -= c
    done = 0
    while done < n_samples:
        k = min(n_samples - done, chunk // thin)
        o_b = out_bonds[done : done + k] if record_bonds else no_b
        step(rng.random((k * thin, width)), out_spins[done : done + k], o_b, thin)
        done += k
    if gauge:
        out_spins *= fr.parity
    return out_spins, out_bonds


def run_chain(params: ModelParams, disorder: DisorderField, schedule: SampleSchedule, seed: int) -> np.ndarray:
    """Configurations as a (samples, |B_n|) int8 array in site order.

    Every ``thinning``-th update after ``burn_in_sweeps`` is kept. Cluster
    and mixed updates of an antiferromagnet go through the gauge map.
    """
    spins, _ = _run(params, disorder, schedule, seed)
    return spins


def iter_chain(params, disorder, schedule, seed):
    lat = disorder.lattice
    for row in run_chain(params, disorder, schedule, seed):
        yield SpinConfig(lat, row)


# -- exact enumeration ---------------------------------------------------------


def all_states(lattice: LatticeSpec) -> np.ndarray:
    """All 2^N configurations as int8 rows; site 0 is the most significant bit."""
    n = lattice.num_sites
    if n > ENUMERATION_CAP:
        raise SamplerError(f"{n} sites exceeds the enumeration cap of {ENUMERATION_CAP}")
    idx = np.arange(1 << n, dtype=np.int64)[:, None]
    bits = (idx >> np.arange(n - 1, -1, -1, dtype=np.int64)) & 1
    return (2 * bits - 1).astype(np.int8)


@dataclass
class Enumeration:
    """Exact Gibbs law over all states of a small lattice."""

    states: np.ndarray
    probs: np.ndarray
    log_z: float
    values: dict

    def __getitem__(self, key):
        return self.values[key]

    def expect(self, f: np.ndarray) -> np.ndarray:
        return np.tensordot(self.probs, f, axes=(0, 0))


def _named_observable(name: str, states: np.ndarray, probs: np.ndarray, energies, lat):
    x = states.astype(np.float64)
    n = lat.num_sites
    if name == "m":
        return probs @ x.mean(axis=1)
    if name == "m2":
        return probs @ x.mean(axis=1) ** 2
    if name == "abs_m":
        return probs @ np.abs(x.mean(axis=1))
    if name == "energy":
        return probs @ energies
    if name == "sigma":
        return probs @ x
    if name == "sigma_sigma":
        return (x * probs[:, None]).T @ x
    one = probs @ x
    if name == "R12":
        return float(one @ one) / n
    two = (x * probs[:, None]).T @ x
    if name == "R12_sq":
        return float((two * two).sum()) / n**2
    if name == "R12_R13":
        return float(one @ two @ one) / n**2
    raise SamplerError(f"undefined observable {name!r}")


def exact_enumerate(
    params: ModelParams,
    disorder: DisorderField,
    observables: Sequence[str | Callable] = ("m",),
) -> Enumeration:
    """Exact expectations by summation over all 2^N states.

    Named observables: m, m2, abs_m, energy, sigma (vector), sigma_sigma
    (matrix), and the two/three-replica overlaps R12, R12_sq, R12_R13.
    A callable receives the (2^N, N) state array and returns one value per
    state (or per state and component).
    """
    lat = disorder.lattice
    states = all_states(lat)
    energies = energy_batch(params, disorder, states)
    logw = -params.beta * energies
    log_z = float(logsumexp(logw))
    probs = np.exp(logw - log_z)
    values = {}
    for obs in observables:
        if callable(obs):
            key = getattr(obs, "__name__", repr(obs))
            values[key] = np.tensordot(probs, np.asarray(obs(states), dtype=np.float64), axes=(0, 0))
        else:
            values[obs] = _named_observable(obs, states, probs, energies, lat)
    return Enumeration(states, probs, log_z, values)


def sample_exact(enum: Enumeration, size: int, seed: int) -> np.ndarray:
    """Draw configurations from an enumerated law by inverse CDF."""
    rng = make_rng(seed)
    cdf = np.cumsum(enum.probs)
    idx = np.searchsorted(cdf, rng.random(size) * cdf[-1], side="right")
    return enum.states[np.minimum(idx, len(cdf) - 1)]


def zero_field_log_z(lattice: LatticeSpec, beta: float) -> float:
    dis = DisorderField.from_values(lattice, np.zeros(lattice.num_sites))
    return exact_enumerate(ModelParams(beta, 0.0), dis, ()).log_z


def log_z_from_zero_field(enum0: Enumeration, disorder: DisorderField, beta: float, h: float) -> float:
    """log Z(J) = log Z_0 + log <e^L>_0, from an h = 0 enumeration."""
    L = log_weights_L(enum0.states, disorder, beta, h)
    return enum0.log_z + float(logsumexp(L, b=enum0.probs))
