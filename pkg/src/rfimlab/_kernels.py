"""Compiled inner loops. Randomness always arrives as pre-drawn uniforms so
that every kernel is a pure function of its inputs."""

import numba as nb
import numpy as np


@nb.njit(cache=True, inline="always")
def _find(parent, i):
    while parent[i] != i:
        parent[i] = parent[parent[i]]
        i = parent[i]
    return i


@nb.njit(cache=True, inline="always")
def _union(parent, a, b):
    ra = _find(parent, a)
    rb = _find(parent, b)
    if ra == rb:
        return
    # smaller root wins so labels are canonical
    if ra < rb:
        parent[rb] = ra
    else:
        parent[ra] = rb


@nb.njit(cache=True)
def _metropolis_pass(spins, offsets, targets, hfield, beta, csign, u):
    n = spins.shape[0]
    for i in range(n):
        nbsum = 0
        for k in range(offsets[i], offsets[i + 1]):
            nbsum += spins[targets[k]]
        dh = 2.0 * spins[i] * (csign * nbsum + hfield[i])
        if dh <= 0.0 or u[i] < np.exp(-beta * dh):
            spins[i] = -spins[i]


@nb.njit(cache=True)
def metropolis_updates(spins, offsets, targets, hfield, beta, csign, U, out, thin):
    """len(U) sequential-sweep updates; every thin-th state goes to out."""
    rec = 0
    for t in range(U.shape[0]):
        _metropolis_pass(spins, offsets, targets, hfield, beta, csign, U[t])
        if out.shape[0] > 0 and (t + 1) % thin == 0:
            out[rec, :] = spins
            rec += 1


@nb.njit(cache=True)
def _sw_pass(spins, e0, e1, p_bond, ghost_p, ghost_sign, u, parent, bonds):
    n = spins.shape[0]
    m = e0.shape[0]
    for i in range(n + 1):
        parent[i] = i
    for k in range(m):
        a = e0[k]
        b = e1[k]
        if spins[a] == spins[b] and u[k] < p_bond:
            bonds[k] = 1
            _union(parent, a, b)
        else:
            bonds[k] = 0
    for i in range(n):
        if ghost_p[i] > 0.0 and spins[i] == ghost_sign[i] and u[m + i] < ghost_p[i]:
            _union(parent, i, n)
    groot = _find(parent, n)
    for i in range(n):
        r = _find(parent, i)
        if r != groot:
            spins[i] = 1 if u[m + n + r] < 0.5 else -1


@nb.njit(cache=True)
def _global_flip(spins, bh, u):
    # Metropolis proposal s -> -s; only the field term changes
    lw = 0.0
    for i in range(spins.shape[0]):
        lw += bh[i] * spins[i]
    if lw <= 0.0 or u < np.exp(-2.0 * lw):
        for i in range(spins.shape[0]):
            spins[i] = -spins[i]


@nb.njit(cache=True)
def sw_updates(
    spins, e0, e1, p_bond, ghost_p, ghost_sign, bh, do_flip,
    offsets, targets, hfield, beta, do_metro,
    U, out_spins, out_bonds, thin,
):
    """Swendsen-Wang updates with an optional ghost spin, optional global
    flip move and optional trailing Metropolis sweep (mixed dynamics).

    Row layout of U: [bond uniforms (E) | ghost (N) | colours (N) | flip (1) | metropolis (N)].
    """
    n = spins.shape[0]
    m = e0.shape[0]
    parent = np.empty(n + 1, dtype=np.int64)
    bonds = np.empty(m, dtype=np.uint8)
    rec = 0
    for t in range(U.shape[0]):
        u = U[t]
        _sw_pass(spins, e0, e1, p_bond, ghost_p, ghost_sign, u, parent, bonds)
        if do_flip:
            _global_flip(spins, bh, u[m + 2 * n])
        if do_metro:
            _metropolis_pass(spins, offsets, targets, hfield, beta, 1, u[m + 2 * n + 1 :])
        if (t + 1) % thin == 0:
            if out_spins.shape[0] > 0:
                out_spins[rec, :] = spins
            if out_bonds.shape[0] > 0:
                out_bonds[rec, :] = bonds
            rec += 1


@nb.njit(cache=True)
def labels_from_bonds(bonds, e0, e1, n, merge):
    """Canonical component labels (smallest site index in the component)
    for each row of bonds; sites with merge[i] are joined together first."""
    k = bonds.shape[0]
    labels = np.empty((k, n), dtype=np.int32)
    parent = np.empty(n, dtype=np.int64)
    first = -1
    for i in range(n):
        if merge[i]:
            first = i
            break
    for s in range(k):
        for i in range(n):
            parent[i] = i
        if first >= 0:
            for i in range(first + 1, n):
                if merge[i]:
                    _union(parent, first, i)
        for e in range(e0.shape[0]):
            if bonds[s, e]:
                _union(parent, e0[e], e1[e])
        for i in range(n):
            labels[s, i] = _find(parent, i)
    return labels


@nb.njit(cache=True)
def count_components(labels):
    k = labels.shape[0]
    n = labels.shape[1]
    out = np.zeros(k, dtype=np.int64)
    for s in range(k):
        c = 0
        for i in range(n):
            if labels[s, i] == i:
                c += 1
        out[s] = c
    return out


@nb.njit(cache=True)
def tuple_products(X, tuples, out):
    """out[s, t] = prod_k X[s, tuples[t, k]] for +-1 rows X."""
    S = X.shape[0]
    T = tuples.shape[0]
    L = tuples.shape[1]
    for s in range(S):
        for t in range(T):
            p = 1
            for k in range(L):
                p *= X[s, tuples[t, k]]
            out[s, t] = p
