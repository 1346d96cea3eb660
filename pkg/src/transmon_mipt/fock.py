"""Fock-space bookkeeping for a chain of truncated bosonic sites.

Basis enumeration (optionally restricted to a total-number sector),
state vectors, bipartite entanglement entropy, number moments, and
Born-rule configuration sampling.

Sites are 1-indexed in every public signature; internal arrays are
0-indexed. Basis ordering is lexicographic in the occupation tuple
with site 1 most significant, so serialized data is reproducible.
"""

from __future__ import annotations

import numpy as np

# Squared Schmidt values below this are dropped before the entropy sum,
# avoiding 0*log(0) from numerical noise.
SCHMIDT_CUTOFF = 1e-14

_NORM_TOL = 1e-8


class FockBasis:
    """Ordered occupation-number basis for ``L`` sites of local dimension ``d``.

    Parameters
    ----------
    L : int
        Number of sites (positive).
    d : int
        Local dimension; occupations run over ``0..d-1``.
    sector : int or None
        If given, keep only tuples with total occupation ``sector``.

    Attributes
    ----------
    states : ndarray, shape (dim, L)
        Occupation tuples in lexicographic order.
    index : dict
        Occupation tuple -> row position, a bijection onto ``range(dim)``.
    """

    __slots__ = ("L", "d", "sector", "states", "index", "dim", "_cut_cache")

    def __init__(self, L, d, sector, states):
        self.L = L
        self.d = d
        self.sector = sector
        self.states = states
        self.dim = states.shape[0]
        self.index = {tuple(int(v) for v in row): i for i, row in enumerate(states)}
        self._cut_cache = {}

    def __repr__(self):
        sec = "full" if self.sector is None else f"N={self.sector}"
        return f"FockBasis(L={self.L}, d={self.d}, {sec}, dim={self.dim})"

    def state_index(self, occupation):
        """Row of an occupation tuple, raising ``KeyError`` if absent."""
        return self.index[tuple(int(v) for v in occupation)]

    def site_values(self, site):
        """Occupation of 1-indexed ``site`` for every basis state (view)."""
        return self.states[:, site - 1]

    def basis_state(self, occupation):
        """Unit StateVector on the given occupation tuple."""
        amps = np.zeros(self.dim, dtype=np.complex128)
        amps[self.state_index(occupation)] = 1.0
        return StateVector(self, amps)

    def bipartition(self, cut):
        """Left/right factor labels for the ``[1..cut] | [cut+1..L]`` split.

        Returns ``(left_labels, right_labels, n_left, n_right)`` where the
        labels map each basis row to a row/column of the coefficient matrix
        whose singular values are the Schmidt coefficients. Cached per cut.
        """
        if cut in self._cut_cache:
            return self._cut_cache[cut]
        if not 1 <= cut < self.L:
            raise ValueError(f"cut must satisfy 1 <= cut < L, got {cut}")
        d = self.d
        left_code = np.zeros(self.dim, dtype=np.int64)
        for s in range(cut):
            left_code = left_code * d + self.states[:, s]
        right_code = np.zeros(self.dim, dtype=np.int64)
        for s in range(cut, self.L):
            right_code = right_code * d + self.states[:, s]
        left_vals, left_labels = np.unique(left_code, return_inverse=True)
        right_vals, right_labels = np.unique(right_code, return_inverse=True)
        out = (left_labels, right_labels, len(left_vals), len(right_vals))
        self._cut_cache[cut] = out
        return out


class StateVector:
    """Complex amplitudes over a :class:`FockBasis`."""

    __slots__ = ("basis", "amps")

    def __init__(self, basis, amps):
        amps = np.asarray(amps, dtype=np.complex128)
        if amps.shape != (basis.dim,):
            raise ValueError(f"amplitude shape {amps.shape} does not match dim {basis.dim}")
        self.basis = basis
        self.amps = amps

    def norm(self):
        return float(np.linalg.norm(self.amps))

    def normalize(self):
        """Rescale to unit norm in place and return self."""
        n = np.linalg.norm(self.amps)
        if n < 1e-14:
            raise ValueError("cannot normalize a null state")
        self.amps = self.amps / n
        return self

    def copy(self):
        return StateVector(self.basis, self.amps.copy())


def _sector_tuples(L, d, sector):
    # Depth-first enumeration in lexicographic order; prunes infeasible sums.
    out = []
    occ = [0] * L
    cap = d - 1

    def rec(site, remaining):
        if site == L:
            out.append(tuple(occ))
            return
        tail_cap = (L - site - 1) * cap
        lo = max(0, remaining - tail_cap)
        hi = min(cap, remaining)
        for v in range(lo, hi + 1):
            occ[site] = v
            rec(site + 1, remaining - v)

    rec(0, sector)
    return out


def build_basis(L, d, sector=None):
    """Enumerate the occupation basis.

    Parameters
    ----------
    L : int
        Site count, positive.
    d : int
        Local dimension, at least 2.
    sector : int, optional
        Total boson number restriction.

    Returns
    -------
    FockBasis
        Deterministic lexicographic ordering (site 1 most significant).
    """
    if L < 1:
        raise ValueError(f"L must be positive, got {L}")
    if d < 2:
        raise ValueError(f"d must be at least 2, got {d}")
    if sector is None:
        grids = np.indices((d,) * L).reshape(L, -1).T
        states = np.ascontiguousarray(grids, dtype=np.int16)
    else:
        if not 0 <= sector <= L * (d - 1):
            raise ValueError(
                f"sector {sector} is empty: no occupation tuple of {L} sites "
                f"with values in [0, {d - 1}] sums to it"
            )
        states = np.array(_sector_tuples(L, d, sector), dtype=np.int16).reshape(-1, L)
    return FockBasis(L, d, sector, states)


def _require_normalized(psi, op):
    n2 = float(np.vdot(psi.amps, psi.amps).real)
    if abs(n2 - 1.0) > _NORM_TOL:
        raise ValueError(f"{op} requires a normalized state, got |psi|^2 = {n2!r}")


def schmidt_entropy(psi, cut):
    """Von Neumann entropy of the ``[1..cut]`` block, in nats.

    Singular values of the bipartite coefficient matrix give the Schmidt
    spectrum; squared values below ``SCHMIDT_CUTOFF`` are dropped, so a
    product state returns exactly 0.0.
    """
    _require_normalized(psi, "schmidt_entropy")
    left, right, n_l, n_r = psi.basis.bipartition(cut)
    if n_l == 1 or n_r == 1:
        return 0.0
    coeff = np.zeros((n_l, n_r), dtype=np.complex128)
    coeff[left, right] = psi.amps
    lam2 = np.linalg.svd(coeff, compute_uv=False) ** 2
    lam2 = lam2[lam2 > SCHMIDT_CUTOFF]
    if lam2.size <= 1:
        return 0.0
    return float(max(-np.dot(lam2, np.log(lam2)), 0.0))


def number_moments(psi, region):
    """First and second moments of the region number operator.

    Parameters
    ----------
    psi : StateVector
    region : iterable of int
        1-indexed sites, a subset of ``[1, L]``.

    Returns
    -------
    (float, float)
        ``(<N_A>, <N_A^2>)`` in the occupation basis.
    """
    basis = psi.basis
    sites = sorted(set(int(s) for s in region))
    if sites and (sites[0] < 1 or sites[-1] > basis.L):
        raise ValueError(f"region {sites} not contained in [1, {basis.L}]")
    cols = [s - 1 for s in sites]
    n_a = basis.states[:, cols].sum(axis=1).astype(np.float64)
    prob = np.real(psi.amps * psi.amps.conj())
    return float(prob @ n_a), float(prob @ (n_a * n_a))


def sample_configuration(psi, rng):
    """Draw one occupation tuple with Born probability ``|amp|^2``."""
    prob = np.real(psi.amps * psi.amps.conj())
    cum = np.cumsum(prob)
    u = rng.random() * cum[-1]
    i = int(np.searchsorted(cum, u, side="right"))
    i = min(i, psi.basis.dim - 1)
    return tuple(int(v) for v in psi.basis.states[i])
