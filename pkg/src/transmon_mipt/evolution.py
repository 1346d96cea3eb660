"""Attractive Bose-Hubbard Hamiltonian on a chain and step propagators.

    H = sum_l [ omega_l n_l - (U_l/2) n_l (n_l - 1)
                + J_l (a^dag_l a_{l+1} + h.c.) ]

Energies are quoted in units of the mean hopping, times in its inverse.
Disorder is static: one Gaussian draw per parameter per site (or bond),
held fixed for the whole run.

Three interchangeable propagation backends are provided: exact dense
exponentiation (cached unitary), Lanczos/Krylov exponentiation for large
sectors, and an odd/even Trotter splitting of first or second order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse

from .fock import StateVector

# Dimension at which "auto" switches from dense exponentiation to Krylov.
EXACT_DIM_THRESHOLD = 2048
KRYLOV_TOL = 1e-12
KRYLOV_MAX_DIM = 30


@dataclass(frozen=True)
class BHParams:
    """Chain couplings: means and disorder widths, plus boundary type."""

    mean_omega: float = 0.0
    mean_U: float = 0.0
    mean_J: float = 1.0
    sigma_omega: float = 0.0
    sigma_U: float = 0.0
    sigma_J: float = 0.0
    boundary: str = "open"

    def __post_init__(self):
        if self.boundary not in ("open", "periodic"):
            raise ValueError(f"boundary must be 'open' or 'periodic', got {self.boundary!r}")
        for name in ("sigma_omega", "sigma_U", "sigma_J"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    @property
    def disordered(self):
        return self.sigma_omega > 0 or self.sigma_U > 0 or self.sigma_J > 0


def n_bonds(L, boundary):
    return L if boundary == "periodic" else L - 1


def draw_couplings(params, L, rng=None):
    """Site/bond coupling arrays ``(omega, U, J)`` for one run.

    Draw order is fixed (all omega, then all U, then all J) so a seeded
    generator reproduces the same chain.
    """
    if params.disordered and rng is None:
        raise ValueError("disordered parameters require an rng")
    nb = n_bonds(L, params.boundary)
    omega = np.full(L, params.mean_omega)
    U = np.full(L, params.mean_U)
    J = np.full(nb, params.mean_J)
    if params.sigma_omega > 0:
        omega = rng.normal(params.mean_omega, params.sigma_omega, L)
    if params.sigma_U > 0:
        U = rng.normal(params.mean_U, params.sigma_U, L)
    if params.sigma_J > 0:
        J = rng.normal(params.mean_J, params.sigma_J, nb)
    return omega, U, J


def build_hamiltonian(params, basis, rng=None, couplings=None):
    """Sparse CSR Hamiltonian on the given basis.

    ``couplings`` (as returned by :func:`draw_couplings`) overrides fresh
    draws; the engine uses this to share one disorder realization across
    number sectors.
    """
    if couplings is None:
        couplings = draw_couplings(params, basis.L, rng)
    omega, U, J = couplings
    states = basis.states
    dim, L = states.shape
    occ = states.astype(np.float64)
    diag = occ @ omega - 0.5 * (occ * (occ - 1.0)) @ U

    rows, cols, vals = [], [], []
    nb = n_bonds(L, params.boundary)
    for b in range(nb):
        l, r = b, (b + 1) % L
        # a^dag_l a_r : move one boson r -> l
        movable = (states[:, r] > 0) & (states[:, l] < basis.d - 1)
        src = np.nonzero(movable)[0]
        for i in src:
            t = states[i].copy()
            amp = J[b] * np.sqrt((t[l] + 1.0) * t[r])
            t[l] += 1
            t[r] -= 1
            j = basis.index.get(tuple(int(v) for v in t))
            if j is None:
                continue  # target outside a restricted basis
            rows.append(j)
            cols.append(i)
            vals.append(amp)
            # hermitian partner a^dag_r a_l acting on |j>
            rows.append(i)
            cols.append(j)
            vals.append(amp)
    H = scipy.sparse.csr_matrix(
        (np.array(vals + list(diag)), (rows + list(range(dim)), cols + list(range(dim)))),
        shape=(dim, dim),
        dtype=np.complex128,
    )
    H.sum_duplicates()
    return H


def _split_odd_even(params, basis, couplings):
    """Hamiltonian pair (H_odd, H_even) for the Trotter layers.

    Layer of parity q collects, for each 1-indexed site l of that parity,
    the on-site term of l plus the bond (l, l+1) when present. The two
    layers sum to the full Hamiltonian.
    """
    omega, U, J = couplings
    L = basis.L
    nb = n_bonds(L, params.boundary)
    parts = []
    for parity in (1, 0):  # odd sites first
        om = np.where(np.arange(1, L + 1) % 2 == parity, omega, 0.0)
        uu = np.where(np.arange(1, L + 1) % 2 == parity, U, 0.0)
        jj = np.where(np.arange(1, nb + 1) % 2 == parity, J, 0.0)
        parts.append(build_hamiltonian(params, basis, couplings=(om, uu, jj)))
    return parts[0], parts[1]


class TrotterLayers:
    """Dense layer unitaries for the odd/even splitting at a fixed dt."""

    def __init__(self, params, basis, dt, rng=None, couplings=None):
        if couplings is None:
            couplings = draw_couplings(params, basis.L, rng)
        H_odd, H_even = _split_odd_even(params, basis, couplings)
        self.dt = dt
        self.U_odd = _dense_expm(H_odd, dt)
        self.U_even = _dense_expm(H_even, dt)
        self.U_odd_half = _dense_expm(H_odd, dt / 2.0)


def trotter_step(psi, layers, q=1):
    """One split-operator step of order ``q``.

    q = 1 applies the even layer then the odd layer; q = 2 symmetrizes
    with half odd layers on both sides.
    """
    if q == 1:
        amps = layers.U_odd @ (layers.U_even @ psi.amps)
    elif q == 2:
        amps = layers.U_odd_half @ (layers.U_even @ (layers.U_odd_half @ psi.amps))
    else:
        raise ValueError(f"trotter order must be 1 or 2, got {q}")
    return StateVector(psi.basis, amps).normalize()


def _dense_expm(H, dt):
    Hd = H.toarray()
    w, V = np.linalg.eigh(Hd)
    phase = np.exp(-1j * dt * w)
    return (V * phase) @ V.conj().T


def _lanczos_expm(H, v, dt, tol, max_dim):
    """exp(-i dt H) v for hermitian sparse H, adaptive Krylov dimension.

    Converged when the propagated vector moves by less than ``tol``
    between successive subspace sizes. Full reorthogonalization keeps the
    basis clean at these modest dimensions.
    """
    V = [v]
    alphas, betas = [], []
    prev = None
    for j in range(max_dim):
        w = H @ V[-1]
        alpha = float(np.vdot(V[-1], w).real)
        w = w - alpha * V[-1]
        if j > 0:
            w = w - betas[-1] * V[-2]
        for u in V:  # reorthogonalize
            w = w - np.vdot(u, w) * u
        alphas.append(alpha)
        beta = float(np.linalg.norm(w))
        ew, eV = scipy.linalg.eigh_tridiagonal(alphas, betas)
        y = eV @ (np.exp(-1j * dt * ew) * eV[0])
        approx = np.stack(V, axis=1) @ y
        if prev is not None and np.linalg.norm(approx - prev) < tol:
            return approx
        if beta < 1e-14:
            return approx  # exact invariant subspace
        prev = approx
        betas.append(beta)
        V.append(w / beta)
    raise RuntimeError(
        f"krylov propagation did not converge within subspace dimension {max_dim}"
    )


class Propagator:
    """Single-step propagator ``exp(-i H dt)`` with a fixed backend.

    ``apply`` maps an amplitude array forward one step without
    renormalizing; :func:`evolve_step` is the state-level wrapper.
    """

    def __init__(self, H, dt, mode="auto", exact_threshold=EXACT_DIM_THRESHOLD,
                 krylov_tol=KRYLOV_TOL, krylov_max_dim=KRYLOV_MAX_DIM, trotter=None):
        dim = H.shape[0]
        if mode == "auto":
            mode = "exact" if dim <= exact_threshold else "krylov"
        self.mode = mode
        self.dt = dt
        self.dim = dim
        if mode == "exact":
            self._U = _dense_expm(H, dt)
        elif mode == "krylov":
            self._H = scipy.sparse.csr_matrix(H)
            self._tol = krylov_tol
            self._max_dim = krylov_max_dim
        elif mode in ("trotter1", "trotter2"):
            if trotter is None:
                raise ValueError("trotter modes need a TrotterLayers instance")
            self._layers = trotter
            self._q = 1 if mode == "trotter1" else 2
        else:
            raise ValueError(f"unknown propagation mode {mode!r}")

    def apply(self, amps):
        if self.mode == "exact":
            return self._U @ amps
        if self.mode == "krylov":
            return _lanczos_expm(self._H, amps, self.dt, self._tol, self._max_dim)
        ly = self._layers
        if self._q == 1:
            return ly.U_odd @ (ly.U_even @ amps)
        return ly.U_odd_half @ (ly.U_even @ (ly.U_odd_half @ amps))


def build_propagator(params, basis, dt, mode="auto", rng=None, couplings=None, **kw):
    """Construct a :class:`Propagator` for one chain realization."""
    if couplings is None:
        couplings = draw_couplings(params, basis.L, rng)
    if mode in ("trotter1", "trotter2"):
        layers = TrotterLayers(params, basis, dt, couplings=couplings)
        H = build_hamiltonian(params, basis, couplings=couplings)
        return Propagator(H, dt, mode=mode, trotter=layers, **kw)
    H = build_hamiltonian(params, basis, couplings=couplings)
    return Propagator(H, dt, mode=mode, **kw)


def evolve_step(psi, prop):
    """Propagate one step and re-impose unit norm."""
    return StateVector(psi.basis, prop.apply(psi.amps)).normalize()
