"""Two-replica map of the measured chain and its perturbation theory.

Averaging a trajectory observable quadratic in the state over circuit
realizations maps, in continuous time, onto imaginary-time evolution
under a non-hermitian operator on four copies of the chain (ket and bra
of two replicas),

    H_eff = H^M + i lam H^BH ,      lam = Jbar / Gamma ,

where H^M counts sites not locked to the measurement structure (rate
normalized away) and H^BH acts as the chain Hamiltonian on each copy
with alternating signs (+, -, +, -). Copies are laid out block-major:
positions [0, L) hold replica-1 kets, then replica-1 bras, replica-2
kets, replica-2 bras. Expectation values against the long-time state use
the pairing functional <I|, the indicator that replica-1 ket and bra
configurations match and likewise for replica 2.

For predetermined targets H^M has a unique zero mode and an explicit
bi-orthogonal eigenbasis, so the steady state follows from second-order
perturbation theory in lam; closed forms for the resulting entropy,
fluctuation, and site occupations are provided alongside exact
diagonalization for cross-checks.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

DENSE_EIG_CAP = 4096
EXACT_GROUND_CAP = 65536


def _digits(dim, n_pos, d):
    idx = np.arange(dim, dtype=np.int64)
    out = np.empty((dim, n_pos), dtype=np.int64)
    for c in range(n_pos):
        out[:, c] = (idx // d ** (n_pos - 1 - c)) % d
    return out


def _validated_pattern(pattern, L, d):
    pattern = tuple(int(a) for a in pattern)
    if len(pattern) != L:
        raise ValueError(f"pattern length {len(pattern)} does not match L={L}")
    if any(not 0 <= a < d for a in pattern):
        raise ValueError(f"pattern entries must lie in [0, {d - 1}]")
    return pattern


@dataclass(frozen=True)
class EnlargedOperator:
    """Sparse pieces of the four-copy effective operator."""

    L: int
    d: int
    pattern: Optional[Tuple[int, ...]]
    lam: float
    omega: float
    U: float
    H_M: scipy.sparse.csr_matrix
    H_BH: scipy.sparse.csr_matrix
    H_eff: scipy.sparse.csr_matrix

    @property
    def dim(self):
        return self.H_eff.shape[0]


def build_enlarged_heff(L, d, pattern, lam, omega=0.0, U=0.0):
    """Assemble H^M, H^BH, and H_eff = H^M + i lam H^BH.

    ``pattern=None`` selects standard (occupation-resolving) measurements
    whose H^M is diagonal with a d^L-fold zero eigenspace; a tuple of
    per-site targets selects the predetermined variant whose ground state
    is the unique product of target occupations on every copy. Hopping is
    open-boundary with unit mean amplitude; ``omega`` and ``U`` enter
    each copy with the alternating block signs.
    """
    if L < 1 or d < 2:
        raise ValueError("need L >= 1 and d >= 2")
    n_pos = 4 * L
    dim = d ** n_pos
    dig = _digits(dim, n_pos, d)
    stride = d ** (n_pos - 1 - np.arange(n_pos, dtype=np.int64))
    W = (1.0, -1.0, 1.0, -1.0)

    diag = np.zeros(dim)
    for b in range(4):
        for l in range(L):
            n = dig[:, b * L + l].astype(np.float64)
            diag += W[b] * (omega * n - 0.5 * U * n * (n - 1.0))
    rows, cols, vals = [], [], []
    for b in range(4):
        for l in range(L - 1):
            c = b * L + l
            src = np.nonzero((dig[:, c] < d - 1) & (dig[:, c + 1] > 0))[0]
            amp = W[b] * np.sqrt((dig[src, c] + 1.0) * dig[src, c + 1])
            dst = src + stride[c] - stride[c + 1]
            rows.extend((dst, src))
            cols.extend((src, dst))
            vals.extend((amp, amp))
    rows.append(np.arange(dim))
    cols.append(np.arange(dim))
    vals.append(diag)
    H_BH = scipy.sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(dim, dim),
    )
    H_BH.sum_duplicates()

    if pattern is None:
        h_m_diag = np.zeros(dim)
        for l in range(L):
            eq = (
                (dig[:, l] == dig[:, L + l])
                & (dig[:, l] == dig[:, 2 * L + l])
                & (dig[:, l] == dig[:, 3 * L + l])
            )
            h_m_diag += 1.0 - eq
        H_M = scipy.sparse.diags(h_m_diag, format="csr")
    else:
        pattern = _validated_pattern(pattern, L, d)
        k_rows, k_cols = [], []
        for l in range(L):
            copies = (l, L + l, 2 * L + l, 3 * L + l)
            eq = (
                (dig[:, l] == dig[:, L + l])
                & (dig[:, l] == dig[:, 2 * L + l])
                & (dig[:, l] == dig[:, 3 * L + l])
            )
            src = np.nonzero(eq)[0]
            shift = (pattern[l] - dig[src, l]) * sum(int(stride[c]) for c in copies)
            k_rows.append(src + shift)
            k_cols.append(src)
        K = scipy.sparse.csr_matrix(
            (np.ones(sum(len(r) for r in k_rows)),
             (np.concatenate(k_rows), np.concatenate(k_cols))),
            shape=(dim, dim),
        )
        H_M = (L * scipy.sparse.identity(dim, format="csr") - K).tocsr()

    H_eff = (H_M + 1j * lam * H_BH).tocsr()
    return EnlargedOperator(
        L=L, d=d, pattern=pattern if pattern is None else tuple(pattern),
        lam=float(lam), omega=float(omega), U=float(U),
        H_M=H_M, H_BH=H_BH, H_eff=H_eff,
    )


# ---------------------------------------------------------------------------
# pairing functional and observables

@functools.lru_cache(maxsize=16)
def _pair_data(L, d):
    dL = d ** L
    a = np.arange(dL, dtype=np.int64)
    rows = (a * (d ** (3 * L) + d ** (2 * L)))[:, None] + (a * (d ** L + 1))[None, :]
    occ = _digits(dL, L, d)
    return rows, occ


def _region_columns(region, L):
    sites = sorted(set(int(s) for s in region))
    if not sites or sites[0] < 1 or sites[-1] > L:
        raise ValueError(f"region {sites} must be a non-empty subset of [1, {L}]")
    return [s - 1 for s in sites]


def replica_observables(phi, L, d, kind, region, variant="left"):
    """Pairing-functional expectation value of one observable.

    Parameters
    ----------
    phi : ndarray, dim d^(4L)
        Four-copy state in block-major layout (any normalization).
    kind : {"N_region", "F_A", "S_A"}
        Region number, region number fluctuation, or second Renyi-type
        entanglement entropy from the region-swap permutation.
    region : iterable of int
        1-indexed sites.
    variant : {"left", "right"}
        For ``S_A``: swap kets (blocks 1 and 3) or bras (blocks 2 and 4).
        Both must agree for consistent states.
    """
    rows, occ = _pair_data(L, d)
    cols = _region_columns(region, L)
    vals = phi[rows]
    denom = vals.sum()
    if abs(denom) < 1e-300:
        raise ValueError("pairing overlap <I|phi> vanishes")
    n_a = occ[:, cols].sum(axis=1).astype(np.float64)

    if kind == "N_region":
        ratio = (n_a[:, None] * vals).sum() / denom
    elif kind == "F_A":
        sq = ((n_a * n_a)[:, None] * vals).sum()
        cross = ((n_a[:, None] * n_a[None, :]) * vals).sum()
        ratio = (sq - cross) / denom
    elif kind == "S_A":
        dL = d ** L
        a = np.arange(dL, dtype=np.int64)
        w = d ** (L - 1 - np.array(cols, dtype=np.int64))
        r_part = occ[:, cols] @ w  # region sub-code of each configuration
        mix_ab = a[:, None] - r_part[:, None] + r_part[None, :]  # a with b's region
        mix_ba = a[None, :] - r_part[None, :] + r_part[:, None]  # b with a's region
        if variant == "left":
            prow = (mix_ab * d ** (3 * L) + (a * d ** (2 * L))[:, None]
                    + mix_ba * d ** L + a[None, :])
        elif variant == "right":
            prow = ((a * d ** (3 * L))[:, None] + mix_ab * d ** (2 * L)
                    + (a[None, :] * d ** L) + mix_ba)
        else:
            raise ValueError("variant must be 'left' or 'right'")
        ratio = phi[prow].sum() / denom
        if abs(ratio.imag) > 1e-6 * max(1.0, abs(ratio.real)):
            raise RuntimeError(f"swap overlap unexpectedly complex: {ratio!r}")
        val = ratio.real
        if val <= 0:
            raise ValueError(f"swap overlap {val!r} is not positive, no entropy defined")
        return float(-np.log(val))
    else:
        raise ValueError(f"unknown observable kind {kind!r}")

    if abs(ratio.imag) > 1e-6 * max(1.0, abs(ratio.real)):
        raise RuntimeError(f"pairing expectation unexpectedly complex: {ratio!r}")
    return float(ratio.real)


# ---------------------------------------------------------------------------
# bi-orthogonal eigenbasis of the predetermined H^M

@dataclass(frozen=True)
class BiorthoBasis:
    """Column-aligned right/left eigenbases of H^M with integer energies.

    Columns satisfy <left_i | right_j> = delta_ij; ``ground`` indexes the
    unique zero-energy pair. Right vectors stay sparse (at most 2^L
    nonzeros each), which keeps the perturbative products cheap.
    """

    L: int
    d: int
    pattern: Optional[Tuple[int, ...]]
    right: scipy.sparse.csc_matrix
    left: scipy.sparse.csc_matrix
    energies: np.ndarray
    ground: int

    @property
    def dim(self):
        return self.right.shape[0]

    @classmethod
    def diagonal(cls, energies, L, d):
        """Self-dual plain-Fock basis for a diagonal H^M (test fixture)."""
        energies = np.asarray(energies, dtype=float)
        ground = int(np.argmin(energies))
        if energies[ground] != 0.0:
            raise ValueError("diagonal basis expects a zero ground energy")
        eye = scipy.sparse.identity(len(energies), format="csc")
        return cls(L=L, d=d, pattern=None, right=eye, left=eye,
                   energies=energies, ground=ground)


def _site_factor(d, alpha):
    """Per-site (d^4 x d^4) right/left factor columns and energies."""
    D4 = d ** 4
    alleq = [m * (d ** 3 + d ** 2 + d + 1) for m in range(d)]
    others = [v for v in range(D4) if v not in set(alleq)]
    r_rows, r_cols, r_vals = [], [], []
    l_rows, l_cols, l_vals = [], [], []

    col = 0
    r_rows.append(alleq[alpha]); r_cols.append(col); r_vals.append(1.0)
    for m in range(d):
        l_rows.append(alleq[m]); l_cols.append(col); l_vals.append(1.0)
    col += 1
    for a in range(d):
        if a == alpha:
            continue
        r_rows.extend((alleq[a], alleq[alpha])); r_cols.extend((col, col)); r_vals.extend((1.0, -1.0))
        l_rows.append(alleq[a]); l_cols.append(col); l_vals.append(1.0)
        col += 1
    for v in others:
        r_rows.append(v); r_cols.append(col); r_vals.append(1.0)
        l_rows.append(v); l_cols.append(col); l_vals.append(1.0)
        col += 1

    R = scipy.sparse.csc_matrix((r_vals, (r_rows, r_cols)), shape=(D4, D4))
    Lm = scipy.sparse.csc_matrix((l_vals, (l_rows, l_cols)), shape=(D4, D4))
    e = np.array([0.0] + [1.0] * (D4 - 1))
    return R, Lm, e


def biortho_basis(L, d, pattern):
    """Explicit bi-orthogonal eigenbasis of the predetermined H^M.

    The basis is a tensor product of per-site factor families (ground,
    d - 1 locked differences, d^4 - d unlocked states); the composite
    energy is the number of excited factors. Columns are ordered
    site-major; rows are permuted into the block-major copy layout used
    by :func:`build_enlarged_heff`.
    """
    pattern = _validated_pattern(pattern, L, d)
    factors = [_site_factor(d, a) for a in pattern]
    R = functools.reduce(scipy.sparse.kron, (f[0] for f in factors)).tocoo()
    Lm = functools.reduce(scipy.sparse.kron, (f[1] for f in factors)).tocoo()
    energies = functools.reduce(
        lambda acc, e: (acc[:, None] + e[None, :]).ravel(),
        (f[2] for f in factors), np.zeros(1),
    )

    # site-major row index -> block-major row index
    dim = d ** (4 * L)
    dig = _digits(dim, 4 * L, d)  # digits in site-major order (site, copy)
    perm = np.zeros(dim, dtype=np.int64)
    for s in range(L):
        for b in range(4):
            perm += dig[:, 4 * s + b] * d ** (4 * L - 1 - (b * L + s))

    R = scipy.sparse.csc_matrix((R.data, (perm[R.row], R.col)), shape=R.shape)
    Lm = scipy.sparse.csc_matrix((Lm.data, (perm[Lm.row], Lm.col)), shape=Lm.shape)
    assert energies[0] == 0.0
    return BiorthoBasis(L=L, d=d, pattern=pattern, right=R, left=Lm,
                        energies=energies, ground=0)


def perturb_ground(basis, H_BH, lam, order=2, renormalized=False, return_components=False):
    """Perturbed right ground state of H^M + i lam H^BH.

    Rayleigh-Schroedinger expansion in the bi-orthogonal basis through
    ``order`` (0, 1, or 2). The default is the bare expansion; with
    ``renormalized=True`` the ground-state coefficient carries the
    second-order wave-function renormalization instead of staying at 1.
    """
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1, or 2")
    E = basis.energies
    g_idx = basis.ground
    e0 = E[g_idx]
    g = np.asarray(basis.right[:, g_idx].todense()).ravel().astype(np.complex128)
    comps = {"order0": g}
    phi = g.copy()
    if order >= 1:
        denom = e0 - E
        denom[g_idx] = 1.0  # excluded below
        v0 = np.asarray((basis.left.conj().T @ (H_BH @ g)))  # V~_{n0}
        v00 = v0[g_idx]
        c1 = v0 / denom
        c1[g_idx] = 0.0
        u1 = np.asarray(basis.right @ c1)
        comps["order1"] = 1j * lam * u1
        phi = phi + comps["order1"]
        if order >= 2:
            b = np.asarray(basis.left.conj().T @ (H_BH @ u1))
            c2 = (b - v00 * c1) / denom
            c2[g_idx] = 0.0
            comps["order2"] = -lam * lam * np.asarray(basis.right @ c2)
            phi = phi + comps["order2"]
            if renormalized:
                # <phi~_0|H^BH|phi_n> row, for the normalization sum
                v_row = np.asarray(
                    basis.right.conj().T
                    @ (H_BH.conj().T @ np.asarray(basis.left[:, g_idx].todense()).ravel())
                ).conj()
                s2 = np.sum(np.delete(v_row * c1 / denom, g_idx))
                comps["renorm"] = -0.5 * lam * lam * s2 * g
                phi = phi + comps["renorm"]
    if return_components:
        return phi, comps
    return phi


def exact_ground_biortho(op, dense_cap=DENSE_EIG_CAP, cap=EXACT_GROUND_CAP):
    """Right/left ground pair of H_eff by direct diagonalization.

    Selects the eigenvalue of smallest real part (unique for the
    predetermined variant at small lam) and scales the left vector so
    that <phi~|phi> = 1 with |phi| = 1. Dense diagonalization below
    ``dense_cap``, shift-inverted Arnoldi above; dimensions beyond
    ``cap`` are refused.
    """
    dim = op.dim
    if dim > cap:
        raise ValueError(f"dimension {dim} exceeds the exact-ground cap {cap}")
    if dim <= dense_cap:
        w, V = scipy.linalg.eig(op.H_eff.toarray())
        wl, Vl = scipy.linalg.eig(op.H_eff.conj().T.toarray())
    else:
        k = min(6, dim - 2)
        w, V = scipy.sparse.linalg.eigs(op.H_eff, k=k, sigma=-0.1)
        wl, Vl = scipy.sparse.linalg.eigs(op.H_eff.conj().T.tocsc(), k=k, sigma=-0.1)
    i0 = int(np.argmin(w.real))
    e0 = w[i0]
    j0 = int(np.argmin(np.abs(wl - np.conj(e0))))
    if abs(wl[j0] - np.conj(e0)) > 1e-8 * max(1.0, abs(e0)) + 1e-8:
        raise RuntimeError(
            f"left/right eigenvalue mismatch: {wl[j0]!r} vs conj({e0!r})"
        )
    phi = V[:, i0]
    phi = phi / np.linalg.norm(phi)
    anchor = int(np.argmax(np.abs(phi)))
    phi = phi * (np.abs(phi[anchor]) / phi[anchor])
    phi_t = Vl[:, j0]
    s = np.vdot(phi_t, phi)
    phi_t = phi_t / np.conj(s)
    return complex(e0), phi, phi_t


# ---------------------------------------------------------------------------
# closed forms at second order

def bond_weights(pattern, d):
    """Squared hop matrix elements (eps2_pm, eps2_mp) per bond.

    For bond b between sites b+1 and b+2 (1-indexed), pm moves a boson
    right-to-left on top of the target pattern and mp left-to-right; a
    move blocked by the local dimension contributes zero.
    """
    pattern = [int(a) for a in pattern]
    out = []
    for b in range(len(pattern) - 1):
        al, ar = pattern[b], pattern[b + 1]
        pm = (al + 1.0) * ar if al + 1 <= d - 1 else 0.0
        mp = al * (ar + 1.0) if ar + 1 <= d - 1 else 0.0
        out.append((pm, mp))
    return out


def _weight_sums(pattern, d, cut):
    w = bond_weights(pattern, d)
    w_tot = sum(pm + mp for pm, mp in w)
    pm, mp = w[cut - 1]
    return pm + mp, w_tot


def closed_form_entropy(pattern, d, lam, cut=None):
    """Second-order steady entropy across ``cut`` (default the middle)."""
    L = len(pattern)
    cut = L // 2 if cut is None else cut
    w_cut, w_tot = _weight_sums(pattern, d, cut)
    x = lam * lam * w_cut / (1.0 + lam * lam * w_tot)
    return float(-np.log1p(-x))


def closed_form_fluctuation(pattern, d, lam, cut=None):
    L = len(pattern)
    cut = L // 2 if cut is None else cut
    w_cut, w_tot = _weight_sums(pattern, d, cut)
    return float(0.5 * lam * lam * w_cut / (1.0 + lam * lam * w_tot))


def closed_form_occupation(pattern, d, lam, site):
    """Second-order steady occupation of a 1-indexed site.

    Each bond direction shifts weight by +1 on the site it raises and -1
    on the site it lowers; edge sites touch one bond and interior sites
    two, which halves the shift at the chain ends.
    """
    L = len(pattern)
    if not 1 <= site <= L:
        raise ValueError(f"site {site} outside [1, {L}]")
    w = bond_weights(pattern, d)
    w_tot = sum(pm + mp for pm, mp in w)
    shift = 0.0
    b = site - 1  # bond with `site` as left end
    if b <= L - 2:
        pm, mp = w[b]
        shift += pm - mp
    b = site - 2  # bond with `site` as right end
    if b >= 0:
        pm, mp = w[b]
        shift += mp - pm
    return float(pattern[site - 1] + 0.5 * lam * lam * shift / (1.0 + lam * lam * w_tot))


def closed_form_region_number(pattern, d, lam, region):
    return float(sum(closed_form_occupation(pattern, d, lam, s) for s in region))
