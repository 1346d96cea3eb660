"""Exact enumeration of the hybrid circuit's trajectory tree.

For short circuits the full distribution over measurement placements and
outcomes is tractable: each step branches into "no click" (weight 1 - p)
and each Born outcome (weight p * w_m) per site, visited in the same
ascending order as the Monte Carlo engine and propagated with the same
per-sector unitaries. Leaf weights then give exact ensemble averages to
validate the sampler, and leaf-weight squares give the two-replica
averages that the enlarged-space analytics predict.

Intended for unit-scale systems; the worst-case branch count
((1 + d)^L per step) is checked against a hard cap before anything runs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict

import numpy as np

from .engine import Workspace, half_region
from .fock import StateVector, number_moments, schmidt_entropy
from .replica import bond_weights

BRANCH_CAP = 10_000_000
PRUNE_FLOOR = 1e-15

_OBS = ("N_half", "N2_half", "S_half", "F_half", "N_total", "N2_total")


@dataclass(frozen=True)
class OracleResult:
    """Weighted sums over the enumerated leaves.

    ``means`` and ``second_moments`` are weight-1 ensemble averages of
    each observable and of its square (normalized over retained
    branches); ``replica2`` holds the weight-squared averages
    sum(w^2 O) / sum(w^2). ``discarded_mass`` is the total probability
    dropped by the pruning floor.
    """

    means: Dict[str, float]
    second_moments: Dict[str, float]
    replica2: Dict[str, float]
    branch_count: int
    total_weight: float
    discarded_mass: float


def _branch_estimate(config):
    if config.meas.p == 0.0:
        per_step = 1
    elif config.meas.p == 1.0:
        per_step = config.d ** config.L
    else:
        per_step = (1 + config.d) ** config.L
    return per_step ** config.steps


def enumerate_trajectories(config, cap=BRANCH_CAP, prune_floor=PRUNE_FLOOR):
    """Exact trajectory-ensemble averages for one cell.

    Parameters
    ----------
    config : RunConfig
        Same object the engine consumes; ``iterations`` and seeding are
        ignored, everything else (couplings, kind, pattern, T, dt) is
        honored, including the disorder realization tied to the seed.
    cap : int
        Hard bound on the worst-case leaf count.
    prune_floor : float
        Branches lighter than this are dropped and accounted in
        ``discarded_mass``.
    """
    estimate = _branch_estimate(config)
    if estimate > cap:
        raise ValueError(
            f"worst-case branch count {estimate} exceeds cap {cap}; "
            "shorten T, shrink the chain, or raise the cap"
        )
    ws = Workspace(config)
    L = config.L
    d = config.d
    p = config.meas.p
    kind = config.meas.kind
    pattern = ws.pattern

    sector0 = sum(config.initial_state) if config.sector_restrict else None
    basis0 = ws.basis(sector0)
    amps0 = np.zeros(basis0.dim, dtype=np.complex128)
    amps0[basis0.state_index(config.initial_state)] = 1.0

    discarded = 0.0

    def expand_layer(site, sector, amps, weight, out):
        nonlocal discarded
        if weight < prune_floor:
            discarded += weight
            return
        if site > L:
            out.append((sector, amps, weight))
            if len(out) > cap:
                raise ValueError(f"live branch count exceeded cap {cap}")
            return
        if p < 1.0:
            expand_layer(site + 1, sector, amps, weight * (1.0 - p), out)
        if p > 0.0:
            basis = ws.basis(sector)
            col = basis.site_values(site)
            prob = np.real(amps * amps.conj())
            w = np.bincount(col, weights=prob, minlength=d)
            for m in range(d):
                if w[m] <= 0.0:
                    continue
                norm = np.sqrt(w[m])
                if kind == "standard" or pattern[site - 1] == m:
                    child = np.where(col == m, amps, 0.0) / norm
                    expand_layer(site + 1, sector, child, weight * p * w[m], out)
                else:
                    alpha = pattern[site - 1]
                    if sector is None:
                        stride = d ** (L - site)
                        src = np.nonzero(col == m)[0]
                        child = np.zeros(basis.dim, dtype=np.complex128)
                        child[src + (alpha - m) * stride] = amps[src] / norm
                        expand_layer(site + 1, None, child, weight * p * w[m], out)
                    else:
                        src, dst, new_sector = ws.relabel_map(sector, site, m, alpha)
                        child = np.zeros(ws.basis(new_sector).dim, dtype=np.complex128)
                        child[dst] = amps[src] / norm
                        expand_layer(site + 1, new_sector, child, weight * p * w[m], out)

    frontier = [(sector0, amps0, 1.0)]
    for _ in range(config.steps):
        nxt = []
        for sector, amps, weight in frontier:
            evolved = ws.propagator(sector).apply(amps)
            evolved = evolved / np.linalg.norm(evolved)
            expand_layer(1, sector, evolved, weight, nxt)
        frontier = nxt

    sums = {k: 0.0 for k in _OBS}
    sums2 = {k: 0.0 for k in _OBS}
    rep2 = {k: 0.0 for k in _OBS}
    total_w = 0.0
    total_w2 = 0.0
    region = half_region(L)
    full = tuple(range(1, L + 1))
    for sector, amps, weight in frontier:
        psi = StateVector(ws.basis(sector), amps / np.linalg.norm(amps))
        n1, n2 = number_moments(psi, region)
        nt1, nt2 = number_moments(psi, full)
        obs = {
            "N_half": n1,
            "N2_half": n2,
            "S_half": schmidt_entropy(psi, L // 2),
            "F_half": max(n2 - n1 * n1, 0.0),
            "N_total": nt1,
            "N2_total": nt2,
        }
        total_w += weight
        total_w2 += weight * weight
        for k, v in obs.items():
            sums[k] += weight * v
            sums2[k] += weight * v * v
            rep2[k] += weight * weight * v

    if total_w <= 0:
        raise RuntimeError("all branches pruned; lower the pruning floor")
    return OracleResult(
        means={k: float(v / total_w) for k, v in sums.items()},
        second_moments={k: float(v / total_w) for k, v in sums2.items()},
        replica2={k: float(v / total_w2) for k, v in rep2.items()},
        branch_count=len(frontier),
        total_weight=float(total_w),
        discarded_mass=float(discarded),
    )


def area_law_closed_forms(pattern, d, lam, x):
    """Leading small-(1 - p) behavior of the area-law observables.

    With x = 1 - p and lam = Jbar/Gamma, the half-chain fluctuation picks
    up the two hop channels of the central bond at order x^2 lam^2; the
    unconditioned half-chain number spread grows linearly in x with a
    geometric factor g assembled from the bond matrix elements of the
    first half of the chain (interior bonds count from both sides, and
    only left-half sites contribute because a relabel elsewhere leaves
    the left count alone); and the sector-conditioned half-chain spread
    coincides with the fluctuation at this order.

    Returns a dict with keys ``F_half``, ``DN``, ``DN_sector``, ``g``.
    """
    L = len(pattern)
    if L < 2 or L % 2:
        raise ValueError("pattern length must be even and at least 2")
    w = bond_weights(pattern, d)
    w_bond = [pm + mp for pm, mp in w]
    cut = L // 2
    f_half = x * x * w_bond[cut - 1] * lam * lam
    g = w_bond[0]
    for site in range(2, cut + 1):
        g += w_bond[site - 2] + w_bond[site - 1]
    return {
        "F_half": f_half,
        "DN": x * g * lam * lam,
        "DN_sector": f_half,
        "g": g,
    }
