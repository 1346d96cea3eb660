"""Projective site measurements, standard and predetermined.

A standard measurement projects site l onto the sampled occupation m
with Kraus operators P_m = |m><m|. A predetermined measurement samples
m from exactly the same Born distribution but leaves the site in a
preassigned occupation alpha_l, with Kraus operators P^m = |alpha_l><m|.
Both families satisfy sum_m (P^m)^dag P^m = 1, so outcome statistics on
identical input states coincide; only the conditional state differs.
The predetermined variant changes the total boson number by alpha_l - m,
which is what makes its records usable without post-selection.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .fock import StateVector, build_basis

_WEIGHT_FLOOR = 1e-14


@dataclass(frozen=True)
class MeasurementSpec:
    """Per-site measurement layer: kind, rate, and target pattern.

    ``p`` is the per-site, per-step measurement probability. ``pattern``
    gives alpha_l for the predetermined kind (1-indexed site l maps to
    ``pattern[l-1]``) and is ignored for the standard kind. A
    predetermined spec may leave the pattern unset until a run config
    fills in the default for its chain length.
    """

    kind: str = "standard"
    p: float = 0.0
    pattern: Optional[Tuple[int, ...]] = None

    def __post_init__(self):
        if self.kind not in ("standard", "predetermined"):
            raise ValueError(f"kind must be 'standard' or 'predetermined', got {self.kind!r}")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"p must lie in [0, 1], got {self.p}")

    def validated_pattern(self, L, d):
        pat = self.pattern
        if pat is None:
            raise ValueError("no pattern set")
        if len(pat) != L:
            raise ValueError(f"pattern length {len(pat)} does not match L={L}")
        if any(not 0 <= a < d for a in pat):
            raise ValueError(f"pattern entries must lie in [0, {d - 1}]")
        return tuple(int(a) for a in pat)


def default_pattern(L):
    """Alternating (1, 0, 1, 0, ...) target, matching the half-filled start."""
    return tuple(1 if l % 2 == 0 else 0 for l in range(L))


@dataclass(frozen=True)
class MeasurementEvent:
    step: int
    site: int
    outcome: int
    kind: str


def outcome_weights(psi, site):
    """Born weights w_m for the occupation of 1-indexed ``site``."""
    prob = np.real(psi.amps * psi.amps.conj())
    return np.bincount(psi.basis.site_values(site), weights=prob, minlength=psi.basis.d)


def _draw_outcome(weights, rng):
    total = weights.sum()
    if total < _WEIGHT_FLOOR:
        raise ValueError("state has vanishing weight, cannot sample an outcome")
    u = rng.random() * total
    m = int(np.searchsorted(np.cumsum(weights), u, side="right"))
    return min(m, len(weights) - 1)


def apply_standard(psi, site, rng):
    """Projective occupation measurement of ``site``.

    Returns ``(collapsed state, outcome)``. The collapsed state lives on
    the same basis; total boson number is untouched.
    """
    w = outcome_weights(psi, site)
    m = _draw_outcome(w, rng)
    keep = psi.basis.site_values(site) == m
    amps = np.where(keep, psi.amps, 0.0) / np.sqrt(w[m])
    return StateVector(psi.basis, amps), m


def apply_predetermined(psi, site, alpha, rng):
    """Measure ``site`` and deposit it in occupation ``alpha``.

    The outcome m is sampled exactly as in :func:`apply_standard`; the
    kept branch is then relabeled m -> alpha on that site, so the state
    factorizes across any cut isolating the site and the total number
    moves by alpha - m. On a sector-restricted basis the returned state
    lives on the basis of the new sector.
    """
    basis = psi.basis
    if not 0 <= alpha < basis.d:
        raise ValueError(f"alpha must lie in [0, {basis.d - 1}], got {alpha}")
    w = outcome_weights(psi, site)
    m = _draw_outcome(w, rng)
    col = basis.site_values(site)
    keep = col == m
    norm = np.sqrt(w[m])
    if alpha == m:
        amps = np.where(keep, psi.amps, 0.0) / norm
        return StateVector(basis, amps), m

    src = np.nonzero(keep)[0]
    if basis.sector is None:
        # Lexicographic full basis is a positional number system, so the
        # relabel is a fixed index offset.
        stride = basis.d ** (basis.L - site)
        dst = src + (alpha - m) * stride
        amps = np.zeros(basis.dim, dtype=np.complex128)
        amps[dst] = psi.amps[src] / norm
        return StateVector(basis, amps), m

    target = build_basis(basis.L, basis.d, basis.sector + alpha - m)
    amps = np.zeros(target.dim, dtype=np.complex128)
    for i in src:
        t = list(int(v) for v in basis.states[i])
        t[site - 1] = alpha
        amps[target.index[tuple(t)]] = psi.amps[i]
    return StateVector(target, amps / norm), m


def measurement_layer(psi, spec, step, rng):
    """One sweep of independent Bernoulli(p) site measurements.

    Sites are visited in ascending order; the state is collapsed and
    renormalized after each hit. Returns the final state and the list of
    :class:`MeasurementEvent` records in application order.
    """
    L = psi.basis.L
    pattern = None
    if spec.kind == "predetermined":
        pattern = spec.validated_pattern(L, psi.basis.d)
    hits = rng.random(L) < spec.p
    events = []
    for l0 in np.nonzero(hits)[0]:
        site = int(l0) + 1
        if spec.kind == "standard":
            psi, m = apply_standard(psi, site, rng)
        else:
            psi, m = apply_predetermined(psi, site, pattern[l0], rng)
        events.append(MeasurementEvent(step=step, site=site, outcome=m, kind=spec.kind))
    return psi, events
