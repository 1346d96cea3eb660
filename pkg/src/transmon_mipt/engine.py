"""Hybrid-circuit trajectory engine.

One trajectory alternates unitary steps exp(-i H dt) with a layer of
Bernoulli(p) projective site measurements, starting from the half-filled
product state |1 0 1 0 ...>. Because every branch keeps a definite total
boson number, the state is stored as amplitudes over the current
number-sector basis; a predetermined measurement that relabels m ->
alpha_l simply hops the amplitudes to the basis of the neighboring
sector. Per-sector propagators, bases, and relabel index maps are cached
in a workspace shared across iterations.

Randomness: iteration i draws from
``default_rng(SeedSequence(master_seed, spawn_key=(i,)))``, so records
are reproducible independently of chunking or worker count. Per step the
stream is consumed as one uniform block of length L for the measurement
layer, then one uniform per triggered measurement, and finally one
uniform for the Born configuration sample at the end.
"""

from __future__ import annotations

import multiprocessing
import os
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from . import stats as stats_mod
from .evolution import BHParams, build_propagator, draw_couplings
from .fock import StateVector, build_basis, number_moments, sample_configuration, schmidt_entropy
from .measure import MeasurementEvent, MeasurementSpec, default_pattern

WORKERS_ENV = "TRANSMON_MIPT_WORKERS"
_CHUNK = 256
_DISORDER_KEY = 0xD15EA5E  # spawn key reserved for the static disorder draw
_RENORM_EVERY = 32

_PROPAGATION_MODES = ("auto", "exact", "krylov", "trotter1", "trotter2")


@dataclass(frozen=True)
class RunConfig:
    """Full description of one Monte Carlo cell.

    ``T`` defaults to 20 (in units of the inverse mean hopping) for d = 2
    and 30 above; ``initial_state`` defaults to the alternating
    half-filled product state, and a predetermined pattern defaults to
    the same tuple.
    """

    L: int
    d: int = 2
    params: BHParams = field(default_factory=BHParams)
    meas: MeasurementSpec = field(default_factory=MeasurementSpec)
    dt: float = 0.02
    T: Optional[float] = None
    iterations: int = 1
    master_seed: int = 0
    sector_restrict: bool = True
    log_outcomes: bool = False
    initial_state: Optional[Tuple[int, ...]] = None
    propagation: str = "auto"

    def __post_init__(self):
        if self.L < 2:
            raise ValueError(f"need at least two sites, got L={self.L}")
        if self.d < 2:
            raise ValueError(f"local dimension must be at least 2, got d={self.d}")
        if self.iterations < 1:
            raise ValueError("iterations must be positive")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.propagation not in _PROPAGATION_MODES:
            raise ValueError(f"propagation must be one of {_PROPAGATION_MODES}")
        if self.T is None:
            object.__setattr__(self, "T", 20.0 if self.d == 2 else 30.0)
        ratio = self.T / self.dt
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, abs(ratio)):
            raise ValueError(f"T={self.T} is not an integer multiple of dt={self.dt}")
        if self.initial_state is None:
            if self.L % 2:
                raise ValueError("default initial state needs even L; pass initial_state")
            object.__setattr__(self, "initial_state", default_pattern(self.L))
        else:
            object.__setattr__(
                self, "initial_state", tuple(int(v) for v in self.initial_state)
            )
        if len(self.initial_state) != self.L:
            raise ValueError("initial_state length does not match L")
        if any(not 0 <= v < self.d for v in self.initial_state):
            raise ValueError(f"initial occupations must lie in [0, {self.d - 1}]")
        if self.meas.kind == "predetermined" and self.meas.pattern is None:
            object.__setattr__(
                self, "meas", MeasurementSpec("predetermined", self.meas.p, default_pattern(self.L))
            )
        if self.meas.kind == "predetermined":
            self.meas.validated_pattern(self.L, self.d)

    @property
    def steps(self):
        return int(round(self.T / self.dt))

    def key(self):
        return (
            self.L, self.d, self.params, self.meas, self.dt, self.T,
            self.master_seed, self.sector_restrict, self.log_outcomes,
            self.initial_state, self.propagation,
        )


@dataclass(frozen=True)
class TrajectoryRecord:
    """Per-iteration output: pure-state observables plus one Born sample.

    ``entropy_half``, ``mean_half`` and ``fluctuation_half`` are evaluated
    on the final pure state across the middle cut, so mean_half and
    mean_half**2 + fluctuation_half are the exact first two moments of the
    half-chain readout distribution for this trajectory. The occupation
    fields derive from a single sampled configuration, with
    ``n_mid_lo``/``n_mid_hi`` the occupations of sites L/2 and L/2 + 1.
    """

    iteration: int
    entropy_half: float
    mean_half: float
    fluctuation_half: float
    sampled_config: Tuple[int, ...]
    n_half: int
    n_total: int
    n_mid_lo: int
    n_mid_hi: int
    outcomes: Optional[Tuple[MeasurementEvent, ...]] = None

    @property
    def n_mid(self):
        return self.n_mid_lo


def half_region(L):
    return tuple(range(1, L // 2 + 1))


class Workspace:
    """Caches shared by all iterations of one cell.

    Holds the disorder realization, sector bases, per-sector propagators,
    and relabel index maps. Safe to reuse across iterations because
    everything here is immutable once built.
    """

    def __init__(self, config):
        self.config = config
        if config.params.disordered:
            rng = np.random.default_rng(
                np.random.SeedSequence(config.master_seed, spawn_key=(_DISORDER_KEY,))
            )
            self.couplings = draw_couplings(config.params, config.L, rng)
        else:
            self.couplings = draw_couplings(config.params, config.L)
        self.pattern = None
        if config.meas.kind == "predetermined":
            self.pattern = config.meas.validated_pattern(config.L, config.d)
        self._bases = {}
        self._props = {}
        self._relabels = {}

    def basis(self, sector):
        b = self._bases.get(sector)
        if b is None:
            b = build_basis(self.config.L, self.config.d, sector)
            self._bases[sector] = b
        return b

    def propagator(self, sector):
        p = self._props.get(sector)
        if p is None:
            p = build_propagator(
                self.config.params, self.basis(sector), self.config.dt,
                mode=self.config.propagation, couplings=self.couplings,
            )
            self._props[sector] = p
        return p

    def relabel_map(self, sector, site, m, alpha):
        """Index map realizing |..m..> -> |..alpha..| at ``site``.

        Returns ``(src, dst, new_sector)`` with ``src`` the rows of the
        current sector basis having occupation m at the site and ``dst``
        their images in the target sector basis.
        """
        key = (sector, site, m)
        cached = self._relabels.get(key)
        if cached is not None:
            return cached
        basis = self.basis(sector)
        src = np.nonzero(basis.site_values(site) == m)[0]
        new_sector = sector + alpha - m
        target = self.basis(new_sector)
        dst = np.empty(len(src), dtype=np.int64)
        for k, i in enumerate(src):
            t = [int(v) for v in basis.states[i]]
            t[site - 1] = alpha
            dst[k] = target.index[tuple(t)]
        out = (src, dst, new_sector)
        self._relabels[key] = out
        return out


def _measure_inplace(ws, sector, amps, site, kind, alpha, rng):
    """Collapse ``amps`` (sector basis) at ``site``; returns (sector, amps, m)."""
    basis = ws.basis(sector) if sector is not None else ws.basis(None)
    col = basis.site_values(site)
    prob = np.real(amps * amps.conj())
    w = np.bincount(col, weights=prob, minlength=basis.d)
    total = w.sum()
    u = rng.random() * total
    m = int(np.searchsorted(np.cumsum(w), u, side="right"))
    m = min(m, basis.d - 1)
    norm = np.sqrt(w[m])
    if kind == "standard" or alpha == m:
        amps = np.where(col == m, amps, 0.0) / norm
        return sector, amps, m
    if sector is None:
        stride = basis.d ** (basis.L - site)
        src = np.nonzero(col == m)[0]
        out = np.zeros(basis.dim, dtype=np.complex128)
        out[src + (alpha - m) * stride] = amps[src] / norm
        return None, out, m
    src, dst, new_sector = ws.relabel_map(sector, site, m, alpha)
    out = np.zeros(ws.basis(new_sector).dim, dtype=np.complex128)
    out[dst] = amps[src] / norm
    return new_sector, out, m


def run_trajectory(config, iteration, workspace=None):
    """Simulate one trajectory and return its :class:`TrajectoryRecord`."""
    ws = workspace if workspace is not None else Workspace(config)
    rng = np.random.default_rng(
        np.random.SeedSequence(config.master_seed, spawn_key=(iteration,))
    )
    sector = sum(config.initial_state) if config.sector_restrict else None
    basis = ws.basis(sector)
    amps = np.zeros(basis.dim, dtype=np.complex128)
    amps[basis.state_index(config.initial_state)] = 1.0

    L = config.L
    p = config.meas.p
    kind = config.meas.kind
    pattern = ws.pattern
    log = [] if config.log_outcomes else None

    for step in range(config.steps):
        amps = ws.propagator(sector).apply(amps)
        if step % _RENORM_EVERY == _RENORM_EVERY - 1:
            amps = amps / np.linalg.norm(amps)
        hits = np.nonzero(rng.random(L) < p)[0]
        for l0 in hits:
            site = int(l0) + 1
            alpha = pattern[l0] if pattern is not None else -1
            sector, amps, m = _measure_inplace(ws, sector, amps, site, kind, alpha, rng)
            if log is not None:
                log.append(MeasurementEvent(step=step, site=site, outcome=m, kind=kind))

    amps = amps / np.linalg.norm(amps)
    psi = StateVector(ws.basis(sector), amps)
    entropy = schmidt_entropy(psi, L // 2)
    m1, m2 = number_moments(psi, half_region(L))
    fluct = max(m2 - m1 * m1, 0.0)
    cfg = sample_configuration(psi, rng)
    return TrajectoryRecord(
        iteration=iteration,
        entropy_half=entropy,
        mean_half=m1,
        fluctuation_half=fluct,
        sampled_config=cfg,
        n_half=int(sum(cfg[: L // 2])),
        n_total=int(sum(cfg)),
        n_mid_lo=int(cfg[L // 2 - 1]),
        n_mid_hi=int(cfg[L // 2]),
        outcomes=tuple(log) if log is not None else None,
    )


def _chunk_bounds(total, chunk=_CHUNK):
    return [(lo, min(lo + chunk, total)) for lo in range(0, total, chunk)]


def _run_chunk(config, lo, hi, workspace):
    records = []
    cstats = stats_mod.EnsembleStats(config.L, config.d)
    for i in range(lo, hi):
        rec = run_trajectory(config, i, workspace)
        records.append(rec)
        stats_mod.accumulate(cstats, rec)
    return records, cstats


_WS_CACHE = {}


def _pool_chunk(args):
    config, lo, hi = args
    key = config.key()
    ws = _WS_CACHE.get(key)
    if ws is None:
        _WS_CACHE.clear()  # one cell per process at a time
        ws = Workspace(config)
        _WS_CACHE[key] = ws
    return _run_chunk(config, lo, hi, ws)


def resolve_workers(workers=None):
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "1"))
    if workers < 1:
        raise ValueError("worker count must be positive")
    return workers


def run_ensemble(config, workers=None, record_sink=None):
    """Run ``config.iterations`` trajectories and aggregate them.

    The iteration range is split into fixed chunks whose statistics are
    merged in chunk order, so the result is identical for any worker
    count. ``record_sink``, if given, receives each chunk's record list
    in iteration order and the records are not retained here, keeping
    memory flat for large ensembles.

    Returns
    -------
    (list of TrajectoryRecord, EnsembleStats)
        The list is empty when ``record_sink`` is set.
    """
    workers = resolve_workers(workers)
    bounds = _chunk_bounds(config.iterations)
    records = []
    total = stats_mod.EnsembleStats(config.L, config.d)
    if workers == 1 or len(bounds) == 1:
        ws = Workspace(config)
        chunks = (_run_chunk(config, lo, hi, ws) for lo, hi in bounds)
    else:
        ctx = multiprocessing.get_context("fork")
        pool = ctx.Pool(processes=workers)
        chunks = pool.imap(_pool_chunk, [(config, lo, hi) for lo, hi in bounds])
    try:
        for recs, cstats in chunks:
            total = stats_mod.merge(total, cstats)
            if record_sink is None:
                records.extend(recs)
            else:
                record_sink(recs)
    finally:
        if workers > 1 and len(bounds) > 1:
            pool.close()
            pool.join()
    return records, total
