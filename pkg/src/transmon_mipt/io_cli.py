"""Flat-file persistence and the ``transmon-mipt`` command line.

Formats are deliberately plain: configs and plans are ``key = value``
text with typed validation, per-trajectory records are one line of
``key=value`` pairs each (floats written with ``repr`` so parsing is
bit-exact), aggregated sweep output is a comma-separated ``curves.csv``
with a leading units comment, and histograms are ``value,count`` pairs
with normalization left to the reader. Sweeps stream-append records per
cell and skip cells whose record files are already complete, so an
interrupted run resumes where it stopped. All one-shot files are written
atomically. Times are quoted in units of the inverse mean hopping,
energies in the mean hopping; entropies are in nats.

Subcommands: ``simulate`` (one cell), ``sweep`` (grid of cells),
``diagnose`` (crossing points and scaling collapse from curves),
``replica`` (analytic steady-state table), ``oracle`` (exact enumeration
against the sampler). The default worker count comes from the
``TRANSMON_MIPT_WORKERS`` environment variable.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import __version__
from .diagnostics import (
    FssaParams,
    NoCrossingError,
    crossing_point,
    distribution_distance,
    fssa_collapse,
    reference_distributions,
)
from .engine import RunConfig, TrajectoryRecord, run_ensemble
from .evolution import BHParams
from .measure import MeasurementSpec, default_pattern
from .oracle import BRANCH_CAP, enumerate_trajectories
from .replica import (
    biortho_basis,
    build_enlarged_heff,
    closed_form_entropy,
    closed_form_fluctuation,
    closed_form_occupation,
    exact_ground_biortho,
    perturb_ground,
    replica_observables,
)
from .stats import EnsembleStats, accumulate


class ConfigError(ValueError):
    def __init__(self, key, message):
        self.key = key
        super().__init__(f"{key}: {message}")


def _fmt(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (tuple, list)):
        return ",".join(_fmt(v) for v in value)
    return str(value)


def parse_kv_text(text):
    """Parse ``key = value`` lines; '#' starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if key in out:
            raise ConfigError(key, "duplicate key")
        out[key] = value.strip()
    return out


def _to_int(key, s):
    try:
        return int(s)
    except ValueError:
        raise ConfigError(key, f"expected an integer, got {s!r}")


def _to_float(key, s):
    try:
        return float(s)
    except ValueError:
        raise ConfigError(key, f"expected a number, got {s!r}")


def _to_bool(key, s):
    if s.lower() in ("true", "1", "yes"):
        return True
    if s.lower() in ("false", "0", "no"):
        return False
    raise ConfigError(key, f"expected true/false, got {s!r}")


def _to_int_tuple(key, s):
    if not s:
        return ()
    return tuple(_to_int(key, part.strip()) for part in s.split(","))


def _to_float_tuple(key, s):
    if not s:
        return ()
    return tuple(_to_float(key, part.strip()) for part in s.split(","))


_RUN_KEYS = (
    "L", "d", "p", "kind", "pattern", "dt", "T", "iterations", "master_seed",
    "omega", "U", "J", "sigma_omega", "sigma_U", "sigma_J", "boundary",
    "sector_restrict", "log_outcomes", "initial_state", "propagation",
)
_PLAN_ONLY_KEYS = ("p_values", "L_values", "kinds", "outdir", "workers")


def build_run_config(raw, *, allow_extra=()):
    """Typed RunConfig from a raw key/value dict, with field-level errors."""
    for key in raw:
        if key not in _RUN_KEYS and key not in allow_extra:
            raise ConfigError(key, "unknown key")
    for key in ("L", "p", "iterations"):
        if key not in raw:
            raise ConfigError(key, "missing required key")
    try:
        params = BHParams(
            mean_omega=_to_float("omega", raw.get("omega", "0")),
            mean_U=_to_float("U", raw.get("U", "0")),
            mean_J=_to_float("J", raw.get("J", "1")),
            sigma_omega=_to_float("sigma_omega", raw.get("sigma_omega", "0")),
            sigma_U=_to_float("sigma_U", raw.get("sigma_U", "0")),
            sigma_J=_to_float("sigma_J", raw.get("sigma_J", "0")),
            boundary=raw.get("boundary", "open"),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError("boundary/sigma_*", str(exc))
    kind = raw.get("kind", "standard")
    pattern = _to_int_tuple("pattern", raw["pattern"]) if "pattern" in raw else None
    try:
        meas = MeasurementSpec(kind=kind, p=_to_float("p", raw["p"]), pattern=pattern)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError("kind/p/pattern", str(exc))
    try:
        return RunConfig(
            L=_to_int("L", raw["L"]),
            d=_to_int("d", raw.get("d", "2")),
            params=params,
            meas=meas,
            dt=_to_float("dt", raw.get("dt", "0.02")),
            T=_to_float("T", raw["T"]) if "T" in raw else None,
            iterations=_to_int("iterations", raw["iterations"]),
            master_seed=_to_int("master_seed", raw.get("master_seed", "0")),
            sector_restrict=_to_bool("sector_restrict", raw.get("sector_restrict", "true")),
            log_outcomes=_to_bool("log_outcomes", raw.get("log_outcomes", "false")),
            initial_state=(
                _to_int_tuple("initial_state", raw["initial_state"])
                if "initial_state" in raw else None
            ),
            propagation=raw.get("propagation", "auto"),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError("config", str(exc))


def serialize_run_config(config):
    """Canonical text form; parsing it back reproduces the config."""
    meas = config.meas
    lines = [
        f"L = {config.L}",
        f"d = {config.d}",
        f"p = {_fmt(meas.p)}",
        f"kind = {meas.kind}",
    ]
    if meas.pattern is not None:
        lines.append(f"pattern = {_fmt(meas.pattern)}")
    lines += [
        f"dt = {_fmt(config.dt)}",
        f"T = {_fmt(config.T)}",
        f"iterations = {config.iterations}",
        f"master_seed = {config.master_seed}",
        f"omega = {_fmt(config.params.mean_omega)}",
        f"U = {_fmt(config.params.mean_U)}",
        f"J = {_fmt(config.params.mean_J)}",
        f"sigma_omega = {_fmt(config.params.sigma_omega)}",
        f"sigma_U = {_fmt(config.params.sigma_U)}",
        f"sigma_J = {_fmt(config.params.sigma_J)}",
        f"boundary = {config.params.boundary}",
        f"sector_restrict = {_fmt(config.sector_restrict)}",
        f"log_outcomes = {_fmt(config.log_outcomes)}",
        f"initial_state = {_fmt(config.initial_state)}",
        f"propagation = {config.propagation}",
    ]
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class SweepPlan:
    """A grid of cells: base config crossed with kinds, sizes, and rates."""

    base: Dict[str, str]
    kinds: Tuple[str, ...]
    L_values: Tuple[int, ...]
    p_values: Tuple[float, ...]
    outdir: str
    workers: Optional[int]

    def cells(self):
        for kind in self.kinds:
            for L in self.L_values:
                for p in self.p_values:
                    yield kind, L, p


def build_sweep_plan(raw, default_outdir="sweep_out"):
    for key in raw:
        if key not in _RUN_KEYS and key not in _PLAN_ONLY_KEYS:
            raise ConfigError(key, "unknown key")
    for key in ("p_values", "L_values", "iterations"):
        if key not in raw:
            raise ConfigError(key, "missing required key")
    kinds = tuple(
        k.strip() for k in raw.get("kinds", raw.get("kind", "standard")).split(",")
    )
    for k in kinds:
        if k not in ("standard", "predetermined"):
            raise ConfigError("kinds", f"unknown measurement kind {k!r}")
    L_values = _to_int_tuple("L_values", raw["L_values"])
    p_values = _to_float_tuple("p_values", raw["p_values"])
    if not L_values or not p_values:
        raise ConfigError("L_values/p_values", "must be non-empty")
    base = {
        k: v for k, v in raw.items()
        if k not in _PLAN_ONLY_KEYS and k not in ("L", "p", "kind")
    }
    workers = _to_int("workers", raw["workers"]) if "workers" in raw else None
    return SweepPlan(
        base=base,
        kinds=kinds,
        L_values=L_values,
        p_values=p_values,
        outdir=raw.get("outdir", default_outdir),
        workers=workers,
    )


_KIND_CODE = {"standard": 0, "predetermined": 1}


def cell_seed(master_seed, L, kind, p):
    """Stable per-cell seed, independent of grid order and worker count."""
    ss = np.random.SeedSequence(
        (int(master_seed), int(L), _KIND_CODE[kind], int(round(p * 1e9)))
    )
    return int(ss.generate_state(1, np.uint64)[0])


def cell_config(plan, kind, L, p):
    raw = dict(plan.base)
    raw["L"] = str(L)
    raw["p"] = repr(float(p))
    raw["kind"] = kind
    base_seed = _to_int("master_seed", raw.get("master_seed", "0"))
    raw["master_seed"] = str(cell_seed(base_seed, L, kind, p))
    return build_run_config(raw)


# ---------------------------------------------------------------------------
# records

def format_record(record):
    parts = [
        f"iteration={record.iteration}",
        f"entropy_half={record.entropy_half!r}",
        f"mean_half={record.mean_half!r}",
        f"fluctuation_half={record.fluctuation_half!r}",
        f"n_half={record.n_half}",
        f"n_total={record.n_total}",
        f"n_mid_lo={record.n_mid_lo}",
        f"n_mid_hi={record.n_mid_hi}",
        f"config={','.join(str(v) for v in record.sampled_config)}",
    ]
    if record.outcomes is not None:
        enc = ";".join(f"{e.step}:{e.site}:{e.outcome}" for e in record.outcomes)
        parts.append(f"outcomes={enc}")
    return " ".join(parts)


def parse_record(line, kind="standard"):
    from .measure import MeasurementEvent

    fields = dict(part.split("=", 1) for part in line.split())
    outcomes = None
    if "outcomes" in fields:
        outcomes = tuple(
            MeasurementEvent(step=int(s), site=int(site), outcome=int(m), kind=kind)
            for s, site, m in (tok.split(":") for tok in fields["outcomes"].split(";") if tok)
        )
    return TrajectoryRecord(
        iteration=int(fields["iteration"]),
        entropy_half=float(fields["entropy_half"]),
        mean_half=float(fields["mean_half"]),
        fluctuation_half=float(fields["fluctuation_half"]),
        sampled_config=tuple(int(v) for v in fields["config"].split(",")),
        n_half=int(fields["n_half"]),
        n_total=int(fields["n_total"]),
        n_mid_lo=int(fields["n_mid_lo"]),
        n_mid_hi=int(fields["n_mid_hi"]),
        outcomes=outcomes,
    )


def load_records(path, kind="standard"):
    with open(path, "r", encoding="utf-8") as fh:
        return [parse_record(line, kind) for line in fh if line.strip()]


def _atomic_write(path, text):
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


# ---------------------------------------------------------------------------
# curves

_CURVE_COLUMNS = (
    "kind", "L", "p", "iterations",
    "S_mean", "S_err", "F_mean", "F_err",
    "DN", "DN_err", "DN_sector", "DN_sector_err",
    "N_total_mean", "N_total_err", "N_half_mean", "N_half_err",
    "N_mid_lo_mean", "N_mid_lo_err", "N_mid_hi_mean", "N_mid_hi_err",
    "d_uniform_mid_lo", "d_delta_mid_lo", "d_uniform_mid_hi", "d_delta_mid_hi",
    "d_ergodic_total", "d_delta_total",
)
_UNITS_NOTE = (
    "# units: time in 1/Jbar, energies in Jbar, entropies in nats; "
    "p is the per-site per-step measurement probability"
)


def reference_pattern(config):
    """Target pattern the diagnostics compare against."""
    if config.meas.kind == "predetermined":
        return config.meas.validated_pattern(config.L, config.d)
    return config.initial_state


def cell_row(config, stats, s_exponent=1):
    """One curves.csv row (dict) from a finished cell."""
    L, d = stats.L, stats.d
    pattern = reference_pattern(config)
    M = stats.count
    refs_lo = reference_distributions(L, d, pattern, mid_site=L // 2)
    refs_hi = reference_distributions(L, d, pattern, mid_site=L // 2 + 1)
    obs_mid_lo = stats.hist_mid_lo / M
    obs_mid_hi = stats.hist_mid_hi / M
    obs_total = stats.hist_total / M
    sector = sum(pattern)
    sec_acc = stats.sectors.get(sector)
    if sec_acc is not None and sec_acc.n > 0:
        dn_sector = sec_acc.variance
        dn_sector_err = sec_acc.variance_stderr
    else:
        dn_sector = float("nan")
        dn_sector_err = float("nan")
    return {
        "kind": config.meas.kind,
        "L": L,
        "p": float(config.meas.p),
        "iterations": M,
        "S_mean": stats.entropy.mean, "S_err": stats.entropy.stderr_mean,
        "F_mean": stats.fluctuation.mean, "F_err": stats.fluctuation.stderr_mean,
        "DN": stats.n_half.variance, "DN_err": stats.n_half.variance_stderr,
        "DN_sector": dn_sector, "DN_sector_err": dn_sector_err,
        "N_total_mean": stats.n_total.mean, "N_total_err": stats.n_total.stderr_mean,
        "N_half_mean": stats.n_half.mean, "N_half_err": stats.n_half.stderr_mean,
        "N_mid_lo_mean": stats.n_mid_lo.mean, "N_mid_lo_err": stats.n_mid_lo.stderr_mean,
        "N_mid_hi_mean": stats.n_mid_hi.mean, "N_mid_hi_err": stats.n_mid_hi.stderr_mean,
        "d_uniform_mid_lo": distribution_distance(obs_mid_lo, refs_lo.uniform_site, s_exponent),
        "d_delta_mid_lo": distribution_distance(obs_mid_lo, refs_lo.delta_site, s_exponent),
        "d_uniform_mid_hi": distribution_distance(obs_mid_hi, refs_hi.uniform_site, s_exponent),
        "d_delta_mid_hi": distribution_distance(obs_mid_hi, refs_hi.delta_site, s_exponent),
        "d_ergodic_total": distribution_distance(obs_total, refs_lo.ergodic_total, s_exponent),
        "d_delta_total": distribution_distance(obs_total, refs_lo.delta_total, s_exponent),
    }


def format_curves(rows):
    lines = [_UNITS_NOTE, ",".join(_CURVE_COLUMNS)]
    for row in rows:
        lines.append(",".join(_fmt(row[c]) for c in _CURVE_COLUMNS))
    return "\n".join(lines) + "\n"


def load_curves(path):
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        header = None
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if header is None:
                header = line.split(",")
                continue
            vals = line.split(",")
            row = dict(zip(header, vals))
            for key in row:
                if key == "kind":
                    continue
                row[key] = int(row[key]) if key in ("L", "iterations") else float(row[key])
            rows.append(row)
    return rows


def format_histogram(values, counts):
    lines = [f"{v},{c}" for v, c in zip(values, counts)]
    return "\n".join(lines) + "\n"


def format_summary(config, stats):
    row = cell_row(config, stats)
    lines = [f"{k}={_fmt(v)}" for k, v in row.items()]
    lines.append("hist_total=" + ",".join(str(int(c)) for c in stats.hist_total))
    lines.append("hist_mid_lo=" + ",".join(str(int(c)) for c in stats.hist_mid_lo))
    lines.append("hist_mid_hi=" + ",".join(str(int(c)) for c in stats.hist_mid_hi))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# commands

def _run_cell_with_streaming(config, workers, records_path):
    """Run one cell, appending records per chunk; returns its stats."""
    if os.path.exists(records_path):
        os.remove(records_path)

    fh = open(records_path, "a", encoding="utf-8")

    def sink(chunk):
        for rec in chunk:
            fh.write(format_record(rec) + "\n")
        fh.flush()

    try:
        _, stats = run_ensemble(config, workers=workers, record_sink=sink)
    finally:
        fh.close()
    return stats


def _restore_cell(config, records_path):
    try:
        records = load_records(records_path, kind=config.meas.kind)
    except (ValueError, KeyError, IndexError):
        return None  # torn final line from an interrupted run
    if len(records) != config.iterations:
        return None
    stats = EnsembleStats(config.L, config.d)
    for rec in records:
        accumulate(stats, rec)
    return stats


def cmd_simulate(args):
    with open(args.config, "r", encoding="utf-8") as fh:
        config = build_run_config(parse_kv_text(fh.read()))
    outdir = args.out
    os.makedirs(outdir, exist_ok=True)
    records_path = os.path.join(outdir, "records.ndtxt")
    stats = _run_cell_with_streaming(config, args.workers, records_path)
    _atomic_write(os.path.join(outdir, "summary.txt"), format_summary(config, stats))
    sys.stdout.write(format_summary(config, stats))
    return 0


def _hist_dir(outdir, kind):
    return os.path.join(outdir, f"hist_{kind}")


def _write_cell_outputs(plan, kind, L, p, config, stats):
    hdir = _hist_dir(plan.outdir, kind)
    os.makedirs(hdir, exist_ok=True)
    p_tag = _fmt(float(p))
    _atomic_write(
        os.path.join(hdir, f"hist_N_total_{p_tag}_{L}.csv"),
        format_histogram(range(len(stats.hist_total)), stats.hist_total),
    )
    _atomic_write(
        os.path.join(hdir, f"hist_N_mid_{p_tag}_{L}.csv"),
        format_histogram(range(len(stats.hist_mid_lo)), stats.hist_mid_lo),
    )


def cmd_sweep(args):
    with open(args.plan, "r", encoding="utf-8") as fh:
        plan = build_sweep_plan(parse_kv_text(fh.read()))
    if args.out is not None:
        plan = SweepPlan(plan.base, plan.kinds, plan.L_values, plan.p_values,
                         args.out, plan.workers)
    workers = args.workers if args.workers is not None else plan.workers
    os.makedirs(plan.outdir, exist_ok=True)
    rows = []
    for kind, L, p in plan.cells():
        config = cell_config(plan, kind, L, p)
        cell_dir = os.path.join(plan.outdir, "cells", f"{kind}_L{L}_p{_fmt(float(p))}")
        os.makedirs(cell_dir, exist_ok=True)
        records_path = os.path.join(cell_dir, "records.ndtxt")
        stats = None
        if os.path.exists(records_path):
            stats = _restore_cell(config, records_path)
        if stats is None:
            stats = _run_cell_with_streaming(config, workers, records_path)
        _write_cell_outputs(plan, kind, L, p, config, stats)
        rows.append(cell_row(config, stats))
        sys.stdout.write(
            f"cell kind={kind} L={L} p={_fmt(float(p))} done ({stats.count} iterations)\n"
        )
    _atomic_write(os.path.join(plan.outdir, "curves.csv"), format_curves(rows))
    return 0


def _crossing_lines(rows, mid):
    du_key = f"d_uniform_mid_{mid}"
    dd_key = f"d_delta_mid_{mid}"
    lines = []
    combos = sorted({(r["kind"], r["L"]) for r in rows})
    for kind, L in combos:
        sweep = sorted(
            (r["p"], r[du_key], r[dd_key])
            for r in rows if r["kind"] == kind and r["L"] == L
        )
        try:
            res = crossing_point(sweep)
            lines.append(
                f"kind={kind} L={L} mid={mid} p_c={_fmt(res.p_c)} "
                f"bracket={_fmt(res.bracket[0])},{_fmt(res.bracket[1])}"
            )
        except (NoCrossingError, ValueError) as exc:
            lines.append(f"kind={kind} L={L} mid={mid} no-crossing: {exc}")
    return lines


def _fssa_lines(rows, init):
    lines = []
    for kind in sorted({r["kind"] for r in rows}):
        sizes = sorted({r["L"] for r in rows if r["kind"] == kind})
        datasets = []
        for L in sizes:
            sub = sorted(
                (r["p"], r["S_mean"], max(r["S_err"], 1e-9))
                for r in rows if r["kind"] == kind and r["L"] == L
            )
            datasets.append((
                L,
                np.array([t[0] for t in sub]),
                np.array([t[1] for t in sub]),
                np.array([t[2] for t in sub]),
            ))
        if len(sizes) < 3:
            lines.append(f"kind={kind} fssa-skipped: need at least 3 sizes, have {len(sizes)}")
            continue
        try:
            fit = fssa_collapse(datasets, init)
        except ValueError as exc:
            lines.append(f"kind={kind} fssa-failed: {exc}")
            continue
        lines.append(
            f"kind={kind} observable=S p_c={_fmt(fit.p_c)} dp_c={_fmt(fit.dp_c)} "
            f"nu={_fmt(fit.nu)} dnu={_fmt(fit.dnu)} zeta={_fmt(fit.zeta)} "
            f"dzeta={_fmt(fit.dzeta)} quality={_fmt(fit.quality)}"
        )
    return lines


def cmd_diagnose(args):
    rows = load_curves(args.curves)
    if not rows:
        sys.stderr.write("diagnose: no data rows in curves file\n")
        return 1
    outdir = args.out if args.out is not None else os.path.dirname(os.path.abspath(args.curves))
    os.makedirs(outdir, exist_ok=True)
    crossing = _crossing_lines(rows, args.mid)
    pooled_p = sorted({r["p"] for r in rows})
    init = FssaParams(
        p_c=args.pc0 if args.pc0 is not None else pooled_p[len(pooled_p) // 2],
        nu=args.nu0, zeta=args.zeta0,
    )
    fssa = _fssa_lines(rows, init)
    _atomic_write(os.path.join(outdir, "crossing_report.txt"), "\n".join(crossing) + "\n")
    _atomic_write(os.path.join(outdir, "fssa_report.txt"), "\n".join(fssa) + "\n")
    for line in crossing + fssa:
        sys.stdout.write(line + "\n")
    return 0


def cmd_replica(args):
    L, d = args.L, args.d
    pattern = tuple(args.pattern) if args.pattern else default_pattern(L)
    lam = args.lam
    op = build_enlarged_heff(L, d, pattern, lam, omega=args.omega, U=args.U)
    basis = biortho_basis(L, d, pattern)
    phi = perturb_ground(basis, op.H_BH, lam)
    half = tuple(range(1, L // 2 + 1))
    rows = [
        ("S_half",
         closed_form_entropy(pattern, d, lam),
         replica_observables(phi, L, d, "S_A", half)),
        ("F_half",
         closed_form_fluctuation(pattern, d, lam),
         replica_observables(phi, L, d, "F_A", half)),
        ("N_total",
         float(sum(pattern)),
         replica_observables(phi, L, d, "N_region", tuple(range(1, L + 1)))),
    ]
    for site in range(1, L + 1):
        rows.append((
            f"N_site_{site}",
            closed_form_occupation(pattern, d, lam, site),
            replica_observables(phi, L, d, "N_region", (site,)),
        ))
    exact = {}
    if args.exact:
        _, phi_x, _ = exact_ground_biortho(op)
        exact = {
            "S_half": replica_observables(phi_x, L, d, "S_A", half),
            "F_half": replica_observables(phi_x, L, d, "F_A", half),
            "N_total": replica_observables(phi_x, L, d, "N_region", tuple(range(1, L + 1))),
        }
        for site in range(1, L + 1):
            exact[f"N_site_{site}"] = replica_observables(phi_x, L, d, "N_region", (site,))
    header = f"{'observable':<12} {'closed_form':>22} {'perturbation':>22}"
    if exact:
        header += f" {'exact':>22}"
    sys.stdout.write(header + "\n")
    for name, closed, pert in rows:
        line = f"{name:<12} {closed!r:>22} {pert!r:>22}"
        if exact:
            line += f" {exact[name]!r:>22}"
        sys.stdout.write(line + "\n")
    return 0


def cmd_oracle(args):
    with open(args.config, "r", encoding="utf-8") as fh:
        config = build_run_config(parse_kv_text(fh.read()))
    result = enumerate_trajectories(config, cap=args.cap)
    _, stats = run_ensemble(config, workers=args.workers)
    comparisons = (
        ("S_half", stats.entropy.mean, stats.entropy.stderr_mean),
        ("F_half", stats.fluctuation.mean, stats.fluctuation.stderr_mean),
        ("N_half", stats.n_half.mean, stats.n_half.stderr_mean),
        ("N_total", stats.n_total.mean, stats.n_total.stderr_mean),
    )
    sys.stdout.write(
        f"branches={result.branch_count} total_weight={result.total_weight!r} "
        f"discarded={result.discarded_mass!r}\n"
    )
    sys.stdout.write(f"{'observable':<10} {'exact':>20} {'mc_mean':>20} {'mc_err':>14} {'z':>8}\n")
    for name, mean, err in comparisons:
        exact = result.means[name]
        z = (mean - exact) / err if err > 0 else 0.0
        sys.stdout.write(
            f"{name:<10} {exact!r:>20} {mean!r:>20} {err:>14.3e} {z:>8.2f}\n"
        )
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="transmon-mipt",
        description="Monitored transmon-array trajectory simulator and diagnostics",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("simulate", help="run one Monte Carlo cell")
    ps.add_argument("--config", required=True)
    ps.add_argument("--out", default="run_out")
    ps.add_argument("--workers", type=int, default=None)
    ps.set_defaults(func=cmd_simulate)

    pw = sub.add_parser("sweep", help="run a grid of cells with resume")
    pw.add_argument("--plan", required=True)
    pw.add_argument("--out", default=None)
    pw.add_argument("--workers", type=int, default=None)
    pw.set_defaults(func=cmd_sweep)

    pd = sub.add_parser("diagnose", help="crossing points and scaling collapse")
    pd.add_argument("--curves", required=True)
    pd.add_argument("--out", default=None)
    pd.add_argument("--mid", choices=("lo", "hi"), default="lo")
    pd.add_argument("--pc0", type=float, default=None)
    pd.add_argument("--nu0", type=float, default=2.0)
    pd.add_argument("--zeta0", type=float, default=0.5)
    pd.set_defaults(func=cmd_diagnose)

    pr = sub.add_parser("replica", help="analytic steady-state observables")
    pr.add_argument("--L", type=int, required=True)
    pr.add_argument("--d", type=int, default=2)
    pr.add_argument("--lam", type=float, required=True)
    pr.add_argument("--pattern", type=int, nargs="*", default=None)
    pr.add_argument("--omega", type=float, default=0.0)
    pr.add_argument("--U", type=float, default=0.0)
    pr.add_argument("--exact", action="store_true")
    pr.set_defaults(func=cmd_replica)

    po = sub.add_parser("oracle", help="exact enumeration vs the sampler")
    po.add_argument("--config", required=True)
    po.add_argument("--cap", type=int, default=BRANCH_CAP)
    po.add_argument("--workers", type=int, default=None)
    po.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return 2
    except (ValueError, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
