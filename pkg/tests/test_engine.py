"""Trajectory engine: limits, determinism, parallel equivalence.

The p = 0 limit is checked against direct dense unitary evolution, the
p = 1 limits against what projective measurement forces by hand, and
moderate-p ensembles against the exact trajectory-sum oracle.
"""

import numpy as np
import pytest

from conftest import embed_full
from transmon_mipt import (
    BHParams,
    MeasurementSpec,
    RunConfig,
    StateVector,
    Workspace,
    build_basis,
    build_propagator,
    enumerate_trajectories,
    half_region,
    run_ensemble,
    run_trajectory,
)
from transmon_mipt.engine import resolve_workers
from test_fock import dense_entropy


def small_config(**kw):
    defaults = dict(
        L=4, d=2, params=BHParams(),
        meas=MeasurementSpec(kind="standard", p=0.3),
        T=0.4, iterations=1, master_seed=0,
    )
    defaults.update(kw)
    return RunConfig(**defaults)


class TestLimits:
    def test_p_zero_matches_dense_unitary(self):
        cfg = small_config(meas=MeasurementSpec(kind="standard", p=0.0), T=1.0)
        rec = run_trajectory(cfg, 0)
        basis = build_basis(4, 2, sector=2)
        prop = build_propagator(cfg.params, basis, dt=cfg.dt, mode="exact")
        amps = np.zeros(basis.dim, dtype=complex)
        amps[basis.state_index((1, 0, 1, 0))] = 1.0
        for _ in range(cfg.steps):
            amps = prop.apply(amps)
        psi = StateVector(basis, amps / np.linalg.norm(amps))
        want = dense_entropy(embed_full(psi), 4, 2, 2)
        assert rec.entropy_half == pytest.approx(want, abs=1e-9)
        assert rec.n_total == 2

    def test_p_one_standard_keeps_zero_entropy(self):
        cfg = small_config(meas=MeasurementSpec(kind="standard", p=1.0), T=0.4)
        for i in range(5):
            rec = run_trajectory(cfg, i)
            assert rec.entropy_half == pytest.approx(0.0, abs=1e-12)
            assert rec.fluctuation_half == pytest.approx(0.0, abs=1e-12)
            assert rec.mean_half == pytest.approx(rec.n_half, abs=1e-12)
            assert rec.n_total == 2

    def test_p_one_predetermined_freezes_pattern(self):
        cfg = small_config(meas=MeasurementSpec(kind="predetermined", p=1.0), T=0.4)
        for i in range(5):
            rec = run_trajectory(cfg, i)
            assert rec.sampled_config == (1, 0, 1, 0)
            assert rec.n_total == 2
            assert rec.entropy_half == pytest.approx(0.0, abs=1e-12)

    def test_standard_locks_total_number(self):
        cfg = small_config(meas=MeasurementSpec(kind="standard", p=0.4), iterations=40)
        records, stats = run_ensemble(cfg, workers=1)
        assert all(r.n_total == 2 for r in records)
        assert stats.n_total.variance == 0.0

    def test_predetermined_can_change_total_number(self):
        # large lambda regime: relabels carry weight, N drifts
        cfg = small_config(
            meas=MeasurementSpec(kind="predetermined", p=0.05),
            T=20.0, iterations=60, master_seed=5,
        )
        records, _ = run_ensemble(cfg, workers=1)
        assert any(r.n_total != 2 for r in records)


class TestDeterminism:
    def test_trajectory_is_reproducible(self):
        cfg = small_config(meas=MeasurementSpec(kind="predetermined", p=0.3), T=2.0)
        a = run_trajectory(cfg, 7)
        b = run_trajectory(cfg, 7)
        assert a == b

    def test_trajectories_differ_across_iterations(self):
        cfg = small_config(meas=MeasurementSpec(kind="standard", p=0.3), T=2.0)
        recs = {run_trajectory(cfg, i).entropy_half for i in range(8)}
        assert len(recs) > 1

    def test_shared_workspace_matches_fresh(self):
        cfg = small_config(meas=MeasurementSpec(kind="predetermined", p=0.4), T=1.0)
        ws = Workspace(cfg)
        for i in range(6):
            assert run_trajectory(cfg, i, ws) == run_trajectory(cfg, i)

    def test_ensemble_reproducible(self):
        cfg = small_config(iterations=30)
        r1, s1 = run_ensemble(cfg, workers=1)
        r2, s2 = run_ensemble(cfg, workers=1)
        assert r1 == r2
        assert s1 == s2


class TestParallel:
    def test_worker_count_does_not_change_results(self):
        cfg = small_config(
            meas=MeasurementSpec(kind="predetermined", p=0.25),
            T=0.6, iterations=600, master_seed=42,
        )
        r1, s1 = run_ensemble(cfg, workers=1)
        r3, s3 = run_ensemble(cfg, workers=3)
        assert r1 == r3
        assert s1 == s3

    def test_record_sink_receives_fixed_chunks(self):
        cfg = small_config(iterations=600)
        sizes = []
        run_ensemble(cfg, workers=1, record_sink=lambda chunk: sizes.append(len(chunk)))
        assert sizes == [256, 256, 88]

    def test_sink_receives_what_a_plain_run_returns(self):
        cfg = small_config(iterations=300)
        seen = []
        records, _ = run_ensemble(cfg, workers=2, record_sink=seen.extend)
        assert records == []
        plain, _ = run_ensemble(cfg, workers=1)
        assert seen == plain

    def test_resolve_workers_env_default(self, monkeypatch):
        monkeypatch.setenv("TRANSMON_MIPT_WORKERS", "3")
        assert resolve_workers(None) == 3
        assert resolve_workers(5) == 5
        monkeypatch.delenv("TRANSMON_MIPT_WORKERS")
        assert resolve_workers(None) == 1


class TestBasisChoice:
    def test_full_basis_matches_sector_restricted(self):
        for seed in (0, 1, 2):
            base = dict(
                meas=MeasurementSpec(kind="standard", p=0.3),
                T=0.6, master_seed=seed,
            )
            rec_s = run_trajectory(small_config(sector_restrict=True, **base), 0)
            rec_f = run_trajectory(small_config(sector_restrict=False, **base), 0)
            assert rec_s.sampled_config == rec_f.sampled_config
            assert rec_s.entropy_half == pytest.approx(rec_f.entropy_half, abs=1e-9)
            assert rec_s.fluctuation_half == pytest.approx(rec_f.fluctuation_half, abs=1e-9)

    def test_krylov_propagation_matches_exact(self):
        base = dict(meas=MeasurementSpec(kind="standard", p=0.2), T=0.4, master_seed=3)
        rec_e = run_trajectory(small_config(propagation="exact", **base), 0)
        rec_k = run_trajectory(small_config(propagation="krylov", **base), 0)
        assert rec_e.sampled_config == rec_k.sampled_config
        assert rec_e.entropy_half == pytest.approx(rec_k.entropy_half, abs=1e-8)


class TestAgainstOracle:
    def test_ensemble_means_within_monte_carlo_error(self):
        cfg = RunConfig(
            L=2, d=2, params=BHParams(),
            meas=MeasurementSpec(kind="standard", p=0.5),
            T=0.06, iterations=3000, master_seed=9,
        )
        exact = enumerate_trajectories(cfg)
        _, stats = run_ensemble(cfg, workers=1)
        for name, acc in [
            ("S_half", stats.entropy),
            ("F_half", stats.fluctuation),
            ("N_half", stats.n_half),
        ]:
            err = max(acc.stderr_mean, 1e-9)
            assert abs(acc.mean - exact.means[name]) < 4.0 * err

    def test_predetermined_ensemble_against_oracle(self):
        cfg = RunConfig(
            L=2, d=2, params=BHParams(),
            meas=MeasurementSpec(kind="predetermined", p=0.5),
            T=0.06, iterations=3000, master_seed=10,
        )
        exact = enumerate_trajectories(cfg)
        _, stats = run_ensemble(cfg, workers=1)
        for name, acc in [
            ("S_half", stats.entropy),
            ("N_total", stats.n_total),
            ("N_half", stats.n_half),
        ]:
            err = max(acc.stderr_mean, 1e-9)
            assert abs(acc.mean - exact.means[name]) < 4.0 * err


class TestRecords:
    def test_mid_sites_are_the_two_central(self):
        cfg = small_config(meas=MeasurementSpec(kind="predetermined", p=1.0))
        rec = run_trajectory(cfg, 0)
        # pattern (1,0,1,0): site 2 holds 0, site 3 holds 1
        assert rec.n_mid_lo == 0
        assert rec.n_mid_hi == 1
        assert rec.n_half == 1

    def test_outcome_log(self):
        cfg = small_config(
            meas=MeasurementSpec(kind="standard", p=1.0), T=0.1, log_outcomes=True
        )
        rec = run_trajectory(cfg, 0)
        assert rec.outcomes is not None
        assert len(rec.outcomes) == cfg.steps * 4
        assert all(e.kind == "standard" for e in rec.outcomes)
        assert [e.site for e in rec.outcomes[:4]] == [1, 2, 3, 4]

    def test_outcome_log_off_by_default(self):
        rec = run_trajectory(small_config(), 0)
        assert rec.outcomes is None

    def test_half_region(self):
        assert half_region(4) == (1, 2)
        assert half_region(8) == (1, 2, 3, 4)


class TestConfigValidation:
    def test_odd_length_needs_explicit_initial_state(self):
        with pytest.raises(ValueError):
            small_config(L=5)
        cfg = small_config(L=5, initial_state=(1, 0, 1, 0, 1))
        assert cfg.initial_state == (1, 0, 1, 0, 1)

    def test_duration_must_be_step_multiple(self):
        with pytest.raises(ValueError):
            small_config(T=0.03)

    def test_occupations_bounded_by_d(self):
        with pytest.raises(ValueError):
            small_config(initial_state=(2, 0, 0, 0))

    def test_unknown_propagation_mode(self):
        with pytest.raises(ValueError):
            small_config(propagation="euler")

    def test_default_durations_by_local_dimension(self):
        assert small_config(T=None).T == 20.0
        assert small_config(T=None, d=3).T == 30.0

    def test_steps_property(self):
        assert small_config(T=1.0).steps == 50
