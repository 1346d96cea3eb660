"""Fock-space layer: basis enumeration, entropy, moments, Born sampling.

The entanglement entropy and number moments are checked against dense
linear-algebra oracles (reshape + SVD, explicit diagonal operators)
that share no code with the implementation.
"""

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import embed_full, random_state
from transmon_mipt import (
    StateVector,
    build_basis,
    number_moments,
    sample_configuration,
    schmidt_entropy,
)


def dense_entropy(full_amps, L, d, cut):
    """Reshape + SVD entanglement entropy, independent of the package."""
    mat = full_amps.reshape(d**cut, d ** (L - cut))
    sv = np.linalg.svd(mat, compute_uv=False)
    lam = sv[sv > 1e-14] ** 2
    return float(-np.sum(lam * np.log(lam)))


def dense_number(full_amps, L, d, region):
    occ = np.indices((d,) * L).reshape(L, -1)
    n_a = sum(occ[site - 1] for site in region).astype(float)
    prob = np.abs(full_amps) ** 2
    return float(prob @ n_a), float(prob @ n_a**2)


def brute_sector_count(L, d, sector):
    return sum(
        1 for tup in itertools.product(range(d), repeat=L) if sum(tup) == sector
    )


class TestBasis:
    def test_full_dimension(self):
        assert build_basis(12, 2).dim == 4096
        assert build_basis(3, 4).dim == 64

    def test_sector_dimensions_match_enumeration(self):
        for L, d, n in [(3, 2, 1), (4, 3, 4), (6, 2, 3), (5, 3, 5)]:
            assert build_basis(L, d, sector=n).dim == brute_sector_count(L, d, n)

    def test_quoted_sector_counts(self):
        assert build_basis(3, 2, sector=1).dim == 3
        assert build_basis(4, 3, sector=4).dim == 19

    def test_sector_states_sorted_and_unique(self):
        basis = build_basis(5, 3, sector=4)
        codes = basis.states.astype(np.int64) @ (3 ** np.arange(4, -1, -1))
        assert np.all(np.diff(codes) > 0)
        assert np.all(basis.states.sum(axis=1) == 4)

    def test_state_index_roundtrip(self):
        basis = build_basis(4, 3, sector=5)
        for i in range(basis.dim):
            assert basis.state_index(tuple(basis.states[i])) == i

    def test_site_values_one_indexed(self):
        basis = build_basis(3, 2)
        # site 1 is the leftmost (most significant) digit
        vals = basis.site_values(1)
        assert vals[0] == 0 and vals[-1] == 1
        np.testing.assert_array_equal(basis.site_values(3), basis.states[:, 2])

    def test_invalid_arguments(self):
        with pytest.raises(ValueError):
            build_basis(0, 2)
        with pytest.raises(ValueError):
            build_basis(3, 1)
        with pytest.raises(ValueError):
            build_basis(3, 2, sector=7)
        with pytest.raises(ValueError):
            build_basis(3, 2, sector=-1)


class TestEntropyOracle:
    def test_full_basis_random_states(self):
        rng = np.random.default_rng(7)
        for L, d in [(4, 2), (3, 3), (2, 4)]:
            basis = build_basis(L, d)
            for _ in range(5):
                psi = random_state(basis, rng)
                for cut in range(1, L):
                    want = dense_entropy(embed_full(psi), L, d, cut)
                    assert schmidt_entropy(psi, cut) == pytest.approx(want, abs=1e-10)

    def test_sector_basis_random_states(self):
        rng = np.random.default_rng(11)
        for L, d, n in [(4, 2, 2), (4, 3, 4), (5, 2, 2)]:
            basis = build_basis(L, d, sector=n)
            for _ in range(5):
                psi = random_state(basis, rng)
                for cut in range(1, L):
                    want = dense_entropy(embed_full(psi), L, d, cut)
                    assert schmidt_entropy(psi, cut) == pytest.approx(want, abs=1e-10)

    def test_bell_pair_gives_log_two(self):
        basis = build_basis(2, 2, sector=1)
        amps = np.zeros(basis.dim, dtype=complex)
        amps[basis.state_index((0, 1))] = 1 / np.sqrt(2)
        amps[basis.state_index((1, 0))] = 1 / np.sqrt(2)
        psi = StateVector(basis, amps)
        assert schmidt_entropy(psi, 1) == pytest.approx(np.log(2), abs=1e-12)

    def test_product_state_zero(self):
        basis = build_basis(4, 2)
        amps = np.zeros(basis.dim, dtype=complex)
        amps[basis.state_index((1, 0, 1, 0))] = 1.0
        psi = StateVector(basis, amps)
        for cut in range(1, 4):
            assert schmidt_entropy(psi, cut) == 0.0

    def test_requires_normalized_state(self):
        basis = build_basis(2, 2)
        psi = StateVector(basis, np.full(4, 0.7, dtype=complex))
        with pytest.raises(ValueError):
            schmidt_entropy(psi, 1)


class TestNumberMoments:
    def test_against_dense_diagonal(self):
        rng = np.random.default_rng(23)
        for L, d, sector in [(4, 2, None), (4, 2, 2), (3, 3, 4)]:
            basis = build_basis(L, d, sector=sector)
            psi = random_state(basis, rng)
            full = embed_full(psi)
            for region in [(1,), (1, 2), (2, 4) if L >= 4 else (1, 3), tuple(range(1, L + 1))]:
                want1, want2 = dense_number(full, L, d, region)
                got1, got2 = number_moments(psi, region)
                assert got1 == pytest.approx(want1, abs=1e-12)
                assert got2 == pytest.approx(want2, abs=1e-12)

    def test_total_number_sharp_in_sector(self):
        basis = build_basis(5, 2, sector=3)
        psi = random_state(basis, np.random.default_rng(0))
        n1, n2 = number_moments(psi, tuple(range(1, 6)))
        assert n1 == pytest.approx(3.0, abs=1e-12)
        assert n2 - n1 * n1 == pytest.approx(0.0, abs=1e-12)


class TestSampling:
    def test_deterministic_given_seed(self):
        basis = build_basis(4, 2, sector=2)
        psi = random_state(basis, np.random.default_rng(3))
        a = sample_configuration(psi, np.random.default_rng(99))
        b = sample_configuration(psi, np.random.default_rng(99))
        assert a == b

    def test_matches_born_weights(self):
        basis = build_basis(3, 2)
        rng = np.random.default_rng(5)
        psi = random_state(basis, rng)
        prob = np.abs(psi.amps) ** 2
        counts = np.zeros(basis.dim)
        n = 20000
        for _ in range(n):
            cfg = sample_configuration(psi, rng)
            counts[basis.state_index(cfg)] += 1
        expected = prob * n
        chi2 = np.sum((counts - expected) ** 2 / expected)
        # dof = 7; P(chi2 > 30) ~ 1e-4, and the seed is fixed
        assert chi2 < 30.0

    def test_delta_state_always_same_configuration(self):
        basis = build_basis(4, 3, sector=4)
        amps = np.zeros(basis.dim, dtype=complex)
        amps[basis.state_index((2, 0, 1, 1))] = 1.0
        psi = StateVector(basis, amps)
        rng = np.random.default_rng(1)
        for _ in range(50):
            assert sample_configuration(psi, rng) == (2, 0, 1, 1)


@given(
    L=st.integers(min_value=2, max_value=5),
    cut=st.integers(min_value=1, max_value=4),
    seed=st.integers(min_value=0, max_value=2**31),
)
@settings(max_examples=60)
def test_entropy_bounds_and_oracle(L, cut, seed):
    if cut >= L:
        cut = L - 1
    basis = build_basis(L, 2)
    psi = random_state(basis, np.random.default_rng(seed))
    s = schmidt_entropy(psi, cut)
    upper = np.log(2 ** min(cut, L - cut)) + 1e-10
    assert -1e-12 <= s <= upper
    assert s == pytest.approx(dense_entropy(embed_full(psi), L, 2, cut), abs=1e-9)


@given(
    L=st.integers(min_value=2, max_value=5),
    seed=st.integers(min_value=0, max_value=2**31),
)
@settings(max_examples=40)
def test_entropy_additive_under_product(L, seed):
    """A product of two random blocks has zero entropy across the seam."""
    rng = np.random.default_rng(seed)
    left = random_state(build_basis(L, 2), rng)
    right = random_state(build_basis(L, 2), rng)
    basis = build_basis(2 * L, 2)
    amps = np.kron(embed_full(left), embed_full(right))
    psi = StateVector(basis, amps)
    assert schmidt_entropy(psi, L) == pytest.approx(0.0, abs=1e-10)
    # interior cuts of the product match the isolated block's own cuts
    for cut in range(1, L):
        assert schmidt_entropy(psi, cut) == pytest.approx(
            schmidt_entropy(left, cut), abs=1e-9
        )


@given(seed=st.integers(min_value=0, max_value=2**31))
@settings(max_examples=40)
def test_entropy_mirror_symmetric(seed):
    """Reversing the chain site order leaves every cut entropy alone."""
    L, d = 4, 2
    basis = build_basis(L, d)
    psi = random_state(basis, np.random.default_rng(seed))
    full = embed_full(psi)
    rev = full.reshape((d,) * L).transpose(range(L - 1, -1, -1)).reshape(-1)
    psi_rev = StateVector(basis, rev)
    for cut in range(1, L):
        assert schmidt_entropy(psi, cut) == pytest.approx(
            schmidt_entropy(psi_rev, L - cut), abs=1e-10
        )
