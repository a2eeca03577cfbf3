from fractions import Fraction

import numpy as np
import pytest

from exact import ExactLog
from markov_spec import validate_spec, segment_density, spec_boundaries
from classify import classify
from models import RandomParams, gen_ising, gen_markov_lifting, gen_random

def test_ising_bond_spectrum():
    spec = gen_ising(1, 2)
    assert spec.is_exact
    assert spec.bond_spectra[0][('+', '-')] == (ExactLog.rational(-1),)
    np.testing.assert_allclose(spec.bonds[1][('-', '-')], [[2.0]])
    assert spec.name == 'ising(1, 2)'

def test_ising_with_rational_couplings():
    spec = gen_ising(Fraction(1, 2), 3)
    assert spec.bond_spectra[0][('+', '+')] == (ExactLog.rational(Fraction(1, 2)),)

def test_ising_float_couplings_cannot_be_exact():
    with pytest.raises(ValueError):
        gen_ising(1.5, 2, exact=True)

def test_markov_lifting_exact_spectra():
    spec = gen_markov_lifting([[Fraction(2, 3), Fraction(1, 3)], [Fraction(1, 3), Fraction(2, 3)]])
    assert spec.is_exact
    assert spec.bond_spectra[0][('1', '1')] == (ExactLog.log(Fraction(3, 2)),)
    np.testing.assert_allclose(spec.bonds[0][('1', '2')], [[np.log(3)]])
    assert validate_spec(spec) == []

def test_markov_lifting_rejects_uniform_matrix():
    with pytest.raises(ValueError):
        gen_markov_lifting([[Fraction(1, 2), Fraction(1, 2)], [Fraction(1, 2), Fraction(1, 2)]])
    with pytest.raises(ValueError):
        gen_markov_lifting([[0.5, 0.5], [0.5, 0.5]])

def test_markov_lifting_rejects_bad_rows():
    with pytest.raises(ValueError):
        gen_markov_lifting([[Fraction(1, 2), Fraction(1, 3)], [Fraction(1, 3), Fraction(2, 3)]])
    with pytest.raises(ValueError):
        gen_markov_lifting([[1.0, 0.0], [0.5, 0.5]])
    with pytest.raises(ValueError):
        gen_markov_lifting([[0.5, 0.5]])

def test_random_spec_is_deterministic():
    first = gen_random(RandomParams(seed=7))
    second = gen_random(RandomParams(seed=7))
    for a, b in zip(first.bonds, second.bonds):
        for key in a:
            np.testing.assert_allclose(a[key], b[key])
    for a, b in zip(first.embeddings, second.embeddings):
        np.testing.assert_allclose(a, b)

def test_lifting_keeps_eigenvalue_data():
    lifted = gen_random(RandomParams(seed=11))
    plain = gen_random(RandomParams(seed=11, lifting=False))
    assert lifted.bond_spectra == plain.bond_spectra
    assert [s.labels for s in lifted.sites] == [s.labels for s in plain.sites]
    for bond in plain.bonds:
        for block in bond.values():
            np.testing.assert_allclose(block, np.diag(np.diag(block)))
    assert validate_spec(lifted) == []
    assert validate_spec(plain) == []

def test_random_finite_chain():
    spec = gen_random(RandomParams(seed=3, site_dims=(2, 3, 2), periodic=False))
    assert len(spec.bonds) == 2
    assert validate_spec(spec) == []

def test_random_explicit_partition():
    spec = gen_random(RandomParams(seed=1, site_dims=(4,), partitions=(((2, 2),),)))
    assert spec.sites[0].left_dims == (2,)
    assert spec.sites[0].right_dims == (2,)
    assert validate_spec(spec) == []

def test_random_parameter_checks():
    with pytest.raises(ValueError):
        gen_random(RandomParams(seed=0, site_dims=(7,)))
    with pytest.raises(ValueError):
        gen_random(RandomParams(seed=0, site_dims=(2,), periodic=False))
    with pytest.raises(ValueError):
        gen_random(RandomParams(seed=0, site_dims=(3,), partitions=(((1, 2),),)))
    with pytest.raises(ValueError):
        gen_random(RandomParams(seed=0, pool=()))

def test_random_float_mode_drops_exact_data():
    assert not gen_random(RandomParams(seed=7, exact=False)).is_exact

def test_ising_equal_couplings_spectrum():
    spec = gen_ising(3, 3)
    for spectrum in spec.bond_spectra:
        assert {float(v[0]) for v in spectrum.values()} == {3.0, -3.0}

def test_lifted_and_plain_states_are_unitarily_related():
    for seed in (3, 7, 11):
        lifted = gen_random(RandomParams(seed=seed))
        plain = gen_random(RandomParams(seed=seed, lifting=False))
        rho_lifted = segment_density(lifted, (0, 2), spec_boundaries(lifted), dense=True).rho
        rho_plain = segment_density(plain, (0, 2), spec_boundaries(plain), dense=True).rho
        np.testing.assert_allclose(np.linalg.eigvalsh(rho_lifted), np.linalg.eigvalsh(rho_plain), atol=1e-12)
        assert not np.allclose(rho_lifted, rho_plain)
        first, second = classify(lifted), classify(plain)
        assert first.kind == second.kind
        assert first.fundamental == second.fundamental
