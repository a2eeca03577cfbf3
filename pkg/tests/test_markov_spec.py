import math
from math import prod
from dataclasses import replace

import numpy as np
import pytest

from tolerances import Tolerances
from exact import ExactLog
from markov_spec import (
    SiteBlocks,
    InteractionSpec,
    SegmentHamiltonian,
    validate_spec,
    assemble_operators,
    verify_commutation,
    commutation_scale,
    stationary_boundaries,
    spec_boundaries,
    transfer_matrix,
    segment_density,
    evaluate_state,
    basis_agreement,
    central_pinching_state,
    kms_check,
    modular_flow,
    modular_stabilization,
    projectivity_residual,
    periodicity_deviation,
)
from models import RandomParams, gen_ising, gen_markov_lifting, gen_random
from utilities import kron_all

X = np.array([[0.0, 1.0], [1.0, 0.0]])
Z = np.diag([1.0, -1.0])
P = [[2 / 3, 1 / 3], [1 / 3, 2 / 3]]

def test_site_blocks_layout():
    site = SiteBlocks.from_dims(('a', 'b'), (1, 2), (2, 1))
    assert site.dim == 4
    assert site.offset('b') == 2
    assert site.block_slice('b') == slice(2, 4)
    with pytest.raises(ValueError):
        site.position('c')

def test_periodic_indices_wrap():
    spec = gen_ising(1, 2)
    assert spec.period == 2
    assert spec.site_index(5) == 1
    assert spec.bond_index(-1) == 1

def test_finite_chain_indices_checked():
    spec = replace(gen_ising(1, 2), periodic=False, bonds=gen_ising(1, 2).bonds[:1], bond_spectra=())
    assert validate_spec(spec) == []
    with pytest.raises(ValueError):
        spec.bond_index(1)
    with pytest.raises(ValueError):
        spec.check_segment(0, 2)
    with pytest.raises(ValueError):
        spec.period

def test_empty_segment_rejected():
    with pytest.raises(ValueError):
        gen_ising(1, 2).check_segment(2, 1)

def test_generated_specs_validate():
    assert validate_spec(gen_ising(1, 2)) == []
    assert validate_spec(gen_markov_lifting(P)) == []
    assert validate_spec(gen_random(RandomParams(seed=7))) == []

def test_non_hermitian_bond_flagged():
    spec = gen_ising(1, 2)
    bonds = list(spec.bonds)
    bonds[1] = dict(bonds[1])
    bonds[1][('+', '-')] = np.array([[1j]])
    violations = validate_spec(replace(spec, bonds=tuple(bonds), bond_spectra=()))
    assert [v.path for v in violations] == ["bonds[1][('+', '-')]"]
    assert 'Hermitian' in violations[0].message

def test_missing_bond_block_flagged():
    spec = gen_ising(1, 2)
    bonds = [dict(b) for b in spec.bonds]
    del bonds[0][('-', '-')]
    violations = validate_spec(replace(spec, bonds=tuple(bonds), bond_spectra=()))
    assert any('missing block' in v.message for v in violations)

def test_dimension_mismatch_flagged():
    spec = gen_ising(1, 2)
    bad_site = SiteBlocks(('+', '-'), (1, 1), (1, 1), 3)
    violations = validate_spec(replace(spec, sites=(bad_site, spec.sites[1])))
    assert violations[0].path == 'sites[0].dim'

def test_exact_spectrum_mismatch_flagged():
    spec = gen_ising(1, 2)
    spectra = [dict(s) for s in spec.bond_spectra]
    spectra[0][('+', '+')] = (ExactLog.rational(3),)
    violations = validate_spec(replace(spec, bond_spectra=tuple(spectra)))
    assert any('disagree' in v.message for v in violations)

def test_non_unitary_embedding_flagged():
    spec = gen_ising(1, 2)
    violations = validate_spec(replace(spec, embeddings=(2 * np.eye(2), None)))
    assert [v.path for v in violations] == ['embeddings[0]']

def test_assembled_ising_hamiltonian():
    spec = gen_ising(1, 2)
    H = assemble_operators(spec, (0, 2))
    assert verify_commutation(H) < 1e-12 * commutation_scale(H)
    expected = np.kron(np.kron(Z, Z), np.eye(2)) + 2 * np.kron(np.eye(2), np.kron(Z, Z))
    np.testing.assert_allclose(H.total, expected, atol=1e-14)

def test_lifted_random_terms_commute():
    spec = gen_random(RandomParams(seed=7))
    H = assemble_operators(spec, (0, 2), stationary_boundaries(spec))
    assert verify_commutation(H) < 1e-12 * commutation_scale(H)

def test_structure_suite_on_seeded_specs():
    for seed in range(50):
        rng = np.random.default_rng(seed)
        dims = tuple(int(d) for d in rng.integers(2, 5, size=int(rng.integers(1, 4))))
        spec = gen_random(RandomParams(seed=seed, site_dims=dims))
        l = 4
        while prod(spec.dims(0, l)) > 256:
            l -= 1
        H = assemble_operators(spec, (0, l))
        assert verify_commutation(H) < 1e-12 * commutation_scale(H), seed
        assert basis_agreement(segment_density(spec, (0, l), dense=True)) < 1e-10, seed

def test_non_commuting_bonds_detected():
    H = SegmentHamiltonian.from_bonds([2, 2, 2], [kron_all([X, X, np.eye(2)]), kron_all([np.eye(2), Z, Z])])
    assert verify_commutation(H) > 1.0

def test_dense_limit_refused():
    spec = gen_ising(1, 2)
    small = Tolerances(dense_dim_limit=4)
    with pytest.raises(ValueError):
        assemble_operators(spec, (0, 2), tol=small)
    with pytest.raises(ValueError):
        segment_density(spec, (0, 2), dense=True, tol=small)
    state = segment_density(spec, (0, 2), tol=small)
    assert state.rho is None
    with pytest.raises(ValueError):
        state.require_dense()

def test_markov_lifting_boundaries():
    spec = gen_markov_lifting(P)
    b = stationary_boundaries(spec)
    assert abs(b.perron_value - 1) < 1e-12
    assert abs(b.shift) < 1e-12
    np.testing.assert_allclose(b.right(spec, 0)['1'], [[0.0]], atol=1e-12)
    np.testing.assert_allclose(b.left(spec, 0)['2'], [[np.log(2)]], atol=1e-12)

def test_markov_lifting_density():
    state = segment_density(gen_markov_lifting(P), (0, 1))
    np.testing.assert_allclose(np.diag(state.rho).real, [1 / 3, 1 / 6, 1 / 6, 1 / 3], atol=1e-12)
    assert abs(state.log_partition) < 1e-12

def test_stationary_boundaries_need_periodic_spec():
    spec = replace(gen_ising(1, 2), periodic=False, bonds=gen_ising(1, 2).bonds[:1], bond_spectra=())
    with pytest.raises(ValueError):
        stationary_boundaries(spec)

def test_transfer_matrix_of_ising_bond():
    t = transfer_matrix(gen_ising(1, 2), 0)
    np.testing.assert_allclose(t, [[np.exp(-1), np.exp(1)], [np.exp(1), np.exp(-1)]])

def test_density_is_a_state():
    state = segment_density(gen_random(RandomParams(seed=7)), (0, 2))
    rho = state.rho
    assert abs(np.trace(rho) - 1) < 1e-12
    np.testing.assert_allclose(rho, rho.conj().T, atol=1e-14)
    assert np.linalg.eigvalsh(rho).min() > -1e-12
    assert abs(sum(p.weight for p in state.paths) - 1) < 1e-12

def test_block_path_matches_dense():
    state = segment_density(gen_random(RandomParams(seed=7)), (0, 2))
    assert basis_agreement(state) < 1e-10
    a = kron_all([X, np.eye(state.dims[1]), np.eye(state.dims[2])]) if state.dims[0] == 2 else np.eye(state.total_dim)
    assert abs(evaluate_state(state, a) - evaluate_state(state, a, 'block_path')) < 1e-10

def test_unknown_evaluation_mode():
    state = segment_density(gen_ising(1, 2), (0, 1))
    with pytest.raises(ValueError):
        evaluate_state(state, np.eye(4), 'sampled')

def test_ising_state_is_label_diagonal():
    state = segment_density(gen_ising(1, 2), (0, 2))
    assert central_pinching_state(state) < 1e-14
    assert central_pinching_state(state, [kron_all([X, np.eye(2), np.eye(2)])]) < 1e-14

def test_zero_couplings_give_uniform_weights():
    state = segment_density(gen_ising(0, 0), (0, 2))
    np.testing.assert_allclose([p.weight for p in state.paths], [1 / 8] * 8, atol=1e-14)

def test_kms_identity():
    state = segment_density(gen_random(RandomParams(seed=7)), (0, 1))
    rng = np.random.default_rng(1)
    a = rng.normal(size=(state.total_dim,) * 2)
    b = rng.normal(size=(state.total_dim,) * 2)
    assert kms_check(state, a, b) < 1e-9

def test_kms_and_modular_stabilization_suite():
    rng = np.random.default_rng(5)
    for spec in (gen_ising(1, 2), gen_random(RandomParams(seed=7)), gen_random(RandomParams(seed=11))):
        state = segment_density(spec, (0, 2))
        a, b = rng.normal(size=(2, state.total_dim, state.total_dim))
        assert kms_check(state, a, b) < 1e-9, spec.name
        d = spec.site(0).dim
        local = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        assert modular_stabilization(spec, local, (0, 0), 0.7, 1) < 1e-10, spec.name

def test_ising_bond_correlation():
    spec = gen_ising(1, 2)
    for segment, coupling in (((0, 1), 1), ((1, 2), 2)):
        state = segment_density(spec, segment)
        assert abs(evaluate_state(state, np.kron(Z, Z)) + np.tanh(coupling)) < 1e-12
        assert abs(evaluate_state(state, np.kron(Z, Z), 'block_path') + np.tanh(coupling)) < 1e-12

def test_projectivity_both_ends():
    for spec in (gen_ising(1, 2), gen_random(RandomParams(seed=7))):
        assert projectivity_residual(spec, (0, 1)) < 1e-10
        assert projectivity_residual(spec, (0, 1), side='left') < 1e-10

def test_projectivity_on_growing_segments():
    specs = [gen_ising(1, 2), gen_ising(1, math.sqrt(2)), gen_markov_lifting(P)]
    specs += [gen_random(RandomParams(seed=seed)) for seed in range(5)]
    for spec in specs:
        boundaries = stationary_boundaries(spec)
        for segment in ((0, 2), (0, 3)):
            for side in ('right', 'left'):
                assert projectivity_residual(spec, segment, boundaries, side) < 1e-10, (spec.name, segment, side)

def test_projectivity_unknown_side():
    with pytest.raises(ValueError):
        projectivity_residual(gen_ising(1, 2), (0, 1), side='middle')

def test_periodicity():
    spec = gen_random(RandomParams(seed=7))
    state = segment_density(spec, (0, 1))
    a = np.random.default_rng(2).normal(size=(state.total_dim,) * 2)
    assert periodicity_deviation(spec, (0, 1), a) < 1e-10

def test_modular_flow_commutes_with_diagonal_observable():
    flowed = modular_flow(gen_ising(1, 2), Z, (0, 0), 0.7, 1)
    np.testing.assert_allclose(flowed, kron_all([np.eye(2), Z, np.eye(2)]), atol=1e-12)

def test_modular_flow_stabilizes():
    assert modular_stabilization(gen_ising(1, 2), X, (0, 0), 0.7, 1) < 1e-10

def test_modular_flow_window_must_contain_support():
    with pytest.raises(ValueError):
        modular_flow(gen_ising(1, 2), X, (2, 2), 0.1, 1)

def test_spec_boundaries_copy_terms():
    spec = gen_ising(1, 2)
    b = spec_boundaries(spec)
    assert b.shift == 0.0
    assert not b.stationary
    np.testing.assert_allclose(b.left(spec, 3)['+'], [[0.0]])

def test_scaled_spec_keeps_exact_spectra():
    spec = gen_ising(1, 2).scaled(2)
    assert spec.bond_spectra[1][('+', '+')] == (ExactLog.rational(4),)
    np.testing.assert_allclose(spec.bonds[1][('+', '+')], [[4.0]])
    assert isinstance(spec, InteractionSpec)
