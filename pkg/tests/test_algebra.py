import numpy as np
import pytest

from algebra import (
    DirectSumAlgebra,
    InclusionDescriptor,
    ExpectationMap,
    as_element,
    canonical_trace,
    trace_preserving_expectation,
    restrict_density,
    pinching_expectation,
    diagonal_expectation,
    simultaneous_diagonalization,
    matrix_exp,
    matrix_log,
)

def _diagonal_in_full(n: int) -> InclusionDescriptor:
    """C^n inside M_n"""
    sub = DirectSumAlgebra(tuple((i, 1) for i in range(n)))
    sup = DirectSumAlgebra.full(n)
    return InclusionDescriptor.standard(sub, sup, np.ones((1, n), dtype=int))

def _scalars_twice() -> InclusionDescriptor:
    """C inside M_2 with multiplicity 2"""
    return InclusionDescriptor.standard(DirectSumAlgebra.full(1), DirectSumAlgebra.full(2), [[2]])

def test_algebra_rejects_duplicate_labels():
    with pytest.raises(ValueError):
        DirectSumAlgebra((('a', 1), ('a', 2)))

def test_element_shape_checked():
    alg = DirectSumAlgebra((('a', 1), ('b', 2)))
    with pytest.raises(ValueError):
        alg.element([np.eye(1), np.eye(3)])

def test_hermitian_flag_checked():
    with pytest.raises(ValueError):
        as_element(np.array([[0, 1], [0, 0]]), hermitian=True)

def test_canonical_trace_counts_minimal_projections():
    alg = DirectSumAlgebra((('a', 2), ('b', 3)))
    assert canonical_trace(alg, alg.identity()) == 5

def test_matrix_units_span_the_algebra():
    alg = DirectSumAlgebra((('a', 1), ('b', 2)))
    assert len(list(alg.matrix_units())) == 1 + 4

def test_standard_inclusion_validates():
    _diagonal_in_full(3).validate()
    _scalars_twice().validate()

def test_inclusion_with_wrong_fill_rejected():
    inc = InclusionDescriptor.standard(DirectSumAlgebra.full(1), DirectSumAlgebra.full(3), [[2]])
    with pytest.raises(ValueError):
        inc.validate()

def test_embed_is_a_homomorphism():
    inc = _diagonal_in_full(2)
    y = inc.sub.element([np.array([[2.0]]), np.array([[3.0]])])
    z = inc.sub.element([np.array([[1.0]]), np.array([[-1.0]])])
    np.testing.assert_allclose(inc.embed(y @ z).dense(), (inc.embed(y) @ inc.embed(z)).dense())
    np.testing.assert_allclose(inc.embed(inc.sub.identity()).dense(), np.eye(2))

def test_expectation_on_diagonal_subalgebra_keeps_diagonal():
    inc = _diagonal_in_full(2)
    x = as_element(np.array([[1.0, 5.0], [5.0, 2.0]]))
    result = ExpectationMap(inc).apply(x)
    np.testing.assert_allclose([b[0, 0] for b in result.blocks], [1.0, 2.0])

def test_expectation_preserves_trace_against_subalgebra():
    inc = _diagonal_in_full(3)
    rng = np.random.default_rng(0)
    a = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    x = as_element(a @ a.conj().T)
    e = ExpectationMap(inc)
    for _, _, _, y in inc.sub.matrix_units():
        lhs = canonical_trace(inc.sub, e.apply(x) @ y)
        rhs = canonical_trace(inc.sup, x @ inc.embed(y))
        assert abs(lhs - rhs) < 1e-12

def test_expectation_with_multiplicity_is_the_trace():
    e = ExpectationMap(_scalars_twice())
    x = as_element(np.array([[1.0, 2.0], [2.0, 3.0]]))
    np.testing.assert_allclose(e.apply(x).blocks[0], [[4.0]])
    np.testing.assert_allclose(e.project(x).dense(), 2.0 * np.eye(2))

def test_project_is_idempotent():
    inc = _scalars_twice()
    e = ExpectationMap(inc)
    x = as_element(np.array([[1.0, 2.0], [2.0, 3.0]]))
    once = e.project(x)
    np.testing.assert_allclose(e.project(once).dense(), once.dense())

def test_expectation_is_completely_positive():
    assert trace_preserving_expectation(_diagonal_in_full(3)).is_completely_positive()
    assert ExpectationMap(_scalars_twice()).is_completely_positive()

def test_restrict_density_rejects_non_positive():
    with pytest.raises(ValueError):
        restrict_density(as_element(np.diag([1.0, -0.5])), _diagonal_in_full(2))

def test_restrict_density_of_identity():
    result = restrict_density(as_element(np.eye(2) / 2), _diagonal_in_full(2))
    np.testing.assert_allclose([b[0, 0] for b in result.blocks], [0.5, 0.5])

def test_pinching_by_two_projections():
    p = np.diag([1.0, 0.0])
    x = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_allclose(pinching_expectation(x, [p, np.eye(2) - p]), np.diag([1.0, 4.0]))

def test_pinching_rejects_incomplete_resolution():
    with pytest.raises(ValueError):
        pinching_expectation(np.eye(2), [np.diag([1.0, 0.0])])

def test_diagonal_expectation_in_rotated_basis():
    h = np.array([[1.0, 1.0], [1.0, -1.0]]) / np.sqrt(2)
    x = np.array([[1.0, 0.0], [0.0, 0.0]])
    result = diagonal_expectation(x, h)
    np.testing.assert_allclose(result, 0.5 * np.eye(2), atol=1e-14)

def test_diagonal_expectation_rejects_non_orthonormal_basis():
    with pytest.raises(ValueError):
        diagonal_expectation(np.eye(2), np.array([[1.0, 1.0], [0.0, 1.0]]))

def test_simultaneous_diagonalization_of_commuting_pair():
    rng = np.random.default_rng(5)
    q, _ = np.linalg.qr(rng.normal(size=(4, 4)))
    a = q @ np.diag([1.0, 1.0, 2.0, 3.0]) @ q.T
    b = q @ np.diag([5.0, 6.0, 6.0, 6.0]) @ q.T
    u, (ea, eb) = simultaneous_diagonalization([a, b])
    np.testing.assert_allclose(u.conj().T @ u, np.eye(4), atol=1e-12)
    np.testing.assert_allclose(u.conj().T @ a @ u, np.diag(ea), atol=1e-10)
    np.testing.assert_allclose(u.conj().T @ b @ u, np.diag(eb), atol=1e-10)

def test_simultaneous_diagonalization_is_deterministic():
    a = np.diag([1.0, 1.0, 2.0])
    u1, _ = simultaneous_diagonalization([a])
    u2, _ = simultaneous_diagonalization([a.copy()])
    np.testing.assert_allclose(u1, u2)

def test_simultaneous_diagonalization_rejects_non_commuting():
    x = np.array([[0.0, 1.0], [1.0, 0.0]])
    z = np.diag([1.0, -1.0])
    with pytest.raises(ValueError):
        simultaneous_diagonalization([x, z])

def test_simultaneous_diagonalization_rejects_empty_input():
    with pytest.raises(ValueError):
        simultaneous_diagonalization([])

def test_log_inverts_exp():
    h = np.array([[0.3, 0.1j], [-0.1j, -0.2]])
    np.testing.assert_allclose(matrix_log(matrix_exp(h)), h, atol=1e-12)

def test_log_of_singular_matrix_rejected():
    with pytest.raises(ValueError):
        matrix_log(np.diag([1.0, 0.0]))

def test_exp_acts_blockwise_on_elements():
    alg = DirectSumAlgebra((('a', 1), ('b', 2)))
    x = alg.element([np.array([[np.log(2.0)]]), np.zeros((2, 2))])
    result = matrix_exp(x)
    np.testing.assert_allclose(result.blocks[0], [[2.0]])
    np.testing.assert_allclose(result.blocks[1], np.eye(2))

def _doubled_in_four() -> InclusionDescriptor:
    """{a (+) a} inside M_4: a copy of M_2 on each diagonal 2x2 block"""
    sub = DirectSumAlgebra.full(2)
    sup = DirectSumAlgebra.full(4)
    v = np.zeros((4, 4))
    for a in range(2):
        for m in range(2):
            v[2 * m + a, 2 * a + m] = 1.0
    inc = InclusionDescriptor(sub, sup, np.array([[2]]), {(0, 0): v})
    inc.validate()
    return inc

def test_expectation_on_first_tensor_factor():
    inc = InclusionDescriptor.standard(DirectSumAlgebra.full(2), DirectSumAlgebra.full(4), [[2]])
    rng = np.random.default_rng(3)
    a = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    b = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    result = ExpectationMap(inc).apply(as_element(np.kron(a, b)))
    np.testing.assert_allclose(result.blocks[0], a * np.trace(b), atol=1e-12)

def test_expectation_on_doubled_copy_sums_blocks():
    inc = _doubled_in_four()
    rng = np.random.default_rng(4)
    x = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    result = ExpectationMap(inc).apply(as_element(x))
    np.testing.assert_allclose(result.blocks[0], x[:2, :2] + x[2:, 2:], atol=1e-12)

def test_project_matches_least_squares_projection():
    rng = np.random.default_rng(5)
    for inc in (_doubled_in_four(), _diagonal_in_full(3), _scalars_twice()):
        dim = inc.sup.total_dim
        span = np.array([inc.embed(y).dense().ravel() for _, _, _, y in inc.sub.matrix_units()]).T
        for _ in range(5):
            x = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
            coefficients, *_ = np.linalg.lstsq(span, x.ravel(), rcond=None)
            expected = (span @ coefficients).reshape(dim, dim)
            np.testing.assert_allclose(ExpectationMap(inc).project(as_element(x)).dense(), expected, atol=1e-12)

def test_restrict_density_of_product_state():
    inc = InclusionDescriptor.standard(DirectSumAlgebra.full(2), DirectSumAlgebra.full(4), [[2]])
    rho = np.array([[0.7, 0.1], [0.1, 0.3]])
    sigma = np.array([[0.4, 0.2j], [-0.2j, 0.6]])
    result = restrict_density(as_element(np.kron(rho, sigma)), inc)
    np.testing.assert_allclose(result.blocks[0], rho, atol=1e-12)

def test_restrict_density_matches_dual_pairing_solve():
    inc = InclusionDescriptor.standard(DirectSumAlgebra.full(2), DirectSumAlgebra.full(4), [[2]])
    rng = np.random.default_rng(6)
    g = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    t = g @ g.conj().T
    units = [y for _, _, _, y in inc.sub.matrix_units()]
    # Tr(D y) = Tr(T iota(y)) for every matrix unit y, linear in vec(D)
    system = np.array([y.dense().T.ravel() for y in units])
    values = np.array([np.trace(t @ inc.embed(y).dense()) for y in units])
    solved = np.linalg.solve(system, values).reshape(2, 2)
    np.testing.assert_allclose(restrict_density(as_element(t), inc).blocks[0], solved, atol=1e-10)

def test_pinching_is_a_bimodule_map():
    rng = np.random.default_rng(7)
    q, _ = np.linalg.qr(rng.normal(size=(5, 5)) + 1j * rng.normal(size=(5, 5)))
    projections = [q[:, :2] @ q[:, :2].conj().T, q[:, 2:3] @ q[:, 2:3].conj().T, q[:, 3:] @ q[:, 3:].conj().T]
    for _ in range(5):
        x, a, b = (rng.normal(size=(5, 5)) + 1j * rng.normal(size=(5, 5)) for _ in range(3))
        a = pinching_expectation(a, projections)
        b = pinching_expectation(b, projections)
        np.testing.assert_allclose(
            pinching_expectation(a @ x @ b, projections),
            a @ pinching_expectation(x, projections) @ b,
            atol=1e-10,
        )

def test_diagonal_expectation_in_standard_basis():
    x = np.array([[1.0, 5.0], [7.0, 2.0]])
    np.testing.assert_allclose(diagonal_expectation(x, np.eye(2)), np.diag([1.0, 2.0]))
