import numpy as np
import pytest

from freeentropy.fisher import (
    BasisSpec,
    DegenerateGramError,
    conjugate_residual,
    divergence_functional,
    gram_matrix,
    l2_norm_sq,
    phi_star_lower,
)
from freeentropy.lawkit import (
    DiagonalOracle,
    FreeProductOracle,
    ScaledOracle,
    SemicircularFamily,
    SpectralLaw,
    TraceOracle,
    heat_flow_law,
    law_oracle,
    matrix_trace_oracle,
)
from freeentropy.ncpoly import NCPoly, X, Y

TWO_POINT = SpectralLaw.two_point()
x = NCPoly.var("x1")


def semi(t=1.0):
    return law_oracle(SpectralLaw.semicircle(t))


def test_basis_counts():
    b = BasisSpec.build(2, 3, y_indices=[1])
    assert len(b) == sum(3 ** k for k in range(4))
    assert b.words[0] == ()
    assert len(set(b.words)) == len(b)


def test_gram_examples():
    np.testing.assert_allclose(gram_matrix(BasisSpec.build(1, 1), semi()), np.eye(2), atol=1e-14)
    np.testing.assert_allclose(gram_matrix(BasisSpec.build(1, 0), law_oracle(TWO_POINT)), [[1]])
    np.testing.assert_allclose(gram_matrix(BasisSpec.build(1, 2), semi()), [[1, 0, 1], [0, 1, 0], [1, 0, 2]], atol=1e-14)


def test_divergence_functional_examples():
    b = BasisSpec.build(1, 2)  # words 1, x, x^2
    np.testing.assert_allclose(divergence_functional(b, semi(), 1), [0, 1, 0], atol=1e-14)
    with pytest.raises(ValueError):
        divergence_functional(b, semi(), 2)


@pytest.mark.parametrize("m", [1, 2, 3])
@pytest.mark.parametrize("d", [1, 2, 3, 4])
def test_semicircular_family(m, d):
    est = phi_star_lower(SemicircularFamily.standard(m), m, degree=d)
    assert est.value == pytest.approx(m, abs=1e-8)
    assert est.per_coordinate == pytest.approx([1.0] * m, abs=1e-8)
    assert not est.diverging


@pytest.mark.parametrize("t", [0.25, 1.0, 3.0])
def test_semicircle_variance_scaling(t):
    assert phi_star_lower(semi(t), 1, degree=3).value == pytest.approx(1 / t, rel=1e-10)


def test_two_point_grows_with_degree():
    # frozen from an independent brute-force solve (exact rational Gram on 1, x, x^2, ...)
    expected = [1, 1, 2.25, 2.25, 4, 4]
    vals = [phi_star_lower(law_oracle(TWO_POINT), 1, degree=d).value for d in range(1, 7)]
    assert vals == pytest.approx(expected, abs=1e-8)


def test_two_point_reports_range_defect():
    est = phi_star_lower(law_oracle(TWO_POINT), 1, degree=4)
    # the functional has a component outside the Gram range: no conjugate variable
    assert est.range_defect > 0.1
    assert phi_star_lower(semi(), 1, degree=4).range_defect < 1e-10


def test_diverging_flag():
    tiny = law_oracle(SpectralLaw.semicircle(1e-7))
    est = phi_star_lower(tiny, 1, degree=2)
    assert est.value == pytest.approx(1e7, rel=1e-6)
    assert est.diverging


def test_degenerate_gram_raises():
    class Zero(TraceOracle):
        letters = frozenset({X(1)})

        def __call__(self, w):
            return 0.0

    with pytest.raises(DegenerateGramError):
        phi_star_lower(Zero(), 1, degree=1)


def _non_hermitian():
    class Bad(TraceOracle):
        letters = frozenset({X(1)})

        def __call__(self, w):
            return 1.0 if not w else (0.5j if len(w) == 1 else 1.0)

    return Bad()


def test_non_hermitian_gram_is_an_error():
    with pytest.raises(ArithmeticError):
        phi_star_lower(_non_hermitian(), 1, degree=1)


def _oracle_zoo():
    rng = np.random.default_rng(2)
    d = DiagonalOracle({X(1): rng.normal(size=6), Y(1): rng.normal(size=6)})
    return [
        law_oracle(TWO_POINT),
        law_oracle(SpectralLaw.atoms([-1.0, 0.0, 2.0], [0.2, 0.5, 0.3])),
        heat_flow_law(law_oracle(TWO_POINT), 0.5),
        heat_flow_law(FreeProductOracle({X(1): TWO_POINT, X(2): SpectralLaw.semicircle(0.5)}), 0.3),
        d,
    ]


@pytest.mark.parametrize("idx", range(5))
def test_degree_monotonicity(idx):
    o = _oracle_zoo()[idx]
    m = len(o.x_letters)
    y = [1] if Y(1) in o.letters else []
    vals = [phi_star_lower(o, m, y, degree=d).value for d in range(1, 5)]
    assert all(b >= a - 1e-9 for a, b in zip(vals, vals[1:]))


@pytest.mark.parametrize("idx", range(5))
def test_gram_psd(idx):
    o = _oracle_zoo()[idx]
    m = len(o.x_letters)
    g = gram_matrix(BasisSpec.build(m, 3, [1] if Y(1) in o.letters else []), o)
    assert np.max(np.abs(g - g.conj().T)) <= 1e-10
    ev = np.linalg.eigvalsh(g)
    assert ev[0] >= -1e-9 * ev[-1]


@pytest.mark.parametrize("c", [0.5, 2.0, 3.0])
@pytest.mark.parametrize("idx", [0, 2, 3])
def test_scaling_covariance(c, idx):
    o = _oracle_zoo()[idx]
    m = len(o.x_letters)
    for d in (2, 3):
        base = phi_star_lower(o, m, degree=d).value
        scaled = phi_star_lower(ScaledOracle(o, c), m, degree=d).value
        assert scaled == pytest.approx(base / c ** 2, abs=1e-8, rel=1e-8)


@pytest.mark.parametrize("t", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("d", [1, 2, 4])
def test_flow_of_point_mass(t, d):
    o = heat_flow_law(law_oracle(SpectralLaw.point_mass(0.0)), t, exact_only=True)
    assert phi_star_lower(o, 1, degree=d).value == pytest.approx(1 / t, abs=1e-8)


def test_conjugate_residual_examples():
    b = BasisSpec.build(1, 4)
    assert conjugate_residual(semi(), x, 1, b) <= 1e-9
    assert conjugate_residual(semi(2.5), x * (1 / 2.5), 1, b) <= 1e-9
    # at p = x the defect is tau(2x x) - 1 = 1; over the degree-4 basis p = x^3 gives 4 - 2
    assert conjugate_residual(semi(), 2 * x, 1, BasisSpec.build(1, 1)) == pytest.approx(1)
    assert conjugate_residual(semi(), 2 * x, 1, b) == pytest.approx(2)


def test_conjugate_variable_bounds_estimate():
    # xi = x / t solves the conjugate relation, so phi at half the degree is <= ||xi||^2
    t = 0.8
    o = semi(t)
    xi = x * (1 / t)
    assert conjugate_residual(o, xi, 1, BasisSpec.build(1, 4)) <= 1e-9
    assert phi_star_lower(o, 1, degree=2).value <= l2_norm_sq(o, xi) + 1e-8


def test_matrix_oracle_singular_gram_is_thresholded():
    # a 2x2 matrix satisfies Cayley-Hamilton, so high powers are linearly dependent
    o = matrix_trace_oracle({"x1": np.diag([-1.0, 2.0])})
    est = phi_star_lower(o, 1, degree=4)
    assert est.gram_rank == 2
    assert np.isfinite(est.value)


def test_json_fields():
    d = phi_star_lower(semi(), 1, degree=2).to_dict()
    assert {"value", "degree", "per_coordinate", "gram_rank", "cutoff", "diverging"} <= set(d)
