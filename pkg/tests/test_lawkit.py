import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from freeentropy.lawkit import (
    DiagonalOracle,
    FreeProductOracle,
    HeatFlowOracle,
    LawOracle,
    SemicircularFamily,
    SpectralLaw,
    canonical,
    catalan,
    expand_heat_flow,
    free_cumulants,
    free_product,
    free_semicircular_extend,
    heat_flow_law,
    law_oracle,
    load_law,
    matrix_trace_oracle,
    quantile_microstate,
    semicircle_moment,
)
from freeentropy.ncpoly import Letter, X, Y, S, words_up_to

from conftest import random_hermitian, words

TWO_POINT = SpectralLaw.two_point()
x1, x2, y1, s1, s2 = X(1), X(2), Y(1), S(1), S(2)


def test_catalan():
    assert [catalan(r) for r in range(7)] == [1, 1, 2, 5, 14, 42, 132]


@pytest.mark.parametrize("k,t,expected", [(1, 1, 0), (2, 1, 1), (4, 1, 2), (6, 2, 40), (3, 5, 0)])
def test_semicircle_moment(k, t, expected):
    assert semicircle_moment(k, t) == expected


def test_semicircle_moment_matches_density_quadrature():
    from scipy.integrate import quad

    for t in (0.5, 1.0, 3.0):
        r = 2 * math.sqrt(t)
        for k in range(0, 9):
            ref, _ = quad(lambda x: x ** k * math.sqrt(r * r - x * x) / (2 * math.pi * t), -r, r)
            assert semicircle_moment(k, t) == pytest.approx(ref, abs=1e-9)


# -- spectral laws -----------------------------------------------------------

def test_law_moments_and_mass():
    for law in (SpectralLaw.semicircle(2.0), TWO_POINT, SpectralLaw.from_dict({"type": "density", "expr": "uniform", "support": [-1, 1]})):
        assert law.total_mass() == pytest.approx(1, abs=1e-10)
    semi = SpectralLaw.semicircle(1.0)
    assert [semi.moment(k) for k in range(5)] == pytest.approx([1, 0, 1, 0, 2], abs=1e-12)
    uni = SpectralLaw.from_dict({"type": "density", "expr": "uniform", "support": [-1, 1]})
    assert uni.moment(2) == pytest.approx(1 / 3, abs=1e-12)
    arc = SpectralLaw.from_dict({"type": "density", "expr": "arcsine", "support": [-2, 2]})
    assert arc.moment(2) == pytest.approx(2, abs=1e-10)  # central binomial coefficients
    assert arc.moment(4) == pytest.approx(6, abs=1e-10)


def test_law_rejects_bad_input():
    with pytest.raises(ValueError):
        SpectralLaw.atoms([0, 1], [0.5, 0.6])
    with pytest.raises(ValueError):
        SpectralLaw.from_dict({"type": "density", "expr": "nope", "support": [0, 1]})
    with pytest.raises(ValueError):
        SpectralLaw.from_dict({"type": "density", "expr": "uniform", "support": [0, float("inf")]})


def test_law_loading_json_and_toml(tmp_path):
    j = tmp_path / "semi.json"
    j.write_text(json.dumps({"type": "semicircle", "variance": 2}))
    t = tmp_path / "atoms.toml"
    t.write_text('type = "atoms"\npoints = [-1.0, 1.0]\nweights = [0.25, 0.75]\n')
    assert load_law(j).semicircle_variance == 2
    law = load_law(str(t))
    assert law.moment(1) == pytest.approx(0.5)
    assert SpectralLaw.from_dict(law.to_dict()).moment(3) == pytest.approx(0.5)


def test_quantile_microstates():
    np.testing.assert_allclose(quantile_microstate(TWO_POINT, 2), np.diag([-1.0, 1.0]))
    q = quantile_microstate(SpectralLaw.semicircle(1.0), 100)
    assert abs(np.trace(q @ q) / 100 - 1) <= 0.02
    assert np.max(np.abs(q)) <= 2
    np.testing.assert_allclose(quantile_microstate(SpectralLaw.semicircle(1.0, center=0.3), 1), [[0.3]], atol=1e-10)
    # symmetric laws give exactly symmetric spectra
    d = np.diag(quantile_microstate(SpectralLaw.semicircle(1.0), 9))
    np.testing.assert_allclose(d, -d[::-1], atol=1e-12)


# -- oracles -----------------------------------------------------------------

def test_matrix_oracle_examples():
    o = matrix_trace_oracle({"x1": np.diag([1.0, 3.0])})
    assert o((x1,)) == 2
    assert o((x1, x1)) == 5
    assert o(()) == 1
    with pytest.raises(KeyError):
        o((x2,))


def test_law_oracle_examples():
    assert law_oracle(TWO_POINT)((x1, x1)) == pytest.approx(1)
    assert law_oracle(SpectralLaw.semicircle(1.0))((x1,) * 4) == pytest.approx(2)
    assert law_oracle(SpectralLaw.semicircle(1.0))(()) == 1
    with pytest.raises(KeyError):
        law_oracle(TWO_POINT)((x1, x2))


def test_extension_examples():
    base = LawOracle(TWO_POINT, "x1")
    t = 0.7
    ext = free_semicircular_extend(base, 2, t)
    assert ext((s1,)) == 0
    assert ext((s1, s1)) == pytest.approx(t)
    assert ext((x1, s1, x1, s1)) == pytest.approx(t * base((x1,)) ** 2)
    assert ext((x1, x1, s1, x1, s1)) == pytest.approx(t * base((x1,)) * base((x1, x1, x1)))
    assert ext((s1,) * 4) == pytest.approx(2 * t * t)
    assert ext((s1, s2, s1, s2)) == 0
    assert ext((s1, s2, s2, s1)) == pytest.approx(t * t)


def test_free_cumulants_semicircle_and_two_point():
    semi = [semicircle_moment(k, 1.5) for k in range(9)]
    k = free_cumulants(semi)
    assert k[2] == pytest.approx(1.5)
    assert all(abs(k[r]) < 1e-12 for r in (1, 3, 4, 5, 6, 7, 8))
    tp = [TWO_POINT.moment(r) for r in range(7)]
    # free cumulants of the symmetric Bernoulli law: 1, -1, 2 (signed Catalan numbers)
    assert free_cumulants(tp)[2:7:2] == pytest.approx([1, -1, 2])


def test_free_product_of_two_points():
    o = FreeProductOracle({x1: TWO_POINT, x2: TWO_POINT})
    # tau(abab) = 0 for free centered a, b with a^2 = b^2 = 1
    assert o((x1, x2, x1, x2)) == pytest.approx(0, abs=1e-12)
    assert o((x1, x1, x2, x2)) == pytest.approx(1)
    # tau((ab + ba)^2) = 2 for free symmetric Bernoullis
    val = o((x1, x2, x1, x2)) * 2 + o((x1, x2, x2, x1)) + o((x2, x1, x1, x2))
    assert val == pytest.approx(2)


def test_free_product_matches_extension_for_semicircles():
    fam = free_product({x1: SpectralLaw.semicircle(1.0), x2: SpectralLaw.semicircle(2.0)})
    assert isinstance(fam, SemicircularFamily)
    generic = FreeProductOracle({x1: SpectralLaw.semicircle(1.0), x2: SpectralLaw.semicircle(2.0)})
    for w in words_up_to([x1, x2], 6):
        assert generic(w) == pytest.approx(fam(w), abs=1e-10)


def test_heat_flow_examples():
    point = law_oracle(SpectralLaw.point_mass(0.0))
    flowed = heat_flow_law(point, 1.0)
    assert [flowed((x1,) * k) for k in (2, 4, 6)] == pytest.approx([1, 2, 5])
    semi = law_oracle(SpectralLaw.semicircle(1.0))
    assert heat_flow_law(semi, 1.0, exact_only=True)((x1, x1)) == pytest.approx(2)
    assert heat_flow_law(TWO_POINT_ORACLE := law_oracle(TWO_POINT), 0.0) is TWO_POINT_ORACLE


def test_heat_flow_matches_literal_expansion():
    base = DiagonalOracle({x1: np.array([-1.0, 0.5, 2.0]), x2: np.array([1.0, 1.0, -3.0]), y1: np.array([0.2, -0.4, 1.0])})
    flowed = heat_flow_law(base, 0.6)
    for w in [(x1, x2, x1, y1), (x1, x1, x2, x2), (x2, y1, x2, x1, x1), (x1,) * 5]:
        assert flowed(w) == pytest.approx(expand_heat_flow(base, 0.6, w, m=2), abs=1e-12)


@pytest.mark.parametrize("s,t", [(0.3, 0.9), (1.0, 0.25)])
def test_semigroup(s, t):
    base = FreeProductOracle({x1: TWO_POINT, x2: SpectralLaw.atoms([0.0, 2.0], [0.3, 0.7])})
    twice = heat_flow_law(heat_flow_law(base, s, exact_only=True), t, exact_only=True)
    once = heat_flow_law(base, s + t, exact_only=True)
    for w in words_up_to([x1, x2], 6):
        assert abs(twice(w) - once(w)) <= 1e-9


def test_flow_fast_paths_agree_with_generic():
    semi = SemicircularFamily.standard(2)
    for w in words_up_to([x1, x2], 4):
        assert heat_flow_law(semi, 0.5)(w) == pytest.approx(heat_flow_law(semi, 0.5, exact_only=True)(w), abs=1e-12)


# -- oracle invariants -------------------------------------------------------

def _oracles():
    rng = np.random.default_rng(5)
    mats = {x1: random_hermitian(rng, 4), x2: random_hermitian(rng, 4), y1: random_hermitian(rng, 4)}
    base = LawOracle(TWO_POINT, "x1")
    return {
        "matrix": matrix_trace_oracle(mats),
        "extension": free_semicircular_extend(FreeProductOracle({x1: TWO_POINT, x2: SpectralLaw.semicircle(0.5)}), 2, 0.8),
        "flow": heat_flow_law(matrix_trace_oracle(mats), 0.4),
        "single": free_semicircular_extend(base, 1, 1.0),
    }


ORACLES = _oracles()


@pytest.mark.parametrize("name", sorted(ORACLES))
def test_traciality_and_reality(name):
    o = ORACLES[name]
    rng = np.random.default_rng(11)
    alphabet = sorted(o.letters, key=lambda l: l.sort_key)
    for _ in range(100):
        u = tuple(alphabet[i] for i in rng.integers(len(alphabet), size=rng.integers(0, 5)))
        v = tuple(alphabet[i] for i in rng.integers(len(alphabet), size=rng.integers(0, 4)))
        assert abs(o(u + v) - o(v + u)) <= 1e-9
        w = u + v
        assert abs(o(w[::-1]) - np.conj(o(w))) <= 1e-9


@pytest.mark.parametrize("name", sorted(ORACLES))
def test_gram_positivity(name):
    o = ORACLES[name]
    ws = words_up_to(o.letters, 2)
    g = np.array([[o(tuple(reversed(a)) + b) for b in ws] for a in ws])
    ev = np.linalg.eigvalsh((g + g.conj().T) / 2)
    assert ev[0] >= -1e-9 * ev[-1]


def test_moment_growth_bound():
    o = free_semicircular_extend(law_oracle(TWO_POINT), 1, 1.0)
    radius = {x1: 1.0, s1: 2.0}
    for w in words_up_to([x1, s1], 6):
        assert abs(o(w)) <= np.prod([radius[l] for l in w]) + 1e-12


@given(words(families="x", max_index=2, max_len=6))
def test_canonical_is_rotation_invariant(w):
    for k in range(len(w)):
        assert canonical(w[k:] + w[:k]) == canonical(w)


def test_extension_matches_monte_carlo():
    from freeentropy.rmt import freeness_deviation_table

    y = {y1: quantile_microstate(TWO_POINT, 120)}
    ws = [(s1, y1, s1, y1), (s1, s1, y1, y1), (s1, s2, s1, s2), (y1, s1, s1, y1, s2, s2)]
    table = freeness_deviation_table(120, 2, y, ws, 150, seed=3)
    assert all(row["deviation"] <= max(3 * row["stderr"], 5 / 120 ** 2) for row in table)
