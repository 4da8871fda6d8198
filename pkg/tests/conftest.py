import numpy as np
import pytest
from hypothesis import HealthCheck, settings, strategies as st

from freeentropy.ncpoly import Letter, NCPoly

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def letters(families="xy", max_index=2):
    return st.builds(Letter, st.sampled_from(list(families)), st.integers(1, max_index))


def words(families="xy", max_index=2, max_len=5):
    return st.lists(letters(families, max_index), max_size=max_len).map(tuple)


small_ints = st.integers(-3, 3)
coeffs = st.builds(complex, small_ints, small_ints)


def polys(families="xy", max_index=2, max_len=3, max_terms=4):
    return st.dictionaries(words(families, max_index, max_len), coeffs, max_size=max_terms).map(NCPoly)


def random_hermitian(rng, n, scale=1.0):
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return scale * (a + a.conj().T) / 2


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
