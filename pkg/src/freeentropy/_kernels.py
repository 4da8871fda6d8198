"""Hot loops for the random matrix side.

Every normal variate is a pure function of (seed, n, sample, matrix, entry,
component), so batches can be generated in any order or in parallel and
still reproduce the same stream.  The numba path is used when numba imports
and ``FREEENTROPY_NUMBA`` is not ``0``; the numpy path computes the same
integer hashes and agrees with it to rounding in ``log``/``cos``.
"""

import os

import numpy as np

_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_TWO_PI = 2.0 * np.pi
_INV_2_53 = 1.0 / 9007199254740992.0


def _numba_requested():
    return os.environ.get("FREEENTROPY_NUMBA", "1").strip().lower() not in ("0", "false", "no", "off")


try:
    import numba as nb
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    nb = None

HAVE_NUMBA = nb is not None
USE_NUMBA = HAVE_NUMBA and _numba_requested()


def _splitmix_py(x):
    # scalar version, used for key derivation on the Python side
    mask = (1 << 64) - 1
    z = (x + _GOLDEN) & mask
    z = ((z ^ (z >> 30)) * _MIX1) & mask
    z = ((z ^ (z >> 27)) * _MIX2) & mask
    return z ^ (z >> 31)


def stream_key(seed, n, sample, matrix):
    """64-bit key for one matrix of one sample."""
    mask = (1 << 64) - 1
    k = _splitmix_py(int(seed) & mask)
    for part in (n, sample, matrix):
        k = _splitmix_py(k ^ (int(part) & mask))
    return k


# ---------------------------------------------------------------- numpy path

def _splitmix_np(z):
    z = z + np.uint64(_GOLDEN)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
    return z ^ (z >> np.uint64(31))


def _normals_np(keys, counters):
    # keys: (...,) uint64 broadcast against counters (...,) uint64
    h1 = _splitmix_np(keys ^ (counters * np.uint64(2)))
    h2 = _splitmix_np(keys ^ (counters * np.uint64(2) + np.uint64(1)))
    u1 = ((h1 >> np.uint64(11)).astype(np.float64) + 0.5) * _INV_2_53
    u2 = (h2 >> np.uint64(11)).astype(np.float64) * _INV_2_53
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(_TWO_PI * u2)


def _gue_numpy(keys, n):
    count, m = keys.shape
    i, k = np.triu_indices(n)
    entry = (i * n + k).astype(np.uint64)
    kk = keys[:, :, None]
    re = _normals_np(kk, entry[None, None, :] * np.uint64(2))
    im = _normals_np(kk, entry[None, None, :] * np.uint64(2) + np.uint64(1))
    diag = i == k
    scale = np.where(diag, np.sqrt(1.0 / n), np.sqrt(0.5 / n))
    vals = (re + 1j * np.where(diag, 0.0, im)) * scale
    out = np.zeros((count, m, n, n), dtype=np.complex128)
    out[:, :, i, k] = vals
    out[:, :, k, i] = np.conj(vals)
    return out


# ---------------------------------------------------------------- numba path

if HAVE_NUMBA:

    @nb.njit(cache=True, inline="always")
    def _splitmix_nb(z):
        z = z + np.uint64(_GOLDEN)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
        return z ^ (z >> np.uint64(31))

    @nb.njit(cache=True, inline="always")
    def _normal_nb(key, counter):
        h1 = _splitmix_nb(key ^ (counter * np.uint64(2)))
        h2 = _splitmix_nb(key ^ (counter * np.uint64(2) + np.uint64(1)))
        u1 = (np.float64(h1 >> np.uint64(11)) + 0.5) * _INV_2_53
        u2 = np.float64(h2 >> np.uint64(11)) * _INV_2_53
        return np.sqrt(-2.0 * np.log(u1)) * np.cos(_TWO_PI * u2)

    @nb.njit(cache=True)
    def _gue_numba(keys, n):
        count, m = keys.shape
        out = np.zeros((count, m, n, n), dtype=np.complex128)
        sd_diag = np.sqrt(1.0 / n)
        sd_off = np.sqrt(0.5 / n)
        for c in range(count):
            for j in range(m):
                key = keys[c, j]
                for i in range(n):
                    for k in range(i, n):
                        e = np.uint64(i * n + k)
                        re = _normal_nb(key, e * np.uint64(2))
                        if i == k:
                            out[c, j, i, i] = re * sd_diag
                        else:
                            im = _normal_nb(key, e * np.uint64(2) + np.uint64(1))
                            v = complex(re * sd_off, im * sd_off)
                            out[c, j, i, k] = v
                            out[c, j, k, i] = v.conjugate()
        return out


def gue_keys(seed, n, m, start, count):
    """Vectorized ``stream_key`` over a block of samples and matrices."""
    mask = (1 << 64) - 1
    base = _splitmix_py(_splitmix_py(int(seed) & mask) ^ (int(n) & mask))
    samples = np.arange(start, start + count, dtype=np.uint64)[:, None]
    matrices = np.arange(m, dtype=np.uint64)[None, :]
    k = _splitmix_np(np.uint64(base) ^ samples)
    return _splitmix_np(k ^ matrices)


def gue_batch(seed, n, m, start, count, use_numba=None):
    """GUE m-tuples for samples ``start .. start+count-1``, shape (count, m, n, n)."""
    keys = gue_keys(seed, n, m, start, count)
    if use_numba is None:
        use_numba = USE_NUMBA
    if use_numba:
        if not HAVE_NUMBA:
            raise RuntimeError("numba is not installed")
        return _gue_numba(keys, n)
    return _gue_numpy(keys, n)

