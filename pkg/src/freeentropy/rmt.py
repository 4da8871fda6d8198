"""Random matrix side: GUE tuples, Gaussian-smoothed ensembles, and their
entropy / Fisher information in the normalized-trace geometry.

Normalizations: h^(n) = h / n^2 + m log n and I^(n) = I / n^4, with h and I
computed in coordinates orthonormal for <A, B> = sum_j tr_n(A_j^* B_j).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Iterator, List, Mapping, Optional, Sequence

import numpy as np
from scipy.integrate import quad
from scipy.special import logsumexp

from . import _kernels
from .lawkit import SpectralLaw, TraceOracle, free_semicircular_extend, matrix_trace_oracle
from .ncpoly import Letter, NCPoly, Word, _WordEvaluator, as_letter, free_diff, word_str

ENTROPY_TAG = "h(n) = h/n^2 + m log n"
FISHER_TAG = "I(n) = I/n^4"
CHUNK = 2048


@dataclass(frozen=True)
class GueSpec:
    n: int
    m: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise ValueError("need n >= 1 and m >= 1")


def sample_gue(spec: GueSpec, sample: int = 0) -> np.ndarray:
    """One GUE m-tuple, shape (m, n, n); E tr_n(S^2) = 1."""
    return _kernels.gue_batch(spec.seed, spec.n, spec.m, sample, 1)[0]


def gue_batches(spec: GueSpec, samples: int, chunk: int = CHUNK) -> Iterator[np.ndarray]:
    start = 0
    while start < samples:
        count = min(chunk, samples - start)
        yield _kernels.gue_batch(spec.seed, spec.n, spec.m, start, count)
        start += count


def _uniforms(seed: int, n: int, stream: int, start: int, count: int, width: int) -> np.ndarray:
    keys = _kernels.gue_keys(seed, n, 1, start, count)[:, 0] ^ np.uint64(_kernels.stream_key(stream, 0, 0, 0))
    ctr = np.arange(width, dtype=np.uint64)
    h = _kernels._splitmix_np(keys[:, None] ^ ctr[None, :])
    return (h >> np.uint64(11)).astype(np.float64) * _kernels._INV_2_53


def _mean_se(values: np.ndarray):
    values = np.asarray(values)
    mean = values.mean(axis=0)
    se = values.std(axis=0, ddof=1) / math.sqrt(len(values)) if len(values) > 1 else np.zeros_like(mean)
    return mean, se


def tr_n(a: np.ndarray):
    return np.trace(a, axis1=-2, axis2=-1) / a.shape[-1]


def norm_tr_sq(a: np.ndarray):
    """sum_j tr_n(A_j^* A_j) over the tuple axis (second to last three)."""
    n = a.shape[-1]
    return np.sum(np.abs(a) ** 2, axis=(-3, -2, -1)) / n


@dataclass
class Estimate:
    value: float
    stderr: float
    n: int
    samples: int
    seed: int
    normalization: str

    def to_dict(self):
        return asdict(self)


EntropyEstimate = Estimate
FisherEstimate = Estimate


def opnorm_stat(spec: GueSpec, samples: int) -> Estimate:
    """Monte Carlo E ||S||_op for the first matrix of the tuple."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    vals = []
    for batch in gue_batches(spec, samples, chunk=64):
        ev = np.linalg.eigvalsh(batch[:, 0])
        vals.append(np.max(np.abs(ev), axis=-1))
    mean, se = _mean_se(np.concatenate(vals))
    return Estimate(float(mean), float(se), spec.n, samples, spec.seed, "operator norm")


# ------------------------------------------------------------------ ensembles

@dataclass
class GaussianEnsemble:
    """X = center + sqrt(t) S with S a GUE m-tuple; density ~ exp(-n^2 ||x - center||^2 / 2t)."""

    center: np.ndarray
    t: float

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=np.complex128)
        if self.center.ndim == 2:
            self.center = self.center[None]
        if self.center.ndim != 3 or self.center.shape[1] != self.center.shape[2]:
            raise ValueError("center must have shape (m, n, n)")
        if np.max(np.abs(self.center - np.conj(np.swapaxes(self.center, -1, -2))), initial=0) > 1e-10:
            raise ValueError("center must be self-adjoint")
        if not self.t > 0:
            raise ValueError("t must be positive")

    @classmethod
    def pure(cls, n: int, m: int = 1, t: float = 1.0):
        return cls(np.zeros((m, n, n)), t)

    @property
    def m(self):
        return self.center.shape[0]

    @property
    def n(self):
        return self.center.shape[-1]

    @property
    def dim(self):
        return self.m * self.n ** 2

    def batches(self, samples: int, seed: int, chunk: int = CHUNK):
        spec = GueSpec(self.n, self.m, seed)
        for s in gue_batches(spec, samples, chunk):
            yield self.center + math.sqrt(self.t) * s

    def log_density(self, x: np.ndarray) -> np.ndarray:
        n = self.n
        return (-0.5 * self.dim * math.log(2 * math.pi * self.t / n ** 2)
                - n ** 2 / (2 * self.t) * norm_tr_sq(x - self.center))


@dataclass
class GaussianMixture:
    """Equal-covariance Gaussian mixture: sum_k w_k N(center_k, t)."""

    centers: np.ndarray
    weights: np.ndarray
    t: float

    def __post_init__(self):
        self.centers = np.asarray(self.centers, dtype=np.complex128)
        if self.centers.ndim == 3:
            self.centers = self.centers[:, None]
        self.weights = np.asarray(self.weights, dtype=float)
        if len(self.weights) != len(self.centers):
            raise ValueError("one weight per center")
        if abs(self.weights.sum() - 1) > 1e-10 or np.any(self.weights < 0):
            raise ValueError("weights must be a probability vector")
        if not self.t > 0:
            raise ValueError("t must be positive")

    @property
    def m(self):
        return self.centers.shape[1]

    @property
    def n(self):
        return self.centers.shape[-1]

    @property
    def dim(self):
        return self.m * self.n ** 2

    def batches(self, samples: int, seed: int, chunk: int = CHUNK):
        spec = GueSpec(self.n, self.m, seed)
        cdf = np.cumsum(self.weights)
        start = 0
        for s in gue_batches(spec, samples, chunk):
            u = _uniforms(seed, self.n, 1, start, len(s), 1)[:, 0]
            k = np.minimum(np.searchsorted(cdf, u, side="right"), len(cdf) - 1)
            start += len(s)
            yield self.centers[k] + math.sqrt(self.t) * s

    def log_density(self, x: np.ndarray) -> np.ndarray:
        n = self.n
        d2 = norm_tr_sq(x[:, None] - self.centers[None])
        const = -0.5 * self.dim * math.log(2 * math.pi * self.t / n ** 2)
        return const + logsumexp(-n ** 2 / (2 * self.t) * d2, b=self.weights[None, :], axis=1)


@dataclass
class DiagonalAtomMixture:
    """X_j = D_j + sqrt(t) S_j with D_j diagonal, entries iid from an atomic law.

    The density factorizes over diagonal entries, so log-density is exact
    even though the mixture has (atoms)^(m n) components.
    """

    law: SpectralLaw
    n: int
    m: int
    t: float

    def __post_init__(self):
        if self.law.kind != "atoms":
            raise ValueError("diagonal mixture needs an atomic law")
        if not self.t > 0:
            raise ValueError("t must be positive")

    @property
    def dim(self):
        return self.m * self.n ** 2

    def batches(self, samples: int, seed: int, chunk: int = CHUNK):
        spec = GueSpec(self.n, self.m, seed)
        pts = np.array(self.law.points)
        cdf = np.cumsum(self.law.weights)
        start = 0
        idx = np.arange(self.n)
        for s in gue_batches(spec, samples, chunk):
            u = _uniforms(seed, self.n, 2, start, len(s), self.m * self.n).reshape(len(s), self.m, self.n)
            k = np.minimum(np.searchsorted(cdf, u, side="right"), len(cdf) - 1)
            start += len(s)
            x = math.sqrt(self.t) * s
            x[:, :, idx, idx] += pts[k]
            yield x

    def log_density(self, x: np.ndarray) -> np.ndarray:
        n, t = self.n, self.t
        pts = np.array(self.law.points)
        w = np.array(self.law.weights)
        idx = np.arange(n)
        diag = np.real(x[..., idx, idx])  # (batch, m, n)
        off = np.abs(x) ** 2
        off[..., idx, idx] = 0
        off_term = -n / (2 * t) * off.sum(axis=(-3, -2, -1))
        per_entry = logsumexp(-n / (2 * t) * (diag[..., None] - pts) ** 2, b=w, axis=-1)
        const = -0.5 * self.dim * math.log(2 * math.pi * t / n ** 2)
        return const + off_term + per_entry.sum(axis=(-2, -1))


# ------------------------------------------------------------------ exact values

def gaussian_entropy_exact(ens) -> float:
    """h^(n) of a Gaussian ensemble: (m/2) log(2 pi e t), independent of n."""
    t = ens.t if hasattr(ens, "t") else float(ens)
    m = ens.m if hasattr(ens, "m") else 1
    if not t > 0:
        raise ValueError("t must be positive")
    return 0.5 * m * math.log(2 * math.pi * math.e * t)


def gaussian_fisher_exact(ens) -> float:
    """I^(n) of a Gaussian ensemble: m / t."""
    if not ens.t > 0:
        raise ValueError("t must be positive")
    return ens.m / ens.t


def gaussian_score(ens: GaussianEnsemble, x: np.ndarray) -> np.ndarray:
    """Score n^2 (X - X0) / t in tr_n coordinates."""
    return ens.n ** 2 * (np.asarray(x) - ens.center) / ens.t


def fisher_mc(ens: GaussianEnsemble, samples: int, seed: int) -> Estimate:
    n = ens.n
    vals = [norm_tr_sq(gaussian_score(ens, x)) / n ** 4 for x in ens.batches(samples, seed)]
    mean, se = _mean_se(np.concatenate(vals))
    return Estimate(float(mean), float(se), n, samples, seed, FISHER_TAG)


def entropy_mc(ens, samples: int, seed: int) -> Estimate:
    """Monte Carlo h^(n) = E[-log rho(X)] / n^2 + m log n for ensembles with explicit density."""
    if not hasattr(ens, "log_density"):
        raise TypeError("ensemble has no explicit density")
    n = ens.n
    vals = [-ens.log_density(x) for x in ens.batches(samples, seed)]
    mean, se = _mean_se(np.concatenate(vals))
    return Estimate(float(mean / n ** 2 + ens.m * math.log(n)), float(se / n ** 2), n, samples, seed, ENTROPY_TAG)


def heat_flow_identity_check(center, t0: float, t: float) -> dict:
    """Compare h^(n)(t) - h^(n)(t0) with (1/2) int_{t0}^{t} I^(n)(u) du for X0 + sqrt(u) S."""
    if not t0 > 0:
        raise ValueError("t0 must be positive")
    if t < t0:
        raise ValueError("need t >= t0")
    lhs = gaussian_entropy_exact(GaussianEnsemble(center, t)) - gaussian_entropy_exact(GaussianEnsemble(center, t0))
    ens = GaussianEnsemble(center, t0)
    integral, _ = quad(lambda u: gaussian_fisher_exact(GaussianEnsemble(ens.center, u)), t0, t,
                       epsabs=1e-12, epsrel=1e-12, limit=200) if t > t0 else (0.0, 0.0)
    rhs = 0.5 * integral
    return {"lhs": lhs, "rhs": rhs, "residual": abs(lhs - rhs), "m": ens.m, "n": ens.n, "t0": t0, "t": t}


# ------------------------------------------------------------------ integration by parts

def _letter_mats(x: np.ndarray, y: Optional[Mapping]) -> dict:
    mats = {Letter("x", j + 1): x[:, j] for j in range(x.shape[1])}
    for k, v in (y or {}).items():
        mats[as_letter(k)] = np.asarray(v, dtype=np.complex128)
    return mats


def ibp_check(ens: GaussianEnsemble, f: Sequence[NCPoly], samples: int, seed: int,
              y: Optional[Mapping] = None, chunk: int = 1024) -> List[dict]:
    """Monte Carlo both sides of n^-2 E<Xi_j, f_j> = E tr_n (x) tr_n (d_j f_j), per j."""
    if not isinstance(ens, GaussianEnsemble):
        raise TypeError("integration by parts needs an ensemble with a known score (Gaussian)")
    if isinstance(f, NCPoly):
        f = [f] * ens.m
    if len(f) != ens.m:
        raise ValueError("need one polynomial per x-variable")
    n = ens.n
    diffs = [free_diff(fj, j + 1) for j, fj in enumerate(f)]
    lhs_all, rhs_all = [], []
    for x in ens.batches(samples, seed, chunk):
        ev = _WordEvaluator(_letter_mats(x, y), check=False)
        xi = gaussian_score(ens, x)
        lhs = np.empty((len(x), ens.m), dtype=np.complex128)
        rhs = np.empty((len(x), ens.m), dtype=np.complex128)
        for j in range(ens.m):
            fx = ev.poly(f[j])
            # <A, B>_tr = tr_n(A^* B); score is self-adjoint
            lhs[:, j] = tr_n(xi[:, j] @ fx) / n ** 2
            acc = np.zeros(len(x), dtype=np.complex128)
            for (u, v), c in diffs[j].items():
                acc += c * tr_n(ev(u)) * tr_n(ev(v))
            rhs[:, j] = acc
        lhs_all.append(lhs)
        rhs_all.append(rhs)
    lhs = np.concatenate(lhs_all)
    rhs = np.concatenate(rhs_all)
    out = []
    for j in range(ens.m):
        lm, ls = _mean_se(lhs[:, j].real)
        rm, rs = _mean_se(rhs[:, j].real)
        dm, ds = _mean_se((lhs[:, j] - rhs[:, j]).real)
        imag = float(np.max(np.abs((lhs[:, j] - rhs[:, j]).imag.mean())))
        out.append({"j": j + 1, "f": str(f[j]), "lhs": float(lm), "lhs_stderr": float(ls), "rhs": float(rm),
                    "rhs_stderr": float(rs), "residual": float(dm), "residual_stderr": float(ds),
                    "imag_residual": imag, "n": n, "samples": samples, "seed": seed})
    return out


# ------------------------------------------------------------------ asymptotic freeness

def freeness_deviation_table(n: int, m: int, y: Mapping, words: Sequence[Word], samples: int, seed: int,
                             base: Optional[TraceOracle] = None, t: float = 1.0,
                             chunk: int = 32, band_const: float = 5.0) -> List[dict]:
    """Averaged tr_n of words in (GUE s-variables, deterministic y) versus the free extension oracle.

    ``base`` defaults to the exact matrix law of ``y``.  Each row carries the
    acceptance band max(3 stderr, band_const / n^2).
    """
    y = {as_letter(k): np.asarray(v, dtype=np.complex128) for k, v in (y or {}).items()}
    if base is None:
        base = matrix_trace_oracle(y) if y else _Trivial()
    oracle = free_semicircular_extend(base, m, t)
    words = [tuple(w) for w in words]
    spec = GueSpec(n, m, seed)
    vals = []
    for s in gue_batches(spec, samples, chunk):
        mats = {Letter("s", j + 1): math.sqrt(t) * s[:, j] for j in range(m)}
        mats.update(y)
        ev = _WordEvaluator(mats, check=False)
        row = np.empty((len(s), len(words)), dtype=np.complex128)
        for i, w in enumerate(words):
            row[:, i] = ev.trace(w)
        vals.append(row)
    vals = np.concatenate(vals)
    mean, se = _mean_se(vals.real)
    table = []
    for i, w in enumerate(words):
        target = oracle(w)
        dev = abs(mean[i] - target.real)
        band = max(3 * se[i], band_const / n ** 2)
        table.append({"word": word_str(w), "oracle": float(target.real), "mc_mean": float(mean[i]),
                      "stderr": float(se[i]), "deviation": float(dev), "band": float(band),
                      "ok": bool(dev <= band)})
    return table


class _Trivial(TraceOracle):
    letters = frozenset()

    def _eval(self, w):
        raise KeyError("trivial oracle has no variables")


# ------------------------------------------------------------------ serialization

def matrix_to_json(a: np.ndarray) -> list:
    """Rows of [re, im] pairs; a tuple of matrices becomes a list of those."""
    a = np.asarray(a, dtype=np.complex128)
    if a.ndim == 3:
        return [matrix_to_json(x) for x in a]
    if a.ndim != 2:
        raise ValueError("expected a matrix or a stack of matrices")
    return [[[float(z.real), float(z.imag)] for z in row] for row in a]


def matrix_from_json(data) -> np.ndarray:
    """Inverse of :func:`matrix_to_json`; always returns shape (m, n, n)."""
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim == 3:
        arr = arr[None]
    if arr.ndim != 4 or arr.shape[-1] != 2 or arr.shape[-2] != arr.shape[-3]:
        raise ValueError("matrix JSON must be rows of [re, im] pairs (optionally a list of such matrices)")
    return arr[..., 0] + 1j * arr[..., 1]
