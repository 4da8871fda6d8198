"""Trace oracles: matrix traces, one-variable spectral laws, free products,
and exact extension by free semicircular variables (including the
semicircular heat flow X -> X + sqrt(t) S).
"""

from __future__ import annotations

import json
import math
import threading
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Dict, Iterable, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq

from .ncpoly import Letter, NCPoly, Word, as_letter, words_up_to

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

QUAD_NODES = 200


def catalan(r: int) -> int:
    return math.comb(2 * r, r) // (r + 1)


def semicircle_moment(k: int, t: float = 1.0) -> float:
    """k-th moment of the centered semicircle law of variance ``t``."""
    if k < 0:
        raise ValueError("moment order must be nonnegative")
    if t <= 0:
        raise ValueError("variance must be positive")
    if k % 2:
        return 0.0
    r = k // 2
    return t ** r * catalan(r)


@lru_cache(maxsize=None)
def _gl(nodes: int):
    return np.polynomial.legendre.leggauss(nodes)


def _theta_rule(nodes: int = QUAD_NODES, upper: float = math.pi / 2):
    """Gauss-Legendre nodes/weights in theta on [-pi/2, upper]."""
    x, w = _gl(nodes)
    lo = -math.pi / 2
    half = 0.5 * (upper - lo)
    return lo + half * (x + 1.0), half * w


# ------------------------------------------------------------------ laws

_DENSITIES = {
    # unnormalized densities in the reduced coordinate z = (x - c) / r in [-1, 1]
    "semicircle": lambda z: np.sqrt(np.clip(1.0 - z * z, 0.0, None)),
    "uniform": lambda z: np.ones_like(z),
    "arcsine": lambda z: 1.0 / np.sqrt(np.clip(1.0 - z * z, 1e-300, None)),
}


@dataclass(frozen=True)
class SpectralLaw:
    """Compactly supported probability law on the real line.

    Either ``kind == "atoms"`` with ``points``/``weights``, or a named
    density (``semicircle``, ``uniform``, ``arcsine``) on ``support``.
    """

    kind: str
    points: Tuple[float, ...] = ()
    weights: Tuple[float, ...] = ()
    density: Optional[str] = None
    support: Tuple[float, float] = (0.0, 0.0)
    variance: Optional[float] = None  # kept exactly for semicircles
    _cache: dict = field(default_factory=dict, compare=False, repr=False, hash=False)

    def __post_init__(self):
        if self.kind == "atoms":
            if not self.points or len(self.points) != len(self.weights):
                raise ValueError("atoms need matching points and weights")
            if any(w < 0 for w in self.weights):
                raise ValueError("atom weights must be nonnegative")
            if abs(sum(self.weights) - 1.0) > 1e-10:
                raise ValueError(f"atom weights sum to {sum(self.weights)}, not 1")
            if not all(math.isfinite(p) for p in self.points):
                raise ValueError("unbounded support")
        elif self.kind == "density":
            if self.density not in _DENSITIES:
                raise ValueError(f"unknown density {self.density!r}; builtins: {sorted(_DENSITIES)}")
            a, b = self.support
            if not (math.isfinite(a) and math.isfinite(b)):
                raise ValueError("unbounded support")
            if not b > a:
                raise ValueError("density support must be a nondegenerate interval")
        else:
            raise ValueError(f"unknown law kind {self.kind!r}")

    # constructors
    @classmethod
    def atoms(cls, points: Sequence[float], weights: Optional[Sequence[float]] = None):
        points = tuple(float(p) for p in points)
        if weights is None:
            weights = [1.0 / len(points)] * len(points)
        return cls("atoms", points=points, weights=tuple(float(w) for w in weights))

    @classmethod
    def point_mass(cls, at: float = 0.0):
        return cls.atoms([at], [1.0])

    @classmethod
    def two_point(cls):
        return cls.atoms([-1.0, 1.0], [0.5, 0.5])

    @classmethod
    def semicircle(cls, variance: float = 1.0, center: float = 0.0):
        if variance <= 0:
            raise ValueError("semicircle variance must be positive")
        r = 2.0 * math.sqrt(variance)
        return cls("density", density="semicircle", support=(center - r, center + r), variance=float(variance))

    @classmethod
    def from_dict(cls, d: Mapping):
        kind = d.get("type")
        if kind == "semicircle":
            return cls.semicircle(float(d.get("variance", 1.0)), float(d.get("center", 0.0)))
        if kind == "atoms":
            return cls.atoms(d["points"], d.get("weights"))
        if kind == "point_mass":
            return cls.point_mass(float(d.get("at", 0.0)))
        if kind == "density":
            a, b = d["support"]
            return cls("density", density=d["expr"], support=(float(a), float(b)))
        raise ValueError(f"unknown law type {kind!r}")

    @classmethod
    def load(cls, path):
        path = Path(path)
        text = path.read_text()
        if path.suffix == ".toml":
            d = tomllib.loads(text)
        else:
            d = json.loads(text)
        return cls.from_dict(d)

    def to_dict(self):
        if self.kind == "atoms":
            return {"type": "atoms", "points": list(self.points), "weights": list(self.weights)}
        if self.is_semicircle:
            return {"type": "semicircle", "variance": self._semi_var(), "center": self.center}
        return {"type": "density", "expr": self.density, "support": list(self.support)}

    # properties
    @property
    def is_semicircle(self):
        return self.kind == "density" and self.density == "semicircle"

    @property
    def is_zero(self):
        return self.kind == "atoms" and all(p == 0 for p in self.points)

    @property
    def center(self):
        a, b = self.bounds
        return 0.5 * (a + b)

    @property
    def semicircle_variance(self):
        if self.is_zero:
            return 0.0
        if self.is_semicircle and abs(self.center) < 1e-15:
            return self._semi_var()
        return None

    def _semi_var(self):
        if self.variance is not None:
            return self.variance
        a, b = self.support
        return ((b - a) / 4) ** 2

    @property
    def bounds(self):
        if self.kind == "atoms":
            return (min(self.points), max(self.points))
        return self.support

    @property
    def radius(self):
        a, b = self.bounds
        return max(abs(a), abs(b))

    def _rule(self):
        rule = self._cache.get("rule")
        if rule is None:
            if self.kind == "atoms":
                rule = (np.array(self.points), np.array(self.weights))
            else:
                a, b = self.support
                c, r = 0.5 * (a + b), 0.5 * (b - a)
                th, w = _theta_rule()
                z = np.sin(th)
                wts = _DENSITIES[self.density](z) * np.cos(th) * w
                mass = wts.sum()
                self._cache["mass"] = mass
                rule = (c + r * z, wts / mass)
            self._cache["rule"] = rule
        return rule

    def total_mass(self):
        x, w = self._rule()
        return float(w.sum())

    def moment(self, k: int) -> float:
        x, w = self._rule()
        return float(np.sum(w * x ** k))

    def cdf(self, x: float) -> float:
        if self.kind == "atoms":
            return float(sum(w for p, w in zip(self.points, self.weights) if p <= x))
        a, b = self.support
        if x <= a:
            return 0.0
        if x >= b:
            return 1.0
        c, r = 0.5 * (a + b), 0.5 * (b - a)
        upper = math.asin((x - c) / r)
        th, w = _theta_rule(64, upper)
        self._rule()
        vals = _DENSITIES[self.density](np.sin(th)) * np.cos(th) * w
        return float(vals.sum() / self._cache["mass"])

    def quantile(self, u: float) -> float:
        """Generalized inverse cdf: smallest x with cdf(x) >= u."""
        if not 0.0 < u < 1.0:
            raise ValueError("quantile level must lie in (0, 1)")
        if self.kind == "atoms":
            acc = 0.0
            for p, w in sorted(zip(self.points, self.weights)):
                acc += w
                if acc >= u - 1e-12:
                    return p
            return max(self.points)
        a, b = self.support
        return brentq(lambda x: self.cdf(x) - u, a, b, xtol=1e-14, rtol=1e-14)


# ------------------------------------------------------------------ oracles

def canonical(w: Word) -> Word:
    """Least cyclic rotation; traces are rotation invariant."""
    if len(w) < 2:
        return w
    return min(w[i:] + w[:i] for i in range(len(w)))


class TraceOracle:
    """A tracial state on words, with a per-oracle memo keyed by the least rotation.

    Subclasses implement ``_eval``.  ``letters`` is the set of supported
    variables (``None`` means unrestricted); ``zero_letters`` are variables
    known to be the zero operator.
    """

    letters: Optional[frozenset] = None
    zero_letters: frozenset = frozenset()

    def __init__(self):
        self._memo: Dict[Word, complex] = {}
        self._lock = threading.Lock()

    def __call__(self, w: Iterable) -> complex:
        w = tuple(w)
        if not w:
            return 1.0 + 0j
        key = canonical(w)
        got = self._memo.get(key)
        if got is None:
            if self.letters is not None:
                bad = [l for l in key if l not in self.letters]
                if bad:
                    raise KeyError(f"oracle does not support variable {bad[0]}")
            if self.zero_letters and any(l in self.zero_letters for l in key):
                got = 0j
            else:
                got = complex(self._eval(key))
            with self._lock:
                self._memo.setdefault(key, got)
        return got

    def _eval(self, w: Word) -> complex:
        raise NotImplementedError

    def expect(self, p: NCPoly) -> complex:
        return sum((c * self(w) for w, c in p.items()), 0j)

    @property
    def x_letters(self):
        return sorted((l for l in (self.letters or ()) if l.family == "x"), key=lambda l: l.index)

    @property
    def y_letters(self):
        return sorted((l for l in (self.letters or ()) if l.family == "y"), key=lambda l: l.index)


class MatrixTraceOracle(TraceOracle):
    """tr_n of words in a fixed tuple of self-adjoint matrices."""

    def __init__(self, assignment: Mapping, atol: float = 1e-10):
        super().__init__()
        mats = {}
        n = None
        for k, v in assignment.items():
            a = np.asarray(v, dtype=np.complex128)
            if a.ndim != 2 or a.shape[0] != a.shape[1]:
                raise ValueError(f"matrix for {k} is not square")
            if n is None:
                n = a.shape[0]
            elif a.shape[0] != n:
                raise ValueError("dimension mismatch in matrix tuple")
            if np.max(np.abs(a - a.conj().T)) > atol * max(1.0, np.max(np.abs(a))):
                raise ValueError(f"matrix for {k} is not self-adjoint")
            mats[as_letter(k)] = a
        self.mats = mats
        self.n = n
        self.letters = frozenset(mats)
        self._diag = all(np.count_nonzero(a - np.diag(np.diag(a))) == 0 for a in mats.values())
        self._prefix: Dict[Word, np.ndarray] = {}

    def _product(self, w: Word):
        got = self._prefix.get(w)
        if got is None:
            got = self.mats[w[0]] if len(w) == 1 else self._product(w[:-1]) @ self.mats[w[-1]]
            if len(self._prefix) < 4096:
                self._prefix[w] = got
        return got

    def _eval(self, w: Word):
        if self._diag:
            v = np.ones(self.n, dtype=np.complex128)
            for l in w:
                v = v * np.diag(self.mats[l])
            return v.mean()
        # tr(AB) without forming the last product
        if len(w) == 1:
            return np.trace(self.mats[w[0]]) / self.n
        h = len(w) // 2
        a, b = self._product(w[:h]), self._product(w[h:])
        return np.sum(a * b.T) / self.n


class LawOracle(TraceOracle):
    """Single-variable oracle from a :class:`SpectralLaw`."""

    def __init__(self, law: SpectralLaw, variable="x1"):
        super().__init__()
        self.law = law
        self.variable = as_letter(variable)
        self.letters = frozenset([self.variable])
        if law.is_zero:
            self.zero_letters = frozenset([self.variable])

    def _eval(self, w: Word):
        return self.law.moment(len(w))


def free_cumulants(moments: Sequence[float]) -> list:
    """Free cumulants k_1..k_N from moments m_0=1, m_1..m_N of one variable."""
    m = list(moments)
    n_max = len(m) - 1
    kappa = [0.0] * (n_max + 1)

    @lru_cache(maxsize=None)
    def compositions(total: int, parts: int) -> float:
        # sum over i_1+..+i_parts = total of prod m_{i}
        if parts == 0:
            return 1.0 if total == 0 else 0.0
        return sum(m[i] * compositions(total - i, parts - 1) for i in range(total + 1))

    for n in range(1, n_max + 1):
        acc = 0.0
        for s in range(1, n):
            acc += kappa[s] * compositions(n - s, s)
        kappa[n] = m[n] - acc
    return kappa


class FreeProductOracle(TraceOracle):
    """Freely independent variables with prescribed one-variable laws.

    Mixed moments come from the non-crossing moment-cumulant recursion: the
    block containing the first position is chosen among same-variable
    positions, and the gaps between its elements are evaluated independently.
    """

    def __init__(self, laws: Mapping, max_order: int = 24):
        super().__init__()
        self.laws = {as_letter(k): v for k, v in laws.items()}
        self.letters = frozenset(self.laws)
        self.zero_letters = frozenset(l for l, law in self.laws.items() if law.is_zero)
        self._kappa = {}
        self._max_order = max_order

    def kappa(self, letter: Letter, r: int) -> float:
        ks = self._kappa.get(letter)
        if ks is None or r >= len(ks):
            order = max(self._max_order, r)
            law = self.laws[letter]
            ks = free_cumulants([law.moment(k) for k in range(order + 1)])
            self._kappa[letter] = ks
        return ks[r]

    def _eval(self, w: Word):
        return self._moment(w)

    def _moment(self, w: Word) -> float:
        if not w:
            return 1.0
        first = w[0]
        same = [i for i in range(1, len(w)) if w[i] == first]
        total = 0.0
        # choose the other elements of the first block as a subset of `same`
        for mask in range(1 << len(same)):
            block = [0] + [same[b] for b in range(len(same)) if mask >> b & 1]
            k = self.kappa(first, len(block))
            if k == 0:
                continue
            prod = k
            bounds = block + [len(w)]
            for a, b in zip(bounds[:-1], bounds[1:]):
                gap = w[a + 1:b]
                if gap:
                    prod *= self(gap)
                    if prod == 0:
                        break
            total += prod
        return total


class SemicircularFamily(TraceOracle):
    """Free centered semicirculars; each variable has its own variance (0 allowed)."""

    def __init__(self, variances: Mapping):
        super().__init__()
        self.variances = {as_letter(k): float(v) for k, v in variances.items()}
        if any(v < 0 for v in self.variances.values()):
            raise ValueError("variances must be nonnegative")
        self.letters = frozenset(self.variances)
        self.zero_letters = frozenset(l for l, v in self.variances.items() if v == 0)

    @classmethod
    def standard(cls, m: int, variance: float = 1.0, family: str = "x"):
        return cls({Letter(family, j): variance for j in range(1, m + 1)})

    def _eval(self, w: Word):
        scale = 1.0
        for l in set(w):
            cnt = w.count(l)
            if cnt % 2:
                return 0.0
            scale *= self.variances[l] ** (cnt // 2)
        return scale * _nc_matchings(w)


@lru_cache(maxsize=200_000)
def _nc_matchings(w: Word) -> int:
    """Number of non-crossing pairings of positions respecting letter labels."""
    if not w:
        return 1
    if len(w) % 2:
        return 0
    total = 0
    for q in range(1, len(w), 2):
        if w[q] == w[0]:
            inner = w[1:q]
            total += _nc_matchings(inner) * _nc_matchings(w[q + 1:])
    return total


# tags for the Wick engine
_BASE, _SEMI, _FLOW = 0, 1, 2


class _WickEngine(TraceOracle):
    """Free Wick recursion over words whose letters are base letters,
    semicircular letters, or flow letters (base letter plus its semicircle).

    The first non-base letter either stays a base letter (flow letters only),
    or becomes a semicircular paired with a later matching letter at
    positions p < q, contributing
    variance * tau(strictly inside) * tau(outside with p..q removed).
    """

    def __init__(self, base: TraceOracle, variances: Mapping[int, float]):
        super().__init__()
        self.base = base
        self.pair_var = dict(variances)
        self._tmemo: Dict[tuple, complex] = {}

    def _tagged(self, tw: tuple) -> complex:
        if not tw:
            return 1.0 + 0j
        key = min(tw[i:] + tw[:i] for i in range(len(tw))) if len(tw) > 1 else tw
        got = self._tmemo.get(key)
        if got is not None:
            return got
        got = self._tagged_eval(key)
        self._tmemo[key] = got
        return got

    def _tagged_eval(self, tw: tuple) -> complex:
        p = next((i for i, (_, tag, _) in enumerate(tw) if tag != _BASE), None)
        if p is None:
            return self.base(tuple(l for l, _, _ in tw))
        zero = self.base.zero_letters
        if any(tag == _BASE and l in zero for l, tag, _ in tw):
            return 0j
        letter, tag, key = tw[p]
        if tag == _SEMI and not any(t != _BASE for _, t, _ in tw[p + 1:]):
            return 0j
        total = 0j
        if tag == _FLOW and letter not in zero:
            total += self._tagged(tw[:p] + ((letter, _BASE, key),) + tw[p + 1:])
        var = self.pair_var[key]
        for q in range(p + 1, len(tw)):
            lq, tq, kq = tw[q]
            if tq == _BASE or kq != key:
                continue
            inner = self._tagged(tw[p + 1:q])
            if inner == 0:
                continue
            outer = self._tagged(tw[:p] + tw[q + 1:])
            total += var * inner * outer
        return total


class FreeSemicircularExtension(_WickEngine):
    """Base oracle extended by s_1..s_m, free semicirculars of variance t each."""

    def __init__(self, base: TraceOracle, m: int, t: float):
        if t <= 0:
            raise ValueError("semicircular variance must be positive")
        super().__init__(base, {k: t for k in range(1, m + 1)})
        self.m = m
        self.t = t
        s_letters = {Letter("s", k) for k in range(1, m + 1)}
        self.letters = None if base.letters is None else frozenset(base.letters | s_letters)

    def _eval(self, w: Word):
        tw = tuple((l, _SEMI, l.index) if l.family == "s" else (l, _BASE, 0) for l in w)
        for l, tag, _ in tw:
            if tag == _SEMI and l.index > self.m:
                raise KeyError(f"extension has no variable {l}")
        counts = {}
        for l, tag, k in tw:
            if tag == _SEMI:
                counts[k] = counts.get(k, 0) + 1
        if any(c % 2 for c in counts.values()):
            return 0j
        return self._tagged(tw)


class HeatFlowOracle(_WickEngine):
    """Law of (x_j + sqrt(t) s_j, y) with s free from the base and each other."""

    def __init__(self, base: TraceOracle, t: float, flow_letters: Optional[Iterable] = None):
        if t <= 0:
            raise ValueError("flow time must be positive here; t = 0 returns the base")
        if flow_letters is None:
            flow_letters = base.x_letters
        flow_letters = [as_letter(l) for l in flow_letters]
        if not flow_letters:
            raise ValueError("no x-variables to flow")
        super().__init__(base, {l.index: t for l in flow_letters})
        self.t = t
        self.flow_letters = frozenset(flow_letters)
        self.letters = base.letters
        self.zero_letters = frozenset()

    def _eval(self, w: Word):
        tw = tuple((l, _FLOW, l.index) if l in self.flow_letters else (l, _BASE, 0) for l in w)
        return self._tagged(tw)


class ScaledOracle(TraceOracle):
    """Law of the dilated tuple (c x, y)."""

    def __init__(self, base: TraceOracle, c: float):
        super().__init__()
        self.base, self.c = base, c
        self.letters = base.letters
        self.zero_letters = base.zero_letters

    def _eval(self, w: Word):
        k = sum(1 for l in w if l.family == "x")
        return self.c ** k * self.base(w)


class DiagonalOracle(MatrixTraceOracle):
    """Commuting diagonal tuple stored as vectors; tr_n of a word is the mean of the product."""

    def __init__(self, diagonals: Mapping):
        TraceOracle.__init__(self)
        self.diags = {as_letter(k): np.asarray(v, dtype=float) for k, v in diagonals.items()}
        sizes = {len(v) for v in self.diags.values()}
        if len(sizes) != 1:
            raise ValueError("dimension mismatch in diagonal tuple")
        self.n = sizes.pop()
        self.letters = frozenset(self.diags)
        self._diag = True

    @property
    def mats(self):
        return {l: np.diag(v) for l, v in self.diags.items()}

    def _eval(self, w: Word):
        v = np.ones(self.n)
        for l in w:
            v = v * self.diags[l]
        return float(v.mean())


# ------------------------------------------------------------------ public operations

def matrix_trace_oracle(assignment: Mapping) -> MatrixTraceOracle:
    return MatrixTraceOracle(assignment)


def law_oracle(law: SpectralLaw, variable="x1") -> LawOracle:
    return LawOracle(law, variable)


def free_product(laws: Mapping) -> TraceOracle:
    """Free family with given one-variable laws; semicircular families take the fast path."""
    laws = {as_letter(k): v for k, v in laws.items()}
    variances = {l: law.semicircle_variance for l, law in laws.items()}
    if all(v is not None for v in variances.values()):
        return SemicircularFamily(variances)
    if len(laws) == 1:
        (l, law), = laws.items()
        return LawOracle(law, l)
    return FreeProductOracle(laws)


def free_semicircular_extend(base: TraceOracle, m: int, t: float = 1.0) -> FreeSemicircularExtension:
    return FreeSemicircularExtension(base, m, t)


def heat_flow_law(base: TraceOracle, t: float, flow_letters=None, exact_only: bool = False) -> TraceOracle:
    """Law of (x + sqrt(t) s, y).

    Composed flows collapse to one flow, and semicircular families flow in
    closed form, unless ``exact_only`` forces the generic recursion.
    """
    if t < 0:
        raise ValueError("flow time must be nonnegative")
    if t == 0:
        return base
    if not exact_only:
        if isinstance(base, HeatFlowOracle) and (flow_letters is None or set(map(as_letter, flow_letters)) == base.flow_letters):
            return HeatFlowOracle(base.base, base.t + t, base.flow_letters)
        if isinstance(base, SemicircularFamily):
            letters = base.x_letters if flow_letters is None else [as_letter(l) for l in flow_letters]
            v = dict(base.variances)
            for l in letters:
                v[l] = v[l] + t
            return SemicircularFamily(v)
    return HeatFlowOracle(base, t, flow_letters)


def quantile_microstate(law: SpectralLaw, n: int) -> np.ndarray:
    """Diagonal matrix of the law's quantiles at levels (k - 1/2)/n."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if not math.isfinite(law.radius):
        raise ValueError("unbounded support")
    levels = (np.arange(1, n + 1) - 0.5) / n
    return np.diag([law.quantile(u) for u in levels])


def expand_heat_flow(base: TraceOracle, t: float, w: Word, m: Optional[int] = None) -> complex:
    """Reference value by literal substitution x_j -> x_j + s_j over all 2^k choices."""
    flow = {l for l in w if l.family == "x"} if m is None else {Letter("x", j) for j in range(1, m + 1)}
    ext = FreeSemicircularExtension(base, max([l.index for l in flow] + [1]), t)
    total = 0j
    positions = [i for i, l in enumerate(w) if l in flow]
    for mask in range(1 << len(positions)):
        ww = list(w)
        for b, i in enumerate(positions):
            if mask >> b & 1:
                ww[i] = Letter("s", w[i].index)
        total += ext(tuple(ww))
    return total


def load_law(spec) -> SpectralLaw:
    if isinstance(spec, SpectralLaw):
        return spec
    if isinstance(spec, Mapping):
        return SpectralLaw.from_dict(spec)
    return SpectralLaw.load(spec)


__all__ = [
    "SpectralLaw",
    "TraceOracle",
    "MatrixTraceOracle",
    "DiagonalOracle",
    "LawOracle",
    "FreeProductOracle",
    "SemicircularFamily",
    "FreeSemicircularExtension",
    "HeatFlowOracle",
    "ScaledOracle",
    "canonical",
    "catalan",
    "semicircle_moment",
    "free_cumulants",
    "matrix_trace_oracle",
    "law_oracle",
    "free_product",
    "free_semicircular_extend",
    "heat_flow_law",
    "expand_heat_flow",
    "quantile_microstate",
    "load_law",
    "words_up_to",
]
