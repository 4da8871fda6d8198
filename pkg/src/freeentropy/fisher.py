"""Degree-truncated variational estimate of the relative free Fisher information.

For each coordinate j the estimate is ``sup |tau(x)tau(d_j f)|^2`` over
polynomials f of degree <= d with ||f||_2 <= 1, which is the quadratic form
``L^H G^+ L`` of the divergence functional against the Gram matrix.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Iterable, List, Optional, Sequence

import numpy as np

from .lawkit import TraceOracle, canonical
from .ncpoly import Letter, NCPoly, free_diff, reverse, word_str, words_up_to

GRAM_CUTOFF = 1e-10
DIVERGENCE_THRESHOLD = 1e6
IMAG_TOL = 1e-8
RANGE_TOL = 1e-8


class DegenerateGramError(ValueError):
    pass


@dataclass(frozen=True)
class BasisSpec:
    m: int
    y_indices: tuple
    degree: int
    words: tuple = field(repr=False)

    @classmethod
    def build(cls, m: int, degree: int, y_indices: Iterable[int] = ()) -> "BasisSpec":
        if m < 1:
            raise ValueError("need at least one x-variable")
        if degree < 0:
            raise ValueError("degree must be nonnegative")
        y_indices = tuple(sorted(set(y_indices)))
        letters = [Letter("x", j) for j in range(1, m + 1)] + [Letter("y", k) for k in y_indices]
        return cls(m, y_indices, degree, tuple(words_up_to(letters, degree)))

    @property
    def alphabet_size(self):
        return self.m + len(self.y_indices)

    def __len__(self):
        return len(self.words)


@dataclass
class PhiStarEstimate:
    value: float
    degree: int
    per_coordinate: List[float]
    gram_rank: int
    cutoff: float
    diverging: bool
    range_defect: float = 0.0
    basis_size: int = 0
    best_degree: List[int] = field(default_factory=list)

    def to_dict(self):
        return asdict(self)


@lru_cache(maxsize=64)
def _plan(words: tuple, m: int):
    """Distinct cyclic words behind the Gram matrix and divergence functionals.

    Returns (unique words, k x k index array, per-j (coef, p, u-id, v-id) arrays).
    """
    ids = {(): 0}
    uniq = [()]

    def wid(w):
        c = canonical(w)
        i = ids.get(c)
        if i is None:
            i = ids[c] = len(uniq)
            uniq.append(c)
        return i

    k = len(words)
    idx = np.empty((k, k), dtype=np.int64)
    for q, wq in enumerate(words):
        rq = reverse(wq)
        for p, wp in enumerate(words):
            idx[q, p] = wid(rq + wp)
    div = []
    for j in range(1, m + 1):
        rows = []
        for p, w in enumerate(words):
            for (u, v), c in free_diff(NCPoly({w: 1.0}), j).items():
                rows.append((c, p, wid(u), wid(v)))
        coef = np.array([r[0] for r in rows], dtype=np.complex128)
        cols = np.array([r[1:] for r in rows], dtype=np.int64).reshape(-1, 3)
        div.append((coef, cols))
    return tuple(uniq), idx, div


def _moments(words: tuple, oracle: TraceOracle) -> np.ndarray:
    return np.array([oracle(w) for w in words], dtype=np.complex128)


def gram_matrix(basis: BasisSpec, oracle: TraceOracle) -> np.ndarray:
    """G[q, p] = tau(w_q^* w_p)."""
    uniq, idx, _ = _plan(basis.words, basis.m)
    return _moments(uniq, oracle)[idx]


def tensor_trace(t, oracle: TraceOracle) -> complex:
    return sum((c * oracle(u) * oracle(v) for (u, v), c in t.items()), 0j)


def divergence_functional(basis: BasisSpec, oracle: TraceOracle, j: int, moments=None) -> np.ndarray:
    """L[p] = tau (x) tau (d_j w_p)."""
    if not 1 <= j <= basis.m:
        raise ValueError(f"x-index {j} outside 1..{basis.m}")
    uniq, _, div = _plan(basis.words, basis.m)
    if moments is None:
        moments = _moments(uniq, oracle)
    coef, cols = div[j - 1]
    out = np.zeros(len(basis.words), dtype=np.complex128)
    np.add.at(out, cols[:, 0], coef * moments[cols[:, 1]] * moments[cols[:, 2]])
    return out


def _equilibrated_pinv(g: np.ndarray, cutoff: float):
    asym = np.max(np.abs(g - g.conj().T))
    if asym > IMAG_TOL * max(1.0, np.max(np.abs(g))):
        # a non-Hermitian Gram gives a complex quadratic form
        raise ArithmeticError(f"Gram matrix is not Hermitian (defect {asym:.3g})")
    d = np.real(np.diag(g)).copy()
    scale = np.where(d > 0, 1.0 / np.sqrt(np.where(d > 0, d, 1.0)), 1.0)
    gs = scale[:, None] * g * scale[None, :]
    gs = 0.5 * (gs + gs.conj().T)
    evals, evecs = np.linalg.eigh(gs)
    lam_max = evals[-1]
    if lam_max <= 0:
        raise DegenerateGramError("Gram matrix is zero; the oracle is degenerate on this basis")
    keep = evals > cutoff * lam_max
    return scale, evals, evecs, keep


def _solve(g, lvecs, cutoff):
    """Per-coordinate L^H G^+ L and the relative part of L outside range(G)."""
    scale, evals, evecs, keep = _equilibrated_pinv(g, cutoff)
    kept_vecs, kept_vals = evecs[:, keep], evals[keep]
    per, defects = [], []
    for lv in lvecs:
        v = lv * scale
        coords = kept_vecs.conj().T @ v
        per.append(float(np.sum(np.abs(coords) ** 2 / kept_vals)))
        nv = np.linalg.norm(v)
        defects.append(float(np.linalg.norm(v - kept_vecs @ coords) / nv) if nv > 0 else 0.0)
    return per, defects, int(np.count_nonzero(keep))


def _graded_prefixes(words, degree):
    """(d, k) with words[:k] exactly the words of length <= d, for d < degree."""
    out = []
    for d in range(1, degree):
        k = sum(1 for w in words if len(w) <= d)
        if all(len(w) <= d for w in words[:k]):
            out.append((d, k))
    return out


def phi_star_lower(
    oracle: TraceOracle,
    m: int,
    y_indices: Sequence[int] = (),
    degree: int = 4,
    cutoff: float = GRAM_CUTOFF,
    basis: Optional[BasisSpec] = None,
) -> PhiStarEstimate:
    """Lower estimate of Phi*(x_1..x_m : y) from test polynomials of degree <= d.

    The Gram matrix is diagonally equilibrated before eigenvalues below
    ``cutoff * lambda_max`` are dropped; the estimate is unchanged by the
    rescaling whenever G is invertible.  When the divergence functional has
    a part outside the Gram range (atomic or finite-matrix laws) each
    coordinate keeps the best value over the graded sub-bases, so the estimate
    stays a lower bound and never decreases with d.
    """
    if degree < 1:
        raise ValueError("degree must be >= 1")
    if basis is None:
        basis = BasisSpec.build(m, degree, y_indices)
    uniq, idx, _ = _plan(basis.words, basis.m)
    moments = _moments(uniq, oracle)
    g = moments[idx]
    lvecs = [np.conj(divergence_functional(basis, oracle, j, moments)) for j in range(1, m + 1)]
    per, defects, rank = _solve(g, lvecs, cutoff)
    best_degree = [degree] * m
    if max(defects) > RANGE_TOL:
        # L leaves the Gram range, so the truncated sup is infinite and the
        # projected value need not grow with d; keep the best graded sub-basis
        for d_sub, k in _graded_prefixes(basis.words, degree):
            sub_per, _, _ = _solve(g[:k, :k], [v[:k] for v in lvecs], cutoff)
            for j, val in enumerate(sub_per):
                if val > per[j]:
                    per[j], best_degree[j] = val, d_sub
    defect = max(defects)
    total = float(sum(per))
    return PhiStarEstimate(
        value=total,
        degree=degree,
        per_coordinate=per,
        gram_rank=rank,
        cutoff=cutoff,
        diverging=total > DIVERGENCE_THRESHOLD,
        range_defect=defect,
        basis_size=len(basis),
        best_degree=best_degree,
    )


def conjugate_residual(oracle: TraceOracle, xi: NCPoly, j: int, basis: BasisSpec) -> float:
    """max over basis words p of |tau(xi^* p) - tau (x) tau(d_j p)|."""
    xi_star = xi.adjoint()
    worst = 0.0
    for w in basis.words:
        p = NCPoly({w: 1.0})
        lhs = oracle.expect(xi_star * p)
        rhs = tensor_trace(free_diff(p, j), oracle)
        worst = max(worst, abs(lhs - rhs))
    return float(worst)


def l2_norm_sq(oracle: TraceOracle, f: NCPoly) -> float:
    return float(np.real(oracle.expect(f.adjoint() * f)))


def describe_basis(basis: BasisSpec) -> List[str]:
    return [word_str(w) for w in basis.words]
