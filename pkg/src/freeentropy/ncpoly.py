"""Non-commutative *-polynomials, the free difference quotient, and matrix evaluation.

Variables come in three families: ``x`` (the variables being differentiated),
``y`` (conditioning variables) and ``s`` (semicircular variables added by a
free extension).  All generators are formally self-adjoint.
"""

from __future__ import annotations

import re
from typing import Dict, Iterable, Mapping, NamedTuple, Tuple

import numpy as np

FAMILIES = ("x", "y", "s")
_FAMILY_RANK = {f: r for r, f in enumerate(FAMILIES)}


class Letter(NamedTuple):
    family: str
    index: int

    def __str__(self):
        return f"{self.family}{self.index}"

    @property
    def sort_key(self):
        return (_FAMILY_RANK[self.family], self.index)

    @classmethod
    def parse(cls, text: str) -> "Letter":
        m = re.fullmatch(r"\s*([xys])\s*(\d+)\s*", text)
        if m is None:
            raise ValueError(f"bad variable name {text!r}")
        idx = int(m.group(2))
        if idx < 1:
            raise ValueError(f"variable index must be positive: {text!r}")
        return cls(m.group(1), idx)


Word = Tuple[Letter, ...]
UNIT: Word = ()


def X(i: int) -> Letter:
    return Letter("x", i)


def Y(i: int) -> Letter:
    return Letter("y", i)


def S(i: int) -> Letter:
    return Letter("s", i)


def as_letter(v) -> Letter:
    if isinstance(v, Letter):
        return v
    if isinstance(v, str):
        return Letter.parse(v)
    if isinstance(v, tuple) and len(v) == 2:
        return Letter(str(v[0]), int(v[1]))
    raise TypeError(f"cannot interpret {v!r} as a variable")


def word_key(w: Word):
    return (len(w), tuple(l.sort_key for l in w))


def word_str(w: Word) -> str:
    return ".".join(str(l) for l in w) if w else "1"


def reverse(w: Word) -> Word:
    return tuple(reversed(w))


def words_up_to(letters: Iterable[Letter], degree: int):
    """All words of length <= degree, graded by length then letter order."""
    letters = sorted(set(letters), key=lambda l: l.sort_key)
    out = [UNIT]
    layer = [UNIT]
    for _ in range(degree):
        layer = [w + (l,) for w in layer for l in letters]
        out.extend(layer)
    return out


def _clean(terms):
    return {w: complex(c) for w, c in sorted(terms.items(), key=lambda kv: word_key(kv[0])) if c != 0}


class NCPoly:
    """Finite complex linear combination of words; immutable."""

    __slots__ = ("_terms", "_hash")

    def __init__(self, terms: Mapping[Word, complex] | None = None):
        self._terms = _clean(dict(terms or {}))
        self._hash = None

    @classmethod
    def const(cls, c) -> "NCPoly":
        return cls({UNIT: c})

    @classmethod
    def var(cls, v) -> "NCPoly":
        return cls({(as_letter(v),): 1.0})

    @classmethod
    def word(cls, w: Iterable, coeff=1.0) -> "NCPoly":
        return cls({tuple(as_letter(l) for l in w): coeff})

    @property
    def terms(self) -> Dict[Word, complex]:
        return dict(self._terms)

    def items(self):
        return self._terms.items()

    def __iter__(self):
        return iter(self._terms)

    def __len__(self):
        return len(self._terms)

    def coeff(self, w: Word) -> complex:
        return self._terms.get(w, 0j)

    @property
    def degree(self) -> int:
        return max((len(w) for w in self._terms), default=-1)

    def letters(self):
        return {l for w in self._terms for l in w}

    def is_zero(self):
        return not self._terms

    # -- algebra
    @staticmethod
    def _coerce(other):
        if isinstance(other, NCPoly):
            return other
        if isinstance(other, (int, float, complex, np.number)):
            return NCPoly.const(other)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        acc = dict(self._terms)
        for w, c in other._terms.items():
            acc[w] = acc.get(w, 0) + c
        return NCPoly(acc)

    __radd__ = __add__

    def __neg__(self):
        return NCPoly({w: -c for w, c in self._terms.items()})

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, float, complex, np.number)):
            return NCPoly({w: c * other for w, c in self._terms.items()})
        if not isinstance(other, NCPoly):
            return NotImplemented
        return multiply(self, other)

    def __rmul__(self, other):
        if isinstance(other, (int, float, complex, np.number)):
            return self * other
        return NotImplemented

    def __pow__(self, k: int):
        out = NCPoly.const(1)
        for _ in range(k):
            out = out * self
        return out

    def adjoint(self) -> "NCPoly":
        return adjoint(self)

    @property
    def star(self):
        return adjoint(self)

    def __eq__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return False
        return self._terms == other._terms

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(tuple(self._terms.items()))
        return self._hash

    def allclose(self, other, atol=1e-12):
        keys = set(self._terms) | set(other._terms)
        return all(abs(self.coeff(w) - other.coeff(w)) <= atol for w in keys)

    def __str__(self):
        return format_poly(self)

    def __repr__(self):
        return f"NCPoly({format_poly(self)!r})"


class TensorPoly:
    """Sparse sum of coefficient * (left word (x) right word)."""

    __slots__ = ("_terms",)

    def __init__(self, terms: Mapping[Tuple[Word, Word], complex] | None = None):
        items = sorted((terms or {}).items(), key=lambda kv: (word_key(kv[0][0]), word_key(kv[0][1])))
        self._terms = {k: complex(c) for k, c in items if c != 0}

    @classmethod
    def simple(cls, a: NCPoly, b: NCPoly) -> "TensorPoly":
        acc = {}
        for u, cu in a.items():
            for v, cv in b.items():
                acc[(u, v)] = acc.get((u, v), 0) + cu * cv
        return cls(acc)

    @property
    def terms(self):
        return dict(self._terms)

    def items(self):
        return self._terms.items()

    def __len__(self):
        return len(self._terms)

    def is_zero(self):
        return not self._terms

    def __add__(self, other):
        acc = dict(self._terms)
        for k, c in other._terms.items():
            acc[k] = acc.get(k, 0) + c
        return TensorPoly(acc)

    def __mul__(self, other):
        if isinstance(other, (int, float, complex, np.number)):
            return TensorPoly({k: c * other for k, c in self._terms.items()})
        acc = {}
        for (a, b), c1 in self._terms.items():
            for (c, d), c2 in other._terms.items():
                key = (a + c, b + d)
                acc[key] = acc.get(key, 0) + c1 * c2
        return TensorPoly(acc)

    __rmul__ = __mul__

    def __eq__(self, other):
        return isinstance(other, TensorPoly) and self._terms == other._terms

    def allclose(self, other, atol=1e-12):
        keys = set(self._terms) | set(other._terms)
        return all(abs(self._terms.get(k, 0) - other._terms.get(k, 0)) <= atol for k in keys)

    def __repr__(self):
        parts = [f"{_fmt_coeff(c)}*({word_str(a)} # {word_str(b)})" for (a, b), c in self._terms.items()]
        return "TensorPoly(" + (" + ".join(parts) or "0") + ")"


def multiply(p: NCPoly, q: NCPoly) -> NCPoly:
    acc: Dict[Word, complex] = {}
    for u, cu in p.items():
        for v, cv in q.items():
            w = u + v
            acc[w] = acc.get(w, 0) + cu * cv
    return NCPoly(acc)


def adjoint(p: NCPoly) -> NCPoly:
    return NCPoly({reverse(w): c.conjugate() for w, c in p.items()})


def free_diff(p: NCPoly, j: int) -> TensorPoly:
    """Free difference quotient with respect to ``x_j``.

    On a word, every occurrence of ``x_j`` splits it into (prefix) (x) (suffix).
    """
    if j < 1:
        raise ValueError("x-index must be >= 1")
    target = Letter("x", j)
    acc = {}
    for w, c in p.items():
        for i, l in enumerate(w):
            if l == target:
                key = (w[:i], w[i + 1:])
                acc[key] = acc.get(key, 0) + c
    return TensorPoly(acc)


# ---------------------------------------------------------------- evaluation

def _normalize_assignment(assignment, check_selfadjoint=True, atol=1e-10):
    if not assignment:
        raise ValueError("empty assignment")
    out = {}
    shape = None
    for k, v in assignment.items():
        a = np.asarray(v)
        if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
            raise ValueError(f"matrix for {k} is not square: shape {a.shape}")
        if shape is None:
            shape = a.shape[-1]
        elif a.shape[-1] != shape:
            raise ValueError(f"dimension mismatch: {k} has size {a.shape[-1]}, expected {shape}")
        if check_selfadjoint:
            scale = max(1.0, float(np.max(np.abs(a))) if a.size else 1.0)
            if np.max(np.abs(a - np.conj(np.swapaxes(a, -1, -2))), initial=0.0) > atol * scale:
                raise ValueError(f"matrix for {k} is not self-adjoint")
        out[as_letter(k)] = a
    return out, shape


class _WordEvaluator:
    """Evaluates words with a shared prefix cache; supports leading batch axes.

    Diagonal (unbatched) matrices multiply by column scaling, and a word whose
    reverse is cached is taken as the conjugate transpose.
    """

    def __init__(self, assignment, check=True):
        self.mats, self.n = _normalize_assignment(assignment, check)
        batch = np.broadcast_shapes(*(a.shape[:-2] for a in self.mats.values()))
        self.batch = batch
        self.eye = np.broadcast_to(np.eye(self.n, dtype=np.complex128), batch + (self.n, self.n))
        self.diags = {}
        for l, a in self.mats.items():
            if a.ndim == 2 and not np.any(a - np.diag(np.diagonal(a))):
                self.diags[l] = np.diagonal(a).astype(np.complex128)
        self._cache = {UNIT: self.eye}

    def __call__(self, w: Word):
        got = self._cache.get(w)
        if got is not None:
            return got
        last = w[-1]
        if last not in self.mats:
            raise KeyError(f"no matrix assigned to variable {last}")
        rev = self._cache.get(w[::-1])
        if rev is not None:
            val = np.conj(np.swapaxes(rev, -1, -2))
        elif len(w) == 1:
            val = np.broadcast_to(self.mats[last], self.batch + (self.n, self.n)).astype(np.complex128)
        elif last in self.diags:
            val = self(w[:-1]) * self.diags[last]
        else:
            val = self(w[:-1]) @ self.mats[last]
        self._cache[w] = val
        return val

    def trace(self, w: Word):
        """tr_n of a word, splitting it so the last product is never formed."""
        if not w:
            return np.ones(self.batch, dtype=np.complex128)
        if len(w) == 1:
            return np.trace(self(w), axis1=-2, axis2=-1) / self.n
        h = (len(w) + 1) // 2
        a, b = self(w[:h]), self(w[h:])
        return np.sum(a * np.swapaxes(b, -1, -2), axis=(-2, -1)) / self.n

    def poly(self, p: NCPoly):
        out = np.zeros(self.batch + (self.n, self.n), dtype=np.complex128)
        for w, c in p.items():
            out = out + c * self(w)
        return out


def evaluate(p: NCPoly, assignment) -> np.ndarray:
    """Matrix value of ``p``; ``assignment`` maps variables to self-adjoint matrices.

    Arrays with extra leading axes are evaluated batchwise.
    """
    ev = _WordEvaluator(assignment)
    missing = p.letters() - set(ev.mats)
    if missing:
        raise KeyError("no matrix assigned to variable " + ", ".join(sorted(map(str, missing))))
    return ev.poly(p)


class EvaluatedTensor:
    """A tensor polynomial evaluated on matrices: coefficient-weighted (A, B) pairs."""

    def __init__(self, pairs, n):
        self.pairs = pairs
        self.n = n

    def contract(self, c: np.ndarray) -> np.ndarray:
        """(A (x) B) # C = A C B, summed with coefficients."""
        out = 0
        for coef, a, b in self.pairs:
            out = out + coef * (a @ c @ b)
        if isinstance(out, int):
            return np.zeros(np.broadcast_shapes(np.shape(c)), dtype=np.complex128)
        return out

    def trace_trace(self):
        """tr_n (x) tr_n of the evaluated tensor."""
        out = 0
        for coef, a, b in self.pairs:
            out = out + coef * (np.trace(a, axis1=-2, axis2=-1) / self.n) * (np.trace(b, axis1=-2, axis2=-1) / self.n)
        return out

    def as_operator(self) -> np.ndarray:
        """n^2 x n^2 matrix of C -> sum coef * A C B acting on row-major vec(C)."""
        n = self.n
        out = np.zeros((n * n, n * n), dtype=np.complex128)
        for coef, a, b in self.pairs:
            out += coef * np.kron(a, b.T)
        return out


def evaluate_tensor(t: TensorPoly, assignment) -> EvaluatedTensor:
    ev = _WordEvaluator(assignment)
    pairs = [(c, ev(u), ev(v)) for (u, v), c in t.items()]
    return EvaluatedTensor(pairs, ev.n)


def contract(t: TensorPoly, a: np.ndarray, assignment) -> np.ndarray:
    return evaluate_tensor(t, assignment).contract(a)


# ---------------------------------------------------------------- text format

_NUM = r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?"


def _fmt_real(x: float) -> str:
    if x == int(x) and abs(x) < 1e15:
        return str(int(x))
    return repr(float(x))


def _fmt_coeff(c: complex) -> str:
    if c.imag == 0:
        return _fmt_real(c.real)
    im = _fmt_real(c.imag)
    if not im.startswith("-"):
        im = "+" + im
    return f"({_fmt_real(c.real)}{im}i)"


def format_poly(p: NCPoly) -> str:
    """Text form: ``(-0.5+1i)*x1.x2.y3 + 2*x1 + 1``."""
    if p.is_zero():
        return "0"
    parts = []
    for w, c in p.items():
        if not w:
            parts.append(_fmt_coeff(c))
        elif c == 1:
            parts.append(word_str(w))
        else:
            parts.append(f"{_fmt_coeff(c)}*{word_str(w)}")
    return " + ".join(parts)


def _parse_coeff(text: str) -> complex:
    t = text.strip()
    if t.startswith("(") and t.endswith(")"):
        t = t[1:-1]
    t = re.sub(r"\s+", "", t)
    if not t:
        raise ValueError("empty coefficient")
    t = t.replace("I", "i").replace("i", "j")
    if t in ("j", "+j"):
        return 1j
    if t == "-j":
        return -1j
    try:
        return complex(t)
    except ValueError:
        raise ValueError(f"bad coefficient {text!r}") from None


def _split_terms(text: str):
    """Split at top-level + and - signs, keeping exponent signs inside numbers."""
    terms, cur, sign, depth = [], "", 1, 0
    for ch in text.strip():
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if depth == 0 and ch in "+-":
            body = cur.strip()
            if re.fullmatch(r".*\d[eE]", body) and not re.search(r"[xys]", body):
                cur += ch
                continue
            if body:
                terms.append((sign, body))
                sign = 1
            if ch == "-":
                sign = -sign
            cur = ""
            continue
        cur += ch
    if cur.strip():
        terms.append((sign, cur.strip()))
    elif not terms:
        raise ValueError("empty polynomial text")
    return terms


def parse_poly(text: str) -> NCPoly:
    """Inverse of :func:`format_poly`; whitespace is ignored."""
    if not text.strip():
        raise ValueError("empty polynomial text")
    acc: Dict[Word, complex] = {}
    for sign, term in _split_terms(text):
        term = term.strip()
        if "*" in term:
            coef_txt, word_txt = term.rsplit("*", 1)
            coef = _parse_coeff(coef_txt)
        elif re.fullmatch(r"\(.*\)|" + _NUM + r"|[+-]?\d*\.?\d*[ij]", re.sub(r"\s+", "", term)):
            coef, word_txt = _parse_coeff(term), "1"
        else:
            coef, word_txt = 1.0, term
        word_txt = re.sub(r"\s+", "", word_txt)
        if word_txt == "1":
            w: Word = UNIT
        else:
            w = tuple(Letter.parse(part) for part in word_txt.split("."))
        acc[w] = acc.get(w, 0) + sign * coef
    return NCPoly(acc)
