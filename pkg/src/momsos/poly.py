"""Sparse multivariate polynomial arithmetic under the graded lexicographic order.

Coefficients live in one of two modes: exact ``fractions.Fraction`` (used by
everything that feeds the quotient-ring machinery, where normal forms must be
exact) or ``float`` (used for data that ends up inside semidefinite programs).
Integers are promoted to ``Fraction`` on construction; operations preserve the
mode of their inputs.

The monomial order is graded lex with variable priority ``x1 > x2 > ... > xn``:
lower total degree compares smaller, ties are broken lexicographically on the
exponent vector.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Iterable, Iterator, Mapping, Optional, Sequence, Union

import numpy as np

Exponent = tuple[int, ...]
Coeff = Union[Fraction, float]

__all__ = [
    "Polynomial",
    "GroebnerReport",
    "grlex_compare",
    "grlex_key",
    "monomials_upto",
    "count_monomials_upto",
    "multivariate_divide",
    "s_polynomial",
    "verify_groebner",
    "format_polynomial",
    "poly_to_pairs",
    "poly_from_pairs",
]


def grlex_key(exponent: Sequence[int]) -> tuple:
    """Sort key realizing graded lex ascending (x1 heaviest on ties)."""
    return (sum(exponent), tuple(exponent))


def grlex_compare(a: Sequence[int], b: Sequence[int]) -> int:
    """Compare exponent vectors, returning -1, 0 or 1.

    Degree decides first; equal degrees fall back to lexicographic comparison
    of the exponent tuples, which makes x1 the heaviest variable.
    """
    if len(a) != len(b):
        raise ValueError(f"exponent length mismatch: {len(a)} vs {len(b)}")
    ka, kb = grlex_key(a), grlex_key(b)
    return (ka > kb) - (ka < kb)


def monomials_upto(nvars: int, degree: int) -> list[Exponent]:
    """All exponent vectors of total degree <= degree, grlex ascending."""
    out: list[Exponent] = []
    for d in range(degree + 1):
        bucket: list[Exponent] = []

        def rec(prefix: list[int], remaining: int, slots: int) -> None:
            if slots == 0:
                if remaining == 0:
                    bucket.append(tuple(prefix))
                return
            if slots == 1:
                bucket.append(tuple(prefix + [remaining]))
                return
            for e in range(remaining + 1):
                rec(prefix + [e], remaining - e, slots - 1)

        rec([], d, nvars)
        bucket.sort(key=grlex_key)
        out.extend(bucket)
    return out


def count_monomials_upto(nvars: int, degree: int) -> int:
    """|N^n_d| without enumeration."""
    from math import comb

    return comb(nvars + degree, nvars)


def _coerce(c) -> Coeff:
    if isinstance(c, Fraction):
        return c
    if isinstance(c, bool):
        raise TypeError("bool is not a polynomial coefficient")
    if isinstance(c, int):
        return Fraction(c)
    if isinstance(c, float):
        return c
    if isinstance(c, np.floating):
        return float(c)
    if isinstance(c, np.integer):
        return Fraction(int(c))
    raise TypeError(f"unsupported coefficient type {type(c)!r}")


class Polynomial:
    """Immutable sparse polynomial: map from exponent vector to nonzero coefficient."""

    __slots__ = ("nvars", "terms")

    def __init__(self, nvars: int, terms: Optional[Mapping[Exponent, Coeff]] = None):
        cleaned: dict[Exponent, Coeff] = {}
        if terms:
            for exp, c in terms.items():
                exp = tuple(int(e) for e in exp)
                if len(exp) != nvars:
                    raise ValueError(
                        f"exponent {exp} has length {len(exp)}, expected {nvars}"
                    )
                if any(e < 0 for e in exp):
                    raise ValueError(f"negative exponent in {exp}")
                c = _coerce(c)
                if c != 0:
                    cleaned[exp] = c
        object.__setattr__(self, "nvars", nvars)
        object.__setattr__(self, "terms", cleaned)

    def __setattr__(self, *arg):  # immutability by convention
        raise AttributeError("Polynomial is immutable")

    # -- constructors -------------------------------------------------------

    @classmethod
    def zero(cls, nvars: int) -> "Polynomial":
        return cls(nvars, {})

    @classmethod
    def constant(cls, nvars: int, c) -> "Polynomial":
        return cls(nvars, {tuple([0] * nvars): c})

    @classmethod
    def variable(cls, nvars: int, index: int) -> "Polynomial":
        exp = [0] * nvars
        exp[index] = 1
        return cls(nvars, {tuple(exp): 1})

    @classmethod
    def monomial(cls, nvars: int, exponent: Sequence[int], c=1) -> "Polynomial":
        return cls(nvars, {tuple(exponent): c})

    # -- basic queries -------------------------------------------------------

    def is_zero(self) -> bool:
        return not self.terms

    def __bool__(self) -> bool:
        return bool(self.terms)

    def total_degree(self) -> int:
        """Total degree; undefined (raises) for the zero polynomial."""
        if not self.terms:
            raise ValueError("degree of the zero polynomial is undefined")
        return max(sum(e) for e in self.terms)

    def leading_term(self) -> tuple[Coeff, Exponent]:
        """Coefficient and exponent of the grlex-maximal term."""
        if not self.terms:
            raise ValueError("the zero polynomial has no leading term")
        exp = max(self.terms, key=grlex_key)
        return self.terms[exp], exp

    def leading_monomial(self) -> Exponent:
        """Sign-stripped leading monomial; divisibility tests use this."""
        return self.leading_term()[1]

    def coefficient(self, exponent: Sequence[int]) -> Coeff:
        return self.terms.get(tuple(exponent), 0)

    def items_grlex(self, descending: bool = True) -> list[tuple[Exponent, Coeff]]:
        exps = sorted(self.terms, key=grlex_key, reverse=descending)
        return [(e, self.terms[e]) for e in exps]

    # -- arithmetic ----------------------------------------------------------

    def _check_same_ring(self, other: "Polynomial") -> None:
        if self.nvars != other.nvars:
            raise ValueError(
                f"variable count mismatch: {self.nvars} vs {other.nvars}"
            )

    def __add__(self, other) -> "Polynomial":
        if not isinstance(other, Polynomial):
            other = Polynomial.constant(self.nvars, other)
        self._check_same_ring(other)
        terms = dict(self.terms)
        for exp, c in other.terms.items():
            terms[exp] = terms.get(exp, 0) + c
        return Polynomial(self.nvars, terms)

    def __radd__(self, other) -> "Polynomial":
        return self.__add__(other)

    def __neg__(self) -> "Polynomial":
        return Polynomial(self.nvars, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other) -> "Polynomial":
        if not isinstance(other, Polynomial):
            other = Polynomial.constant(self.nvars, other)
        return self.__add__(-other)

    def __rsub__(self, other) -> "Polynomial":
        return (-self).__add__(other)

    def __mul__(self, other) -> "Polynomial":
        if not isinstance(other, Polynomial):
            c = _coerce(other)
            if c == 0:
                return Polynomial.zero(self.nvars)
            return Polynomial(self.nvars, {e: v * c for e, v in self.terms.items()})
        self._check_same_ring(other)
        terms: dict[Exponent, Coeff] = {}
        for ea, ca in self.terms.items():
            for eb, cb in other.terms.items():
                exp = tuple(a + b for a, b in zip(ea, eb))
                terms[exp] = terms.get(exp, 0) + ca * cb
        return Polynomial(self.nvars, terms)

    def __rmul__(self, other) -> "Polynomial":
        return self.__mul__(other)

    def __pow__(self, k: int) -> "Polynomial":
        if k < 0:
            raise ValueError("negative polynomial power")
        result = Polynomial.constant(self.nvars, 1)
        base = self
        while k:
            if k & 1:
                result = result * base
            base = base * base if k > 1 else base
            k >>= 1
        return result

    def __eq__(self, other) -> bool:
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.nvars == other.nvars and self.terms == other.terms

    def __hash__(self):
        return hash((self.nvars, frozenset(self.terms.items())))

    # -- conversions ---------------------------------------------------------

    def to_float(self) -> "Polynomial":
        return Polynomial(self.nvars, {e: float(c) for e, c in self.terms.items()})

    def to_exact(self) -> "Polynomial":
        """Promote float coefficients to their exact binary Fraction value."""
        return Polynomial(
            self.nvars,
            {
                e: (c if isinstance(c, Fraction) else Fraction(c))
                for e, c in self.terms.items()
            },
        )

    def max_abs_coeff(self) -> float:
        return max((abs(float(c)) for c in self.terms.values()), default=0.0)

    # -- evaluation ----------------------------------------------------------

    def evaluate(self, point: Sequence[float]) -> float:
        x = np.asarray(point, dtype=float)
        total = 0.0
        for exp, c in self.terms.items():
            term = float(c)
            for xi, e in zip(x, exp):
                if e:
                    term *= xi**e
            total += term
        return total

    def evaluate_batch(self, points: np.ndarray) -> np.ndarray:
        """Evaluate at many points; ``points`` has shape (N, nvars)."""
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != self.nvars:
            raise ValueError(f"points must have shape (N, {self.nvars})")
        vals = np.zeros(pts.shape[0])
        for exp, c in self.terms.items():
            term = np.full(pts.shape[0], float(c))
            for j, e in enumerate(exp):
                if e:
                    term *= pts[:, j] ** e
            vals += term
        return vals

    def __repr__(self) -> str:
        return f"Polynomial({format_polynomial(self)})"


# -- multivariate division and the Buchberger check ---------------------------


def _monomial_divides(a: Exponent, b: Exponent) -> bool:
    return all(x <= y for x, y in zip(a, b))


def multivariate_divide(
    p: Polynomial, divisors: Sequence[Polynomial]
) -> tuple[list[Polynomial], Polynomial]:
    """Divide ``p`` by an ordered list of divisors under grlex.

    Returns quotients ``phi`` and remainder ``psi`` with
    ``p = sum(phi[l] * divisors[l]) + psi`` and no monomial of ``psi``
    divisible by any leading monomial of the divisors.  The order is
    degree-compatible, so ``deg(phi[l] * divisors[l]) <= deg(p)``.
    """
    if any(g.is_zero() for g in divisors):
        raise ValueError("division by a list containing the zero polynomial")
    nvars = p.nvars
    for g in divisors:
        if g.nvars != nvars:
            raise ValueError("variable count mismatch in division")
    leads = [g.leading_term() for g in divisors]
    quotients = [dict() for _ in divisors]
    remainder: dict[Exponent, Coeff] = {}
    work = dict(p.terms)
    while work:
        exp = max(work, key=grlex_key)
        coeff = work.pop(exp)
        if coeff == 0:
            continue
        for l, (lc, lm) in enumerate(leads):
            if _monomial_divides(lm, exp):
                factor_exp = tuple(a - b for a, b in zip(exp, lm))
                factor_coeff = coeff / lc
                quotients[l][factor_exp] = quotients[l].get(factor_exp, 0) + factor_coeff
                for ge, gc in divisors[l].terms.items():
                    if ge == lm:
                        continue
                    tgt = tuple(a + b for a, b in zip(factor_exp, ge))
                    newc = work.get(tgt, 0) - factor_coeff * gc
                    if newc == 0:
                        work.pop(tgt, None)
                    else:
                        work[tgt] = newc
                break
        else:
            remainder[exp] = remainder.get(exp, 0) + coeff
    return (
        [Polynomial(nvars, q) for q in quotients],
        Polynomial(nvars, remainder),
    )


def s_polynomial(p: Polynomial, q: Polynomial) -> Polynomial:
    """S-polynomial: the lcm combination canceling both leading terms."""
    if p.is_zero() or q.is_zero():
        raise ValueError("S-polynomial of a zero polynomial is undefined")
    p._check_same_ring(q)
    cp, mp = p.leading_term()
    cq, mq = q.leading_term()
    lcm = tuple(max(a, b) for a, b in zip(mp, mq))
    fp = Polynomial.monomial(p.nvars, tuple(a - b for a, b in zip(lcm, mp)), 1 / cp)
    fq = Polynomial.monomial(q.nvars, tuple(a - b for a, b in zip(lcm, mq)), 1 / cq)
    return fp * p - fq * q


class GroebnerReport:
    """Outcome of the S-polynomial reduction check, with a witness on failure."""

    __slots__ = ("ok", "pair", "witness")

    def __init__(self, ok: bool, pair=None, witness: Optional[Polynomial] = None):
        self.ok = ok
        self.pair = pair
        self.witness = witness

    def __bool__(self) -> bool:
        return self.ok

    def __repr__(self) -> str:
        if self.ok:
            return "GroebnerReport(ok=True)"
        return f"GroebnerReport(ok=False, pair={self.pair}, witness={self.witness!r})"


def verify_groebner(generators: Sequence[Polynomial]) -> GroebnerReport:
    """Check whether the given set is a Gröbner basis of the ideal it generates.

    Every S-polynomial must reduce to zero by the set.  Pairs whose leading
    monomials are coprime are skipped (their S-polynomial always reduces to
    zero), which settles sphere-product systems without any division work.
    On failure the offending pair and the monic nonzero remainder are
    returned as a witness.
    """
    if not generators:
        raise ValueError("empty generating set")
    if any(g.is_zero() for g in generators):
        raise ValueError("zero polynomial in generating set")
    gens = [g.to_exact() for g in generators]
    leads = [g.leading_monomial() for g in gens]
    for i in range(len(gens)):
        for j in range(i + 1, len(gens)):
            if all(a == 0 or b == 0 for a, b in zip(leads[i], leads[j])):
                continue  # coprime leading monomials
            spoly = s_polynomial(gens[i], gens[j])
            if spoly.is_zero():
                continue
            _, rem = multivariate_divide(spoly, gens)
            if not rem.is_zero():
                lc, _ = rem.leading_term()
                monic = rem * (Fraction(1) / lc)
                return GroebnerReport(False, (i, j), monic)
    return GroebnerReport(True)


# -- text format ---------------------------------------------------------------


def poly_to_pairs(p: Polynomial) -> list[tuple[list[int], Coeff]]:
    """Canonical pair list, grlex descending."""
    return [(list(e), c) for e, c in p.items_grlex(descending=True)]


def poly_from_pairs(nvars: int, pairs: Iterable[Sequence]) -> Polynomial:
    terms: dict[Exponent, Coeff] = {}
    for exp, c in pairs:
        exp = tuple(int(e) for e in exp)
        terms[exp] = terms.get(exp, 0) + _parse_coeff(c)
    return Polynomial(nvars, terms)


def _parse_coeff(c) -> Coeff:
    if isinstance(c, str):
        return Fraction(c)
    if isinstance(c, bool):
        raise TypeError("bool coefficient")
    if isinstance(c, int):
        return Fraction(c)
    if isinstance(c, float):
        return float(c)
    raise TypeError(f"cannot parse coefficient {c!r}")


def default_names(nvars: int) -> list[str]:
    return [f"x{i + 1}" for i in range(nvars)]


def format_polynomial(p: Polynomial, names: Optional[Sequence[str]] = None) -> str:
    """Human-readable form, terms in grlex-descending order."""
    if p.is_zero():
        return "0"
    names = list(names) if names else default_names(p.nvars)
    chunks = []
    for exp, c in p.items_grlex(descending=True):
        factors = []
        for name, e in zip(names, exp):
            if e == 1:
                factors.append(name)
            elif e > 1:
                factors.append(f"{name}^{e}")
        cs = str(c) if isinstance(c, Fraction) else repr(float(c))
        if factors and cs == "1":
            body = "*".join(factors)
        elif factors and cs == "-1":
            body = "-" + "*".join(factors)
        else:
            body = "*".join([cs] + factors) if factors else cs
        chunks.append(body)
    text = chunks[0]
    for chunk in chunks[1:]:
        if chunk.startswith("-"):
            text += " - " + chunk[1:]
        else:
            text += " + " + chunk
    return text
