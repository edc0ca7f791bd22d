"""Truncated quotient-ring machinery for graded Gröbner systems.

Given a verified Gröbner basis G and a degree cap, this module builds the
standard-monomial basis (monomials not divisible by any leading monomial of
G), exact normal-form coefficient vectors for every monomial up to the cap,
the coefficient matrix U whose columns are those vectors, and the reduced
pseudo-moment and localizing matrices assembled from a reduced sequence.

Normal forms are kept in exact rational arithmetic; floats appear only when
matrices are handed to the SDP layer.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .poly import (
    Exponent,
    Polynomial,
    count_monomials_upto,
    grlex_key,
    monomials_upto,
    multivariate_divide,
    verify_groebner,
)

__all__ = ["QuotientBasis", "standard_monomial_basis", "dump_basis"]


class QuotientBasis:
    """Standard-monomial basis of R[x]_L / I_L with a normal-form cache.

    ``basis`` is grlex ascending, so the degree-<=d members form a prefix for
    every d <= level; this is what lets U_d be a literal leading submatrix of
    U_level.  The cache maps each monomial of degree <= level to the exact
    coefficient vector of its residue, stored sparsely as {basis index: Fraction}.
    """

    def __init__(self, generators: Sequence[Polynomial], level: int, *, _trusted: bool = False):
        if level < 0:
            raise ValueError("level must be nonnegative")
        gens = [g.to_exact() for g in generators if not g.is_zero()]
        if gens and not _trusted:
            report = verify_groebner(gens)
            if not report.ok:
                raise ValueError(
                    "generators are not a Gröbner basis; offending pair "
                    f"{report.pair} leaves remainder {report.witness!r}"
                )
        if gens:
            nvars = gens[0].nvars
        else:
            raise ValueError("need at least one generator or an explicit variable count")
        self.generators = gens
        self.level = level
        self.nvars = nvars
        self._leads = [g.leading_monomial() for g in gens]
        all_monomials = monomials_upto(nvars, level)
        self.basis: list[Exponent] = [
            m for m in all_monomials if not self._reducible(m)
        ]
        if not self.basis:
            raise ValueError(
                "empty standard-monomial basis: 1 lies in the ideal (empty variety)"
            )
        self.index = {m: i for i, m in enumerate(self.basis)}
        self._nf_cache: dict[Exponent, dict[int, Fraction]] = {}

    @classmethod
    def trivial(cls, nvars: int, level: int) -> "QuotientBasis":
        """Quotient by the zero ideal: the basis is all of N^n_level."""
        qb = object.__new__(cls)
        qb.generators = []
        qb.level = level
        qb.nvars = nvars
        qb._leads = []
        qb.basis = monomials_upto(nvars, level)
        qb.index = {m: i for i, m in enumerate(qb.basis)}
        qb._nf_cache = {}
        return qb

    # -- sizes ---------------------------------------------------------------

    @property
    def size(self) -> int:
        return len(self.basis)

    def rank_at(self, degree: int) -> int:
        """r_d: number of basis monomials of degree <= d."""
        if degree > self.level:
            raise ValueError(f"degree {degree} exceeds level {self.level}")
        return sum(1 for m in self.basis if sum(m) <= degree)

    def basis_at(self, degree: int) -> list[Exponent]:
        return self.basis[: self.rank_at(degree)]

    # -- normal forms ----------------------------------------------------------

    def _reducible(self, monomial: Exponent) -> bool:
        return any(
            all(a <= b for a, b in zip(lead, monomial)) for lead in self._leads
        )

    def normal_form_monomial(self, monomial: Exponent) -> dict[int, Fraction]:
        """Sparse c-vector of x^monomial modulo the ideal truncation."""
        monomial = tuple(monomial)
        if sum(monomial) > self.level:
            raise ValueError(
                f"monomial degree {sum(monomial)} exceeds level {self.level}"
            )
        hit = self._nf_cache.get(monomial)
        if hit is not None:
            return hit
        if monomial in self.index:
            vec = {self.index[monomial]: Fraction(1)}
        else:
            _, rem = multivariate_divide(
                Polynomial.monomial(self.nvars, monomial, 1), self.generators
            )
            vec = {}
            for exp, c in rem.terms.items():
                vec[self.index[exp]] = Fraction(c)
        self._nf_cache[monomial] = vec
        return vec

    def normal_form_coeffs(self, p: Polynomial) -> list[Fraction]:
        """Exact residue coefficients of ``p`` in the basis, length r_level."""
        if p.is_zero():
            return [Fraction(0)] * self.size
        if p.total_degree() > self.level:
            raise ValueError(
                f"degree {p.total_degree()} exceeds quotient level {self.level}"
            )
        out = [Fraction(0)] * self.size
        for exp, c in p.to_exact().terms.items():
            for i, ci in self.normal_form_monomial(exp).items():
                out[i] += c * ci
        return out

    def normal_form_coeffs_float(self, p: Polynomial) -> np.ndarray:
        if p.is_zero():
            return np.zeros(self.size)
        if p.total_degree() > self.level:
            raise ValueError(
                f"degree {p.total_degree()} exceeds quotient level {self.level}"
            )
        out = np.zeros(self.size)
        for exp, c in p.terms.items():
            for i, ci in self.normal_form_monomial(exp).items():
                out[i] += float(c) * float(ci)
        return out

    # -- U matrices -------------------------------------------------------------

    def u_matrix_exact(self, degree: Optional[int] = None) -> list[list[Fraction]]:
        """U_degree as dense rows of Fractions (r_degree x |N^n_degree|)."""
        degree = self.level if degree is None else degree
        rows = self.rank_at(degree)
        cols = monomials_upto(self.nvars, degree)
        U = [[Fraction(0)] * len(cols) for _ in range(rows)]
        for j, mono in enumerate(cols):
            for i, c in self.normal_form_monomial(mono).items():
                if i < rows:
                    U[i][j] = c
                elif c != 0:
                    raise AssertionError(
                        "residue of a degree-compatible monomial left the degree cut"
                    )
        return U

    def u_matrix(self, degree: Optional[int] = None) -> np.ndarray:
        degree = self.level if degree is None else degree
        rows = self.rank_at(degree)
        cols = monomials_upto(self.nvars, degree)
        U = np.zeros((rows, len(cols)))
        for j, mono in enumerate(cols):
            for i, c in self.normal_form_monomial(mono).items():
                U[i, j] = float(c)
        return U

    # -- sequence handling --------------------------------------------------------

    def extend_sequence(self, zhat: np.ndarray, degree: Optional[int] = None) -> np.ndarray:
        """Extend a reduced sequence to the full monomial index: z = U^T zhat."""
        degree = self.level if degree is None else degree
        zhat = np.asarray(zhat, dtype=float)
        rows = self.rank_at(degree)
        if zhat.shape != (rows,):
            raise ValueError(f"expected reduced sequence of length {rows}, got {zhat.shape}")
        return self.u_matrix(degree).T @ zhat

    def reduced_riesz(self, zhat: np.ndarray, p: Polynomial) -> float:
        """L-hat_zhat(p) via the residue coefficients of p."""
        zhat = np.asarray(zhat, dtype=float)
        return float(self.normal_form_coeffs_float(p) @ zhat)

    def product_residue(self, *monomials: Exponent) -> dict[int, Fraction]:
        total = tuple(int(sum(es)) for es in zip(*monomials))
        return self.normal_form_monomial(total)

    def reduced_moment_matrix(self, zhat: np.ndarray, t: int) -> np.ndarray:
        """Reduced pseudo-moment matrix of size r_t from a level-2t sequence."""
        if 2 * t > self.level:
            raise ValueError(f"need level >= {2 * t}, have {self.level}")
        zhat = np.asarray(zhat, dtype=float)
        if zhat.shape != (self.size,):
            raise ValueError(
                f"reduced sequence must have length {self.size}, got {zhat.shape}"
            )
        r = self.rank_at(t)
        M = np.zeros((r, r))
        for i in range(r):
            for j in range(i, r):
                vec = self.product_residue(self.basis[i], self.basis[j])
                val = sum(float(c) * zhat[e] for e, c in vec.items())
                M[i, j] = M[j, i] = val
        return M

    def reduced_localizing_matrix(
        self, g: Polynomial, zhat: np.ndarray, t: int
    ) -> np.ndarray:
        """Reduced localizing matrix of g at block size r_{t - ceil(deg g / 2)}."""
        if 2 * t > self.level:
            raise ValueError(f"need level >= {2 * t}, have {self.level}")
        zhat = np.asarray(zhat, dtype=float)
        if zhat.shape != (self.size,):
            raise ValueError(
                f"reduced sequence must have length {self.size}, got {zhat.shape}"
            )
        if g.is_zero():
            r = self.rank_at(t)
            return np.zeros((r, r))
        tg = (g.total_degree() + 1) // 2
        if tg > t:
            raise ValueError(f"deg g = {g.total_degree()} exceeds 2t = {2 * t}")
        g = g.to_exact()
        r = self.rank_at(t - tg)
        M = np.zeros((r, r))
        for i in range(r):
            for j in range(i, r):
                val = 0.0
                for gexp, gc in g.terms.items():
                    vec = self.product_residue(self.basis[i], self.basis[j], gexp)
                    val += float(gc) * sum(float(c) * zhat[e] for e, c in vec.items())
                M[i, j] = M[j, i] = val
        return M

    def __repr__(self) -> str:
        return (
            f"QuotientBasis(level={self.level}, nvars={self.nvars}, "
            f"r={self.size}, generators={len(self.generators)})"
        )


def standard_monomial_basis(
    generators: Sequence[Polynomial], level: int, nvars: Optional[int] = None
) -> QuotientBasis:
    """Build the standard-monomial basis at the given degree cap.

    An empty generator list (or only zero polynomials) means the zero ideal,
    for which the basis is all monomials; ``nvars`` is then required.
    """
    gens = [g for g in generators if not g.is_zero()]
    if not gens:
        if nvars is None:
            raise ValueError("nvars required for the zero ideal")
        return QuotientBasis.trivial(nvars, level)
    return QuotientBasis(gens, level)


def dump_basis(qb: QuotientBasis, degree: Optional[int] = None) -> str:
    """Golden-file dump: ordered monomial list plus dense exact U rows."""
    degree = qb.level if degree is None else degree
    lines = [f"level {degree}  r {qb.rank_at(degree)}  columns {count_monomials_upto(qb.nvars, degree)}"]
    lines.append("basis " + " ".join("".join(map(str, m)) for m in qb.basis_at(degree)))
    for row in qb.u_matrix_exact(degree):
        lines.append(" ".join(str(c) for c in row))
    return "\n".join(lines) + "\n"
