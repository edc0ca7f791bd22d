"""Instance types for generalized moment problems with polynomial data.

A :class:`GmpInstance` bundles the objective, the moment constraints
``(h_i, b_i)``, and a :class:`SupportSet` describing the feasible set: a list
of equality polynomials, inequality polynomials, an optional enclosing-ball
radius, a declared real-radical flag, and the variable-block structure used
by sphere-product supports.

Complex-variable instances (quantum applications) are represented by
:class:`ComplexGmpInstance` and lowered to real instances by
:func:`complexify_to_real`.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .poly import Polynomial, poly_from_pairs

log = logging.getLogger(__name__)

__all__ = [
    "SupportSet",
    "GmpInstance",
    "ComplexPolynomial",
    "ComplexGmpInstance",
    "ValidationReport",
    "validate_instance",
    "add_ball_constraint",
    "compute_tmin",
    "complexify_to_real",
    "normalize_mass",
    "ball_polynomial",
    "sphere_polynomial",
    "instance_to_dict",
    "instance_from_dict",
    "save_instance",
    "load_instance",
    "instance_hash",
]


def ball_polynomial(nvars: int, radius: float) -> Polynomial:
    """R - ||x||^2 over all variables."""
    terms = {tuple([0] * nvars): radius}
    for i in range(nvars):
        exp = [0] * nvars
        exp[i] = 2
        terms[tuple(exp)] = -1
    return Polynomial(nvars, terms)


def sphere_polynomial(nvars: int, block: Sequence[int]) -> Polynomial:
    """1 - ||x_block||^2: the unit-sphere equation on one variable block."""
    terms = {tuple([0] * nvars): Fraction(1)}
    for i in block:
        exp = [0] * nvars
        exp[i] = 2
        terms[tuple(exp)] = Fraction(-1)
    return Polynomial(nvars, terms)


def _poly_close(p: Polynomial, q: Polynomial, tol: float = 1e-12) -> bool:
    exps = set(p.terms) | set(q.terms)
    return all(abs(float(p.coefficient(e)) - float(q.coefficient(e))) <= tol for e in exps)


@dataclass(frozen=True)
class SupportSet:
    """Semialgebraic support description: equalities, inequalities, ball, blocks."""

    equalities: tuple[Polynomial, ...] = ()
    inequalities: tuple[Polynomial, ...] = ()
    ball_radius: Optional[float] = None
    real_radical_declared: bool = False
    variable_blocks: tuple[tuple[int, ...], ...] = ()

    def is_sphere_product(self) -> bool:
        """True when the equalities are exactly the unit-sphere equations of the blocks."""
        if not self.equalities or not self.variable_blocks:
            return False
        if len(self.equalities) != len(self.variable_blocks):
            return False
        nvars = self.equalities[0].nvars
        covered: list[int] = []
        for eq, block in zip(self.equalities, self.variable_blocks):
            if eq != sphere_polynomial(nvars, block):
                return False
            covered.extend(block)
        return sorted(covered) == list(range(nvars))

    def ball_inequality(self) -> Optional[Polynomial]:
        if self.ball_radius is None:
            return None
        if not self.inequalities:
            return None
        return self.inequalities[0]


@dataclass(frozen=True)
class GmpInstance:
    """Objective, moment constraints (h_i, b_i), and the support set."""

    objective: Polynomial
    constraints: tuple[tuple[Polynomial, float], ...]
    support: SupportSet
    name: str = ""

    @property
    def nvars(self) -> int:
        return self.objective.nvars

    @property
    def h_polys(self) -> list[Polynomial]:
        return [h for h, _ in self.constraints]

    @property
    def b_values(self) -> np.ndarray:
        return np.array([b for _, b in self.constraints], dtype=float)

    def all_polynomials(self) -> list[Polynomial]:
        out = [self.objective]
        out.extend(self.h_polys)
        out.extend(self.support.inequalities)
        out.extend(self.support.equalities)
        return out


@dataclass
class ValidationCheck:
    name: str
    ok: bool
    severity: str  # "error" | "warning" | "info"
    detail: str


@dataclass
class ValidationReport:
    checks: list[ValidationCheck] = field(default_factory=list)

    def add(self, name: str, ok: bool, severity: str, detail: str) -> None:
        self.checks.append(ValidationCheck(name, ok, severity, detail))

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks if c.severity == "error")

    def failures(self) -> list[ValidationCheck]:
        return [c for c in self.checks if not c.ok and c.severity == "error"]

    def __str__(self) -> str:
        lines = []
        for c in self.checks:
            mark = "ok " if c.ok else ("WARN" if c.severity != "error" else "FAIL")
            lines.append(f"[{mark}] {c.name}: {c.detail}")
        lines.append(f"result: {'pass' if self.ok else 'fail'}")
        return "\n".join(lines)


def validate_instance(inst: GmpInstance) -> ValidationReport:
    """Check the standing assumptions an instance must satisfy before relaxation.

    Hard failures carry a remediation hint.  The variety-inside-ball condition
    is decided analytically for sphere products and otherwise recorded as
    declared-but-unverified, as is the real-radical flag.
    """
    rep = ValidationReport()
    sup = inst.support
    nvars = inst.nvars

    same = all(p.nvars == nvars for p in inst.all_polynomials())
    rep.add(
        "shared-varcount",
        same,
        "error",
        "all polynomials share one variable list"
        if same
        else "polynomials disagree on the variable count",
    )
    if not same:
        return rep

    if inst.constraints:
        h1, b1 = inst.constraints[0]
        one = Polynomial.constant(nvars, 1)
        ok = _poly_close(h1.to_float(), one.to_float())
        rep.add(
            "h1-is-one",
            ok,
            "error",
            "h1 == 1" if ok else "h1 must be the constant 1; reorder constraints",
        )
        rep.add(
            "b1-positive",
            b1 > 0,
            "error",
            f"b1 = {b1} > 0" if b1 > 0 else "b1 > 0 required (mass must be positive)",
        )
    else:
        rep.add("h1-is-one", False, "error", "no constraints; need h1 == 1 with b1 > 0")

    zero_data = [p for p in inst.h_polys if p.is_zero()]
    rep.add(
        "nonzero-constraints",
        not zero_data,
        "error",
        "no identically-zero constraint polynomials"
        if not zero_data
        else f"{len(zero_data)} constraint polynomial(s) identically zero; drop them",
    )

    sphere = sup.is_sphere_product()
    if sphere:
        rep.add(
            "ball-present",
            True,
            "info",
            "sphere-product support: explicit ball constraint unnecessary",
        )
        rep.add(
            "variety-inside-ball",
            True,
            "info",
            "sphere product is bounded analytically",
        )
    else:
        ball = sup.ball_inequality()
        ball_ok = (
            sup.ball_radius is not None
            and sup.ball_radius > 0
            and ball is not None
            and _poly_close(ball.to_float(), ball_polynomial(nvars, sup.ball_radius))
        )
        rep.add(
            "ball-present",
            ball_ok,
            "error",
            f"g1 = {sup.ball_radius} - ||x||^2 present"
            if ball_ok
            else "missing ball constraint; call add_ball_constraint(inst, R) with R "
            "exceeding sup ||x||^2 over the support",
        )
        if sup.equalities:
            shape_ok = len(sup.inequalities) <= 1
            rep.add(
                "equalities-shape",
                shape_ok,
                "error",
                "equality support carries at most the single ball inequality"
                if shape_ok
                else "with equality constraints, only the redundant ball inequality is allowed",
            )
            rep.add(
                "variety-inside-ball",
                True,
                "warning" if not ball_ok else "info",
                "variety-inside-ball condition declared, unverified (no general variety sampler)",
            )

    if sup.equalities:
        if sphere:
            rep.add("real-radical", True, "info", "sphere-product ideal is real radical")
        elif sup.real_radical_declared:
            rep.add("real-radical", True, "info", "real-radical flag declared, unverified")
        else:
            rep.add(
                "real-radical",
                True,
                "warning",
                "equalities present but real-radical not declared; reduced mode unavailable",
            )
    return rep


def add_ball_constraint(inst: GmpInstance, radius: float) -> GmpInstance:
    """Prepend the redundant ball inequality R - ||x||^2 to the support."""
    if radius <= 0:
        raise ValueError("ball radius must be positive")
    sup = inst.support
    if sup.is_sphere_product():
        raise ValueError(
            "sphere-product support needs no redundant ball constraint; refusing to add one"
        )
    if sup.ball_radius is not None:
        raise ValueError(f"ball constraint already present (R = {sup.ball_radius})")
    ball = ball_polynomial(inst.nvars, radius)
    new_sup = replace(
        sup,
        inequalities=(ball,) + sup.inequalities,
        ball_radius=float(radius),
    )
    return replace(inst, support=new_sup)


def _half_degree(p: Polynomial) -> int:
    return (p.total_degree() + 1) // 2


def compute_tmin(inst: GmpInstance) -> int:
    """Smallest admissible relaxation order: max over half-degrees of all data."""
    degrees = [_half_degree(p) for p in inst.all_polynomials() if not p.is_zero()]
    return max(degrees) if degrees else 0


def normalize_mass(inst: GmpInstance) -> tuple[GmpInstance, float]:
    """Rescale the targets so b1 = 1; returns the scale to restore values."""
    if not inst.constraints:
        raise ValueError("instance has no constraints")
    b1 = inst.constraints[0][1]
    if b1 <= 0:
        raise ValueError("b1 must be positive")
    if b1 == 1.0:
        return inst, 1.0
    scaled = tuple((h, b / b1) for h, b in inst.constraints)
    return replace(inst, constraints=scaled), float(b1)


# -- complex instances ---------------------------------------------------------


class ComplexPolynomial:
    """Polynomial in complex variables and their conjugates.

    Exponent vectors have length ``2 * nvars``: the first half indexes the
    variables, the second half their conjugates.  Coefficients are complex.
    """

    __slots__ = ("nvars", "terms")

    def __init__(self, nvars: int, terms=None):
        cleaned: dict[tuple[int, ...], complex] = {}
        if terms:
            for exp, c in terms.items():
                exp = tuple(int(e) for e in exp)
                if len(exp) != 2 * nvars:
                    raise ValueError(
                        f"exponent length {len(exp)} != 2 * nvars = {2 * nvars}"
                    )
                c = complex(c)
                if c != 0:
                    cleaned[exp] = cleaned.get(exp, 0) + c
        self.nvars = nvars
        self.terms = {e: c for e, c in cleaned.items() if c != 0}

    @classmethod
    def constant(cls, nvars: int, c) -> "ComplexPolynomial":
        return cls(nvars, {tuple([0] * (2 * nvars)): complex(c)})

    @classmethod
    def var(cls, nvars: int, j: int, conjugated: bool = False) -> "ComplexPolynomial":
        exp = [0] * (2 * nvars)
        exp[j + (nvars if conjugated else 0)] = 1
        return cls(nvars, {tuple(exp): 1.0})

    def conj(self) -> "ComplexPolynomial":
        n = self.nvars
        return ComplexPolynomial(
            n,
            {e[n:] + e[:n]: c.conjugate() for e, c in self.terms.items()},
        )

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        other = self.conj()
        exps = set(self.terms) | set(other.terms)
        return all(
            abs(self.terms.get(e, 0) - other.terms.get(e, 0)) <= tol for e in exps
        )

    def __add__(self, other):
        if not isinstance(other, ComplexPolynomial):
            other = ComplexPolynomial.constant(self.nvars, other)
        terms = dict(self.terms)
        for e, c in other.terms.items():
            terms[e] = terms.get(e, 0) + c
        return ComplexPolynomial(self.nvars, terms)

    def __sub__(self, other):
        if not isinstance(other, ComplexPolynomial):
            other = ComplexPolynomial.constant(self.nvars, other)
        return self + (other * -1)

    def __mul__(self, other):
        if not isinstance(other, ComplexPolynomial):
            c = complex(other)
            return ComplexPolynomial(
                self.nvars, {e: v * c for e, v in self.terms.items()}
            )
        terms: dict[tuple[int, ...], complex] = {}
        for ea, ca in self.terms.items():
            for eb, cb in other.terms.items():
                exp = tuple(a + b for a, b in zip(ea, eb))
                terms[exp] = terms.get(exp, 0) + ca * cb
        return ComplexPolynomial(self.nvars, terms)

    __rmul__ = __mul__

    def evaluate(self, point: Sequence[complex]) -> complex:
        z = np.asarray(point, dtype=complex)
        total = 0j
        for exp, c in self.terms.items():
            term = c
            for j in range(self.nvars):
                if exp[j]:
                    term *= z[j] ** exp[j]
                if exp[self.nvars + j]:
                    term *= np.conj(z[j]) ** exp[self.nvars + j]
            total += term
        return complex(total)

    def __repr__(self) -> str:
        return f"ComplexPolynomial(nvars={self.nvars}, {len(self.terms)} terms)"


@dataclass(frozen=True)
class ComplexGmpInstance:
    """GMP over products of complex spheres, prior to real conversion."""

    blocks: tuple[int, ...]  # complex dimension of each sphere factor
    objective: ComplexPolynomial
    constraints: tuple[tuple[ComplexPolynomial, complex], ...]
    name: str = ""

    @property
    def nvars(self) -> int:
        return sum(self.blocks)


def _realify(cpoly: ComplexPolynomial, blocks: Sequence[int]) -> tuple[Polynomial, Polynomial]:
    """Split a complex polynomial into real and imaginary real-variable parts.

    Complex block l of dimension d maps to 2d real variables laid out as
    (Re_1..Re_d, Im_1..Im_d), so each complex sphere becomes a real sphere of
    doubled dimension.
    """
    nc = cpoly.nvars
    if sum(blocks) != nc:
        raise ValueError("block sizes do not sum to the complex variable count")
    nreal = 2 * nc
    re_off: list[int] = []
    im_off: list[int] = []
    off = 0
    for d in blocks:
        for k in range(d):
            re_off.append(off + k)
            im_off.append(off + d + k)
        off += 2 * d

    # per complex variable j, precompute expansions of (xR + i xI)^a (xR - i xI)^b
    def var_factor(j: int, a: int, b: int) -> dict[tuple[int, int], complex]:
        out: dict[tuple[int, int], complex] = {(0, 0): 1.0 + 0j}
        for conjugate, power in ((False, a), (True, b)):
            sign = -1j if conjugate else 1j
            for _ in range(power):
                nxt: dict[tuple[int, int], complex] = {}
                for (er, ei), c in out.items():
                    nxt[(er + 1, ei)] = nxt.get((er + 1, ei), 0) + c
                    nxt[(er, ei + 1)] = nxt.get((er, ei + 1), 0) + c * sign
                out = nxt
        return out

    acc: dict[tuple[int, ...], complex] = {}
    for exp, coeff in cpoly.terms.items():
        partial: dict[tuple[int, ...], complex] = {tuple([0] * nreal): coeff}
        for j in range(nc):
            a, b = exp[j], exp[nc + j]
            if a == 0 and b == 0:
                continue
            factor = var_factor(j, a, b)
            nxt: dict[tuple[int, ...], complex] = {}
            for rexp, c in partial.items():
                for (er, ei), fc in factor.items():
                    lst = list(rexp)
                    lst[re_off[j]] += er
                    lst[im_off[j]] += ei
                    key = tuple(lst)
                    nxt[key] = nxt.get(key, 0) + c * fc
            partial = nxt
        for rexp, c in partial.items():
            acc[rexp] = acc.get(rexp, 0) + c

    re_terms = {e: c.real for e, c in acc.items() if abs(c.real) > 1e-14}
    im_terms = {e: c.imag for e, c in acc.items() if abs(c.imag) > 1e-14}
    return Polynomial(nreal, re_terms), Polynomial(nreal, im_terms)


def complexify_to_real(cinst: ComplexGmpInstance, name: str = "") -> GmpInstance:
    """Lower a complex-sphere GMP to an equivalent real instance.

    Each complex constraint contributes its real and imaginary parts with
    targets Re(b), Im(b); parts whose polynomial is identically zero are
    dropped (a nonzero target on a dropped part is an inconsistency and
    raises).  Complex spheres become real spheres of doubled dimension and
    the real-radical flag is set.
    """
    if not cinst.objective.is_hermitian():
        raise ValueError("objective is not Hermitian")
    f_re, f_im = _realify(cinst.objective, cinst.blocks)
    if not f_im.is_zero() and f_im.max_abs_coeff() > 1e-10:
        raise ValueError("Hermitian objective produced a nonzero imaginary part")

    constraints: list[tuple[Polynomial, float]] = []
    dropped = 0
    for idx, (h, b) in enumerate(cinst.constraints):
        b = complex(b)
        h_re, h_im = _realify(h, cinst.blocks)
        for part, target, tag in ((h_re, b.real, "Re"), (h_im, b.imag, "Im")):
            if part.is_zero():
                if abs(target) > 1e-12:
                    raise ValueError(
                        f"constraint {idx}: {tag} part vanishes identically but the "
                        f"target is {target}"
                    )
                dropped += 1
                continue
            constraints.append((part, float(target)))
    if dropped:
        log.info("complexify_to_real: dropped %d identically-zero constraint parts", dropped)

    real_blocks = []
    off = 0
    for d in cinst.blocks:
        real_blocks.append(tuple(range(off, off + 2 * d)))
        off += 2 * d
    nreal = off
    support = SupportSet(
        equalities=tuple(sphere_polynomial(nreal, blk) for blk in real_blocks),
        inequalities=(),
        ball_radius=None,
        real_radical_declared=True,
        variable_blocks=tuple(real_blocks),
    )
    return GmpInstance(
        objective=f_re,
        constraints=tuple(constraints),
        support=support,
        name=name or (cinst.name + "-real" if cinst.name else ""),
    )


# -- JSON problem files ---------------------------------------------------------


def _coeff_to_json(c):
    if isinstance(c, Fraction):
        if c.denominator == 1:
            return int(c)
        return f"{c.numerator}/{c.denominator}"
    return float(c)


def _poly_to_json(p: Polynomial):
    return [[list(e), _coeff_to_json(c)] for e, c in p.items_grlex(descending=True)]


def instance_to_dict(inst: GmpInstance) -> dict:
    sup = inst.support
    return {
        "version": 1,
        "name": inst.name,
        "variables": {
            "names": [f"x{i + 1}" for i in range(inst.nvars)],
            "blocks": [list(b) for b in sup.variable_blocks],
        },
        "objective": _poly_to_json(inst.objective),
        "constraints": [
            {"h": _poly_to_json(h), "b": float(b)} for h, b in inst.constraints
        ],
        "support": {
            "equalities": [_poly_to_json(p) for p in sup.equalities],
            "inequalities": [_poly_to_json(p) for p in sup.inequalities],
            "ball_radius": sup.ball_radius,
            "real_radical": sup.real_radical_declared,
        },
    }


def instance_from_dict(data: dict) -> GmpInstance:
    if data.get("complex"):
        raise ValueError(
            "complex problem files must be converted with complexify_to_real "
            "(use the quantum builders or load_complex_instance)"
        )
    nvars = len(data["variables"]["names"])
    objective = poly_from_pairs(nvars, data["objective"])
    constraints = tuple(
        (poly_from_pairs(nvars, c["h"]), float(c["b"])) for c in data["constraints"]
    )
    sup = data.get("support", {})
    support = SupportSet(
        equalities=tuple(poly_from_pairs(nvars, p) for p in sup.get("equalities", [])),
        inequalities=tuple(
            poly_from_pairs(nvars, p) for p in sup.get("inequalities", [])
        ),
        ball_radius=sup.get("ball_radius"),
        real_radical_declared=bool(sup.get("real_radical", False)),
        variable_blocks=tuple(
            tuple(b) for b in data["variables"].get("blocks", [])
        ),
    )
    return GmpInstance(
        objective=objective,
        constraints=constraints,
        support=support,
        name=data.get("name", ""),
    )


def save_instance(inst: GmpInstance, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(instance_to_dict(inst), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_instance(path) -> GmpInstance:
    with open(path, "r", encoding="utf-8") as fh:
        return instance_from_dict(json.load(fh))


def instance_hash(inst: GmpInstance) -> str:
    """Stable content hash embedded in reports for reproducibility."""
    blob = json.dumps(instance_to_dict(inst), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]
