"""Assembly of moment relaxations and SOS strengthenings as block SDPs.

Every program is expressed in one standard form over PSD matrix blocks X_k
and a free vector y:

    minimize / maximize   sum_k <C_k, X_k> + c_free . y
    subject to            sum_k <A_ik, X_k> + (B y)_i = rhs_i
                          X_k PSD (dense "sdp" blocks or entrywise "diag" blocks)

The moment side uses free variables for the pseudo-moment sequence and ties
each moment/localizing matrix entry to it with scalar equalities; zero blocks
from ideal generators become pure equality rows on distinct shifted-sequence
entries.  The SOS side uses Gram matrix blocks plus free multipliers and
matches coefficients monomial by monomial (residue by residue in reduced
mode).  A shared global grlex monomial index keeps primal moments and dual
certificates aligned entry for entry.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .model import GmpInstance, compute_tmin, instance_hash, validate_instance
from .poly import Exponent, Polynomial, monomials_upto
from .quotient import QuotientBasis, standard_monomial_basis

__all__ = [
    "Block",
    "SdpProblem",
    "moment_matrix",
    "localizing_matrix",
    "build_moment_relaxation",
    "build_sos_strengthening",
    "build_sos_custom",
    "build_reduced_relaxation",
    "export_sdp_text",
]


@dataclass
class Block:
    kind: str  # "sdp" or "diag"
    size: int
    label: str = ""
    basis: Optional[list[Exponent]] = None  # monomial basis for moment/Gram blocks
    multiplier: Optional[Polynomial] = None  # g_j for localizing / Gram-times-g blocks

    def vec_len(self) -> int:
        return self.size * self.size if self.kind == "sdp" else self.size


@dataclass
class SdpProblem:
    """Block semidefinite program in equality standard form."""

    blocks: list[Block]
    n_free: int
    A: list[sp.csr_matrix]
    B: sp.csr_matrix
    rhs: np.ndarray
    C: list[np.ndarray]
    c_free: np.ndarray
    sense: str = "min"
    free_labels: list = field(default_factory=list)
    obj_offset: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def n_rows(self) -> int:
        return self.rhs.shape[0]

    def describe(self) -> str:
        sizes = ",".join(
            f"{b.kind}{b.size}" for b in self.blocks
        )
        return (
            f"SdpProblem({self.sense}, rows={self.n_rows}, free={self.n_free}, "
            f"blocks=[{sizes}])"
        )


class _RowPruner:
    """Incremental orthogonal rank filter for pure-coefficient rows.

    Moment-side assemblies produce linearly dependent scalar rows whenever the
    ideal generators interact (k p_l = k' p_l' identities) or a constraint
    polynomial is a combination of others modulo the ideal.  Dependent rows
    with consistent right-hand sides are dropped; an inconsistent dependent
    row means the instance is infeasible and raises.
    """

    def __init__(self, dim: int, tol: float = 1e-10):
        self.dim = dim
        self.tol = tol
        self.basis: list[np.ndarray] = []
        self.rows: list[np.ndarray] = []
        self.rhs: list[float] = []

    def try_add(self, vec: np.ndarray, rhs: float, context: str = "") -> bool:
        vec = np.asarray(vec, dtype=float)
        scale = np.linalg.norm(vec)
        if scale == 0.0:
            if abs(rhs) > 1e-9:
                raise ValueError(
                    f"inconsistent constraint ({context}): zero row with target {rhs}"
                )
            return False
        r = vec.copy()
        for _ in range(2):  # two Gram-Schmidt passes for stability
            for q in self.basis:
                r = r - float(q @ r) * q
        rn = np.linalg.norm(r)
        if rn > self.tol * scale:
            self.basis.append(r / rn)
            self.rows.append(vec)
            self.rhs.append(float(rhs))
            return True
        # dependent row: its right-hand side must match the implied one
        implied = 0.0
        if self.rows:
            sol, *_ = np.linalg.lstsq(np.array(self.rows).T, vec, rcond=None)
            implied = float(sol @ np.array(self.rhs))
        if abs(implied - rhs) > 1e-7 * (1.0 + abs(rhs)):
            raise ValueError(
                f"inconsistent constraint ({context}): dependent row with target "
                f"{rhs}, implied {implied}"
            )
        return False


class _Assembler:
    """Accumulates rows and per-block sparse entries in COO form."""

    def __init__(self, sense: str):
        self.sense = sense
        self.blocks: list[Block] = []
        self._entries: list[list[tuple[int, int, float]]] = []  # per block: (row, flat, val)
        self._bentries: list[tuple[int, int, float]] = []
        self.rhs: list[float] = []
        self.free_labels: list = []
        self.C: list[np.ndarray] = []
        self.c_free: list[float] = []
        self.meta: dict = {}

    def add_block(self, kind: str, size: int, label: str = "", basis=None, multiplier=None) -> int:
        self.blocks.append(Block(kind, size, label, basis, multiplier))
        self._entries.append([])
        self.C.append(
            np.zeros((size, size)) if kind == "sdp" else np.zeros(size)
        )
        return len(self.blocks) - 1

    def add_free(self, label) -> int:
        self.free_labels.append(label)
        self.c_free.append(0.0)
        return len(self.free_labels) - 1

    def new_row(self, rhs: float) -> int:
        self.rhs.append(float(rhs))
        return len(self.rhs) - 1

    def block_entry(self, row: int, k: int, a: int, b: int, weight: float) -> None:
        """Add weight * X_k[a, b] to a row (X symmetric; off-diagonal split)."""
        blk = self.blocks[k]
        if blk.kind == "diag":
            if a != b:
                raise ValueError("diag block has no off-diagonal entries")
            self._entries[k].append((row, a, float(weight)))
            return
        n = blk.size
        if a == b:
            self._entries[k].append((row, a * n + b, float(weight)))
        else:
            half = float(weight) / 2.0
            self._entries[k].append((row, a * n + b, half))
            self._entries[k].append((row, b * n + a, half))

    def free_entry(self, row: int, f: int, weight: float) -> None:
        self._bentries.append((row, f, float(weight)))

    def set_block_objective(self, k: int, a: int, b: int, weight: float) -> None:
        blk = self.blocks[k]
        if blk.kind == "diag":
            self.C[k][a] += weight
            return
        if a == b:
            self.C[k][a, b] += weight
        else:
            self.C[k][a, b] += weight / 2.0
            self.C[k][b, a] += weight / 2.0

    def build(self) -> SdpProblem:
        p = len(self.rhs)
        A = []
        for blk, entries in zip(self.blocks, self._entries):
            if entries:
                rows, cols, vals = zip(*entries)
            else:
                rows, cols, vals = (), (), ()
            A.append(
                sp.coo_matrix(
                    (vals, (rows, cols)), shape=(p, blk.vec_len())
                ).tocsr()
            )
        if self._bentries:
            rows, cols, vals = zip(*self._bentries)
        else:
            rows, cols, vals = (), (), ()
        B = sp.coo_matrix(
            (vals, (rows, cols)), shape=(p, len(self.free_labels))
        ).tocsr()
        return SdpProblem(
            blocks=self.blocks,
            n_free=len(self.free_labels),
            A=A,
            B=B,
            rhs=np.array(self.rhs, dtype=float),
            C=self.C,
            c_free=np.array(self.c_free, dtype=float),
            sense=self.sense,
            free_labels=self.free_labels,
            meta=self.meta,
        )


# -- plain moment and localizing matrices --------------------------------------


def moment_matrix(z: np.ndarray, t: int, nvars: int) -> np.ndarray:
    """M_t(z): entry (alpha, beta) = z_{alpha+beta}, z indexed by N^n_{2t} grlex."""
    z = np.asarray(z, dtype=float)
    index = {m: i for i, m in enumerate(monomials_upto(nvars, 2 * t))}
    if z.shape != (len(index),):
        raise ValueError(f"sequence must have length {len(index)}, got {z.shape}")
    rows = monomials_upto(nvars, t)
    M = np.empty((len(rows), len(rows)))
    for i, a in enumerate(rows):
        for j, b in enumerate(rows):
            M[i, j] = z[index[tuple(x + y for x, y in zip(a, b))]]
    return M


def localizing_matrix(g: Polynomial, z: np.ndarray, t: int) -> np.ndarray:
    """M_{t - ceil(deg g / 2)}(g z): localizing matrix of g against the sequence z."""
    nvars = g.nvars
    z = np.asarray(z, dtype=float)
    index = {m: i for i, m in enumerate(monomials_upto(nvars, 2 * t))}
    if z.shape != (len(index),):
        raise ValueError(f"sequence must have length {len(index)}, got {z.shape}")
    if g.is_zero():
        rows = monomials_upto(nvars, t)
        return np.zeros((len(rows), len(rows)))
    tg = (g.total_degree() + 1) // 2
    if tg > t:
        raise ValueError(f"deg g = {g.total_degree()} exceeds 2t = {2 * t}")
    rows = monomials_upto(nvars, t - tg)
    M = np.zeros((len(rows), len(rows)))
    for i, a in enumerate(rows):
        for j, b in enumerate(rows):
            val = 0.0
            for gexp, gc in g.terms.items():
                total = tuple(x + y + w for x, y, w in zip(a, b, gexp))
                val += float(gc) * z[index[total]]
            M[i, j] = val
    return M


# -- full-mode builders ----------------------------------------------------------


def _check_level(inst: GmpInstance, t: int, validate: bool) -> None:
    tmin = compute_tmin(inst)
    if t < tmin:
        raise ValueError(f"relaxation order t = {t} below t_min = {tmin}")
    if validate:
        report = validate_instance(inst)
        if not report.ok:
            raise ValueError("instance failed validation:\n" + str(report))


def _forced_zero_moments(inst: GmpInstance, t: int, index: dict) -> set[int]:
    """Facial-reduction presolve: moment indices provably zero on the face.

    A zero-target row with a single not-yet-zero variable forces it; a zero
    diagonal entry of the moment matrix zeroes its whole row (PSD), which
    cascades through products.  Localizing diagonals that vanish identically
    contribute their rows as fresh zero-target equations.  The fixed point is
    used to shrink blocks so the reduced face regains a relative interior.
    """
    n = inst.nvars
    known: set[int] = set()
    rows: list[dict[int, float]] = []
    for h, b in inst.constraints:
        if b == 0.0 and not h.is_zero():
            rows.append({index[e]: float(c) for e, c in h.terms.items()})
    for p_l in inst.support.equalities:
        tp = (p_l.total_degree() + 1) // 2
        for alpha in monomials_upto(n, 2 * (t - tp)):
            coeffs: dict[int, float] = {}
            for e, c in p_l.terms.items():
                j = index[tuple(a + x for a, x in zip(alpha, e))]
                coeffs[j] = coeffs.get(j, 0.0) + float(c)
            rows.append({j: c for j, c in coeffs.items() if c != 0.0})

    basis_t = monomials_upto(n, t)
    changed = True
    while changed:
        changed = False
        for coeffs in rows:
            unknown = [j for j in coeffs if j not in known]
            if len(unknown) == 1:
                known.add(unknown[0])
                changed = True
        for beta in basis_t:
            if index[tuple(2 * e for e in beta)] in known:
                for gamma in basis_t:
                    j = index[tuple(a + b for a, b in zip(beta, gamma))]
                    if j not in known:
                        known.add(j)
                        changed = True
        for g in inst.support.inequalities:
            tg = (g.total_degree() + 1) // 2
            basis_g = monomials_upto(n, t - tg)
            for beta in basis_g:
                diag = {
                    index[tuple(2 * b + e for b, e in zip(beta, gexp))]
                    for gexp in g.terms
                }
                if diag <= known:
                    for gamma in basis_g:
                        coeffs = {}
                        for gexp, gc in g.terms.items():
                            j = index[
                                tuple(
                                    a + b + e
                                    for a, b, e in zip(beta, gamma, gexp)
                                )
                            ]
                            coeffs[j] = coeffs.get(j, 0.0) + float(gc)
                        coeffs = {j: c for j, c in coeffs.items() if c != 0.0}
                        if coeffs and coeffs not in rows:
                            rows.append(coeffs)
                            changed = True
    return known


def build_moment_relaxation(
    inst: GmpInstance, t: int, validate: bool = True, presolve: bool = True
) -> SdpProblem:
    """Moment relaxation at order t over the full monomial index N^n_{2t}.

    The decision vector is the pseudo-moment sequence (free variables); the
    moment matrix and each localizing matrix live in PSD blocks tied to it
    entrywise, and each ideal generator contributes one equality per distinct
    entry of its shifted sequence.  A facial-reduction presolve removes
    moments forced to zero and the corresponding block rows, which keeps the
    iterates well-centered on instances whose targets pin the measure to a
    lower-dimensional face.
    """
    _check_level(inst, t, validate)
    n = inst.nvars
    asm = _Assembler("min")
    m2t = monomials_upto(n, 2 * t)
    index = {m: i for i, m in enumerate(m2t)}
    zero_idx = _forced_zero_moments(inst, t, index) if presolve else set()
    kept_monomials = [m for m in m2t if index[m] not in zero_idx]
    zcol = {}
    for mono in kept_monomials:
        zcol[index[mono]] = asm.add_free(("z", mono))

    def free_entries(row: int, coeffs: dict[int, float]) -> None:
        for j, c in coeffs.items():
            if j not in zero_idx and c != 0.0:
                asm.free_entry(row, zcol[j], c)

    pruner = _RowPruner(len(m2t))
    kept_constraints = []
    for i, (h, b) in enumerate(inst.constraints):
        vec = np.zeros(len(m2t))
        for exp, c in h.terms.items():
            vec[index[exp]] = float(c)
        vec[list(zero_idx)] = 0.0
        if not pruner.try_add(vec, b, context=f"moment constraint {i}"):
            continue
        kept_constraints.append(i)
        row = asm.new_row(b)
        free_entries(row, {j: float(vec[j]) for j in np.nonzero(vec)[0]})

    for l, p_l in enumerate(inst.support.equalities):
        dp = p_l.total_degree()
        tp = (dp + 1) // 2
        for alpha in monomials_upto(n, 2 * (t - tp)):
            vec = np.zeros(len(m2t))
            for exp, c in p_l.terms.items():
                vec[index[tuple(a + e for a, e in zip(alpha, exp))]] += float(c)
            vec[list(zero_idx)] = 0.0
            if not pruner.try_add(vec, 0.0, context=f"ideal generator {l}"):
                continue
            row = asm.new_row(0.0)
            free_entries(row, {j: float(vec[j]) for j in np.nonzero(vec)[0]})

    full_basis_t = monomials_upto(n, t)
    basis_t = [
        b for b in full_basis_t if index[tuple(2 * e for e in b)] not in zero_idx
    ]
    k0 = asm.add_block("sdp", len(basis_t), "moment", basis=basis_t)
    for i in range(len(basis_t)):
        for j in range(i, len(basis_t)):
            total = index[tuple(a + b for a, b in zip(basis_t[i], basis_t[j]))]
            row = asm.new_row(0.0)
            asm.block_entry(row, k0, i, j, 1.0)
            free_entries(row, {total: -1.0})

    for j_g, g in enumerate(inst.support.inequalities):
        tg = (g.total_degree() + 1) // 2
        basis_g = []
        for beta in monomials_upto(n, t - tg):
            diag = {
                index[tuple(2 * b + e for b, e in zip(beta, gexp))]
                for gexp in g.terms
            }
            if not diag <= zero_idx:
                basis_g.append(beta)
        kg = asm.add_block(
            "sdp", len(basis_g), f"localizing-{j_g}", basis=basis_g, multiplier=g
        )
        for i in range(len(basis_g)):
            for j in range(i, len(basis_g)):
                coeffs: dict[int, float] = {}
                for gexp, gc in g.terms.items():
                    total = index[
                        tuple(a + b + e for a, b, e in zip(basis_g[i], basis_g[j], gexp))
                    ]
                    coeffs[total] = coeffs.get(total, 0.0) - float(gc)
                coeffs = {
                    j2: c for j2, c in coeffs.items() if j2 not in zero_idx and c != 0.0
                }
                row = asm.new_row(0.0)
                asm.block_entry(row, kg, i, j, 1.0)
                free_entries(row, coeffs)

    for exp, c in inst.objective.terms.items():
        j = index[exp]
        if j not in zero_idx:
            asm.c_free[zcol[j]] += float(c)

    asm.meta = {
        "kind": "moment",
        "mode": "full",
        "t": t,
        "monomials": kept_monomials,
        "zero_monomials": [m2t[j] for j in sorted(zero_idx)],
        "instance_hash": instance_hash(inst),
        "m_constraints": len(inst.constraints),
        "kept_constraints": kept_constraints,
    }
    return asm.build()


def build_sos_custom(
    inst: GmpInstance,
    *,
    gram_degree: int,
    ineq_gram_degrees: Sequence[int],
    ideal_degrees: Sequence[int],
    match_degree: int,
    label: str = "sos",
) -> SdpProblem:
    """SOS program with explicit degree caps on every piece.

    Coefficient matching runs over all monomials up to ``match_degree``;
    callers must make that at least the degree of every term they admit.
    """
    n = inst.nvars
    if len(ineq_gram_degrees) != len(inst.support.inequalities):
        raise ValueError("one Gram degree per inequality required")
    if len(ideal_degrees) != len(inst.support.equalities):
        raise ValueError("one multiplier degree per equality required")
    asm = _Assembler("max")

    match_monomials = monomials_upto(n, match_degree)
    mono_index = {m: i for i, m in enumerate(match_monomials)}
    rows: dict[Exponent, int] = {}
    for mono in match_monomials:
        rows[mono] = asm.new_row(float(inst.objective.coefficient(mono)))

    # free multipliers: drop columns linearly dependent on earlier ones (they
    # make the multiplier non-unique, e.g. an ideal shift matching a
    # combination of constraint polynomials); the objective must agree along
    # the dependency or the stated supremum would be unbounded
    pruner = _RowPruner(len(match_monomials))
    lam: dict[int, int] = {}
    for i, (h, b) in enumerate(inst.constraints):
        vec = np.zeros(len(match_monomials))
        for exp, c in h.terms.items():
            vec[mono_index[exp]] = float(c)
        if pruner.try_add(vec, b, context=f"multiplier lambda_{i}"):
            lam[i] = asm.add_free(("lambda", i))
    ideal_vars: list[list[tuple[int, Exponent]]] = []
    for l, (p_l, dk) in enumerate(zip(inst.support.equalities, ideal_degrees)):
        vars_l = []
        if dk >= 0:
            for mono in monomials_upto(n, dk):
                vec = np.zeros(len(match_monomials))
                for exp, c in p_l.terms.items():
                    vec[mono_index[tuple(a + e for a, e in zip(mono, exp))]] += float(c)
                if pruner.try_add(vec, 0.0, context=f"ideal multiplier {l}"):
                    vars_l.append((asm.add_free(("ideal", l, mono)), mono))
        ideal_vars.append(vars_l)

    basis0 = monomials_upto(n, gram_degree)
    k0 = asm.add_block("sdp", len(basis0), "gram-sigma0", basis=basis0)
    for i in range(len(basis0)):
        for j in range(i, len(basis0)):
            total = tuple(a + b for a, b in zip(basis0[i], basis0[j]))
            weight = 1.0 if i == j else 2.0
            asm.block_entry(rows[total], k0, i, j, weight)

    for j_g, (g, dg) in enumerate(zip(inst.support.inequalities, ineq_gram_degrees)):
        basis_g = monomials_upto(n, dg)
        kg = asm.add_block(
            "sdp", len(basis_g), f"gram-sigma{j_g + 1}", basis=basis_g, multiplier=g
        )
        for i in range(len(basis_g)):
            for j in range(i, len(basis_g)):
                weight = 1.0 if i == j else 2.0
                for gexp, gc in g.terms.items():
                    total = tuple(
                        a + b + e for a, b, e in zip(basis_g[i], basis_g[j], gexp)
                    )
                    asm.block_entry(rows[total], kg, i, j, weight * float(gc))

    for i, (h, b) in enumerate(inst.constraints):
        if i not in lam:
            continue
        for exp, c in h.terms.items():
            asm.free_entry(rows[exp], lam[i], float(c))
        asm.c_free[lam[i]] = float(b)

    for l, p_l in enumerate(inst.support.equalities):
        for fvar, mono in ideal_vars[l]:
            for exp, c in p_l.terms.items():
                total = tuple(a + b for a, b in zip(mono, exp))
                asm.free_entry(rows[total], fvar, float(c))

    asm.meta = {
        "kind": "sos",
        "mode": "full",
        "label": label,
        "match_degree": match_degree,
        "m_constraints": len(inst.constraints),
        "kept_lambda": sorted(lam),
        "instance_hash": instance_hash(inst),
    }
    return asm.build()


def build_sos_strengthening(
    inst: GmpInstance, t: int, validate: bool = True
) -> SdpProblem:
    """SOS strengthening of the dual at order t.

    Free variables are the multipliers lambda and the coefficients of the
    ideal multipliers (all monomials of degree at most 2t - deg p_l); Gram
    blocks carry sigma_0 and one sigma_j per inequality.  Rows match the
    coefficients of f - sum lambda_i h_i against the quadratic module plus
    truncated ideal, and the objective is sum b_i lambda_i.
    """
    _check_level(inst, t, validate)
    degs_h = [h.total_degree() for h in inst.h_polys if not h.is_zero()]
    f = inst.objective
    match_degree = max(
        [2 * t] + degs_h + ([] if f.is_zero() else [f.total_degree()])
    )
    ineq_degrees = []
    for g in inst.support.inequalities:
        tg = (g.total_degree() + 1) // 2
        ineq_degrees.append(t - tg)
    ideal_degrees = [2 * t - p.total_degree() for p in inst.support.equalities]
    prob = build_sos_custom(
        inst,
        gram_degree=t,
        ineq_gram_degrees=ineq_degrees,
        ideal_degrees=ideal_degrees,
        match_degree=match_degree,
    )
    prob.meta["t"] = t
    return prob


# -- reduced-mode builders ---------------------------------------------------------


def build_reduced_relaxation(
    inst: GmpInstance,
    t: int,
    qb: Optional[QuotientBasis] = None,
    validate: bool = True,
) -> tuple[SdpProblem, SdpProblem]:
    """Reduced primal/dual pair over the standard-monomial basis B_{2t}.

    Requires the equality polynomials to form a verified Gröbner basis and the
    real-radical flag (automatic for sphere products).  The primal decision
    vector is the reduced sequence on B_{2t}; the dual carries Gram blocks
    supported on B_t (and B_{t-t_g} per inequality) with residue-matching
    rows, the ideal multipliers being absorbed by the residue map.
    """
    if not inst.support.equalities:
        raise ValueError("reduced mode needs equality constraints (use full mode)")
    if not (inst.support.real_radical_declared or inst.support.is_sphere_product()):
        raise ValueError("reduced mode requires the real-radical flag")
    tmin = compute_tmin(inst)
    if t < tmin:
        raise ValueError(f"relaxation order t = {t} below t_min = {tmin}")
    if validate:
        report = validate_instance(inst)
        if not report.ok:
            raise ValueError("instance failed validation:\n" + str(report))
    if qb is None:
        qb = standard_monomial_basis(inst.support.equalities, 2 * t)
    elif qb.level < 2 * t:
        raise ValueError(f"quotient basis level {qb.level} < 2t = {2 * t}")

    n = inst.nvars
    r2t = qb.size
    rt = qb.rank_at(t)
    ihash = instance_hash(inst)

    # residues of the constraint polynomials; dependent ones (modulo the
    # ideal) are pruned consistently on both sides of the reduced pair
    h_res = [qb.normal_form_coeffs_float(h) for h in inst.h_polys]
    pruner = _RowPruner(r2t)
    kept_constraints = []
    for i, ((h, b), vec) in enumerate(zip(inst.constraints, h_res)):
        if pruner.try_add(vec, b, context=f"moment constraint {i} (reduced)"):
            kept_constraints.append(i)

    # ---- primal over zhat -------------------------------------------------
    asm = _Assembler("min")
    for mono in qb.basis:
        asm.add_free(("zhat", mono))

    for i in kept_constraints:
        row = asm.new_row(inst.constraints[i][1])
        for e, c in enumerate(h_res[i]):
            if c != 0.0:
                asm.free_entry(row, e, c)

    basis_t = qb.basis_at(t)
    k0 = asm.add_block("sdp", rt, "moment-reduced", basis=basis_t)
    for i in range(rt):
        for j in range(i, rt):
            row = asm.new_row(0.0)
            asm.block_entry(row, k0, i, j, 1.0)
            for e, c in qb.product_residue(basis_t[i], basis_t[j]).items():
                asm.free_entry(row, e, -float(c))

    for j_g, g in enumerate(inst.support.inequalities):
        tg = (g.total_degree() + 1) // 2
        rg = qb.rank_at(t - tg)
        basis_g = qb.basis_at(t - tg)
        kg = asm.add_block(
            "sdp", rg, f"localizing-reduced-{j_g}", basis=basis_g, multiplier=g
        )
        gx = g.to_exact()
        for i in range(rg):
            for j in range(i, rg):
                row = asm.new_row(0.0)
                asm.block_entry(row, kg, i, j, 1.0)
                acc: dict[int, float] = {}
                for gexp, gc in gx.terms.items():
                    for e, c in qb.product_residue(basis_g[i], basis_g[j], gexp).items():
                        acc[e] = acc.get(e, 0.0) + float(gc) * float(c)
                for e, c in acc.items():
                    if c != 0.0:
                        asm.free_entry(row, e, -c)

    for e, c in enumerate(qb.normal_form_coeffs_float(inst.objective)):
        asm.c_free[e] += c

    asm.meta = {
        "kind": "moment",
        "mode": "reduced",
        "t": t,
        "basis": list(qb.basis),
        "instance_hash": ihash,
        "m_constraints": len(inst.constraints),
        "kept_constraints": kept_constraints,
    }
    primal = asm.build()

    # ---- dual with residue matching ---------------------------------------
    asm = _Assembler("max")
    lam = {i: asm.add_free(("lambda", i)) for i in kept_constraints}
    frows = qb.normal_form_coeffs_float(inst.objective)
    rows = [asm.new_row(float(frows[e])) for e in range(r2t)]

    k0 = asm.add_block("sdp", rt, "gram-sigma0-reduced", basis=basis_t)
    for i in range(rt):
        for j in range(i, rt):
            weight = 1.0 if i == j else 2.0
            for e, c in qb.product_residue(basis_t[i], basis_t[j]).items():
                asm.block_entry(rows[e], k0, i, j, weight * float(c))

    for j_g, g in enumerate(inst.support.inequalities):
        tg = (g.total_degree() + 1) // 2
        rg = qb.rank_at(t - tg)
        basis_g = qb.basis_at(t - tg)
        kg = asm.add_block(
            "sdp", rg, f"gram-sigma{j_g + 1}-reduced", basis=basis_g, multiplier=g
        )
        gx = g.to_exact()
        for i in range(rg):
            for j in range(i, rg):
                weight = 1.0 if i == j else 2.0
                for gexp, gc in gx.terms.items():
                    for e, c in qb.product_residue(basis_g[i], basis_g[j], gexp).items():
                        asm.block_entry(rows[e], kg, i, j, weight * float(gc) * float(c))

    for i in kept_constraints:
        for e, c in enumerate(h_res[i]):
            if c != 0.0:
                asm.free_entry(rows[e], lam[i], c)
        asm.c_free[lam[i]] = float(inst.constraints[i][1])

    asm.meta = {
        "kind": "sos",
        "mode": "reduced",
        "t": t,
        "basis": list(qb.basis),
        "instance_hash": ihash,
        "m_constraints": len(inst.constraints),
        "kept_lambda": kept_constraints,
        "kept_constraints": kept_constraints,
    }
    dual = asm.build()
    return primal, dual


# -- text export -------------------------------------------------------------------


def export_sdp_text(prob: SdpProblem) -> str:
    """Serialize a problem in the sparse block text format.

    Format (one record per line, whitespace separated, floats via repr):

        momsos-sdp 1
        sense {min|max}
        blocks K
        block <k> <kind> <size>
        free <F>
        rows <P>
        rhs <i> <value>                      (only nonzero entries)
        obj-block <k> <a> <b> <value>        (only nonzero entries)
        obj-free <f> <value>
        A <i> <k> <a> <b> <value>            (matrix entry of row i on block k)
        B <i> <f> <value>                    (free-variable entry of row i)
        end
    """
    out = ["momsos-sdp 1", f"sense {prob.sense}", f"blocks {len(prob.blocks)}"]
    for k, blk in enumerate(prob.blocks):
        out.append(f"block {k} {blk.kind} {blk.size}")
    out.append(f"free {prob.n_free}")
    out.append(f"rows {prob.n_rows}")
    for i, v in enumerate(prob.rhs):
        if v != 0.0:
            out.append(f"rhs {i} {v!r}")
    for k, C in enumerate(prob.C):
        blk = prob.blocks[k]
        if blk.kind == "diag":
            for a, v in enumerate(C):
                if v != 0.0:
                    out.append(f"obj-block {k} {a} {a} {v!r}")
        else:
            for a in range(blk.size):
                for b in range(a, blk.size):
                    v = C[a, b] if a == b else C[a, b] * 2.0
                    if v != 0.0:
                        out.append(f"obj-block {k} {a} {b} {v!r}")
    for f, v in enumerate(prob.c_free):
        if v != 0.0:
            out.append(f"obj-free {f} {v!r}")
    for k, A in enumerate(prob.A):
        blk = prob.blocks[k]
        coo = A.tocoo()
        seen: dict[tuple[int, int, int], float] = {}
        for i, flat, v in zip(coo.row, coo.col, coo.data):
            if blk.kind == "diag":
                a = b = int(flat)
                val = v
            else:
                a, b = divmod(int(flat), blk.size)
                if a > b:
                    continue
                val = v if a == b else 2.0 * v
            seen[(int(i), a, b)] = seen.get((int(i), a, b), 0.0) + val
        for (i, a, b), val in sorted(seen.items()):
            if val != 0.0:
                out.append(f"A {i} {k} {a} {b} {val!r}")
    bcoo = prob.B.tocoo()
    for i, f, v in sorted(zip(bcoo.row, bcoo.col, bcoo.data)):
        if v != 0.0:
            out.append(f"B {int(i)} {int(f)} {v!r}")
    out.append("end")
    return "\n".join(out) + "\n"
