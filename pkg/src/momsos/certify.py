"""Certificate extraction and verification, and duality-attainment diagnostics.

A certificate for the dual strengthening consists of the multipliers lambda,
one Gram matrix per SOS block, and the ideal multiplier polynomials.  It is
verified symbolically: the polynomial

    f - sum_i lambda_i h_i - sigma_0 - sum_j sigma_j g_j - sum_l k_l p_l

is reconstructed from the Gram factors and its largest coefficient magnitude
reported (in reduced mode the residue vector in the quotient basis plays that
role, the ideal multipliers being implicit).

Attainment cannot be proven numerically; it is *diagnosed* by re-solving the
dual strengthening along a schedule of decreasing gap tolerances and watching
the multiplier norm.  A multiplier norm growing at least like a power of the
inverse gap (slope >= 0.4 on the log-log fit) is reported as "diverging";
norms that stabilize are reported as "bounded".  The thresholds are
engineering choices recorded in the report.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .model import GmpInstance
from .poly import Exponent, Polynomial
from .quotient import QuotientBasis, standard_monomial_basis
from .relax import (
    Block,
    SdpProblem,
    build_moment_relaxation,
    build_reduced_relaxation,
    build_sos_strengthening,
)
from .solver import SdpSolution, SolveOptions, solve_sdp

__all__ = [
    "Certificate",
    "CertificateReport",
    "AttainmentDiagnosis",
    "extract_certificate",
    "verify_certificate",
    "attainment_diagnostic",
    "min_norm_multiplier",
    "sampled_dual_diagnostic",
]


@dataclass
class Certificate:
    lambdas: np.ndarray
    gram_blocks: list[tuple[list[Exponent], Optional[Polynomial], np.ndarray]]
    ideal_multipliers: list[Polynomial]
    mode: str = "full"  # "full" | "reduced"
    quotient: Optional[QuotientBasis] = None
    residual: float = np.nan
    min_gram_eig: float = np.nan


@dataclass
class CertificateReport:
    residual: float
    min_gram_eig: float
    tol: float
    passed: bool

    def __str__(self) -> str:
        state = "pass" if self.passed else "FAIL"
        return (
            f"certificate {state}: residual {self.residual:.3e}, "
            f"min Gram eigenvalue {self.min_gram_eig:.3e}, tol {self.tol:.1e}"
        )


def gram_to_polynomial(
    basis: Sequence[Exponent], G: np.ndarray, nvars: int
) -> Polynomial:
    """sigma = v^T G v for the monomial vector v over the given basis."""
    terms: dict[Exponent, float] = {}
    for i, a in enumerate(basis):
        for j, b in enumerate(basis):
            exp = tuple(x + y for x, y in zip(a, b))
            terms[exp] = terms.get(exp, 0.0) + float(G[i, j])
    return Polynomial(nvars, terms)


def _project_psd(G: np.ndarray) -> tuple[np.ndarray, float]:
    evals, evecs = np.linalg.eigh((G + G.T) / 2.0)
    clipped = float(min(evals[0], 0.0))
    if evals[0] < 0:
        G = (evecs * np.maximum(evals, 0.0)) @ evecs.T
    return G, clipped


def extract_certificate(
    sol: SdpSolution,
    prob: SdpProblem,
    inst: GmpInstance,
    qb: Optional[QuotientBasis] = None,
    clip: bool = True,
) -> Certificate:
    """Read a certificate off a solved SOS-side program.

    Gram blocks are projected to the nearest PSD matrix (eigenvalue clipping);
    lambda and the ideal multipliers are read from the free variables, with
    multipliers pruned at assembly reported as zero.  The verification
    residual is recomputed after projection.
    """
    if prob.meta.get("kind") != "sos":
        raise ValueError("certificate extraction requires an SOS-side problem")
    if sol.status != "optimal":
        raise ValueError(f"cannot extract a certificate from status {sol.status!r}")
    m = prob.meta.get("m_constraints", len(inst.constraints))
    lambdas = np.zeros(m)
    ideal_terms: dict[int, dict[Exponent, float]] = {}
    for label, value in zip(prob.free_labels, sol.free_values):
        if label[0] == "lambda":
            lambdas[label[1]] = value
        elif label[0] == "ideal":
            _, l, mono = label
            ideal_terms.setdefault(l, {})[mono] = value
    nvars = inst.nvars
    ideal_polys = [
        Polynomial(nvars, ideal_terms.get(l, {}))
        for l in range(len(inst.support.equalities))
    ]

    gram_blocks = []
    for blk, Xk in zip(prob.blocks, sol.X):
        if not blk.label.startswith("gram"):
            continue
        G = np.asarray(Xk, dtype=float)
        if clip:
            G, _ = _project_psd(G)
        gram_blocks.append((list(blk.basis), blk.multiplier, G))

    mode = prob.meta.get("mode", "full")
    if mode == "reduced" and qb is None:
        qb = standard_monomial_basis(
            inst.support.equalities, 2 * prob.meta["t"]
        )
    cert = Certificate(
        lambdas=lambdas,
        gram_blocks=gram_blocks,
        ideal_multipliers=ideal_polys,
        mode=mode,
        quotient=qb,
    )
    report = verify_certificate(cert, inst, tol=np.inf)
    cert.residual = report.residual
    cert.min_gram_eig = report.min_gram_eig
    return cert


def verify_certificate(
    cert: Certificate, inst: GmpInstance, tol: float = 1e-8
) -> CertificateReport:
    """Recompute the matching residual of a certificate symbolically.

    Full mode checks max-coefficient of f - sum lambda h - sigma_0
    - sum sigma_j g_j - sum k_l p_l; reduced mode checks the residue vector of
    f - sum lambda h - sigma_0 - sum sigma_j g_j in the quotient basis, the
    ideal multipliers being absorbed by the residue map.
    """
    nvars = inst.nvars
    resid = inst.objective.to_float()
    for lam, (h, _) in zip(cert.lambdas, inst.constraints):
        if lam != 0.0:
            resid = resid - h.to_float() * float(lam)
    min_eig = np.inf
    for basis, mult, G in cert.gram_blocks:
        evals = np.linalg.eigvalsh((G + G.T) / 2.0)
        min_eig = min(min_eig, float(evals[0]))
        sigma = gram_to_polynomial(basis, G, nvars)
        if mult is not None:
            sigma = sigma * mult.to_float()
        resid = resid - sigma
    if cert.mode == "full":
        for k_l, p_l in zip(cert.ideal_multipliers, inst.support.equalities):
            if not k_l.is_zero():
                resid = resid - k_l * p_l.to_float()
        residual = resid.max_abs_coeff()
    else:
        if cert.quotient is None:
            raise ValueError("reduced certificate needs its quotient basis")
        vec = cert.quotient.normal_form_coeffs_float(resid)
        residual = float(np.abs(vec).max(initial=0.0))
    if min_eig is np.inf:
        min_eig = 0.0
    passed = residual <= tol and min_eig >= -tol
    return CertificateReport(
        residual=residual, min_gram_eig=float(min_eig), tol=tol, passed=passed
    )


# -- attainment diagnostics ------------------------------------------------------


# norm caps swept when profiling the dual: fine below 1 so attained duals with
# small multipliers report their actual norm, decades above
_RADIUS_LADDER = [1e-6, 1e-4, 1e-2] + [10.0**k for k in range(0, 10)]


@dataclass
class AttainmentDiagnosis:
    schedule: list[float]
    norms: list[float]
    values: list[float]
    statuses: list[str]
    slope: float
    stable_tail: bool
    verdict: str  # "bounded" | "diverging"
    partial: bool = False
    note: str = ""

    def __str__(self) -> str:
        rows = "\n".join(
            f"  gap<={g:8.1e}  |lambda| {n:12.5e}  value {v:+.6e}  [{s}]"
            for g, n, v, s in zip(self.schedule, self.norms, self.values, self.statuses)
        )
        return (
            f"attainment diagnosis: {self.verdict} "
            f"(slope {self.slope:.3f}, tail stable: {self.stable_tail})\n" + rows
        )


def _lambda_norm(sol: SdpSolution, prob: SdpProblem) -> float:
    vals = [
        v for label, v in zip(prob.free_labels, sol.free_values) if label[0] == "lambda"
    ]
    return float(np.linalg.norm(vals))


def _with_min_norm(prob: SdpProblem, target: float, band: float) -> SdpProblem:
    """Turn an SOS-side program into: min |lambda|^2 s.t. feasible, value >= target - band.

    The norm enters through a Schur-complement epigraph block
    [[T, lambda^T], [lambda, I]] and the value bound through one slack row.
    Multiplier paths of non-attained duals stall interior-point iterations
    (their moment side has no interior); this reformulation is coercive in
    lambda and solves cleanly at every suboptimality level.

    All original variables are implicitly rescaled by the band (multiplying
    the matching right-hand sides by it), so the solution stays O(1) even
    when the true multiplier norm grows like 1/band; reported lambda values
    must be divided by ``meta["lambda_scale"]``.
    """
    if prob.sense != "max" or prob.meta.get("kind") not in ("sos", "grid-dual"):
        raise ValueError("min-norm reformulation expects an SOS-side max program")
    lam_idx = [i for i, lab in enumerate(prob.free_labels) if lab[0] == "lambda"]
    mlam = len(lam_idx)
    p0, F = prob.n_rows, prob.n_free
    nrm = mlam + 1
    extra = 1 + (nrm * (nrm - 1)) // 2 + mlam  # band + upper triangle of I + links
    p = p0 + extra
    scale = band

    A = []
    for Ak in prob.A:
        A.append(sp.vstack([Ak, sp.csr_matrix((extra, Ak.shape[1]))]).tocsr())
    rhs = np.concatenate([scale * prob.rhs, np.zeros(extra)])

    ent_band: list[tuple[int, int, float]] = []
    ent_norm: list[tuple[int, int, float]] = []
    brows: list[tuple[int, int, float]] = []
    r = p0
    # value band (in scaled variables): sum b_i lam~_i - scale * s = scale * (target - band)
    for j, cj in enumerate(prob.c_free):
        if cj != 0.0:
            brows.append((r, j, float(cj)))
    ent_band.append((r, 0, -scale))
    rhs[r] = scale * (target - band)
    r += 1
    # epigraph block: identity lower-right, links to scaled lambda
    for i in range(1, nrm):
        for j in range(i, nrm):
            if i == j:
                ent_norm.append((r, i * nrm + j, 1.0))
                rhs[r] = 1.0
            else:
                ent_norm.append((r, i * nrm + j, 0.5))
                ent_norm.append((r, j * nrm + i, 0.5))
                rhs[r] = 0.0
            r += 1
    for q, j in enumerate(lam_idx):
        ent_norm.append((r, 0 * nrm + (q + 1), 0.5))
        ent_norm.append((r, (q + 1) * nrm + 0, 0.5))
        brows.append((r, j, -1.0))
        rhs[r] = 0.0
        r += 1

    def coo(entries, cols):
        if entries:
            rr, cc, vv = zip(*entries)
        else:
            rr, cc, vv = (), (), ()
        return sp.coo_matrix((vv, (rr, cc)), shape=(p, cols)).tocsr()

    A.append(coo(ent_band, 1))
    A.append(coo(ent_norm, nrm * nrm))
    Bexp = sp.vstack([prob.B, sp.csr_matrix((extra, F))]).tolil()
    for rr, cc, vv in brows:
        Bexp[rr, cc] = vv
    Cn = np.zeros((nrm, nrm))
    Cn[0, 0] = 1.0
    blocks = list(prob.blocks) + [
        Block("diag", 1, "value-band"),
        Block("sdp", nrm, "norm-epigraph"),
    ]
    C = [np.zeros_like(Ck) for Ck in prob.C] + [np.zeros(1), Cn]
    meta = dict(prob.meta)
    meta["kind"] = "sos-minnorm"
    meta["lambda_scale"] = scale
    return SdpProblem(
        blocks=blocks,
        n_free=F,
        A=A,
        B=Bexp.tocsr(),
        rhs=rhs,
        C=C,
        c_free=np.zeros(F),
        sense="min",
        free_labels=list(prob.free_labels),
        meta=meta,
    )


def _fit_verdict(schedule, norms) -> tuple[float, bool, str]:
    logs = np.log10(1.0 / np.asarray(schedule, dtype=float))
    logn = np.log10(np.maximum(np.asarray(norms, dtype=float), 1e-12))
    slope = float(np.polyfit(logs, logn, 1)[0]) if len(schedule) >= 2 else 0.0
    if len(norms) >= 2 and norms[-2] > 0:
        stable = abs(norms[-1] / norms[-2] - 1.0) <= 0.10
    else:
        stable = True
    verdict = "diverging" if slope >= 0.4 else "bounded"
    return slope, stable, verdict


def _with_norm_ball(prob: SdpProblem, radius: float) -> SdpProblem:
    """Add |lambda|^2 <= radius^2 to an SOS-side program (epigraph + slack).

    Capping the multiplier norm makes the feasible multiplier set compact, so
    the capped supremum v(R) is always attained and solves reliably even when
    the uncapped dual diverges; v(R) recovers the attainment profile.
    """
    if prob.sense != "max" or prob.meta.get("kind") not in ("sos", "grid-dual"):
        raise ValueError("norm-ball reformulation expects an SOS-side max program")
    lam_idx = [i for i, lab in enumerate(prob.free_labels) if lab[0] == "lambda"]
    mlam = len(lam_idx)
    p0, F = prob.n_rows, prob.n_free
    nrm = mlam + 1
    extra = 1 + (nrm * (nrm - 1)) // 2 + mlam
    p = p0 + extra

    A = []
    for Ak in prob.A:
        A.append(sp.vstack([Ak, sp.csr_matrix((extra, Ak.shape[1]))]).tocsr())
    rhs = np.concatenate([prob.rhs, np.zeros(extra)])

    ent_slack: list[tuple[int, int, float]] = []
    ent_norm: list[tuple[int, int, float]] = []
    brows: list[tuple[int, int, float]] = []
    r = p0
    ent_norm.append((r, 0, 1.0))  # T + s = R^2
    ent_slack.append((r, 0, 1.0))
    rhs[r] = radius * radius
    r += 1
    for i in range(1, nrm):
        for j in range(i, nrm):
            if i == j:
                ent_norm.append((r, i * nrm + j, 1.0))
                rhs[r] = 1.0
            else:
                ent_norm.append((r, i * nrm + j, 0.5))
                ent_norm.append((r, j * nrm + i, 0.5))
                rhs[r] = 0.0
            r += 1
    for q, j in enumerate(lam_idx):
        ent_norm.append((r, 0 * nrm + (q + 1), 0.5))
        ent_norm.append((r, (q + 1) * nrm + 0, 0.5))
        brows.append((r, j, -1.0))
        rhs[r] = 0.0
        r += 1

    def coo(entries, cols):
        if entries:
            rr, cc, vv = zip(*entries)
        else:
            rr, cc, vv = (), (), ()
        return sp.coo_matrix((vv, (rr, cc)), shape=(p, cols)).tocsr()

    A.append(coo(ent_slack, 1))
    A.append(coo(ent_norm, nrm * nrm))
    Bexp = sp.vstack([prob.B, sp.csr_matrix((extra, F))]).tolil()
    for rr, cc, vv in brows:
        Bexp[rr, cc] = vv
    blocks = list(prob.blocks) + [
        Block("diag", 1, "norm-ball-slack"),
        Block("sdp", nrm, "norm-epigraph"),
    ]
    C = [np.asarray(Ck, dtype=float).copy() for Ck in prob.C] + [
        np.zeros(1),
        np.zeros((nrm, nrm)),
    ]
    meta = dict(prob.meta)
    meta["kind"] = "sos-normball"
    meta["radius"] = radius
    return SdpProblem(
        blocks=blocks,
        n_free=F,
        A=A,
        B=Bexp.tocsr(),
        rhs=rhs,
        C=C,
        c_free=prob.c_free.copy(),
        sense="max",
        free_labels=list(prob.free_labels),
        meta=meta,
    )


def _soft_capped_program(prob: SdpProblem, radius: float) -> SdpProblem:
    """Lagrangian dual of the norm-capped SOS program, in solvable form.

    For the SOS-side program  max c.y  s.t. sum_k <A_ik, X_k> + (B y)_i = rhs_i
    with the multiplier part of y capped at |lambda| <= R, the dual is

        min  rhs.z + R r
        s.t. S_k(z) := sum_i z_i A_ik  PSD for every Gram block k,
             (c - B' z)_j = 0 for non-multiplier y_j,
             w = (c - B' z)_lambda,  |w| <= r  (arrow block).

    Unlike the capped program itself, this side has a strictly feasible point
    whenever the support admits a full-support measure (no equality pinning),
    so interior-point iterations converge cleanly; the optimal row multipliers
    of the w-rows recover the capped multiplier lambda(R).
    """
    if prob.sense != "max" or not prob.meta.get("kind", "").startswith(("sos", "grid")):
        raise ValueError("soft cap expects an SOS-side max program")
    J = [j for j, lab in enumerate(prob.free_labels) if lab[0] == "lambda"]
    Jset = set(J)
    p0, F = prob.n_rows, prob.n_free
    mlam = len(J)
    nrm = mlam + 1
    Bcsc = prob.B.tocsc()

    blocks: list[Block] = []
    A_ent: list[list[tuple[int, int, float]]] = []
    Bf_ent: list[tuple[int, int, float]] = []
    rhs: list[float] = []
    nfree = p0 + mlam + 1  # z, w, r
    z_of = lambda i: i
    w_of = lambda q: p0 + q
    r_idx = p0 + mlam

    def new_row(v: float) -> int:
        rhs.append(float(v))
        return len(rhs) - 1

    for k, blk in enumerate(prob.blocks):
        blocks.append(Block(blk.kind, blk.size, f"dualcone-{blk.label}", blk.basis, blk.multiplier))
        ents: list[tuple[int, int, float]] = []
        Ak = prob.A[k].tocsc()
        if blk.kind == "diag":
            for a in range(blk.size):
                r = new_row(0.0)
                ents.append((r, a, 1.0))
                col = Ak[:, a]
                for i, v in zip(col.indices, col.data):
                    Bf_ent.append((r, z_of(i), -float(v)))
        else:
            n = blk.size
            for a in range(n):
                for b in range(a, n):
                    r = new_row(0.0)
                    if a == b:
                        ents.append((r, a * n + b, 1.0))
                    else:
                        ents.append((r, a * n + b, 0.5))
                        ents.append((r, b * n + a, 0.5))
                    # the matrix entry A_ik[a, b] sits at flat index a*n+b
                    col = Ak[:, a * n + b]
                    for i, v in zip(col.indices, col.data):
                        Bf_ent.append((r, z_of(i), -float(v)))
        A_ent.append(ents)

    # the (c - B' z) rows
    for j in range(F):
        if j in Jset:
            continue
        r = new_row(prob.c_free[j])
        col = Bcsc[:, j]
        for i, v in zip(col.indices, col.data):
            Bf_ent.append((r, z_of(i), float(v)))
    w_rows = []
    for q, j in enumerate(J):
        r = new_row(prob.c_free[j])
        w_rows.append(r)
        Bf_ent.append((r, w_of(q), 1.0))
        col = Bcsc[:, j]
        for i, v in zip(col.indices, col.data):
            Bf_ent.append((r, z_of(i), float(v)))

    # arrow block |w| <= r
    blocks.append(Block("sdp", nrm, "soft-cap-arrow"))
    ents = []
    r = new_row(0.0)
    ents.append((r, 0, 1.0))
    Bf_ent.append((r, r_idx, -1.0))
    for q in range(1, nrm):
        r = new_row(0.0)
        ents.append((r, q * nrm + q, 1.0))
        Bf_ent.append((r, r_idx, -1.0))
        r = new_row(0.0)
        ents.append((r, 0 * nrm + q, 0.5))
        ents.append((r, q * nrm + 0, 0.5))
        Bf_ent.append((r, w_of(q - 1), -1.0))
    for qa in range(1, nrm):
        for qb in range(qa + 1, nrm):
            r = new_row(0.0)
            ents.append((r, qa * nrm + qb, 0.5))
            ents.append((r, qb * nrm + qa, 0.5))
    A_ent.append(ents)

    p = len(rhs)
    A = []
    for blk, ents in zip(blocks, A_ent):
        if ents:
            rr, cc, vv = zip(*ents)
        else:
            rr, cc, vv = (), (), ()
        A.append(sp.coo_matrix((vv, (rr, cc)), shape=(p, blk.vec_len())).tocsr())
    if Bf_ent:
        rr, cc, vv = zip(*Bf_ent)
    else:
        rr, cc, vv = (), (), ()
    Bmat = sp.coo_matrix((vv, (rr, cc)), shape=(p, nfree)).tocsr()
    c_free = np.zeros(nfree)
    c_free[: p0] = prob.rhs
    c_free[r_idx] = radius
    labels = [("z", i) for i in range(p0)] + [("w", q) for q in range(mlam)] + [("r", 0)]
    return SdpProblem(
        blocks=blocks,
        n_free=nfree,
        A=A,
        B=Bmat,
        rhs=np.array(rhs),
        C=[np.zeros((b.size, b.size)) if b.kind == "sdp" else np.zeros(b.size) for b in blocks],
        c_free=c_free,
        sense="min",
        free_labels=labels,
        meta={
            "kind": "sos-softcap",
            "radius": radius,
            "w_rows": w_rows,
            "lambda_indices": J,
        },
    )


def attainment_diagnostic(
    target,
    t: Optional[int] = None,
    schedule: Sequence[float] = (1e-2, 1e-4, 1e-6),
    mode: str = "auto",
    base_opts: Optional[SolveOptions] = None,
    target_value: Optional[float] = None,
) -> AttainmentDiagnosis:
    """Diagnose dual attainment by tracking the multiplier norm along a
    schedule of decreasing gap tolerances.

    ``target`` is either a GmpInstance (the dual strengthening at order ``t``
    is built, reduced when the support supports it and mode is "auto") or a
    zero-argument callable returning an SOS-side SdpProblem.
    """
    schedule = list(schedule)
    if len(schedule) < 3 or any(
        later >= earlier for earlier, later in zip(schedule, schedule[1:])
    ):
        raise ValueError("schedule must be strictly decreasing with >= 3 points")

    base_opts = base_opts or SolveOptions()
    moment_prob = None
    if callable(target):
        factory: Callable[[], SdpProblem] = target
    else:
        inst: GmpInstance = target
        if t is None:
            raise ValueError("relaxation order t required with an instance target")
        use_reduced = mode == "reduced" or (
            mode == "auto"
            and inst.support.equalities
            and (
                inst.support.real_radical_declared
                or inst.support.is_sphere_product()
            )
        )
        if use_reduced:
            qb = standard_monomial_basis(inst.support.equalities, 2 * t)
            moment_prob, sos_prob = build_reduced_relaxation(
                inst, t, qb=qb, validate=False
            )

            def factory() -> SdpProblem:
                return sos_prob

        else:
            moment_prob = build_moment_relaxation(inst, t, validate=False)

            def factory() -> SdpProblem:
                return build_sos_strengthening(inst, t, validate=False)

    # optimum estimate: the moment side converges reliably even when the dual
    # multiplier diverges (no gap between the pair)
    if target_value is None:
        if moment_prob is not None:
            ref = solve_sdp(moment_prob, SolveOptions(tol=1e-9, max_iters=250))
            target_value = ref.primal_objective
        else:
            ref = solve_sdp(factory(), base_opts)
            target_value = (
                (ref.primal_objective + ref.dual_objective) / 2.0
                if ref.ok
                else ref.dual_objective
            )

    # sweep norm caps by decades: v(R) is the best value certifiable with
    # |lambda| <= R, computed through the soft-penalty dual (which has a
    # strictly feasible点 and converges cleanly); the norm recorded for a gap
    # is the multiplier norm at the smallest cap landing within that gap
    tightest = schedule[-1] * (1.0 + abs(target_value))
    radii: list[float] = []
    cap_values: list[float] = []
    cap_norms: list[float] = []
    cap_status: list[str] = []
    base_prob = factory()
    for R in _RADIUS_LADDER:
        prob = _soft_capped_program(base_prob, R)
        sol = solve_sdp(
            prob,
            SolveOptions(
                tol=base_opts.tol,
                max_iters=base_opts.max_iters,
                precision=base_opts.precision,
                verbose=base_opts.verbose,
            ),
        )
        lam = sol.multipliers[prob.meta["w_rows"]]
        radii.append(R)
        cap_values.append(sol.primal_objective)
        cap_norms.append(float(np.linalg.norm(lam)))
        cap_status.append(sol.status)
        if sol.primal_objective >= target_value - tightest:
            break
        if (
            len(cap_values) >= 2
            and abs(cap_values[-1] - cap_values[-2])
            <= 1e-11 * (1.0 + abs(cap_values[-1]))
        ):
            break  # value plateau: larger multipliers buy nothing

    norms, values, statuses = [], [], []
    partial = False
    for gap in schedule:
        need = target_value - gap * (1.0 + abs(target_value))
        hit = None
        for i, v in enumerate(cap_values):
            if v >= need - 1e-9 * (1.0 + abs(need)):
                hit = i
                break
        if hit is None:
            hit = len(cap_values) - 1
            partial = True
        norms.append(cap_norms[hit])
        values.append(cap_values[hit])
        statuses.append(cap_status[hit])
    slope, stable, verdict = _fit_verdict(schedule, norms)
    return AttainmentDiagnosis(
        schedule=schedule,
        norms=norms,
        values=values,
        statuses=statuses,
        slope=slope,
        stable_tail=stable,
        verdict=verdict,
        partial=partial,
        note=f"norm-capped dual sweep at value target {target_value:+.6e}",
    )


# -- discretized (grid) dual: proxy for the infinite-dimensional dual ------------


def _grid_lp(
    inst: GmpInstance, points: np.ndarray
) -> tuple[SdpProblem, np.ndarray, np.ndarray]:
    """sup b.lambda  s.t.  f(x_k) - sum_i lambda_i h_i(x_k) >= 0 per grid point."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    fvals = inst.objective.evaluate_batch(pts)
    hvals = np.array([h.evaluate_batch(pts) for h in inst.h_polys])  # (m, N)
    m, N = hvals.shape

    blocks = [Block("diag", N, "slack")]
    rows, cols, vals = [], [], []
    brows, bcols, bvals = [], [], []
    for k in range(N):
        rows.append(k)
        cols.append(k)
        vals.append(1.0)
        for i in range(m):
            brows.append(k)
            bcols.append(i)
            bvals.append(hvals[i, k])
    A = [sp.coo_matrix((vals, (rows, cols)), shape=(N, N)).tocsr()]
    B = sp.coo_matrix((bvals, (brows, bcols)), shape=(N, m)).tocsr()
    prob = SdpProblem(
        blocks=blocks,
        n_free=m,
        A=A,
        B=B,
        rhs=fvals.copy(),
        C=[np.zeros(N)],
        c_free=inst.b_values.copy(),
        sense="max",
        free_labels=[("lambda", i) for i in range(m)],
        meta={"kind": "grid-dual", "points": N},
    )
    return prob, fvals, hvals


def min_norm_multiplier(
    inst: GmpInstance,
    points: np.ndarray,
    value_band: float = 1e-6,
    opts: Optional[SolveOptions] = None,
) -> tuple[float, np.ndarray, float]:
    """Two-phase discretized dual: optimal value, then the minimum-norm
    near-optimal multiplier (norm epigraph via a Schur-complement block).

    Returns (optimal value, argmin-norm lambda, its norm).
    """
    opts = opts or SolveOptions()
    lp, fvals, hvals = _grid_lp(inst, points)
    sol = solve_sdp(lp, opts)
    vstar = sol.primal_objective
    band = value_band * (1.0 + abs(vstar))
    lam = np.zeros(len(inst.constraints))
    for R in _RADIUS_LADDER:
        prob = _soft_capped_program(lp, R)
        s2 = solve_sdp(prob, opts)
        lam = s2.multipliers[prob.meta["w_rows"]]
        if s2.primal_objective >= vstar - band:
            break
    return vstar, lam, float(np.linalg.norm(lam))


def sampled_dual_diagnostic(
    inst: GmpInstance,
    grids: Sequence[np.ndarray],
    opts: Optional[SolveOptions] = None,
) -> AttainmentDiagnosis:
    """Proxy for attainment of the infinite-dimensional dual.

    The dual nonnegativity constraint is sampled on finer and finer grids of
    the support; the norm of the minimum-norm near-optimal multiplier of each
    discretized dual is tracked.  Bounded norms indicate an attained dual,
    norms diverging with the grid density replicate the diverging feasible
    sequences of the non-attained examples.
    """
    norms, values, statuses = [], [], []
    spacings = []
    for pts in grids:
        pts = np.asarray(pts, dtype=float)
        vstar, lam, norm = min_norm_multiplier(inst, pts, opts=opts)
        norms.append(norm)
        values.append(vstar)
        statuses.append("optimal")
        flat = np.sort(pts.ravel()) if pts.ndim == 1 else np.sort(pts[:, 0])
        spacings.append(float(np.min(np.diff(flat[flat >= 0])) if len(flat) > 1 else 1.0))
    # nonzero grid spacing plays the role of the gap tolerance
    slope, stable, verdict = _fit_verdict(spacings, norms)
    return AttainmentDiagnosis(
        schedule=spacings,
        norms=norms,
        values=values,
        statuses=statuses,
        slope=slope,
        stable_tail=stable,
        verdict=verdict,
        note="discretized-dual proxy",
    )
