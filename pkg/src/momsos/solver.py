"""Dense primal-dual interior-point solver for block SDPs with free variables.

The method is infeasible-start path following with the HKM search direction
and a Mehrotra predictor-corrector.  For a problem

    min  sum_k <C_k, X_k> + c . y
    s.t. sum_k <A_ik, X_k> + (B y)_i = b_i,   X_k PSD,  y free,

the complementarity X_k Z_k = mu I is linearized as dX Z + X dZ = Rc
(dX symmetrized afterwards), which reduces the Newton system to the
augmented form

    [ H  B ] [du]   [ rp - A(Rc Zi) + A(X Rd Zi) ]
    [ B' 0 ] [dy] = [ rf ]

with the Schur complement H = A (X kron Zi) A'.  Free variables stay in the
augmented system and are eliminated by one pivoted LU factorization per
iteration (shared by predictor and corrector); they are never split into
differences of PSD variables.

Blocks come in two kinds: dense symmetric PSD ("sdp") and entrywise
nonnegative vectors ("diag", semantically diagonal PSD blocks), the latter
making embedded linear programs cheap.

Precision.  Instances whose dual is not attained (the interesting
counterexamples of this problem class) have optimal faces without relative
interior; the objective error of a path-following iterate then decays only
like sqrt(mu), and plain double precision bottoms out near 1e-5.  For small
problems the solver therefore runs its residual arithmetic, complementarity
products, and Newton refinement in extended precision (x86 80-bit
longdouble), with LAPACK factorizations kept in float64, which pushes the
attainable mu to ~1e-13 and objective errors below 1e-6.  Large problems use
the plain float64 path.  Everything is deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from .relax import SdpProblem

__all__ = ["SolveOptions", "SdpSolution", "solve_sdp"]

_EXTENDED_LIMIT = 300  # max p + F for the automatic extended-precision path


@dataclass
class SolveOptions:
    tol: float = 1e-8
    gap_tol: Optional[float] = None   # relative duality gap target (defaults to tol)
    feas_tol: Optional[float] = None  # residual target (defaults to tol)
    max_iters: int = 150
    step_fraction: float = 0.98
    precision: str = "auto"           # "auto" | "double" | "extended"
    stall_limit: int = 30
    block_scales: Optional[list] = None  # per-block magnitude hints for the start
    verbose: bool = False

    def resolved(self) -> tuple[float, float]:
        gap = self.tol if self.gap_tol is None else self.gap_tol
        feas = self.tol if self.feas_tol is None else self.feas_tol
        return gap, feas


@dataclass
class SdpSolution:
    status: str  # optimal | primal-infeasible | dual-unbounded-suspect | max-iterations
    primal_objective: float
    dual_objective: float
    X: list[np.ndarray]
    Z: list[np.ndarray]
    free_values: np.ndarray
    multipliers: np.ndarray
    rel_gap: float
    primal_residual: float
    dual_residual: float
    iterations: int
    mu: float
    history: list[dict] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.status == "optimal"

    def free_by_label(self, prob: SdpProblem) -> dict:
        return {label: float(v) for label, v in zip(prob.free_labels, self.free_values)}


def _sym(M: np.ndarray) -> np.ndarray:
    return (M + M.T) / 2.0


def _chol_jitter(x: np.ndarray) -> np.ndarray:
    """float64 Cholesky with escalating jitter; degenerate faces round off PD."""
    x = np.asarray(x, dtype=float)
    base = 1.0 + abs(float(np.trace(x))) / max(1, x.shape[0])
    for jitter in (0.0, 1e-14, 1e-12, 1e-9, 1e-6):
        try:
            return np.linalg.cholesky(x + jitter * base * np.eye(x.shape[0]))
        except np.linalg.LinAlgError:
            continue
    raise np.linalg.LinAlgError("matrix far from positive definite")


def _max_step(x, dx, kind: str) -> float:
    """Largest alpha keeping x + alpha dx in the cone (cap applied by caller)."""
    if kind == "diag":
        dxf = np.asarray(dx, dtype=float)
        xf = np.asarray(x, dtype=float)
        neg = dxf < 0
        if not np.any(neg):
            return np.inf
        return float(np.min(-xf[neg] / dxf[neg]))
    try:
        L = _chol_jitter(x)
    except np.linalg.LinAlgError:
        return 0.0  # iterate has left the cone beyond repair; freeze and stall out
    M = la.solve_triangular(L, np.asarray(dx, dtype=float), lower=True)
    M = la.solve_triangular(L, M.T, lower=True)
    lam = float(np.linalg.eigvalsh(_sym(M))[0])
    if lam >= 0:
        return np.inf
    return -1.0 / lam


def _psd_inverse(Zk: np.ndarray, wd) -> np.ndarray:
    """Inverse of a PD matrix; two Newton corrections in the work dtype."""
    Lz = _chol_jitter(Zk)
    Zi = la.cho_solve((Lz, True), np.eye(Zk.shape[0])).astype(wd)
    if wd is not np.float64:
        Zw = Zk.astype(wd)
        for _ in range(2):
            Zi = Zi + Zi @ (np.eye(Zk.shape[0], dtype=wd) - Zw @ Zi)
        Zi = (Zi + Zi.T) / 2
    return Zi


def _initial_point(prob: SdpProblem, wd, block_scales=None):
    """Scale-aware identity start in the style of common dense IPM codes."""
    b, c = prob.rhs, prob.c_free
    bnorm = 1.0 + float(np.abs(b).max(initial=0.0))
    X, Z = [], []
    for k, blk in enumerate(prob.blocks):
        n = blk.size
        Anorms = np.sqrt(np.asarray(prob.A[k].multiply(prob.A[k]).sum(axis=1)).ravel())
        arow = float(Anorms.max(initial=0.0))
        Cn = float(np.linalg.norm(prob.C[k]))
        xi = max(10.0, np.sqrt(n), n * bnorm / (1.0 + arow))
        eta = max(10.0, np.sqrt(n), arow, Cn, float(np.abs(c).max(initial=0.0)))
        if block_scales is not None and block_scales[k]:
            xi = max(xi, float(block_scales[k]))
        if blk.kind == "diag":
            X.append(np.full(n, xi, dtype=wd))
            Z.append(np.full(n, eta, dtype=wd))
        else:
            X.append(np.eye(n, dtype=wd) * wd(xi))
            Z.append(np.eye(n, dtype=wd) * wd(eta))
    y = np.zeros(prob.n_free, dtype=wd)
    u = np.zeros(prob.n_rows, dtype=wd)
    return X, y, Z, u


def solve_sdp(prob: SdpProblem, opts: Optional[SolveOptions] = None) -> SdpSolution:
    """Solve a block SDP; see the module docstring for the algorithm.

    Objectives are reported in the problem's stated sense: for a ``max``
    problem ``primal_objective`` is the attained value of the stated
    maximization and ``dual_objective`` its bound from the conic dual.
    """
    opts = opts or SolveOptions()
    gap_tol, feas_tol = opts.resolved()
    if not prob.blocks:
        raise ValueError("problem needs at least one PSD or diag block")

    p, F = prob.n_rows, prob.n_free
    if opts.precision == "extended":
        wd = np.longdouble
    elif opts.precision == "double":
        wd = np.float64
    else:
        wd = (
            np.longdouble
            if (p + F <= _EXTENDED_LIMIT and np.longdouble is not np.float64)
            else np.float64
        )
    extended = wd is np.longdouble

    sign = wd(-1.0) if prob.sense == "max" else wd(1.0)
    C = [sign * np.asarray(Ck, dtype=wd) for Ck in prob.C]
    c = sign * np.asarray(prob.c_free, dtype=wd)
    b = np.asarray(prob.rhs, dtype=wd)

    # operator views: dense work-dtype matrices in extended mode, sparse otherwise
    if extended:
        A_ops = [Ak.toarray().astype(wd) for Ak in prob.A]
        B_op = prob.B.toarray().astype(wd)
    else:
        A_ops = list(prob.A)
        B_op = prob.B
    B_dense = prob.B.toarray() if sp.issparse(prob.B) else np.asarray(prob.B)

    Ntot = sum(blk.size for blk in prob.blocks)
    X, y, Z, u = _initial_point(prob, wd, opts.block_scales)
    best_score = np.inf
    best = None
    stall = 0
    history: list[dict] = []
    status = "max-iterations"
    it = 0

    bnorm = 1.0 + float(np.linalg.norm(b.astype(float)))
    datanorm = 1.0 + max(
        max((float(np.linalg.norm(Ck.astype(float))) for Ck in C), default=0.0),
        float(np.linalg.norm(c.astype(float))),
    )

    def apply_A(mats):
        out = np.zeros(p, dtype=wd)
        for k, blk in enumerate(prob.blocks):
            v = mats[k].ravel() if blk.kind == "sdp" else mats[k]
            out += A_ops[k] @ v
        return out

    def apply_AT(vec):
        outs = []
        for k, blk in enumerate(prob.blocks):
            v = A_ops[k].T @ vec
            if blk.kind == "sdp":
                outs.append(_symw(v.reshape(blk.size, blk.size)))
            else:
                outs.append(v)
        return outs

    def _symw(M):
        return (M + M.T) / 2

    def objectives():
        pobj = sum(float(np.vdot(Ck, Xk)) for Ck, Xk in zip(C, X)) + float(c @ y)
        dobj = float(b @ u)
        return pobj, dobj

    def residuals():
        rp = b - apply_A(X) - B_op @ y
        ATu = apply_AT(u)
        Rd = [Ck - Zk - Au for Ck, Zk, Au in zip(C, Z, ATu)]
        rf = c - B_op.T @ u
        return rp, Rd, rf

    def comp_mu(Xs, Zs):
        total = wd(0.0)
        for blk, Xk, Zk in zip(prob.blocks, Xs, Zs):
            total += np.vdot(Xk, Zk) if blk.kind == "sdp" else Xk @ Zk
        return total / Ntot

    # Gram of the constraint map, used to re-enforce the primal Newton
    # equation (the dX back-substitution amplifies rounding by ||Z^-1||) and
    # for the final feasibility projection.
    Gram = (prob.B @ prob.B.T).toarray()
    for Ak in prob.A:
        Gram += (Ak @ Ak.T).toarray()
    try:
        Lg = _chol_jitter(Gram)
    except np.linalg.LinAlgError:
        Lg = None

    def lift_primal(dX, dy, target):
        """Least-norm correction so that A(dX) + B dy = target exactly."""
        if Lg is None:
            return dX, dy
        for _ in range(2):
            defect = target - apply_A(dX) - B_op @ dy
            dn = float(np.linalg.norm(defect.astype(float)))
            if not np.isfinite(dn) or dn == 0.0:
                return dX, dy
            w = la.cho_solve((Lg, True), defect.astype(float)).astype(wd)
            dy = dy + B_op.T @ w
            out = []
            for k, blk in enumerate(prob.blocks):
                ck = A_ops[k].T @ w
                if blk.kind == "sdp":
                    out.append(_symw(dX[k] + ck.reshape(blk.size, blk.size)))
                else:
                    out.append(dX[k] + ck)
            dX = out
        return dX, dy

    for it in range(1, opts.max_iters + 1):
        rp, Rd, rf = residuals()
        mu = float(comp_mu(X, Z))
        pobj, dobj = objectives()
        pres = float(np.linalg.norm(rp.astype(float))) / bnorm
        dres = max(
            max((float(np.linalg.norm(R.astype(float))) for R in Rd), default=0.0),
            float(np.linalg.norm(rf.astype(float))),
        ) / datanorm
        relgap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
        # normalized complementarity: on instances whose dual is not attained,
        # pobj and dobj drift to the limit together, so relgap alone stops too
        # early; mu is the honest distance to optimality
        mu_norm = mu / (1.0 + abs(pobj) + abs(dobj))
        history.append(
            {"iter": it, "mu": mu, "pobj": pobj, "dobj": dobj,
             "pres": pres, "dres": dres, "relgap": relgap}
        )
        if opts.verbose:
            print(
                f"  it {it:3d}  mu {mu:9.2e}  gap {relgap:9.2e}  "
                f"pres {pres:9.2e}  dres {dres:9.2e}  pobj {pobj:+.8e}"
            )

        score = max(pres, dres, relgap, mu_norm)
        if score < 0.9 * best_score:
            stall = 0
        else:
            stall += 1
        best_score = min(best_score, score)
        # the returned point is judged by its own quality: residuals and
        # complementarity (relgap lags behind on non-attained duals)
        point_score = max(pres, dres, mu_norm)
        if best is None or point_score <= best[0]:
            best = (
                point_score,
                [Xk.copy() for Xk in X],
                y.copy(),
                [Zk.copy() for Zk in Z],
                u.copy(),
            )

        if pres <= feas_tol and dres <= feas_tol and relgap <= gap_tol and mu_norm <= gap_tol:
            status = "optimal"
            break
        if stall >= opts.stall_limit:
            status = "max-iterations"
            break

        # -- infeasibility heuristics --------------------------------------
        unorm = float(np.linalg.norm(u.astype(float)))
        if unorm > 1e6:
            bu = float(b @ u)
            if bu > 0:
                ray = max(
                    max(
                        float(np.linalg.norm((Au + Zk).astype(float)))
                        for Au, Zk in zip(apply_AT(u), Z)
                    ),
                    float(np.linalg.norm((B_op.T @ u).astype(float))),
                )
                if ray / bu < 1e-6:
                    status = "primal-infeasible"
                    break
                if bu / bnorm > 1e10 and dres <= 1e-6:
                    status = "dual-unbounded-suspect"
                    break
        if not np.isfinite(mu) or mu > 1e32:
            status = "max-iterations"
            break
        # primal objective racing to -inf with small residual: primal ray
        if pobj < -1e12 * bnorm and pres <= 1e-4:
            status = "dual-unbounded-suspect" if prob.sense == "max" else "max-iterations"
            break

        # -- Schur complement and augmented factorization -------------------
        try:
            Zi = []
            for blk, Xk, Zk in zip(prob.blocks, X, Z):
                if blk.kind == "diag":
                    Zi.append(1.0 / Zk)
                else:
                    Zi.append(_psd_inverse(Zk, wd))
        except np.linalg.LinAlgError:
            status = "max-iterations"
            break
        H = np.zeros((p, p), dtype=wd)
        for k, blk in enumerate(prob.blocks):
            Ak = A_ops[k]
            if prob.A[k].nnz == 0:
                continue
            if blk.kind == "diag":
                w = X[k] * Zi[k]
                if extended:
                    H += (Ak * w) @ Ak.T
                else:
                    H += (Ak.multiply(w) @ Ak.T).toarray()
            else:
                K = np.kron(X[k], Zi[k])
                H += (Ak @ K) @ Ak.T
        M = np.zeros((p + F, p + F), dtype=wd)
        M[:p, :p] = H
        M[:p, p:] = B_op if extended else B_dense
        M[p:, :p] = (B_op if extended else B_dense).T
        Mf = M.astype(float)
        lu = None
        mmax = 1.0 + float(np.abs(Mf).max())
        for shift in (0.0, 1e-13, 1e-10, 1e-7):
            try:
                Mreg = Mf.copy()
                if shift:
                    scale = shift * mmax
                    Mreg[:p, :p] += scale * np.eye(p)
                    Mreg[p:, p:] -= scale * np.eye(F)
                cand = la.lu_factor(Mreg)
            except la.LinAlgError:
                continue
            diag = np.abs(np.diag(cand[0]))
            if diag.min(initial=np.inf) > 1e-14 * mmax and np.all(np.isfinite(diag)):
                lu = cand
                break
        if lu is None:
            status = "max-iterations"
            break

        def newton(Rc):
            rhs1 = rp.copy()
            for k, blk in enumerate(prob.blocks):
                if blk.kind == "diag":
                    rhs1 -= A_ops[k] @ ((Rc[k] - X[k] * Rd[k]) / Z[k])
                else:
                    Mtmp = (Rc[k] - X[k] @ Rd[k]) @ Zi[k]
                    rhs1 -= A_ops[k] @ Mtmp.ravel()
            rhs = np.concatenate([rhs1, rf])
            sol = la.lu_solve(lu, rhs.astype(float)).astype(wd)
            # refinement with work-dtype residuals: recovers the solution to
            # near working precision even at condition numbers ~1e12
            for _ in range(6):
                resid = rhs - M @ sol
                rn = float(np.linalg.norm(resid.astype(float)))
                if rn <= 1e-16 * (1.0 + float(np.linalg.norm(rhs.astype(float)))):
                    break
                sol = sol + la.lu_solve(lu, resid.astype(float)).astype(wd)
            du, dy = sol[:p], sol[p:]
            dZ, dX = [], []
            ATdu = apply_AT(du)
            for k, blk in enumerate(prob.blocks):
                dZk = Rd[k] - ATdu[k]
                if blk.kind == "diag":
                    dXk = (Rc[k] - X[k] * dZk) / Z[k]
                else:
                    dXk = _symw((Rc[k] - X[k] @ dZk) @ Zi[k])
                dZ.append(dZk)
                dX.append(dXk)
            dX, dy = lift_primal(dX, dy, rp)
            return du, dy, dX, dZ

        # -- predictor -------------------------------------------------------
        frac = opts.step_fraction if relgap > 1e-5 else max(opts.step_fraction, 0.99)
        Rc_aff = [
            -Xk * Zk if blk.kind == "diag" else -(Xk @ Zk)
            for blk, Xk, Zk in zip(prob.blocks, X, Z)
        ]
        du_a, dy_a, dX_a, dZ_a = newton(Rc_aff)
        ap = min(
            (_max_step(Xk, dXk, blk.kind) for blk, Xk, dXk in zip(prob.blocks, X, dX_a)),
            default=np.inf,
        )
        ad = min(
            (_max_step(Zk, dZk, blk.kind) for blk, Zk, dZk in zip(prob.blocks, Z, dZ_a)),
            default=np.inf,
        )
        ap = min(1.0, frac * ap)
        ad = min(1.0, frac * ad)
        mu_aff = float(
            comp_mu(
                [Xk + wd(ap) * dXk for Xk, dXk in zip(X, dX_a)],
                [Zk + wd(ad) * dZk for Zk, dZk in zip(Z, dZ_a)],
            )
        )
        sigma = min(0.999, max(1e-10, (max(mu_aff, 0.0) / mu) ** 3))

        # -- corrector (Mehrotra combined step) --------------------------------
        Rc = []
        for k, blk in enumerate(prob.blocks):
            smu = wd(sigma) * wd(mu)
            if blk.kind == "diag":
                Rc.append(smu - X[k] * Z[k] - dX_a[k] * dZ_a[k])
            else:
                Rc.append(
                    smu * np.eye(blk.size, dtype=wd) - X[k] @ Z[k] - dX_a[k] @ dZ_a[k]
                )
        du, dy, dX, dZ = newton(Rc)
        ap = min(
            (_max_step(Xk, dXk, blk.kind) for blk, Xk, dXk in zip(prob.blocks, X, dX)),
            default=np.inf,
        )
        ad = min(
            (_max_step(Zk, dZk, blk.kind) for blk, Zk, dZk in zip(prob.blocks, Z, dZ)),
            default=np.inf,
        )
        ap = min(1.0, frac * ap)
        ad = min(1.0, frac * ad)

        # Mehrotra's second-order term can kill the step on degenerate faces;
        # fall back to a plain centering direction when that happens (only
        # away from the endgame, where tiny steps are the normal regime)
        if min(ap, ad) < 0.05 and relgap > 1e-4:
            Rc_c = []
            for k, blk in enumerate(prob.blocks):
                smu = wd(0.8) * wd(mu)
                if blk.kind == "diag":
                    Rc_c.append(smu - X[k] * Z[k])
                else:
                    Rc_c.append(smu * np.eye(blk.size, dtype=wd) - X[k] @ Z[k])
            du_c, dy_c, dX_c, dZ_c = newton(Rc_c)
            ap_c = min(
                (_max_step(Xk, dXk, blk.kind) for blk, Xk, dXk in zip(prob.blocks, X, dX_c)),
                default=np.inf,
            )
            ad_c = min(
                (_max_step(Zk, dZk, blk.kind) for blk, Zk, dZk in zip(prob.blocks, Z, dZ_c)),
                default=np.inf,
            )
            ap_c = min(1.0, frac * ap_c)
            ad_c = min(1.0, frac * ad_c)
            if min(ap_c, ad_c) > min(ap, ad):
                du, dy, dX, dZ = du_c, dy_c, dX_c, dZ_c
                ap, ad = ap_c, ad_c

        # reject steps that blow up the primal residual (drift guard)
        for _ in range(4):
            Xt = [Xk + wd(ap) * dXk for Xk, dXk in zip(X, dX)]
            yt = y + wd(ap) * dy
            rp_t = b - apply_A(Xt) - B_op @ yt
            if float(np.linalg.norm(rp_t.astype(float))) / bnorm <= max(10.0 * pres, 0.1):
                break
            ap *= 0.5

        X = [Xk + wd(ap) * dXk for Xk, dXk in zip(X, dX)]
        y = y + wd(ap) * dy
        Z = [Zk + wd(ad) * dZk for Zk, dZk in zip(Z, dZ)]
        u = u + wd(ad) * du

    else:
        it = opts.max_iters

    if status == "max-iterations" and best is not None:
        _, X, y, Z, u = best

    # Final polish by alternating projection: exact least-norm projection onto
    # the equality constraints, then eigenvalue clipping back into the PSD
    # cone.  Degenerate instances amplify tiny violations through huge
    # multipliers; a few rounds leave a point feasible at the 1e-13 level
    # whose objective is reported.
    rp, _, _ = residuals()
    if Lg is not None and 0 < float(np.linalg.norm(rp.astype(float))) / bnorm < 1e-4:
        for round_ in range(8):
            rp_cur = b - apply_A(X) - B_op @ y
            w = la.cho_solve((Lg, True), rp_cur.astype(float)).astype(wd)
            y = y + B_op.T @ w
            clipped = 0.0
            for k, blk in enumerate(prob.blocks):
                ck = A_ops[k].T @ w
                if blk.kind == "sdp":
                    Xk = _sym((X[k] + ck.reshape(blk.size, blk.size)).astype(float))
                    if round_ < 7:
                        evals, evecs = np.linalg.eigh(Xk)
                        if evals[0] < 0:
                            clipped = max(clipped, -float(evals[0]))
                            Xk = (evecs * np.maximum(evals, 0.0)) @ evecs.T
                    X[k] = Xk.astype(wd)
                else:
                    if round_ < 7:
                        X[k] = np.maximum(X[k] + ck, 0.0)
                    else:
                        X[k] = X[k] + ck
            if clipped == 0.0 and round_ < 7:
                # already PSD after projection: equalities now hold exactly
                rp_cur = b - apply_A(X) - B_op @ y
                w = la.cho_solve((Lg, True), rp_cur.astype(float)).astype(wd)
                y = y + B_op.T @ w
                for k, blk in enumerate(prob.blocks):
                    ck = A_ops[k].T @ w
                    if blk.kind == "sdp":
                        X[k] = _symw(X[k] + ck.reshape(blk.size, blk.size))
                    else:
                        X[k] = X[k] + ck
                break

    rp, Rd, rf = residuals()
    pobj, dobj = objectives()
    pres = float(np.linalg.norm(rp.astype(float)) / bnorm)
    dres = float(
        max(
            max((float(np.linalg.norm(R.astype(float))) for R in Rd), default=0.0),
            float(np.linalg.norm(rf.astype(float))),
        )
        / datanorm
    )
    relgap = float(abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj)))
    mu = float(comp_mu(X, Z))
    fsign = float(sign)

    return SdpSolution(
        status=status,
        primal_objective=fsign * pobj + prob.obj_offset,
        dual_objective=fsign * dobj + prob.obj_offset,
        X=[np.asarray(Xk, dtype=float) for Xk in X],
        Z=[np.asarray(Zk, dtype=float) for Zk in Z],
        free_values=np.asarray(y, dtype=float),
        multipliers=fsign * np.asarray(u, dtype=float),
        rel_gap=relgap,
        primal_residual=pres,
        dual_residual=dres,
        iterations=it,
        mu=mu,
        history=history,
    )
