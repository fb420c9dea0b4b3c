"""Primal-dual interior-point solver for small dense semidefinite programs.

Two user-facing forms are supported.

Standard form::

    maximize    -tr(F0 Z) - c_free . u
    subject to  tr(F_m Z) + (B_free u)_m = c_m,   Z >= 0 (block diagonal)

Inequality form::

    minimize    c . x
    subject to  G0 + sum_m x_m G_m >= 0

Both are mapped onto one internal primal/dual pair

    (P)  min <C, X> + c_u.u   s.t.  A(X) + B u = b,  X >= 0
    (D)  max b.y              s.t.  A*(y) + Z = C,  B^T y = c_u,  Z >= 0

and solved by an infeasible path-following method using the HKM search
direction with Mehrotra's predictor-corrector. Blocks may be real
symmetric or complex Hermitian; constraint matrices for a block are either
a dense array of shape ``(m, n, n)`` or a ``scipy.sparse`` matrix of shape
``(m, n*n)`` holding the row-major flattened entries.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

log = logging.getLogger(__name__)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
MAX_ITERATIONS = "max-iterations"
# residuals and gap within SdpOptions.inaccurate_tol but not tol
INACCURATE = "inaccurate"
ACCEPTABLE = (OPTIMAL, INACCURATE)


class SdpError(RuntimeError):
    """An SDP could not be solved to the requested accuracy."""

    def __init__(self, message, solution=None):
        super().__init__(message)
        self.solution = solution


@dataclass
class SdpOptions:
    tol: float = 1e-8
    max_iter: int = 200
    step_fraction: float = 0.98
    # objective magnitude treated as a divergence (infeasibility) certificate
    divergence: float = 1e8
    chunk: int = 256
    inaccurate_tol: float = 1e-6
    # stop when a near-converged score has not halved in this many iterations
    stall_window: int = 25


@dataclass
class SdpStandard:
    F0: list
    F: list
    c: np.ndarray
    free: np.ndarray | None = None
    c_free: np.ndarray | None = None

    def __post_init__(self):
        self.F0 = [np.asarray(b) for b in self.F0]
        self.c = np.asarray(self.c, dtype=float).reshape(-1)
        _check_blocks(self.F0, self.F, len(self.c))
        if self.free is not None:
            self.free = np.asarray(self.free, dtype=float).reshape(len(self.c), -1)
            p = self.free.shape[1]
            self.c_free = (np.zeros(p) if self.c_free is None
                           else np.asarray(self.c_free, dtype=float).reshape(p))

    @property
    def num_constraints(self):
        return len(self.c)


@dataclass
class SdpInequality:
    c: np.ndarray
    G0: list
    G: list

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).reshape(-1)
        self.G0 = [np.asarray(b) for b in self.G0]
        _check_blocks(self.G0, self.G, len(self.c))

    @property
    def num_variables(self):
        return len(self.c)


@dataclass
class SdpSolution:
    status: str
    objective: float
    primal: object
    dual: object
    primal_residual: float
    dual_residual: float
    gap: float
    iterations: int
    free: np.ndarray | None = None
    history: list = field(default_factory=list, repr=False)

    @property
    def ok(self):
        return self.status == OPTIMAL


def _check_blocks(C, A, m):
    if len(C) != len(A):
        raise ValueError("objective and constraint block lists differ in length")
    for k, (Cb, Ab) in enumerate(zip(C, A)):
        if Cb.ndim != 2 or Cb.shape[0] != Cb.shape[1]:
            raise ValueError(f"block {k} is not square")
        n = Cb.shape[0]
        if sp.issparse(Ab):
            if Ab.shape != (m, n * n):
                raise ValueError(f"sparse block {k} has shape {Ab.shape}, expected {(m, n * n)}")
        else:
            Ab = np.asarray(Ab)
            if Ab.shape != (m, n, n):
                raise ValueError(f"block {k} has shape {Ab.shape}, expected {(m, n, n)}")
        if np.max(np.abs(Cb - Cb.conj().T), initial=0.0) > 1e-9 * max(1.0, np.abs(Cb).max(initial=0)):
            raise ValueError(f"block {k} of the objective matrix is not Hermitian")


# ---------------------------------------------------------------------------
# internal block-constraint operator


class _Block:
    """Constraint data of one PSD block."""

    def __init__(self, C, A, m):
        self.n = C.shape[0]
        self.sparse = sp.issparse(A)
        if not self.sparse:
            A = np.asarray(A)
        cplx = np.iscomplexobj(C) or (A.dtype.kind == "c")
        if cplx and not self.sparse:
            cplx = bool(np.any(np.abs(np.asarray(A).imag) > 0)) or bool(np.any(np.abs(C.imag) > 0))
        elif cplx:
            cplx = bool(np.any(np.abs(A.data.imag) > 0)) or bool(np.any(np.abs(np.imag(C)) > 0))
        self.dtype = complex if cplx else float
        self.C = np.array(C, dtype=self.dtype)
        self.C = (self.C + self.C.conj().T) / 2
        if self.sparse:
            self.A = sp.csr_matrix(A, dtype=self.dtype)
            self.A.eliminate_zeros()
            self._prepare_sparse()
        else:
            self.A = np.array(A, dtype=self.dtype).reshape(m, self.n * self.n)

    def _prepare_sparse(self):
        A = self.A.tocsr()
        m = A.shape[0]
        counts = np.diff(A.indptr)
        self.kmax = int(counts.max(initial=0))
        n = self.n
        rows = np.repeat(np.arange(m), counts)
        slot = np.arange(A.nnz) - A.indptr[rows]
        self.pad_a = np.zeros((m, max(self.kmax, 1)), dtype=int)
        self.pad_b = np.zeros((m, max(self.kmax, 1)), dtype=int)
        self.pad_v = np.zeros((m, max(self.kmax, 1)), dtype=self.dtype)
        self.pad_a[rows, slot] = A.indices // n
        self.pad_b[rows, slot] = A.indices % n
        self.pad_v[rows, slot] = A.data
        self.AT = A.T.tocsr()

    def scale_rows(self, s):
        if self.sparse:
            self.A = sp.diags(s) @ self.A
            self.A = self.A.tocsr()
            self._prepare_sparse()
        else:
            self.A = self.A * s[:, None]

    def row_norms(self):
        if self.sparse:
            return np.sqrt(np.asarray(abs(self.A).power(2).sum(axis=1)).ravel())
        return np.linalg.norm(self.A, axis=1)

    def apply(self, X):
        """A(X)_i = Re tr(A_i X)."""
        v = X.T.reshape(-1)
        return np.real(self.A @ v)

    def adjoint(self, y):
        if self.sparse:
            M = (self.AT @ y).reshape(self.n, self.n)
        else:
            M = (y @ self.A).reshape(self.n, self.n)
        return (M + M.conj().T) / 2

    def schur(self, X, Zi, chunk):
        """M_ij = Re tr(A_i X A_j Z^{-1})."""
        n = self.n
        m = self.A.shape[0]
        if not self.sparse:
            A3 = self.A.reshape(m, n, n)
            P = np.matmul(np.matmul(X, A3), Zi)
            Pt = P.transpose(0, 2, 1).reshape(m, n * n)
            return np.real(self.A @ Pt.T)
        M = np.empty((m, m))
        for s in range(0, m, chunk):
            e = min(m, s + chunk)
            U = X[:, self.pad_a[s:e]].transpose(1, 0, 2) * self.pad_v[s:e, None, :]
            W = Zi[self.pad_b[s:e], :]
            P = np.matmul(U, W)
            Pt = P.transpose(0, 2, 1).reshape(e - s, n * n)
            M[:, s:e] = np.real(self.A @ Pt.T)
        return M


def _sym(K):
    return (K + K.conj().T) / 2


def _max_step(X, dX):
    """Largest alpha with X + alpha dX PSD (inf if unbounded)."""
    try:
        L = np.linalg.cholesky(X)
    except np.linalg.LinAlgError:
        return 0.0
    T = sla.solve_triangular(L, dX, lower=True)
    T = sla.solve_triangular(L, T.conj().T, lower=True)
    w = np.linalg.eigvalsh(_sym(T))
    lam = w[0]
    return np.inf if lam >= 0 else -1.0 / lam


def _inv_psd(Z):
    L = np.linalg.cholesky(Z)
    Li = sla.solve_triangular(L, np.eye(Z.shape[0], dtype=Z.dtype), lower=True)
    return Li.conj().T @ Li


class _Conic:
    def __init__(self, C, A, b, B=None, cu=None):
        self.m = len(b)
        self.blocks = [_Block(np.asarray(Cb), Ab, self.m) for Cb, Ab in zip(C, A)]
        self.b = np.asarray(b, dtype=float).copy()
        self.B = None if B is None or B.shape[1] == 0 else np.asarray(B, dtype=float).copy()
        self.cu = None if self.B is None else np.asarray(cu, dtype=float).copy()
        # row scaling for conditioning
        norms = np.zeros(self.m)
        for blk in self.blocks:
            norms += blk.row_norms() ** 2
        if self.B is not None:
            norms += np.sum(self.B ** 2, axis=1)
        norms = np.sqrt(norms)
        norms[norms == 0] = 1.0
        self.row_scale = 1.0 / norms
        for blk in self.blocks:
            blk.scale_rows(self.row_scale)
        self.b *= self.row_scale
        if self.B is not None:
            self.B *= self.row_scale[:, None]

    def A(self, Xs):
        out = np.zeros(self.m)
        for blk, X in zip(self.blocks, Xs):
            out += blk.apply(X)
        return out

    def At(self, y):
        return [blk.adjoint(y) for blk in self.blocks]

    def solve(self, opts):
        blocks = self.blocks
        m = self.m
        ntot = sum(b.n for b in blocks)
        hist = []

        if m == 0:
            return self._trivial()

        normA = [np.sqrt(np.sum(blk.row_norms() ** 2)) for blk in blocks]
        X, Z = [], []
        for blk, nA in zip(blocks, normA):
            n = blk.n
            rn = blk.row_norms()
            xi = max(10.0, np.sqrt(n), n * np.max((1 + np.abs(self.b)) / (1 + rn)))
            eta = max(10.0, np.sqrt(n), max(nA, np.linalg.norm(blk.C)))
            X.append(xi * np.eye(n, dtype=blk.dtype))
            Z.append(eta * np.eye(n, dtype=blk.dtype))
        y = np.zeros(m)
        p = 0 if self.B is None else self.B.shape[1]
        u = np.zeros(p)

        normb = np.linalg.norm(self.b)
        normC = np.sqrt(sum(np.linalg.norm(blk.C) ** 2 for blk in blocks)
                        + (0 if p == 0 else np.linalg.norm(self.cu) ** 2))

        best = None
        best_mark = (np.inf, 0)
        status = MAX_ITERATIONS
        it = 0
        stall = 0
        for it in range(1, opts.max_iter + 1):
            Atr = self.At(y)
            Rd = [blk.C - a - z for blk, a, z in zip(blocks, Atr, Z)]
            rp = self.b - self.A(X) - (0 if p == 0 else self.B @ u)
            ru = None if p == 0 else self.cu - self.B.T @ y
            pobj = sum(np.real(np.vdot(blk.C, x)) for blk, x in zip(blocks, X)) + (0 if p == 0 else self.cu @ u)
            dobj = self.b @ y
            xz = sum(np.real(np.vdot(x, z)) for x, z in zip(X, Z))
            mu = xz / ntot
            relp = np.linalg.norm(rp) / (1 + normb)
            reld = np.sqrt(sum(np.linalg.norm(r) ** 2 for r in Rd)
                           + (0 if p == 0 else np.linalg.norm(ru) ** 2)) / (1 + normC)
            gap = max(abs(pobj - dobj), xz) / (1 + abs(pobj) + abs(dobj))
            hist.append((pobj, dobj, relp, reld, gap))
            if not np.all(np.isfinite(hist[-1])):
                break
            score = max(relp, reld, gap)
            if best is None or score < 0.5 * best_mark[0]:
                best_mark = (score, it)
            elif it - best_mark[1] > opts.stall_window and best_mark[0] <= 1e-4:
                break  # stuck close to convergence
            if best is None or score < best[0]:
                best = (score, [x.copy() for x in X], y.copy(), [z.copy() for z in Z], u.copy(),
                        (pobj, dobj, relp, reld, gap))
            if relp <= opts.tol and reld <= opts.tol and gap <= opts.tol:
                status = OPTIMAL
                break
            if abs(dobj) > opts.divergence and reld <= 1e-6 and dobj > 0:
                status = INFEASIBLE
                break
            if abs(pobj) > opts.divergence and relp <= 1e-6 and pobj < 0:
                status = UNBOUNDED
                break

            try:
                Zi = [_inv_psd(z) for z in Z]
            except np.linalg.LinAlgError:
                break
            M = np.zeros((m, m))
            for blk, x, zi in zip(blocks, X, Zi):
                M += blk.schur(x, zi, opts.chunk)
            M = (M + M.T) / 2
            if not np.all(np.isfinite(M)):
                break
            solver = _NewtonSolver(M, self.B)

            XRZ = [_sym(x @ r @ zi) for x, r, zi in zip(X, Rd, Zi)]

            def direction(K):
                h = rp - self.A([k - s for k, s in zip(K, XRZ)])
                dy, du = solver.solve(h, ru)
                dZ = [r - a for r, a in zip(Rd, self.At(dy))]
                dX = [k - _sym(x @ dz @ zi) for k, x, dz, zi in zip(K, X, dZ, Zi)]
                return dX, dy, dZ, du

            # predictor
            Kp = [-x for x in X]
            dX, dy, dZ, du = direction(Kp)
            ap = min(1.0, opts.step_fraction * min(_max_step(x, d) for x, d in zip(X, dX)))
            ad = min(1.0, opts.step_fraction * min(_max_step(z, d) for z, d in zip(Z, dZ)))
            xz_pred = sum(np.real(np.vdot(x + ap * dx, z + ad * dz))
                          for x, dx, z, dz in zip(X, dX, Z, dZ))
            sigma = min(1.0, max(0.0, (xz_pred / xz))) ** max(1.0, 3 * min(ap, ad) ** 2)
            # corrector
            Kc = [sigma * mu * zi - x - _sym(dx @ dz @ zi)
                  for x, zi, dx, dz in zip(X, Zi, dX, dZ)]
            dX, dy, dZ, du = direction(Kc)
            frac = min(opts.step_fraction, 0.9 + 0.09 * min(ap, ad))
            ap = min(1.0, frac * min(_max_step(x, d) for x, d in zip(X, dX)))
            ad = min(1.0, frac * min(_max_step(z, d) for z, d in zip(Z, dZ)))
            if max(ap, ad) < 1e-10:
                stall += 1
                if stall > 3:
                    break
            X = [_sym(x + ap * d) for x, d in zip(X, dX)]
            Z = [_sym(z + ad * d) for z, d in zip(Z, dZ)]
            y = y + ad * dy
            if p:
                u = u + ap * du

        if status != OPTIMAL and best is not None:
            score, X, y, Z, u, _ = best
            if status not in (INFEASIBLE, UNBOUNDED):
                status = INACCURATE if score <= opts.inaccurate_tol else MAX_ITERATIONS
        return self._pack(status, X, y, Z, u, it, hist)

    def _pack(self, status, X, y, Z, u, it, hist):
        p = 0 if self.B is None else self.B.shape[1]
        rp = self.b - self.A(X) - (0 if p == 0 else self.B @ u)
        Rd = [blk.C - a - z for blk, a, z in zip(self.blocks, self.At(y), Z)]
        pobj = sum(np.real(np.vdot(blk.C, x)) for blk, x in zip(self.blocks, X)) + (0 if p == 0 else self.cu @ u)
        dobj = self.b @ y
        xz = sum(np.real(np.vdot(x, z)) for x, z in zip(X, Z))
        normb = np.linalg.norm(self.b)
        normC = np.sqrt(sum(np.linalg.norm(blk.C) ** 2 for blk in self.blocks)
                        + (0 if p == 0 else np.linalg.norm(self.cu) ** 2))
        ru = 0.0 if p == 0 else np.linalg.norm(self.cu - self.B.T @ y)
        return dict(
            status=status, X=X, y=y * self.row_scale, Z=Z, u=u, pobj=pobj, dobj=dobj,
            relp=np.linalg.norm(rp) / (1 + normb),
            reld=np.sqrt(sum(np.linalg.norm(r) ** 2 for r in Rd) + ru ** 2) / (1 + normC),
            gap=max(abs(pobj - dobj), xz) / (1 + abs(pobj) + abs(dobj)),
            it=it, hist=hist)

    def _trivial(self):
        X, Z = [], []
        status = OPTIMAL
        for blk in self.blocks:
            w = np.linalg.eigvalsh(blk.C)
            if w[0] < -1e-12:
                status = UNBOUNDED
            X.append(np.zeros_like(blk.C))
            Z.append(blk.C.copy())
        return dict(status=status, X=X, y=np.zeros(0), Z=Z, u=np.zeros(0),
                    pobj=0.0, dobj=0.0, relp=0.0, reld=0.0, gap=0.0, it=0, hist=[])


class _NewtonSolver:
    """Solves [[M, B], [B^T, 0]] [dy; du] = [h; r]."""

    refine_steps = 2

    def __init__(self, M, B):
        self.M = M
        self.B = B
        self.U = None
        reg = 0.0
        diag = np.abs(np.diag(M)).max(initial=1.0)
        empty = np.flatnonzero(np.diag(M) <= 1e-13 * diag)
        if B is not None and len(empty):
            # rows touching only free variables leave M singular; since
            # B^T dy = r, adding B W B^T to M (W = w B_E^T B_E) and B W r to h
            # leaves the solution unchanged and makes M positive definite
            self.BE = B[empty]
            self.U = B @ self.BE.T
            self.w = diag / max(np.max(np.sum(self.U ** 2, axis=1)), 1e-300)
            M = M + self.w * (self.U @ self.U.T)
        for _ in range(8):
            try:
                Mr = M
                if reg:
                    Mr = M.copy()
                    Mr[np.diag_indices_from(Mr)] += reg
                self.cf = sla.cho_factor(Mr, check_finite=False)
                break
            except np.linalg.LinAlgError:
                reg = max(reg * 100, 1e-14 * diag)
        else:
            raise np.linalg.LinAlgError("Schur complement is not positive definite")
        if B is not None:
            self.MiB = sla.cho_solve(self.cf, B, check_finite=False)
            S = B.T @ self.MiB
            S = (S + S.T) / 2
            try:
                self.Sf = ("chol", sla.cho_factor(S, check_finite=False))
            except np.linalg.LinAlgError:
                self.Sf = ("lstsq", S)

    def solve(self, h, r):
        dy, du = self._solve_once(h, r)
        if self.B is None:
            return dy, du
        # iterative refinement against the unaugmented saddle-point system
        for _ in range(self.refine_steps):
            eh = h - self.M @ dy - self.B @ du
            er = r - self.B.T @ dy
            cy, cu = self._solve_once(eh, er)
            dy = dy + cy
            du = du + cu
        return dy, du

    def _solve_once(self, h, r):
        if self.U is not None:
            h = h + self.w * (self.U @ (self.BE @ r))
        Mih = sla.cho_solve(self.cf, h, check_finite=False)
        if self.B is None:
            return Mih, None
        rhs = self.B.T @ Mih - r
        kind, F = self.Sf
        if kind == "chol":
            du = sla.cho_solve(F, rhs, check_finite=False)
        else:
            du = np.linalg.lstsq(F, rhs, rcond=None)[0]
        dy = Mih - self.MiB @ du
        return dy, du


# ---------------------------------------------------------------------------
# public entry points


def solve_standard(problem: SdpStandard, opts: SdpOptions | None = None) -> SdpSolution:
    """Solve ``max -tr(F0 Z)  s.t.  tr(F_m Z) (+ B u) = c_m, Z >= 0``."""
    opts = opts or SdpOptions()
    conic = _Conic(problem.F0, problem.F, problem.c, problem.free, problem.c_free)
    r = conic.solve(opts)
    sol = SdpSolution(
        status=r["status"], objective=-r["pobj"], primal=r["X"], dual=r["y"],
        primal_residual=r["relp"], dual_residual=r["reld"], gap=r["gap"],
        iterations=r["it"], free=r["u"] if problem.free is not None else None,
        history=r["hist"])
    log.debug("standard SDP: %s obj=%.10g it=%d", sol.status, sol.objective, sol.iterations)
    return sol


def solve_inequality(problem: SdpInequality, opts: SdpOptions | None = None) -> SdpSolution:
    """Solve ``min c.x  s.t.  G0 + sum x_m G_m >= 0``."""
    opts = opts or SdpOptions()
    neg = [(-G if sp.issparse(G) else -np.asarray(G)) for G in problem.G]
    conic = _Conic(problem.G0, neg, -problem.c)
    r = conic.solve(opts)
    status = r["status"]
    # dual-side divergence means the LMI problem itself is unbounded below, and vice versa
    if status == INFEASIBLE:
        status = UNBOUNDED
    elif status == UNBOUNDED:
        status = INFEASIBLE
    sol = SdpSolution(
        status=status, objective=-r["dobj"], primal=r["y"], dual=r["X"],
        primal_residual=r["reld"], dual_residual=r["relp"], gap=r["gap"],
        iterations=r["it"], history=r["hist"])
    log.debug("inequality SDP: %s obj=%.10g it=%d", sol.status, sol.objective, sol.iterations)
    return sol


def lmi_value(problem: SdpInequality, x):
    """Blocks of ``G0 + sum x_m G_m``."""
    out = []
    for G0, G in zip(problem.G0, problem.G):
        n = G0.shape[0]
        if sp.issparse(G):
            out.append(G0 + (G.T @ x).reshape(n, n))
        else:
            out.append(G0 + np.tensordot(x, np.asarray(G), axes=1))
    return out


# ---------------------------------------------------------------------------
# debug dump


def _mat_json(M):
    M = np.asarray(M.toarray() if sp.issparse(M) else M)
    return [[[float(v.real), float(v.imag)] for v in row] for row in M]


def problem_to_json(problem) -> dict:
    """Plain-JSON view of a problem; matrices are nested ``[re, im]`` pairs."""
    def blocks(mats, n_constraints):
        out = []
        for G0, G in zip(*mats):
            n = G0.shape[0]
            Gd = G.toarray().reshape(n_constraints, n, n) if sp.issparse(G) else np.asarray(G)
            out.append({"size": n, "constant": _mat_json(G0),
                        "coefficients": [_mat_json(g) for g in Gd]})
        return out

    if isinstance(problem, SdpStandard):
        doc = {"form": "standard", "c": problem.c.tolist(),
               "blocks": blocks((problem.F0, problem.F), len(problem.c))}
        if problem.free is not None:
            doc["free"] = problem.free.tolist()
            doc["c_free"] = problem.c_free.tolist()
        return doc
    if isinstance(problem, SdpInequality):
        return {"form": "inequality", "c": problem.c.tolist(),
                "blocks": blocks((problem.G0, problem.G), len(problem.c))}
    raise TypeError(f"not an SDP problem: {type(problem).__name__}")


def dump_problem(problem, path):
    with open(path, "w") as fh:
        json.dump(problem_to_json(problem), fh)
