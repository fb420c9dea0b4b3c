"""Sum-of-squares relaxations of the dichotomic Bell QCQP.

Each observable (correlation kind) or "+" projector (probability kind) is
expanded in the Gell-Mann basis, ``O_m = sum_n y_mn sigma_n``. Fixing the
traces ``y_m0 = z_m / sqrt(d)`` leaves the traceless coefficients as the
free real variables ``x``. Objective and constraints are quadratic in ``x``.

The relaxation looks for the smallest ``gamma`` with

    gamma - f(x) = mu_0(x) + sum_j nu_j(x) f_j(x),

``mu_0`` a sum of squares (Gram matrix over monomials) and ``nu_j`` of the
chosen multiplier degree.
"""

from __future__ import annotations

import copy
import itertools
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .linalg import ValidationError, anticommutator_constants, correlation_tensor, gellmann_basis
from .model import CORRELATION, BellInequality, DensityState
from .sdp import (
    ACCEPTABLE,
    SdpError,
    SdpInequality,
    SdpOptions,
    SdpStandard,
    lmi_value,
    solve_inequality,
    solve_standard,
)

log = logging.getLogger(__name__)

GRAM_CAP = 400
MULTIPLIER_BOX = 1e4
# parametric relaxations certify S <= level + COMPAT_TOL; many trace
# assignments have a bound exactly at the level, which leaves no interior
COMPAT_TOL = 1e-7
SYMMETRY_TOL = 1e-12


class SizeError(ValueError):
    """Relaxation would exceed the configured Gram-matrix cap."""


@dataclass
class Quadratic:
    """``c + g.x + x^T Q x`` with symmetric ``Q``."""

    c: float
    g: np.ndarray
    Q: np.ndarray

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return float(self.c + self.g @ x + x @ self.Q @ x)

    def scaled(self, s):
        return Quadratic(self.c * s, self.g * s, self.Q * s)

    def max_coefficient(self):
        return max(abs(self.c), np.max(np.abs(self.g), initial=0.0), np.max(np.abs(self.Q), initial=0.0))

    def is_zero(self, tol=1e-13):
        return self.max_coefficient() <= tol

    def to_dict(self):
        """Monomial dictionary ``{(i, j, ...) sorted: coeff}``."""
        out = {}
        if self.c:
            out[()] = float(self.c)
        for i in np.flatnonzero(self.g):
            out[(int(i),)] = float(self.g[i])
        n = len(self.g)
        for i in range(n):
            for j in range(i, n):
                v = self.Q[i, j] if i == j else self.Q[i, j] + self.Q[j, i]
                if v:
                    out[(i, j)] = float(v)
        return out


@dataclass
class PolynomialProgram:
    """maximize f(x) subject to f_j(x) = 0."""

    n: int
    objective: Quadratic
    equalities: list
    labels: list  # (operator index, basis index) per variable
    parity: np.ndarray  # +1 / -1 per variable under complex conjugation
    real_state: bool
    operators: list  # per operator: dict(party, index, d, z, fixed)
    constant_shift: float = 0.0

    @property
    def symmetric(self):
        return self.real_state

    def coefficient_map(self, settings_coeffs):
        """Free-variable vector from full per-operator coefficient vectors."""
        x = np.zeros(self.n)
        for i, (m, nidx) in enumerate(self.labels):
            x[i] = settings_coeffs[m][nidx]
        return x


def _operator_list(ineq: BellInequality, dA, dB):
    ops = [dict(party="A", index=k, d=dA) for k in range(ineq.mA)]
    ops += [dict(party="B", index=l, d=dB) for l in range(ineq.mB)]
    return ops


def allowed_traces(kind, d):
    if kind == CORRELATION:
        return list(range(-d, d + 1, 2))
    return list(range(0, d + 1))


def to_polynomial_program(state: DensityState, ineq: BellInequality, z=None) -> PolynomialProgram:
    """Real polynomial form of the dichotomic Bell problem.

    ``z`` fixes the operator traces (observables for correlation kind, "+"
    projectors for probability kind); ``None`` leaves them free.
    """
    if not ineq.dichotomic:
        raise ValidationError("upper bounds are only available for dichotomic inequalities (nA = nB = 2)")
    dA, dB = state.dA, state.dB
    T = correlation_tensor(state.rho, dA, dB)
    real_state = bool(np.max(np.abs(state.rho.imag), initial=0.0) <= SYMMETRY_TOL)
    ops = _operator_list(ineq, dA, dB)
    nops = len(ops)
    if z is not None:
        z = [int(v) for v in z]
        if len(z) != nops:
            raise ValidationError(f"trace assignment needs {nops} entries, got {len(z)}")
        for m, (op, zm) in enumerate(zip(ops, z)):
            if zm not in allowed_traces(ineq.kind, op["d"]):
                raise ValidationError(f"trace z[{m}] = {zm} is not allowed for d={op['d']} ({ineq.kind})")

    # per operator: full coefficient vector y_m = y0_m + S_m x
    labels, parity = [], []
    const = []
    index = []
    for m, op in enumerate(ops):
        d = op["d"]
        sym = gellmann_basis(d).symmetric_mask
        y0 = np.zeros(d * d)
        fixed = False
        if z is not None:
            y0[0] = z[m] / math.sqrt(d)
            if ineq.kind == CORRELATION:
                fixed = abs(z[m]) == d
            else:
                fixed = z[m] in (0, d)
        free = [] if fixed else (list(range(1, d * d)) if z is not None else list(range(d * d)))
        idx = {}
        for nidx in free:
            idx[nidx] = len(labels)
            labels.append((m, nidx))
            parity.append(1 if sym[nidx] else -1)
        op.update(z=None if z is None else z[m], fixed=fixed)
        const.append(y0)
        index.append(idx)
    n = len(labels)

    def affine(m):
        """(y0, S) with y_m = y0 + S x."""
        d = ops[m]["d"]
        S = np.zeros((d * d, n))
        for nidx, i in index[m].items():
            S[nidx, i] = 1.0
        return const[m], S

    aff = [affine(m) for m in range(nops)]

    # objective
    if ineq.kind == CORRELATION:
        J = ineq.joint
        a = np.zeros(ineq.mA)
        b = np.zeros(ineq.mB)
        c = 0.0
    else:
        J, a, b, c = ineq.plus_form()
    obj = Quadratic(float(c), np.zeros(n), np.zeros((n, n)))
    sA = math.sqrt(dA)
    sB = math.sqrt(dB)
    for k in range(ineq.mA):
        yk0, Sk = aff[k]
        for l in range(ineq.mB):
            if not J[k, l]:
                continue
            yl0, Sl = aff[ineq.mA + l]
            # y_k^T T y_l
            obj.c += J[k, l] * (yk0 @ T @ yl0)
            obj.g += J[k, l] * (Sk.T @ T @ yl0 + Sl.T @ T.T @ yk0)
            cross = Sk.T @ T @ Sl
            obj.Q += J[k, l] * (cross + cross.T) / 2
        if a[k]:
            # tr(rho P (x) 1) = sqrt(dB) * y_k . T[:, 0]
            obj.c += a[k] * sB * (yk0 @ T[:, 0])
            obj.g += a[k] * sB * (Sk.T @ T[:, 0])
    for l in range(ineq.mB):
        if b[l]:
            yl0, Sl = aff[ineq.mA + l]
            obj.c += b[l] * sA * (yl0 @ T[0, :])
            obj.g += b[l] * sA * (Sl.T @ T[0, :])

    # constraints, one per operator and basis component
    eqs = []
    for m, op in enumerate(ops):
        if op["fixed"]:
            continue
        d = op["d"]
        P = anticommutator_constants(d)
        y0, S = aff[m]
        for comp in range(d * d):
            Pn = P[comp]
            q = Quadratic(float(y0 @ Pn @ y0), 2 * S.T @ Pn @ y0, S.T @ Pn @ S)
            if ineq.kind == CORRELATION:
                q.c -= math.sqrt(d) if comp == 0 else 0.0
            else:
                q.c -= y0[comp]
                q.g = q.g - S[comp]
            q.Q = (q.Q + q.Q.T) / 2
            if not q.is_zero():
                eqs.append(q)
    return PolynomialProgram(n, obj, eqs, labels, np.array(parity, dtype=int), real_state, ops)


# ---------------------------------------------------------------------------
# monomials


def monomials(n, max_degree):
    """Graded-lexicographic monomials as sorted variable-index tuples."""
    out = []
    for deg in range(max_degree + 1):
        out.extend(itertools.combinations_with_replacement(range(n), deg))
    return out


def _mono_mul(a, b):
    return tuple(sorted(a + b))


def _parity_of(mono, parity):
    s = 1
    for i in mono:
        s *= parity[i]
    return s


def _poly_parity(q: Quadratic, parity):
    """+1 / -1 if ``q`` is even / odd under the conjugation, 0 if mixed."""
    sig = set()
    for mono, v in q.to_dict().items():
        if abs(v) > 1e-13:
            sig.add(_parity_of(mono, parity))
    if len(sig) > 1:
        return 0
    return sig.pop() if sig else 1


# ---------------------------------------------------------------------------
# relaxations


@dataclass
class Relaxation:
    degree: int
    problem: object  # SdpInequality (degree 0) or SdpStandard (degree 2)
    basis: list  # Gram monomials per block
    multiplier_monomials: list  # per equality, monomials of nu_j
    monomial_index: dict
    scale: float
    program: PolynomialProgram
    equalities: list
    gram_dimension: int
    blocks: list = field(default_factory=list)  # parity per Gram block
    param: Quadratic | None = None
    level: float = 0.0


@dataclass
class SosCertificate:
    gamma: float
    gram: list  # Gram blocks (unscaled)
    gram_basis: list
    multipliers: list  # list of {monomial: coeff}
    equalities: list
    residual: float = float("nan")
    min_gram_eigenvalue: float = float("nan")

    def identity_text(self, program: PolynomialProgram) -> str:
        """Human-readable form of the identity ``gamma - f = mu_0 + sum nu_j f_j``."""
        def var(i):
            m, nidx = program.labels[i]
            return f"y[{m},{nidx}]"

        def fmt(poly):
            terms = []
            for mono, v in sorted(poly.items(), key=lambda kv: (len(kv[0]), kv[0])):
                if abs(v) < 1e-14:
                    continue
                name = "*".join(var(i) for i in mono) or "1"
                terms.append(f"{v:+.12g}*{name}")
            return " ".join(terms) or "0"

        lines = [f"gamma = {self.gamma:.15g}", f"f = {fmt(program.objective.to_dict())}"]
        for j, (q, nu) in enumerate(zip(self.equalities, self.multipliers)):
            lines.append(f"f_{j} = {fmt(q.to_dict())}")
            lines.append(f"nu_{j} = {fmt(nu)}")
        for b, (basis, G) in enumerate(zip(self.gram_basis, self.gram)):
            lines.append(f"mu_0 block {b} basis = [{', '.join('*'.join(var(i) for i in m) or '1' for m in basis)}]")
            for row in G:
                lines.append("  " + " ".join(f"{v:.12g}" for v in row))
        lines.append(f"residual = {self.residual:.3e}")
        return "\n".join(lines) + "\n"


def relax(pp: PolynomialProgram, multiplier_degree=0, gram_cap=GRAM_CAP, use_symmetry=None,
          param: Quadratic | None = None, level=0.0) -> Relaxation:
    """SDP whose optimal value bounds ``max f`` from above.

    With ``param`` the objective becomes ``f + p * param`` for a scalar
    ``p`` in [0, 1], ``gamma`` is fixed to ``level`` and the SDP minimises
    ``p`` (flip the sign of the ``p`` cost to maximise). The feasible ``p``
    form the interval where ``level`` is a certified bound.
    """
    if multiplier_degree not in (0, 2):
        raise ValidationError("multiplier degree must be 0 or 2")
    use_symmetry = pp.symmetric if use_symmetry is None else (use_symmetry and pp.symmetric)
    base = pp.objective
    if param is not None:
        base = Quadratic(base.c - level, base.g, base.Q)
        if use_symmetry and _poly_parity(param, pp.parity) != 1:
            use_symmetry = False
    scale = max(base.max_coefficient(), 0.0 if param is None else param.max_coefficient(), 1e-300)
    obj = base.scaled(1 / scale)
    par = None if param is None else param.scaled(1 / scale)
    eqs = [q.scaled(1 / q.max_coefficient()) for q in pp.equalities]
    if use_symmetry and any(_poly_parity(q, pp.parity) == 0 for q in eqs):
        use_symmetry = False  # the block split needs constraints of pure parity
    if multiplier_degree == 0:
        rel = _relax_degree0(pp, obj, eqs, scale, gram_cap, use_symmetry, par)
    else:
        rel = _relax_degree2(pp, obj, eqs, scale, gram_cap, use_symmetry, par)
    rel.param = param
    rel.level = level
    return rel


def _relax_degree0(pp, obj, eqs, scale, gram_cap, use_symmetry, param=None):
    n = pp.n
    N = n + 1
    if N > gram_cap:
        raise SizeError(f"Gram dimension {N} exceeds cap {gram_cap}")
    # G(gamma, nu) = [[gamma - c - sum nu c_j, -(g + sum nu g_j)/2], [., -(Q + sum nu Q_j)]]
    if use_symmetry:
        keep = [j for j, q in enumerate(eqs) if _poly_parity(q, pp.parity) == 1]
        even = np.flatnonzero(pp.parity == 1)
        odd = np.flatnonzero(pp.parity == -1)
        groups = [np.concatenate([[0], even + 1]), odd + 1]
    else:
        keep = list(range(len(eqs)))
        groups = [np.arange(N)]
    groups = [g for g in groups if len(g)]

    def full(c, g, Q):
        M = np.zeros((N, N))
        M[0, 0] = c
        M[0, 1:] = M[1:, 0] = g / 2
        M[1:, 1:] = Q
        return M

    G0f = -full(obj.c, obj.g, obj.Q)
    if param is None:
        Gf = [full(1.0, np.zeros(n), np.zeros((n, n)))]
    else:
        Gf = [-full(param.c, param.g, param.Q)]
    for j in keep:
        q = eqs[j]
        Gf.append(-full(q.c, q.g, q.Q))
    G0 = [G0f[np.ix_(g, g)] for g in groups]
    G = [np.array([M[np.ix_(g, g)] for M in Gf]) for g in groups]
    if param is not None:
        # 0 <= p <= 1, and |nu_j| <= MULTIPLIER_BOX so the feasible set is
        # compact (degenerate trace assignments otherwise stall the solver)
        k = len(Gf) - 1
        G0.append(np.diag([0.0, 1.0] + [MULTIPLIER_BOX] * (2 * k)))
        box = np.zeros((len(Gf), 2 + 2 * k, 2 + 2 * k))
        box[0, 0, 0], box[0, 1, 1] = 1.0, -1.0
        for j in range(k):
            box[j + 1, 2 + j, 2 + j] = 1.0
            box[j + 1, 2 + k + j, 2 + k + j] = -1.0
        G.append(box)
    cvec = np.zeros(len(Gf))
    cvec[0] = 1.0
    prob = SdpInequality(cvec, G0, G)
    mono = [(), *[(i,) for i in range(n)]]
    basis = [[mono[i] for i in g] for g in groups]
    return Relaxation(0, prob, basis, [[()] if j in keep else [] for j in range(len(eqs))],
                      {m: i for i, m in enumerate(mono)}, scale, pp, eqs, N,
                      blocks=[1, -1][:len(groups)] if use_symmetry else [1])


def _ideal_pivots(eqs, basis, tol=1e-9):
    """Leading monomials of the constraint span, highest degree first."""
    order = sorted(basis, key=lambda m: (len(m), m), reverse=True)
    col = {m: i for i, m in enumerate(order)}
    rows = []
    pivots = []
    for q in eqs:
        v = np.zeros(len(order))
        for mono, c in q.to_dict().items():
            v[col[mono]] = c
        for piv, r in zip(pivots, rows):
            v = v - v[piv] * r
        nz = np.flatnonzero(np.abs(v) > tol * max(1.0, np.abs(v).max(initial=0.0)))
        if len(nz) == 0:
            continue
        piv = nz[0]
        r = v / v[piv]
        rows = [row - row[piv] * r for row in rows]
        rows.append(r)
        pivots.append(piv)
    return {order[p] for p in pivots}


def _independent_columns(B, tol=1e-10):
    """Indices of a maximal linearly independent column subset (pivoted QR)."""
    if B.shape[1] == 0:
        return np.zeros(0, dtype=int)
    _, R, piv = sla.qr(B, mode="economic", pivoting=True)
    d = np.abs(np.diag(R))
    rank = int(np.sum(d > tol * max(d[0], 1.0)))
    return np.sort(piv[:rank])


def _relax_degree2(pp, obj, eqs, scale, gram_cap, use_symmetry, param=None):
    n = pp.n
    basis_all = monomials(n, 2)
    N = len(basis_all)
    if N > gram_cap:
        raise SizeError(f"Gram dimension {N} exceeds cap {gram_cap} (n = {n} variables)")
    par = pp.parity
    # f_j lies in the span of the Gram basis, which forces a singular moment
    # matrix; drop one pivot monomial per constraint (reduction modulo the
    # ideal, absorbed by the degree-2 multipliers) so both sides are strictly feasible
    mult_basis = basis_all  # multipliers keep the full degree-2 space
    drop = _ideal_pivots(eqs, basis_all)
    basis_all = [m for m in basis_all if m not in drop]
    if use_symmetry:
        groups = [[m for m in basis_all if _parity_of(m, par) == s] for s in (1, -1)]
        groups = [g for g in groups if g]
        block_par = [s for s in (1, -1) if any(_parity_of(m, par) == s for m in basis_all)]
    else:
        groups = [basis_all]
        block_par = [1]
    all_monos = monomials(n, 4)
    if use_symmetry:
        all_monos = [m for m in all_monos if _parity_of(m, par) == 1]
    mindex = {m: i for i, m in enumerate(all_monos)}
    nrows = len(all_monos)

    # Gram blocks: tr(F_alpha Z) = sum_{beta+gamma=alpha} Z[beta, gamma]
    F = []
    F0 = []
    for g in groups:
        sz = len(g)
        rows, cols = [], []
        for a in range(sz):
            for b in range(sz):
                rows.append(mindex[_mono_mul(g[a], g[b])])
                cols.append(a * sz + b)
        F.append(sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(nrows, sz * sz)))
        F0.append(np.zeros((sz, sz)))

    # free variables: gamma (or the parameter p), then nu_j coefficients
    mult_monos = []
    brow, bcol, bval = [], [], []
    col = 1
    if param is None:
        brow.append(mindex[()])
        bcol.append(0)
        bval.append(-1.0)
    else:
        for mono, v in param.to_dict().items():
            brow.append(mindex[mono])
            bcol.append(0)
            bval.append(v)
    for q in eqs:
        qd = q.to_dict()
        qpar = _poly_parity(q, par) if use_symmetry else 1
        mm = [m for m in mult_basis if not use_symmetry or _parity_of(m, par) == qpar]
        mult_monos.append(mm)
        for mono in mm:
            for qm, v in qd.items():
                prod = _mono_mul(mono, qm)
                if prod in mindex:
                    brow.append(mindex[prod])
                    bcol.append(col)
                    bval.append(v)
            col += 1
    B = sp.csr_matrix((bval, (brow, bcol)), shape=(nrows, col)).toarray()
    # syzygies (nu_i = f_j, nu_j = -f_i) make multiplier columns dependent;
    # keep an independent subset so the Newton system stays nonsingular
    keep_cols = _independent_columns(B[:, 1:]) + 1
    keep_mask = np.zeros(col, dtype=bool)
    keep_mask[0] = True
    keep_mask[keep_cols] = True
    pos = 1
    for j, mm in enumerate(mult_monos):
        mult_monos[j] = [m for i, m in enumerate(mm) if keep_mask[pos + i]]
        pos += len(mm)
    B = B[:, keep_mask]
    col = B.shape[1]
    rhs = np.zeros(nrows)
    for mono, v in obj.to_dict().items():
        if mono in mindex:
            rhs[mindex[mono]] -= v
    # monomials no Gram pair reaches are matched by multipliers alone; drop
    # the implied ones so the equality rows stay independent
    gram_rows = np.zeros(nrows, dtype=bool)
    for Fb in F:
        gram_rows[np.unique(Fb.nonzero()[0])] = True
    loose = np.flatnonzero(~gram_rows)
    if len(loose):
        indep = loose[_independent_columns(B[loose].T)]
        redundant = np.setdiff1d(loose, indep)
        if len(redundant):
            coef = np.linalg.lstsq(B[indep].T, B[redundant].T, rcond=None)[0]
            if np.max(np.abs(coef.T @ rhs[indep] - rhs[redundant]), initial=0.0) > 1e-9:
                raise SdpError("inconsistent multiplier-only equations in degree-2 relaxation")
            keep_rows = np.setdiff1d(np.arange(nrows), redundant)
            F = [Fb[keep_rows] for Fb in F]
            B = B[keep_rows]
            rhs = rhs[keep_rows]
            mindex = {all_monos[r]: i for i, r in enumerate(keep_rows)}
    c_free = np.zeros(col)
    c_free[0] = 1.0
    if param is not None:
        # 0 <= p <= 1 through two scalar slacks: p - s1 = 0, p + s2 = 1
        nr = B.shape[0]
        F = [sp.vstack([Fb, sp.csr_matrix((2, Fb.shape[1]))]).tocsr() for Fb in F]
        F.append(sp.csr_matrix(([-1.0], ([nr], [0])), shape=(nr + 2, 1)))
        F.append(sp.csr_matrix(([1.0], ([nr + 1], [0])), shape=(nr + 2, 1)))
        F0 += [np.zeros((1, 1)), np.zeros((1, 1))]
        extra = np.zeros((2, col))
        extra[:, 0] = 1.0
        B = np.vstack([B, extra])
        rhs = np.concatenate([rhs, [0.0, 1.0]])
    prob = SdpStandard(F0, F, rhs, free=B, c_free=c_free)
    return Relaxation(2, prob, groups, mult_monos, mindex, scale, pp, eqs,
                      sum(len(g) for g in groups), blocks=block_par)


# ---------------------------------------------------------------------------
# certificate verification (independent of the SDP data)


def _poly_add(acc, poly, s=1.0):
    for m, v in poly.items():
        acc[m] = acc.get(m, 0.0) + s * v


def _poly_mul(p, q):
    out = {}
    for a, u in p.items():
        for b, v in q.items():
            m = _mono_mul(a, b)
            out[m] = out.get(m, 0.0) + u * v
    return out


def identity_residual(cert: SosCertificate, program: PolynomialProgram):
    """Max |coefficient| of ``gamma - f - mu_0 - sum nu_j f_j`` (unscaled)."""
    acc = {(): cert.gamma}
    _poly_add(acc, program.objective.to_dict(), -1.0)
    for q, nu in zip(cert.equalities, cert.multipliers):
        _poly_add(acc, _poly_mul(nu, q.to_dict()), -1.0)
    for basis, G in zip(cert.gram_basis, cert.gram):
        for a, ma in enumerate(basis):
            for b, mb in enumerate(basis):
                if G[a, b]:
                    m = _mono_mul(ma, mb)
                    acc[m] = acc.get(m, 0.0) - G[a, b]
    return max((abs(v) for v in acc.values()), default=0.0)


@dataclass
class SosResult:
    value: float
    certificate: SosCertificate
    status: str
    iterations: int
    gap: float
    gram_dimension: int
    num_constraints: int


def _degree0_certificate(rel, x):
    s = rel.scale
    gram = [Gb * s for Gb in lmi_value(rel.problem, x)[:len(rel.basis)]]
    nus, pos = [], 1
    for mm in rel.multiplier_monomials:
        if mm:
            nus.append({(): float(x[pos]) * s})
            pos += 1
        else:
            nus.append({})
    return gram, nus


def _degree2_certificate(rel, sol):
    s = rel.scale
    u = sol.free
    gram = [Z * s for Z in sol.primal[:len(rel.basis)]]
    nus, pos = [], 1
    for mm in rel.multiplier_monomials:
        nus.append({m: float(u[pos + i]) * s for i, m in enumerate(mm)})
        pos += len(mm)
    return gram, nus


def solve_relaxation(rel: Relaxation, opts: SdpOptions | None = None) -> SosResult:
    pp = rel.program
    if pp.n == 0 or (rel.degree == 0 and rel.gram_dimension == 1 and not rel.equalities):
        # nothing free: the bound is the objective value itself
        gamma = pp.objective.c
        cert = SosCertificate(gamma, [np.zeros((1, 1))], [[()]], [{} for _ in rel.equalities], rel.equalities)
        cert.residual = identity_residual(cert, pp)
        cert.min_gram_eigenvalue = 0.0
        return SosResult(gamma, cert, "optimal", 0, 0.0, 1, 0)
    s = rel.scale
    if rel.degree == 0:
        sol = solve_inequality(rel.problem, opts)
        if sol.status not in ACCEPTABLE:
            raise SdpError(
                f"degree-0 relaxation ({pp.n} variables, {len(rel.equalities)} equalities): {sol.status}", sol)
        x = sol.primal
        gamma = x[0] * s
        gram, nus = _degree0_certificate(rel, x)
        ncons = rel.problem.num_variables
    else:
        sol = solve_standard(rel.problem, opts)
        if sol.status not in ACCEPTABLE:
            raise SdpError(
                f"degree-2 relaxation ({pp.n} variables, Gram {rel.gram_dimension}, "
                f"{rel.problem.num_constraints} equations): {sol.status}", sol)
        gamma = sol.free[0] * s
        gram, nus = _degree2_certificate(rel, sol)
        ncons = rel.problem.num_constraints
    cert = SosCertificate(float(gamma), [np.asarray(G) for G in gram], rel.basis, nus, rel.equalities)
    cert.residual = identity_residual(cert, pp)
    cert.min_gram_eigenvalue = float(min(np.linalg.eigvalsh((G + G.T) / 2)[0] for G in cert.gram))
    return SosResult(float(gamma), cert, sol.status, sol.iterations, sol.gap, rel.gram_dimension, ncons)


def solve_sos(state: DensityState, ineq: BellInequality, z=None, degree=0, opts=None,
              gram_cap=GRAM_CAP, use_symmetry=None) -> SosResult:
    pp = to_polynomial_program(state, ineq, z)
    rel = relax(pp, degree, gram_cap, use_symmetry)
    return solve_relaxation(rel, opts)


@dataclass
class ParametricEndpoint:
    """Extreme ``p`` in [0, 1] at which ``level`` is still a certified bound."""

    value: float | None  # None: no p in [0, 1] is certified
    status: str
    certificate: SosCertificate | None = None
    iterations: int = 0


def solve_parametric(rel: Relaxation, maximize=False, opts: SdpOptions | None = None) -> ParametricEndpoint:
    """Solve a relaxation built with ``param``; returns the smallest (or largest) ``p``."""
    if rel.param is None:
        raise ValidationError("relaxation has no parameter")
    pp = rel.program
    sign = -1.0 if maximize else 1.0
    if pp.n == 0:
        # constant objective: c0 - level + p c1 <= 0 is a half-line in p
        c0 = pp.objective.c - rel.level
        c1 = rel.param.c
        if abs(c1) < 1e-300:
            ok = c0 <= 0
            return ParametricEndpoint((1.0 if maximize else 0.0) if ok else None, "optimal" if ok else "infeasible")
        root = -c0 / c1
        lo, hi = (0.0, min(1.0, root)) if c1 > 0 else (max(0.0, root), 1.0)
        if lo > hi:
            return ParametricEndpoint(None, "infeasible")
        return ParametricEndpoint(hi if maximize else lo, "optimal")
    prob = copy.copy(rel.problem)
    if rel.degree == 0:
        prob.c = prob.c.copy()
        prob.c[0] = sign
        sol = solve_inequality(prob, opts)
    else:
        prob.c_free = prob.c_free.copy()
        prob.c_free[0] = sign
        sol = solve_standard(prob, opts)
    if sol.status == "infeasible":
        return ParametricEndpoint(None, sol.status, iterations=sol.iterations)
    if sol.status not in ACCEPTABLE:
        raise SdpError(f"parametric degree-{rel.degree} relaxation ({pp.n} variables): {sol.status}", sol)
    if rel.degree == 0:
        p = float(sol.primal[0])
        gram, nus = _degree0_certificate(rel, sol.primal)
    else:
        p = float(sol.free[0])
        gram, nus = _degree2_certificate(rel, sol)
    p = min(max(p, 0.0), 1.0)
    cert = SosCertificate(rel.level, [np.asarray(G) for G in gram], rel.basis, nus, rel.equalities)
    o, q = pp.objective, rel.param
    shifted = replace(pp, objective=Quadratic(o.c + p * q.c, o.g + p * q.g, o.Q + p * q.Q))
    cert.residual = identity_residual(cert, shifted)
    cert.min_gram_eigenvalue = float(min(np.linalg.eigvalsh((G + G.T) / 2)[0] for G in cert.gram))
    return ParametricEndpoint(p, sol.status, cert, sol.iterations)


def parametric_relaxation(family, ineq: BellInequality, z=None, degree=0, level=None,
                          gram_cap=GRAM_CAP, use_symmetry=None) -> Relaxation:
    """Relaxation for an affine state family ``p -> family(p)`` on [0, 1]."""
    s0, s1 = family(0.0), family(1.0)
    mid = family(0.5)
    if np.max(np.abs(mid.rho - (s0.rho + s1.rho) / 2)) > 1e-12:
        raise ValidationError("state family is not affine in p")
    pp0 = to_polynomial_program(s0, ineq, z)
    pp1 = to_polynomial_program(s1, ineq, z)
    o0, o1 = pp0.objective, pp1.objective
    param = Quadratic(o1.c - o0.c, o1.g - o0.g, o1.Q - o0.Q)
    pp0.real_state = pp0.real_state and pp1.real_state
    level = (ineq.beta_lhv if level is None else level) + COMPAT_TOL
    return relax(pp0, degree, gram_cap, use_symmetry, param=param, level=level)
