"""Lagrange-dual upper bounds for dichotomic Bell inequalities.

* order 0: constant matrix multipliers on ``O_m^2 = 1`` (state independent
  in practice for CHSH-like expressions);
* fixed trace: the same dual in Gell-Mann coordinates with the traces
  ``tr O_m = z_m`` fixed, maximised over the allowed trace lattice;
* semianalytic: a closed-form feasible point of the fixed-trace dual for
  CHSH and states with vanishing coherence vectors.
"""

from __future__ import annotations

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .linalg import (
    ValidationError,
    anticommutator_constants,
    correlation_singular_values,
    correlation_tensor,
    flip_kernel,
    gellmann_basis,
    partial_trace,
    singular_values,
)
from .model import CORRELATION, PROBABILITY, BellInequality, DensityState
from .sdp import ACCEPTABLE, SdpError, SdpInequality, SdpOptions, solve_inequality
from .sos import allowed_traces, solve_sos

log = logging.getLogger(__name__)

COHERENCE_TOL = 1e-9
CHSH_JOINT = np.array([[1.0, 1.0], [1.0, -1.0]])


class PreconditionError(ValidationError):
    """A method was called outside its domain of validity."""


@dataclass
class UpperBoundResult:
    value: float
    method: str
    z: tuple | None = None
    multipliers: object = None
    t: float | None = None
    enumerated: int = 0
    heuristic: bool = False
    details: dict = field(default_factory=dict)

    def to_json(self):
        mult = self.multipliers
        if isinstance(mult, np.ndarray):
            mult = mult.tolist()
        elif isinstance(mult, list):
            mult = [m.tolist() if isinstance(m, np.ndarray) else m for m in mult]
        return {"value": self.value, "method": self.method,
                "z": None if self.z is None else list(self.z),
                "multipliers": mult, "t": self.t, "enumerated": self.enumerated,
                "heuristic": self.heuristic, "details": self.details}


def _require_dichotomic(ineq):
    if not ineq.dichotomic:
        raise ValidationError(
            "upper bounds are only implemented for dichotomic inequalities (nA = nB = 2)")


def _require_correlation(ineq):
    _require_dichotomic(ineq)
    if ineq.kind != CORRELATION:
        raise ValidationError("this bound needs a correlation-kind inequality")


def _check_sdp(sol, what):
    if sol.status not in ACCEPTABLE:
        raise SdpError(f"{what}: solver status {sol.status} (gap {sol.gap:.2e})", sol)
    if sol.status != "optimal":
        log.warning("%s: accepted %s solution (gap %.2e)", what, sol.status, sol.gap)


# ---------------------------------------------------------------------------
# order 0


def correlation_kernel(state: DensityState, ineq: BellInequality):
    """``Omega_0 = 1/2 [[0, -b (x) R], [-b^T (x) R^dagger, 0]]`` with ``R = (V rho)^{T_A}``."""
    R = flip_kernel(state.rho, state.dA, state.dB).R
    b = ineq.joint
    nA = ineq.mA * state.dA ** 2
    nB = ineq.mB * state.dB ** 2
    Om = np.zeros((nA + nB, nA + nB), dtype=complex)
    Om[:nA, nA:] = -0.5 * np.kron(b, R)
    Om[nA:, :nA] = -0.5 * np.kron(b.T, R.conj().T)
    return Om


def order0_problem(state: DensityState, ineq: BellInequality) -> SdpInequality:
    _require_correlation(ineq)
    Om = correlation_kernel(state, ineq)
    dims = [state.dA] * ineq.mA + [state.dB] * ineq.mB
    G, c = [], []
    offset = 0
    N = Om.shape[0]
    for d in dims:
        sig = gellmann_basis(d).elements
        for n in range(d * d):
            M = np.zeros((N, N), dtype=complex)
            M[offset:offset + d * d, offset:offset + d * d] = np.kron(np.eye(d), sig[n])
            G.append(M)
            c.append(math.sqrt(d) if n == 0 else 0.0)
        offset += d * d
    return SdpInequality(np.array(c), [Om], [np.array(G)])


def order0_bound(state: DensityState, ineq: BellInequality, opts: SdpOptions | None = None) -> UpperBoundResult:
    """Lowest-order Lagrange dual: min sum tr Lambda_m s.t. Omega_0 + (+) 1 (x) Lambda_m >= 0."""
    prob = order0_problem(state, ineq)
    sol = solve_inequality(prob, opts)
    _check_sdp(sol, "order-0 dual")
    dims = [state.dA] * ineq.mA + [state.dB] * ineq.mB
    lam, pos = [], 0
    for d in dims:
        lam.append(sol.primal[pos:pos + d * d].copy())
        pos += d * d
    return UpperBoundResult(sol.objective, "order0", multipliers=lam,
                            details={"gap": sol.gap, "iterations": sol.iterations})


def order0_bound_probability(state: DensityState, ineq: BellInequality, opts=None) -> UpperBoundResult:
    """Degree-0 SOS relaxation over projector constraints, traces free."""
    _require_dichotomic(ineq)
    p = ineq.to_probability()
    res = solve_sos(state, p, None, 0, opts)
    return UpperBoundResult(res.value, "order0", multipliers=res.certificate.multipliers,
                            details={"residual": res.certificate.residual, "gap": res.gap})


# ---------------------------------------------------------------------------
# fixed trace


def _expansion(state):
    T = correlation_tensor(state.rho, state.dA, state.dB)
    return T


def fixed_trace_problem(state: DensityState, ineq: BellInequality, z, T=None):
    """Bordered LMI of the fixed-trace dual.

    Returns ``(problem, constant, layout)``; the bound is
    ``constant + problem optimum``. Variables are ``lambda_mn`` for each
    non-fixed observable followed by ``t``.
    """
    _require_correlation(ineq)
    dA, dB = state.dA, state.dB
    mA, mB = ineq.mA, ineq.mB
    dims = [dA] * mA + [dB] * mB
    z = tuple(int(v) for v in z)
    if len(z) != mA + mB:
        raise ValidationError(f"trace assignment needs {mA + mB} entries")
    for m, (d, zm) in enumerate(zip(dims, z)):
        if zm not in allowed_traces(CORRELATION, d):
            raise ValidationError(f"z[{m}] = {zm} not in the lattice for d={d}")
    T = _expansion(state) if T is None else T
    Rp = T[1:, 1:]
    rA = T[1:, 0]
    rB = T[0, 1:]
    b = ineq.joint
    zA = np.array(z[:mA], dtype=float)
    zB = np.array(z[mA:], dtype=float)
    const = float(zA @ b @ zB) / (dA * dB)
    tA = b @ zB / math.sqrt(dB)
    tB = b.T @ zA / math.sqrt(dA)

    free = [m for m in range(mA + mB) if abs(z[m]) != dims[m]]
    if not free:
        return None, const, {"free": [], "offsets": {}, "nvar": 0}
    offs = {}
    size = 1
    for m in free:
        offs[m] = size
        size += dims[m] ** 2 - 1
    var_off = {}
    nvar = 0
    for m in free:
        var_off[m] = nvar
        nvar += dims[m] ** 2
    nvar += 1  # t

    G0 = np.zeros((size, size))
    G = np.zeros((nvar, size, size))
    # border: h = linear coefficients of the Lagrangian in y'
    for m in free:
        o = offs[m]
        d = dims[m]
        if m < mA:
            G0[0, o:o + d * d - 1] = tA[m] * rA
        else:
            G0[0, o:o + d * d - 1] = tB[m - mA] * rB
        G0[o:o + d * d - 1, 0] = G0[0, o:o + d * d - 1]
    # 2 Omega'_0 off-diagonal blocks: -b (x) R'
    for k in free:
        if k >= mA:
            continue
        for l in free:
            if l < mA or not b[k, l - mA]:
                continue
            ok, ol = offs[k], offs[l]
            blk = -b[k, l - mA] * Rp
            G0[ok:ok + Rp.shape[0], ol:ol + Rp.shape[1]] = blk
            G0[ol:ol + Rp.shape[1], ok:ok + Rp.shape[0]] = blk.T
    c = np.zeros(nvar)
    for m in free:
        d = dims[m]
        o = offs[m]
        v = var_off[m]
        P = anticommutator_constants(d)
        nf = d * d - 1
        # lambda_m0: 2 M_m contribution 2/sqrt(d) * 1, objective sqrt(d) - z^2/(d sqrt d)
        G[v, o:o + nf, o:o + nf] = 2 * np.eye(nf) / math.sqrt(d)
        c[v] = math.sqrt(d) - z[m] ** 2 / (d * math.sqrt(d))
        for n in range(1, d * d):
            G[v + n, o:o + nf, o:o + nf] = 2 * P[n, 1:, 1:]
            # linear term -(2 z_m / d) lambda_mn y_mn
            G[v + n, 0, o + n - 1] = G[v + n, o + n - 1, 0] = -2 * z[m] / d
    G[nvar - 1, 0, 0] = -2.0
    c[nvar - 1] = -1.0
    layout = {"free": free, "offsets": var_off, "nvar": nvar, "dims": dims}
    return SdpInequality(c, [G0], [G]), const, layout


def fixed_trace_bound(state: DensityState, ineq: BellInequality, z, opts: SdpOptions | None = None,
                      T=None) -> UpperBoundResult:
    prob, const, layout = fixed_trace_problem(state, ineq, z, T)
    z = tuple(int(v) for v in z)
    if prob is None:
        return UpperBoundResult(const, "fixed-trace", z=z, enumerated=1, details={"exact": True})
    sol = solve_inequality(prob, opts)
    _check_sdp(sol, f"fixed-trace dual z={z}")
    x = sol.primal
    lam = {m: x[o:o + layout["dims"][m] ** 2].copy() for m, o in layout["offsets"].items()}
    return UpperBoundResult(const + sol.objective, "fixed-trace", z=z, multipliers=lam, t=float(x[-1]),
                            enumerated=1, details={"gap": sol.gap, "iterations": sol.iterations})


# ---------------------------------------------------------------------------
# trace enumeration


def relabeling_group(ineq: BellInequality, max_candidates=200000):
    """Setting relabelings within each party that leave the inequality invariant.

    Each element is ``(perm_A, sign_A, perm_B, sign_B)``; it maps operators
    ``O'_k = s_k O_{pi(k)}``, hence traces ``z'_k = s_k z_{pi(k)}``. Signs
    (outcome swaps) are only used for correlation inequalities; for the
    probability kind the "+" form ``(J, a, b, c)`` must be invariant under
    the permutations alone.
    """
    mA, mB = ineq.mA, ineq.mB
    corr = ineq.kind == CORRELATION
    signs_A = list(itertools.product((1, -1), repeat=mA)) if corr else [(1,) * mA]
    signs_B = list(itertools.product((1, -1), repeat=mB)) if corr else [(1,) * mB]
    count = math.factorial(mA) * len(signs_A) * math.factorial(mB) * len(signs_B)
    identity = (tuple(range(mA)), (1,) * mA, tuple(range(mB)), (1,) * mB)
    if count > max_candidates:
        if corr:
            return [identity, (tuple(range(mA)), (-1,) * mA, tuple(range(mB)), (-1,) * mB)]
        return [identity]
    if corr:
        b, a0, b0 = ineq.joint, np.zeros(mA), np.zeros(mB)
    else:
        _require_dichotomic(ineq)
        b, a0, b0, _ = ineq.plus_form()
    group = []
    for pA in itertools.permutations(range(mA)):
        for sA in signs_A:
            bA = np.array(sA)[:, None] * b[list(pA), :]
            if not np.array_equal(a0[list(pA)], a0):
                continue
            for pB in itertools.permutations(range(mB)):
                if not np.array_equal(b0[list(pB)], b0):
                    continue
                for sB in signs_B:
                    if np.array_equal(bA[:, list(pB)] * np.array(sB)[None, :], b):
                        group.append((pA, sA, pB, sB))
    return group


def _act(g, z, mA):
    pA, sA, pB, sB = g
    zA, zB = z[:mA], z[mA:]
    return tuple(sA[k] * zA[pA[k]] for k in range(len(pA))) + tuple(sB[l] * zB[pB[l]] for l in range(len(pB)))


def trace_orbits(ineq: BellInequality, dA, dB, prune_fixed=False, symmetry="full"):
    """Orbit representatives (with sizes) of the trace lattice.

    ``prune_fixed`` leaves out traces that make a measurement deterministic
    (``|z| = d`` for observables, ``z in {0, d}`` for projectors).

    ``symmetry`` is "full" (all relabelings of :func:`relabeling_group`),
    "negation" (global sign flip only, correlation kind) or "none".
    """
    mA = ineq.mA
    kind = ineq.kind if ineq.kind == CORRELATION else PROBABILITY
    latA = allowed_traces(kind, dA)
    latB = allowed_traces(kind, dB)
    if prune_fixed:
        # drop traces that force a measurement to be deterministic
        latA = [v for v in latA if abs(v) != dA and (kind == CORRELATION or v != 0)]
        latB = [v for v in latB if abs(v) != dB and (kind == CORRELATION or v != 0)]
    identity = (tuple(range(mA)), (1,) * mA, tuple(range(ineq.mB)), (1,) * ineq.mB)
    if symmetry == "full":
        group = relabeling_group(ineq)
    elif symmetry == "negation" and kind == CORRELATION:
        group = [identity, (identity[0], (-1,) * mA, identity[2], (-1,) * ineq.mB)]
    elif symmetry in ("none", "negation"):
        group = [identity]
    else:
        raise ValidationError(f"unknown symmetry mode {symmetry!r}")
    seen = set()
    reps = []
    for z in itertools.product(*([latA] * mA + [latB] * ineq.mB)):
        if z in seen:
            continue
        orbit = {_act(g, z, mA) for g in group}
        seen |= orbit
        reps.append((z, len(orbit)))
    return reps


def is_chsh(ineq: BellInequality):
    return (ineq.kind == CORRELATION and ineq.joint.shape == (2, 2)
            and np.array_equal(ineq.joint, CHSH_JOINT) and ineq.beta_lhv == 2.0)


def state_dependent_bound(state: DensityState, ineq: BellInequality, opts: SdpOptions | None = None,
                          target=None, jobs=1, prune=True, symmetry="full", degree=0) -> UpperBoundResult:
    """Maximum of the fixed-trace (or degree-0 SOS) bound over the trace lattice.

    With ``target`` set, enumeration stops as soon as some assignment exceeds
    it; the returned value is then only a certificate that the maximum is
    above ``target``. ``degree`` (probability form only) selects the SOS
    multiplier degree; degree 2 is only solved where degree 0 cannot settle
    the maximum.
    """
    _require_dichotomic(ineq)
    if ineq.kind == CORRELATION:
        return _enumerate_correlation(state, ineq, opts, target, jobs, prune, symmetry)
    return _enumerate_probability(state, ineq, opts, target, jobs, degree, symmetry)


def _run(jobs, fn, items, target):
    """Evaluate ``fn`` over ``items`` in order, stopping early past ``target``."""
    results = []
    if jobs > 1:
        with ThreadPoolExecutor(jobs) as ex:
            for start in range(0, len(items), jobs):
                batch = list(ex.map(fn, items[start:start + jobs]))
                results.extend(batch)
                if target is not None and max(r.value for r in batch) > target:
                    break
        return results
    for it in items:
        r = fn(it)
        results.append(r)
        if target is not None and r.value > target:
            break
    return results


def _enumerate_correlation(state, ineq, opts, target, jobs, prune, symmetry):
    chsh = is_chsh(ineq)
    prune_fixed = prune and chsh
    reps = trace_orbits(ineq, state.dA, state.dB, prune_fixed=prune_fixed, symmetry=symmetry)
    T = _expansion(state)
    items = [z for z, _ in reps]
    skipped = 0
    if prune and chsh and target is not None and coherence_vanishes(T):
        # the semianalytic value is a feasible dual point, hence an upper bound per z
        s1 = float(singular_values(T[1:, 1:])[0]) if T.shape[0] > 1 else 0.0
        sa = [_semianalytic_value(np.array(z, dtype=float), s1, state.dA) for z in items]
        order = np.argsort(sa)[::-1]
        kept = [items[i] for i in order if sa[i] > target]
        skipped = len(items) - len(kept)
        items = kept
    results = _run(jobs, lambda z: fixed_trace_bound(state, ineq, z, opts, T), items, target)
    if not results:
        best = UpperBoundResult(-np.inf, "fixed-trace", z=None)
    else:
        best = max(results, key=lambda r: r.value)
    value = best.value
    if prune_fixed:
        # assignments with |z_m| = d cannot violate CHSH
        value = max(value, ineq.beta_lhv)
    early = target is not None and value > target and len(results) < len(items)
    return UpperBoundResult(
        value, "fixed-trace", z=best.z, multipliers=best.multipliers, t=best.t,
        enumerated=len(results),
        details={"orbits": len(reps), "skipped_by_semianalytic": skipped,
                 "early_exit": bool(early), "pruned_fixed": prune_fixed})


def _enumerate_probability(state, ineq, opts, target, jobs, degree=0, symmetry="full"):
    p = ineq.to_probability()
    reps = trace_orbits(p, state.dA, state.dB, symmetry=symmetry)
    items = [z for z, _ in reps]

    def fn(z, deg=0):
        res = solve_sos(state, p, z, deg, opts)
        return UpperBoundResult(res.value, "sos", z=tuple(z),
                                details={"residual": res.certificate.residual, "degree": deg})

    results = _run(jobs, fn, items, target if degree == 0 else None)
    best = max(results, key=lambda r: r.value)
    early = target is not None and best.value > target and len(results) < len(items)
    n2 = 0
    if degree == 2:
        # degree-0 values bound the degree-2 ones from above
        best = None
        for r0 in sorted(results, key=lambda r: -r.value):
            if best is not None and r0.value <= best.value:
                break
            r = fn(r0.z, 2)
            n2 += 1
            if best is None or r.value > best.value:
                best = r
            if target is not None and best.value > target:
                early = True
                break
    return UpperBoundResult(best.value, "sos", z=best.z, enumerated=len(results) + n2,
                            details={"orbits": len(items), "early_exit": bool(early),
                                     "degree": degree, "degree2_solves": n2})


@dataclass
class Domain:
    """Interval of ``p`` on which a relaxation certifies ``S <= level``."""

    lower: float | None
    upper: float | None
    degree: int
    lower_z: tuple | None = None
    upper_z: tuple | None = None
    solves: int = 0
    orbits: int = 0

    @property
    def empty(self):
        return self.lower is None or self.upper is None or self.lower > self.upper


def compatible_domain(family, ineq: BellInequality, degree=0, opts: SdpOptions | None = None,
                      level=None, symmetry="full", jobs=1, prune_fixed=False) -> Domain:
    """Parameter interval of an affine state family where the relaxation bound is <= ``level``.

    For each trace assignment the relaxation bound is convex in ``p`` (the
    certificate constraints are jointly linear in ``p`` and the SOS data), so
    its sublevel set is an interval whose endpoints come from one SDP each.
    The family's domain is the intersection over the lattice. For degree 2
    the degree-0 endpoints bound the degree-2 ones (every degree-0
    certificate is a degree-2 certificate), which prunes the search.
    """
    from .sos import parametric_relaxation, solve_parametric

    _require_dichotomic(ineq)
    if degree not in (0, 2):
        raise ValidationError("degree must be 0 or 2")
    p_ineq = ineq.to_probability() if ineq.kind != CORRELATION else ineq
    s0 = family(0.0)
    reps = trace_orbits(p_ineq, s0.dA, s0.dB, prune_fixed=prune_fixed, symmetry=symmetry)
    items = [z for z, _ in reps]
    solves = 0

    def endpoints(z, deg):
        rel = parametric_relaxation(family, p_ineq, z, deg, level)
        lo = solve_parametric(rel, False, opts)
        if lo.value is None:
            return rel, None, None
        hi = solve_parametric(rel, True, opts)
        return rel, lo.value, hi.value

    def pool(fn, seq):
        if jobs > 1:
            with ThreadPoolExecutor(jobs) as ex:
                return list(ex.map(fn, seq))
        return [fn(x) for x in seq]

    first = pool(lambda z: endpoints(z, 0), items)
    solves += 2 * len(items)
    lo0 = {z: (np.inf if r[1] is None else r[1]) for z, r in zip(items, first)}
    hi0 = {z: (-np.inf if r[2] is None else r[2]) for z, r in zip(items, first)}
    if degree == 0:
        if any(r[1] is None for r in first):
            return Domain(None, None, 0, solves=solves, orbits=len(items))
        zl = max(items, key=lambda z: lo0[z])
        zu = min(items, key=lambda z: hi0[z])
        return Domain(lo0[zl], hi0[zu], 0, zl, zu, solves, len(items))

    def side(maximize):
        order = sorted(items, key=lambda z: hi0[z] if maximize else -lo0[z])
        best, best_z = (np.inf, None) if maximize else (-np.inf, None)
        n = 0
        for z in order:
            bound0 = hi0[z] if maximize else lo0[z]
            if (maximize and bound0 >= best) or (not maximize and bound0 <= best):
                break
            rel = parametric_relaxation(family, p_ineq, z, 2, level)
            ep = solve_parametric(rel, maximize, opts)
            n += 1
            if ep.value is None:
                return None, z, n
            if (maximize and ep.value < best) or (not maximize and ep.value > best):
                best, best_z = ep.value, z
        return best, best_z, n

    lo, zl, n1 = side(False)
    if lo is None:
        return Domain(None, None, 2, zl, None, solves + n1, len(items))
    hi, zu, n2 = side(True)
    return Domain(lo, hi, 2, zl, zu, solves + n1 + n2, len(items))


# ---------------------------------------------------------------------------
# semianalytic CHSH criterion


def coherence_norms(state: DensityState):
    """``(|r_A|, |r_B|)`` computed from the reduced states."""
    dA, dB = state.dA, state.dB
    rA = partial_trace(state.rho, dA, dB, "B")
    rB = partial_trace(state.rho, dA, dB, "A")
    nA = np.linalg.norm(rA - np.trace(rA) * np.eye(dA) / dA) / math.sqrt(dB)
    nB = np.linalg.norm(rB - np.trace(rB) * np.eye(dB) / dB) / math.sqrt(dA)
    return float(nA), float(nB)


def coherence_vanishes(T, tol=COHERENCE_TOL):
    return bool(np.linalg.norm(T[1:, 0]) < tol and np.linalg.norm(T[0, 1:]) < tol)


def _semianalytic_value(z, s1, d):
    """Vectorised over leading axes of ``z`` (last axis = 4 traces)."""
    z = np.asarray(z, dtype=float)
    prod = ((2 * d * d - z[..., 0] ** 2 - z[..., 1] ** 2)
            * (2 * d * d - z[..., 2] ** 2 - z[..., 3] ** 2)) / (2 * d * d) ** 2
    quad = (z[..., 0] * z[..., 2] + z[..., 0] * z[..., 3]
            + z[..., 1] * z[..., 2] - z[..., 1] * z[..., 3]) / d ** 2
    return 2 * math.sqrt(2) * s1 * d * np.sqrt(np.maximum(prod, 0.0)) + quad


def semianalytic_from_s1(s1, d):
    """Max of the closed-form bound over the CHSH trace lattice for given ``s_1``.

    Assignments with ``|z_m| = d`` fix an observable to a multiple of the
    identity, which cannot yield a CHSH violation, so they are left out.
    """
    lat = np.arange(-d + 2, d - 1, 2, dtype=float)
    # maximise over (z1, z2) and (z3, z4) pairs with broadcasting
    Z = np.stack(np.meshgrid(lat, lat, lat, lat, indexing="ij"), axis=-1)
    vals = _semianalytic_value(Z, s1, d)
    idx = np.unravel_index(np.argmax(vals), vals.shape)
    return float(vals[idx]), tuple(int(lat[i]) for i in idx)


def semianalytic_chsh(state: DensityState, force=False):
    """Closed-form CHSH bound for states with vanishing coherence vectors.

    Returns ``(UpperBoundResult, satisfies_criterion)``; the criterion holds
    when the bound does not exceed 2 (no CHSH violation possible).
    """
    if state.dA != state.dB:
        raise ValidationError("semianalytic CHSH bound needs dA = dB")
    nA, nB = coherence_norms(state)
    ok = nA < COHERENCE_TOL and nB < COHERENCE_TOL
    if not ok and not force:
        raise PreconditionError(
            "semianalytic CHSH bound requires vanishing coherence vectors "
            f"(|r_A| = {nA:.3e}, |r_B| = {nB:.3e})")
    s1 = float(correlation_singular_values(state.rho, state.dA, state.dB, k=1)[0])
    value, z = semianalytic_from_s1(s1, state.dA)
    res = UpperBoundResult(value, "semianalytic", z=z, heuristic=not ok, details={"s1": s1})
    return res, bool(value <= 2.0)


# ---------------------------------------------------------------------------
# thresholds


@dataclass
class Threshold:
    value: float
    lo: float
    hi: float
    evaluations: int
    monotone: bool
    scan: list


def find_threshold(g, lo=0.0, hi=1.0, tol=1e-5, scan_points=20, increasing=True, check_monotone=True):
    """Bisection for the sign change of ``g`` on ``[lo, hi]``.

    ``g(p) > 0`` means "above threshold". A coarse scan first checks that the
    sign changes exactly once and brackets the crossing.
    """
    scan = []
    a, b = lo, hi
    monotone = True
    if check_monotone and scan_points >= 2:
        grid = np.linspace(lo, hi, scan_points)
        vals = [float(g(p)) for p in grid]
        scan = list(zip(grid.tolist(), vals))
        signs = [v > 0 for v in vals]
        if not increasing:
            signs = [not s for s in signs]
        flips = sum(1 for s0, s1 in zip(signs, signs[1:]) if s0 != s1)
        monotone = flips <= 1 and (not signs[0] or all(signs))
        if all(signs):
            return Threshold(lo, lo, lo, len(vals), monotone, scan)
        if not any(signs):
            return Threshold(hi, hi, hi, len(vals), monotone, scan)
        i = signs.index(True)
        a, b = grid[i - 1], grid[i]
    n = len(scan)
    while b - a > tol:
        mid = 0.5 * (a + b)
        v = float(g(mid))
        n += 1
        above = v > 0 if increasing else v <= 0
        if above:
            b = mid
        else:
            a = mid
    return Threshold(0.5 * (a + b), a, b, n, monotone, scan)
