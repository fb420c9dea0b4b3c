"""See-saw lower bounds on the maximal quantum value of a Bell expression.

The settings of one party are held fixed, which turns the Bell value into
a linear function of the other party's POVM elements,
``sum_{l,lam} tr(C[l, lam] B^lam_l)``. That function is maximised exactly:
analytically (positive-eigenspace projectors) for two outcomes, or by an
SDP otherwise. Parties alternate until the value stalls.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .linalg import ValidationError, gellmann_basis, psd_sqrt_inv
from .model import (
    CORRELATION,
    BellInequality,
    DensityState,
    MeasurementSettings,
    bell_operator,
    expectation,
    random_povm,
    random_projective,
)
from .sdp import ACCEPTABLE, SdpError, SdpOptions, SdpStandard, solve_standard

log = logging.getLogger(__name__)

ZERO_EIG = 1e-12
REPROJECT_TOL = 1e-9
DEFAULT_SEED = 20140414


def make_rng(seed=DEFAULT_SEED):
    """Counter-based 64-bit generator used throughout."""
    return np.random.Generator(np.random.Philox(seed))


def _other(side):
    return "A" if side == "B" else "B"


@dataclass
class ConditionalOperators:
    """``ops[l, lam]`` (d x d) for the party being optimised."""

    side: str
    ops: np.ndarray

    @property
    def dim(self):
        return self.ops.shape[-1]

    def value(self, povms):
        return float(sum(np.einsum("ij,ji->", self.ops[l, a], E).real
                         for l, povm in enumerate(povms) for a, E in enumerate(povm)))


def _reduced(rho4, povms, side):
    """tr_other[rho (E (x) 1)] (side B optimised, E on A) for every fixed element."""
    E = np.array([[np.asarray(x) for x in povm] for povm in povms])
    if side == "B":
        return np.einsum("aibj,klba->klij", rho4, E)
    return np.einsum("iajb,klba->klij", rho4, E)


def conditional_operators(state: DensityState, ineq: BellInequality, fixed, side="B"):
    """Operators ``C`` with ``Bell value = sum tr(C[l,lam] X^lam_l)`` for party ``side``.

    ``fixed`` are the POVMs of the other party. Correlation inequalities are
    handled through their probability form.
    """
    side = side.upper()
    if side not in ("A", "B"):
        raise ValidationError("side must be 'A' or 'B'")
    p = ineq.to_probability()
    dA, dB = state.dA, state.dB
    rho4 = state.rho.reshape(dA, dB, dA, dB)
    m_fixed, n_fixed = (p.mA, p.nA) if side == "B" else (p.mB, p.nB)
    if len(fixed) != m_fixed or any(len(f) != n_fixed for f in fixed):
        raise ValidationError(f"fixed settings must be {m_fixed} POVMs with {n_fixed} outcomes")
    X = _reduced(rho4, fixed, side)
    d = dB if side == "B" else dA
    if side == "B":
        C = np.einsum("kalb,kaij->lbij", p.joint, X)
        own_marg, other_marg, m = p.marginal_b, p.marginal_a, p.mB
        red = np.trace(rho4, axis1=0, axis2=2)
    else:
        C = np.einsum("kalb,lbij->kaij", p.joint, X)
        own_marg, other_marg, m = p.marginal_a, p.marginal_b, p.mA
        red = np.trace(rho4, axis1=1, axis2=3)
    C = C + own_marg[:, :, None, None] * red[None, None]
    # the fixed party's marginal is a constant, spread evenly over completeness
    const = float(np.einsum("ka,kaii->", other_marg, X).real)
    C = C + const / (m * d) * np.eye(d)[None, None]
    C = (C + np.conj(np.swapaxes(C, -1, -2))) / 2
    return ConditionalOperators(side, C)


def optimize_side_dichotomic(cond: ConditionalOperators):
    """Exact maximiser for two outcomes: projector onto the positive part of ``C+ - C-``."""
    if cond.ops.shape[1] != 2:
        raise ValidationError("analytic step needs two outcomes per setting")
    d = cond.dim
    povms, value = [], 0.0
    for l in range(cond.ops.shape[0]):
        Cp, Cm = cond.ops[l]
        w, V = np.linalg.eigh(Cp - Cm)
        keep = w > ZERO_EIG
        P = V[:, keep] @ V[:, keep].conj().T
        povms.append([P, np.eye(d) - P])
        value += 0.5 * np.sum(np.abs(w)) + 0.5 * np.trace(Cp + Cm).real
    return povms, float(value)


def _reproject(povm, tol=REPROJECT_TOL):
    d = povm[0].shape[0]
    bad = max(np.max(np.abs(sum(povm) - np.eye(d))),
              max(-np.linalg.eigvalsh(E)[0] for E in povm))
    if bad <= tol:
        return povm
    clipped = []
    for E in povm:
        w, V = np.linalg.eigh((E + E.conj().T) / 2)
        clipped.append((V * np.maximum(w, 0)) @ V.conj().T)
    S = psd_sqrt_inv(sum(clipped))
    return [(S @ E @ S + (S @ E @ S).conj().T) / 2 for E in clipped]


def sdp_step_problem(cond: ConditionalOperators) -> SdpStandard:
    """Block SDP: Z = (+) X^lam_l, F0 = -(+) C[l,lam], completeness in the Hermitian basis."""
    m, n, d = cond.ops.shape[0], cond.ops.shape[1], cond.dim
    sig = gellmann_basis(d).elements
    F0, F = [], []
    for l in range(m):
        for a in range(n):
            F0.append(-cond.ops[l, a])
            A = np.zeros((m * d * d, d, d), dtype=complex)
            A[l * d * d:(l + 1) * d * d] = sig
            F.append(A)
    c = np.zeros(m * d * d)
    c[::d * d] = np.sqrt(d)
    return SdpStandard(F0, F, c)


def optimize_side_sdp(cond: ConditionalOperators, held=None, opts: SdpOptions | None = None):
    """n-outcome step by SDP; never returns a value below that of ``held``."""
    m, n, d = cond.ops.shape[0], cond.ops.shape[1], cond.dim
    if not np.any(cond.ops):
        povms = [[np.eye(d)] + [np.zeros((d, d))] * (n - 1) for _ in range(m)]
        return (held if held is not None else povms), 0.0
    sol = solve_standard(sdp_step_problem(cond), opts)
    if sol.status not in (*ACCEPTABLE, "max-iterations"):
        raise SdpError(f"see-saw step SDP ({m} settings, {n} outcomes, d={d}): {sol.status}", sol)
    Z = sol.primal
    povms = [_reproject([Z[l * n + a] for a in range(n)]) for l in range(m)]
    value = cond.value(povms)
    if held is not None:
        held_value = cond.value(held)
        if held_value >= value:
            return held, held_value
    return povms, value


@dataclass
class SeesawOptions:
    restarts: int = 20
    max_iter: int = 200
    tol: float = 1e-9
    init_scheme: str = "mixed"  # mixed | povm | projector
    step: str = "auto"  # auto | analytic | sdp
    seed: int = DEFAULT_SEED
    jobs: int = 1
    sdp: SdpOptions = field(default_factory=SdpOptions)


@dataclass
class SeesawResult:
    value: float
    settings: MeasurementSettings
    traces: list
    restarts: int
    converged: bool
    schemes: list = field(default_factory=list)
    best_restart: int = 0

    @property
    def best_scheme(self):
        return self.schemes[self.best_restart] if self.schemes else None


def initial_settings(ineq, d, rng, scheme, restart):
    """Alice's starting POVMs for one restart."""
    if scheme == "mixed":
        scheme = "povm" if restart % 2 == 0 else "projector"
    if scheme == "povm":
        return [random_povm(d, ineq.nA, rng) for _ in range(ineq.mA)], "povm"
    if scheme == "projector":
        rank = 1 + (restart // 2) % max(d - 1, 1)
        return [random_projective(d, ineq.nA, rng, rank) for _ in range(ineq.mA)], f"projector-r{rank}"
    raise ValidationError(f"unknown init scheme {scheme!r}")


def _run_restart(state, ineq, alice, opts):
    analytic = opts.step == "analytic" or (opts.step == "auto" and ineq.dichotomic)
    if analytic and not ineq.dichotomic:
        raise ValidationError("analytic step needs a dichotomic inequality")
    current = {"A": alice, "B": None}
    trace = []
    side = "B"
    converged = False
    for _ in range(opts.max_iter):
        cond = conditional_operators(state, ineq, current[_other(side)], side)
        if analytic:
            povms, val = optimize_side_dichotomic(cond)
            if current[side] is not None:
                held_val = cond.value(current[side])
                if held_val > val:
                    povms, val = current[side], held_val
        else:
            povms, val = optimize_side_sdp(cond, current[side], opts.sdp)
        current[side] = povms
        trace.append(val)
        if len(trace) >= 3 and abs(trace[-1] - trace[-2]) < opts.tol:
            converged = True
            break
        side = _other(side)
    return trace, MeasurementSettings(current["A"], current["B"]), converged


def seesaw(state: DensityState, ineq: BellInequality, opts: SeesawOptions | None = None) -> SeesawResult:
    """Best see-saw value over random restarts; settings are re-verified directly."""
    opts = opts or SeesawOptions()
    if opts.restarts < 1:
        raise ValidationError("need at least one restart")
    seeds = np.random.SeedSequence(opts.seed).spawn(opts.restarts)
    starts = []
    for r, ss in enumerate(seeds):
        rng = np.random.Generator(np.random.Philox(ss))
        starts.append(initial_settings(ineq, state.dA, rng, opts.init_scheme, r))

    def job(r):
        return _run_restart(state, ineq, starts[r][0], opts)

    if opts.jobs > 1:
        with ThreadPoolExecutor(opts.jobs) as ex:
            runs = list(ex.map(job, range(opts.restarts)))
    else:
        runs = [job(r) for r in range(opts.restarts)]
    traces = [t for t, _, _ in runs]
    finals = [t[-1] for t in traces]
    best = int(np.argmax(finals))
    settings = runs[best][1]
    direct = expectation(state, bell_operator(ineq, settings, validate=False))
    if abs(direct - finals[best]) > 1e-8:
        log.warning("see-saw value %.12g differs from direct evaluation %.12g", finals[best], direct)
    return SeesawResult(
        value=direct, settings=settings, traces=traces, restarts=opts.restarts,
        converged=bool(runs[best][2]), schemes=[s for _, s in starts], best_restart=best)


def settings_are_projective(settings: MeasurementSettings, tol=1e-7):
    for party in "AB":
        for povm in settings.side(party):
            for E in povm:
                w = np.linalg.eigvalsh(E)
                if np.any(np.minimum(np.abs(w), np.abs(w - 1)) > tol):
                    return False
    return True


def correlation_observables(result: SeesawResult, ineq: BellInequality):
    """+-1 observables of a dichotomic result (for correlation inequalities)."""
    if ineq.kind != CORRELATION and not ineq.dichotomic:
        raise ValidationError("observables only exist for dichotomic settings")
    return result.settings.observables("A"), result.settings.observables("B")
