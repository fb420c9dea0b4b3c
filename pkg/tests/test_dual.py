import math

import numpy as np
import pytest

from bellbound.dual import (
    Domain,
    PreconditionError,
    coherence_norms,
    compatible_domain,
    correlation_kernel,
    find_threshold,
    fixed_trace_bound,
    is_chsh,
    order0_bound,
    order0_bound_probability,
    relabeling_group,
    semianalytic_chsh,
    semianalytic_from_s1,
    state_dependent_bound,
    trace_orbits,
)
from bellbound.linalg import ValidationError
from bellbound.model import (
    CORRELATION,
    BellInequality,
    builtin_inequality,
    cg_state,
    ginibre_state,
    horodecki_chsh_max,
    isotropic_state,
)
from bellbound.seesaw import SeesawOptions, seesaw
from bellbound.sos import solve_sos

TSIRELSON = 2 * math.sqrt(2)
CHSH = builtin_inequality("chsh")
I3322_CORR = BellInequality(CORRELATION, 3, 3, 2, 2, [[1, 1, 1], [1, 1, -1], [1, -1, 0]], 4.0, name="i3322c")


def _rng(seed):
    return np.random.Generator(np.random.Philox(seed))


def test_correlation_kernel_hermitian():
    Om = correlation_kernel(ginibre_state(2, 3, _rng(0)), CHSH)
    np.testing.assert_allclose(Om, Om.conj().T, atol=1e-15)


@pytest.mark.parametrize("d", [2, 3])
def test_order0_tsirelson(d):
    rng = _rng(d)
    for _ in range(3):
        assert abs(order0_bound(ginibre_state(d, d, rng), CHSH).value - TSIRELSON) < 1e-6


@pytest.mark.parametrize("d", [2, 3])
def test_order0_state_independent_for_correlation_i3322(d):
    rng = _rng(10 + d)
    vals = [order0_bound(ginibre_state(d, d, rng), I3322_CORR).value for _ in range(8)]
    assert max(vals) - min(vals) < 1e-6


@pytest.mark.parametrize("seed", range(4))
def test_order0_equals_degree0_sos(seed):
    rng = _rng(20 + seed)
    d = 2 + seed % 2
    state = ginibre_state(d, d, rng)
    ineq = CHSH if seed % 2 == 0 else I3322_CORR
    assert abs(order0_bound(state, ineq).value - solve_sos(state, ineq, None, 0).value) < 1e-6


def test_order0_rejects_probability_kind():
    with pytest.raises(ValidationError):
        order0_bound(ginibre_state(2, 2, _rng(0)), builtin_inequality("ch"))


def test_order0_probability_values():
    state = ginibre_state(2, 2, _rng(1))
    assert abs(order0_bound_probability(state, builtin_inequality("ch")).value - (math.sqrt(2) - 1) / 2) < 1e-5
    assert abs(order0_bound_probability(state, builtin_inequality("i3322")).value - 0.375) < 1e-3


@pytest.mark.parametrize("d,seed", [(2, 0), (2, 1), (3, 2), (3, 3)])
def test_fixed_trace_equals_sos_with_same_traces(d, seed):
    rng = _rng(30 + seed)
    state = ginibre_state(d, d, rng)
    lattice = list(range(-d + 2, d - 1, 2))
    z = tuple(int(rng.choice(lattice)) for _ in range(4))
    ft = fixed_trace_bound(state, CHSH, z).value
    sos = solve_sos(state, CHSH, z, 0).value
    assert abs(ft - sos) < 1e-6


@pytest.mark.parametrize("d", [2, 3])
def test_fixed_trace_zero_traces_tightens_order0(d):
    state = ginibre_state(d, d, _rng(40 + d))
    z = (0,) * 4 if d == 2 else (1, -1, 1, 1)
    assert fixed_trace_bound(state, CHSH, z).value <= order0_bound(state, CHSH).value + 1e-7


def test_fixed_trace_negation_invariance():
    state = ginibre_state(3, 3, _rng(50))
    z = (1, -1, 3, 1)
    a = fixed_trace_bound(state, CHSH, z).value
    b = fixed_trace_bound(state, CHSH, tuple(-v for v in z)).value
    assert abs(a - b) < 1e-6


def test_fixed_observable_cannot_violate():
    state = isotropic_state(3, 0.95)
    for z in [(3, 1, 1, -1), (1, -1, -3, 1)]:
        assert fixed_trace_bound(state, CHSH, z).value <= 2 + 1e-6


def test_fixed_trace_rejects_off_lattice():
    with pytest.raises(ValidationError):
        fixed_trace_bound(isotropic_state(2, 0.5), CHSH, (1, 0, 0, 0))


def test_isotropic_d2_state_dependent_value():
    # isotropic qubits: max over z is at z = 0 and equals max(2 sqrt2 p, 2)
    for p in (0.6, 0.9):
        assert abs(state_dependent_bound(isotropic_state(2, p), CHSH).value - max(TSIRELSON * p, 2)) < 1e-6


def test_chsh_pruning_matches_full_enumeration():
    state = ginibre_state(3, 3, _rng(60))
    pruned = state_dependent_bound(state, CHSH).value
    full = state_dependent_bound(state, CHSH, prune=False).value
    assert abs(pruned - full) < 1e-6


@pytest.mark.parametrize("ineq", [CHSH, I3322_CORR, builtin_inequality("ch")])
def test_symmetry_modes_agree(ineq):
    state = ginibre_state(2, 2, _rng(61))
    vals = [state_dependent_bound(state, ineq, symmetry=s, prune=False).value for s in ("full", "negation", "none")]
    assert max(vals) - min(vals) < 1e-6


def test_relabeling_group_and_orbits():
    import itertools
    g = relabeling_group(CHSH)
    b = CHSH.joint
    brute = 0
    for pa, pb in itertools.product(itertools.permutations(range(2)), repeat=2):
        for sa, sb in itertools.product(itertools.product((1, -1), repeat=2), repeat=2):
            bb = np.array([[sa[k] * sb[l] * b[pa[k], pb[l]] for l in range(2)] for k in range(2)])
            brute += bool(np.array_equal(bb, b))
    assert len(g) == brute
    for pa, sa, pb, sb in g:
        bb = np.array([[sa[k] * sb[l] * b[pa[k], pb[l]] for l in range(2)] for k in range(2)])
        np.testing.assert_array_equal(bb, b)
    reps = trace_orbits(CHSH, 2, 2)
    assert sum(n for _, n in reps) == 3 ** 4
    assert len(relabeling_group(builtin_inequality("i3322"))) == 1
    assert len(trace_orbits(builtin_inequality("i3322"), 2, 2)) == 729
    pruned = trace_orbits(builtin_inequality("i3322"), 2, 2, prune_fixed=True)
    assert [z for z, _ in pruned] == [(1,) * 6]


def test_is_chsh():
    assert is_chsh(CHSH) and not is_chsh(I3322_CORR)


def test_state_dependent_target_early_exit():
    state = isotropic_state(3, 0.9)
    res = state_dependent_bound(state, CHSH, target=2.0)
    assert res.value > 2.0


@pytest.mark.parametrize("d", [2, 3])
def test_semianalytic_dominates_numeric(d):
    for p in (0.6, 0.75, 0.9):
        state = isotropic_state(d, p)
        semi, _ = semianalytic_chsh(state)
        # the numeric value is clamped at 2 for assignments with a fixed observable
        assert max(semi.value, 2.0) >= state_dependent_bound(state, CHSH).value - 1e-6


def test_semianalytic_qubits_closed_form():
    for p in (0.3, 0.8):
        res, ok = semianalytic_chsh(isotropic_state(2, p))
        assert abs(res.value - TSIRELSON * p) < 1e-9
        assert ok == (TSIRELSON * p <= 2)


def test_semianalytic_precondition():
    state = cg_state(0.5)
    assert coherence_norms(state)[0] > 1e-3
    with pytest.raises(PreconditionError):
        semianalytic_chsh(state)
    res, _ = semianalytic_chsh(state, force=True)
    assert res.heuristic


def test_semianalytic_lattice_excludes_fixed():
    _, z = semianalytic_from_s1(1.0, 4)
    assert all(abs(v) < 4 for v in z)


def test_semianalytic_negation_invariant():
    # the closed form is even in z, so the maximiser's negation is also a maximiser
    from bellbound.dual import _semianalytic_value
    z = np.array([1.0, -1.0, 3.0, 1.0])
    assert _semianalytic_value(z, 0.4, 5) == pytest.approx(_semianalytic_value(-z, 0.4, 5), abs=1e-15)


def test_find_threshold_linear():
    th = find_threshold(lambda p: p - 0.3141, tol=1e-6)
    assert abs(th.value - 0.3141) < 1e-6 and th.monotone
    dec = find_threshold(lambda p: 0.5 - p, increasing=False, tol=1e-6)
    assert abs(dec.value - 0.5) < 1e-6


def test_find_threshold_flags_non_monotone():
    th = find_threshold(lambda p: math.sin(12 * p), tol=1e-4)
    assert not th.monotone


def test_compatible_domain_matches_bisection_for_all_one_traces():
    from bellbound.sos import parametric_relaxation, solve_parametric
    ineq = builtin_inequality("i3322")
    z = (1,) * 6
    rel = parametric_relaxation(cg_state, ineq, z, 0)
    lo = solve_parametric(rel, False).value
    hi = solve_parametric(rel, True).value
    g = lambda p: solve_sos(cg_state(p), ineq, z, 0).value  # noqa: E731
    lo_b = find_threshold(g, 0.0, 0.5, tol=1e-6, increasing=False, scan_points=4).value
    hi_b = find_threshold(g, 0.5, 1.0, tol=1e-6, scan_points=4).value
    assert abs(lo - lo_b) < 1e-5 and abs(hi - hi_b) < 1e-5
    assert abs(lo - 0.16023) < 1e-3 and abs(hi - 0.83625) < 1e-3


def test_compatible_domain_nondeterministic_lattice():
    dom = compatible_domain(cg_state, builtin_inequality("i3322"), 0, prune_fixed=True)
    assert isinstance(dom, Domain) and not dom.empty
    assert abs(dom.lower - 0.16023) < 1e-3 and abs(dom.upper - 0.83625) < 1e-3


def test_compatible_domain_rejects_non_affine():
    with pytest.raises(ValidationError):
        compatible_domain(lambda p: isotropic_state(2, p * p), CHSH, 0)


@pytest.mark.parametrize("seed", range(3))
def test_soundness_against_seesaw(seed):
    rng = _rng(70 + seed)
    state = ginibre_state(2, 2, rng, rank=1)
    lb = seesaw(state, CHSH, SeesawOptions(restarts=10)).value
    assert abs(lb - max(horodecki_chsh_max(state), 2.0)) < 1e-5
    for ub in (order0_bound(state, CHSH).value, state_dependent_bound(state, CHSH).value):
        assert lb <= ub + 1e-6
