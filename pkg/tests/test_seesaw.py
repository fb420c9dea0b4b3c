import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bellbound.linalg import ValidationError
from bellbound.model import (
    BellInequality,
    DensityState,
    MeasurementSettings,
    PROBABILITY,
    bell_operator,
    builtin_inequality,
    cg_state,
    expectation,
    ginibre_state,
    horodecki_chsh_max,
    isotropic_state,
    random_povm,
    random_projective,
)
from bellbound.seesaw import (
    ConditionalOperators,
    SeesawOptions,
    conditional_operators,
    optimize_side_dichotomic,
    optimize_side_sdp,
    seesaw,
    settings_are_projective,
)

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SZ = np.diag([1.0, -1.0]).astype(complex)
PHI = np.array([1, 0, 0, 1]) / np.sqrt(2)
seeds = st.integers(0, 2**32 - 1)


def _rng(seed):
    return np.random.Generator(np.random.Philox(seed))


def _bob_value(cond, povms):
    return cond.value(povms)


@given(seeds, st.sampled_from(["chsh", "ch", "i3322"]), st.sampled_from([2, 3]), st.sampled_from("AB"))
def test_conditional_operators_reconstruct_value(seed, name, d, side):
    rng = _rng(seed)
    ineq = builtin_inequality(name)
    state = ginibre_state(d, d, rng)
    alice = [random_povm(d, 2, rng) for _ in range(ineq.mA)]
    bob = [random_povm(d, 2, rng) for _ in range(ineq.mB)]
    s = MeasurementSettings(alice, bob)
    fixed, free = (alice, bob) if side == "B" else (bob, alice)
    cond = conditional_operators(state, ineq, fixed, side)
    direct = expectation(state, bell_operator(ineq, s, validate=False))
    assert abs(cond.value(free) - direct) <= 1e-10
    for C in cond.ops.reshape(-1, d, d):
        np.testing.assert_allclose(C, C.conj().T, atol=1e-12)


def test_conditional_operators_tsirelson():
    chsh = builtin_inequality("chsh")
    state = DensityState(2, 2, np.outer(PHI, PHI))
    alice = MeasurementSettings.from_observables([SZ, SX], [SZ, SX]).alice
    cond = conditional_operators(state, chsh, alice, "B")
    bob = MeasurementSettings.from_observables([SZ, SX], [(SZ + SX) / np.sqrt(2), (SZ - SX) / np.sqrt(2)]).bob
    assert abs(cond.value(bob) - 2 * np.sqrt(2)) < 1e-12


def test_zero_inequality_gives_zero_operators():
    zero = BellInequality(PROBABILITY, 2, 2, 2, 2, np.zeros((2, 2, 2, 2)), 0.0,
                          np.zeros((2, 2)), np.zeros((2, 2)))
    rng = _rng(0)
    cond = conditional_operators(ginibre_state(2, 2, rng), zero, [random_povm(2, 2, rng)] * 2, "B")
    assert not np.any(cond.ops)
    povms, val = optimize_side_sdp(cond)
    assert val == 0.0


def test_maximally_mixed_conditional_operators():
    ineq = builtin_inequality("i3322").to_probability()
    rng = _rng(1)
    alice = [random_povm(2, 2, rng) for _ in range(3)]
    cond = conditional_operators(DensityState(2, 2, np.eye(4) / 4), ineq, alice, "B")
    # with rho = 1/4 every conditional operator is proportional to the identity
    for C in cond.ops.reshape(-1, 2, 2):
        np.testing.assert_allclose(C, C[0, 0] * np.eye(2), atol=1e-12)


def test_dichotomic_step_positive_eigenspace():
    ops = np.zeros((1, 2, 2, 2), dtype=complex)
    ops[0, 0] = SZ
    povms, val = optimize_side_dichotomic(ConditionalOperators("B", ops))
    np.testing.assert_allclose(povms[0][0], np.diag([1.0, 0.0]), atol=1e-14)
    assert abs(val - 1.0) < 1e-14


def test_dichotomic_step_zero_difference_goes_to_minus():
    ops = np.zeros((1, 2, 2, 2), dtype=complex)
    ops[0, 0] = ops[0, 1] = 0.3 * np.eye(2)
    povms, val = optimize_side_dichotomic(ConditionalOperators("B", ops))
    np.testing.assert_allclose(povms[0][0], 0, atol=1e-15)
    assert abs(val - 0.6) < 1e-14


def test_dichotomic_step_rejects_three_outcomes():
    with pytest.raises(ValidationError):
        optimize_side_dichotomic(ConditionalOperators("B", np.zeros((1, 3, 2, 2))))


def test_one_round_reaches_tsirelson():
    chsh = builtin_inequality("chsh")
    state = DensityState(2, 2, np.outer(PHI, PHI))
    alice = MeasurementSettings.from_observables([SZ, SX], [SZ, SX]).alice
    bob, v1 = optimize_side_dichotomic(conditional_operators(state, chsh, alice, "B"))
    _, v2 = optimize_side_dichotomic(conditional_operators(state, chsh, bob, "A"))
    assert abs(v1 - 2 * np.sqrt(2)) < 1e-9 and abs(v2 - 2 * np.sqrt(2)) < 1e-9


@pytest.mark.parametrize("seed", range(4))
def test_sdp_step_agrees_with_analytic(seed):
    rng = _rng(seed)
    ineq = builtin_inequality("i3322")
    state = ginibre_state(2, 2, rng)
    alice = [random_povm(2, 2, rng) for _ in range(3)]
    cond = conditional_operators(state, ineq, alice, "B")
    _, va = optimize_side_dichotomic(cond)
    povms, vs = optimize_side_sdp(cond)
    assert abs(va - vs) <= 1e-7
    assert MeasurementSettings(alice, povms).max_violation() <= 1e-8


def test_sdp_step_three_outcomes_monotone():
    rng = _rng(5)
    cond = ConditionalOperators("B", np.array([[(lambda G: G + G.conj().T)(rng.normal(size=(3, 3)) + 0j)
                                                for _ in range(3)] for _ in range(2)]))
    held = [random_povm(3, 3, rng) for _ in range(2)]
    povms, val = optimize_side_sdp(cond, held)
    assert val >= cond.value(held) - 1e-10
    assert MeasurementSettings(povms, povms).max_violation() <= 1e-8


def test_seesaw_tsirelson():
    res = seesaw(DensityState(2, 2, np.outer(PHI, PHI)), builtin_inequality("chsh"), SeesawOptions(restarts=5))
    assert abs(res.value - 2 * np.sqrt(2)) < 1e-6
    assert settings_are_projective(res.settings)


def test_seesaw_cg_violates_i3322():
    res = seesaw(cg_state(0.85), builtin_inequality("i3322"))
    assert res.value > 0


def test_seesaw_isotropic_d4_above_threshold():
    res = seesaw(isotropic_state(4, 0.7075), builtin_inequality("chsh"))
    assert res.value > 2


def test_seesaw_trivial_measurements_reach_classical_value():
    # 2 sqrt2 p < 2 here, but O = 1 settings give exactly the classical value
    res = seesaw(isotropic_state(2, 0.5), builtin_inequality("chsh"), SeesawOptions(restarts=5))
    assert abs(res.value - 2.0) < 1e-9


@pytest.mark.parametrize("seed", range(5))
def test_seesaw_invariants(seed):
    rng = _rng(50 + seed)
    ineq = builtin_inequality(["chsh", "ch", "i3322"][seed % 3])
    state = ginibre_state(2 + seed % 2, 2 + seed % 2, rng)
    res = seesaw(state, ineq, SeesawOptions(restarts=4, seed=seed))
    for trace in res.traces:
        assert np.all(np.diff(trace) >= -1e-10)
    assert res.value == pytest.approx(max(t[-1] for t in res.traces), abs=1e-8)
    assert res.settings.max_violation() <= 1e-8
    assert abs(res.value - expectation(state, bell_operator(ineq, res.settings, validate=False))) <= 1e-8
    assert settings_are_projective(res.settings)


def test_seesaw_sdp_steps_monotone():
    rng = _rng(77)
    state = ginibre_state(2, 2, rng)
    res = seesaw(state, builtin_inequality("ch"), SeesawOptions(restarts=2, step="sdp", max_iter=30))
    for trace in res.traces:
        assert np.all(np.diff(trace) >= -1e-10)


def test_seesaw_reproducible_and_job_independent():
    state = ginibre_state(3, 3, _rng(8))
    ineq = builtin_inequality("i3322")
    a = seesaw(state, ineq, SeesawOptions(restarts=6, seed=11))
    b = seesaw(state, ineq, SeesawOptions(restarts=6, seed=11, jobs=3))
    assert a.value == b.value
    assert a.traces == b.traces


def test_seesaw_matches_grid_search_chsh():
    # planar (x-z) measurement directions on a coarse grid never beat the see-saw
    rng = _rng(21)
    state = ginibre_state(2, 2, rng)
    chsh = builtin_inequality("chsh")
    res = seesaw(state, chsh)
    T = np.array([[np.trace(state.rho @ np.kron(a, b)).real for b in (SX, SZ)] for a in (SX, SZ)])
    th = np.linspace(0, 2 * np.pi, 181)
    u = np.stack([np.cos(th), np.sin(th)], axis=1)
    E = u @ T @ u.T  # E[i, j] for directions i (Alice), j (Bob)
    best = -np.inf
    for i in range(0, len(th), 4):
        for k in range(0, len(th), 4):
            b = E[i] + E[k]
            c = E[i] - E[k]
            best = max(best, np.max(np.abs(b)) + np.max(np.abs(c)))
    assert best <= res.value + 1e-3


@pytest.mark.parametrize("seed", range(10))
def test_seesaw_matches_horodecki_on_violating_states(seed):
    rng = _rng(1000 + seed)
    while True:
        state = ginibre_state(2, 2, rng, rank=1)
        oracle = horodecki_chsh_max(state)
        if oracle > 2.01:
            break
    res = seesaw(state, builtin_inequality("chsh"), SeesawOptions(restarts=20, seed=seed))
    assert res.value <= oracle + 1e-6
    assert abs(res.value - oracle) <= 1e-5


def test_init_schemes_recorded():
    res = seesaw(ginibre_state(3, 3, _rng(4)), builtin_inequality("chsh"), SeesawOptions(restarts=4))
    assert res.schemes[0] == "povm" and res.schemes[1].startswith("projector")
    with pytest.raises(ValidationError):
        seesaw(ginibre_state(2, 2, _rng(4)), builtin_inequality("chsh"), SeesawOptions(init_scheme="bad"))
