import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bellbound.linalg import DimensionError, ValidationError, flip_kernel, random_unitary
from bellbound.model import (
    CORRELATION,
    PROBABILITY,
    BellInequality,
    DensityState,
    MeasurementSettings,
    bell_operator,
    builtin_inequality,
    cg_state,
    expectation,
    family_state,
    ginibre_state,
    haar_pure_state,
    horodecki_chsh_max,
    horodecki_h_state,
    isotropic_state,
    load_inequality,
    load_state,
    ppt_check,
    random_povm,
    random_projective,
    resolve_inequality,
)

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SZ = np.diag([1.0, -1.0]).astype(complex)
PHI = np.array([1, 0, 0, 1]) / np.sqrt(2)
seeds = st.integers(0, 2**32 - 1)


def _rng(seed):
    return np.random.Generator(np.random.Philox(seed))


def tsirelson_settings():
    return MeasurementSettings.from_observables([SZ, SX], [(SZ + SX) / np.sqrt(2), (SZ - SX) / np.sqrt(2)])


def random_settings(ineq, d, rng):
    return MeasurementSettings([random_povm(d, ineq.nA, rng) for _ in range(ineq.mA)],
                               [random_povm(d, ineq.nB, rng) for _ in range(ineq.mB)])


def test_builtin_chsh():
    c = builtin_inequality("chsh")
    assert c.kind == CORRELATION and (c.mA, c.mB) == (2, 2) and c.beta_lhv == 2
    np.testing.assert_array_equal(c.joint, [[1, 1], [1, -1]])


def test_unknown_builtin_lists_names():
    with pytest.raises(ValidationError, match="chsh"):
        builtin_inequality("nope")


def test_tsirelson_value():
    op = bell_operator(builtin_inequality("chsh"), tsirelson_settings())
    assert abs(expectation(np.outer(PHI, PHI), op) - 2 * np.sqrt(2)) < 1e-12


def test_maximally_mixed_chsh_zero():
    op = bell_operator(builtin_inequality("chsh"), tsirelson_settings())
    assert abs(expectation(np.eye(4) / 4, op)) < 1e-12


def test_ch_quantum_maximum():
    # CH with the "+" outcome projectors of the Tsirelson settings on |Phi+>
    ch = builtin_inequality("ch")
    val = expectation(np.outer(PHI, PHI), bell_operator(ch, tsirelson_settings()))
    assert abs(val - (np.sqrt(2) - 1) / 2) < 1e-12


def test_ch_deterministic_bound():
    ch = builtin_inequality("ch")
    best = -np.inf
    I, O = np.eye(1), np.zeros((1, 1))
    for bits in np.ndindex(2, 2, 2, 2):
        povm = [[I, O] if b else [O, I] for b in bits]
        s = MeasurementSettings(povm[:2], povm[2:])
        best = max(best, expectation(np.eye(1), bell_operator(ch, s)))
    assert best == 0.0


def test_i3322_local_bound_and_plus_form():
    ineq = builtin_inequality("i3322")
    assert ineq.kind == PROBABILITY and ineq.beta_lhv == 0
    I, O = np.eye(1), np.zeros((1, 1))
    best = -np.inf
    for bits in np.ndindex(*(2,) * 6):
        povm = [[I, O] if b else [O, I] for b in bits]
        s = MeasurementSettings(povm[:3], povm[3:])
        best = max(best, expectation(np.eye(1), bell_operator(ineq, s)))
    assert best == 0.0
    J, a, b, c = ineq.plus_form()
    np.testing.assert_array_equal(J, [[-1, -1, -1], [-1, -1, 1], [-1, 1, 0]])
    np.testing.assert_array_equal(a, [2, 1, 0])
    np.testing.assert_array_equal(b, [2, 1, 0])
    assert c == -3


def test_plus_form_reproduces_operator():
    rng = _rng(2)
    for name in ("ch", "i3322", "chsh"):
        ineq = builtin_inequality(name)
        s = MeasurementSettings([random_projective(2, 2, rng) for _ in range(ineq.mA)],
                                [random_projective(2, 2, rng) for _ in range(ineq.mB)])
        J, a, b, c = ineq.plus_form()
        I = np.eye(2)
        op = c * np.eye(4)
        for k in range(ineq.mA):
            op = op + a[k] * np.kron(s.alice[k][0], I)
            for l in range(ineq.mB):
                op = op + J[k, l] * np.kron(s.alice[k][0], s.bob[l][0])
        for l in range(ineq.mB):
            op = op + b[l] * np.kron(I, s.bob[l][0])
        np.testing.assert_allclose(op, bell_operator(ineq, s), atol=1e-12)


def test_correlation_and_probability_forms_agree():
    rng = _rng(3)
    chsh = builtin_inequality("chsh")
    s = MeasurementSettings([random_projective(3, 2, rng, 1) for _ in range(2)],
                            [random_projective(3, 2, rng, 2) for _ in range(2)])
    np.testing.assert_allclose(bell_operator(chsh, s), bell_operator(chsh.to_probability(), s), atol=1e-12)


def test_identity_povms_give_constant_operator():
    ineq = builtin_inequality("i3322")
    I, O = np.eye(2), np.zeros((2, 2))
    s = MeasurementSettings([[O, I]] * 3, [[O, I]] * 3)
    op = bell_operator(ineq, s)
    const = ineq.joint[:, 1, :, 1].sum() + ineq.marginal_a[:, 1].sum() + ineq.marginal_b[:, 1].sum()
    np.testing.assert_allclose(op, const * np.eye(4), atol=1e-14)


def test_bell_operator_linear_in_each_element():
    rng = _rng(4)
    ineq = builtin_inequality("i3322")
    s = random_settings(ineq, 2, rng)
    H1, H2 = (lambda G: (G + G.conj().T) / 2)(rng.normal(size=(2, 2)) + 0j), np.eye(2)
    def op_with(E):
        alice = [list(p) for p in s.alice]
        alice[1][0] = E
        return bell_operator(ineq, MeasurementSettings(alice, s.bob), validate=False)
    base = op_with(0 * H2)
    # affine in the single element: op(H1 + 2 H2) - op(0) = (op(H1) - op(0)) + 2 (op(H2) - op(0))
    np.testing.assert_allclose(op_with(H1 + 2 * H2) - base,
                               (op_with(H1) - base) + 2 * (op_with(H2) - base), atol=1e-12)


def test_settings_shape_and_validity_errors():
    chsh = builtin_inequality("chsh")
    with pytest.raises(DimensionError):
        bell_operator(chsh, MeasurementSettings.from_observables([SZ], [SZ, SX]))
    bad = MeasurementSettings([[np.eye(2), np.eye(2)], [np.eye(2), np.zeros((2, 2))]],
                              [[np.eye(2), np.zeros((2, 2))]] * 2)
    with pytest.raises(ValidationError):
        bell_operator(chsh, bad)


@given(seeds, st.sampled_from(["chsh", "ch", "i3322"]), st.sampled_from([2, 3]))
def test_expectation_matches_flip_kernel_route(seed, name, d):
    rng = _rng(seed)
    ineq = builtin_inequality(name)
    state = ginibre_state(d, d, rng)
    s = random_settings(ineq, d, rng)
    direct = expectation(state, bell_operator(ineq, s, validate=False))
    # sum of bilinear forms tr(rho A (x) B) through the reshuffled kernel
    K = flip_kernel(state.rho, d, d)
    p = ineq.to_probability()
    I = np.eye(d)
    total = 0.0
    for k in range(p.mA):
        for a in range(2):
            for l in range(p.mB):
                for b in range(2):
                    total += p.joint[k, a, l, b] * K.bilinear(s.alice[k][a], s.bob[l][b]).real
            total += p.marginal_a[k, a] * K.bilinear(s.alice[k][a], I).real
    for l in range(p.mB):
        for b in range(2):
            total += p.marginal_b[l, b] * K.bilinear(I, s.bob[l][b]).real
    assert abs(direct - total) <= 1e-12 * max(1.0, abs(direct))


def test_density_state_validation():
    with pytest.raises(ValidationError):
        DensityState(2, 2, np.eye(4))
    with pytest.raises(ValidationError):
        DensityState(2, 2, np.diag([1.5, -0.5, 0, 0]))
    with pytest.raises(DimensionError):
        DensityState(2, 3, np.eye(4) / 4)


@pytest.mark.parametrize("d", [2, 3, 4])
def test_isotropic_state(d):
    mixed = isotropic_state(d, 0.0)
    np.testing.assert_allclose(mixed.rho, np.eye(d * d) / d ** 2)
    pure = isotropic_state(d, 1.0)
    assert abs(np.trace(pure.rho @ pure.rho) - 1) < 1e-12
    # PPT iff p <= 1/(d+1)
    assert ppt_check(isotropic_state(d, 1 / (d + 1) - 1e-6))[0]
    assert not ppt_check(isotropic_state(d, 1 / (d + 1) + 1e-6))[0]
    with pytest.raises(ValidationError):
        isotropic_state(d, 1.2)


def test_isotropic_ppt_d3():
    assert ppt_check(isotropic_state(3, 0.2))[0]


def test_ppt_bell_state():
    ok, w = ppt_check(DensityState(2, 2, np.outer(PHI, PHI)))
    assert not ok and abs(w + 0.5) < 1e-12


def test_cg_state():
    s0 = cg_state(0.0)
    e01 = np.zeros(4)
    e01[1] = 1
    np.testing.assert_allclose(s0.rho, np.outer(e01, e01))
    for p in (0.1, 0.5, 0.9):
        assert not ppt_check(cg_state(p))[0]


def test_cg_state_schmidt_coefficients():
    psi = np.array([2, 0, 0, 1]) / np.sqrt(5)
    np.testing.assert_allclose(cg_state(1.0).rho, np.outer(psi, psi), atol=1e-15)
    np.testing.assert_allclose(np.linalg.svd(psi.reshape(2, 2), compute_uv=False), [2 / np.sqrt(5), 1 / np.sqrt(5)])


@pytest.mark.parametrize("p", [0.01, 0.2, 0.5, 0.8, 0.99])
def test_horodecki_h_state_ppt(p):
    s = horodecki_h_state(p)
    assert abs(np.trace(s.rho) - 1) < 1e-12
    assert ppt_check(s)[0]


def test_horodecki_h_state_open_interval():
    for p in (0.0, 1.0):
        with pytest.raises(ValidationError):
            horodecki_h_state(p)


def test_horodecki_oracle():
    assert abs(horodecki_chsh_max(DensityState(2, 2, np.outer(PHI, PHI))) - 2 * np.sqrt(2)) < 1e-12
    assert horodecki_chsh_max(DensityState(2, 2, np.eye(4) / 4)) == 0.0
    for p in (0.3, 0.7071, 0.9):
        assert abs(horodecki_chsh_max(isotropic_state(2, p)) - 2 * np.sqrt(2) * p) < 1e-12
    with pytest.raises(ValidationError):
        horodecki_chsh_max(isotropic_state(3, 0.5))


def test_inequality_json_roundtrip(tmp_path):
    for name in ("chsh", "ch", "i3322"):
        ineq = builtin_inequality(name)
        path = tmp_path / f"{name}.json"
        path.write_text(json.dumps(ineq.to_json()))
        back = load_inequality(path)
        assert back.kind == ineq.kind and back.beta_lhv == ineq.beta_lhv
        np.testing.assert_array_equal(back.joint, ineq.joint)
        assert resolve_inequality(str(path)).name == name


def test_inequality_missing_beta_named():
    doc = builtin_inequality("chsh").to_json()
    del doc["beta_lhv"]
    with pytest.raises(ValidationError, match="beta_lhv"):
        load_inequality(doc)


def test_three_outcome_inequality_loads():
    doc = {"kind": "probability", "mA": 2, "mB": 2, "nA": 3, "nB": 3, "beta_lhv": 0.0,
           "joint": np.zeros((2, 3, 2, 3)).tolist(), "marginal_a": np.zeros((2, 3)).tolist(),
           "marginal_b": np.zeros((2, 3)).tolist(), "name": "zero3"}
    ineq = load_inequality(doc)
    assert not ineq.dichotomic


def test_data_dir_env(tmp_path, monkeypatch):
    (tmp_path / "mine.json").write_text(json.dumps(builtin_inequality("chsh").to_json()))
    monkeypatch.setenv("BELLBOUND_DATA_DIR", str(tmp_path))
    assert resolve_inequality("mine").kind == CORRELATION


def test_load_state_forms():
    rho = isotropic_state(2, 0.4).rho
    doc = {"dA": 2, "dB": 2, "rho": [[[v.real, v.imag] for v in row] for row in rho]}
    np.testing.assert_allclose(load_state(doc).rho, rho)
    np.testing.assert_allclose(load_state({"family": "isotropic", "d": 2, "p": 0.4}).rho, rho)
    with pytest.raises(ValidationError, match="rho"):
        load_state({"dA": 2, "dB": 2})
    with pytest.raises(ValidationError):
        family_state("nope", 0.5)


@given(seeds, st.integers(2, 4), st.integers(2, 4))
def test_random_measurements_valid(seed, d, n):
    rng = _rng(seed)
    s = MeasurementSettings([random_povm(d, n, rng)], [random_projective(d, n, rng, rank=1)])
    assert s.max_violation() <= 1e-8
    for E in s.bob[0]:
        np.testing.assert_allclose(E @ E, E, atol=1e-10)


def test_haar_pure_state_is_pure():
    s = haar_pure_state(2, 3, _rng(0))
    assert abs(np.trace(s.rho @ s.rho) - 1) < 1e-12


def test_product_state_respects_chsh_bound():
    rng = _rng(9)
    a = random_unitary(2, rng)[:, 0]
    b = random_unitary(2, rng)[:, 0]
    psi = np.kron(a, b)
    assert horodecki_chsh_max(DensityState(2, 2, np.outer(psi, psi.conj()))) <= 2 + 1e-12
