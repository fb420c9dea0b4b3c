"""Bell inequalities, bipartite states, measurement settings and Bell operators.

Outcome index 0 is the "+" outcome and index 1 the "-" outcome for
dichotomic measurements. Correlation inequalities carry a matrix
``joint[k, l]`` multiplying ``E(A_k, B_l)``; probability inequalities carry
``joint[k, kappa, l, lambda]`` together with marginal coefficient tables
``marginal_a[k, kappa]`` and ``marginal_b[l, lambda]``.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .linalg import (
    DimensionError,
    ValidationError,
    hermitize,
    partial_transpose,
    random_unitary,
)

CORRELATION = "correlation"
PROBABILITY = "probability"

POVM_TOL = 1e-9
OBSERVABLE_TOL = 1e-8

PAULI = np.array([
    [[0, 1], [1, 0]],
    [[0, -1j], [1j, 0]],
    [[1, 0], [0, -1]],
], dtype=complex)


# ---------------------------------------------------------------------------
# inequalities


@dataclass
class BellInequality:
    kind: str
    mA: int
    mB: int
    nA: int
    nB: int
    joint: np.ndarray
    beta_lhv: float
    marginal_a: np.ndarray | None = None
    marginal_b: np.ndarray | None = None
    name: str = ""

    def __post_init__(self):
        self.joint = np.asarray(self.joint, dtype=float)
        if self.kind == CORRELATION:
            if self.nA != 2 or self.nB != 2:
                raise ValidationError("correlation inequalities have two outcomes per setting")
            if self.joint.shape != (self.mA, self.mB):
                raise ValidationError(
                    f"joint: expected shape {(self.mA, self.mB)}, got {self.joint.shape}")
            if self.marginal_a is not None or self.marginal_b is not None:
                raise ValidationError("correlation inequalities carry no marginal coefficients")
        elif self.kind == PROBABILITY:
            shape = (self.mA, self.nA, self.mB, self.nB)
            if self.joint.shape != shape:
                raise ValidationError(f"joint: expected shape {shape}, got {self.joint.shape}")
            self.marginal_a = (np.zeros((self.mA, self.nA)) if self.marginal_a is None
                               else np.asarray(self.marginal_a, dtype=float))
            self.marginal_b = (np.zeros((self.mB, self.nB)) if self.marginal_b is None
                               else np.asarray(self.marginal_b, dtype=float))
            if self.marginal_a.shape != (self.mA, self.nA):
                raise ValidationError(
                    f"marginal_a: expected shape {(self.mA, self.nA)}, got {self.marginal_a.shape}")
            if self.marginal_b.shape != (self.mB, self.nB):
                raise ValidationError(
                    f"marginal_b: expected shape {(self.mB, self.nB)}, got {self.marginal_b.shape}")
        else:
            raise ValidationError(f"kind must be '{CORRELATION}' or '{PROBABILITY}', got {self.kind!r}")
        self.beta_lhv = float(self.beta_lhv)

    @property
    def dichotomic(self):
        return self.nA == 2 and self.nB == 2

    def to_probability(self) -> "BellInequality":
        """Equivalent probability form; correlators become ``p(++)-p(+-)-p(-+)+p(--)``."""
        if self.kind == PROBABILITY:
            return self
        s = np.array([1.0, -1.0])
        joint = self.joint[:, None, :, None] * s[None, :, None, None] * s[None, None, None, :]
        return BellInequality(PROBABILITY, self.mA, self.mB, 2, 2, joint, self.beta_lhv,
                              np.zeros((self.mA, 2)), np.zeros((self.mB, 2)), self.name)

    def plus_form(self):
        """Coefficients in terms of "+" POVM elements only (dichotomic).

        Returns ``(J, a, b, c)`` with the Bell operator equal to
        ``sum J[k,l] A+_k (x) B+_l + sum a[k] A+_k (x) 1 + sum b[l] 1 (x) B+_l + c 1``.
        """
        if not self.dichotomic:
            raise ValidationError("plus_form needs a dichotomic inequality")
        p = self.to_probability()
        G = p.joint
        # A- = 1 - A+, B- = 1 - B+
        J = G[:, 0, :, 0] - G[:, 0, :, 1] - G[:, 1, :, 0] + G[:, 1, :, 1]
        a = (G[:, 0, :, 1] - G[:, 1, :, 1]).sum(axis=1) + p.marginal_a[:, 0] - p.marginal_a[:, 1]
        b = (G[:, 1, :, 0] - G[:, 1, :, 1]).sum(axis=0) + p.marginal_b[:, 0] - p.marginal_b[:, 1]
        c = G[:, 1, :, 1].sum() + p.marginal_a[:, 1].sum() + p.marginal_b[:, 1].sum()
        return J, a, b, float(c)

    def to_json(self) -> dict:
        doc = {"name": self.name, "kind": self.kind, "mA": self.mA, "mB": self.mB,
               "nA": self.nA, "nB": self.nB, "beta_lhv": self.beta_lhv,
               "joint": self.joint.tolist(),
               "marginal_a": None if self.marginal_a is None else self.marginal_a.tolist(),
               "marginal_b": None if self.marginal_b is None else self.marginal_b.tolist()}
        return doc


_INEQ_FIELDS = {"kind": str, "mA": int, "mB": int, "nA": int, "nB": int, "beta_lhv": (int, float)}


def load_inequality(doc) -> BellInequality:
    """Build an inequality from a JSON document (dict, JSON text or path)."""
    if isinstance(doc, (str, os.PathLike)):
        p = Path(doc)
        if isinstance(doc, os.PathLike) or (not str(doc).lstrip().startswith("{") and p.exists()):
            doc = p.read_text()
        doc = json.loads(doc)
    if not isinstance(doc, dict):
        raise ValidationError("inequality document must be a JSON object")
    for key, typ in _INEQ_FIELDS.items():
        if key not in doc or doc[key] is None:
            raise ValidationError(f"inequality document: missing field '{key}'")
        if not isinstance(doc[key], typ) or isinstance(doc[key], bool):
            raise ValidationError(f"inequality document: field '{key}' has wrong type")
    if "joint" not in doc:
        raise ValidationError("inequality document: missing field 'joint'")
    for key in ("mA", "mB", "nA", "nB"):
        if doc[key] < 1:
            raise ValidationError(f"inequality document: field '{key}' must be positive")
    try:
        joint = np.asarray(doc["joint"], dtype=float)
        ma = doc.get("marginal_a")
        mb = doc.get("marginal_b")
        return BellInequality(
            doc["kind"], doc["mA"], doc["mB"], doc["nA"], doc["nB"], joint, doc["beta_lhv"],
            None if ma is None else np.asarray(ma, dtype=float),
            None if mb is None else np.asarray(mb, dtype=float),
            doc.get("name", ""))
    except ValueError as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ValidationError(f"inequality document: ragged or non-numeric array ({exc})") from exc


def _chsh():
    return BellInequality(CORRELATION, 2, 2, 2, 2, [[1, 1], [1, -1]], 2.0, name="chsh")


def _ch():
    joint = np.zeros((2, 2, 2, 2))
    joint[0, 0, 0, 0] = joint[0, 0, 1, 0] = joint[1, 0, 0, 0] = 1
    joint[1, 0, 1, 0] = -1
    ma = np.zeros((2, 2))
    mb = np.zeros((2, 2))
    ma[0, 0] = mb[0, 0] = -1
    return BellInequality(PROBABILITY, 2, 2, 2, 2, joint, 0.0, ma, mb, name="ch")


def _i3322():
    joint = np.zeros((3, 2, 3, 2))
    for (k, l), v in {(0, 0): 1, (0, 1): 1, (0, 2): 1, (1, 0): 1, (1, 1): 1,
                      (1, 2): -1, (2, 0): 1, (2, 1): -1}.items():
        joint[k, 0, l, 1] = v
    ma = np.zeros((3, 2))
    mb = np.zeros((3, 2))
    ma[0, 0] = -1
    mb[0, 1] = -2
    mb[1, 1] = -1
    return BellInequality(PROBABILITY, 3, 3, 2, 2, joint, 0.0, ma, mb, name="i3322")


_BUILTINS = {"chsh": _chsh, "ch": _ch, "i3322": _i3322}


def data_dir() -> Path:
    env = os.environ.get("BELLBOUND_DATA_DIR")
    return Path(env) if env else Path(__file__).parent / "data"


def builtin_inequality(name: str) -> BellInequality:
    key = name.lower()
    if key in _BUILTINS:
        return _BUILTINS[key]()
    raise ValidationError(f"unknown inequality {name!r}; builtins are {sorted(_BUILTINS)}")


def resolve_inequality(ref: str) -> BellInequality:
    """Builtin name, a JSON file path, or a file name in the data directory."""
    if ref.lower() in _BUILTINS:
        return builtin_inequality(ref)
    p = Path(ref)
    if p.is_file():
        return load_inequality(p)
    for cand in (data_dir() / ref, data_dir() / f"{ref}.json"):
        if cand.is_file():
            return load_inequality(cand)
    raise ValidationError(
        f"unknown inequality {ref!r}; builtins are {sorted(_BUILTINS)}, data dir is {data_dir()}")


# ---------------------------------------------------------------------------
# states


@dataclass
class DensityState:
    dA: int
    dB: int
    rho: np.ndarray
    # skip the eigenvalue check for states that are PSD by construction
    trusted: bool = field(default=False, repr=False, compare=False)

    def __post_init__(self):
        rho = np.asarray(self.rho, dtype=complex)
        if rho.shape != (self.dA * self.dB, self.dA * self.dB):
            raise DimensionError(f"rho has shape {rho.shape}, expected dA*dB = {self.dA * self.dB}")
        rho = hermitize(rho, 1e-10, "rho")
        if abs(np.trace(rho).real - 1) > 1e-10:
            raise ValidationError(f"rho has trace {np.trace(rho).real}, expected 1")
        w = np.linalg.eigvalsh(rho) if not self.trusted else np.zeros(1)
        if w[0] < -1e-9:
            raise ValidationError(f"rho is not positive semidefinite (min eigenvalue {w[0]:.3e})")
        self.rho = rho

    @property
    def dim(self):
        return self.dA * self.dB

    def to_json(self) -> dict:
        return {"dA": self.dA, "dB": self.dB,
                "rho": [[[float(v.real), float(v.imag)] for v in row] for row in self.rho]}


def _check_p(p, lo=0.0, hi=1.0, open_=False):
    if open_:
        if not lo < p < hi:
            raise ValidationError(f"p must lie in the open interval ({lo}, {hi}), got {p}")
    elif not lo <= p <= hi:
        raise ValidationError(f"p must lie in [{lo}, {hi}], got {p}")


def max_entangled(d):
    psi = np.zeros(d * d, dtype=complex)
    psi[np.arange(d) * (d + 1)] = 1 / np.sqrt(d)
    return psi


def isotropic_state(d: int, p: float) -> DensityState:
    """``p |Psi+_d><Psi+_d| + (1-p) 1/d^2``."""
    if d < 2:
        raise ValidationError("isotropic states need d >= 2")
    _check_p(p)
    psi = max_entangled(d)
    rho = p * np.outer(psi, psi.conj()) + (1 - p) * np.eye(d * d) / d ** 2
    # spectrum is p + (1-p)/d^2 and (1-p)/d^2, nonnegative for p in [0, 1]
    return DensityState(d, d, rho, trusted=True)


def cg_state(p: float) -> DensityState:
    """Mixture of (2|00>+|11>)/sqrt5 with weight p and |01> with weight 1-p."""
    _check_p(p)
    psi = np.array([2, 0, 0, 1], dtype=complex) / np.sqrt(5)
    e01 = np.zeros(4)
    e01[1] = 1
    rho = p * np.outer(psi, psi.conj()) + (1 - p) * np.outer(e01, e01)
    return DensityState(2, 2, rho)


def horodecki_h_state(p: float) -> DensityState:
    """One-parameter 3x3 PPT bound-entangled family."""
    _check_p(p, open_=True)

    def ket(i, j):
        v = np.zeros(9, dtype=complex)
        v[3 * i + j] = 1
        return v

    ent = np.zeros((9, 9), dtype=complex)
    for i in range(3):
        for j in range(3):
            if i != j:
                ent += np.outer(ket(i, j), ket(i, j)) / 8
    ent -= np.outer(ket(2, 0), ket(2, 0)) / 8
    psi3 = max_entangled(3)
    ent += 3 / 8 * np.outer(psi3, psi3.conj())
    v = np.sqrt((1 + p) / 2) * ket(2, 0) + np.sqrt((1 - p) / 2) * ket(2, 2)
    rho = 8 * p / (8 * p + 1) * ent + np.outer(v, v.conj()) / (8 * p + 1)
    return DensityState(3, 3, rho)


FAMILIES = {"isotropic", "cg", "horodecki_h"}


def family_state(family: str, p: float, d: int | None = None) -> DensityState:
    if family == "isotropic":
        if d is None:
            raise ValidationError("isotropic family needs d")
        return isotropic_state(int(d), p)
    if family == "cg":
        return cg_state(p)
    if family == "horodecki_h":
        return horodecki_h_state(p)
    raise ValidationError(f"unknown state family {family!r}; known: {sorted(FAMILIES)}")


def load_state(doc) -> DensityState:
    """State from the JSON schema: explicit ``rho`` or a named ``family``."""
    if isinstance(doc, (str, os.PathLike)):
        doc = json.loads(Path(doc).read_text())
    if not isinstance(doc, dict):
        raise ValidationError("state document must be a JSON object")
    if "family" in doc:
        if "p" not in doc:
            raise ValidationError("state document: missing field 'p'")
        return family_state(doc["family"], float(doc["p"]), doc.get("d"))
    for key in ("dA", "dB", "rho"):
        if key not in doc:
            raise ValidationError(f"state document: missing field '{key}'")
    try:
        arr = np.asarray(doc["rho"], dtype=float)
    except ValueError as exc:
        raise ValidationError(f"state document: malformed rho ({exc})") from exc
    if arr.ndim != 3 or arr.shape[2] != 2:
        raise ValidationError("state document: rho must be nested [re, im] pairs")
    return DensityState(int(doc["dA"]), int(doc["dB"]), arr[..., 0] + 1j * arr[..., 1])


def ginibre_state(dA, dB, rng, rank=None) -> DensityState:
    """Random state ``G G^dagger / tr`` (full rank by default)."""
    n = dA * dB
    k = n if rank is None else rank
    G = rng.normal(size=(n, k)) + 1j * rng.normal(size=(n, k))
    rho = G @ G.conj().T
    return DensityState(dA, dB, rho / np.trace(rho).real)


def haar_pure_state(dA, dB, rng) -> DensityState:
    return ginibre_state(dA, dB, rng, rank=1)


# ---------------------------------------------------------------------------
# measurements


@dataclass
class MeasurementSettings:
    """POVMs per party: ``alice[k][kappa]`` and ``bob[l][lambda]``."""

    alice: list
    bob: list

    @classmethod
    def from_observables(cls, alice, bob):
        """Dichotomic settings from +-1 observables, ``O = E+ - E-``."""
        def split(O):
            O = np.asarray(O, dtype=complex)
            I = np.eye(O.shape[0])
            return [(I + O) / 2, (I - O) / 2]
        return cls([split(O) for O in alice], [split(O) for O in bob])

    def observables(self, party):
        povms = self.alice if party == "A" else self.bob
        return [E[0] - E[1] for E in povms]

    def side(self, party):
        return self.alice if party == "A" else self.bob

    def replace(self, party, povms):
        return MeasurementSettings(povms, self.bob) if party == "A" else MeasurementSettings(self.alice, povms)

    def validate(self, tol=POVM_TOL):
        for party in "AB":
            for k, povm in enumerate(self.side(party)):
                d = povm[0].shape[0]
                S = sum(povm)
                dev = np.max(np.abs(S - np.eye(d)))
                if dev > tol:
                    raise ValidationError(f"party {party} setting {k}: POVM sums to identity only within {dev:.2e}")
                for j, E in enumerate(povm):
                    if np.max(np.abs(E - E.conj().T)) > tol:
                        raise ValidationError(f"party {party} setting {k} outcome {j}: not Hermitian")
                    w = np.linalg.eigvalsh((E + E.conj().T) / 2)
                    if w[0] < -tol:
                        raise ValidationError(
                            f"party {party} setting {k} outcome {j}: negative eigenvalue {w[0]:.2e}")
        return self

    def max_violation(self):
        """Largest deviation from POVM validity (completeness or positivity)."""
        worst = 0.0
        for party in "AB":
            for povm in self.side(party):
                d = povm[0].shape[0]
                worst = max(worst, np.max(np.abs(sum(povm) - np.eye(d))))
                for E in povm:
                    worst = max(worst, -np.linalg.eigvalsh((E + E.conj().T) / 2)[0])
        return float(worst)

    def to_json(self):
        def m(M):
            return [[[float(v.real), float(v.imag)] for v in row] for row in M]
        return {"alice": [[m(E) for E in povm] for povm in self.alice],
                "bob": [[m(E) for E in povm] for povm in self.bob]}


def _check_settings_shape(ineq, settings):
    if len(settings.alice) != ineq.mA or len(settings.bob) != ineq.mB:
        raise DimensionError(
            f"settings have {len(settings.alice)}x{len(settings.bob)} settings, inequality needs {ineq.mA}x{ineq.mB}")
    for k, povm in enumerate(settings.alice):
        if len(povm) != ineq.nA:
            raise DimensionError(f"Alice setting {k} has {len(povm)} outcomes, expected {ineq.nA}")
    for l, povm in enumerate(settings.bob):
        if len(povm) != ineq.nB:
            raise DimensionError(f"Bob setting {l} has {len(povm)} outcomes, expected {ineq.nB}")


def bell_operator(ineq: BellInequality, settings: MeasurementSettings, validate=True):
    _check_settings_shape(ineq, settings)
    if validate:
        settings.validate()
    dA = settings.alice[0][0].shape[0]
    dB = settings.bob[0][0].shape[0]
    op = np.zeros((dA * dB, dA * dB), dtype=complex)
    if ineq.kind == CORRELATION:
        OA = settings.observables("A")
        OB = settings.observables("B")
        if validate:
            for O in OA + OB:
                if np.max(np.abs(O @ O - np.eye(O.shape[0]))) > OBSERVABLE_TOL:
                    raise ValidationError("correlation observables must square to the identity")
        for k in range(ineq.mA):
            for l in range(ineq.mB):
                if ineq.joint[k, l]:
                    op += ineq.joint[k, l] * np.kron(OA[k], OB[l])
        return op
    IA, IB = np.eye(dA), np.eye(dB)
    for k in range(ineq.mA):
        for a in range(ineq.nA):
            EA = settings.alice[k][a]
            Bsum = sum(ineq.joint[k, a, l, b] * settings.bob[l][b]
                       for l in range(ineq.mB) for b in range(ineq.nB))
            op += np.kron(EA, Bsum + ineq.marginal_a[k, a] * IB)
    for l in range(ineq.mB):
        for b in range(ineq.nB):
            if ineq.marginal_b[l, b]:
                op += ineq.marginal_b[l, b] * np.kron(IA, settings.bob[l][b])
    return op


def expectation(rho, op) -> float:
    rho = rho.rho if isinstance(rho, DensityState) else np.asarray(rho)
    op = np.asarray(op)
    if rho.shape != op.shape:
        raise DimensionError(f"state shape {rho.shape} does not match operator shape {op.shape}")
    val = np.einsum("ij,ji->", rho, op)
    return float(val.real)


def evaluate(state: DensityState, ineq: BellInequality, settings: MeasurementSettings) -> float:
    return expectation(state, bell_operator(ineq, settings, validate=False))


def ppt_check(state: DensityState, tol=1e-9):
    """``(is_ppt, min eigenvalue of rho^{T_A})``."""
    w = np.linalg.eigvalsh(partial_transpose(state.rho, state.dA, state.dB, "A"))
    return bool(w[0] >= -tol), float(w[0])


def pauli_correlation_matrix(state: DensityState):
    if state.dA != 2 or state.dB != 2:
        raise ValidationError("needs a two-qubit state")
    return np.array([[np.einsum("ij,ji->", state.rho, np.kron(a, b)).real for b in PAULI] for a in PAULI])


def horodecki_chsh_max(state: DensityState) -> float:
    """Exact maximal CHSH value ``2 sqrt(u1 + u2)`` of a two-qubit state."""
    T = pauli_correlation_matrix(state)
    u = np.sort(np.linalg.eigvalsh(T.T @ T))[::-1]
    return float(2 * np.sqrt(max(u[0] + u[1], 0.0)))


# ---------------------------------------------------------------------------
# random POVMs


def random_povm(d, n_outcomes, rng):
    """Generic POVM from Ginibre positive operators, ``S^{-1/2} P S^{-1/2}``."""
    Ps = []
    for _ in range(n_outcomes):
        G = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        Ps.append(G @ G.conj().T)
    w, V = np.linalg.eigh(sum(Ps))
    Sih = (V / np.sqrt(w)) @ V.conj().T
    out = [Sih @ P @ Sih for P in Ps]
    return [(E + E.conj().T) / 2 for E in out]


def random_projective(d, n_outcomes, rng, rank=1):
    """Projective measurement; outcome 0 has ``rank``, the rest split the remainder."""
    U = random_unitary(d, rng)
    rank = int(np.clip(rank, 0, d))
    sizes = [rank]
    rest = d - rank
    for j in range(n_outcomes - 1):
        share = rest // (n_outcomes - 1 - j) if n_outcomes - 1 - j else rest
        sizes.append(share)
        rest -= share
    sizes[-1] += rest
    out, start = [], 0
    for s in sizes:
        cols = U[:, start:start + s]
        out.append(cols @ cols.conj().T)
        start += s
    return out
