"""Dense Hermitian matrix kernels.

Everything here is a pure function of its inputs. Matrices are plain
``numpy`` arrays (complex128 unless noted); vectorization is column
stacking throughout, i.e. ``vec(A)[i + j*n] = A[i, j]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

HERMITIAN_TOL = 1e-10


class DimensionError(ValueError):
    """Raised when array shapes do not match the declared dimensions."""


class ValidationError(ValueError):
    """Raised when an input violates a documented precondition."""


def _square(M, name="matrix"):
    M = np.asarray(M)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {M.shape}")
    return M


def is_hermitian(H, tol=HERMITIAN_TOL):
    H = np.asarray(H)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        return False
    return bool(np.max(np.abs(H - H.conj().T), initial=0.0) <= tol)


def hermitize(H, tol=HERMITIAN_TOL, name="matrix"):
    """Return ``(H + H^dagger)/2`` after checking H is Hermitian within ``tol``."""
    H = _square(H, name)
    dev = np.max(np.abs(H - H.conj().T), initial=0.0)
    scale = max(1.0, float(np.max(np.abs(H), initial=0.0)))
    if dev > tol * scale:
        raise ValidationError(f"{name} is not Hermitian (deviation {dev:.3e})")
    return (H + H.conj().T) / 2


def eigh(H, tol=HERMITIAN_TOL):
    """Eigendecomposition of a Hermitian matrix, eigenvalues descending.

    Returns ``(w, V)`` with ``H = V @ diag(w) @ V^dagger``.
    """
    Hs = hermitize(H, tol)
    w, V = np.linalg.eigh(Hs)
    return w[::-1].copy(), V[:, ::-1].copy()


def trace_norm(H, tol=HERMITIAN_TOL):
    """Sum of absolute eigenvalues of a Hermitian matrix."""
    w = np.linalg.eigvalsh(hermitize(H, tol))
    return float(np.sum(np.abs(w)))


def singular_values(M):
    """Singular values of a rectangular matrix, descending."""
    M = np.atleast_2d(np.asarray(M))
    if M.size == 0:
        return np.zeros(0)
    return np.linalg.svd(M, compute_uv=False)


def _check_bipartite(M, dA, dB):
    M = _square(M)
    if dA < 1 or dB < 1 or M.shape[0] != dA * dB:
        raise DimensionError(
            f"matrix of size {M.shape[0]} is not compatible with dA={dA}, dB={dB}")
    return M


def partial_trace(M, dA, dB, side="B"):
    """Trace out subsystem ``side`` ('A' or 'B') of an operator on C^dA (x) C^dB."""
    M = _check_bipartite(M, dA, dB)
    T = M.reshape(dA, dB, dA, dB)
    side = side.upper()
    if side == "A":
        return np.trace(T, axis1=0, axis2=2)
    if side == "B":
        return np.trace(T, axis1=1, axis2=3)
    raise ValidationError("side must be 'A' or 'B'")


def partial_transpose(M, dA, dB, side="A"):
    """Transpose subsystem ``side`` of an operator on C^dA (x) C^dB."""
    M = _check_bipartite(M, dA, dB)
    T = M.reshape(dA, dB, dA, dB)
    side = side.upper()
    if side == "A":
        T = T.transpose(2, 1, 0, 3)
    elif side == "B":
        T = T.transpose(0, 3, 2, 1)
    else:
        raise ValidationError("side must be 'A' or 'B'")
    return T.reshape(dA * dB, dA * dB)


def vec(A):
    """Column-stacking vectorization."""
    return np.asarray(A).reshape(-1, order="F")


def unvec(v, rows, cols=None):
    cols = rows if cols is None else cols
    return np.asarray(v).reshape(rows, cols, order="F")


def flip_operator(dA, dB):
    """Swap V: C^dA (x) C^dB -> C^dB (x) C^dA, V|i>|j> = |j>|i>."""
    V = np.zeros((dA * dB, dA * dB))
    for i in range(dA):
        for j in range(dB):
            V[j * dA + i, i * dB + j] = 1.0
    return V


@dataclass(frozen=True)
class FlipKernel:
    """Matrix ``R`` with ``tr(rho A(x)B) = vec(A)^dagger R vec(B)`` for Hermitian A, B.

    For dA == dB this is ``(V rho)^{T_A}``; in general it is the
    dA^2 x dB^2 reshuffling of rho.
    """

    dA: int
    dB: int
    R: np.ndarray

    def bilinear(self, A, B):
        return complex(vec(A).conj() @ self.R @ vec(B))


def flip_kernel(rho, dA, dB):
    rho = _check_bipartite(rho, dA, dB)
    T = rho.reshape(dA, dB, dA, dB).transpose(2, 0, 1, 3)
    return FlipKernel(dA, dB, np.ascontiguousarray(T.reshape(dA * dA, dB * dB)))


@dataclass(frozen=True)
class HermitianBasis:
    """Orthonormal Hermitian basis with ``elements[0] = 1/sqrt(d)``."""

    dim: int
    elements: np.ndarray  # shape (d*d, d, d)

    def __len__(self):
        return self.elements.shape[0]

    @property
    def symmetric_mask(self):
        """True for real (symmetric) elements, False for imaginary antisymmetric ones."""
        return np.all(np.abs(self.elements.imag) < 1e-15, axis=(1, 2))

    def expand(self, H):
        return expand_in_basis(H, self)

    def reconstruct(self, coeffs):
        return reconstruct(coeffs, self)


@lru_cache(maxsize=None)
def _gellmann_elements(d):
    els = [np.eye(d, dtype=complex) / np.sqrt(d)]
    pairs = [(i, j) for i in range(d) for j in range(i + 1, d)]
    for i, j in pairs:
        S = np.zeros((d, d), dtype=complex)
        S[i, j] = S[j, i] = 1 / np.sqrt(2)
        els.append(S)
    for i, j in pairs:
        A = np.zeros((d, d), dtype=complex)
        A[i, j] = -1j / np.sqrt(2)
        A[j, i] = 1j / np.sqrt(2)
        els.append(A)
    for k in range(1, d):
        D = np.zeros((d, d), dtype=complex)
        D[np.arange(k), np.arange(k)] = 1.0
        D[k, k] = -k
        els.append(D / np.sqrt(k * (k + 1)))
    out = np.array(els)
    out.setflags(write=False)
    return out


def gellmann_basis(d):
    """Identity plus generalized Gell-Mann matrices, trace-orthonormal.

    Ordering: identity, symmetric pairs (i<j), antisymmetric pairs (i<j),
    then diagonal elements.
    """
    if int(d) != d or d < 1:
        raise ValidationError(f"basis dimension must be a positive integer, got {d}")
    return HermitianBasis(int(d), _gellmann_elements(int(d)))


def expand_in_basis(H, basis):
    """Real coefficients ``y_n = tr(H sigma_n)``."""
    H = _square(H)
    if H.shape[0] != basis.dim:
        raise DimensionError(f"operator dim {H.shape[0]} != basis dim {basis.dim}")
    # tr(H s) = sum_ij H_ij s_ji
    y = np.einsum("ij,nji->n", H, basis.elements)
    return y.real.copy()


def reconstruct(coeffs, basis):
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape != (len(basis),):
        raise DimensionError(f"expected {len(basis)} coefficients, got {coeffs.shape}")
    return np.einsum("n,nij->ij", coeffs, basis.elements)


@lru_cache(maxsize=None)
def _anticommutator_constants(d):
    s = _gellmann_elements(d)
    # P[n, i, j] = 1/2 tr(s_n {s_i, s_j}) = Re tr(s_n s_i s_j)
    prod = np.einsum("iab,jbc->ijac", s, s)
    P = np.einsum("nca,ijac->nij", s, prod).real
    P = (P + P.transpose(0, 2, 1)) / 2
    P[np.abs(P) < 1e-15] = 0.0
    P.setflags(write=False)
    return P


def anticommutator_constants(d):
    """Structure constants ``P[n,i,j] = tr(sigma_n [sigma_i, sigma_j]_+)/2`` (real)."""
    return _anticommutator_constants(int(d))


def correlation_tensor(rho, dA, dB):
    """``T[n, n'] = tr(rho sigma_n (x) sigma_n')`` over the Gell-Mann bases.

    Row 0 / column 0 hold the coherence vectors; ``T[1:, 1:]`` is the
    correlation matrix of the traceless parts.
    """
    rho = _check_bipartite(rho, dA, dB)
    sA = gellmann_basis(dA).elements
    sB = gellmann_basis(dB).elements
    R4 = rho.reshape(dA, dB, dA, dB)
    T = np.einsum("aibj,nba,mji->nm", R4, sA, sB, optimize=True)
    return T.real.copy()


def correlation_singular_values(rho, dA, dB, k=None):
    """Singular values of ``T[1:, 1:]`` without building the Gell-Mann tensor.

    The traceless correlation part of ``rho`` is realigned into a
    ``dA^2 x dB^2`` matrix; the orthonormal basis change to Gell-Mann
    coordinates preserves singular values. ``k`` keeps only the largest ones.
    """
    rho = _check_bipartite(rho, dA, dB)
    rA = partial_trace(rho, dA, dB, "B")
    rB = partial_trace(rho, dA, dB, "A")
    t = np.trace(rho)
    R4 = rho.reshape(dA, dB, dA, dB).copy()
    R4 -= np.einsum("ac,bd->abcd", np.eye(dA) / dA, rB)
    R4 -= np.einsum("ac,bd->abcd", rA, np.eye(dB) / dB)
    R4 += t * np.einsum("ac,bd->abcd", np.eye(dA), np.eye(dB)) / (dA * dB)
    K = R4.transpose(0, 2, 1, 3).reshape(dA * dA, dB * dB)
    if k is not None and min(K.shape) > 64:
        from scipy.sparse.linalg import ArpackError, svds
        if np.linalg.norm(K) <= 1e-14:
            return np.zeros(k)
        # fixed start vector keeps results reproducible; ARPACK can still fail
        # on near-degenerate spectra, so fall back to the Gram eigensolve
        v0 = np.random.default_rng(0).standard_normal(min(K.shape))
        try:
            return np.sort(svds(K, k=k, v0=v0, return_singular_vectors=False))[::-1]
        except ArpackError:
            G = K @ K.conj().T if K.shape[0] <= K.shape[1] else K.conj().T @ K
            ev = np.linalg.eigvalsh((G + G.conj().T) / 2)[::-1][:k]
            return np.sqrt(np.clip(ev, 0.0, None))
    s = np.linalg.svd(K, compute_uv=False)
    return s if k is None else s[:k]


def random_hermitian(d, rng):
    G = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return (G + G.conj().T) / 2


def random_unitary(d, rng):
    Z = (rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))) / np.sqrt(2)
    Q, R = np.linalg.qr(Z)
    ph = np.diag(R) / np.abs(np.diag(R))
    return Q * ph


def psd_sqrt_inv(S, floor=1e-14):
    w, V = np.linalg.eigh((S + S.conj().T) / 2)
    w = np.maximum(w, floor)
    return (V / np.sqrt(w)) @ V.conj().T
