"""Spin-F matrix representations, SU(N) generator bases, and unitary helpers.

All matrices are dense complex numpy arrays in units where hbar = 1.  The z
basis is ordered by descending magnetic quantum number m = F, F-1, ..., -F,
so ``fz`` is diagonal with decreasing entries.  Arrays handed out by this
module are marked read-only; every value is immutable after construction and
safe to share across threads.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np

# Largest supported manifold, N = 2F+1 (spin F <= 5).  Well beyond the
# F = 1, 2 manifolds this package targets, but cheap to allow.
MAX_DIM = 11


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def _max_abs(a: np.ndarray) -> float:
    return float(np.max(np.abs(a))) if a.size else 0.0


@dataclass(frozen=True)
class SpinOperators:
    """Angular-momentum matrices fx, fy, fz for a single spin-F manifold.

    Satisfies [fx, fy] = i fz (and cyclic) and
    fx^2 + fy^2 + fz^2 = F(F+1) * identity.
    """

    f: float
    dim: int
    fx: np.ndarray
    fy: np.ndarray
    fz: np.ndarray

    @cached_property
    def fstack(self) -> np.ndarray:
        """The three matrices stacked as a (3, N, N) array, for q . F contractions."""
        return _readonly(np.stack([self.fx, self.fy, self.fz]))

    def dot(self, vec) -> np.ndarray:
        """vec . F for a real 3-vector (or batch of them, shape (..., 3))."""
        vec = np.asarray(vec, dtype=float)
        return np.tensordot(vec, self.fstack, axes=([-1], [0]))


@lru_cache(maxsize=None)
def spin_matrices(f: float) -> SpinOperators:
    """Standard angular-momentum matrices for spin quantum number ``f``.

    ``f`` must be a positive half-integer with 2f+1 <= MAX_DIM.  The raising
    operator has matrix elements sqrt(F(F+1) - m(m+1)) on the superdiagonal.
    """
    fval = float(f)
    two_f = 2.0 * fval
    if fval <= 0 or abs(two_f - round(two_f)) > 1e-9:
        raise ValueError(f"spin must be a positive half-integer, got {f!r}")
    dim = int(round(two_f)) + 1
    if dim > MAX_DIM:
        raise ValueError(f"spin {f} needs dimension {dim} > cap {MAX_DIM}")
    m = fval - np.arange(dim)
    fz = np.diag(m).astype(complex)
    up = np.sqrt(fval * (fval + 1.0) - m[1:] * (m[1:] + 1.0))
    fplus = np.zeros((dim, dim), dtype=complex)
    fplus[np.arange(dim - 1), np.arange(1, dim)] = up
    fminus = fplus.conj().T
    fx = (fplus + fminus) / 2.0
    fy = (fplus - fminus) / 2.0j
    return SpinOperators(fval, dim, _readonly(fx), _readonly(fy), _readonly(fz))


def ladder_operators(ops: SpinOperators) -> tuple[np.ndarray, np.ndarray]:
    """Raising and lowering operators (F+ , F-) = (fx + i fy, fx - i fy)."""
    return ops.fx + 1j * ops.fy, ops.fx - 1j * ops.fy


@dataclass(frozen=True)
class GeneratorBasis:
    """Trace-orthogonal Hermitian traceless basis of su(N), tr(g_a g_b) = 2 d_ab."""

    dim: int
    generators: np.ndarray  # shape (dim**2 - 1, dim, dim)


@lru_cache(maxsize=None)
def su_generators(dim: int) -> GeneratorBasis:
    """Generalized Gell-Mann basis for su(N).

    Ordering follows the usual convention: for each column k = 2..N, the
    symmetric and antisymmetric pair matrices for rows j < k, then the
    diagonal matrix for that k.  For dim = 2 this yields the Pauli matrices,
    for dim = 3 the eight standard Gell-Mann matrices.
    """
    if dim < 2:
        raise ValueError(f"su(N) basis needs N >= 2, got {dim}")
    gens = []
    for k in range(1, dim):
        for j in range(k):
            sym = np.zeros((dim, dim), dtype=complex)
            sym[j, k] = sym[k, j] = 1.0
            gens.append(sym)
            asym = np.zeros((dim, dim), dtype=complex)
            asym[j, k] = -1j
            asym[k, j] = 1j
            gens.append(asym)
        diag = np.zeros((dim, dim), dtype=complex)
        l = k  # number of leading +1 entries
        diag[np.arange(l), np.arange(l)] = 1.0
        diag[l, l] = -l
        gens.append(diag * np.sqrt(2.0 / (l * (l + 1))))
    return GeneratorBasis(dim, _readonly(np.stack(gens)))


@dataclass(frozen=True)
class Unitary:
    """Dense complex square matrix validated to be unitary at construction.

    ``atol`` is the allowed max-norm deviation of U^dag U from the identity;
    the default matches exactly-unitary construction paths (eigendecomposition
    exponentials), integrators pass a looser bound consistent with their
    re-unitarization threshold.
    """

    matrix: np.ndarray
    atol: float = field(default=1e-9, compare=False)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {m.shape}")
        drift = _max_abs(m.conj().T @ m - np.eye(m.shape[0]))
        if drift > self.atol:
            raise ValueError(f"matrix is not unitary: max |U^H U - I| = {drift:.3e} > {self.atol:.1e}")
        object.__setattr__(self, "matrix", _readonly(m))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def dagger(self) -> np.ndarray:
        return self.matrix.conj().T

    def __matmul__(self, other: "Unitary") -> "Unitary":
        return Unitary(self.matrix @ other.matrix, atol=max(self.atol, other.atol))


def expm_generator(h: np.ndarray, s: float = 1.0) -> Unitary:
    """exp(-i s H) for Hermitian H, via eigendecomposition.

    The Hermitian eigensolver route keeps the result unitary to solver
    precision, unlike generic scaling-and-squaring.  Raises if H deviates
    from Hermiticity by more than 1e-10.
    """
    h = np.asarray(h, dtype=complex)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {h.shape}")
    herm_err = _max_abs(h - h.conj().T)
    if herm_err > 1e-10:
        raise ValueError(f"generator must be Hermitian: max |H - H^H| = {herm_err:.3e}")
    w, v = np.linalg.eigh(h)
    return Unitary((v * np.exp(-1j * s * w)) @ v.conj().T)


def expm_generator_matrix(h: np.ndarray, s: float = 1.0) -> np.ndarray:
    """Like expm_generator but returns the bare ndarray (no Unitary wrapper)."""
    w, v = np.linalg.eigh(np.asarray(h, dtype=complex))
    return (v * np.exp(-1j * s * w)) @ v.conj().T
