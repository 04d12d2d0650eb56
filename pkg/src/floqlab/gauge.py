"""Gate fidelity, Wilson loops, and the path-ordering witness.

A single loop holonomy cannot distinguish genuinely non-commuting transport
from basis artifacts; the basis-independent witness is the difference of two
Wilson loops (holonomy traces) taken over the same three loops composed in
two non-cyclically-permuted orders.  For the three great-circle loops p1, p2,
p3 the detuning-free composition traces reduce to a real double sum over
Wigner d-matrix elements, evaluated here both analytically and by direct
matrix composition.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .hamiltonians import DrivingConfig, g_factor
from .loops import ParameterLoop, make_loop
from .propagation import holonomy_nonadiabatic, holonomy_nonadiabatic_delta_sweep, ideal_holonomy
from .spin import Unitary, spin_matrices

__all__ = [
    "fidelity",
    "wilson_loop",
    "wigner_d",
    "wigner_d_matrix",
    "rotation_euler",
    "trace_commutator_analytic",
    "trace_commutator_numeric",
    "fidelity_vs_detuning",
    "WilsonReport",
]


def _as_matrix(u) -> np.ndarray:
    return u.matrix if isinstance(u, Unitary) else np.asarray(u, dtype=complex)


def fidelity(measured, target) -> float:
    """Gate agreement |tr(measured^dag @ target)| / N, insensitive to the
    global phase of either argument; equals 1 iff they agree up to phase."""
    a = _as_matrix(measured)
    b = _as_matrix(target)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(abs(np.trace(a.conj().T @ b))) / a.shape[0]


def wilson_loop(gamma) -> complex:
    """Trace of a holonomy; gauge and basis invariant."""
    return complex(np.trace(_as_matrix(gamma)))


# ---------------------------------------------------------------------------
# Wigner d-matrix


def _check_m(f: float, m: float, name: str):
    if abs(m) > f + 1e-9 or abs((f - m) - round(f - m)) > 1e-9:
        raise ValueError(f"{name}={m} is not a magnetic quantum number of spin {f}")


def wigner_d(spin_f: float, m: float, mp: float, beta: float) -> float:
    """Matrix element <F,m| exp(-i beta fy) |F,mp> via the real factorial sum.

    The summation bounds are k in [max(0, mp-m), min(F+mp, F-m)], which is
    the choice validated against the eigendecomposition exponential of fy
    (rotation matrices come out exactly unitary).  Factorials are evaluated
    through log-gamma.
    """
    f = float(spin_f)
    spin_matrices(f)  # validates spin_f
    _check_m(f, m, "m")
    _check_m(f, mp, "mp")
    k_min = max(0, int(round(mp - m)))
    k_max = int(round(min(f + mp, f - m)))
    c, s = math.cos(beta / 2.0), math.sin(beta / 2.0)
    pref = 0.5 * (
        math.lgamma(f + m + 1) + math.lgamma(f - m + 1)
        + math.lgamma(f + mp + 1) + math.lgamma(f - mp + 1)
    )
    total = 0.0
    for k in range(k_min, k_max + 1):
        den = (
            math.lgamma(f + mp - k + 1) + math.lgamma(k + 1)
            + math.lgamma(f - k - m + 1) + math.lgamma(k - mp + m + 1)
        )
        ce = int(round(2 * f - 2 * k + mp - m))
        se = int(round(2 * k - mp + m))
        total += (-1.0) ** (k + int(round(m - mp))) * math.exp(pref - den) * c**ce * s**se
    return total


def wigner_d_matrix(spin_f: float, beta: float) -> np.ndarray:
    """Full (N, N) d-matrix with rows and columns ordered m = F ... -F."""
    dim = spin_matrices(spin_f).dim
    ms = [spin_f - i for i in range(dim)]
    return np.array([[wigner_d(spin_f, mi, mj, beta) for mj in ms] for mi in ms])


def rotation_euler(spin_f: float, alpha: float, beta: float, gamma: float) -> Unitary:
    """Spin-F rotation in the Z-Y-Z convention:
    <m|R|mp> = exp(-i alpha m) d_{m,mp}(beta) exp(-i gamma mp)."""
    dim = spin_matrices(spin_f).dim
    ms = np.array([spin_f - i for i in range(dim)])
    d = wigner_d_matrix(spin_f, beta)
    mat = np.exp(-1j * alpha * ms)[:, None] * d * np.exp(-1j * gamma * ms)[None, :]
    return Unitary(mat)


# ---------------------------------------------------------------------------
# Trace commutator (Wilson-loop difference)


def trace_commutator_analytic(spin_f: float, g: float) -> float:
    """The detuning-free Wilson-loop difference for the great circles p1, p2, p3.

    Equals tr(G3 [G2, G1]) with G_i = exp(-i 2*pi*g F_i), written as the
    manifestly real double sum
        4 * sum_{m>0} sum_{m'} (-1)^(m-m') sin(pi (m'-m)/2) sin(2 pi m g)
              * d_{m,m'}(2 pi g)^2 .
    """
    ops = spin_matrices(spin_f)
    beta = 2.0 * math.pi * g
    ms = [spin_f - i for i in range(ops.dim)]
    total = 0.0
    for m in ms:
        if m <= 0:
            continue
        sin_m = math.sin(2.0 * math.pi * m * g)
        for mp in ms:
            diff = int(round(m - mp))
            total += (
                (-1.0) ** diff
                * math.sin(math.pi * (mp - m) / 2.0)
                * sin_m
                * wigner_d(spin_f, m, mp, beta) ** 2
            )
    return 4.0 * total


@dataclass(frozen=True)
class WilsonReport:
    """Wilson loops of one loop triple composed in two orders.

    ``ordering`` lists the loop indices in application order for the first
    Wilson loop; the second uses the same triple with the first two loops
    swapped.  ``difference`` = w_first - w_second; a nonzero value certifies
    path-dependent (non-commuting) transport.
    """

    labels: tuple[str, str, str]
    ordering: tuple[int, int, int]
    w_first: complex
    w_second: complex
    difference: complex
    delta: tuple[float, float, float]
    spin_f: float


def _composition_trace(gammas, order) -> complex:
    """Trace of the composition applying gammas[order[0]] first."""
    mat = _as_matrix(gammas[order[0]])
    for idx in order[1:]:
        mat = _as_matrix(gammas[idx]) @ mat
    return complex(np.trace(mat))


def trace_commutator_numeric(
    config: DrivingConfig,
    labels: tuple[str, str, str] = ("p1", "p2", "p3"),
    ordering: tuple[int, int, int] = (0, 1, 2),
    tol: float = 1e-10,
) -> WilsonReport:
    """Wilson-loop difference from time-ordered holonomies (detuning included).

    Composes the three loop holonomies in the given application order and in
    the order with the first two swapped, then differences the traces.  With
    zero detuning and epsilon this reproduces trace_commutator_analytic.
    """
    if len(set(labels)) != 3:
        raise ValueError("need three distinct loops")
    i, j, k = ordering
    gammas = [
        holonomy_nonadiabatic(make_loop(lbl, config.loop_rate), config, tol) for lbl in labels
    ]
    w_first = _composition_trace(gammas, (i, j, k))
    w_second = _composition_trace(gammas, (j, i, k))
    return WilsonReport(
        labels=tuple(labels),
        ordering=(i, j, k),
        w_first=w_first,
        w_second=w_second,
        difference=w_first - w_second,
        delta=config.delta,
        spin_f=config.spin_f,
    )


# ---------------------------------------------------------------------------
# Detuning sweeps


def fidelity_vs_detuning(loop: ParameterLoop, spin_f: float, delta_z_grid,
                         config: DrivingConfig, tol: float = 1e-10) -> np.ndarray:
    """Fidelity of the detuned holonomy against the detuning-free target.

    Returns an (n, 2) array of (delta_z in rad/s, fidelity).  The whole grid
    is integrated as one batch.
    """
    grid = np.asarray(delta_z_grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("delta_z_grid must be a non-empty 1-d sequence")
    if config.spin_f != spin_f:
        config = replace(config, spin_f=spin_f)
    target = ideal_holonomy(loop, g_factor(config.omega0, config.omega), spin_f)
    gammas = holonomy_nonadiabatic_delta_sweep(loop, config, grid, tol)
    fids = np.array([fidelity(gm, target) for gm in gammas])
    return np.column_stack([grid, fids])


def revival_detuning(config: DrivingConfig, order: int = 1) -> float:
    """Detuning at which the equatorial loop returns to unit fidelity.

    On the equator the detuning term commutes with the transport generator
    and only winds a relative phase, which closes after
    delta_z = 2*pi*order / ((1-g) T).
    """
    g = g_factor(config.omega0, config.omega)
    return 2.0 * math.pi * order / ((1.0 - g) * config.loop_duration)
