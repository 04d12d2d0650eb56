"""Derivative-free simplex (Nelder-Mead) minimizer.

Deliberately deterministic: the initial simplex is built from fixed per-axis
perturbations of the starting point, so identical inputs always produce the
identical iterate sequence.  Randomized multi-starts belong to the caller,
seeded there.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np


@dataclass(frozen=True)
class SimplexOptions:
    """Coefficients and stopping rules for the simplex search.

    The four move coefficients are the classic reflection / expansion /
    contraction / shrink values.  ``max_evals`` defaults to 200 per dimension
    when left as None.  Convergence requires both the simplex diameter
    (max-norm spread of vertices about the best) below ``x_tol`` and the
    objective spread below ``f_tol``.
    """

    reflection: float = 1.0
    expansion: float = 2.0
    contraction: float = 0.5
    shrink: float = 0.5
    max_evals: int | None = None
    x_tol: float = 1e-8
    f_tol: float = 1e-12

    def __post_init__(self):
        for name in ("reflection", "expansion", "contraction", "shrink"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} coefficient must be positive")
        if not (self.expansion > 1.0 > self.contraction):
            raise ValueError("need expansion > 1 > contraction")


@dataclass
class SimplexResult:
    x: np.ndarray
    fun: float
    evals: int
    iterations: int
    converged: bool


def nelder_mead(
    objective: Callable[[np.ndarray], float],
    x0: Sequence[float],
    options: SimplexOptions | None = None,
) -> SimplexResult:
    """Minimize ``objective`` from ``x0`` with the Nelder-Mead simplex method.

    The initial simplex is x0 plus, per axis i, a perturbation
    0.05 * max(|x0_i|, 1).  Returns the best vertex found; ``converged`` is
    False when the evaluation budget ran out first.
    """
    opts = options or SimplexOptions()
    x0 = np.asarray(x0, dtype=float).ravel()
    n = x0.size
    if n == 0:
        raise ValueError("x0 must have at least one coordinate")
    max_evals = opts.max_evals if opts.max_evals is not None else 200 * n

    evals = 0

    def f(x: np.ndarray) -> float:
        nonlocal evals
        evals += 1
        return float(objective(x))

    f0 = f(x0)
    if not np.isfinite(f0):
        raise ValueError("objective is not finite at x0")

    verts = [x0]
    vals = [f0]
    for i in range(n):
        x = x0.copy()
        x[i] += 0.05 * max(abs(x0[i]), 1.0)
        verts.append(x)
        vals.append(f(x))
    verts = np.array(verts)
    vals = np.array(vals)

    iterations = 0
    while True:
        order = np.argsort(vals, kind="stable")
        verts, vals = verts[order], vals[order]

        diameter = float(np.max(np.abs(verts[1:] - verts[0]))) if n else 0.0
        spread = float(vals[-1] - vals[0])
        if diameter < opts.x_tol and spread < opts.f_tol:
            return SimplexResult(verts[0], vals[0], evals, iterations, True)
        if evals >= max_evals:
            return SimplexResult(verts[0], vals[0], evals, iterations, False)

        iterations += 1
        centroid = verts[:-1].mean(axis=0)
        worst = verts[-1]

        xr = centroid + opts.reflection * (centroid - worst)
        fr = f(xr)
        if fr < vals[0]:
            xe = centroid + opts.expansion * (xr - centroid)
            fe = f(xe)
            if fe < fr:
                verts[-1], vals[-1] = xe, fe
            else:
                verts[-1], vals[-1] = xr, fr
            continue
        if fr < vals[-2]:
            verts[-1], vals[-1] = xr, fr
            continue

        # contraction, outside if the reflected point improved on the worst
        if fr < vals[-1]:
            xc = centroid + opts.contraction * (xr - centroid)
            fc = f(xc)
            if fc <= fr:
                verts[-1], vals[-1] = xc, fc
                continue
        else:
            xc = centroid - opts.contraction * (centroid - worst)
            fc = f(xc)
            if fc < vals[-1]:
                verts[-1], vals[-1] = xc, fc
                continue

        # shrink toward the best vertex
        for i in range(1, n + 1):
            verts[i] = verts[0] + opts.shrink * (verts[i] - verts[0])
            vals[i] = f(verts[i])
