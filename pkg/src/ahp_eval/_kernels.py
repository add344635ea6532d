"""Hot numeric loops, compiled with numba when available.

Set ``AHP_EVAL_DISABLE_NUMBA=1`` before import to force the pure-numpy path
(handy for debugging and for benchmarking the two against each other). Both
paths are always importable as ``*_numpy`` / ``*_numba`` so tests can compare
them directly; the unsuffixed names dispatch to the selected one.
"""

from __future__ import annotations

import os
import warnings

import numpy as np
import numpy.typing as npt

_DISABLED = os.environ.get("AHP_EVAL_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

USING_NUMBA = HAVE_NUMBA and not _DISABLED


# --- numpy reference path ---------------------------------------------------


def power_iteration_numpy(
    matrix: npt.NDArray[np.float64], tol: float, max_iter: int
) -> tuple[npt.NDArray[np.float64], int, float, bool]:
    """Return ``(v, iterations, residual, converged)`` with ``v`` L1-normalised."""
    n = matrix.shape[0]
    v = np.full(n, 1.0 / n)
    residual = np.inf
    for it in range(1, max_iter + 1):
        w = matrix @ v
        w /= w.sum()
        residual = float(np.abs(w - v).sum())
        v = w
        if residual < tol:
            return v, it, residual, True
    return v, max_iter, residual, False


def concordance_counts_numpy(
    f: npt.NDArray[np.float64], g: npt.NDArray[np.float64], gap: float, use_gap: bool
) -> tuple[int, int]:
    dg = g[:, None] - g[None, :]
    qualifying = dg >= gap if use_gap else dg > 0
    concordant = qualifying & (f[:, None] > f[None, :])
    return int(concordant.sum()), int(qualifying.sum())


# --- numba path -------------------------------------------------------------


def _power_iteration_loops(matrix, tol, max_iter):
    n = matrix.shape[0]
    v = np.empty(n)
    for i in range(n):
        v[i] = 1.0 / n
    w = np.empty(n)
    residual = np.inf
    for it in range(1, max_iter + 1):
        total = 0.0
        for i in range(n):
            acc = 0.0
            for j in range(n):
                acc += matrix[i, j] * v[j]
            w[i] = acc
            total += acc
        residual = 0.0
        for i in range(n):
            w[i] /= total
            residual += abs(w[i] - v[i])
            v[i] = w[i]
        if residual < tol:
            return v, it, residual, True
    return v, max_iter, residual, False


def _concordance_loops(f, g, gap, use_gap):
    n = f.shape[0]
    concordant = 0
    total = 0
    for i in range(n):
        for j in range(n):
            dg = g[i] - g[j]
            if use_gap:
                ok = dg >= gap
            else:
                ok = dg > 0.0
            if ok:
                total += 1
                if f[i] > f[j]:
                    concordant += 1
    return concordant, total


if HAVE_NUMBA:
    power_iteration_numba = numba.njit(cache=True, nogil=True)(_power_iteration_loops)
    concordance_counts_numba = numba.njit(cache=True, nogil=True)(_concordance_loops)
else:  # pragma: no cover
    warnings.warn("numba not importable; kernels run on the numpy path", RuntimeWarning)
    power_iteration_numba = power_iteration_numpy
    concordance_counts_numba = concordance_counts_numpy


def power_iteration(
    matrix: npt.NDArray[np.float64], tol: float, max_iter: int
) -> tuple[npt.NDArray[np.float64], int, float, bool]:
    m = np.ascontiguousarray(matrix, dtype=np.float64)
    if USING_NUMBA:
        v, it, res, ok = power_iteration_numba(m, float(tol), int(max_iter))
        return v, int(it), float(res), bool(ok)
    return power_iteration_numpy(m, tol, max_iter)


def concordance_counts(
    f: npt.NDArray[np.float64], g: npt.NDArray[np.float64], gap: float = 0.0, use_gap: bool = False
) -> tuple[int, int]:
    """Count ``(concordant, qualifying)`` ordered pairs.

    A pair ``(i, j)`` qualifies when ``g[i] > g[j]`` (or ``g[i] - g[j] >= gap``
    with ``use_gap``) and is concordant when additionally ``f[i] > f[j]``.
    """
    f = np.ascontiguousarray(f, dtype=np.float64)
    g = np.ascontiguousarray(g, dtype=np.float64)
    if USING_NUMBA:
        c, t = concordance_counts_numba(f, g, float(gap), bool(use_gap))
        return int(c), int(t)
    return concordance_counts_numpy(f, g, gap, use_gap)
