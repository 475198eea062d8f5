"""Banded finite-difference Jacobians and a damped Newton iteration."""

from __future__ import annotations

import numpy as np
from scipy import linalg

from .errors import ConvergenceError


def banded_jacobian(fun, x: np.ndarray, rel_step: float = 1e-6) -> np.ndarray:
    """Tridiagonal Jacobian of ``fun`` at ``x`` by three-colour central differences.

    Returned in :func:`scipy.linalg.solve_banded` layout ``(3, n)``.
    """
    n = x.size
    ab = np.zeros((3, n))
    step = rel_step * np.maximum(np.abs(x), 1e-3)
    idx = np.arange(n)
    for colour in range(3):
        cols = idx[colour::3]
        e = np.zeros(n)
        e[cols] = step[cols]
        df = (fun(x + e) - fun(x - e)) / 2.0
        for j in cols:
            for row in (j - 1, j, j + 1):
                if 0 <= row < n:
                    ab[1 + row - j, j] = df[row] / step[j]
    return ab


def newton_banded(residual, x0, tol=1e-10, maxiter=50, admissible=None, jacobian=None):
    """Damped Newton for a residual with tridiagonal Jacobian.

    Returns ``(x, residual_sup_norm, iterations)``.  The step is halved until
    the iterate is admissible and the residual norm decreases.
    """
    x = np.array(x0, dtype=float)
    ok = admissible or (lambda z: True)
    jac = jacobian or (lambda z: banded_jacobian(residual, z))
    r = residual(x)
    norm = float(np.max(np.abs(r)))
    for it in range(maxiter):
        if norm <= tol:
            return x, norm, it
        try:
            step = linalg.solve_banded((1, 1), jac(x), -r)
        except (linalg.LinAlgError, ValueError) as exc:
            raise ConvergenceError(f"singular Newton system: {exc}") from exc
        t = 1.0
        while True:
            trial = x + t * step
            if ok(trial):
                with np.errstate(all="ignore"):
                    rt = residual(trial)
                nt = float(np.max(np.abs(rt)))
                if np.isfinite(nt) and (nt < norm or nt <= tol):
                    break
            t *= 0.5
            if t < 1e-8:
                raise ConvergenceError(f"Newton line search stalled at residual {norm:.3e}")
        x, r, norm = trial, rt, nt
    if norm <= tol:
        return x, norm, maxiter
    raise ConvergenceError(f"Newton did not converge in {maxiter} iterations (residual {norm:.3e})")
