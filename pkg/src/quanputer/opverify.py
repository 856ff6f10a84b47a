"""Numerical checks of the group-commutator and resolvent-commutator relations
and of the plane-wave overlap convention."""
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .errors import Singular
from .report import ConvergenceReport, OrderFit, fit_order

__all__ = [
    "MatrixPair",
    "group_commutator_defect",
    "resolvent_commutator_defect",
    "fit_order",
    "OrderFit",
    "momentum_state_overlap",
    "discrete_completeness_defect",
    "default_eps_sweep",
    "commutator_sweep",
]


def _spectral_norm(m):
    return float(np.linalg.norm(m, 2))


@dataclass(frozen=True)
class MatrixPair:
    A: np.ndarray
    B: np.ndarray
    seed: int = None

    def __post_init__(self):
        A = np.asarray(self.A, dtype=complex)
        B = np.asarray(self.B, dtype=complex)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape != B.shape:
            raise ValueError("A and B must be square matrices of equal size")
        if A.shape[0] > 64:
            raise ValueError("matrix size is limited to 64")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
            raise ValueError("matrix entries must be finite")
        if max(_spectral_norm(A), _spectral_norm(B)) > 10.0:
            raise ValueError("spectral norms must not exceed 10")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @classmethod
    def random_hermitian(cls, n=4, seed=0):
        """Seeded Hermitian pair from standard normal entries, scaled to norm 1."""
        rng = np.random.default_rng(seed)

        def draw():
            g = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
            h = (g + g.conj().T) / 2
            return h / _spectral_norm(h)

        return cls(draw(), draw(), seed)

    @classmethod
    def commuting_diagonal(cls, n=4, seed=0):
        rng = np.random.default_rng(seed)
        return cls(np.diag(rng.uniform(-1, 1, n)), np.diag(rng.uniform(-1, 1, n)), seed)

    @property
    def commutator(self):
        return self.A @ self.B - self.B @ self.A


def group_commutator_defect(pair, eps):
    """``|| e^{eA} e^{eB} e^{-eA} e^{-eB} - e^{e^2 [A, B]} ||_2``."""
    A, B = pair.A, pair.B
    lhs = expm(eps * A) @ expm(eps * B) @ expm(-eps * A) @ expm(-eps * B)
    return _spectral_norm(lhs - expm(eps**2 * pair.commutator))


def resolvent_commutator_defect(pair, eps, cond_limit=1e12):
    """``|| (1+eA)(1+eB)(1+eA)^-1 (1+eB)^-1 - (1 + e^2 [A, B]) ||_2``."""
    eye = np.eye(pair.A.shape[0])
    fa, fb = eye + eps * pair.A, eye + eps * pair.B
    for name, f in (("1+eps*A", fa), ("1+eps*B", fb)):
        if np.linalg.cond(f) > cond_limit:
            raise Singular(f"{name} is not invertible at eps={eps}")
    # X (1+eA)^-1 (1+eB)^-1 == X ((1+eB)(1+eA))^-1, done as a right solve
    lhs = np.linalg.solve((fb @ fa).T, (fa @ fb).T).T
    return _spectral_norm(lhs - (eye + eps**2 * pair.commutator))


def default_eps_sweep(points=5, top=0.1):
    return [top * 2.0**-j for j in range(points)]


def commutator_sweep(pair, eps_values, which="group", expected=3.0, tolerance=0.2):
    func = group_commutator_defect if which == "group" else resolvent_commutator_defect
    points = [(e, func(pair, e)) for e in eps_values]
    return ConvergenceReport.from_points("eps", points, expected, tolerance)


def momentum_state_overlap(x, p, hbar=1.0):
    """``<p|x> = exp(-i p x / hbar) / sqrt(2 pi hbar)``."""
    if not hbar > 0:
        raise ValueError("hbar must be positive")
    return np.exp(-1j * np.multiply(p, x) / hbar) / np.sqrt(2 * np.pi * hbar)


def discrete_completeness_defect(grid, axis=0):
    """``max |sum_j <x_n|p_j><p_j|x_m> dp - delta_nm / dx|``.

    Summing the plane-wave overlaps over the wrapped momentum lattice must
    reproduce a Kronecker delta: the discrete form of completeness.
    """
    x = grid.axis_points(axis)
    p = grid.momentum_points(axis)
    dp = grid.momentum_step(axis)
    dx = grid.spacing[axis]
    bra_p_ket_x = momentum_state_overlap(x[None, :], p[:, None], grid.hbar)  # [j, n]
    gram = (bra_p_ket_x.conj().T @ bra_p_ket_x) * dp  # [n, m]
    return float(np.max(np.abs(gram - np.eye(x.size) / dx)))
