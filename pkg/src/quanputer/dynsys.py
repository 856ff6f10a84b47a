"""Reversible discrete dynamical systems and their linear costate extension.

A map ``s(k+1) = phi(s(k))`` is extended by a costate ``l`` that evolves as

    l_n(k+1) = l_m(k) Minv_mn(s(k+1)),    M_nm = d phi_n / d s_m,

so the costate flow is linear and slaved to the state trajectory. In the
continuum limit the pair becomes ``x' = v(x)``, ``p' = -(dv/dx)^T p`` with
Hamiltonian ``H = v(x) . p``.
"""
from dataclasses import dataclass, field
import csv
import io
import math
from typing import Callable, Optional

import mpmath
import numpy as np

from ._validation import check_count, check_positive, check_vector
from .errors import DimensionMismatch, InconsistentJacobian, Irregular, NoConvergence

__all__ = [
    "DiscreteMap",
    "JacobianMatrix",
    "ExtendedTrajectory",
    "ContinuumExtension",
    "ContinuumTrajectory",
    "SolverOptions",
    "step_forward",
    "step_backward",
    "jacobian_at",
    "costate_step",
    "discrete_hamiltonian",
    "run_extended",
    "integrate_continuum",
    "identity_map",
    "rotation_map",
    "cat_map",
    "quadratic1d_map",
    "cubic1d_map",
    "named_map",
    "harmonic_flow",
    "constant_flow",
]

REGULARITY_RTOL = 1e-12


@dataclass(frozen=True)
class DiscreteMap:
    """A state map ``phi`` with optional analytic inverse and Jacobian.

    ``out_dim`` differs from ``dim`` only for dimension-changing maps, which
    are representable but never regular.
    """

    dim: int
    forward: Callable[[np.ndarray], np.ndarray]
    inverse: Optional[Callable[[np.ndarray], np.ndarray]] = None
    jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    name: str = "map"
    out_dim: Optional[int] = None

    def __post_init__(self):
        check_count(self.dim, "dim")
        if self.out_dim is None:
            object.__setattr__(self, "out_dim", self.dim)

    @property
    def square(self):
        return self.out_dim == self.dim


@dataclass(frozen=True)
class JacobianMatrix:
    entries: np.ndarray
    eval_point: np.ndarray
    det: float
    condition_estimate: float
    regular: bool


@dataclass(frozen=True)
class SolverOptions:
    """Controls for :func:`step_backward` when no analytic inverse exists."""

    allow_newton: bool = True
    max_iter: int = 50
    rtol: float = 1e-12
    fd_step: float = 1e-6


@dataclass
class ExtendedTrajectory:
    """State/costate histories of one extended run.

    ``pairing_samples[k] = l(k) . ds(k+1)`` where ``ds`` is the tangent
    perturbation pushed forward by ``M(s(k))``.
    """

    states: list = field(default_factory=list)
    costates: list = field(default_factory=list)
    hamiltonian_samples: list = field(default_factory=list)
    pairing_samples: list = field(default_factory=list)
    tangents: list = field(default_factory=list)

    @property
    def n_steps(self):
        return len(self.states) - 1

    def to_csv(self):
        """CSV text with columns ``k, s_*, l_*, H, pairing``."""
        dim = len(self.states[0])
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(
            ["k"]
            + [f"s_{i}" for i in range(dim)]
            + [f"l_{i}" for i in range(dim)]
            + ["H", "pairing"]
        )
        for k, (s, l) in enumerate(zip(self.states, self.costates)):
            h = self.hamiltonian_samples[k] if k < len(self.hamiltonian_samples) else ""
            c = self.pairing_samples[k] if k < len(self.pairing_samples) else ""
            writer.writerow(
                [k]
                + [_fmt(v) for v in s]
                + [_fmt(v) for v in l]
                + [_fmt(h) if h != "" else "", _fmt(c) if c != "" else ""]
            )
        return buf.getvalue()


def _fmt(value):
    return format(float(value), ".17g")


def _forward_raw(map, s):
    out = np.asarray(map.forward(s)).reshape(-1)
    if out.dtype != object:
        out = out.astype(float)
    if out.shape[0] != map.out_dim:
        raise DimensionMismatch(
            f"{map.name}: forward returned length {out.shape[0]}, expected {map.out_dim}"
        )
    return out


def step_forward(map, s):
    return _forward_raw(map, check_vector(s, map.dim))


def _fd_jacobian(func, s, h, out_dim):
    jac = np.empty((out_dim, s.shape[0]))
    for m in range(s.shape[0]):
        e = np.zeros_like(s)
        e[m] = h
        jac[:, m] = (np.asarray(func(s + e), float) - np.asarray(func(s - e), float)) / (2 * h)
    return jac


def _is_regular(entries):
    if entries.shape[0] != entries.shape[1]:
        return False, 0.0
    det = float(np.linalg.det(entries))
    scale = np.linalg.norm(entries, ord=np.inf) ** entries.shape[0]
    return abs(det) > REGULARITY_RTOL * scale, det


def jacobian_at(map, s, h=1e-5):
    """Jacobian of ``map`` at ``s``: analytic if provided, else central differences.

    Singular points are reported through ``det``/``regular``; nothing is raised.
    """
    s = check_vector(s, map.dim)
    if map.jacobian is not None:
        entries = np.asarray(map.jacobian(s), dtype=float).reshape(map.out_dim, map.dim)
    else:
        check_positive(h, "h")
        entries = _fd_jacobian(map.forward, s, h, map.out_dim)
    regular, det = _is_regular(entries)
    if entries.shape[0] == entries.shape[1]:
        cond = float(np.linalg.cond(entries)) if regular else math.inf
    else:
        cond = math.inf
    return JacobianMatrix(entries, s.copy(), det, cond, bool(regular))


def _require_regular(jac, where):
    if not jac.regular:
        if jac.entries.shape[0] != jac.entries.shape[1]:
            raise Irregular(f"non-square Jacobian {jac.entries.shape} at {where}")
        raise Irregular(f"singular Jacobian (det={jac.det:.3e}) at {where}")


def step_backward(map, s_next, solver_opts=None):
    """Recover ``s`` with ``phi(s) = s_next``.

    Uses the analytic inverse when the map has one, otherwise Newton's method
    seeded at ``s_next``.
    """
    opts = solver_opts or SolverOptions()
    if not map.square:
        raise Irregular(
            f"{map.name}: dimension changes {map.dim} -> {map.out_dim}; map is irreversible"
        )
    s_next = check_vector(s_next, map.out_dim, "s_next")
    if map.inverse is not None:
        return np.asarray(map.inverse(s_next), dtype=float).reshape(-1)
    if not opts.allow_newton:
        raise Irregular(f"{map.name}: no analytic inverse and Newton fallback disabled")

    tol = opts.rtol * (1.0 + np.linalg.norm(s_next))
    s = s_next.copy()
    for _ in range(opts.max_iter):
        resid = step_forward(map, s) - s_next
        if np.linalg.norm(resid) <= tol:
            # one extra correction sharpens the root well below the residual test
            jac = jacobian_at(map, s, opts.fd_step)
            if jac.regular:
                s = s - np.linalg.solve(jac.entries, resid)
            return s
        jac = jacobian_at(map, s, opts.fd_step)
        _require_regular(jac, f"Newton iterate {s}")
        s = s - np.linalg.solve(jac.entries, resid)
    raise NoConvergence(
        f"{map.name}: Newton did not converge in {opts.max_iter} iterations"
    )


def _solve(entries, rhs):
    if rhs.dtype == object:
        sol = mpmath.lu_solve(mpmath.matrix(entries.tolist()), mpmath.matrix(rhs.tolist()))
        return np.array([sol[i] for i in range(rhs.shape[0])], dtype=object)
    return np.linalg.solve(entries, rhs)


def _jacobian_raw(map, s, where):
    """Regular Jacobian entries at ``s``; keeps extended-precision entries as they are."""
    if s.dtype == object:
        entries = np.asarray(map.jacobian(s)).reshape(map.out_dim, map.dim)
        regular, det = _is_regular(entries.astype(float))
        if not regular:
            _require_regular(JacobianMatrix(entries, s, det, math.inf, False), where)
        return entries
    jac = jacobian_at(map, s)
    _require_regular(jac, where)
    return jac.entries


def _costate_raw(map, s_next, l):
    # row vector times inverse matrix == solve with the transpose
    return _solve(_jacobian_raw(map, s_next, f"s_next={s_next}").T, l)


def costate_step(map, s_next, l):
    """Advance the costate: ``l'_n = l_m Minv_mn`` with ``M`` taken at ``s_next``."""
    if not map.square:
        raise Irregular(f"{map.name}: costate propagation through a dimension change")
    l = check_vector(l, map.dim, "l")
    return _costate_raw(map, check_vector(s_next, map.dim, "s_next"), l)


def discrete_hamiltonian(map, s, l):
    l = check_vector(l, map.out_dim, "l")
    return float(l @ step_forward(map, s))


def _to_mp(v):
    return np.array([mpmath.mpf(float(x)) for x in v], dtype=object)


def _to_float(v):
    return np.array([float(x) for x in v])


def run_extended(map, s0, l0, steps, tangent0=None, precision=None):
    """Integrate state and costate together for ``steps`` steps.

    With ``tangent0`` the tangent ``ds(k+1) = M(s(k)) ds(k)`` is carried along
    and the pairing ``l(k) . ds(k+1)`` is recorded; it stays constant.

    Parameters
    ----------
    precision : int, optional
        Decimal digits for an mpmath run. Stretching maps amplify rounding in
        the pairing by roughly ``lambda**(2k)``, so the cat map loses all
        float64 digits within about 20 steps. Extended precision needs an
        analytic Jacobian and a ``forward`` that works on object arrays
        (every built-in map does). Recorded samples are rounded to float.

    Raises
    ------
    Irregular
        If the Jacobian becomes singular; ``err.partial`` holds the trajectory
        built so far and ``err.step`` the failing step index.
    """
    steps = check_count(steps, "steps", minimum=0)
    s = check_vector(s0, map.dim, "s0")
    l = check_vector(l0, map.dim, "l0")
    ds = None if tangent0 is None else check_vector(tangent0, map.dim, "tangent0")
    if not map.square:
        raise Irregular(f"{map.name}: costate propagation through a dimension change")
    if precision is None:
        return _run(map, s, l, ds, steps)
    check_count(precision, "precision")
    if map.jacobian is None:
        raise ValueError("extended precision needs an analytic Jacobian")
    with mpmath.workdps(precision):
        return _run(map, _to_mp(s), _to_mp(l), None if ds is None else _to_mp(ds), steps)


def _run(map, s, l, ds, steps):
    def ham(s, l):
        return float(l @ _forward_raw(map, s))

    traj = ExtendedTrajectory()
    traj.states.append(_to_float(s))
    traj.costates.append(_to_float(l))
    traj.hamiltonian_samples.append(ham(s, l))
    if ds is not None:
        traj.tangents.append(_to_float(ds))

    for k in range(steps):
        try:
            s_next = _forward_raw(map, s)
            if ds is not None:
                ds = _jacobian_raw(map, s, f"s({k})") @ ds
                traj.tangents.append(_to_float(ds))
                traj.pairing_samples.append(float(l @ ds))
            l = _costate_raw(map, s_next, l)
        except Irregular as err:
            raise Irregular(str(err), step=k, partial=traj) from err
        s = s_next
        traj.states.append(_to_float(s))
        traj.costates.append(_to_float(l))
        traj.hamiltonian_samples.append(ham(s, l))

    if ds is not None:
        # close the last pairing so every recorded k has one
        try:
            traj.pairing_samples.append(float(l @ (_jacobian_raw(map, s, "end") @ ds)))
        except Irregular:
            pass
    return traj


# -- continuum limit ---------------------------------------------------------


@dataclass(frozen=True)
class ContinuumExtension:
    """Flow ``v(x)`` with its Jacobian ``J[m, n] = dv_m/dx_n``."""

    flow: Callable[[np.ndarray], np.ndarray]
    flow_jacobian: Callable[[np.ndarray], np.ndarray]
    dim: int

    def hamiltonian(self, x, p):
        return float(np.dot(self.flow(x), p))

    def rhs(self, y):
        x, p = y[: self.dim], y[self.dim:]
        jac = np.asarray(self.flow_jacobian(x), dtype=float)
        return np.concatenate([np.asarray(self.flow(x), float), -jac.T @ p])


@dataclass
class ContinuumTrajectory:
    times: np.ndarray
    x: np.ndarray
    p: np.ndarray
    hamiltonian: np.ndarray

    def max_h_drift(self):
        return float(np.max(np.abs(self.hamiltonian - self.hamiltonian[0])))


def _check_jacobian_consistency(ext, x0, h=1e-5, rtol=1e-6):
    analytic = np.asarray(ext.flow_jacobian(x0), dtype=float)
    numeric = _fd_jacobian(ext.flow, x0, h, ext.dim)
    scale = 1.0 + np.max(np.abs(analytic))
    err = np.max(np.abs(analytic - numeric))
    if err > rtol * scale:
        raise InconsistentJacobian(
            f"flow_jacobian differs from central differences by {err:.3e} at x0"
        )


def integrate_continuum(ext, x0, p0, t_final, dt):
    """Classical RK4 on ``x' = v(x)``, ``p' = -J(x)^T p``; samples ``H = v . p``.

    ``t_final`` is rounded to a whole number of steps of size ``dt``.
    """
    check_positive(dt, "dt")
    x0 = check_vector(x0, ext.dim, "x0")
    p0 = check_vector(p0, ext.dim, "p0")
    _check_jacobian_consistency(ext, x0)
    n = int(round(t_final / dt))
    y = np.concatenate([x0, p0])
    ys = np.empty((n + 1, y.size))
    ys[0] = y
    for i in range(n):
        k1 = ext.rhs(y)
        k2 = ext.rhs(y + 0.5 * dt * k1)
        k3 = ext.rhs(y + 0.5 * dt * k2)
        k4 = ext.rhs(y + dt * k3)
        y = y + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        ys[i + 1] = y
    x, p = ys[:, : ext.dim], ys[:, ext.dim:]
    ham = np.array([ext.hamiltonian(xi, pi) for xi, pi in zip(x, p)])
    return ContinuumTrajectory(np.arange(n + 1) * dt, x, p, ham)


# -- built-in maps and flows -------------------------------------------------


def identity_map(dim=2):
    eye = np.eye(dim)
    return DiscreteMap(
        dim, lambda s: s.copy(), lambda s: s.copy(), lambda s: eye, name="identity"
    )


def _linear_map(matrix, name):
    matrix = np.asarray(matrix, dtype=float)
    inv = np.linalg.inv(matrix)
    return DiscreteMap(
        matrix.shape[0],
        lambda s: matrix @ s,
        lambda s: inv @ s,
        lambda s: matrix,
        name=name,
    )


def rotation_map(theta):
    c, s = math.cos(theta), math.sin(theta)
    return _linear_map([[c, -s], [s, c]], f"rotation({theta!r})")


def cat_map():
    """Arnold's cat map on the plane, without the mod-1 reduction."""
    return _linear_map([[2.0, 1.0], [1.0, 1.0]], "catmap")


def quadratic1d_map():
    """``s -> s**2``: not injective, singular at the origin."""
    return DiscreteMap(1, lambda s: s**2, None, lambda s: np.array([[2.0 * s[0]]]), "quadratic1d")


def cubic1d_map():
    """``s -> s + s**3``: strictly increasing, inverted by Newton's method."""
    return DiscreteMap(
        1, lambda s: s + s**3, None, lambda s: np.array([[1.0 + 3.0 * s[0] ** 2]]), "cubic1d"
    )


def named_map(label, **params):
    """Look up a built-in map by label (``identity``, ``rotation``, ``catmap``, ...)."""
    if label == "identity":
        return identity_map(int(params.get("dim", 2)))
    if label == "rotation":
        return rotation_map(float(params.get("theta", math.pi / 2)))
    if label == "catmap":
        return cat_map()
    if label == "quadratic1d":
        return quadratic1d_map()
    if label == "cubic1d":
        return cubic1d_map()
    raise KeyError(f"unknown map {label!r}")


def harmonic_flow():
    """``v(x1, x2) = (x2, -x1)``."""
    jac = np.array([[0.0, 1.0], [-1.0, 0.0]])
    return ContinuumExtension(lambda x: np.array([x[1], -x[0]]), lambda x: jac, 2)


def constant_flow(c):
    c = np.asarray(c, dtype=float)
    zero = np.zeros((c.size, c.size))
    return ContinuumExtension(lambda x: c.copy(), lambda x: zero, c.size)
