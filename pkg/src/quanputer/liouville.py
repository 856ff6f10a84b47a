"""Classical transport along a flow as unitary evolution.

For a flow ``v`` the generator ``H2 = (p.v + v.p) / 2`` equals
``(i/hbar) sum_k [p_k^2, u_k]`` with ``u_k`` half the antiderivative of
``v_k`` along axis ``k``. One time step of length ``t/N`` is the product of
group commutators

    prod_k  e^{i tau u_k} e^{i tau p_k^2} e^{-i tau u_k} e^{-i tau p_k^2},
    tau = +-(t / (hbar^2 N))**0.5,

read as an operator (the right-most factor acts first). With
``p = -i hbar grad`` the evolution ``exp(-i t H2 / hbar)`` solves
``d psi / dt = -v . grad psi`` for divergence-free ``v``, i.e.
``psi(x, t) = psi0(Phi_{-t}(x))``.
"""
from dataclasses import dataclass, field
import math
import warnings
from typing import Callable, Optional

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.linalg import expm

from . import qreg
from ._validation import check_count
from .errors import GridMismatch, OutsideSafetyBox, TooLarge
from .report import ConvergenceReport

DENSE_CAP = 4096
DIVERGENCE_RTOL = 1e-8


class DimensionWarning(UserWarning):
    pass


class CompressibleFlowWarning(UserWarning):
    pass


@dataclass(frozen=True)
class FlowField:
    """Velocity field ``v(x)``; ``velocity`` maps points ``(..., d)`` to ``(..., d)``."""

    dim: int
    velocity: Callable[[np.ndarray], np.ndarray]
    divergence: Optional[Callable[[np.ndarray], np.ndarray]] = None
    name: str = "flow"

    def __post_init__(self):
        check_count(self.dim, "dim")
        if self.dim < 2:
            warnings.warn(
                "one-dimensional flow: the construction is valid but outside d >= 2",
                DimensionWarning,
                stacklevel=3,
            )

    def __call__(self, points):
        return np.asarray(self.velocity(np.asarray(points, dtype=float)), dtype=float)

    def on_grid(self, grid):
        """Velocity components on the grid, shape ``(d, *grid.shape)``."""
        _check_dim(self, grid)
        pts = np.stack(grid.mesh(), axis=-1)
        return np.moveaxis(np.broadcast_to(self(pts), pts.shape), -1, 0)

    def divergence_at(self, points, h=1e-5):
        points = np.asarray(points, dtype=float)
        if self.divergence is not None:
            return np.broadcast_to(np.asarray(self.divergence(points), float), points.shape[:-1])
        total = np.zeros(points.shape[:-1])
        for k in range(self.dim):
            e = np.zeros(self.dim)
            e[k] = h
            total += (self(points + e)[..., k] - self(points - e)[..., k]) / (2 * h)
        return total

    def divergence_stats(self, grid):
        """``(max |div v|, max |v|)`` over the grid."""
        pts = np.stack(grid.mesh(), axis=-1)
        div = np.max(np.abs(self.divergence_at(pts)))
        vmax = np.max(np.abs(self.on_grid(grid)))
        return float(div), float(vmax)

    def is_divergence_free(self, grid, rtol=DIVERGENCE_RTOL):
        div, vmax = self.divergence_stats(grid)
        return div <= rtol * vmax


def _check_dim(flow, grid):
    if flow.dim != grid.ndim:
        raise GridMismatch(f"{flow.dim}-dimensional flow on a {grid.ndim}-axis grid")


def constant_flow(*c):
    c = np.asarray(c, dtype=float)
    return FlowField(
        c.size,
        lambda x: np.broadcast_to(c, x.shape).copy(),
        lambda x: np.zeros(x.shape[:-1]),
        name="constant",
    )


def rotation_flow():
    """``v = (x2, -x1)``: clockwise rigid rotation with period ``2 pi``."""
    return FlowField(
        2,
        lambda x: np.stack([x[..., 1], -x[..., 0]], axis=-1),
        lambda x: np.zeros(x.shape[:-1]),
        name="rotation",
    )


def expansion_flow():
    """``v = (x1, 0)``; ``div v = 1``."""
    return FlowField(
        2,
        lambda x: np.stack([x[..., 0], np.zeros_like(x[..., 0])], axis=-1),
        lambda x: np.ones(x.shape[:-1]),
        name="expansion",
    )


# -- Hamiltonian flows ---------------------------------------------------------


@dataclass(frozen=True)
class HamiltonianFlowSpec:
    """Phase space ``x = (q_1..q_M, p_1..p_M)`` with Hamiltonian ``H1(x)``."""

    phase_dim: int
    hamiltonian: Callable[[np.ndarray], np.ndarray]
    gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None

    @property
    def symplectic_form(self):
        """``eps = [[0, I], [-I, 0]]`` so that ``{q_i, p_j} = delta_ij``."""
        if self.phase_dim % 2:
            raise ValueError(f"phase_dim must be even, got {self.phase_dim}")
        m = self.phase_dim // 2
        eye, zero = np.eye(m), np.zeros((m, m))
        return np.block([[zero, eye], [-eye, zero]])

    def grad(self, x, h=1e-5):
        x = np.asarray(x, dtype=float)
        if self.gradient is not None:
            return np.asarray(self.gradient(x), dtype=float)
        out = np.empty(x.shape)
        for k in range(self.phase_dim):
            e = np.zeros(self.phase_dim)
            e[k] = h
            out[..., k] = (self.hamiltonian(x + e) - self.hamiltonian(x - e)) / (2 * h)
        return out


def flow_from_hamiltonian(spec, check_points=None):
    """``v_n = eps_nm dH1/dx_m``.

    The result carries a numerically estimated divergence; ``check_points``
    (shape ``(..., phase_dim)``) are used to confirm it vanishes.
    """
    eps = spec.symplectic_form

    def velocity(x):
        return spec.grad(x) @ eps.T

    flow = FlowField(spec.phase_dim, velocity, name="hamiltonian")
    if check_points is not None:
        div = flow.divergence_at(check_points)
        scale = max(1.0, float(np.max(np.abs(flow(check_points)))))
        if np.max(np.abs(div)) > 1e-6 * scale:
            raise ValueError("Hamiltonian flow failed the divergence check")
    return flow


def harmonic_hamiltonian():
    return HamiltonianFlowSpec(
        2, lambda x: 0.5 * (x[..., 0] ** 2 + x[..., 1] ** 2), lambda x: x.copy()
    )


def saddle_hamiltonian():
    return HamiltonianFlowSpec(
        2, lambda x: x[..., 0] * x[..., 1], lambda x: np.stack([x[..., 1], x[..., 0]], -1)
    )


# -- u potential -----------------------------------------------------------------


@dataclass(frozen=True)
class UPotential:
    """``u_k = 1/2 int_{edge}^{x_k} v_k`` on the grid; zero on the left edge."""

    values: tuple
    grid: qreg.GridSpec

    def derivative_error(self, flow):
        """Max over axes of ``|d u_k / d x_k - v_k / 2|`` by central differences (interior)."""
        v = flow.on_grid(self.grid)
        worst = 0.0
        for k, u in enumerate(self.values):
            du = np.gradient(u, self.grid.spacing[k], axis=k)
            sl = [slice(None)] * self.grid.ndim
            sl[k] = slice(1, -1)
            worst = max(worst, float(np.max(np.abs(du - v[k] / 2)[tuple(sl)])))
        return worst


def build_u(flow, grid):
    v = flow.on_grid(grid)
    values = tuple(
        0.5 * cumulative_trapezoid(v[k], dx=grid.spacing[k], axis=k, initial=0.0)
        for k in range(grid.ndim)
    )
    return UPotential(values, grid)


# -- dense operators ---------------------------------------------------------------


def _axis_operator(grid, axis, diag_in_momentum):
    """Dense ``I x .. x F^H diag(f(p)) F x .. x I`` on the flattened grid."""
    n = grid.shape[axis]
    dft = np.fft.fft(np.eye(n), axis=0, norm="ortho")
    op = dft.conj().T @ (diag_in_momentum(grid.momentum_points(axis))[:, None] * dft)
    full = np.ones((1, 1))
    for a in range(grid.ndim):
        full = np.kron(full, op if a == axis else np.eye(grid.shape[a]))
    return full


def momentum_matrix(grid, axis):
    return _axis_operator(grid, axis, lambda p: p)


def momentum_squared_matrix(grid, axis):
    return _axis_operator(grid, axis, lambda p: p**2)


def _dense_guard(grid):
    if grid.size > DENSE_CAP:
        raise TooLarge(f"{grid.size} grid points exceeds dense cap {DENSE_CAP}")


def liouville_generator(flow, grid, symmetrized=False):
    """Dense ``sum_k v_k p_k`` (or its symmetrized form)."""
    _dense_guard(grid)
    v = flow.on_grid(grid).reshape(grid.ndim, -1)
    out = np.zeros((grid.size, grid.size), dtype=complex)
    for k in range(grid.ndim):
        pk = momentum_matrix(grid, k)
        if symmetrized:
            out += 0.5 * pk * (v[k][:, None] + v[k][None, :])
        else:
            out += v[k][:, None] * pk
        del pk
    return out


def commutator_generator(u, hbar=None):
    """Dense ``(i/hbar) sum_k [p_k^2, u_k]``."""
    grid = u.grid
    _dense_guard(grid)
    hbar = grid.hbar if hbar is None else hbar
    out = np.zeros((grid.size, grid.size), dtype=complex)
    for k, uk in enumerate(u.values):
        uk = uk.reshape(-1)
        p2 = momentum_squared_matrix(grid, k)
        out += p2 * (uk[None, :] - uk[:, None])
        del p2
    return (1j / hbar) * out


def smooth_test_states(grid, width_fraction=0.03, spread=0.1, momenta=(0.0, 1.0)):
    """Columns of Gaussian wave packets well inside the box.

    Centers sit on a 3-point lattice per axis within ``spread`` of the box
    width around the middle; the envelope width is ``width_fraction`` of the
    box width. Used to compare operators away from the periodic seam.
    """
    lengths = grid.lengths()
    mids = [o + L / 2 for o, L in zip(grid.origin, lengths)]
    offsets = np.array([-1.0, 0.0, 1.0])
    cols = []
    for centre in np.array(np.meshgrid(*[m + spread * L * offsets for m, L in zip(mids, lengths)],
                                       indexing="ij")).reshape(grid.ndim, -1).T:
        for p0 in momenta:
            sampler = qreg.gaussian_sampler(
                centre, p0, [width_fraction * L for L in lengths], grid.hbar
            )
            cols.append(qreg.init_from_sampler(grid, sampler).flat())
    return np.array(cols).T


@dataclass(frozen=True)
class GeneratorReport:
    hermiticity_defect: float
    relative_hermiticity_defect: float
    self_adjoint: bool
    divergence_free: bool
    max_divergence: float
    commutator_difference: float
    commutator_difference_full: float
    u_derivative_error: float


def liouville_generator_spectrum_check(flow, grid, hermitian_rtol=1e-10):
    """Hermiticity of ``sum_k v_k p_k`` and the commutator identity, densely.

    ``commutator_difference`` is the relative Frobenius mismatch between
    ``(p.v + v.p)/2`` and ``(i/hbar) sum_k [p_k^2, u_k]`` on smooth packets
    supported away from the periodic seam (``u_k`` is not periodic, so the
    identity only holds there); ``commutator_difference_full`` is the same
    figure for the whole matrices.
    """
    _dense_guard(grid)
    _check_dim(flow, grid)
    plain = liouville_generator(flow, grid)
    norm = float(np.linalg.norm(plain))
    defect = float(np.linalg.norm(plain - plain.conj().T))
    del plain
    rel = defect / norm if norm > 0 else 0.0

    u = build_u(flow, grid)
    sym = liouville_generator(flow, grid, symmetrized=True)
    comm = commutator_generator(u)
    q = smooth_test_states(grid)
    lhs, rhs = sym @ q, comm @ q
    scale = np.linalg.norm(lhs)
    comm_diff = float(np.linalg.norm(lhs - rhs) / scale) if scale > 0 else float(np.linalg.norm(rhs))
    sym_norm = np.linalg.norm(sym)
    full_diff = float(np.linalg.norm(sym - comm) / sym_norm) if sym_norm > 0 else float(np.linalg.norm(comm))
    del sym, comm

    max_div, _ = flow.divergence_stats(grid)
    return GeneratorReport(
        hermiticity_defect=defect,
        relative_hermiticity_defect=rel,
        self_adjoint=rel <= hermitian_rtol,
        divergence_free=flow.is_divergence_free(grid),
        max_divergence=max_div,
        commutator_difference=comm_diff,
        commutator_difference_full=full_diff,
        u_derivative_error=u.derivative_error(flow),
    )


# -- group-commutator evolution --------------------------------------------------------


@dataclass(frozen=True)
class CommutatorPlan:
    t_total: float
    steps: int
    sign: int = 1
    hbar: float = 1.0

    def __post_init__(self):
        check_count(self.steps, "steps")
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")
        if self.t_total < 0:
            raise ValueError("t_total must be non-negative")

    @property
    def tau(self):
        return self.sign * math.sqrt(self.t_total / (self.hbar**2 * self.steps))


def _axis_factor(reg, uk, axis, tau):
    """``e^{i tau u} e^{i tau p^2} e^{-i tau u} e^{-i tau p^2}`` on one axis."""
    p2 = reg.grid.momentum_points(axis) ** 2
    shape = [1] * reg.grid.ndim
    shape[axis] = -1
    p2 = p2.reshape(shape)
    amps = reg.amplitudes
    for p_sign, u_sign in ((-1, -1), (1, 1)):
        amps = np.fft.fft(amps, axis=axis, norm="ortho")
        amps = amps * np.exp(1j * p_sign * tau * p2)
        amps = np.fft.ifft(amps, axis=axis, norm="ortho")
        amps = amps * np.exp(1j * u_sign * tau * uk)
    return amps


def commutator_step(reg, u, plan, tau=None):
    """One step of the four-exponential product for every axis.

    The product over axes is taken in ascending ``k`` as an operator, so the
    factor for the last axis acts first.
    """
    qreg._require(reg, qreg.POSITION)
    if u.grid != reg.grid:
        raise GridMismatch("u potential was built on a different grid")
    tau = plan.tau if tau is None else tau
    amps = reg.amplitudes
    for k in reversed(range(reg.grid.ndim)):
        amps = _axis_factor(reg.replace(amplitudes=amps), u.values[k], k, tau)
    return reg.replace(amplitudes=amps)


@dataclass
class ClassicalEvolution:
    register: qreg.QuantumRegister
    divergence_free: bool
    steps: list = field(default_factory=list)
    times: list = field(default_factory=list)
    norms: list = field(default_factory=list)
    warnings: list = field(default_factory=list)


def evolve_classical(reg, flow, plan, record_every=1, callback=None):
    """Transport ``reg`` along ``flow`` for ``plan.t_total`` in ``plan.steps`` steps.

    ``callback(k, register)`` is invoked on recorded steps. Compressible flows
    run (every factor is unitary) but are flagged, since the exact evolution
    is then not unitary.
    """
    u = build_u(flow, reg.grid)
    result = ClassicalEvolution(reg, flow.is_divergence_free(reg.grid))
    if not result.divergence_free:
        msg = f"flow {flow.name!r} is not divergence-free; unitary evolution cannot match it"
        warnings.warn(msg, CompressibleFlowWarning, stacklevel=2)
        result.warnings.append(msg)
    dt = plan.t_total / plan.steps

    def record(k, r):
        result.steps.append(k)
        result.times.append(k * dt)
        result.norms.append(r.norm())
        if callback is not None:
            callback(k, r)

    record(0, reg)
    for k in range(1, plan.steps + 1):
        reg = commutator_step(reg, u, plan)
        if k % record_every == 0 or k == plan.steps:
            record(k, reg)
    result.register = reg
    return result


# -- characteristics oracle --------------------------------------------------------------


def backtrace(flow, points, t, substeps=1024):
    """RK4 integration of ``x' = -v(x)`` for time ``t``; returns end points and path bounds."""
    x = np.array(points, dtype=float)
    lo, hi = x.copy(), x.copy()
    if t == 0:
        return x, lo, hi
    h = -t / substeps
    for _ in range(substeps):
        k1 = flow(x)
        k2 = flow(x + 0.5 * h * k1)
        k3 = flow(x + 0.5 * h * k2)
        k4 = flow(x + h * k3)
        x = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        np.minimum(lo, x, out=lo)
        np.maximum(hi, x, out=hi)
    return x, lo, hi


def characteristics_oracle(flow, sampler, grid, t, substeps=1024, safety_margin=0.1, mass_tol=1e-8):
    """``psi(x, t) = psi0(Phi_{-t}(x))`` sampled on the grid and normalized.

    Raises
    ------
    OutsideSafetyBox
        When characteristics that leave the box shrunk by ``safety_margin`` of
        its width on every side carry more than ``mass_tol`` of the probability.
    """
    _check_dim(flow, grid)
    mesh = grid.mesh()
    pts = np.stack([m.reshape(-1) for m in mesh], axis=-1)
    ends, lo, hi = backtrace(flow, pts, t, substeps)
    values = np.asarray(sampler(*ends.T), dtype=complex)

    box_lo = np.array([o + safety_margin * L for o, L in zip(grid.origin, grid.lengths())])
    box_hi = np.array([o + (1 - safety_margin) * L for o, L in zip(grid.origin, grid.lengths())])
    exited = np.any((lo < box_lo) | (hi > box_hi), axis=-1)
    prob = np.abs(values) ** 2
    total = prob.sum()
    lost = prob[exited].sum() / total if total > 0 else 1.0
    if lost > mass_tol:
        raise OutsideSafetyBox(f"{lost:.2e} of the probability is carried across the safety box")
    return qreg.init_from_sampler(grid, lambda *_: values.reshape(grid.shape))


# -- convergence ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LiouvilleScenario:
    grid: qreg.GridSpec
    flow: FlowField
    sampler: Callable
    t_total: float = 1.0
    sign: int = 1

    def initial(self):
        return qreg.init_from_sampler(self.grid, self.sampler)

    def plan(self, steps):
        return CommutatorPlan(self.t_total, steps, self.sign, self.grid.hbar)


def dense_commutator_propagator(u, tau):
    """``exp(tau^2 sum_k [p_k^2, u_k])`` by Pade scaling-and-squaring."""
    gen = commutator_generator(u, hbar=1.0) / 1j  # sum_k [p_k^2, u_k]
    return expm(tau**2 * gen)


def single_step_errors(scenario, taus):
    """L2 gap between one four-exponential step and the dense exponential, per tau."""
    psi0 = scenario.initial()
    u = build_u(scenario.flow, scenario.grid)
    gen = commutator_generator(u, hbar=1.0) / 1j
    points = []
    for tau in taus:
        exact = expm(tau**2 * gen) @ psi0.flat()
        approx = commutator_step(psi0, u, scenario.plan(1), tau=tau)
        points.append((abs(float(tau)), float(np.linalg.norm(approx.flat() - exact))))
    return points


def global_errors(scenario, step_counts):
    """Terminal L2 error and fidelity against the characteristics oracle, per step count."""
    psi0 = scenario.initial()
    oracle = characteristics_oracle(scenario.flow, scenario.sampler, scenario.grid, scenario.t_total)
    rows = []
    for n in step_counts:
        out = evolve_classical(psi0, scenario.flow, scenario.plan(n), record_every=n).register
        rows.append((n, qreg.l2_distance(out, oracle), qreg.fidelity(out, oracle)))
    return rows


def commutator_convergence(scenario, step_counts=None, taus=None,
                           single_expected=3.0, single_tol=0.3,
                           global_expected=-0.5, global_tol=None):
    """Single-step order in ``tau`` and global order in ``N``.

    Either sweep may be skipped by passing ``None``. Returns
    ``(single_report, global_report)``.
    """
    single = glob = None
    if taus is not None:
        single = ConvergenceReport.from_points(
            "tau", single_step_errors(scenario, taus), single_expected, single_tol
        )
    if step_counts is not None:
        rows = global_errors(scenario, step_counts)
        glob = ConvergenceReport.from_points(
            "steps", [(n, e) for n, e, _ in rows],
            global_expected if global_tol is not None else None, global_tol,
        )
    return single, glob
