"""Split-operator time evolution for ``H = p^2 / 2m + V(x)`` on registers.

One Trotter step applies the potential phase in position space, then the
kinetic phase in momentum space (``U_T U_V``). The dense eigendecomposition
propagator in :func:`exact_evolve` is the reference every splitting result
is checked against.
"""
from dataclasses import dataclass, field
import csv
import io
from typing import Callable

import numpy as np

from . import qreg
from ._validation import check_count, check_positive
from .errors import InvalidA, NotHermitian, TooLarge
from .report import ConvergenceReport

DENSE_CAP = 4096


@dataclass(frozen=True)
class TrotterPlan:
    t_total: float
    steps: int
    potential: Callable = None
    mass: float = 1.0

    def __post_init__(self):
        check_count(self.steps, "steps")
        check_positive(self.mass, "mass")

    @property
    def tau(self):
        return self.t_total / self.steps

    def theta(self, hbar=1.0):
        return 1j * self.tau / hbar


def potential_values(grid, potential):
    if potential is None:
        return np.zeros(grid.shape)
    return np.broadcast_to(np.asarray(potential(*grid.mesh()), dtype=float), grid.shape)


def kinetic_values(grid, mass):
    """``sum_a p_a^2 / 2m`` on the momentum mesh."""
    return sum(p**2 for p in grid.momentum_mesh()) / (2.0 * mass)


def _phases(reg, plan, tau):
    grid = reg.grid
    v_phase = -tau * potential_values(grid, plan.potential) / grid.hbar
    t_phase = -tau * kinetic_values(grid, plan.mass) / grid.hbar
    return v_phase, t_phase


def trotter_step(reg, plan, tau=None):
    """``exp(-i tau T / hbar) exp(-i tau V / hbar)`` applied to a position register."""
    tau = plan.tau if tau is None else tau
    v_phase, t_phase = _phases(reg, plan, tau)
    return _split_step(reg, v_phase, t_phase)


def _split_step(reg, v_phase, t_phase):
    reg = qreg.apply_phase_values(reg, v_phase)
    reg = qreg.to_momentum(reg)
    reg = qreg.apply_phase_values(reg, t_phase, qreg.MOMENTUM)
    return qreg.to_position(reg)


@dataclass
class EvolutionRecord:
    step: list = field(default_factory=list)
    time: list = field(default_factory=list)
    norm: list = field(default_factory=list)
    energy: list = field(default_factory=list)
    x_mean: list = field(default_factory=list)
    p_mean: list = field(default_factory=list)

    def add(self, k, t, reg, energy):
        obs = qreg.observables(reg)
        self.step.append(k)
        self.time.append(t)
        self.norm.append(obs.norm)
        self.energy.append(energy)
        self.x_mean.append(obs.x_mean[0] if len(obs.x_mean) == 1 else obs.x_mean)
        self.p_mean.append(obs.p_mean[0] if len(obs.p_mean) == 1 else obs.p_mean)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step", "time", "norm", "energy", "x_mean", "p_mean"])
        for row in zip(self.step, self.time, self.norm, self.energy, self.x_mean, self.p_mean):
            k, rest = row[0], row[1:]
            w.writerow([k] + [_fmt_scalar(v) for v in rest])
        return buf.getvalue()


def _fmt_scalar(v):
    if isinstance(v, tuple):
        return ";".join(format(float(x), ".17g") for x in v)
    return format(float(v), ".17g")


def energy_expectation(reg, plan):
    """``<psi|T + V|psi>`` with the kinetic part evaluated in momentum space."""
    grid = reg.grid
    prob_x = np.abs(reg.amplitudes) ** 2
    prob_p = np.abs(np.fft.fftn(reg.amplitudes, norm="ortho")) ** 2
    return float(
        np.sum(prob_x * potential_values(grid, plan.potential))
        + np.sum(prob_p * kinetic_values(grid, plan.mass))
    )


def evolve(reg, plan, record=None, record_every=1):
    """Apply ``plan.steps`` Trotter steps. Fills ``record`` when one is passed."""
    v_phase, t_phase = _phases(reg, plan, plan.tau)
    if record is not None:
        record.add(0, 0.0, reg, energy_expectation(reg, plan))
    for k in range(1, plan.steps + 1):
        reg = _split_step(reg, v_phase, t_phase)
        if record is not None and (k % record_every == 0 or k == plan.steps):
            record.add(k, k * plan.tau, reg, energy_expectation(reg, plan))
    return reg


# -- dense oracle --------------------------------------------------------------


@dataclass(frozen=True)
class DenseHamiltonian:
    matrix: np.ndarray
    grid: qreg.GridSpec

    @classmethod
    def build(cls, grid, potential=None, mass=1.0):
        """Dense ``T + V`` in the position basis of a single-axis grid.

        The kinetic block is ``F^H diag(p^2/2m) F`` with ``F`` the same
        unitary DFT the registers use.
        """
        if grid.ndim != 1:
            raise ValueError("dense Hamiltonian supports single-axis grids only")
        n = grid.size
        if n > DENSE_CAP:
            raise TooLarge(f"{n} grid points exceeds dense cap {DENSE_CAP}")
        dft = np.fft.fft(np.eye(n), axis=0, norm="ortho")
        kin = dft.conj().T @ (kinetic_values(grid, mass)[:, None] * dft)
        mat = kin + np.diag(potential_values(grid, potential))
        return cls(mat, grid)

    def hermiticity_defect(self):
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T)))

    def eigh(self):
        return np.linalg.eigh(self.matrix)


def exact_evolve(reg, H, t, hermitian_tol=1e-12):
    """``exp(-i t H / hbar) |psi>`` via Hermitian eigendecomposition."""
    if reg.grid.ndim != 1 or reg.grid != H.grid:
        raise ValueError("exact_evolve needs a single-axis register on the Hamiltonian's grid")
    if reg.grid.size > DENSE_CAP:
        raise TooLarge(f"{reg.grid.size} grid points exceeds dense cap {DENSE_CAP}")
    scale = max(1.0, float(np.max(np.abs(H.matrix))))
    if H.hermiticity_defect() > hermitian_tol * scale:
        raise NotHermitian(f"Hermiticity defect {H.hermiticity_defect():.3e}")
    qreg._require(reg, qreg.POSITION)
    evals, evecs = H.eigh()
    coeff = evecs.conj().T @ reg.flat()
    out = evecs @ (np.exp(-1j * t * evals / reg.grid.hbar) * coeff)
    return reg.replace(amplitudes=out)


def dense_energy(reg, H):
    psi = reg.flat()
    return float(np.real(np.vdot(psi, H.matrix @ psi)))


# -- Gaussian kernel -------------------------------------------------------------


def kinetic_kernel(x_next, x_prev, a, D=1, hbar=1.0):
    """Closed form of ``<x'| exp(-a p^2) |x>`` in ``D`` dimensions.

    ``(sqrt(pi/a) / (2 pi hbar))**D * exp(-|x' - x|^2 / (4 a hbar^2))`` on the
    principal square-root branch. ``x_next`` and ``x_prev`` broadcast; for
    ``D > 1`` their last axis holds the coordinates.
    """
    a = complex(a)
    if a.real < 0:
        raise InvalidA(f"Re(a) must be >= 0, got {a}")
    if a == 0:
        raise InvalidA("a must be nonzero")
    diff = np.asarray(x_next, dtype=float) - np.asarray(x_prev, dtype=float)
    dist2 = diff**2 if D == 1 else np.sum(diff**2, axis=-1)
    amp = (np.sqrt(np.pi / a) / (2 * np.pi * hbar)) ** D
    return amp * np.exp(-dist2 / (4 * a * hbar**2))


def _tail_cutoff(a, rtol):
    """Smallest ``P`` with ``|int_P^inf exp(-a p^2) dp|`` below ``rtol * sqrt(pi/|a|)``."""
    scale = np.sqrt(np.pi / abs(a))

    def tail(P):
        return np.exp(-a.real * P**2) / (2 * abs(a) * P)

    lo, hi = 0.0, 1.0 / np.sqrt(abs(a))
    while tail(hi) > rtol * scale:
        lo, hi = hi, 2 * hi
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if tail(mid) > rtol * scale else (lo, mid)
    return hi


def kernel_quadrature(delta, a, hbar=1.0, rtol=1e-12, p_max=None, n_points=None):
    """``int dp / (2 pi hbar) exp(i p delta / hbar - a p^2)`` as a momentum-lattice sum.

    The lattice sum is the continuum limit of the grid matrix element built
    from DFT momenta. By Poisson summation it equals the exact kernel plus
    images displaced by ``2 pi hbar / dp``, so ``dp`` is chosen to push the
    images beyond the kernel's extent and ``p_max`` to make the truncated
    tail smaller than ``rtol``. Needs ``Re(a) > 0``; imaginary ``a`` must be
    damped first.
    """
    a = complex(a)
    if a.real <= 0:
        raise InvalidA("quadrature needs Re(a) > 0; add damping for imaginary a")
    delta = np.atleast_1d(np.asarray(delta, dtype=float))
    if p_max is None:
        p_max = _tail_cutoff(a, rtol)
    if n_points is None:
        extent = 2 * abs(a.imag) * p_max + np.sqrt(160 * a.real)
        extent = min(extent, np.sqrt(160 * abs(a) ** 2 / a.real))
        span = 2 * np.max(np.abs(delta)) / hbar + extent / hbar + 1.0
        dp = np.pi / span  # half the alias-free spacing
        n_points = int(np.ceil(2 * p_max / dp))
    dp = 2 * p_max / n_points
    out = np.zeros(delta.size, dtype=complex)
    chunk = 2**20
    for start in range(0, n_points, chunk):
        p = -p_max + dp * (np.arange(start, min(start + chunk, n_points)) + 0.5)
        weight = np.exp(-a * p**2) * (dp / (2 * np.pi * hbar))
        out += np.exp(1j * np.outer(delta, p) / hbar) @ weight
    return out


# -- convergence -------------------------------------------------------------------


@dataclass(frozen=True)
class QuantumScenario:
    """A single-axis evolution problem solvable by both paths."""

    grid: qreg.GridSpec
    sampler: Callable
    potential: Callable = None
    t_total: float = 1.0
    mass: float = 1.0

    def initial(self):
        return qreg.init_from_sampler(self.grid, self.sampler)

    def plan(self, steps):
        return TrotterPlan(self.t_total, steps, self.potential, self.mass)

    def hamiltonian(self):
        return DenseHamiltonian.build(self.grid, self.potential, self.mass)


def harmonic_potential(omega=1.0, mass=1.0):
    return lambda x: 0.5 * mass * omega**2 * x**2


def quartic_potential(lam=1.0):
    return lambda x: lam * x**4


def trotter_convergence(scenario, step_counts, expected_slope=None, tolerance=None):
    """Global L2 error of ``evolve`` against ``exact_evolve`` for each step count."""
    psi0 = scenario.initial()
    exact = exact_evolve(psi0, scenario.hamiltonian(), scenario.t_total)
    points = []
    for n in step_counts:
        approx = evolve(psi0, scenario.plan(n))
        points.append((float(n), qreg.l2_distance(approx, exact)))
    return ConvergenceReport.from_points(
        "steps", points, expected_slope=expected_slope, tolerance=tolerance
    )


def single_step_convergence(scenario, taus, expected_slope=None, tolerance=None):
    """One split step of size ``tau`` against the exact propagator for ``tau``."""
    psi0 = scenario.initial()
    H = scenario.hamiltonian()
    plan = scenario.plan(1)
    points = []
    evals, evecs = H.eigh()
    coeff = evecs.conj().T @ psi0.flat()
    for tau in taus:
        approx = trotter_step(psi0, plan, tau=tau)
        exact = evecs @ (np.exp(-1j * tau * evals / psi0.grid.hbar) * coeff)
        points.append((float(tau), float(np.linalg.norm(approx.flat() - exact))))
    return ConvergenceReport.from_points(
        "tau", points, expected_slope=expected_slope, tolerance=tolerance
    )
