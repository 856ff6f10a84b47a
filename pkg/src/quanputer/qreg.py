"""Grid-discretized quantum registers.

Amplitudes live on a periodic grid with ``2**k`` points per axis and are
stored as ``a_n = psi(x_n) * sqrt(prod dx)`` so that the register norm is the
L2 norm of the sampled wavefunction. The momentum transform along an axis is
the unitary DFT with kernel ``exp(-i p x / hbar) / sqrt(N)``; momenta use the
wrapped (signed) frequency ordering.
"""
from dataclasses import dataclass
import csv
import io
import struct
from typing import Callable

import numpy as np

from ._validation import check_count
from .errors import (
    AncillaNotUncomputed,
    ArityMismatch,
    GridMismatch,
    MemoryCapExceeded,
    RepresentationMismatch,
    ZeroState,
)

POSITION = "position"
MOMENTUM = "momentum"

DEFAULT_MEMORY_CAP = 2**26
QREG_MAGIC = b"QREG"
QREG_VERSION = 1


@dataclass(frozen=True)
class GridSpec:
    """Periodic grid: axis ``a`` has ``2**bits_per_axis[a]`` points."""

    bits_per_axis: tuple
    spacing: tuple
    origin: tuple
    hbar: float = 1.0

    def __post_init__(self):
        bits = tuple(check_count(b, "bits_per_axis entry") for b in self.bits_per_axis)
        spacing = tuple(float(d) for d in self.spacing)
        origin = tuple(float(o) for o in self.origin)
        if not (len(bits) == len(spacing) == len(origin)) or not bits:
            raise ValueError("bits_per_axis, spacing and origin must have equal nonzero length")
        if any(d <= 0 for d in spacing):
            raise ValueError("grid spacing must be positive")
        if not self.hbar > 0:
            raise ValueError("hbar must be positive")
        object.__setattr__(self, "bits_per_axis", bits)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "hbar", float(self.hbar))

    @classmethod
    def box(cls, bits, lower, upper, hbar=1.0):
        """Grid covering ``[lower, upper)`` on every axis given in ``bits``."""
        bits = [bits] if np.isscalar(bits) else list(bits)
        lower = [lower] * len(bits) if np.isscalar(lower) else list(lower)
        upper = [upper] * len(bits) if np.isscalar(upper) else list(upper)
        spacing = [(hi - lo) / 2**b for b, lo, hi in zip(bits, lower, upper)]
        return cls(tuple(bits), tuple(spacing), tuple(lower), hbar)

    @property
    def ndim(self):
        return len(self.bits_per_axis)

    @property
    def shape(self):
        return tuple(2**b for b in self.bits_per_axis)

    @property
    def size(self):
        return int(np.prod(self.shape))

    @property
    def cell_volume(self):
        return float(np.prod(self.spacing))

    def lengths(self):
        return tuple(n * d for n, d in zip(self.shape, self.spacing))

    def axis_points(self, axis):
        n = self.shape[axis]
        return self.origin[axis] + self.spacing[axis] * np.arange(n)

    def momentum_step(self, axis):
        return 2.0 * np.pi * self.hbar / (self.shape[axis] * self.spacing[axis])

    def momentum_points(self, axis):
        n = self.shape[axis]
        j = np.fft.fftfreq(n, d=1.0 / n)  # 0, 1, ..., n/2-1, -n/2, ..., -1
        return self.momentum_step(axis) * j

    def mesh(self):
        return np.meshgrid(*(self.axis_points(a) for a in range(self.ndim)), indexing="ij")

    def momentum_mesh(self):
        return np.meshgrid(*(self.momentum_points(a) for a in range(self.ndim)), indexing="ij")

    def flat_index(self):
        return np.arange(self.size).reshape(self.shape)

    def concat(self, other):
        if self.hbar != other.hbar:
            raise GridMismatch("cannot join grids with different hbar")
        return GridSpec(
            self.bits_per_axis + other.bits_per_axis,
            self.spacing + other.spacing,
            self.origin + other.origin,
            self.hbar,
        )


@dataclass(frozen=True)
class QuantumRegister:
    """Normalized amplitudes over a :class:`GridSpec`.

    ``amplitudes`` has shape ``grid.shape``; the flat C-order index is the
    binary-encoded basis state ``|n>``. The array is read-only; every
    operation returns a new register.
    """

    grid: GridSpec
    amplitudes: np.ndarray
    representation: tuple

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex, copy=True).reshape(self.grid.shape)
        amps.flags.writeable = False
        rep = self.representation
        if isinstance(rep, str):
            rep = (rep,) * self.grid.ndim
        rep = tuple(rep)
        if len(rep) != self.grid.ndim or any(r not in (POSITION, MOMENTUM) for r in rep):
            raise ValueError(f"bad representation {self.representation!r}")
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "representation", rep)

    def replace(self, amplitudes=None, representation=None):
        return QuantumRegister(
            self.grid,
            self.amplitudes if amplitudes is None else amplitudes,
            self.representation if representation is None else representation,
        )

    @property
    def in_position(self):
        return all(r == POSITION for r in self.representation)

    @property
    def in_momentum(self):
        return all(r == MOMENTUM for r in self.representation)

    def flat(self):
        return self.amplitudes.reshape(-1)

    def norm(self):
        return float(np.sum(np.abs(self.amplitudes) ** 2))

    def wavefunction(self):
        """Sampled ``psi(x_n)`` (undoes the ``sqrt(dx)`` amplitude scaling)."""
        return self.amplitudes / np.sqrt(self.grid.cell_volume)


@dataclass(frozen=True)
class PhaseFunction:
    """Real phase ``F(n_1, ..., n_arity)`` on flat register indices.

    ``func`` must accept integer numpy arrays (broadcasting) and return real
    phases in radians.
    """

    func: Callable
    arity: int = 1

    def __call__(self, *indices):
        return np.asarray(self.func(*indices), dtype=float)

    @classmethod
    def from_values(cls, values):
        values = np.asarray(values, dtype=float).reshape(-1)
        return cls(lambda n: values[n], 1)


def _require(reg, rep):
    if any(r != rep for r in reg.representation):
        raise RepresentationMismatch(
            f"register is in {reg.representation}, operation needs {rep}"
        )


def init_from_sampler(grid, sampler):
    """Sample ``sampler`` on the grid and normalize.

    ``sampler`` receives one coordinate array per axis (``ij`` meshgrid).
    """
    values = np.asarray(sampler(*grid.mesh()), dtype=complex)
    values = np.broadcast_to(values, grid.shape) * np.sqrt(grid.cell_volume)
    if not np.all(np.isfinite(values)):
        raise ValueError("sampler returned non-finite values")
    total = np.sum(np.abs(values) ** 2)
    if total == 0.0:
        raise ZeroState("sampler vanishes on every grid point")
    return QuantumRegister(grid, values / np.sqrt(total), POSITION)


def basis_state(grid, n):
    amps = np.zeros(grid.size, dtype=complex)
    amps[n] = 1.0
    return QuantumRegister(grid, amps.reshape(grid.shape), POSITION)


def gaussian_sampler(center, momentum=0.0, sigma=1.0, hbar=1.0):
    """``exp(-(x - x0)^2 / (4 sigma^2) + i p0 x / hbar)``, product over axes."""
    center = np.atleast_1d(np.asarray(center, dtype=float))
    momentum = np.broadcast_to(np.atleast_1d(np.asarray(momentum, dtype=float)), center.shape)
    sigma = np.broadcast_to(np.atleast_1d(np.asarray(sigma, dtype=float)), center.shape)

    def sampler(*xs):
        out = 1.0 + 0j
        for x, x0, p0, s in zip(xs, center, momentum, sigma):
            out = out * np.exp(-((x - x0) ** 2) / (4 * s**2) + 1j * p0 * x / hbar)
        return out

    return sampler


def apply_phase_values(reg, phases, representation=POSITION):
    """Multiply by ``exp(i * phases)`` elementwise; ``phases`` has the grid shape."""
    _require(reg, representation)
    phases = np.broadcast_to(np.asarray(phases, dtype=float), reg.grid.shape)
    return reg.replace(amplitudes=reg.amplitudes * np.exp(1j * phases))


def apply_diagonal_phase(reg, F):
    """``|n> -> exp(i F(n)) |n>`` on a position-space register."""
    if F.arity != 1:
        raise ArityMismatch(f"apply_diagonal_phase needs arity 1, got {F.arity}")
    _require(reg, POSITION)
    return apply_phase_values(reg, F(reg.grid.flat_index()))


def _axes(reg, axis):
    if axis is None:
        return tuple(range(reg.grid.ndim))
    axes = (axis,) if np.isscalar(axis) else tuple(axis)
    for a in axes:
        if not 0 <= a < reg.grid.ndim:
            raise IndexError(f"axis {a} out of range for {reg.grid.ndim}-axis grid")
    return axes


def to_momentum(reg, axis=None):
    """Unitary DFT along ``axis`` (all axes when ``None``)."""
    axes = _axes(reg, axis)
    rep = list(reg.representation)
    for a in axes:
        if rep[a] != POSITION:
            raise RepresentationMismatch(f"axis {a} is already in momentum representation")
        rep[a] = MOMENTUM
    amps = np.fft.fftn(reg.amplitudes, axes=axes, norm="ortho")
    return reg.replace(amplitudes=amps, representation=tuple(rep))


def to_position(reg, axis=None):
    axes = _axes(reg, axis)
    rep = list(reg.representation)
    for a in axes:
        if rep[a] != MOMENTUM:
            raise RepresentationMismatch(f"axis {a} is already in position representation")
        rep[a] = POSITION
    amps = np.fft.ifftn(reg.amplitudes, axes=axes, norm="ortho")
    return reg.replace(amplitudes=amps, representation=tuple(rep))


# -- several registers -------------------------------------------------------


@dataclass(frozen=True)
class JointRegister:
    """Dense tensor-product state of several registers.

    ``register`` lives on the concatenated grid; ``partition`` gives how many
    axes belong to each constituent register.
    """

    register: QuantumRegister
    partition: tuple

    @property
    def part_shapes(self):
        shapes, start = [], 0
        for count in self.partition:
            shapes.append(self.register.grid.shape[start:start + count])
            start += count
        return shapes

    def matrix(self, split=1):
        """Amplitudes reshaped to (first ``split`` parts) x (the rest)."""
        shapes = self.part_shapes
        rows = int(np.prod([np.prod(s) for s in shapes[:split]]))
        return self.register.amplitudes.reshape(rows, -1)


def tensor_product(regs, memory_cap=DEFAULT_MEMORY_CAP):
    total = int(np.prod([r.grid.size for r in regs]))
    if total > memory_cap:
        raise MemoryCapExceeded(f"joint state needs {total} amplitudes, cap is {memory_cap}")
    grid, amps, rep = regs[0].grid, regs[0].amplitudes, regs[0].representation
    for r in regs[1:]:
        grid = grid.concat(r.grid)
        amps = np.multiply.outer(amps, r.amplitudes)
        rep = rep + r.representation
    return JointRegister(QuantumRegister(grid, amps, rep), tuple(r.grid.ndim for r in regs))


def apply_coupled_phase(regs, F, memory_cap=DEFAULT_MEMORY_CAP):
    """``|n_1, n_2, ...> -> exp(i F(n_1, n_2, ...)) |n_1, n_2, ...>``.

    ``regs`` is a list of registers (joined by tensor product first) or an
    existing :class:`JointRegister`. ``F`` receives one flat index array per
    constituent register.
    """
    joint = regs if isinstance(regs, JointRegister) else tensor_product(list(regs), memory_cap)
    if F.arity != len(joint.partition):
        raise ArityMismatch(f"phase couples {F.arity} registers, state has {len(joint.partition)}")
    if joint.register.grid.size > memory_cap:
        raise MemoryCapExceeded(f"joint state exceeds cap {memory_cap}")
    _require(joint.register, POSITION)
    sizes = [int(np.prod(s)) for s in joint.part_shapes]
    idx = np.meshgrid(*(np.arange(s) for s in sizes), indexing="ij", sparse=True)
    phases = F(*idx).reshape(joint.register.grid.shape)
    return JointRegister(apply_phase_values(joint.register, phases), joint.partition)


def schmidt_coefficients(joint, split=1):
    """Singular values of the bipartite amplitude matrix."""
    return np.linalg.svd(joint.matrix(split), compute_uv=False)


def schmidt_rank(joint, split=1, tol=1e-10):
    sv = schmidt_coefficients(joint, split)
    return int(np.sum(sv > tol * sv[0]))


# -- five-step ancilla recipe --------------------------------------------------


@dataclass(frozen=True)
class AncillaRun:
    register: QuantumRegister
    residual: float
    encoded: np.ndarray  # fixed-point phase word per basis state


def quantize_phase(phases, frac_bits):
    """Fixed-point word ``m`` with ``exp(i F) ~ exp(2 pi i m / 2**frac_bits)``."""
    scale = 2**frac_bits
    turns = np.mod(np.asarray(phases, dtype=float) / (2 * np.pi), 1.0)
    return np.mod(np.rint(turns * scale).astype(np.int64), scale)


def run_ancilla_succession(reg, F, frac_bits):
    """Emulate ``|n> -> |n,0> -> |n,F> -> e^{iF}|n,F> -> e^{iF}|n,0> -> e^{iF}|n>``.

    The joint state is held sparsely as (system index, ancilla word,
    amplitude) triples. The ancilla is written and erased by XOR with the
    fixed-point phase word, and the phase is kicked back by one phase gate
    per ancilla bit.
    """
    frac_bits = check_count(frac_bits, "frac_bits")
    if frac_bits > 52:
        raise ValueError("frac_bits above 52 exceeds double precision")
    if F.arity != 1:
        raise ArityMismatch(f"ancilla recipe needs arity 1, got {F.arity}")
    _require(reg, POSITION)

    system = reg.grid.flat_index().reshape(-1)
    word = quantize_phase(F(system), frac_bits)
    amps = reg.flat().copy()
    ancilla = np.zeros_like(system)  # |n> -> |n, 0>

    ancilla = ancilla ^ word  # |n, 0> -> |n, F(n)>
    for bit in range(frac_bits):
        set_ = (ancilla >> bit) & 1 == 1
        amps[set_] *= np.exp(2j * np.pi * 2.0 ** (bit - frac_bits))
    ancilla = ancilla ^ word  # uncompute

    dirty = ancilla != 0
    residual = float(np.sqrt(np.sum(np.abs(amps[dirty]) ** 2)))
    out = np.zeros(reg.grid.size, dtype=complex)
    np.add.at(out, system[~dirty], amps[~dirty])
    return AncillaRun(reg.replace(amplitudes=out.reshape(reg.grid.shape)), residual, word)


def phase_via_ancilla(reg, F, frac_bits, tol=1e-12):
    run = run_ancilla_succession(reg, F, frac_bits)
    if run.residual > tol:
        raise AncillaNotUncomputed(f"ancilla residual amplitude {run.residual:.3e}")
    return run.register


# -- observables and export ----------------------------------------------------


@dataclass(frozen=True)
class Observables:
    norm: float
    x_mean: tuple
    p_mean: tuple


def _check_same_grid(a, b):
    if a.grid != b.grid:
        raise GridMismatch("registers live on different grids")


def fidelity(a, b):
    """``|<a|b>|^2``; both registers must share grid and representation."""
    _check_same_grid(a, b)
    if a.representation != b.representation:
        raise RepresentationMismatch("registers in different representations")
    return float(abs(np.vdot(a.amplitudes, b.amplitudes)) ** 2)


def l2_distance(a, b):
    _check_same_grid(a, b)
    return float(np.linalg.norm(a.amplitudes - b.amplitudes))


def _axis_marginal(prob, axis):
    other = tuple(i for i in range(prob.ndim) if i != axis)
    return prob.sum(axis=other)


def position_mean(reg):
    _require(reg, POSITION)
    prob = np.abs(reg.amplitudes) ** 2
    total = prob.sum()
    return tuple(
        float(_axis_marginal(prob, a) @ reg.grid.axis_points(a) / total)
        for a in range(reg.grid.ndim)
    )


def momentum_mean(reg):
    """Momentum expectation per axis from the DFT of a position-space register."""
    _require(reg, POSITION)
    prob = np.abs(np.fft.fftn(reg.amplitudes, norm="ortho")) ** 2
    total = prob.sum()
    return tuple(
        float(_axis_marginal(prob, a) @ reg.grid.momentum_points(a) / total)
        for a in range(reg.grid.ndim)
    )


def position_variance(reg, axis=0):
    _require(reg, POSITION)
    prob = _axis_marginal(np.abs(reg.amplitudes) ** 2, axis)
    prob = prob / prob.sum()
    x = reg.grid.axis_points(axis)
    mean = prob @ x
    return float(prob @ (x - mean) ** 2)


def observables(reg):
    return Observables(reg.norm(), position_mean(reg), momentum_mean(reg))


def to_csv(reg):
    """CSV snapshot: ``n, x, Re(a), Im(a), |a|^2`` (``x_0, x_1, ...`` for several axes)."""
    grid = reg.grid
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    xcols = ["x"] if grid.ndim == 1 else [f"x_{a}" for a in range(grid.ndim)]
    writer.writerow(["n"] + xcols + ["Re(a)", "Im(a)", "|a|^2"])
    coords = [m.reshape(-1) for m in grid.mesh()]
    amps = reg.flat()
    for n in range(grid.size):
        a = amps[n]
        writer.writerow(
            [n]
            + [format(c[n], ".17g") for c in coords]
            + [format(a.real, ".17g"), format(a.imag, ".17g"), format(abs(a) ** 2, ".17g")]
        )
    return buf.getvalue()


def dump_binary(reg):
    """Little-endian dump of a position-space register.

    Header: ``QREG``, version u32, axis count u32, per-axis (k, dx, x0) f64,
    hbar f64. Body: interleaved f64 real/imaginary parts in flat index order.
    """
    _require(reg, POSITION)
    grid = reg.grid
    parts = [QREG_MAGIC, struct.pack("<II", QREG_VERSION, grid.ndim)]
    for k, dx, x0 in zip(grid.bits_per_axis, grid.spacing, grid.origin):
        parts.append(struct.pack("<ddd", float(k), dx, x0))
    parts.append(struct.pack("<d", grid.hbar))
    body = np.empty(2 * grid.size, dtype="<f8")
    body[0::2] = reg.flat().real
    body[1::2] = reg.flat().imag
    parts.append(body.tobytes())
    return b"".join(parts)


def load_binary(data):
    if data[:4] != QREG_MAGIC:
        raise ValueError("not a QREG dump")
    version, naxes = struct.unpack_from("<II", data, 4)
    if version != QREG_VERSION:
        raise ValueError(f"unsupported QREG version {version}")
    offset = 12
    bits, spacing, origin = [], [], []
    for _ in range(naxes):
        k, dx, x0 = struct.unpack_from("<ddd", data, offset)
        offset += 24
        bits.append(int(k))
        spacing.append(dx)
        origin.append(x0)
    (hbar,) = struct.unpack_from("<d", data, offset)
    offset += 8
    grid = GridSpec(tuple(bits), tuple(spacing), tuple(origin), hbar)
    body = np.frombuffer(data, dtype="<f8", offset=offset, count=2 * grid.size)
    amps = body[0::2] + 1j * body[1::2]
    return QuantumRegister(grid, amps.reshape(grid.shape), POSITION)
