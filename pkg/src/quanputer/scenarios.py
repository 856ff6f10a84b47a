"""Scenario runners behind the command line, plus the built-in registry.

Each runner takes a validated config dict and a seeded generator and returns
a :class:`RunResult` whose outputs are held in memory until the caller writes
them, so a failed run leaves no files behind.
"""
from dataclasses import dataclass, field
import csv
import io
import json
import math

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from . import dynsys, liouville, opverify, qreg
from . import quantum_solver as qs
from .config import render
from .errors import ConfigError
from .report import ConvergenceReport


@dataclass
class RunResult:
    outputs: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)  # (name, passed)

    @property
    def passed(self):
        return all(ok for _, ok in self.checks)


def _fmt(v):
    return format(float(v), ".17g")


def _csv(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _per_axis(values, ndim, name):
    if len(values) == 1:
        return list(values) * ndim
    if len(values) != ndim:
        raise ConfigError(f"{name} needs 1 or {ndim} values, got {len(values)}")
    return list(values)


# -- builders ---------------------------------------------------------------------------


def build_grid(cfg):
    bits = cfg["bits"]
    lower = _per_axis(cfg["lower"], len(bits), "grid.lower")
    upper = _per_axis(cfg["upper"], len(bits), "grid.upper")
    return qreg.GridSpec.box(bits, lower, upper, cfg["hbar"])


def _read_table(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ConfigError(f"empty table {path}")
    body = rows[1:] if not _is_number(rows[0][0]) else rows
    return np.array([[float(v) for v in r] for r in body if r])


def _is_number(text):
    try:
        float(text)
        return True
    except ValueError:
        return False


def build_potential(cfg):
    kind = cfg["kind"]
    if kind == "free":
        return None
    if kind == "harmonic":
        return qs.harmonic_potential(cfg["omega"])
    if kind == "quartic":
        return qs.quartic_potential(cfg["lambda"])
    if kind == "table":
        table = _read_table(cfg["file"])
        xs, vs = table[:, 0], table[:, 1]
        return lambda x: np.interp(x, xs, vs)
    raise ConfigError(f"unknown potential.kind {kind!r}")


def build_sampler(cfg, grid):
    kind = cfg["kind"]
    if kind == "gaussian":
        x0 = _per_axis(cfg["x0"], grid.ndim, "state.x0")
        p0 = _per_axis(cfg["p0"], grid.ndim, "state.p0")
        sigma = _per_axis(cfg["sigma"], grid.ndim, "state.sigma")
        return qreg.gaussian_sampler(x0, p0, sigma, grid.hbar)
    if kind == "basis":
        n = cfg["n"]
        if not 0 <= n < grid.size:
            raise ConfigError(f"state.n={n} outside the grid")
        target = np.zeros(grid.size)
        target[n] = 1.0
        return lambda *xs: target.reshape(grid.shape)
    raise ConfigError(f"unknown state.kind {kind!r}")


def build_flow(cfg, grid):
    kind = cfg["kind"]
    if kind == "constant":
        c = _per_axis(cfg["c"], grid.ndim, "flow.c")
        return liouville.constant_flow(*c)
    if kind == "rotation":
        return liouville.rotation_flow()
    if kind == "expansion":
        return liouville.expansion_flow()
    if kind == "hamiltonian":
        specs = {"harmonic": liouville.harmonic_hamiltonian, "saddle": liouville.saddle_hamiltonian}
        if cfg["hamiltonian"] not in specs:
            raise ConfigError(f"unknown flow.hamiltonian {cfg['hamiltonian']!r}")
        return liouville.flow_from_hamiltonian(specs[cfg["hamiltonian"]]())
    if kind == "table":
        paths = [p.strip() for p in cfg["files"].split(",") if p.strip()]
        if len(paths) != grid.ndim:
            raise ConfigError(f"flow.files needs {grid.ndim} paths")
        axes = [grid.axis_points(a) for a in range(grid.ndim)]
        interps = []
        for path in paths:
            values = _read_table(path)[:, -1]
            if values.size != grid.size:
                raise ConfigError(f"{path}: expected {grid.size} values, got {values.size}")
            interps.append(RegularGridInterpolator(
                axes, values.reshape(grid.shape), bounds_error=False, fill_value=None))
        return liouville.FlowField(
            grid.ndim, lambda x: np.stack([f(x) for f in interps], axis=-1), name="table"
        )
    raise ConfigError(f"unknown flow.kind {kind!r}")


# -- runners -----------------------------------------------------------------------------


def run_dynsys(cfg, rng):
    m, run = cfg["map"], cfg["run"]
    result = RunResult()
    if run["mode"] == "continuum":
        return _run_continuum(cfg["continuum"], result)
    if run["mode"] != "discrete":
        raise ConfigError(f"unknown run.mode {run['mode']!r}")
    try:
        the_map = dynsys.named_map(m["name"], theta=m["theta"], dim=m["dim"])
    except KeyError as err:
        raise ConfigError(str(err)) from err
    dim = the_map.dim

    def vec(key):
        if run["random_initial"]:
            return rng.standard_normal(dim)
        values = run[key]
        return np.array(values, dtype=float) if values else None

    s0 = vec("s0")
    l0 = vec("l0")
    if s0 is None or l0 is None:
        raise ConfigError("run.s0 and run.l0 are required unless run.random_initial is true")
    tangent = vec("tangent0")
    try:
        traj = dynsys.run_extended(the_map, s0, l0, run["steps"], tangent, run["precision"])
    except ValueError as err:
        raise ConfigError(str(err)) from err
    result.outputs["trajectory.csv"] = traj.to_csv()
    summary = {"map": the_map.name, "steps": run["steps"]}
    if traj.pairing_samples:
        c = np.array(traj.pairing_samples)
        summary["pairing_drift"] = float(np.max(np.abs(c - c[0])))
        if run["pairing_tolerance"] is not None:
            result.checks.append(
                ("pairing_constant", summary["pairing_drift"] <= run["pairing_tolerance"])
            )
    result.summary = summary
    return result


def _run_continuum(cfg, result):
    if cfg["flow"] == "harmonic":
        ext = dynsys.harmonic_flow()
    elif cfg["flow"] == "constant":
        ext = dynsys.constant_flow(cfg["c"])
    else:
        raise ConfigError(f"unknown continuum.flow {cfg['flow']!r}")
    points = []
    for dt in cfg["dt_sweep"]:
        traj = dynsys.integrate_continuum(ext, cfg["x0"], cfg["p0"], cfg["t_final"], dt)
        points.append((dt, traj.max_h_drift()))
    result.outputs["h_drift.csv"] = _csv(["dt", "max_h_drift"], [[_fmt(d), _fmt(e)] for d, e in points])
    if len(points) >= 3 and all(e > 0 for _, e in points):
        tol = cfg["tolerance"] if cfg["expected_slope"] is not None else None
        report = ConvergenceReport.from_points("dt", points, cfg["expected_slope"], tol)
        result.outputs["h_drift_convergence.csv"] = report.to_csv()
        result.summary["slope"] = report.slope
        if cfg["expected_slope"] is not None:
            result.checks.append(("h_drift_order", report.passed))
    return result


def _quantum_setup(cfg):
    grid = build_grid(cfg["grid"])
    potential = build_potential(cfg["potential"])
    sampler = build_sampler(cfg["state"], grid)
    return grid, potential, sampler


def run_quantum(cfg, rng):
    grid, potential, sampler = _quantum_setup(cfg)
    ev = cfg["evolution"]
    psi0 = qreg.init_from_sampler(grid, sampler)
    plan = qs.TrotterPlan(ev["t_total"], ev["steps"], potential, ev["mass"])
    record = qs.EvolutionRecord()
    final = qs.evolve(psi0, plan, record, ev["record_every"])
    result = RunResult()
    result.outputs["evolution.csv"] = record.to_csv()
    result.outputs["final.qreg"] = qreg.dump_binary(final)
    result.summary = {"final_norm": final.norm()}
    if cfg["oracle"]["enabled"]:
        H = qs.DenseHamiltonian.build(grid, potential, ev["mass"])
        exact = qs.exact_evolve(psi0, H, ev["t_total"])
        result.summary["fidelity_vs_oracle"] = qreg.fidelity(final, exact)
        result.summary["l2_error_vs_oracle"] = qreg.l2_distance(final, exact)
        result.outputs["oracle.csv"] = _csv(
            ["quantity", "value"],
            [["fidelity", _fmt(result.summary["fidelity_vs_oracle"])],
             ["l2_error", _fmt(result.summary["l2_error_vs_oracle"])]],
        )
    return result


def run_liouville(cfg, rng):
    grid = build_grid(cfg["grid"])
    flow = build_flow(cfg["flow"], grid)
    sampler = build_sampler(cfg["state"], grid)
    ev, oracle_cfg = cfg["evolution"], cfg["oracle"]
    plan = liouville.CommutatorPlan(ev["t_total"], ev["steps"], ev["sign"], grid.hbar)
    psi0 = qreg.init_from_sampler(grid, sampler)
    fidelities = {}

    def check(k, reg):
        if oracle_cfg["enabled"]:
            t = k * plan.t_total / plan.steps
            ref = liouville.characteristics_oracle(flow, sampler, grid, t, oracle_cfg["substeps"])
            fidelities[k] = qreg.fidelity(reg, ref)

    evo = liouville.evolve_classical(psi0, flow, plan, ev["record_every"], callback=check)
    rows = []
    for k, t, n in zip(evo.steps, evo.times, evo.norms):
        rows.append([k, _fmt(t), _fmt(n), _fmt(fidelities[k]) if k in fidelities else ""])
    result = RunResult()
    result.outputs["evolution.csv"] = _csv(["step", "time", "norm", "fidelity_vs_oracle"], rows)
    result.outputs["final.qreg"] = qreg.dump_binary(evo.register)
    result.summary = {
        "divergence_free": evo.divergence_free,
        "warnings": evo.warnings,
        "final_norm": evo.register.norm(),
    }
    if fidelities:
        result.summary["final_fidelity_vs_oracle"] = fidelities[plan.steps]
    return result


def run_verify_bch(cfg, rng):
    size, pairs = cfg["matrices"]["size"], cfg["matrices"]["pairs"]
    sw = cfg["sweep"]
    eps = opverify.default_eps_sweep(sw["eps_points"], sw["eps_top"])
    result = RunResult()
    seeds = rng.integers(0, 2**31 - 1, size=pairs)
    for i, seed in enumerate(seeds):
        pair = opverify.MatrixPair.random_hermitian(size, int(seed))
        for which in ("group", "resolvent"):
            report = opverify.commutator_sweep(pair, eps, which, sw["expected"], sw["tolerance"])
            result.outputs[f"{which}_{i}.csv"] = report.to_csv()
            result.summary[f"{which}_{i}_slope"] = report.slope
            result.checks.append((f"{which}_{i}", report.passed))
    commuting = opverify.MatrixPair.commuting_diagonal(size, int(seeds[0]))
    worst = max(
        max(opverify.group_commutator_defect(commuting, e),
            opverify.resolvent_commutator_defect(commuting, e))
        for e in eps
    )
    result.summary["commuting_defect"] = worst
    result.checks.append(("commuting", worst <= 1e-12))
    return result


def kernel_cases(cfg):
    """``(label, a, damping)`` triples: real ``a`` values and both imaginary cases."""
    hbar, t, mass, n = cfg["hbar"], cfg["t"], cfg["mass"], cfg["steps"]
    cases = [(f"real_{a:g}", complex(a), 0.0) for a in cfg["real_a"]]
    cases.append(("quantum", 1j * t / (2 * mass * hbar * n), cfg["damping"]))
    cases.append(("classical", 1j * math.sqrt(t / (hbar**2 * n)), cfg["damping"]))
    return cases


def run_verify_kernel(cfg, rng):
    k = cfg["kernel"]
    rows, worst = [], 0.0
    for label, a, damping in kernel_cases(k):
        a_eff = a + damping
        width = 2 * k["hbar"] * math.sqrt(abs(a_eff))
        deltas = np.array([0.0, 0.5, 1.0, 2.0]) * width
        analytic = qs.kinetic_kernel(deltas, 0.0, a_eff, 1, k["hbar"])
        quad = qs.kernel_quadrature(deltas, a_eff, k["hbar"])
        rel = np.abs(analytic - quad) / np.abs(analytic)
        worst = max(worst, float(np.max(rel)))
        for d, an, q, r in zip(deltas, analytic, quad, rel):
            rows.append([label, _fmt(a.real), _fmt(a.imag), _fmt(damping), _fmt(d),
                         _fmt(an.real), _fmt(an.imag), _fmt(q.real), _fmt(q.imag), _fmt(r)])
    result = RunResult()
    result.outputs["kernel.csv"] = _csv(
        ["case", "a_re", "a_im", "damping", "delta", "analytic_re", "analytic_im",
         "quadrature_re", "quadrature_im", "rel_error"], rows)
    result.summary = {"max_rel_error": worst}
    result.checks.append(("kernel", worst <= k["tolerance"]))
    return result


def run_convergence_trotter(cfg, rng):
    grid, potential, sampler = _quantum_setup(cfg)
    ev, sw = cfg["evolution"], cfg["sweep"]
    scenario = qs.QuantumScenario(grid, sampler, potential, ev["t_total"], ev["mass"])
    result = RunResult()
    report = qs.trotter_convergence(scenario, sw["steps"], sw["expected"], sw["tolerance"])
    result.outputs["global.csv"] = report.to_csv()
    result.summary["global_slope"] = report.slope
    if sw["expected"] is not None:
        result.checks.append(("global_order", report.passed))
    if sw["taus"]:
        single = qs.single_step_convergence(scenario, sw["taus"], sw["single_expected"],
                                            sw["single_tolerance"])
        result.outputs["single_step.csv"] = single.to_csv()
        result.summary["single_step_slope"] = single.slope
        if sw["single_expected"] is not None:
            result.checks.append(("single_step_order", single.passed))
    return result


def run_convergence_commutator(cfg, rng):
    grid = build_grid(cfg["grid"])
    flow = build_flow(cfg["flow"], grid)
    sampler = build_sampler(cfg["state"], grid)
    ev, sw = cfg["evolution"], cfg["sweep"]
    scenario = liouville.LiouvilleScenario(grid, flow, sampler, ev["t_total"], ev["sign"])
    single, glob = liouville.commutator_convergence(
        scenario, sw["steps"], sw["taus"], sw["single_expected"], sw["single_tolerance"],
        sw["global_expected"], sw["global_tolerance"] if sw["global_expected"] is not None else None,
    )
    result = RunResult()
    if single is not None:
        result.outputs["single_step.csv"] = single.to_csv()
        result.summary["single_step_slope"] = single.slope
        if sw["single_expected"] is not None:
            result.checks.append(("single_step_order", single.passed))
    if glob is not None:
        result.outputs["global.csv"] = glob.to_csv()
        result.summary["global_slope"] = glob.slope
        if sw["global_expected"] is not None:
            result.checks.append(("global_order", glob.passed))
    return result


RUNNERS = {
    "dynsys": run_dynsys,
    "quantum": run_quantum,
    "liouville": run_liouville,
    "verify-bch": run_verify_bch,
    "verify-kernel": run_verify_kernel,
    "convergence-trotter": run_convergence_trotter,
    "convergence-commutator": run_convergence_commutator,
}


# -- registry ------------------------------------------------------------------------------


@dataclass(frozen=True)
class Scenario:
    name: str
    kind: str
    description: str
    raw: dict

    def config_text(self):
        return render(self.raw)


_BOX = {"lower": "-10", "upper": "10", "hbar": "1"}

REGISTRY = {
    s.name: s
    for s in [
        Scenario("catmap-costate", "dynsys",
                 "cat map state/costate run at 60 digits; pairing l(k).ds(k+1) stays constant",
                 {"map": {"name": "catmap"},
                  "run": {"steps": "50", "s0": "0.1, 0.2", "l0": "1, 0", "tangent0": "0.3, -0.7",
                          "precision": "60", "pairing_tolerance": "1e-10"}}),
        Scenario("rotation-costate", "dynsys",
                 "rotation map with random initial data; costate norm is conserved",
                 {"map": {"name": "rotation", "theta": "0.7"},
                  "run": {"steps": "50", "random_initial": "true", "pairing_tolerance": "1e-10"}}),
        Scenario("harmonic-continuum", "dynsys",
                 "RK4 on the continuum extension of the harmonic flow; H drift vs dt",
                 {"run": {"mode": "continuum", "steps": "1"},
                  "continuum": {"flow": "harmonic", "x0": "1, 0.3", "p0": "0.5, -0.2",
                                "t_final": "10"}}),
        Scenario("free-particle", "quantum",
                 "free Gaussian packet; split step is exact, norm stays 1",
                 {"grid": {"bits": "8", **_BOX}, "potential": {"kind": "free"},
                  "state": {"kind": "gaussian", "x0": "-2", "p0": "1", "sigma": "1"},
                  "evolution": {"t_total": "2", "steps": "40"}}),
        Scenario("harmonic-coherent", "quantum",
                 "coherent state in a harmonic well, split-operator vs dense oracle",
                 {"grid": {"bits": "8", **_BOX}, "potential": {"kind": "harmonic", "omega": "1"},
                  "state": {"kind": "gaussian", "x0": "2", "p0": "0", "sigma": "0.7071067811865476"},
                  "evolution": {"t_total": "3.141592653589793", "steps": "256", "record_every": "8"}}),
        Scenario("harmonic-trotter-convergence", "convergence-trotter",
                 "first-order global and second-order local Trotter error, harmonic well",
                 {"grid": {"bits": "8", **_BOX}, "potential": {"kind": "harmonic"},
                  "state": {"kind": "gaussian", "x0": "2", "sigma": "0.7071067811865476"},
                  "evolution": {"t_total": "1"},
                  "sweep": {"steps": "16, 32, 64, 128, 256", "taus": "0.1, 0.05, 0.025, 0.0125"}}),
        Scenario("quartic-trotter-convergence", "convergence-trotter",
                 "first-order global Trotter error in a quartic well",
                 {"grid": {"bits": "8", **_BOX}, "potential": {"kind": "quartic", "lambda": "1"},
                  "state": {"kind": "gaussian", "x0": "1", "sigma": "0.7071067811865476"},
                  "evolution": {"t_total": "1"},
                  "sweep": {"steps": "16, 32, 64, 128, 256"}}),
        Scenario("constant-transport", "liouville",
                 "Gaussian carried by a constant flow via group-commutator steps",
                 {"grid": {"bits": "6, 6", **_BOX}, "flow": {"kind": "constant", "c": "1, 0"},
                  "state": {"kind": "gaussian", "x0": "-0.5, 0", "sigma": "1"},
                  "evolution": {"t_total": "1", "steps": "256", "record_every": "64"}}),
        Scenario("rotation-transport", "liouville",
                 "Gaussian carried once around by the rotation flow",
                 {"grid": {"bits": "6, 6", **_BOX}, "flow": {"kind": "rotation"},
                  "state": {"kind": "gaussian", "x0": "1, 0", "sigma": "0.5"},
                  "evolution": {"t_total": "6.283185307179586", "steps": "2048",
                                "record_every": "512"}}),
        Scenario("commutator-order", "convergence-commutator",
                 "single-step O(tau^3) defect of the four-exponential product",
                 {"grid": {"bits": "6", **_BOX}, "flow": {"kind": "constant", "c": "1"},
                  "state": {"kind": "gaussian", "x0": "0", "sigma": "1"},
                  "evolution": {"t_total": "1"},
                  "sweep": {"taus": "0.02, 0.01, 0.005, 0.0025"}}),
        Scenario("bch-random", "verify-bch",
                 "group and resolvent commutator relations on random Hermitian pairs",
                 {"matrices": {"size": "4", "pairs": "3"}}),
        Scenario("gaussian-kernel", "verify-kernel",
                 "closed-form kinetic kernel vs momentum quadrature, real and imaginary a",
                 {"kernel": {}}),
    ]
}

DEFAULT_FOR_KIND = {
    "dynsys": "catmap-costate",
    "quantum": "harmonic-coherent",
    "liouville": "rotation-transport",
    "verify-bch": "bch-random",
    "verify-kernel": "gaussian-kernel",
    "convergence-trotter": "harmonic-trotter-convergence",
    "convergence-commutator": "commutator-order",
}


def list_scenarios():
    """Alphabetized ``name (kind): description`` lines."""
    return "\n".join(
        f"{name} ({REGISTRY[name].kind}): {REGISTRY[name].description}"
        for name in sorted(REGISTRY)
    )


def summary_json(summary):
    return json.dumps(summary, indent=2, sort_keys=True, default=float)
