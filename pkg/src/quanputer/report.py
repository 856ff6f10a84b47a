"""Convergence records: (parameter, error) tables with a fitted log-log slope."""
from dataclasses import dataclass
import csv
import io

import numpy as np


@dataclass(frozen=True)
class OrderFit:
    slope: float
    intercept: float
    residual: float


def fit_order(points):
    """Least-squares line through ``(log param, log error)``.

    Parameters
    ----------
    points : sequence of (param, error)
        At least three points with distinct positive parameters and positive
        errors.

    Returns
    -------
    OrderFit
        ``residual`` is the RMS deviation of ``log error`` from the line.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 3 or pts.shape[1] != 2:
        raise ValueError("fit_order needs at least 3 (param, error) pairs")
    params, errors = pts[:, 0], pts[:, 1]
    if np.any(errors <= 0) or not np.all(np.isfinite(errors)):
        raise ValueError("errors must be positive and finite to fit on a log scale")
    if np.any(params <= 0) or np.unique(params).size != params.size:
        raise ValueError("params must be positive and distinct")
    lx, ly = np.log(params), np.log(errors)
    design = np.vstack([lx, np.ones_like(lx)]).T
    (slope, intercept), *_ = np.linalg.lstsq(design, ly, rcond=None)
    resid = ly - (slope * lx + intercept)
    return OrderFit(float(slope), float(intercept), float(np.sqrt(np.mean(resid**2))))


@dataclass(frozen=True)
class ConvergenceReport:
    parameter: str
    points: tuple
    slope: float
    intercept: float
    residual: float
    expected_slope: float = None
    tolerance: float = None

    @classmethod
    def from_points(cls, parameter, points, expected_slope=None, tolerance=None):
        points = tuple((float(p), float(e)) for p, e in points)
        fit = fit_order(points)
        return cls(parameter, points, fit.slope, fit.intercept, fit.residual,
                   expected_slope, tolerance)

    @property
    def errors(self):
        return np.array([e for _, e in self.points])

    @property
    def passed(self):
        if self.expected_slope is None:
            return True
        return abs(self.slope - self.expected_slope) <= self.tolerance

    def summary(self):
        line = f"{self.parameter}: slope={self.slope:.4f}"
        if self.expected_slope is not None:
            verdict = "PASS" if self.passed else "FAIL"
            line += f" expected={self.expected_slope:g}+/-{self.tolerance:g} {verdict}"
        return line

    def to_csv(self):
        """``param,error`` rows plus ``#`` footer lines with the fit."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["param", "error"])
        for p, e in self.points:
            w.writerow([format(p, ".17g"), format(e, ".17g")])
        buf.write(f"# parameter={self.parameter}\n")
        buf.write(
            f"# slope={self.slope:.17g} intercept={self.intercept:.17g} "
            f"residual={self.residual:.17g}\n"
        )
        if self.expected_slope is not None:
            buf.write(
                f"# expected_slope={self.expected_slope:.17g} tolerance={self.tolerance:.17g} "
                f"pass={str(self.passed).lower()}\n"
            )
        return buf.getvalue()
