"""Derivatives of the harvest map and numerical convexity certificates.

For a received-power law Q(u) the harvested power P(Q(u)) is convex in u
whenever rho'' - rho'^2 / rho >= 0 along u, and that in turn holds whenever
Q'' Q - Q'^2 >= 0. The reciprocal law Q = a/u satisfies the latter, which
makes P convex in the pathloss. :func:`certify_convexity` checks both
conditions on a grid and compares them against measured second differences.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import rectifier
from .errors import DomainError, ValidationError
from .rectifier import HarvestModel

FIRST_STEP = 1e-6
SECOND_STEP = 1e-4


def diout_drho(model: HarvestModel, q_rf):
    """dI_out/drho = 1 / (a rho + e^{a I_out}).

    e^{a I} is taken as rho / (I + I_s), which is the diode relation itself and
    never overflows.
    """
    current = np.asarray(rectifier.solve_iout(model, q_rf))
    rho_val = np.asarray(rectifier.rho(model, q_rf))
    exp_term = rho_val / (current + model.params.i_s)
    out = 1.0 / (model.load_slope * rho_val + exp_term)
    return float(out) if np.ndim(q_rf) == 0 else out


def dpdc_dq(model: HarvestModel, q_rf):
    """dP_dc/dQ_rf = 2 R_L I (dI/drho) rho'(Q)."""
    current = np.asarray(rectifier.solve_iout(model, q_rf))
    out = (
        2.0
        * model.params.r_load
        * current
        * np.asarray(diout_drho(model, q_rf))
        * np.asarray(rectifier.drho_dq(model, q_rf))
    )
    return float(out) if np.ndim(q_rf) == 0 else out


def dpdc_dd(model: HarvestModel, q0: float, d):
    """Derivative of P_dc(q0 / d) with respect to the pathloss d (always < 0)."""
    if not q0 > 0:
        raise DomainError(f"q0 must be > 0, got {q0!r}")
    dd = np.asarray(d, dtype=float)
    if np.any(~np.isfinite(dd)) or np.any(dd <= 0):
        raise DomainError("pathloss d must be finite and > 0")
    q = q0 / dd
    out = np.asarray(dpdc_dq(model, q)) * (-q0 / dd**2)
    return float(out) if np.ndim(d) == 0 else out


class CurveKind(str, enum.Enum):
    RECIPROCAL = "reciprocal"
    CUSTOM = "custom"


@dataclass(frozen=True)
class ParamCurve:
    """Received power as a function of a design variable u > 0."""

    map_kind: CurveKind
    a: float | None = None
    evaluator: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        if self.map_kind is CurveKind.RECIPROCAL:
            if self.a is None or not self.a > 0:
                raise ValidationError("reciprocal curve needs a > 0")
        elif self.evaluator is None:
            raise ValidationError("custom curve needs an evaluator")

    @classmethod
    def reciprocal(cls, a: float = 1.0) -> "ParamCurve":
        return cls(CurveKind.RECIPROCAL, a=float(a))

    @classmethod
    def custom(cls, evaluator) -> "ParamCurve":
        return cls(CurveKind.CUSTOM, evaluator=evaluator)

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        if self.map_kind is CurveKind.RECIPROCAL:
            return self.a / u
        return np.asarray(self.evaluator(u), dtype=float)

    def derivatives(self, u):
        """(Q, dQ/du, d2Q/du2); analytic for the reciprocal law, central differences otherwise."""
        u = np.asarray(u, dtype=float)
        if self.map_kind is CurveKind.RECIPROCAL:
            return self.a / u, -self.a / u**2, 2.0 * self.a / u**3
        q = self(u)
        h1 = u * FIRST_STEP
        h2 = u * SECOND_STEP
        dq = (self(u + h1) - self(u - h1)) / (2.0 * h1)
        d2q = (self(u + h2) - 2.0 * q + self(u - h2)) / h2**2
        return q, dq, d2q


def second_differences(u, values):
    """Undivided second differences on a possibly non-uniform grid.

    Entry i is 2 * (chord value at u_i - values_i) for the chord through the two
    neighbours, so it equals v[i-1] - 2 v[i] + v[i+1] on a uniform grid and is
    >= 0 exactly where the samples are convex. Endpoints are NaN.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(values, dtype=float)
    out = np.full_like(v, np.nan)
    hl = u[1:-1] - u[:-2]
    hr = u[2:] - u[1:-1]
    out[1:-1] = 2.0 * (hr * v[:-2] + hl * v[2:] - (hl + hr) * v[1:-1]) / (hl + hr)
    return out


class Verdict(str, enum.Enum):
    CERTIFIED = "certified convex"
    CONDITION_FAILED = "condition failed"
    SECOND_DIFF_VIOLATION = "second-difference violation"


@dataclass
class ConvexityReport:
    grid: np.ndarray
    q_rf: np.ndarray
    i_out: np.ndarray
    p_dc: np.ndarray
    second_diff: np.ndarray
    i_out_second_diff: np.ndarray
    cond9: np.ndarray
    cond14: np.ndarray
    second_diff_min: float
    condition9_min: float
    condition14_min: float
    tolerance: float
    verdict: dict = field(default_factory=dict)

    @property
    def status(self) -> Verdict:
        if not self.verdict["numerically_convex"]:
            return Verdict.SECOND_DIFF_VIOLATION
        if self.verdict["rho_condition"] or self.verdict["power_condition"]:
            return Verdict.CERTIFIED
        # the conditions are sufficient only; failing them says nothing about nonconvexity
        return Verdict.CONDITION_FAILED

    def rows(self):
        """One record per grid point."""
        for i in range(len(self.grid)):
            yield {
                "u": float(self.grid[i]),
                "q_rf_w": float(self.q_rf[i]),
                "i_out_a": float(self.i_out[i]),
                "p_dc_w": float(self.p_dc[i]),
                "second_diff": float(self.second_diff[i]),
                "cond9": float(self.cond9[i]),
                "cond14": float(self.cond14[i]),
            }

    def summary(self) -> dict:
        return {
            "points": int(len(self.grid)),
            "second_diff_min": self.second_diff_min,
            "condition9_min": self.condition9_min,
            "condition14_min": self.condition14_min,
            "tolerance": self.tolerance,
            "verdict": dict(self.verdict),
            "status": self.status.value,
        }


def certify_convexity(model: HarvestModel, curve: ParamCurve, grid) -> ConvexityReport:
    """Check convexity of I_out and P_dc in u along ``curve`` over ``grid``."""
    u = np.asarray(grid, dtype=float)
    if u.ndim != 1 or u.size < 5:
        raise ValidationError("grid needs at least 5 points")
    if np.any(~np.isfinite(u)) or np.any(u <= 0):
        raise ValidationError("grid points must be finite and > 0")
    if np.any(np.diff(u) <= 0):
        raise ValidationError("grid must be strictly increasing")

    q, dq, d2q = curve.derivatives(u)
    if np.any(q < 0) or np.any(~np.isfinite(q)):
        raise ValidationError("curve produced a negative or non-finite power on the grid")
    current = np.asarray(rectifier.solve_iout(model, q))
    power = model.params.r_load * current**2

    r = np.asarray(rectifier.rho(model, q))
    r1 = np.asarray(rectifier.drho_dq(model, q))
    r2 = np.asarray(rectifier.d2rho_dq2(model, q))
    rho_dot = r1 * dq
    rho_ddot = r2 * dq**2 + r1 * d2q
    cond9 = rho_ddot - rho_dot**2 / r
    cond14 = d2q * q - dq**2

    sd = second_differences(u, power)
    sd_i = second_differences(u, current)
    tol = 1e-12 * float(np.max(np.abs(power)))
    sd_min = float(np.nanmin(sd))
    verdict = {
        "numerically_convex": bool(sd_min >= -tol),
        "i_out_numerically_convex": bool(np.nanmin(sd_i) >= -1e-12 * float(np.max(current))),
        "rho_condition": bool(np.min(cond9) >= 0),
        "power_condition": bool(np.min(cond14) >= 0),
    }
    return ConvexityReport(
        grid=u,
        q_rf=q,
        i_out=current,
        p_dc=power,
        second_diff=sd,
        i_out_second_diff=sd_i,
        cond9=cond9,
        cond14=cond14,
        second_diff_min=sd_min,
        condition9_min=float(np.min(cond9)),
        condition14_min=float(np.min(cond14)),
        tolerance=tol,
        verdict=verdict,
    )
