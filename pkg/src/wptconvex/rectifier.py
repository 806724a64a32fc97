"""Truncated diode model of a single-diode rectifier.

The output current I solves

    exp(a * I) * (I + I_s) = rho(Q),    a = R_L / (n * v_t)

where rho(Q) = sum_j alpha_j Q^j is a polynomial in the received RF power Q
whose coefficients depend on the diode constants and the waveform factors.
The harvested DC power is P = R_L * I^2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DomainError, ValidationError
from .waveforms import Waveform

# Above this exponent exp() overflows in double precision.
_EXP_LIMIT = 700.0
_TINY = np.finfo(float).tiny


@dataclass(frozen=True)
class RectifierParams:
    """Diode and circuit constants (SI units)."""

    i_s: float = 5e-6
    n_ideality: float = 1.05
    v_t: float = 0.02586
    r_ant: float = 50.0
    r_load: float = 5000.0
    trunc_order: int = 4

    def __post_init__(self):
        for name in ("i_s", "n_ideality", "v_t", "r_ant", "r_load"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                raise ValidationError(f"{name} must be a number, got {value!r}")
            if not math.isfinite(value) or value <= 0:
                raise ValidationError(f"{name} must be finite and > 0, got {value!r}")
        order = self.trunc_order
        if isinstance(order, bool) or not isinstance(order, (int, np.integer)) or order < 2 or order % 2:
            raise ValidationError(f"trunc_order must be an even integer >= 2, got {order!r}")

    @property
    def load_slope(self) -> float:
        """a = R_L / (n v_t), in 1/A."""
        return self.r_load / (self.n_ideality * self.v_t)


def kbar(params: RectifierParams, order: int) -> float:
    """Current-independent characteristic constant I_s / (i! (n v_t)^i)."""
    return params.i_s / (math.factorial(order) * (params.n_ideality * params.v_t) ** order)


@dataclass(frozen=True)
class HarvestModel:
    """Evaluatable harvest map: polynomial coefficients of rho(Q) plus the constants."""

    params: RectifierParams
    alpha: tuple[float, ...]
    half_order: int
    waveform: Waveform | None = None

    def __post_init__(self):
        if len(self.alpha) != self.half_order + 1:
            raise ValidationError("alpha must hold half_order + 1 coefficients")
        if self.alpha[0] != self.params.i_s:
            raise ValidationError("alpha_0 must equal i_s")
        for j, coef in enumerate(self.alpha):
            if not (math.isfinite(coef) and coef > 0):
                raise ValidationError(f"alpha_{j}={coef!r} must be finite and > 0")

    @property
    def load_slope(self) -> float:
        return self.params.load_slope


def build_model(params: RectifierParams, waveform: Waveform) -> HarvestModel:
    """Coefficients alpha_0 = I_s, alpha_j = kbar_{2j} R_ant^j lambda_{2j}."""
    half = params.trunc_order // 2
    alpha = [params.i_s]
    for j in range(1, half + 1):
        coef = kbar(params, 2 * j) * params.r_ant**j * waveform.factor(2 * j)
        if not (math.isfinite(coef) and coef > 0):
            raise ConfigurationError(f"alpha_{j} is not a finite positive number (order {2 * j})")
        alpha.append(coef)
    return HarvestModel(params, tuple(alpha), half, waveform)


def _as_power(q_rf):
    q = np.asarray(q_rf, dtype=float)
    if np.any(~np.isfinite(q)) or np.any(q < 0):
        raise DomainError("received power q_rf must be finite and >= 0")
    return q


def _out(value, like):
    return float(value) if np.ndim(like) == 0 else value


def _horner(coefs, q):
    acc = np.zeros_like(q) + coefs[-1]
    for c in reversed(coefs[:-1]):
        acc = acc * q + c
    return acc


def rho_excess(model: HarvestModel, q_rf):
    """rho(Q) - alpha_0, computed without cancellation."""
    q = _as_power(q_rf)
    return _out(_horner(model.alpha[1:], q) * q, q_rf)


def rho(model: HarvestModel, q_rf):
    """Polynomial sum_j alpha_j Q^j by Horner's scheme."""
    q = _as_power(q_rf)
    return _out(_horner(model.alpha, q), q_rf)


def drho_dq(model: HarvestModel, q_rf):
    q = _as_power(q_rf)
    coefs = [j * c for j, c in enumerate(model.alpha)][1:]
    return _out(_horner(coefs, q), q_rf)


def d2rho_dq2(model: HarvestModel, q_rf):
    q = _as_power(q_rf)
    coefs = [j * (j - 1) * c for j, c in enumerate(model.alpha)][2:]
    if not coefs:
        return _out(np.zeros_like(q), q_rf)
    return _out(_horner(coefs, q), q_rf)


def lambert_w0(z, rel_tol: float = 1e-14, max_iter: int = 50):
    """Principal branch of Lambert W for z >= 0.

    The start value is taken inside the bracket
    ``log1p(z) - log1p(log1p(z)) <= W(z) <= log1p(z)`` and refined with Halley
    steps on ``w - z exp(-w)``, which stays finite for every finite z.
    Works elementwise on arrays.
    """
    if not (0.0 < rel_tol <= 1e-6):
        raise ValueError("rel_tol must lie in (0, 1e-6]")
    zz = np.asarray(z, dtype=float)
    if np.any(~np.isfinite(zz)):
        raise DomainError("lambert_w0 needs finite z")
    if np.any(zz < 0):
        raise DomainError("lambert_w0 is only defined here for z >= 0")

    hi = np.log1p(zz)
    lo = hi - np.log1p(hi)
    w = np.where(zz < math.e, 0.5 * (lo + hi), lo + np.log(np.maximum(hi, 1.0)) / np.maximum(hi, 1.0))
    w = np.clip(w, lo, hi)
    for _ in range(max_iter):
        ze = zz * np.exp(-w)
        f = w - ze
        fp = 1.0 + ze
        fpp = -ze
        step = f / (fp - 0.5 * f * fpp / fp)
        w_new = np.clip(w - step, lo, hi)
        # Halley converges cubically, so a step this small leaves a negligible error
        done = np.abs(w_new - w) <= max(1e-2 * rel_tol, 4 * np.finfo(float).eps) * np.maximum(w_new, _TINY)
        w = w_new
        if np.all(done):
            break
    # a zero-width bracket at z = 0 already pins w = 0
    return _out(w, z)


def _log_ratio(model, excess):
    """log(rho / I_s) from the excess rho - I_s."""
    return np.log1p(excess / model.params.i_s)


def solve_iout(model: HarvestModel, q_rf):
    """Output current I_out >= 0 solving the implicit diode relation.

    With t = a (I + I_s) the relation reads t e^t = a rho e^{a I_s}, so
    t = W0(a rho e^{a I_s}). When that argument overflows the start value comes
    from the log-domain equation t + ln t = ln(a rho) + a I_s instead. Either
    start is polished by Newton on f(I) = a I + log1p(I/I_s) - log(rho/I_s),
    which is concave and increasing, so the iterates approach the root from below.
    """
    q = _as_power(q_rf)
    p = model.params
    a = p.load_slope
    excess = np.asarray(rho_excess(model, q), dtype=float)
    rho_val = p.i_s + excess
    target = _log_ratio(model, excess)

    log_arg = math.log(a) + np.log(rho_val) + a * p.i_s
    safe = log_arg < _EXP_LIMIT
    t = np.empty_like(rho_val)
    if np.any(safe):
        t[safe] = lambert_w0(np.exp(log_arg[safe]), rel_tol=1e-12)
    if np.any(~safe):
        big = log_arg[~safe]
        u = big - np.log(big)
        for _ in range(60):
            u_new = u - (u + np.log(u) - big) / (1.0 + 1.0 / u)
            if np.all(np.abs(u_new - u) <= 1e-15 * u_new):
                u = u_new
                break
            u = u_new
        t[~safe] = u
    current = np.maximum(t / a - p.i_s, 0.0)

    for _ in range(60):
        f = a * current + np.log1p(current / p.i_s) - target
        fp = a + 1.0 / (current + p.i_s)
        nxt = np.maximum(current - f / fp, 0.0)
        if np.all(np.abs(nxt - current) <= 2 * np.finfo(float).eps * nxt):
            current = nxt
            break
        current = nxt
    return _out(current, q_rf)


def p_dc(model: HarvestModel, q_rf):
    """Harvested DC power R_L * I_out^2."""
    current = solve_iout(model, q_rf)
    return model.params.r_load * np.square(current) if np.ndim(current) else model.params.r_load * current**2


def residual(model: HarvestModel, q_rf, current):
    """Relative residual |e^{aI}(I + I_s) - rho| / rho, evaluated in log form."""
    p = model.params
    q = _as_power(q_rf)
    lhs = p.load_slope * np.asarray(current) + np.log1p(np.asarray(current) / p.i_s)
    return _out(np.abs(np.expm1(lhs - _log_ratio(model, np.asarray(rho_excess(model, q))))), q_rf)
