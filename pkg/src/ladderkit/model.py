"""Levy processes with phase-type positive jumps.

The process is ``X = X_minus + X_plus`` where ``X_minus`` is a Brownian motion
with drift plus a compound Poisson stream of downward phase-type jumps and
``X_plus`` is an independent compound Poisson process with upward
phase-type jumps.  The Levy exponent ``kappa(s) = log E[exp(s X_1)]`` is then
a rational function of ``s``.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.polynomial import Polynomial
from scipy import optimize

from . import phasetype as pht
from .numerics import bracketed_root, ph_weighted_integral, real_poly_roots
from .phasetype import PhaseType, PoleError

__all__ = [
    "ExcludedModelError",
    "PathCaseError",
    "PathClass",
    "SpectrallyNegativeComponent",
    "PhLevyModel",
    "CLRootReport",
    "LevyMeasureSpec",
    "kappa_minus",
    "kappa_minus_derivative",
    "levy_exponent",
    "levy_exponent_derivative",
    "minus_exponent_matrix",
    "phi_root",
    "cl_roots",
    "cl_polynomial",
    "is_critical",
    "classify_paths",
    "mean_slope",
    "minus_mean_slope",
    "fit_hyperexponential",
    "approximate",
]


class ExcludedModelError(ValueError):
    """The downward part is a pure negative drift, which is excluded."""


class PathCaseError(ValueError):
    """Operation not defined for this path class."""


class PathClass(str, enum.Enum):
    MINUS_IS_SUBORDINATOR = "MinusIsSubordinator"
    GENERAL = "General"


@dataclass(frozen=True, eq=False)
class SpectrallyNegativeComponent:
    """Brownian motion with drift and downward phase-type jumps.

    ``sigma2`` is the squared Gaussian coefficient; ``down_law`` is the law of
    the jump magnitudes.
    """

    drift: float = 0.0
    sigma2: float = 0.0
    down_rate: float = 0.0
    down_law: PhaseType | None = None

    def __post_init__(self):
        if self.sigma2 < 0 or not math.isfinite(self.sigma2):
            raise ValueError("sigma2 must be a finite nonnegative number")
        if self.down_rate < 0 or not math.isfinite(self.down_rate):
            raise ValueError("down_rate must be a finite nonnegative number")
        if self.down_rate > 0:
            if self.down_law is None:
                raise ValueError("down_rate > 0 requires down_law")
            problems = pht.validate(self.down_law)
            if problems:
                raise ValueError(f"invalid down_law: {problems}")

    @property
    def has_jumps(self) -> bool:
        return self.down_rate > 0

    def to_dict(self) -> dict:
        d = {"drift": self.drift, "sigma2": self.sigma2, "downRate": self.down_rate}
        if self.down_law is not None:
            d["downLaw"] = self.down_law.to_dict()
        return d


@dataclass(frozen=True, eq=False)
class PhLevyModel:
    """The full model: ``minus`` plus up-jumps at rate ``up_rate`` with law ``up_law``."""

    minus: SpectrallyNegativeComponent
    up_rate: float = 0.0
    up_law: PhaseType | None = None

    def __post_init__(self):
        if self.up_rate < 0 or not math.isfinite(self.up_rate):
            raise ValueError("up_rate must be a finite nonnegative number")
        if self.up_rate > 0:
            if self.up_law is None:
                raise ValueError("up_rate > 0 requires up_law")
            problems = pht.validate(self.up_law)
            if problems:
                raise ValueError(f"invalid up_law: {problems}")
        classify_paths(self.minus)

    @classmethod
    def build(cls, drift=0.0, sigma2=0.0, down_rate=0.0, down_law=None, up_rate=0.0, up_law=None):
        return cls(SpectrallyNegativeComponent(drift, sigma2, down_rate, down_law), up_rate, up_law)

    @property
    def m_up(self) -> int:
        return self.up_law.m if self.up_rate > 0 else 0

    @property
    def path_class(self) -> PathClass:
        return classify_paths(self.minus)

    def to_dict(self) -> dict:
        d = {"minus": self.minus.to_dict(), "upRate": self.up_rate}
        if self.up_law is not None:
            d["upLaw"] = self.up_law.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PhLevyModel":
        mn = d.get("minus", {})
        down = mn.get("downLaw")
        up = d.get("upLaw")
        snc = SpectrallyNegativeComponent(
            drift=float(mn.get("drift", 0.0)),
            sigma2=float(mn.get("sigma2", 0.0)),
            down_rate=float(mn.get("downRate", 0.0)),
            down_law=PhaseType.from_dict(down) if down else None,
        )
        return cls(snc, float(d.get("upRate", 0.0)), PhaseType.from_dict(up) if up else None)


@dataclass(frozen=True)
class CLRootReport:
    """Roots of ``kappa(rho) = level`` split by the sign of the real part."""

    level: float
    positive_roots: np.ndarray
    other_roots: np.ndarray
    spurious_roots: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=complex))


def classify_paths(snc: SpectrallyNegativeComponent) -> PathClass:
    if snc.sigma2 == 0 and snc.down_rate == 0 and snc.drift < 0:
        raise ExcludedModelError("X_minus is a negative deterministic drift; this case is excluded")
    if snc.sigma2 == 0 and snc.drift <= 0:
        return PathClass.MINUS_IS_SUBORDINATOR
    return PathClass.GENERAL


def kappa_minus(snc: SpectrallyNegativeComponent, s: complex) -> complex:
    """Exponent of the downward part: ``sigma2 s^2/2 + c s + lam_minus (F_hat[s] - 1)``."""
    val = 0.5 * snc.sigma2 * s * s + snc.drift * s
    if snc.down_rate > 0:
        val = val + snc.down_rate * (pht.lst(snc.down_law, s) - snc.down_law.mass)
    return val


def kappa_minus_derivative(snc: SpectrallyNegativeComponent, s: complex) -> complex:
    val = snc.sigma2 * s + snc.drift
    if snc.down_rate > 0:
        val = val + snc.down_rate * pht.lst_derivative(snc.down_law, s)
    return val


def levy_exponent(model: PhLevyModel, s: complex) -> complex:
    """``kappa(s) = kappa_minus(s) + lam_plus (F_hat_plus[-s] - 1)``.

    Raises :class:`PoleError` at an eigenvalue of ``-T_plus`` or ``T_minus``.
    """
    val = kappa_minus(model.minus, s)
    if model.up_rate > 0:
        val = val + model.up_rate * (pht.lst(model.up_law, -s) - model.up_law.mass)
    return val


def levy_exponent_derivative(model: PhLevyModel, s: complex) -> complex:
    val = kappa_minus_derivative(model.minus, s)
    if model.up_rate > 0:
        val = val - model.up_rate * pht.lst_derivative(model.up_law, -s)
    return val


def minus_exponent_matrix(snc: SpectrallyNegativeComponent, G) -> np.ndarray:
    """Matrix exponent ``kappa_minus(-G) = sigma2/2 G^2 - c G + lam (int e^{Gy} f(y) dy - I)``."""
    G = np.atleast_2d(np.asarray(G, dtype=float))
    n = G.shape[0]
    out = 0.5 * snc.sigma2 * (G @ G) - snc.drift * G
    if snc.down_rate > 0:
        out = out + snc.down_rate * (ph_weighted_integral(G, snc.down_law) - snc.down_law.mass * np.eye(n))
    return out


def minus_mean_slope(snc: SpectrallyNegativeComponent) -> float:
    """``kappa_minus'(0+) = E[X_minus(1)]``."""
    out = snc.drift
    if snc.down_rate > 0:
        out -= snc.down_rate * pht.mean(snc.down_law)
    return float(out)


def mean_slope(model: PhLevyModel) -> float:
    """``kappa'(0+) = E[X_1]``."""
    out = minus_mean_slope(model.minus)
    if model.up_rate > 0:
        out += model.up_rate * pht.mean(model.up_law)
    return float(out)


def _slope_scale(model: PhLevyModel) -> float:
    scale = abs(model.minus.drift) + 1.0
    if model.minus.down_rate > 0:
        scale += model.minus.down_rate * pht.mean(model.minus.down_law)
    if model.up_rate > 0:
        scale += model.up_rate * pht.mean(model.up_law)
    return scale


def is_critical(model: PhLevyModel, rtol: float = 1e-12) -> bool:
    """True when ``E[X_1] = 0`` up to rounding."""
    return abs(mean_slope(model)) <= rtol * _slope_scale(model)


def phi_root(snc: SpectrallyNegativeComponent, q: float) -> float:
    """Largest real root ``Phi(q)`` of ``kappa_minus(s) = q``."""
    if q < 0:
        raise ValueError("q must be nonnegative")
    if classify_paths(snc) is PathClass.MINUS_IS_SUBORDINATOR:
        raise PathCaseError("Phi is undefined when -X_minus is a subordinator")

    def f(s):
        return float(np.real(kappa_minus(snc, s))) - q

    if q == 0:
        if minus_mean_slope(snc) >= 0:
            return 0.0
        hi = 1.0
        while f(hi) <= 0:
            hi *= 2.0
        res = optimize.minimize_scalar(f, bounds=(0.0, hi), method="bounded", options={"xatol": 1e-12})
        lo = float(res.x)
        if f(lo) >= 0:
            lo = hi * 1e-8
            while f(lo) >= 0:
                lo *= 0.5
        return bracketed_root(f, lo, hi)
    hi = 1.0
    while f(hi) <= 0:
        hi *= 2.0
    return bracketed_root(f, 0.0, hi)


# --- Cramer-Lundberg roots -------------------------------------------------


def _char_polys(ph: PhaseType) -> tuple[Polynomial, Polynomial]:
    """``p = det(sI - T)`` and ``r`` with ``F_hat[s] - mass = -r(s)/p(s)``.

    By the determinant lemma ``p F_hat = p - det(sI - T - t alpha)``.
    """
    p = Polynomial(np.poly(ph.T)[::-1])
    r = Polynomial(np.poly(ph.T + np.outer(ph.exit, ph.alpha))[::-1])
    return p, r - (1.0 - ph.mass) * p


def _reflect(P: Polynomial) -> Polynomial:
    c = P.coef.copy()
    c[1::2] *= -1
    return Polynomial(c)


def cl_polynomial(model: PhLevyModel, a: float) -> Polynomial:
    """``(kappa(s) - a) det(sI - T_minus) det(-sI - T_plus)`` as a polynomial in ``s``."""
    snc = model.minus
    one = Polynomial([1.0])
    pm, rm, pp, rp = one, 0 * one, one, 0 * one
    if snc.down_rate > 0:
        pm, rm = _char_polys(snc.down_law)
    if model.up_rate > 0:
        pp, rp = map(_reflect, _char_polys(model.up_law))
    base = Polynomial([-a, snc.drift, 0.5 * snc.sigma2])
    return base * pm * pp - snc.down_rate * rm * pp - model.up_rate * rp * pm


def _newton_kappa(model: PhLevyModel, a: float, r: complex, steps: int = 6) -> complex:
    for _ in range(steps):
        try:
            f = levy_exponent(model, r) - a
            d = levy_exponent_derivative(model, r)
        except (PoleError, np.linalg.LinAlgError):
            return r
        if d == 0:
            return r
        nr = r - f / d
        try:
            if abs(levy_exponent(model, nr) - a) >= abs(f):
                return r
        except (PoleError, np.linalg.LinAlgError):
            return r
        r = nr
    return r


def cl_roots(model: PhLevyModel, a: float, tol: float = 1e-8) -> CLRootReport:
    """Solve ``kappa(rho) = a`` by clearing denominators.

    Candidate roots that fail ``|kappa(rho) - a| <= tol`` (common factors with
    the cleared poles) are reported separately as spurious.  At ``a = 0`` the
    exact root(s) at zero are deflated and assigned to the side they approach
    as ``a -> 0+``: one zero root is "positive" when ``E[X_1] > 0``, one of a
    double zero root is when ``E[X_1] = 0``.
    """
    if a < 0:
        raise ValueError("a must be nonnegative")
    P = cl_polynomial(model, a)
    coef = P.coef.copy()
    zeros_pos: list[complex] = []
    zeros_other: list[complex] = []
    if a == 0:
        nz = 2 if is_critical(model) else 1
        coef = coef[nz:]
        ms = mean_slope(model)
        if nz == 2:
            zeros_pos, zeros_other = [0j], [0j]
        elif ms > 0:
            zeros_pos = [0j]
        else:
            zeros_other = [0j]
    coef = np.trim_zeros(coef, "b")
    if coef.size >= 2:
        raw = real_poly_roots(coef[::-1])
    else:
        raw = np.zeros(0, dtype=complex)
    good, bad = [], []
    for r in raw:
        r = _newton_kappa(model, a, complex(r))
        try:
            res = abs(levy_exponent(model, r) - a)
        except (PoleError, np.linalg.LinAlgError):
            res = math.inf
        scale = max(1.0, abs(a))
        (good if res <= tol * scale else bad).append(r)
    good = np.array(good, dtype=complex)
    # re-impose conjugate symmetry after the Newton polish
    good = np.where(np.abs(good.imag) <= 1e-12 * np.maximum(1.0, np.abs(good)), good.real + 0j, good)
    pos = [r for r in good if r.real > 0] + zeros_pos
    oth = [r for r in good if r.real <= 0] + zeros_other
    key = lambda z: (z.real, z.imag)
    return CLRootReport(
        level=float(a),
        positive_roots=np.array(sorted(pos, key=key), dtype=complex),
        other_roots=np.array(sorted(oth, key=key), dtype=complex),
        spurious_roots=np.array(bad, dtype=complex),
    )


# --- approximation of a general Levy measure ----------------------------------


@dataclass(frozen=True)
class LevyMeasureSpec:
    """A Levy measure given through its two tail functions.

    ``up_tail(x) = nu((x, inf))`` and ``down_tail(x) = nu((-inf, -x))`` for
    ``x > 0``; either may be ``None`` for a one-sided measure.
    """

    up_tail: Callable[[float], float] | None = None
    down_tail: Callable[[float], float] | None = None

    @classmethod
    def double_exponential(cls, rate: float, p_up: float, eta_up: float, eta_down: float) -> "LevyMeasureSpec":
        """Finite measure ``rate * (p eta_u e^{-eta_u x} 1{x>0} + (1-p) eta_d e^{eta_d x} 1{x<0})``."""
        return cls(
            up_tail=lambda x: rate * p_up * math.exp(-eta_up * x),
            down_tail=lambda x: rate * (1.0 - p_up) * math.exp(-eta_down * x),
        )


def _quantile_grid(S: Callable[[float], float], n: int = 48, p_min: float = 1e-5) -> np.ndarray:
    probs = np.logspace(math.log10(0.995), math.log10(p_min), n)
    out = []
    hi = 1.0
    for p in probs:
        while S(hi) > p:
            hi *= 2.0
            if hi > 1e12:
                break
        out.append(optimize.brentq(lambda y: S(y) - p, 0.0, hi, xtol=1e-14))
    return np.array(out)


def fit_hyperexponential(S: Callable[[float], float], budget: int, grid=None) -> tuple[PhaseType, float]:
    """Fit a mixture of at most ``budget`` exponentials to a survival function.

    Nonnegative least squares over a log-spaced bank of candidate rates picks
    the support; a nonlinear least-squares pass then refines rates and
    weights.  Returns the fitted law and the sup-norm error of its survival
    function on the (quantile) grid.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    y = _quantile_grid(S) if grid is None else np.asarray(grid, dtype=float)
    target = np.array([S(v) for v in y])
    ypos = y[y > 0]
    rates = np.logspace(math.log10(0.05 / y.max()), math.log10(20.0 / ypos.min()), 80)
    A = np.exp(-np.outer(y, rates))
    big = 100.0
    A_aug = np.vstack([A, big * np.ones(rates.size)])
    b_aug = np.concatenate([target, [big]])
    try:
        w, _ = optimize.nnls(A_aug, b_aug, maxiter=50 * rates.size)
    except RuntimeError:
        # the rate bank is badly conditioned; bounded least squares is slower but robust
        w = optimize.lsq_linear(A_aug, b_aug, bounds=(0.0, np.inf), method="bvls").x
    idx = np.argsort(w)[::-1][:budget]
    idx = idx[w[idx] > 0] if np.any(w[idx] > 0) else idx[:1]
    mu0 = rates[idx]
    w0 = np.maximum(w[idx], 1e-6)
    w0 = w0 / w0.sum()
    k = mu0.size

    def unpack(x):
        mu = np.exp(x[:k])
        z = np.concatenate([[0.0], x[k:]])
        wt = np.exp(z - z.max())
        return mu, wt / wt.sum()

    def resid(x):
        mu, wt = unpack(x)
        return np.exp(-np.outer(y, mu)) @ wt - target

    x0 = np.concatenate([np.log(mu0), np.log(w0[1:] / w0[0])])
    sol = optimize.least_squares(resid, x0, xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=5000)
    mu, wt = unpack(sol.x)
    keep = wt > 1e-12
    ph = pht.hyperexponential(wt[keep] / wt[keep].sum(), mu[keep])
    err = float(np.max(np.abs(np.exp(-np.outer(y, mu[keep])) @ (wt[keep] / wt[keep].sum()) - target)))
    return ph, err


def approximate(
    nu: LevyMeasureSpec,
    eps: float,
    phase_budget: int,
    drift: float = 0.0,
    sigma2: float = 0.0,
    warn_threshold: float = 1e-2,
) -> PhLevyModel:
    """Phase-type approximation of a Levy process with the given jump measure.

    Jumps of size at most ``eps`` are dropped; the excess ``|jump| - eps`` of
    the remaining jumps on each side is fitted by a hyperexponential law with
    at most ``phase_budget`` phases.  The Brownian part and drift are kept.
    A :class:`UserWarning` carrying the residual is emitted when a fit is
    worse than ``warn_threshold`` in sup norm.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    parts = {}
    for side, tail in (("up", nu.up_tail), ("down", nu.down_tail)):
        if tail is None:
            parts[side] = (0.0, None)
            continue
        mass = float(tail(eps))
        if mass <= 0:
            parts[side] = (0.0, None)
            continue
        law, err = fit_hyperexponential(lambda y, t=tail, m=mass: t(eps + y) / m, phase_budget)
        if err > warn_threshold:
            warnings.warn(f"{side}-jump fit residual {err:.3g} exceeds {warn_threshold:g}", stacklevel=2)
        parts[side] = (mass, law)
    snc = SpectrallyNegativeComponent(drift, sigma2, parts["down"][0], parts["down"][1])
    return PhLevyModel(snc, parts["up"][0], parts["up"][1])
