"""Fluctuation identities built from a solved ladder process.

Every function accepts an optional ``sol`` (a :class:`LadderSolution` at the
matching killing rate) so a caller evaluating many quantities solves once.

Two independent routes to the Wiener-Hopf factor ``phi_plus_a(s) = E[exp(s
M_{e(a)})]`` are provided: a rational function of the Cramer-Lundberg roots
(:func:`wh_plus_roots`) and the matrix-exponential law of the supremum
(:func:`wh_plus_matrix`).  Their agreement is the main correctness check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import Polynomial

from .model import (
    PathClass,
    PhLevyModel,
    _char_polys,
    cl_polynomial,
    cl_roots,
    levy_exponent,
    phi_root,
)
from .numerics import matrix_exponential
from .phasetype import PhaseType, PoleError
from .phasetype import lst as ph_lst
from .phasetype import mean as ph_mean
from .whfactor import LadderSolution, solve_ladder

__all__ = [
    "AtomPlusPhaseType",
    "LadderHeightDescription",
    "sup_law",
    "first_passage_lt",
    "ladder_phase",
    "overshoot_law",
    "joint_transform",
    "wh_plus_roots",
    "wh_plus_matrix",
    "wh_minus",
    "ladder_cumulant_plus",
    "ladder_cumulant_minus",
    "kappa_plus_sub_check",
    "ladder_height_law",
    "wh3_identity",
    "wh4_rhs",
]

_POLE_TOL = 1e-12


@dataclass(frozen=True)
class AtomPlusPhaseType:
    """Law on ``[0, inf)`` with an atom at zero and a (defective) phase-type part."""

    atom0: float
    tail: PhaseType | None = None

    def __post_init__(self):
        if not -1e-12 <= self.atom0 <= 1 + 1e-12:
            raise ValueError(f"atom0={self.atom0} outside [0, 1]")
        if self.total_mass > 1 + 1e-10:
            raise ValueError(f"total mass {self.total_mass} exceeds 1")

    @property
    def tail_mass(self) -> float:
        return 0.0 if self.tail is None else self.tail.mass

    @property
    def total_mass(self) -> float:
        return self.atom0 + self.tail_mass

    def survival(self, x: float) -> float:
        """Mass strictly above ``x`` (``x >= 0``)."""
        if x < 0:
            return self.total_mass
        if self.tail is None:
            return 0.0
        T = self.tail.T
        return float(self.tail.alpha @ matrix_exponential(T, x) @ np.ones(T.shape[0]))

    def cdf(self, x: float) -> float:
        return self.total_mass - self.survival(x) if x >= 0 else 0.0

    def lst(self, s: complex) -> complex:
        """``E[exp(-s Y)]`` over the non-killed mass."""
        return self.atom0 + (0.0 if self.tail is None else ph_lst(self.tail, s))

    def mean(self) -> float:
        return 0.0 if self.tail is None else ph_mean(self.tail)

    def to_dict(self) -> dict:
        return {
            "atom0": self.atom0,
            "tail": None if self.tail is None else self.tail.to_dict(),
            "totalMass": self.total_mass,
        }


@dataclass(frozen=True)
class LadderHeightDescription:
    """Ladder height ``H`` at ``a = 0``: ``drift * t`` plus compound Poisson jumps.

    A defective ``jump_law`` means that a "jump" kills ``H`` with the missing
    probability (the supremum is finite).
    """

    case: PathClass
    drift: float
    jump_intensity: float
    jump_law: AtomPlusPhaseType

    def cumulant(self, s: complex) -> complex:
        """``kappa_plus(0, s) = drift s + intensity (1 - E[exp(-s U)])``."""
        return self.drift * s + self.jump_intensity * (1.0 - self.jump_law.lst(s))

    def to_dict(self) -> dict:
        return {
            "case": self.case.value,
            "drift": self.drift,
            "jumpIntensity": self.jump_intensity,
            "jumpLaw": self.jump_law.to_dict(),
        }


def _solution(model: PhLevyModel, a: float, sol: LadderSolution | None) -> LadderSolution:
    if sol is None:
        return solve_ladder(model, a)
    if abs(sol.killing - a) > 1e-14 * max(1.0, a):
        raise ValueError(f"solution was computed at a={sol.killing}, not {a}")
    return sol


def sup_law(model: PhLevyModel, q: float, sol: LadderSolution | None = None) -> AtomPlusPhaseType:
    """Law of ``M_{e(q)}``: ``P(M > k) = beta exp(Q_plus k) 1``.

    ``beta`` is the indicator of phase 0 in the General case (no atom at
    zero).  In the subordinator case ``beta = eta_q`` and the atom at zero is
    ``1 - eta_q 1``: ``X`` can only go above zero by a jump, and ``eta_q``
    is the phase law of that jump at level 0 before ``e(q)``.
    """
    if q <= 0:
        raise ValueError("q must be positive")
    sol = _solution(model, q, sol)
    if sol.Qplus.size == 0:
        return AtomPlusPhaseType(1.0, None)
    if sol.case is PathClass.GENERAL:
        return AtomPlusPhaseType(0.0, PhaseType(sol.initial_vector, sol.Qplus))
    eta = sol.eta
    return AtomPlusPhaseType(max(0.0, 1.0 - eta.sum()), PhaseType(eta, sol.Qplus))


def first_passage_lt(model: PhLevyModel, q: float, k: float, sol: LadderSolution | None = None) -> float:
    """``E[exp(-q T_plus(k))] = P(M_{e(q)} > k)``."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    return min(1.0, max(0.0, sup_law(model, q, sol).survival(k)))


def ladder_phase(model: PhLevyModel, q: float, k: float, sol: LadderSolution | None = None) -> np.ndarray:
    """Joint law of the phase at first passage over ``k`` and ``{T_plus(k) < e(q)}``.

    General case: component 0 is "level reached continuously", components
    ``1..m`` are the phases of the up-jump in progress.  Subordinator case:
    only jump phases.
    """
    if k < 0:
        raise ValueError("k must be nonnegative")
    sol = _solution(model, q, sol)
    if sol.Qplus.size == 0:
        return np.zeros(0)
    return sol.initial_vector @ matrix_exponential(sol.Qplus, k)


def overshoot_law(model: PhLevyModel, q: float, k: float, sol: LadderSolution | None = None) -> AtomPlusPhaseType:
    """Defective law of ``O_plus(k)`` on ``{T_plus(k) < e(q)}``; the atom is the creeping mass."""
    v = ladder_phase(model, q, k, sol)
    if v.size == 0:
        return AtomPlusPhaseType(0.0, None)
    if model.path_class is PathClass.GENERAL:
        if model.up_rate == 0:
            return AtomPlusPhaseType(float(v[0]), None)
        return AtomPlusPhaseType(float(v[0]), PhaseType(v[1:], model.up_law.T))
    return AtomPlusPhaseType(0.0, PhaseType(v, model.up_law.T))


def joint_transform(model: PhLevyModel, q: float, lam: float, mu: float, sol: LadderSolution | None = None):
    """Both sides of ``int lam e^{-lam x} E[exp(-q T_plus(x) - mu O_plus(x))] dx``.

    Returns ``(lhs, rhs)``.  The left side integrates the ladder phase law in
    closed form, ``lam beta (lam I - Q_plus)^{-1} w`` with ``w`` the overshoot
    transform per phase.  The right side is
    ``lam/(lam - mu) (1 - phi_plus(-lam)/phi_plus(-mu))`` on the root route.
    """
    if min(q, lam, mu) <= 0:
        raise ValueError("q, lam, mu must be positive")
    if abs(lam - mu) <= 1e-12 * max(lam, mu):
        raise ZeroDivisionError("lam == mu is a removable singularity; perturb one of them")
    sol = _solution(model, q, sol)
    if sol.Qplus.size == 0:
        lhs = 0.0
    else:
        n = sol.Qplus.shape[0]
        if model.up_rate > 0:
            ph = model.up_law
            wj = np.linalg.solve(mu * np.eye(ph.m) - ph.T, ph.exit)
        else:
            wj = np.zeros(0)
        w = np.concatenate([[1.0], wj]) if sol.case is PathClass.GENERAL else wj
        lhs = float(lam * sol.initial_vector @ np.linalg.solve(lam * np.eye(n) - sol.Qplus, w))
    rp = wh_plus_roots(model, q, -lam)
    rm = wh_plus_roots(model, q, -mu)
    rhs = float(np.real(lam / (lam - mu) * (1.0 - rp / rm)))
    return lhs, rhs


def _positive_roots(model: PhLevyModel, a: float) -> np.ndarray:
    return np.asarray(cl_roots(model, a).positive_roots, dtype=complex)


def _det_shift(T: np.ndarray, s: complex) -> complex:
    """``det(s I - T)``; one for an empty matrix."""
    if T.size == 0:
        return 1.0
    return np.linalg.det(s * np.eye(T.shape[0]) - T)


def _up_T(model: PhLevyModel) -> np.ndarray:
    return model.up_law.T if model.up_rate > 0 else np.zeros((0, 0))


def wh_plus_roots(model: PhLevyModel, a: float, s: complex, roots=None) -> complex:
    """``phi_plus_a(s)`` as a rational function of the positive roots of ``kappa = a``.

    ``[det(-sI - T)/det(-T)] prod(-rho)/prod(s - rho)``; the determinant
    ratio is one without positive jumps.
    """
    if a <= 0:
        raise ValueError("a must be positive")
    rho = _positive_roots(model, a) if roots is None else np.asarray(roots, dtype=complex)
    d = s - rho
    if np.any(np.abs(d) < _POLE_TOL * np.maximum(1.0, np.abs(rho))):
        raise PoleError(f"s={s} is a root of kappa(s) = {a}")
    T = _up_T(model)
    val = _det_shift(T, -s) / _det_shift(T, 0.0) * np.prod(-rho) / np.prod(d)
    return complex(val)


def wh_plus_matrix(model: PhLevyModel, a: float, s: complex, sol: LadderSolution | None = None) -> complex:
    """``E[exp(s M_{e(a)})] = atom0 + beta (-sI - Q_plus)^{-1} (-Q_plus 1)``."""
    law = sup_law(model, a, sol)
    if law.tail is None:
        return complex(law.atom0)
    Q = law.tail.T
    A = -s * np.eye(Q.shape[0]) - Q
    if np.linalg.cond(A) > 1e13:
        raise PoleError(f"s={s} hits the spectrum of Q_plus")
    return complex(law.atom0 + law.tail.alpha @ np.linalg.solve(A, -Q.sum(axis=1).astype(A.dtype)))


def wh_minus(model: PhLevyModel, a: float, s: complex, route: str = "roots", sol: LadderSolution | None = None) -> complex:
    """``phi_minus_a(s) = [a/(a - kappa(s))] / phi_plus_a(s)``; ``route`` picks the ``phi_plus`` route."""
    if a <= 0:
        raise ValueError("a must be positive")
    if s == 0:
        return 1.0 + 0j
    k = levy_exponent(model, s)
    if abs(a - k) < _POLE_TOL * max(1.0, a):
        raise PoleError(f"kappa(s) = a at s={s}")
    if route == "roots":
        pp = wh_plus_roots(model, a, s)
    elif route == "matrix":
        pp = wh_plus_matrix(model, a, s, sol)
    else:
        raise ValueError(f"unknown route {route!r}")
    if pp == 0:
        raise PoleError(f"phi_plus vanishes at s={s}")
    return complex(a / (a - k) / pp)


def ladder_cumulant_plus(
    model: PhLevyModel,
    a: float,
    s: complex,
    local_time_c: float | None = None,
    sol: LadderSolution | None = None,
) -> complex:
    """Bivariate exponent ``kappa_plus(a, s)`` of the upward ladder process.

    General case: ``prod(s + rho_i(a)) / det(sI - T)`` (denominator one
    without positive jumps), normalised by unit drift of ``H``.

    Subordinator case: ``c (1 - eta_a (sI - T)^{-1} t)`` with the user's
    local-time constant ``c``.  The root-product expression for this case is
    available through :func:`kappa_plus_sub_check`.
    """
    if a < 0:
        raise ValueError("a must be nonnegative")
    if model.path_class is PathClass.GENERAL:
        rho = _positive_roots(model, a)
        T = _up_T(model)
        den = _det_shift(T, s)
        if abs(den) < _POLE_TOL:
            raise PoleError(f"s={s} is an eigenvalue of T_plus")
        return complex(np.prod(s + rho) / den)
    if local_time_c is None or local_time_c <= 0:
        raise ValueError("the subordinator case needs a positive local_time_c")
    if model.up_rate == 0:
        return complex(local_time_c)
    sol = _solution(model, a, sol)
    return complex(local_time_c * (1.0 - ph_lst(PhaseType(sol.eta, model.up_law.T), s)))


def kappa_plus_sub_check(model: PhLevyModel, a: float, local_time_c: float, grid, sol: LadderSolution | None = None) -> dict:
    """Compare three evaluations of ``kappa_plus(a, s)`` in the subordinator case.

    * ``matrix``: ``c (1 - eta_a (sI - T)^{-1} t)``, from the compound-Poisson
      structure of ``H``.
    * ``roots``: ``c (1 - eta_a 1) prod(s + rho)/det(sI - T) * det(-T)/prod(rho)``.
    * ``literal``: the same product read with ``kappa_plus(a, -s)`` on the left
      and ``det(T)`` in place of ``det(-T)``.

    Returns the values and the max discrepancy of the latter two against
    ``matrix`` over ``grid``.
    """
    if model.path_class is not PathClass.MINUS_IS_SUBORDINATOR:
        raise ValueError("only meaningful in the subordinator case")
    if a <= 0:
        raise ValueError("the root-product form needs a > 0")
    sol = _solution(model, a, sol)
    rho = _positive_roots(model, a)
    T = model.up_law.T
    mass = 1.0 - sol.eta.sum()
    out = {"matrix": [], "roots": [], "literal": []}
    for s in grid:
        out["matrix"].append(ladder_cumulant_plus(model, a, s, local_time_c, sol))
        base = local_time_c * mass * np.prod(s + rho) / _det_shift(T, s)
        out["roots"].append(complex(base * np.linalg.det(-T) / np.prod(rho)))
        # literal reading evaluates the right side at s and assigns it to -s
        lit_s = -s
        lit = local_time_c * mass * np.prod(lit_s + rho) / _det_shift(T, lit_s) * np.linalg.det(T) / np.prod(rho)
        out["literal"].append(complex(lit))
    m = np.asarray(out["matrix"])
    return {
        **{k: np.asarray(v) for k, v in out.items()},
        "rootsDiscrepancy": float(np.max(np.abs(np.asarray(out["roots"]) - m))),
        "literalDiscrepancy": float(np.max(np.abs(np.asarray(out["literal"]) - m))),
    }


def ladder_cumulant_minus(model: PhLevyModel, a: float, s: complex, roots=None) -> complex:
    """Exponent of the downward ladder process, up to a constant factor.

    Equal to ``(a - kappa(s)) det(-sI - T) / prod(rho_i(a) - s)``; this
    normalisation makes it positive for real ``s > 0``.  Only its shape in
    ``s`` is identified.  The cleared polynomial ``(kappa(s) - a) det(sI -
    T_minus) det(-sI - T)`` is divided exactly by ``prod(s - rho_i)``, so the
    removable singularities at the up-jump poles and at the roots vanish.
    """
    rho = _positive_roots(model, a) if roots is None else np.asarray(roots, dtype=complex)
    quot, rem = divmod(cl_polynomial(model, a), Polynomial.fromroots(rho))
    scale = max(1.0, float(np.abs(cl_polynomial(model, a).coef).max()))
    if np.abs(rem.coef).max() > 1e-8 * scale:
        raise ArithmeticError("positive roots do not divide the cleared polynomial")
    pm = _char_polys(model.minus.down_law)[0] if model.minus.down_rate > 0 else Polynomial([1.0])
    den = pm(s)
    if abs(den) < _POLE_TOL:
        raise PoleError(f"s={s} is an eigenvalue of T_minus")
    sign = (-1) ** (rho.size + 1)
    return complex(sign * quot(s) / den)


def ladder_height_law(model: PhLevyModel, local_time_c: float | None = None, sol: LadderSolution | None = None) -> LadderHeightDescription:
    """Ladder height process ``H`` (no killing on the time axis).

    General case: unit drift plus jumps at rate ``Phi(lam_plus)`` (root of
    ``kappa_minus = lam_plus``) with law ``eta_0 = (eta_0(0), eta_0(1..m))``:
    an atom at zero and a phase-type part with subintensity ``T_plus``.

    Subordinator case: no drift, jumps at rate ``local_time_c`` with law
    ``PH(eta_0, T_plus)``.
    """
    case = model.path_class
    if case is PathClass.GENERAL:
        sol = _solution(model, 0.0, sol)
        intensity = phi_root(model.minus, model.up_rate) if model.up_rate > 0 else _phi0(model)
        if model.up_rate == 0:
            law = AtomPlusPhaseType(0.0, None)
        else:
            eta = np.clip(sol.eta, 0.0, None)
            law = AtomPlusPhaseType(float(eta[0]), PhaseType(eta[1:], model.up_law.T))
        return LadderHeightDescription(case, 1.0, float(intensity), law)
    if local_time_c is None or local_time_c <= 0:
        raise ValueError("the subordinator case needs a positive local_time_c")
    if model.up_rate == 0:
        return LadderHeightDescription(case, 0.0, float(local_time_c), AtomPlusPhaseType(0.0, None))
    sol = _solution(model, 0.0, sol)
    eta = np.clip(sol.eta, 0.0, None)
    return LadderHeightDescription(case, 0.0, float(local_time_c), AtomPlusPhaseType(0.0, PhaseType(eta, model.up_law.T)))


def _phi0(model: PhLevyModel) -> float:
    try:
        return phi_root(model.minus, 0.0)
    except ValueError:
        return 0.0


def wh3_identity(model: PhLevyModel, q: float, b: float, sol: LadderSolution | None = None):
    """``(E[exp(-b M_{e(q)})], kappa_plus(q, 0)/kappa_plus(q, b))``."""
    if q <= 0 or b <= 0:
        raise ValueError("q and b must be positive")
    lhs = float(np.real(sup_law(model, q, sol).lst(b)))
    c = 1.0 if model.path_class is PathClass.MINUS_IS_SUBORDINATOR else None
    rhs = ladder_cumulant_plus(model, q, 0.0, c, sol) / ladder_cumulant_plus(model, q, b, c)
    return lhs, float(np.real(rhs))


def wh4_rhs(model: PhLevyModel, q: float, a: float, b: float) -> float:
    """``E[exp(-a (e(q) - G) - b (M - X))]`` at ``e(q)``.

    Equals ``q/kappa_plus(q, 0) * kappa_plus(q + a, -b)/(q + a - kappa(b))``;
    note the argument ``-b``, which the Brownian case confirms
    (``M - X`` at ``e(q)`` is ``Exp(Phi(q))`` there).
    """
    if q <= 0 or a < 0 or b < 0:
        raise ValueError("need q > 0 and a, b >= 0")
    c = 1.0 if model.path_class is PathClass.MINUS_IS_SUBORDINATOR else None
    num = ladder_cumulant_plus(model, q + a, -b, c)
    den = ladder_cumulant_plus(model, q, 0.0, c) * (q + a - levy_exponent(model, b))
    return float(np.real(q * num / den))
