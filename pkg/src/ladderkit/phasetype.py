r"""Phase-type distributions.

A phase-type law is the absorption time of a finite Markov chain with
transient phases ``1..m``.  It is parametrised by an initial row vector
``alpha`` and a subintensity matrix ``T``; the exit vector is ``t = -T 1``.

.. math:: 1 - F(x) = \alpha e^{T x} 1, \qquad f(x) = \alpha e^{T x} t,
          \qquad \hat F[s] = \alpha (sI - T)^{-1} t.

``sum(alpha) < 1`` is allowed; the missing mass is an atom at zero that the
caller keeps track of.  Minimality of the representation is assumed, never
checked.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import matrix_exponential

__all__ = [
    "PhaseType",
    "PoleError",
    "TiltDomainError",
    "InvalidRepresentationError",
    "exponential",
    "erlang",
    "hyperexponential",
    "validate",
    "cdf",
    "survival",
    "density",
    "lst",
    "lst_derivative",
    "mean",
    "tilt_ph",
]

_ATOL = 1e-12


class PoleError(ZeroDivisionError):
    """A transform was evaluated at one of its poles."""


class TiltDomainError(ValueError):
    """Exponential tilt outside the domain where the moment is finite."""


class InvalidRepresentationError(ValueError):
    """The (alpha, T) pair is not a valid phase-type representation."""


@dataclass(frozen=True, eq=False)
class PhaseType:
    """Phase-type law with initial vector ``alpha`` and subintensity ``T``."""

    alpha: np.ndarray
    T: np.ndarray

    def __post_init__(self):
        alpha = np.array(self.alpha, dtype=float).reshape(-1)
        T = np.array(self.T, dtype=float)
        if T.ndim == 0:
            T = T.reshape(1, 1)
        if T.ndim != 2 or T.shape[0] != T.shape[1] or T.shape[0] != alpha.size:
            raise ValueError(f"alpha of length {alpha.size} does not match T of shape {T.shape}")
        alpha.setflags(write=False)
        T.setflags(write=False)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "T", T)

    @property
    def m(self) -> int:
        return self.alpha.size

    @property
    def exit(self) -> np.ndarray:
        return -self.T.sum(axis=1)

    @property
    def mass(self) -> float:
        return float(self.alpha.sum())

    def to_dict(self) -> dict:
        return {"alpha": self.alpha.tolist(), "T": self.T.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "PhaseType":
        return cls(np.asarray(d["alpha"], dtype=float), np.asarray(d["T"], dtype=float))

    def __repr__(self):
        return f"PhaseType(alpha={self.alpha.tolist()}, T={self.T.tolist()})"


def exponential(rate: float) -> PhaseType:
    return PhaseType([1.0], [[-rate]])


def erlang(k: int, rate: float) -> PhaseType:
    T = -rate * np.eye(k) + rate * np.eye(k, k=1)
    alpha = np.zeros(k)
    alpha[0] = 1.0
    return PhaseType(alpha, T)


def hyperexponential(weights, rates) -> PhaseType:
    return PhaseType(np.asarray(weights, dtype=float), -np.diag(np.asarray(rates, dtype=float)))


def validate(ph: PhaseType) -> list[str]:
    """List every violated invariant of ``ph``; an empty list means valid."""
    problems = []
    a, T = ph.alpha, ph.T
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(T))):
        return ["non-finite entries"]
    if np.any(a < -_ATOL):
        problems.append(f"negative initial probability: alpha={a.tolist()}")
    if a.sum() > 1 + 1e-10:
        problems.append(f"initial probabilities sum to {a.sum():.12g} > 1")
    off = T - np.diag(np.diag(T))
    if np.any(off < -_ATOL):
        problems.append("negative off-diagonal entry in T")
    if np.any(np.diag(T) >= 0):
        problems.append("diagonal of T must be strictly negative")
    rows = T.sum(axis=1)
    if np.any(rows > _ATOL * np.maximum(1.0, np.abs(np.diag(T)))):
        problems.append(f"not subintensity: row sums {rows.tolist()}")
    if np.any(ph.exit < -_ATOL * np.maximum(1.0, np.abs(np.diag(T)))):
        problems.append("negative exit rate")
    if not problems:
        # all phases transient <=> T nonsingular (given the sign pattern)
        if abs(np.linalg.det(T)) < 1e-300 or np.linalg.cond(T) > 1e14:
            problems.append("T is singular: some phase is not transient")
    return problems


def survival(ph: PhaseType, x: float) -> float:
    """``alpha exp(T x) 1``: the mass strictly beyond ``x``."""
    if x < 0:
        raise ValueError("x must be nonnegative")
    return float(ph.alpha @ matrix_exponential(ph.T, x) @ np.ones(ph.m))


def cdf(ph: PhaseType, x: float) -> float:
    """``1 - alpha exp(T x) 1``; at ``x = 0`` this is the atom ``1 - sum(alpha)``."""
    return min(1.0, max(0.0, 1.0 - survival(ph, x)))


def density(ph: PhaseType, x: float) -> float:
    if x <= 0:
        raise ValueError("density is defined for x > 0")
    return max(0.0, float(ph.alpha @ matrix_exponential(ph.T, x) @ ph.exit))


def lst(ph: PhaseType, s: complex) -> complex:
    """Laplace-Stieltjes transform ``alpha (sI - T)^{-1} t`` of the part on (0, inf)."""
    A = s * np.eye(ph.m) - ph.T
    if np.linalg.cond(A) > 1e13:
        raise PoleError(f"s={s} is an eigenvalue of T")
    val = ph.alpha @ np.linalg.solve(A, ph.exit.astype(A.dtype))
    return complex(val) if np.iscomplexobj(val) else float(val)


def lst_derivative(ph: PhaseType, s: complex) -> complex:
    """d/ds of :func:`lst`: ``-alpha (sI - T)^{-2} t``."""
    A = s * np.eye(ph.m) - ph.T
    w = np.linalg.solve(A, ph.exit.astype(A.dtype))
    return -(ph.alpha @ np.linalg.solve(A, w))


def mean(ph: PhaseType) -> float:
    """``alpha (-T)^{-1} 1``."""
    try:
        return float(ph.alpha @ np.linalg.solve(-ph.T, np.ones(ph.m)))
    except np.linalg.LinAlgError as exc:
        raise InvalidRepresentationError("T is singular") from exc


def tilt_ph(ph: PhaseType, theta: float) -> tuple[PhaseType, float]:
    """Exponentially tilt the law by ``e^{theta y}``.

    Returns the representation of the normalised law ``e^{theta y} F(dy) / E``
    together with ``E = F_hat[-theta]``.  With ``k = (-theta I - T)^{-1} t``
    and ``D = diag(k)`` the tilted parameters are ``alpha D / E`` and
    ``D^{-1} T D + theta I``, with exit vector ``D^{-1} t``.
    """
    decay = -np.linalg.eigvals(ph.T).real.max()
    if theta >= decay:
        raise TiltDomainError(f"theta={theta} >= decay rate {decay:.6g}: E[exp(theta B)] is infinite")
    k = np.linalg.solve(-theta * np.eye(ph.m) - ph.T, ph.exit)
    reach = ph.alpha @ np.linalg.matrix_power(np.eye(ph.m) + (ph.T > 0), ph.m) > 0
    if np.any(k[reach] <= 0) or not np.all(np.isfinite(k)):
        raise TiltDomainError(f"theta={theta} gives a non-positive tilt vector")
    E = float(ph.alpha @ k)
    # phases that cannot be reached carry no mass; keep them harmless
    k = np.where(k > 0, k, 1.0)
    Tt = ph.T * k[None, :] / k[:, None] + theta * np.eye(ph.m)
    out = PhaseType(ph.alpha * k / E, Tt)
    problems = validate(out)
    if problems:
        raise TiltDomainError(f"tilted representation is invalid: {problems}")
    return out, E
