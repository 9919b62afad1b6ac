"""Matrix Wiener-Hopf factorisation by monotone fixed-point iteration.

The Levy process is embedded in a Markov additive process whose phase ``0``
is "moving like X_minus" and whose phases ``1..m`` are the phases of an
up-jump, levelled out at unit speed.  The upcrossing ladder phase process has
generator ``Q_plus``, which is determined by a row vector ``eta``:

* General case (``-X_minus`` not a subordinator), phases ``0..m``::

      Q_plus = M_plus + m_plus eta,
      M_plus = [[-Phi, 0], [t, T]],  m_plus = (Phi, 0, ..., 0)',
      Phi = Phi(a + lam),
      eta = lam/(a+lam) (0, alpha) phi_minus_{a+lam}(-Q_plus).

* Subordinator case, phases ``1..m``::

      Q_plus = T + t eta,
      eta = lam alpha ((lam + a) I - kappa_minus(-Q_plus))^{-1}.

Starting at ``eta = 0`` the iteration increases monotonically to the
solution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import phasetype as pht
from .model import (
    PathCaseError,
    PathClass,
    PhLevyModel,
    SpectrallyNegativeComponent,
    is_critical,
    levy_exponent,
    mean_slope,
    minus_exponent_matrix,
    minus_mean_slope,
    phi_root,
)
from .numerics import bracketed_root, ph_resolvent_integral

__all__ = [
    "NonConvergenceError",
    "MonotonicityError",
    "SingularResolventError",
    "TiltUnavailableError",
    "EmbeddingSpec",
    "LadderSolution",
    "build_embedding",
    "phi_minus_matrix",
    "psi",
    "psi_sub",
    "solve_ladder",
    "residual",
    "contraction_bound",
    "tilt_model",
    "tilt_root",
    "solve_tilted",
]

DEFAULT_TOL = 1e-12
DEFAULT_MAX_ITER = 10000


class NonConvergenceError(RuntimeError):
    def __init__(self, msg, last_step=math.nan, iterations=0):
        super().__init__(msg)
        self.last_step = last_step
        self.iterations = iterations


class MonotonicityError(RuntimeError):
    """An iterate decreased: the monotone scheme is numerically inconsistent."""


class SingularResolventError(np.linalg.LinAlgError):
    pass


class TiltUnavailableError(ValueError):
    pass


@dataclass(frozen=True)
class EmbeddingSpec:
    Qa: np.ndarray
    Sigma: np.ndarray
    V: np.ndarray


@dataclass
class LadderSolution:
    killing: float
    case: PathClass
    eta: np.ndarray
    Qplus: np.ndarray
    Mplus: np.ndarray | None = None
    mplus: np.ndarray | None = None
    phi: float | None = None
    iterations: int = 0
    final_step: float = 0.0
    residual: float = 0.0
    steps: list[float] = field(default_factory=list, repr=False)
    diagnostics: dict = field(default_factory=dict)

    @property
    def initial_vector(self) -> np.ndarray:
        """Phase law of the ladder process at level 0 (defective in the subordinator case)."""
        if self.case is PathClass.GENERAL:
            v = np.zeros(self.Qplus.shape[0])
            v[0] = 1.0
            return v
        return self.eta.copy()

    def to_dict(self) -> dict:
        d = {
            "killing": self.killing,
            "case": self.case.value,
            "eta": self.eta.tolist(),
            "Qplus": self.Qplus.tolist(),
            "iterations": self.iterations,
            "finalStep": self.final_step,
            "residual": self.residual,
            "diagnostics": self.diagnostics,
        }
        if self.case is PathClass.GENERAL:
            d.update(Mplus=self.Mplus.tolist(), mplus=self.mplus.tolist(), phi=self.phi)
        return d


def build_embedding(model: PhLevyModel, a: float) -> EmbeddingSpec:
    """Generator ``Q_a`` of the phase process with killing ``a`` in phase 0."""
    lam = model.up_rate
    if lam == 0:
        return EmbeddingSpec(np.array([[-a]]), np.eye(1), np.zeros((1, 1)))
    ph = model.up_law
    m = ph.m
    Q = np.zeros((m + 1, m + 1))
    Q[0, 0] = -lam - a
    Q[0, 1:] = lam * ph.alpha
    Q[1:, 0] = ph.exit
    Q[1:, 1:] = ph.T
    # a defective up law loses mass 1 - sum(alpha): a zero-size jump, i.e. no move
    Q[0, 0] += lam * (1.0 - ph.mass)
    Sigma = np.zeros((m + 1, m + 1))
    Sigma[0, 0] = 1.0
    return EmbeddingSpec(Q, Sigma, np.eye(m + 1) - Sigma)


def phi_minus_matrix(snc: SpectrallyNegativeComponent, q: float, G, phi: float | None = None) -> np.ndarray:
    r"""``int_0^inf exp(G x) P(-I_{e(q)} in dx)`` for the infimum of X_minus.

    Scalar form: ``phi_minus(s) = (q/Phi)(Phi - s)/(q - kappa_minus(s))``.
    Writing ``q - kappa_minus(s) = (Phi - s) h(s)`` with the divided difference

    .. math:: h(s) = \frac{\sigma^2}{2}(s + \Phi) + c
                     - \lambda \alpha (sI - T)^{-1} (\Phi I - T)^{-1} t

    removes the removable singularity at ``s = Phi``, so the matrix version is
    ``(q/Phi) h(-G)^{-1}`` and stays well defined when ``-Phi`` is an
    eigenvalue of ``G``.
    """
    if q <= 0:
        raise ValueError("q must be positive")
    G = np.atleast_2d(np.asarray(G, dtype=float))
    n = G.shape[0]
    if phi is None:
        phi = phi_root(snc, q)
    H = 0.5 * snc.sigma2 * (phi * np.eye(n) - G) + snc.drift * np.eye(n)
    if snc.down_rate > 0:
        law = snc.down_law
        v = np.linalg.solve(phi * np.eye(law.m) - law.T, law.exit)
        H = H - snc.down_rate * ph_resolvent_integral(G, law.alpha, law.T, v)
    try:
        cond = np.linalg.cond(H)
        if not np.isfinite(cond) or cond > 1e14:
            raise np.linalg.LinAlgError
        return (q / phi) * np.linalg.inv(H)
    except np.linalg.LinAlgError as exc:
        spec = np.linalg.eigvals(G)
        raise SingularResolventError(f"phi_minus resolvent is singular; spectrum of G: {spec}") from exc


def _general_parts(model: PhLevyModel, a: float, phi: float):
    m = model.m_up
    M = np.zeros((m + 1, m + 1))
    M[0, 0] = -phi
    if m:
        M[1:, 0] = model.up_law.exit
        M[1:, 1:] = model.up_law.T
    mvec = np.zeros(m + 1)
    mvec[0] = phi
    return M, mvec


def _head(model: PhLevyModel) -> np.ndarray:
    v = np.zeros(model.m_up + 1)
    if model.up_rate > 0:
        v[1:] = model.up_law.alpha
    return v


def psi(model: PhLevyModel, a: float, eta, phi: float | None = None) -> np.ndarray:
    """One step of the General-case map ``eta -> lam/(a+lam) (0, alpha) phi_minus(-M - m eta)``.

    The infimum inside ``phi_minus`` is taken at rate ``a + lam``: between
    up-jumps the downward part runs for an ``Exp(a + lam)`` time.
    """
    if model.path_class is not PathClass.GENERAL:
        raise PathCaseError("psi needs the General path class")
    eta = np.asarray(eta, dtype=float)
    lam = model.up_rate
    if lam == 0:
        return np.zeros_like(eta)
    q = a + lam
    if phi is None:
        phi = phi_root(model.minus, q)
    M, mvec = _general_parts(model, a, phi)
    G = M + np.outer(mvec, eta)
    return (lam / q) * (_head(model) @ phi_minus_matrix(model.minus, q, G, phi=phi))


def psi_sub(model: PhLevyModel, a: float, eta) -> np.ndarray:
    """One step of ``eta -> lam alpha ((lam + a) I - kappa_minus(-(T + t eta)))^{-1}``."""
    if model.path_class is not PathClass.MINUS_IS_SUBORDINATOR:
        raise PathCaseError("psi_sub needs -X_minus to be a subordinator")
    eta = np.asarray(eta, dtype=float)
    lam = model.up_rate
    if lam == 0:
        return np.zeros_like(eta)
    ph = model.up_law
    Q = ph.T + np.outer(ph.exit, eta)
    A = (lam + a) * np.eye(ph.m) - minus_exponent_matrix(model.minus, Q)
    try:
        return lam * np.linalg.solve(A.T, ph.alpha)
    except np.linalg.LinAlgError as exc:
        raise SingularResolventError("singular system in psi_sub") from exc


def residual(model: PhLevyModel, a: float, sol: LadderSolution) -> float:
    """Max-entry residual of the matrix Wiener-Hopf equation satisfied by ``Q_plus``.

    General case: ``K(sigma, -Q) + Q_a - V Q`` where ``K`` carries the first
    row of ``kappa_minus(-Q)`` and zeros elsewhere.  Subordinator case: the
    fixed-point equation for ``eta`` together with ``Q - T - t eta``.
    """
    Q = np.asarray(sol.Qplus, dtype=float)
    if sol.case is PathClass.GENERAL:
        emb = build_embedding(model, a)
        if Q.shape != emb.Qa.shape:
            raise ValueError("solution does not match the model's phase count")
        K = np.zeros_like(Q)
        K[0] = minus_exponent_matrix(model.minus, Q)[0]
        return float(np.max(np.abs(K + emb.Qa - emb.V @ Q)))
    if model.up_rate == 0:
        return 0.0
    ph = model.up_law
    eta = np.asarray(sol.eta, dtype=float)
    lam = model.up_rate
    r1 = eta @ (minus_exponent_matrix(model.minus, Q) - (lam + a) * np.eye(ph.m)) + lam * ph.alpha
    r2 = Q - ph.T - np.outer(ph.exit, eta)
    return float(max(np.max(np.abs(r1)), np.max(np.abs(r2))))


def contraction_bound(model: PhLevyModel, a: float) -> float:
    """Lipschitz constant of ``psi`` in the l1 norm.

    ``lam/(a+lam) * E[-I_{e(q)}] * Phi(q)`` with ``q = a + lam``, using
    ``E[-I_{e(q)}] = 1/Phi(q) - kappa_minus'(0+)/q``.
    """
    if a <= 0:
        raise ValueError("a must be positive")
    if model.path_class is not PathClass.GENERAL:
        raise PathCaseError("contraction bound is stated for the General class")
    lam = model.up_rate
    if lam == 0:
        return 0.0
    q = a + lam
    phi = phi_root(model.minus, q)
    return float(lam / q * (1.0 - phi * minus_mean_slope(model.minus) / q))


def _assemble(model, a, eta, case, phi):
    if case is PathClass.GENERAL:
        M, mvec = _general_parts(model, a, phi)
        return M + np.outer(mvec, eta), M, mvec
    ph = model.up_law
    return ph.T + np.outer(ph.exit, eta), None, None


def _face_newton(step, eta, max_iter=60):
    """Newton on the face ``sum(eta) = 1`` where the critical fixed point lives."""
    d = eta.size - 1
    if d == 0:
        return np.ones(1), 0

    def full(z):
        return np.concatenate([z, [1.0 - z.sum()]])

    def F(z):
        e = full(z)
        return (step(e) - e)[:d]

    z = eta[:d] / max(eta.sum(), 1e-300)
    n = 0
    for n in range(1, max_iter + 1):
        f = F(z)
        if np.max(np.abs(f)) < 1e-15:
            break
        J = np.empty((d, d))
        h = 1e-7
        for j in range(d):
            e = np.zeros(d)
            e[j] = h
            J[:, j] = (F(z + e) - F(z - e)) / (2 * h)
        dz = np.linalg.solve(J, -f)
        z = z + dz
        if np.max(np.abs(dz)) < 1e-16:
            break
    return full(z), n


def solve_ladder(
    model: PhLevyModel,
    a: float,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    record_steps: bool = True,
) -> LadderSolution:
    """Solve for ``eta_a`` and ``Q_plus_a`` by the monotone iteration from zero.

    For ``a = 0`` and ``E[X_1] < 0`` the problem is routed through an
    exponential tilt (:func:`solve_tilted`).  For ``a = 0`` and
    ``E[X_1] = 0`` the iteration converges only sublinearly; after the
    monotone phase has produced a good start, Newton steps on the face
    ``sum(eta) = 1`` finish the job.

    Raises
    ------
    NonConvergenceError
        ``max_iter`` reached before the l1 step fell below ``tol``.
    MonotonicityError
        An iterate decreased by more than 1e-13 in some component.
    """
    if a < 0:
        raise ValueError("a must be nonnegative")
    if tol <= 0:
        raise ValueError("tol must be positive")
    case = model.path_class
    lam = model.up_rate
    if a == 0 and lam > 0 and mean_slope(model) < 0 and not is_critical(model):
        return solve_tilted(model, a, tol, max_iter)

    phi = None
    if case is PathClass.GENERAL:
        phi = phi_root(model.minus, a + lam)
        size = model.m_up + 1

        def step(e):
            return psi(model, a, e, phi=phi)
    else:
        size = model.m_up

        def step(e):
            return psi_sub(model, a, e)

    eta = np.zeros(size)
    steps: list[float] = []
    method = "monotone"
    critical = a == 0 and lam > 0 and is_critical(model)
    n = 0
    converged = lam == 0
    while not converged and n < max_iter:
        new = step(eta)
        diff = new - eta
        n += 1
        if diff.size and diff.min() < -1e-13:
            raise MonotonicityError(f"iterate {n} decreased by {-diff.min():.3g}")
        eta = np.maximum(new, eta)
        s = float(np.abs(diff).sum())
        steps.append(s)
        if s <= tol:
            converged = True
        elif critical and (s < 1e-4 or n >= 200):
            eta, k = _face_newton(step, eta)
            method = "monotone+face-newton"
            n += k
            converged = True
    if not converged:
        raise NonConvergenceError(
            f"no convergence in {max_iter} iterations (last step {steps[-1]:.3g})", steps[-1], n
        )
    Q, M, mvec = _assemble(model, a, eta, case, phi) if size else (np.zeros((0, 0)), None, None)
    sol = LadderSolution(
        killing=float(a),
        case=case,
        eta=eta,
        Qplus=Q,
        Mplus=M,
        mplus=mvec,
        phi=phi,
        iterations=n,
        final_step=steps[-1] if steps else 0.0,
        steps=steps if record_steps else [],
        diagnostics={"method": method, "phiMinusRate": "a+upRate"},
    )
    sol.residual = residual(model, a, sol) if size else 0.0
    if sol.residual > 10 * max(tol, 1e-13) * max(1.0, np.abs(Q).max() if Q.size else 1.0) ** 2:
        raise NonConvergenceError(f"residual {sol.residual:.3g} above tolerance", sol.final_step, n)
    return sol


# --- exponential tilting --------------------------------------------------------


def tilt_root(model: PhLevyModel) -> float:
    """Positive root ``gamma`` of ``kappa(gamma) = 0`` (exists when ``E[X_1] < 0``)."""
    if mean_slope(model) >= 0:
        raise TiltUnavailableError("kappa has no positive root when E[X_1] >= 0")
    f = lambda s: float(np.real(levy_exponent(model, s)))
    if model.up_rate > 0:
        hi = -np.linalg.eigvals(model.up_law.T).real.max()
    else:
        hi = 1.0
        while f(hi) <= 0:
            hi *= 2.0
    # locate a point where kappa < 0 to bracket the nonzero root
    lo = hi * 1e-6
    while f(lo) >= 0 and lo > 1e-300:
        lo *= 0.5
    grid = np.linspace(lo, hi, 200, endpoint=False)
    vals = [f(x) for x in grid]
    lo = grid[int(np.argmin(vals))]
    return bracketed_root(f, lo, hi)


def tilt_model(model: PhLevyModel, gamma: float, check: bool = True) -> PhLevyModel:
    """Model seen under the measure with density ``exp(gamma X_t - kappa(gamma) t)``.

    Drift ``c + sigma2 gamma``; up-jumps tilted by ``e^{gamma y}`` at rate
    ``lam F_hat[-gamma]``; down-jumps tilted by ``e^{-gamma y}`` at rate
    ``lam_minus F_hat_minus[gamma]``.  Its exponent is
    ``kappa(s + gamma) - kappa(gamma)``, which is verified on a grid.
    """
    snc = model.minus
    down_rate, down_law = snc.down_rate, snc.down_law
    if down_rate > 0:
        down_law, E = pht.tilt_ph(snc.down_law, -gamma)
        down_rate = snc.down_rate * E
    up_rate, up_law = model.up_rate, model.up_law
    if up_rate > 0:
        up_law, E = pht.tilt_ph(model.up_law, gamma)
        up_rate = model.up_rate * E
    out = PhLevyModel.build(snc.drift + snc.sigma2 * gamma, snc.sigma2, down_rate, down_law, up_rate, up_law)
    if check:
        k0 = levy_exponent(model, gamma)
        grid = 1j * np.linspace(-5, 5, 20) + 0.1
        err = max(abs(levy_exponent(out, s) - (levy_exponent(model, s + gamma) - k0)) for s in grid)
        scale = 1.0 + max(abs(levy_exponent(out, s)) for s in grid)
        if err > 1e-9 * scale:
            raise ArithmeticError(f"tilted exponent check failed (error {err:.3g})")
    return out


def solve_tilted(model: PhLevyModel, a: float, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> LadderSolution:
    """Solve via the tilted model at ``gamma`` with ``kappa(gamma) = 0``, then untilt.

    Under the tilted measure the process drifts upward and the killing rate is
    unchanged because ``kappa(gamma) = 0``.  The tilted ladder phase vector is
    ``eta D1`` with ``D1 = diag(1, k)`` (General) or ``diag(k)``
    (subordinator), ``k = (-gamma I - T)^{-1} t``.  In the General case the
    tilted ``Phi`` is ``Phi - gamma`` and ``eta`` picks up the ratio of the two.
    """
    if model.up_rate == 0:
        raise TiltUnavailableError("tilting needs positive jumps")
    if mean_slope(model) >= 0:
        raise TiltUnavailableError("solve_tilted requires E[X_1] < 0")
    gamma = tilt_root(model)
    tilted = tilt_model(model, gamma)
    tsol = solve_ladder(tilted, a, tol, max_iter)
    ph = model.up_law
    k = np.linalg.solve(-gamma * np.eye(ph.m) - ph.T, ph.exit)
    case = model.path_class
    phi = None
    if case is PathClass.GENERAL:
        phi = phi_root(model.minus, a + model.up_rate)
        # the tilted root is Phi - gamma, so the first rows match only after rescaling
        eta = (tsol.phi / phi) * tsol.eta / np.concatenate([[1.0], k])
    else:
        eta = tsol.eta / k
    Q, M, mvec = _assemble(model, a, eta, case, phi)
    sol = LadderSolution(
        killing=float(a),
        case=case,
        eta=eta,
        Qplus=Q,
        Mplus=M,
        mplus=mvec,
        phi=phi,
        iterations=tsol.iterations,
        final_step=tsol.final_step,
        steps=tsol.steps,
        diagnostics={"method": "tilted", "gamma": gamma, "tiltedKilling": a, "phiMinusRate": "a+upRate"},
    )
    sol.residual = residual(model, a, sol)
    if sol.residual > 10 * max(tol, 1e-13) * max(1.0, np.abs(Q).max()) ** 2:
        raise NonConvergenceError(f"untilted residual {sol.residual:.3g} above tolerance", sol.final_step, sol.iterations)
    return sol
