"""Dense matrix and root-finding primitives shared by the rest of the package.

Matrices here are small (order well below a hundred), so everything is dense
and solved directly.
"""

from __future__ import annotations

import math
import warnings
from typing import Callable

import numpy as np
from scipy import linalg, optimize

__all__ = [
    "SpectralOverlapError",
    "BracketError",
    "as_square",
    "matrix_exponential",
    "ph_resolvent_integral",
    "ph_weighted_integral",
    "real_poly_roots",
    "bracketed_root",
]

DEFAULT_TOL = 1e-12


class SpectralOverlapError(np.linalg.LinAlgError):
    """The Kronecker-sum system behind a weighted integral is singular."""


class BracketError(ValueError):
    """No sign change on the supplied bracket."""


def as_square(G) -> np.ndarray:
    """Return ``G`` as a finite 2-D float (or complex) array, checking the shape."""
    A = np.atleast_2d(np.asarray(G))
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 1:
        raise ValueError(f"expected a non-empty square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    if not np.iscomplexobj(A):
        A = A.astype(float)
    return A


def matrix_exponential(G, x: float = 1.0) -> np.ndarray:
    """exp(G x) by scaling-and-squaring with a degree-13 Pade approximant.

    Raises
    ------
    OverflowError
        If the result is not representable in double precision.
    """
    if x < 0:
        raise ValueError("x must be nonnegative")
    A = as_square(G)
    if x == 0:
        return np.eye(A.shape[0], dtype=A.dtype)
    with np.errstate(over="raise", invalid="raise"):
        try:
            E = linalg.expm(A * x)
        except FloatingPointError as exc:
            raise OverflowError(f"exp(Gx) overflows for ||Gx||={np.abs(A).max() * x:.3g}") from exc
    if not np.all(np.isfinite(E)):
        raise OverflowError(f"exp(Gx) overflows for ||Gx||={np.abs(A).max() * x:.3g}")
    return E


def ph_resolvent_integral(G, alpha, T, v) -> np.ndarray:
    """Matrix value of ``int_0^inf exp(G y) * (alpha exp(T y) v) dy``.

    This is the matrix function ``s -> alpha (sI - T)^{-1} v`` evaluated at
    ``s = -G``.  With ``n = order(G)`` and ``m = order(T)`` it is computed as
    ``(I_n kron alpha) (-(G kronsum T))^{-1} (I_n kron v)`` by one dense solve
    of size ``n*m``.
    """
    G = as_square(G)
    T = as_square(T)
    alpha = np.asarray(alpha).reshape(1, -1)
    v = np.asarray(v).reshape(-1, 1)
    n, m = G.shape[0], T.shape[0]
    if alpha.shape[1] != m or v.shape[0] != m:
        raise ValueError("alpha/v do not match T")
    ksum = np.kron(G, np.eye(m)) + np.kron(np.eye(n), T)
    rhs = np.kron(np.eye(n), v)
    try:
        with warnings.catch_warnings():
            # singularity is detected from the pivots below
            warnings.simplefilter("ignore", linalg.LinAlgWarning)
            lu = linalg.lu_factor(-ksum, check_finite=False)
    except (linalg.LinAlgError, ValueError) as exc:
        raise SpectralOverlapError("G and T have overlapping spectra (singular Kronecker sum)") from exc
    diag = np.abs(np.diag(lu[0]))
    if diag.min() <= 1e-14 * max(1.0, diag.max()):
        raise SpectralOverlapError("G and T have overlapping spectra (singular Kronecker sum)")
    X = linalg.lu_solve(lu, rhs, check_finite=False)
    return np.kron(np.eye(n), alpha) @ X


def ph_weighted_integral(G, ph) -> np.ndarray:
    """``int_0^inf exp(G y) f(y) dy`` for the phase-type density ``f`` of ``ph``.

    Requires every ``Re(lambda_i(G)) + Re(lambda_j(T)) < 0``; otherwise the
    integral diverges and :class:`SpectralOverlapError` is raised.
    """
    G = as_square(G)
    ev = np.linalg.eigvals(G).real.max() + np.linalg.eigvals(ph.T).real.max()
    if ev >= 0:
        raise SpectralOverlapError(
            f"integral diverges: max Re(eig G) + max Re(eig T) = {ev:.3g} >= 0"
        )
    return ph_resolvent_integral(G, ph.alpha, ph.T, ph.exit)


def _polish(coeffs: np.ndarray, r: complex, steps: int = 8) -> complex:
    dp = np.polyder(coeffs)
    with np.errstate(all="ignore"):
        for _ in range(steps):
            pr = np.polyval(coeffs, r)
            d = np.polyval(dp, r)
            if pr == 0 or d == 0 or not np.isfinite(pr):
                break
            nr = r - pr / d
            if not np.isfinite(nr) or not abs(np.polyval(coeffs, nr)) < abs(pr):
                break
            r = nr
    return r


def real_poly_roots(coefficients, imag_tol: float = 1e-10) -> np.ndarray:
    """All complex roots of a real polynomial, highest-degree coefficient first.

    Roots come from the companion-matrix eigenvalues, are polished by Newton
    steps, and are symmetrised so that complex roots appear in exact conjugate
    pairs (imaginary parts below ``imag_tol`` relative are dropped).
    """
    c = np.trim_zeros(np.asarray(coefficients, dtype=float), "f")
    if c.size < 2:
        raise ValueError("polynomial must have degree >= 1")
    raw = np.roots(c)
    polished = np.array([_polish(c, r) for r in raw.astype(complex)])
    out = []
    for r in polished:
        if abs(r.imag) <= imag_tol * max(1.0, abs(r)):
            out.append(complex(r.real, 0.0))
        else:
            out.append(r)
    # Enforce conjugate symmetry: pair each upper root with a lower one.
    reals = sorted((r for r in out if r.imag == 0.0), key=lambda z: z.real)
    upper = [r for r in out if r.imag > 0]
    lower = [r for r in out if r.imag < 0]
    paired = []
    for u in upper:
        if lower:
            j = int(np.argmin([abs(u - l.conjugate()) for l in lower]))
            l = lower.pop(j)
            z = 0.5 * (u + l.conjugate())
        else:
            z = u
        paired.extend([z, z.conjugate()])
    for l in lower:  # unmatched lower roots (should not happen for real input)
        paired.extend([l.conjugate(), l])
    return np.array(reals + paired, dtype=complex)


def bracketed_root(f: Callable[[float], float], lo: float, hi: float, tol: float = DEFAULT_TOL) -> float:
    """Root of ``f`` on ``[lo, hi]`` by Brent's safeguarded method.

    An endpoint where ``f`` is not finite (typically a pole sitting on the
    bracket edge) is nudged inward until ``f`` is finite.
    """
    if not lo < hi:
        raise BracketError("need lo < hi")

    def safe(x):
        try:
            with np.errstate(all="ignore"):
                y = float(np.real(f(x)))
        except (ZeroDivisionError, np.linalg.LinAlgError):
            return math.nan
        return y

    flo, fhi = safe(lo), safe(hi)
    width = hi - lo
    for k in range(1, 40):
        if math.isfinite(flo):
            break
        lo = lo + width * 10.0 ** (-16 + k / 2)
        flo = safe(lo)
    for k in range(1, 40):
        if math.isfinite(fhi):
            break
        hi = hi - width * 10.0 ** (-16 + k / 2)
        fhi = safe(hi)
    if not (math.isfinite(flo) and math.isfinite(fhi)):
        raise BracketError("f is not finite near the bracket ends")
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if flo * fhi > 0:
        raise BracketError(f"no sign change: f({lo})={flo:.3g}, f({hi})={fhi:.3g}")
    return optimize.brentq(safe, lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps, maxiter=500)
