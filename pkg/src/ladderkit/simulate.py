"""Monte Carlo simulation of the model up to an independent exponential horizon.

Paths are simulated event by event.  Between jump epochs the Gaussian part is
a Brownian motion with drift whose maximum over the segment is drawn exactly
from the bridge law,

    M = (x0 + x1 + sqrt((x1 - x0)^2 - 2 sigma^2 dt log U)) / 2,

so level crossings by creeping carry no discretisation bias.  Up-jumps are
generated by running the phase chain, which gives the phase in which a jump
passes a level and the overshoot.

Paths are processed in fixed blocks; block ``i`` draws from a generator seeded
with ``(seed, i)``.  Blocks may run on several threads (``LADDERKIT_THREADS``)
and are always reduced in block order, so results do not depend on the
thread count.
"""

from __future__ import annotations

import csv
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .model import PathClass, PhLevyModel, SpectrallyNegativeComponent
from .phasetype import PhaseType

__all__ = [
    "SimConfig",
    "SimEstimate",
    "PathSample",
    "simulate_paths",
    "simulate_first_passage",
    "simulate_sup",
    "simulate_wh4",
    "simulate_minus_infimum",
    "write_samples_csv",
]

BLOCK_SIZE = 8192
GRID_STEP = 1e-3


@dataclass(frozen=True)
class SimConfig:
    paths: int
    seed: int
    q_rate: float
    level: float = 0.0
    bridge_sampling: bool = True

    def __post_init__(self):
        if self.paths < 1:
            raise ValueError("paths must be >= 1")
        if not self.q_rate > 0:
            raise ValueError("q_rate must be positive")
        if self.level < 0:
            raise ValueError("level must be nonnegative")


@dataclass(frozen=True)
class SimEstimate:
    value: float
    std_error: float
    n: int
    seed: int

    @classmethod
    def from_samples(cls, x, seed: int) -> "SimEstimate":
        x = np.asarray(x, dtype=float)
        n = x.size
        se = float(x.std(ddof=1) / np.sqrt(n)) if n > 1 else float("nan")
        return cls(float(x.mean()), se, n, seed)

    def z_score(self, target: float) -> float:
        if self.std_error == 0:
            return 0.0 if self.value == target else float("inf")
        return (self.value - target) / self.std_error

    def to_dict(self) -> dict:
        return {"value": self.value, "stdError": self.std_error, "n": self.n, "seed": self.seed}


@dataclass
class PathSample:
    """Per-path output of the engine.

    ``cause`` is -1 when the level was not passed before the horizon, 0 for
    creeping, and ``j >= 1`` when an up-jump passed the level while in its
    phase ``j``.
    """

    horizon: np.ndarray
    sup: np.ndarray
    argmax: np.ndarray
    x_end: np.ndarray
    cause: np.ndarray
    overshoot: np.ndarray
    seed: int
    level: float
    bridge_sampling: bool = True
    notes: list[str] = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.sup.size

    @property
    def crossed(self) -> np.ndarray:
        return self.cause >= 0


def _threads() -> int:
    env = os.environ.get("LADDERKIT_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return min(4, os.cpu_count() or 1)


class _PhSampler:
    """Vectorised sampling of phase-type variables by running the phase chain."""

    def __init__(self, ph: PhaseType):
        T = ph.T
        m = ph.m
        self.m = m
        self.rates = -np.diag(T)
        P = np.zeros((m, m + 1))
        P[:, :m] = T / self.rates[:, None]
        np.fill_diagonal(P[:, :m], 0.0)
        P[:, m] = ph.exit / self.rates
        self.jump_cdf = np.cumsum(P, axis=1)
        self.jump_cdf[:, -1] = 1.0
        init = np.append(ph.alpha, max(0.0, 1.0 - ph.mass))
        self.init_cdf = np.cumsum(init)
        self.init_cdf[-1] = 1.0

    def sample(self, rng: np.random.Generator, need: np.ndarray):
        """Sizes of ``need.size`` draws and the phase (1-based) in which each passes ``need``.

        ``phase`` is -1 where the total stays at or below ``need``.
        """
        n = need.size
        size = np.zeros(n)
        phase = np.full(n, -1, dtype=np.int64)
        state = np.searchsorted(self.init_cdf, rng.random(n), side="right")
        alive = np.flatnonzero(state < self.m)
        while alive.size:
            j = state[alive]
            size[alive] += rng.exponential(1.0, alive.size) / self.rates[j]
            hit = (phase[alive] < 0) & (size[alive] > need[alive])
            phase[alive[hit]] = j[hit] + 1
            u = rng.random(alive.size)
            nxt = (u[:, None] >= self.jump_cdf[j]).sum(axis=1)
            state[alive] = nxt
            alive = alive[nxt < self.m]
        return size, phase


def _argmax_in_bridge(rng, span, rise, fall, sigma2):
    """Time of the maximum of a Brownian bridge given its maximum.

    ``rise = M - x0`` and ``fall = M - x1``.  With ``w = theta/(span - theta)``
    the density of ``w`` is a two-part mixture of inverse Gaussians.
    """
    theta = np.empty(span.size)
    at_end = fall <= 0
    at_start = (rise <= 0) & ~at_end
    theta[at_end] = span[at_end]
    theta[at_start] = 0.0
    mid = ~(at_end | at_start)
    if mid.any():
        s, r, f = span[mid], rise[mid], fall[mid]
        A = f * f / (sigma2 * s)
        B = r * r / (sigma2 * s)
        sa, sb = np.sqrt(A), np.sqrt(B)
        first = rng.random(s.size) < sa / (sa + sb)
        w = np.empty(s.size)
        if first.any():
            w[first] = rng.wald(sb[first] / sa[first], B[first])
        if (~first).any():
            w[~first] = 1.0 / rng.wald(sa[~first] / sb[~first], A[~first])
        theta[mid] = s * w / (1.0 + w)
    return theta


def _simulate_block(model: PhLevyModel, q: float, level: float, n: int, rng: np.random.Generator, bridge: bool):
    snc = model.minus
    c, s2 = snc.drift, snc.sigma2
    lam_up, lam_dn = model.up_rate, snc.down_rate
    lam = lam_up + lam_dn
    up = _PhSampler(model.up_law) if lam_up > 0 else None
    dn = _PhSampler(snc.down_law) if lam_dn > 0 else None

    horizon = rng.exponential(1.0 / q, n)
    t = np.zeros(n)
    x = np.zeros(n)
    M = np.zeros(n)
    G = np.zeros(n)
    cause = np.full(n, -1, dtype=np.int64)
    over = np.full(n, np.nan)
    # the segment holding the running max, for the argmax draw at the end
    seg_start = np.zeros(n)
    seg_len = np.zeros(n)
    seg_rise = np.zeros(n)
    seg_fall = np.zeros(n)
    from_seg = np.zeros(n, dtype=bool)

    active = np.arange(n)
    while active.size:
        na = active.size
        remaining = horizon[active] - t[active]
        dt = rng.exponential(1.0 / lam, na) if lam > 0 else np.full(na, np.inf)
        if bridge:
            seg = np.minimum(dt, remaining)
        else:
            seg = np.minimum(np.minimum(dt, remaining), GRID_STEP)
        x0 = x[active]
        x1 = x0 + c * seg
        if s2 > 0:
            x1 = x1 + np.sqrt(s2 * seg) * rng.standard_normal(na)
            if bridge:
                u = 1.0 - rng.random(na)
                mseg = 0.5 * (x0 + x1 + np.sqrt((x1 - x0) ** 2 - 2.0 * s2 * seg * np.log(u)))
            else:
                mseg = np.maximum(x0, x1)
        else:
            mseg = np.maximum(x0, x1)
        better = mseg > M[active]
        if better.any():
            idx = active[better]
            M[idx] = mseg[better]
            seg_start[idx] = t[idx]
            seg_len[idx] = seg[better]
            seg_rise[idx] = mseg[better] - x0[better]
            seg_fall[idx] = mseg[better] - x1[better]
            from_seg[idx] = True
        creep = (cause[active] < 0) & (mseg > level)
        cause[active[creep]] = 0
        over[active[creep]] = 0.0
        x[active] = x1
        t[active] += seg

        # the segment ends at a jump epoch unless the horizon (or a grid step) came first
        jumped = (dt <= seg) & (dt < remaining)
        jidx = active[jumped]
        if jidx.size:
            is_up = rng.random(jidx.size) < lam_up / lam
            uidx = jidx[is_up]
            if uidx.size:
                need = np.where(cause[uidx] < 0, level - x[uidx], np.inf)
                size, phase = up.sample(rng, need)
                x[uidx] += size
                hit = phase > 0
                cause[uidx[hit]] = phase[hit]
                over[uidx[hit]] = x[uidx[hit]] - level
                newmax = x[uidx] > M[uidx]
                k = uidx[newmax]
                M[k] = x[k]
                G[k] = t[k]
                from_seg[k] = False
            didx = jidx[~is_up]
            if didx.size:
                size, _ = dn.sample(rng, np.full(didx.size, np.inf))
                x[didx] -= size
        done = seg >= remaining
        t[active[done]] = horizon[active[done]]
        active = active[~done]

    if s2 > 0 and from_seg.any():
        k = np.flatnonzero(from_seg)
        if bridge:
            G[k] = seg_start[k] + _argmax_in_bridge(rng, seg_len[k], seg_rise[k], seg_fall[k], s2)
        else:
            G[k] = seg_start[k] + np.where(seg_fall[k] <= 0, seg_len[k], 0.0)
    elif from_seg.any():
        k = np.flatnonzero(from_seg)
        G[k] = seg_start[k] + np.where(seg_fall[k] <= 0, seg_len[k], 0.0)
    return horizon, M, G, x, cause, over


def simulate_paths(model: PhLevyModel, cfg: SimConfig) -> PathSample:
    """Run the engine over ``cfg.paths`` paths."""
    nblocks = -(-cfg.paths // BLOCK_SIZE)
    sizes = [min(BLOCK_SIZE, cfg.paths - i * BLOCK_SIZE) for i in range(nblocks)]

    def run(i):
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, i]))
        return _simulate_block(model, cfg.q_rate, cfg.level, sizes[i], rng, cfg.bridge_sampling)

    workers = min(_threads(), nblocks)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, range(nblocks)))
    else:
        parts = [run(i) for i in range(nblocks)]
    cols = [np.concatenate([p[j] for p in parts]) for j in range(6)]
    notes = []
    if not cfg.bridge_sampling and model.minus.sigma2 > 0:
        notes.append(f"grid monitoring with step {GRID_STEP}: crossing probabilities are biased low")
    return PathSample(*cols, seed=cfg.seed, level=cfg.level, bridge_sampling=cfg.bridge_sampling, notes=notes)


def simulate_first_passage(model: PhLevyModel, cfg: SimConfig, sample: PathSample | None = None) -> dict:
    """First passage over ``cfg.level`` before ``e(q)``.

    ``creepFraction`` is the unconditional ``P(creep, T_plus < e(q))``.
    ``phaseFrequencies`` lines up with :func:`ladder_phase` components.
    """
    s = sample if sample is not None else simulate_paths(model, cfg)
    crossed = s.crossed
    m = model.m_up if model.up_rate > 0 else 0
    # aligned with ladder_phase: phase 0 exists only when creeping is possible
    first = 0 if model.path_class is PathClass.GENERAL else 1
    phases = [SimEstimate.from_samples(s.cause == j, cfg.seed) for j in range(first, m + 1)]
    return {
        "pCross": SimEstimate.from_samples(crossed, cfg.seed),
        "creepFraction": SimEstimate.from_samples(s.cause == 0, cfg.seed),
        "phaseFrequencies": phases,
        "overshootSamples": s.overshoot[crossed].tolist(),
        "biased": not cfg.bridge_sampling and model.minus.sigma2 > 0,
    }


@dataclass
class EmpiricalSup:
    samples: np.ndarray
    seed: int

    def tail(self, k: float) -> SimEstimate:
        return SimEstimate.from_samples(self.samples > k, self.seed)

    def atom0(self) -> SimEstimate:
        return SimEstimate.from_samples(self.samples <= 0, self.seed)

    def lst(self, b: float) -> SimEstimate:
        return SimEstimate.from_samples(np.exp(-b * self.samples), self.seed)


def simulate_sup(model: PhLevyModel, cfg: SimConfig, sample: PathSample | None = None) -> EmpiricalSup:
    s = sample if sample is not None else simulate_paths(model, cfg)
    return EmpiricalSup(np.sort(s.sup), cfg.seed)


def simulate_wh4(model: PhLevyModel, cfg: SimConfig, a_arg: float, b: float, sample: PathSample | None = None) -> SimEstimate:
    """Estimate ``E[exp(-a (e(q) - G) - b (M - X))]`` at the horizon."""
    if a_arg < 0 or b < 0:
        raise ValueError("a_arg and b must be nonnegative")
    s = sample if sample is not None else simulate_paths(model, cfg)
    vals = np.exp(-a_arg * (s.horizon - s.argmax) - b * (s.sup - s.x_end))
    return SimEstimate.from_samples(vals, cfg.seed)


def simulate_minus_infimum(snc: SpectrallyNegativeComponent, q: float, paths: int, seed: int) -> np.ndarray:
    """Samples of ``-inf_{t <= e(q)} X_minus(t)`` via the supremum of ``-X_minus``."""
    mirror = PhLevyModel.build(
        drift=-snc.drift, sigma2=snc.sigma2, up_rate=snc.down_rate, up_law=snc.down_law
    ) if snc.down_rate > 0 else PhLevyModel.build(drift=-snc.drift, sigma2=snc.sigma2)
    return simulate_paths(mirror, SimConfig(paths, seed, q)).sup


def write_samples_csv(path, sample: PathSample) -> None:
    """Write ``path index, crossed, cause, overshoot`` rows."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["path", "crossed", "cause", "overshoot"])
        for i in range(sample.n):
            c = int(sample.cause[i])
            cause = "none" if c < 0 else ("creep" if c == 0 else f"jump:{c}")
            o = "" if c < 0 else repr(float(sample.overshoot[i]))
            w.writerow([i, int(c >= 0), cause, o])
