import numpy as np
import pytest

from ladderkit.model import PhLevyModel
from ladderkit.phasetype import PhaseType, exponential

MC_SEED = 20261016

_ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record_criterion(number: int, ok: bool, detail: str) -> None:
    prev = _ACCEPTANCE.get(number)
    if prev is not None:
        ok = ok and prev[0]
        detail = prev[1] + "; " + detail
    _ACCEPTANCE[number] = (bool(ok), detail)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


def make_model_a(drift=0.0):
    return PhLevyModel.build(drift=drift, sigma2=1.0, up_rate=1.0, up_law=exponential(1.0))


def make_model_b():
    return PhLevyModel.build(drift=0.0, sigma2=0.0, down_rate=1.0, down_law=exponential(1.0), up_rate=1.0, up_law=exponential(1.0))


def make_bm(drift=0.0, sigma2=1.0):
    return PhLevyModel.build(drift=drift, sigma2=sigma2)


def random_ph(rng: np.random.Generator, m: int, scale=(0.5, 3.0)) -> PhaseType:
    """Random irreducible-ish phase-type law with ``m`` phases."""
    alpha = rng.dirichlet(np.ones(m))
    off = rng.uniform(0.0, 1.0, (m, m)) * (rng.random((m, m)) < 0.7)
    np.fill_diagonal(off, 0.0)
    exit_ = rng.uniform(*scale, m)
    T = off - np.diag(off.sum(axis=1) + exit_)
    return PhaseType(alpha, T)


def random_general_model(rng: np.random.Generator, m_up: int, down: bool | None = None) -> PhLevyModel:
    """Random model whose downward part is not a subordinator."""
    sigma2 = rng.uniform(0.2, 2.0)
    drift = rng.uniform(-1.0, 1.0)
    if down is None:
        down = rng.random() < 0.5
    down_rate, down_law = 0.0, None
    if down:
        down_rate = rng.uniform(0.2, 2.0)
        down_law = random_ph(rng, int(rng.integers(1, 3)))
    return PhLevyModel.build(drift, sigma2, down_rate, down_law, rng.uniform(0.2, 2.0), random_ph(rng, m_up))


@pytest.fixture
def model_a():
    return make_model_a()


@pytest.fixture
def model_b():
    return make_model_b()


@pytest.fixture
def bm():
    return make_bm()
