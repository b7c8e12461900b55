import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from stochpose.config import load_scenario  # noqa: E402
from stochpose.harness import RunConfig, run_scenario  # noqa: E402
from stochpose.liegroup import mtv, rotvec_to_rot  # noqa: E402
from stochpose.sim import MeasurementFrame  # noqa: E402

INERTIAL = np.array([[1.0, -1.0, 1.0], [0.0, 0.0, 1.0], [1.0, 1.0, 0.0]])
INERTIAL /= np.linalg.norm(INERTIAL, axis=-1, keepdims=True)
LANDMARKS = np.array([[0.5, np.sqrt(2), 1.0], [-1.0, 0.3, 2.0]])


def random_rotations(rng, n):
    """Rotations with angles spread over [0, pi) about uniform axes."""
    axes = rng.normal(size=(n, 3))
    axes /= np.linalg.norm(axes, axis=-1, keepdims=True)
    angles = rng.uniform(0.0, np.pi, size=n)
    return rotvec_to_rot(axes * angles[:, None])


def frame_for(rotation, position, inertial=INERTIAL, landmarks=LANDMARKS, w_r=(1, 1, 1), w_l=(1, 1), omega=None, v=None):
    """Noise-free measurement frame for a (possibly batched) true pose."""
    rotation = np.asarray(rotation, dtype=float)
    position = np.asarray(position, dtype=float)
    shape = position.shape
    rel = landmarks - position[..., None, :]
    return MeasurementFrame(
        t=0.0,
        omega_m=np.zeros(shape) if omega is None else omega,
        v_m=np.zeros(shape) if v is None else v,
        body_vectors=mtv(rotation[..., None, :, :], inertial),
        inertial_vectors=inertial,
        body_landmarks=mtv(rotation[..., None, :, :], rel),
        inertial_landmarks=landmarks,
        weights_R=np.asarray(w_r, dtype=float),
        weights_L=np.asarray(w_l, dtype=float),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def sec5():
    return load_scenario("paper_sec5")


class Sec5Runs:
    """Lazily computed 20-seed reference runs, one per (filter, dt), with wall time."""

    def __init__(self):
        self._cache = {}

    def get(self, kind, dt=None):
        key = (kind, dt)
        if key not in self._cache:
            cfg = RunConfig(load_scenario("paper_sec5"), filters=(kind,), dt_override=dt)
            t0 = time.perf_counter()
            traces = run_scenario(cfg)
            self._cache[key] = (traces, time.perf_counter() - t0)
        return self._cache[key]


@pytest.fixture(scope="session")
def sec5_runs():
    return Sec5Runs()


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[0][1:])):
            terminalreporter.write_line(line)
