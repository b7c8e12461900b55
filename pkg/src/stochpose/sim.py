"""Ground-truth trajectory and corrupted sensor synthesis."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .liegroup import Pose, cross, mm, mtv, mv, project_so3, skew

STREAMS = {"velocity": 0, "vectors": 1, "landmarks": 2}


@dataclass(frozen=True)
class Scene:
    """Known inertial references and their confidence weights.

    ``inertial_vectors`` holds the raw (unnormalized) directions as
    configured; when exactly two are given the cross product is appended
    during measurement synthesis, so ``weights_R`` must then have three
    entries.
    """

    inertial_vectors: np.ndarray
    landmarks: np.ndarray
    weights_R: np.ndarray
    weights_L: np.ndarray

    def __post_init__(self):
        for name in ("inertial_vectors", "landmarks", "weights_R", "weights_L"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))

    @property
    def augmented(self) -> bool:
        return self.inertial_vectors.shape[0] == 2

    @property
    def n_vectors(self) -> int:
        return self.inertial_vectors.shape[0] + (1 if self.augmented else 0)

    def normalized_inertial(self) -> np.ndarray:
        v = self.inertial_vectors
        if self.augmented:
            v = np.vstack([v, cross(v[0], v[1])])
        return v / np.linalg.norm(v, axis=-1, keepdims=True)


@dataclass(frozen=True)
class NoiseModel:
    """Constant biases and Gaussian noise STDs of every sensor channel.

    ``noise_scaling`` is ``"per_sample"`` (STDs are per-step discrete
    values) or ``"sqrt_dt"`` (velocity STDs are continuous intensities and
    are divided by ``sqrt(dt)``).
    """

    b_Omega: np.ndarray = field(default_factory=lambda: np.zeros(3))
    b_V: np.ndarray = field(default_factory=lambda: np.zeros(3))
    std_Omega: np.ndarray = field(default_factory=lambda: np.zeros(3))
    std_V: np.ndarray = field(default_factory=lambda: np.zeros(3))
    vector_bias: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    vector_std: float = 0.0
    landmark_bias: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    landmark_std: float = 0.0
    noise_scaling: str = "per_sample"

    def __post_init__(self):
        for name in ("b_Omega", "b_V", "std_Omega", "std_V"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).reshape(3))
        for name in ("vector_bias", "landmark_bias"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).reshape(-1, 3))
        stds = np.concatenate([self.std_Omega, self.std_V, [self.vector_std, self.landmark_std]])
        if np.any(stds < 0) or not np.all(np.isfinite(stds)):
            raise ValueError("noise STDs must be finite and non-negative")
        if self.noise_scaling not in ("per_sample", "sqrt_dt"):
            raise ValueError(f"unknown noise_scaling {self.noise_scaling!r}")

    @property
    def sigma(self) -> np.ndarray:
        """Upper bound of the angular-velocity noise variances."""
        return self.std_Omega**2

    @property
    def xi(self) -> np.ndarray:
        return self.std_V**2

    def velocity_stds(self, dt: float) -> tuple[np.ndarray, np.ndarray]:
        if self.noise_scaling == "sqrt_dt":
            return self.std_Omega / np.sqrt(dt), self.std_V / np.sqrt(dt)
        return self.std_Omega, self.std_V


@dataclass
class TruthState:
    pose: Pose
    t: float = 0.0


@dataclass(frozen=True)
class MeasurementFrame:
    """One time step of sensor data.

    Array fields may carry a leading batch axis (one entry per seed); the
    inertial references and weights are shared.
    """

    t: float
    omega_m: np.ndarray
    v_m: np.ndarray
    body_vectors: np.ndarray
    inertial_vectors: np.ndarray
    body_landmarks: np.ndarray
    inertial_landmarks: np.ndarray
    weights_R: np.ndarray
    weights_L: np.ndarray


def truth_velocity(t) -> tuple[np.ndarray, np.ndarray]:
    """Angular (rad/s) and translational (m/s) velocity of the reference run."""
    t = np.asarray(t, dtype=float)
    omega = np.stack(
        [np.sin(t / 2), 0.7 * np.sin(t / 4 + np.pi), 0.5 * np.sin(0.4 * t + np.pi / 3)], axis=-1
    )
    v = np.stack([np.sin(t / 5), 0.6 * np.sin((t + np.pi) / 2), np.sin(0.4 * t + np.pi / 4)], axis=-1)
    return omega, v


def static_velocity(t) -> tuple[np.ndarray, np.ndarray]:
    """Body at rest: zero angular and translational velocity."""
    shape = np.shape(t) + (3,)
    return np.zeros(shape), np.zeros(shape)


TRUTH_PROFILES = {"paper_sec5": truth_velocity, "static": static_velocity}


def integrate_truth(state: TruthState, dt: float, velocity=truth_velocity) -> TruthState:
    """Classical RK4 step of ``R' = R [Omega]x``, ``P' = R V`` then reprojection."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    t = state.t

    def f(r, tau):
        om, v = velocity(tau)
        return mm(r, skew(om)), mv(r, v)

    r0 = state.pose.rotation
    k1r, k1p = f(r0, t)
    k2r, k2p = f(r0 + 0.5 * dt * k1r, t + 0.5 * dt)
    k3r, k3p = f(r0 + 0.5 * dt * k2r, t + 0.5 * dt)
    k4r, k4p = f(r0 + dt * k3r, t + dt)
    r1 = r0 + dt / 6.0 * (k1r + 2 * k2r + 2 * k3r + k4r)
    p1 = state.pose.position + dt / 6.0 * (k1p + 2 * k2p + 2 * k3p + k4p)
    return TruthState(Pose(project_so3(r1), p1), t + dt)


def synth_velocity(omega, v, model: NoiseModel, rng, dt: float = 1e-3):
    """Biased, noisy angular and translational velocity measurements."""
    omega = np.asarray(omega, dtype=float)
    v = np.asarray(v, dtype=float)
    s_om, s_v = model.velocity_stds(dt)
    n_om = rng.standard_normal(omega.shape)
    n_v = rng.standard_normal(v.shape)
    return omega + model.b_Omega + s_om * n_om, v + model.b_V + s_v * n_v


def _normalize(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(n < 1e-9):
        raise ValueError("degenerate vector measurement (near-zero norm)")
    return v / n


def synth_vectors(rotation, scene: Scene, model: NoiseModel, rng):
    """Normalized body-frame and inertial-frame direction pairs.

    Returns ``(body, inertial)``; ``body`` carries the batch shape of
    ``rotation``.  With two configured vectors the cross product is appended
    to both frames before normalization.
    """
    rotation = np.asarray(rotation, dtype=float)
    vi = scene.inertial_vectors
    n = vi.shape[0]
    raw = mtv(rotation[..., None, :, :], vi)
    noise = rng.standard_normal(raw.shape)
    bias = model.vector_bias if model.vector_bias.shape[0] else np.zeros((n, 3))
    raw = raw + bias[:n] + model.vector_std * noise
    if scene.augmented:
        raw = np.concatenate([raw, cross(raw[..., 0, :], raw[..., 1, :])[..., None, :]], axis=-2)
    return _normalize(raw), scene.normalized_inertial()


def synth_landmarks(pose: Pose, scene: Scene, model: NoiseModel, rng) -> np.ndarray:
    """Body-frame landmark observations ``R^T (v - P) + b + w``."""
    if scene.landmarks.shape[0] < 1:
        raise ValueError("at least one landmark is required")
    rel = scene.landmarks - pose.position[..., None, :]
    raw = mtv(pose.rotation[..., None, :, :], rel)
    noise = rng.standard_normal(raw.shape)
    n = scene.landmarks.shape[0]
    bias = model.landmark_bias if model.landmark_bias.shape[0] else np.zeros((n, 3))
    return raw + bias[:n] + model.landmark_std * noise


def weighted_center(points, weights) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    weights = np.asarray(weights, dtype=float)
    total = weights.sum()
    if total == 0:
        raise ValueError("weights sum to zero")
    return np.einsum("i,...ij->...j", weights, points) / total


@dataclass(frozen=True)
class Assumption1Report:
    rank: int
    n_landmarks: int
    weights_ok: bool
    passed: bool
    message: str


def check_assumption1(scene: Scene, tol: float = 1e-9) -> Assumption1Report:
    """Diagnose whether the scene admits a unique pose."""
    vi = scene.inertial_vectors
    problems = []
    if scene.augmented:
        vi = np.vstack([vi, cross(vi[0], vi[1])])
    norms = np.linalg.norm(vi, axis=-1) if vi.shape[0] else np.zeros(0)
    if np.any(norms < tol):
        problems.append("zero-length or collinear inertial direction")
    keep = norms >= tol
    rank = int(np.linalg.matrix_rank(vi[keep] / norms[keep, None], tol=tol)) if keep.any() else 0
    if rank < 3:
        problems.append(f"inertial vector set has rank {rank} < 3")
    n_l = scene.landmarks.shape[0]
    if n_l < 1:
        problems.append("no landmarks")
    weights_ok = (
        scene.weights_R.shape[0] == scene.n_vectors
        and scene.weights_L.shape[0] == n_l
        and np.isclose(scene.weights_R.sum(), 3.0)
        and scene.weights_L.sum() != 0
        and np.all(scene.weights_R >= 0)
        and np.all(scene.weights_L >= 0)
    )
    if not weights_ok:
        problems.append("weights must be non-negative, match the vector counts, with sum(s_R) = 3 and sum(s_L) != 0")
    passed = not problems
    return Assumption1Report(rank, n_l, bool(weights_ok), passed, "ok" if passed else "; ".join(problems))


class _BatchNormal:
    """Standard-normal source that stacks independent per-seed generators.

    ``standard_normal(shape)`` expects ``shape[0]`` to equal the number of
    seeds; row ``b`` is drawn from generator ``b`` in the same order a lone
    generator would produce it.  Draws are buffered in chunks.
    """

    def __init__(self, gens: Sequence[np.random.Generator], chunk: int = 60000):
        self._gens = list(gens)
        self._chunk = chunk
        self._buf = np.empty((len(self._gens), 0))
        self._pos = 0

    def standard_normal(self, shape) -> np.ndarray:
        shape = tuple(shape)
        if shape[0] != len(self._gens):
            raise ValueError("leading dimension must equal the number of seeds")
        n = int(np.prod(shape[1:], dtype=int))
        if self._pos + n > self._buf.shape[1]:
            need = max(self._chunk, n)
            fresh = np.stack([g.standard_normal(need) for g in self._gens])
            self._buf = np.concatenate([self._buf[:, self._pos :], fresh], axis=1)
            self._pos = 0
        out = self._buf[:, self._pos : self._pos + n]
        self._pos += n
        return out.reshape(shape)


def make_rng(seed: int, stream: str) -> np.random.Generator:
    """Counter-based Philox generator for one named noise substream."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(STREAMS[stream],))
    return np.random.Generator(np.random.Philox(ss))


class Simulator:
    """Steps the true trajectory and emits measurement frames for a batch of seeds.

    All seeds share the deterministic truth; each seed owns three independent
    noise substreams (velocity, vectors, landmarks).
    """

    def __init__(self, scene: Scene, noise: NoiseModel, dt: float, seeds: Sequence[int], velocity=truth_velocity):
        if not seeds:
            raise ValueError("at least one seed is required")
        self.scene = scene
        self.noise = noise
        self.dt = float(dt)
        self.seeds = [int(s) for s in seeds]
        self.velocity = velocity
        self.step_index = 0
        self.truth = TruthState(Pose.identity(), 0.0)
        self._rng = {name: _BatchNormal([make_rng(s, name) for s in self.seeds]) for name in STREAMS}
        self._inertial = scene.normalized_inertial()

    def frame(self) -> MeasurementFrame:
        """Measurements at the current truth time (does not advance)."""
        b = len(self.seeds)
        pose = self.truth.pose
        om, v = self.velocity(self.truth.t)
        om_b = np.broadcast_to(om, (b, 3))
        v_b = np.broadcast_to(v, (b, 3))
        omega_m, v_m = synth_velocity(om_b, v_b, self.noise, self._rng["velocity"], self.dt)
        rot_b = np.broadcast_to(pose.rotation, (b, 3, 3))
        body, inertial = synth_vectors(rot_b, self.scene, self.noise, self._rng["vectors"])
        pose_b = Pose(rot_b, np.broadcast_to(pose.position, (b, 3)))
        landmarks = synth_landmarks(pose_b, self.scene, self.noise, self._rng["landmarks"])
        return MeasurementFrame(
            t=self.truth.t,
            omega_m=omega_m,
            v_m=v_m,
            body_vectors=body,
            inertial_vectors=inertial,
            body_landmarks=landmarks,
            inertial_landmarks=self.scene.landmarks,
            weights_R=self.scene.weights_R,
            weights_L=self.scene.weights_L,
        )

    def advance(self) -> TruthState:
        nxt = integrate_truth(self.truth, self.dt, self.velocity)
        self.step_index += 1
        # time is k * dt rather than a running sum, so rows line up exactly across runs
        self.truth = TruthState(nxt.pose, self.step_index * self.dt)
        return self.truth
