"""Scenario files: a versioned INI schema with line-level diagnostics.

A scenario file has the sections below (``schema_version = 1``).  Vectors
are written as comma-separated numbers and lists of vectors separate rows
with ``;``.  Comments start with ``#``.

``[scenario]``
    ``schema_version``, ``name``, ``truth_profile`` (``paper_sec5`` or
    ``static``), ``dt`` (s), ``horizon`` (s), ``noise_scaling``
    (``per_sample`` or ``sqrt_dt``).
``[velocity]``
    ``b_omega``, ``b_v``, ``std_omega``, ``std_v``.
``[vectors]``
    ``inertial`` (one row per direction; with two rows the cross product is
    appended), ``bias`` (one row per configured direction), ``std``,
    ``weights`` (one per direction after augmentation).
``[landmarks]``
    ``positions``, ``bias``, ``std``, ``weights``.
``[initial]``
    ``alpha_deg``, ``axis``, ``p_hat``: the estimate starts at
    ``angle_axis(alpha, axis/|axis|)`` and ``p_hat``.
``[gains]`` (optional)
    ``k_w``, ``gamma_b``, ``gamma_sigma``, ``k_b``, ``k_sigma``, ``varrho``.
``[stats]`` (optional)
    ``window``: start and end of the statistics window in seconds.
``[run]`` (optional)
    ``seeds``: e.g. ``1-20`` or ``3, 7, 11``.
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .filters import Gains
from .sim import TRUTH_PROFILES, NoiseModel, Scene

SCHEMA_VERSION = 1
SCENARIO_DIR = Path(__file__).resolve().parent / "scenarios"


class ConfigError(ValueError):
    """Malformed or inconsistent scenario file."""


class PreconditionError(ValueError):
    """The scenario violates an observability or gain precondition."""


@dataclass(frozen=True)
class InitialEstimate:
    alpha_deg: float = 0.0
    axis: tuple = (0.0, 0.0, 1.0)
    p_hat: tuple = (0.0, 0.0, 0.0)


@dataclass(frozen=True)
class Scenario:
    name: str
    scene: Scene
    noise: NoiseModel
    dt: float
    horizon: float
    truth_profile: str = "paper_sec5"
    initial: InitialEstimate = field(default_factory=InitialEstimate)
    gains: Gains = field(default_factory=Gains)
    window: tuple = (8.0, 25.0)
    seeds: tuple = (1,)
    source: str = "<memory>"

    @property
    def n_steps(self) -> int:
        return steps_for(self.horizon, self.dt)


def steps_for(horizon: float, dt: float) -> int:
    n = int(round(horizon / dt))
    if n < 1 or abs(n * dt - horizon) > 1e-9 * max(1.0, horizon):
        raise ConfigError(f"horizon {horizon} is not a whole number of steps of dt {dt}")
    return n


def parse_seeds(text: str) -> tuple[int, ...]:
    """Parse ``"1-20"``, ``"4"`` or ``"1, 3, 5-7"`` into a sorted tuple."""
    seeds: set[int] = set()
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        m = re.fullmatch(r"(\d+)\s*-\s*(\d+)", part)
        if m:
            lo, hi = int(m.group(1)), int(m.group(2))
            if hi < lo:
                raise ValueError(f"empty seed range {part!r}")
            seeds.update(range(lo, hi + 1))
        elif re.fullmatch(r"\d+", part):
            seeds.add(int(part))
        else:
            raise ValueError(f"bad seed token {part!r}")
    if not seeds:
        raise ValueError("seed list is empty")
    return tuple(sorted(seeds))


def _line_index(text: str) -> dict:
    """Map ``(section, key)`` and ``(section, None)`` to 1-based line numbers."""
    index = {}
    section = None
    for n, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if stripped.startswith("[") and stripped.endswith("]"):
            section = stripped[1:-1].strip()
            index[(section, None)] = n
        elif section and "=" in stripped and not stripped.startswith("#"):
            index[(section, stripped.split("=", 1)[0].strip().lower())] = n
    return index


class _Reader:
    def __init__(self, parser: configparser.ConfigParser, lines: dict, source: str):
        self.p = parser
        self.lines = lines
        self.source = source

    def where(self, section, key=None) -> str:
        n = self.lines.get((section, key)) or self.lines.get((section, None))
        loc = f"{self.source}:{n}" if n else self.source
        return f"{loc}: [{section}] {key}" if key else f"{loc}: [{section}]"

    def fail(self, section, key, msg):
        raise ConfigError(f"{self.where(section, key)}: {msg}")

    def raw(self, section, key, default=None):
        if not self.p.has_section(section):
            if default is not None:
                return default
            raise ConfigError(f"{self.source}: missing section [{section}]")
        if not self.p.has_option(section, key):
            if default is not None:
                return default
            self.fail(section, key, "missing field")
        return self.p.get(section, key)

    def number(self, section, key, default=None, positive=False, nonneg=False) -> float:
        text = self.raw(section, key, None if default is None else str(default))
        try:
            x = float(text)
        except ValueError:
            self.fail(section, key, f"expected a number, got {text!r}")
        if not np.isfinite(x):
            self.fail(section, key, "value must be finite")
        if positive and not x > 0:
            self.fail(section, key, "value must be positive")
        if nonneg and x < 0:
            self.fail(section, key, "value must be non-negative")
        return x

    def rows(self, section, key, width=3, default=None) -> np.ndarray:
        text = self.raw(section, key, default)
        out = []
        for row in str(text).split(";"):
            row = row.strip()
            if not row:
                continue
            try:
                vals = [float(v) for v in row.split(",")]
            except ValueError:
                self.fail(section, key, f"expected comma-separated numbers, got {row!r}")
            if width is not None and len(vals) != width:
                self.fail(section, key, f"expected {width} entries per row, got {len(vals)}")
            if not all(np.isfinite(vals)):
                self.fail(section, key, "values must be finite")
            out.append(vals)
        if not out:
            self.fail(section, key, "no values given")
        return np.asarray(out, dtype=float)

    def vec(self, section, key, n=3, default=None) -> np.ndarray:
        r = self.rows(section, key, width=None, default=default)
        if r.shape[0] != 1 or r.shape[1] != n:
            self.fail(section, key, f"expected {n} comma-separated numbers")
        return r[0]


def parse_scenario(text: str, source: str = "<string>") -> Scenario:
    """Build a :class:`Scenario` from the text of a scenario file.

    Raises :class:`ConfigError` for syntax, type and consistency problems
    (the message names the file, line, section and field) and
    :class:`PreconditionError` for gain values the estimators reject.
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    rd = _Reader(parser, _line_index(text), source)

    version = rd.raw("scenario", "schema_version")
    if version.strip() != str(SCHEMA_VERSION):
        rd.fail("scenario", "schema_version", f"unsupported version {version!r} (expected {SCHEMA_VERSION})")
    name = rd.raw("scenario", "name").strip()
    profile = rd.raw("scenario", "truth_profile", "paper_sec5").strip()
    if profile not in TRUTH_PROFILES:
        rd.fail("scenario", "truth_profile", f"unknown profile {profile!r}; choose from {sorted(TRUTH_PROFILES)}")
    dt = rd.number("scenario", "dt", positive=True)
    horizon = rd.number("scenario", "horizon", positive=True)
    try:
        steps_for(horizon, dt)
    except ConfigError as exc:
        rd.fail("scenario", "horizon", str(exc))
    scaling = rd.raw("scenario", "noise_scaling", "per_sample").strip()
    if scaling not in ("per_sample", "sqrt_dt"):
        rd.fail("scenario", "noise_scaling", f"expected per_sample or sqrt_dt, got {scaling!r}")

    inertial = rd.rows("vectors", "inertial")
    n_raw = inertial.shape[0]
    if np.any(np.linalg.norm(inertial, axis=-1) == 0):
        rd.fail("vectors", "inertial", "zero-length direction")
    v_bias = rd.rows("vectors", "bias", default=";".join(["0,0,0"] * n_raw))
    if v_bias.shape[0] != n_raw:
        rd.fail("vectors", "bias", f"expected {n_raw} rows to match [vectors] inertial, got {v_bias.shape[0]}")
    n_vec = n_raw + 1 if n_raw == 2 else n_raw
    w_r = rd.vec("vectors", "weights", n=n_vec, default=",".join(["1"] * n_vec))
    landmarks = rd.rows("landmarks", "positions")
    n_l = landmarks.shape[0]
    l_bias = rd.rows("landmarks", "bias", default=";".join(["0,0,0"] * n_l))
    if l_bias.shape[0] != n_l:
        rd.fail("landmarks", "bias", f"expected {n_l} rows to match [landmarks] positions, got {l_bias.shape[0]}")
    w_l = rd.vec("landmarks", "weights", n=n_l, default=",".join(["1"] * n_l))

    noise = NoiseModel(
        b_Omega=rd.vec("velocity", "b_omega", default="0,0,0"),
        b_V=rd.vec("velocity", "b_v", default="0,0,0"),
        std_Omega=rd.vec("velocity", "std_omega", default="0,0,0"),
        std_V=rd.vec("velocity", "std_v", default="0,0,0"),
        vector_bias=v_bias,
        vector_std=rd.number("vectors", "std", default=0.0, nonneg=True),
        landmark_bias=l_bias,
        landmark_std=rd.number("landmarks", "std", default=0.0, nonneg=True),
        noise_scaling=scaling,
    )
    for key in ("std_omega", "std_v"):
        if np.any(rd.vec("velocity", key, default="0,0,0") < 0):
            rd.fail("velocity", key, "STDs must be non-negative")

    axis = rd.vec("initial", "axis", default="0,0,1")
    if np.linalg.norm(axis) == 0:
        rd.fail("initial", "axis", "rotation axis must be nonzero")
    initial = InitialEstimate(
        alpha_deg=rd.number("initial", "alpha_deg", default=0.0),
        axis=tuple(axis),
        p_hat=tuple(rd.vec("initial", "p_hat", default="0,0,0")),
    )

    defaults = Gains()
    gain_values = {
        k: rd.number("gains", k, default=getattr(defaults, k))
        for k in ("k_w", "gamma_b", "gamma_sigma", "k_b", "k_sigma", "varrho")
    }
    try:
        gains = Gains(**gain_values)
    except ValueError as exc:
        raise PreconditionError(f"{rd.where('gains')}: {exc}") from None

    window = rd.vec("stats", "window", n=2, default=f"0,{horizon}")
    if not (0 <= window[0] < window[1] <= horizon + 1e-12):
        rd.fail("stats", "window", f"need 0 <= t0 < t1 <= horizon ({horizon})")
    try:
        seeds = parse_seeds(rd.raw("run", "seeds", "1"))
    except ValueError as exc:
        rd.fail("run", "seeds", str(exc))

    scene = Scene(inertial, landmarks, w_r, w_l)
    return Scenario(
        name=name,
        scene=scene,
        noise=noise,
        dt=dt,
        horizon=horizon,
        truth_profile=profile,
        initial=initial,
        gains=gains,
        window=(float(window[0]), float(window[1])),
        seeds=seeds,
        source=source,
    )


def resolve_scenario_path(name_or_path: str | Path) -> Path:
    """A path as given, or the name of a scenario shipped with the package."""
    p = Path(name_or_path)
    if p.exists():
        return p
    for candidate in (SCENARIO_DIR / p.name, SCENARIO_DIR / f"{p.name}.cfg"):
        if candidate.exists():
            return candidate
    raise ConfigError(f"scenario file not found: {name_or_path}")


def load_scenario(name_or_path: str | Path) -> Scenario:
    path = resolve_scenario_path(name_or_path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    return parse_scenario(text, source=str(path))
