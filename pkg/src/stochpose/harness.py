"""Monte-Carlo driver: simulate, filter, record traces and summarize.

All seeds of a run advance together as one batch, and every requested
filter variant consumes the same measurement frame at each step, so the
variants see identical noise.  Each seed owns its own noise substreams,
which makes a seed's trace independent of which other seeds share the
batch.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import InitialEstimate, PreconditionError, Scenario, steps_for
from .filters import (
    FilterState,
    Gains,
    build_direct_matrices,
    check_direct_gains,
    direct_errors,
    direct_step,
    direct_step_quat,
    semi_direct_errors,
    semi_direct_step,
    semi_direct_step_quat,
)
from .liegroup import angle_axis, euler_zyx, mm, norm_dist_I, rot_to_quat, transpose
from .sim import TRUTH_PROFILES, Simulator, check_assumption1
from .wahba import reconstruct_pose

FILTERS = ("semi-direct", "direct")
CHARTS = ("matrix", "quaternion")

COLUMNS = (
    "t",
    "roll", "pitch", "yaw",
    "px", "py", "pz",
    "roll_hat", "pitch_hat", "yaw_hat",
    "px_hat", "py_hat", "pz_hat",
    "err_R", "err_P",
    "b_hat_wx", "b_hat_wy", "b_hat_wz",
    "b_hat_vx", "b_hat_vy", "b_hat_vz",
    "sigma_hat_x", "sigma_hat_y", "sigma_hat_z",
    "filter_e_R", "filter_e_P", "clamped", "gimbal_lock",
)  # fmt: skip
COL = {name: i for i, name in enumerate(COLUMNS)}


class DivergenceError(ValueError):
    """An estimator state became non-finite, usually because dt is too coarse."""


@dataclass(frozen=True)
class RunConfig:
    """What to run: a scenario plus selections and overrides.

    ``gains``, ``initial`` and ``seeds`` default to the scenario's values;
    ``dt_override`` replaces the scenario step size.
    """

    scenario: Scenario
    filters: tuple = FILTERS
    charts: tuple = ("matrix",)
    seeds: tuple = ()
    gains: Gains | None = None
    initial: InitialEstimate | None = None
    dt_override: float | None = None
    out_dir: Path | None = None

    def __post_init__(self):
        if not self.filters or any(f not in FILTERS for f in self.filters):
            raise ValueError(f"filters must be a non-empty subset of {FILTERS}")
        if not self.charts or any(c not in CHARTS for c in self.charts):
            raise ValueError(f"charts must be a non-empty subset of {CHARTS}")
        if self.dt_override is not None and not self.dt_override > 0:
            raise ValueError("dt override must be positive")
        if not self.run_seeds:
            raise ValueError("seed list is empty")

    @property
    def run_seeds(self) -> tuple:
        return tuple(self.seeds) if self.seeds else tuple(self.scenario.seeds)

    @property
    def run_gains(self) -> Gains:
        return self.gains or self.scenario.gains

    @property
    def run_initial(self) -> InitialEstimate:
        return self.initial or self.scenario.initial

    @property
    def dt(self) -> float:
        return float(self.dt_override or self.scenario.dt)

    @property
    def n_steps(self) -> int:
        return steps_for(self.scenario.horizon, self.dt)

    @property
    def variants(self) -> list:
        return [(f, c) for f in self.filters for c in self.charts]


@dataclass
class RunTrace:
    """Recorded rows of one (seed, filter, chart) run; columns follow ``COLUMNS``."""

    seed: int
    filter: str
    chart: str
    data: np.ndarray
    dt: float = 0.0

    def __post_init__(self):
        if self.data.ndim != 2 or self.data.shape[1] != len(COLUMNS):
            raise ValueError(f"trace data must have shape (rows, {len(COLUMNS)})")

    def column(self, name: str) -> np.ndarray:
        return self.data[:, COL[name]]

    @property
    def t(self) -> np.ndarray:
        return self.column("t")

    @property
    def err_R(self) -> np.ndarray:
        return self.column("err_R")

    @property
    def err_P(self) -> np.ndarray:
        return self.column("err_P")

    @property
    def label(self) -> str:
        return f"seed{self.seed:04d}_{self.filter}_{self.chart}"


def euler_angles(r: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Roll, pitch, yaw in radians (intrinsic Z-Y-X) and the gimbal-lock flag."""
    return euler_zyx(r)


def initial_rotation(init: InitialEstimate) -> np.ndarray:
    axis = np.asarray(init.axis, dtype=float)
    return angle_axis(np.deg2rad(init.alpha_deg), axis / np.linalg.norm(axis))


def check_preconditions(scenario: Scenario, gains: Gains | None = None):
    """Raise :class:`PreconditionError` if the scene or gains are unusable.

    Returns the observability report on success.
    """
    report = check_assumption1(scenario.scene)
    if not report.passed:
        raise PreconditionError(f"observability assumption fails: {report.message}")
    sim = Simulator(scenario.scene, scenario.noise, scenario.dt, [0], TRUTH_PROFILES[scenario.truth_profile])
    try:
        check_direct_gains(gains or scenario.gains, build_direct_matrices(sim.frame()))
    except ValueError as exc:
        raise PreconditionError(str(exc)) from None
    return report


class _Variant:
    def __init__(self, kind, chart, r0, p0, batch):
        self.kind = kind
        self.chart = chart
        att = rot_to_quat(r0) if chart == "quaternion" else r0
        self.state = FilterState.initial(att, p0, batch)

    def step(self, frame, t_y, q_y, g, dt, mats, last):
        s = self.state
        if self.kind == "semi-direct":
            if last:
                return semi_direct_errors(s, t_y)
            if self.chart == "quaternion":
                self.state, err = semi_direct_step_quat(s, frame, q_y, t_y.pose.position, g, dt)
            else:
                self.state, err = semi_direct_step(s, frame, t_y, g, dt)
        else:
            if last:
                return direct_errors(s, frame, mats)
            fn = direct_step_quat if self.chart == "quaternion" else direct_step
            self.state, err = fn(s, frame, g, dt, mats)
        return err


def _finite(state) -> bool:
    return bool(np.isfinite(state.attitude).all() and np.isfinite(state.p_hat).all() and np.isfinite(state.b_hat).all())


def run_scenario(cfg: RunConfig) -> list[RunTrace]:
    """Simulate every requested seed and variant; traces sorted by (seed, filter, chart)."""
    sc = cfg.scenario
    check_preconditions(sc, cfg.run_gains)
    seeds = cfg.run_seeds
    batch = len(seeds)
    dt = cfg.dt
    n = cfg.n_steps
    g = cfg.run_gains
    sim = Simulator(sc.scene, sc.noise, dt, seeds, TRUTH_PROFILES[sc.truth_profile])
    r0 = initial_rotation(cfg.run_initial)
    p0 = np.asarray(cfg.run_initial.p_hat, dtype=float)
    variants = [_Variant(f, c, r0, p0, batch) for f, c in cfg.variants]
    need_ty = "semi-direct" in cfg.filters
    need_qy = need_ty and "quaternion" in cfg.charts
    mats = None
    # one record block per variant: (seed, row, column)
    rec = [np.empty((batch, n + 1, len(COLUMNS))) for _ in variants]
    for k in range(n + 1):
        frame = sim.frame()
        last = k == n
        if mats is None:
            mats = build_direct_matrices(frame)
        truth = sim.truth.pose
        t_angles, _ = euler_angles(truth.rotation)
        t_y = reconstruct_pose(frame) if need_ty else None
        q_y = rot_to_quat(t_y.pose.rotation) if need_qy else None
        for v, block in zip(variants, rec):
            s = v.state
            r_hat = s.rotation
            angles, locked = euler_angles(r_hat)
            err = v.step(frame, t_y, q_y, g, dt, mats, last)
            row = block[:, k, :]
            row[:, 0] = k * dt
            row[:, 1:4] = t_angles
            row[:, 4:7] = truth.position
            row[:, 7:10] = angles
            row[:, 10:13] = s.p_hat
            row[:, 13] = norm_dist_I(mm(r_hat, transpose(truth.rotation)))
            row[:, 14] = np.linalg.norm(truth.position - s.p_hat, axis=-1)
            row[:, 15:21] = s.b_hat
            row[:, 21:24] = s.sigma_hat
            row[:, 24] = err.e_R
            row[:, 25] = np.linalg.norm(err.e_P, axis=-1)
            row[:, 26] = err.clamped
            row[:, 27] = locked
            if not last and not _finite(v.state):
                raise DivergenceError(
                    f"{v.kind}/{v.chart} estimator diverged at t = {k * dt:g} s; try a smaller dt"
                )
        if not last:
            sim.advance()
    traces = [
        RunTrace(seed, v.kind, v.chart, block[b], dt)
        for v, block in zip(variants, rec)
        for b, seed in enumerate(seeds)
    ]
    return sorted(traces, key=lambda tr: (tr.seed, FILTERS.index(tr.filter), CHARTS.index(tr.chart)))


# -- statistics -------------------------------------------------------------------


@dataclass(frozen=True)
class SeriesStats:
    mean: float
    std: float


@dataclass(frozen=True)
class WindowStats:
    """Window means and population STDs of the attitude and position errors.

    ``per_seed`` maps seed to ``(err_R stats, err_P stats)``.  The pooled
    mean is the count-weighted mean of the per-seed means; the pooled STD is
    taken over all in-window rows of all seeds.
    """

    t0: float
    t1: float
    filter: str
    chart: str
    per_seed: dict
    err_R: SeriesStats
    err_P: SeriesStats
    rows: int = 0

    def as_dict(self) -> dict:
        return {
            "window": [self.t0, self.t1],
            "filter": self.filter,
            "chart": self.chart,
            "rows_per_seed": self.rows,
            "pooled": {
                "err_R": {"mean": self.err_R.mean, "std": self.err_R.std},
                "err_P": {"mean": self.err_P.mean, "std": self.err_P.std},
            },
            "per_seed": {
                str(seed): {
                    "err_R": {"mean": r.mean, "std": r.std},
                    "err_P": {"mean": p.mean, "std": p.std},
                }
                for seed, (r, p) in sorted(self.per_seed.items())
            },
        }


def _window_mask(t: np.ndarray, t0: float, t1: float) -> np.ndarray:
    eps = 1e-9 * max(1.0, abs(t1))
    return (t >= t0 - eps) & (t <= t1 + eps)


def window_stats(traces, t0: float, t1: float) -> WindowStats:
    """Statistics of ``err_R`` and ``err_P`` over ``t0 <= t <= t1``.

    All traces must belong to one (filter, chart) pair.  STDs divide by the
    number of rows (population convention).  Raises ``ValueError`` for an
    empty trace list, mixed variants or an empty window.
    """
    traces = list(traces)
    if not traces:
        raise ValueError("no traces given")
    if not t0 < t1:
        raise ValueError("window needs t0 < t1")
    kinds = {(tr.filter, tr.chart) for tr in traces}
    if len(kinds) != 1:
        raise ValueError(f"traces mix variants {sorted(kinds)}")
    per_seed = {}
    cols_r, cols_p, counts, means_r, means_p = [], [], [], [], []
    for tr in traces:
        mask = _window_mask(tr.t, t0, t1)
        if not mask.any():
            raise ValueError(f"window [{t0}, {t1}] holds no rows of {tr.label}")
        er, ep = tr.err_R[mask], tr.err_P[mask]
        per_seed[tr.seed] = (SeriesStats(float(er.mean()), float(er.std())), SeriesStats(float(ep.mean()), float(ep.std())))
        cols_r.append(er)
        cols_p.append(ep)
        counts.append(er.size)
        means_r.append(er.mean())
        means_p.append(ep.mean())
    w = np.asarray(counts, dtype=float) / sum(counts)
    all_r, all_p = np.concatenate(cols_r), np.concatenate(cols_p)
    filt, chart = kinds.pop()
    return WindowStats(
        t0=float(t0),
        t1=float(t1),
        filter=filt,
        chart=chart,
        per_seed=per_seed,
        err_R=SeriesStats(float(np.dot(w, means_r)), float(all_r.std())),
        err_P=SeriesStats(float(np.dot(w, means_p)), float(all_p.std())),
        rows=int(counts[0]) if len(set(counts)) == 1 else -1,
    )


def group_traces(traces) -> dict:
    """Traces grouped by ``(filter, chart)`` in canonical order."""
    out: dict = {}
    for tr in traces:
        out.setdefault((tr.filter, tr.chart), []).append(tr)
    return dict(sorted(out.items(), key=lambda kv: (FILTERS.index(kv[0][0]), CHARTS.index(kv[0][1]))))


# -- output -------------------------------------------------------------------------


def emit_csv(trace: RunTrace, out_dir) -> Path:
    """Write one trace as ``<label>.csv`` with a header row and 17 significant digits."""
    if trace.data.shape[0] == 0:
        raise ValueError("refusing to write an empty trace")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{trace.label}.csv"
    np.savetxt(path, trace.data, fmt="%.17g", delimiter=",", header=",".join(COLUMNS), comments="")
    return path


_LABEL = {"semi-direct": "Stochastic (semi-direct)", "direct": "Stochastic (direct)"}


def read_csv(path) -> RunTrace:
    """Load a trace written by :func:`emit_csv`; the variant comes from the file name."""
    path = Path(path)
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    if tuple(header) != COLUMNS:
        raise ValueError(f"{path}: unexpected column header")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    stem = path.stem
    try:
        seed_part, filt, chart = stem.split("_")
        seed = int(seed_part.removeprefix("seed"))
    except ValueError:
        raise ValueError(f"{path}: file name is not <seed>_<filter>_<chart>.csv") from None
    if filt not in FILTERS or chart not in CHARTS:
        raise ValueError(f"{path}: unknown variant {filt}/{chart}")
    dt = float(data[1, 0] - data[0, 0]) if data.shape[0] > 1 else 0.0
    return RunTrace(seed, filt, chart, data, dt)


def format_table(stats: list) -> str:
    """Mean/STD table with one column group per (filter, chart)."""
    if not stats:
        raise ValueError("no statistics to format")
    t0, t1 = stats[0].t0, stats[0].t1
    heads = [f"{_LABEL[s.filter]} [{s.chart}]" for s in stats]
    width = max(28, *(len(h) + 2 for h in heads))
    lines = [
        f"Output data over the period ({t0:g}-{t1:g} sec); STD uses the population convention (divide by N)",
        "Estimator".ljust(10) + "".join(h.center(width) for h in heads),
        "".ljust(10) + "".join(f"{'||R~||_I':>12}{'||P-P^||_2':>14}".center(width) for _ in stats),
    ]
    for label, pick in (("Mean", "mean"), ("STD", "std")):
        cells = "".join(
            f"{getattr(s.err_R, pick):>12.4g}{getattr(s.err_P, pick):>14.4g}".center(width) for s in stats
        )
        lines.append(label.ljust(10) + cells)
    return "\n".join(lines)


def emit_report(stats: list, out_dir, meta: dict | None = None) -> tuple[Path, Path]:
    """Write ``report.txt`` (human table) and ``summary.json`` (machine-readable)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    meta = dict(meta or {})
    txt = out_dir / "report.txt"
    head = [f"{k}: {v}" for k, v in meta.items()]
    txt.write_text("\n".join(head + ["", format_table(stats), ""]))
    js = out_dir / "summary.json"
    js.write_text(json.dumps({"meta": meta, "stats": [s.as_dict() for s in stats]}, indent=2, sort_keys=True) + "\n")
    return txt, js


def emit_plots(trace: RunTrace, out_dir) -> list[Path]:
    """Euler angles, positions and error norms of one trace as PNG files."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    t = trace.t
    paths = []

    fig, axes = plt.subplots(3, 1, sharex=True, figsize=(7, 6))
    for ax, name in zip(axes, ("roll", "pitch", "yaw")):
        ax.plot(t, np.rad2deg(trace.column(name)), "k-", label="true")
        ax.plot(t, np.rad2deg(trace.column(name + "_hat")), "r--", label="estimate")
        ax.set_ylabel(f"{name} (deg)")
    axes[0].legend(loc="upper right")
    axes[-1].set_xlabel("time (s)")
    paths.append(_save(fig, out_dir / f"{trace.label}_euler.png", plt))

    fig, axes = plt.subplots(3, 1, sharex=True, figsize=(7, 6))
    for ax, name in zip(axes, ("px", "py", "pz")):
        ax.plot(t, trace.column(name), "k-", label="true")
        ax.plot(t, trace.column(name + "_hat"), "b--", label="estimate")
        ax.set_ylabel(f"{name} (m)")
    axes[0].legend(loc="upper right")
    axes[-1].set_xlabel("time (s)")
    paths.append(_save(fig, out_dir / f"{trace.label}_position.png", plt))

    fig, axes = plt.subplots(2, 1, sharex=True, figsize=(7, 5))
    axes[0].plot(t, trace.err_R)
    axes[0].set_ylabel("||R~||_I")
    axes[1].plot(t, trace.err_P)
    axes[1].set_ylabel("||P - P^|| (m)")
    axes[1].set_xlabel("time (s)")
    paths.append(_save(fig, out_dir / f"{trace.label}_errors.png", plt))
    return paths


def _save(fig, path, plt) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


@dataclass
class RunResult:
    traces: list
    stats: list = field(default_factory=list)
    files: list = field(default_factory=list)


def execute(cfg: RunConfig, write_csv: bool = True, plots: bool = False) -> RunResult:
    """Run, summarize over the scenario window and write outputs to ``cfg.out_dir``."""
    traces = run_scenario(cfg)
    t0, t1 = cfg.scenario.window
    stats = [window_stats(group, t0, t1) for group in group_traces(traces).values()]
    result = RunResult(traces, stats)
    if cfg.out_dir is not None:
        if write_csv:
            result.files += [emit_csv(tr, cfg.out_dir) for tr in traces]
        meta = {
            "scenario": cfg.scenario.name,
            "dt": cfg.dt,
            "horizon": cfg.scenario.horizon,
            "seeds": ",".join(str(s) for s in cfg.run_seeds),
        }
        result.files += list(emit_report(stats, cfg.out_dir, meta))
        if plots:
            for tr in traces:
                result.files += emit_plots(tr, cfg.out_dir)
    return result
