"""Error reports, robustness statistics, the smoothing ablation and plots."""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .diffusion import Checkpoint
from .errors import GridError, GuidanceInstability, NumericError
from .grid import Field, max_abs_error, relative_l2
from .problems import PdeProblem, Poisson
from .sampler import GuidanceConfig, SamplerTrace, physics_only_solve, resolve, sample_batch
from .solvers import reference_solution

FIELD_CMAP = "viridis"
ERROR_CMAP = "magma"


@dataclass
class CrossSection:
    """Profile along x at node column ``index`` (coordinate ``y``)."""

    index: int
    y: float
    x: np.ndarray
    predicted: np.ndarray
    reference: np.ndarray


@dataclass
class EvalReport:
    relative_l2: float
    max_abs_error: float
    error: np.ndarray
    section: CrossSection
    runtime_seconds: float | None = None
    config: dict = field(default_factory=dict)

    def row(self) -> dict:
        return {"relative_l2": self.relative_l2, "max_abs_error": self.max_abs_error,
                "section_index": self.section.index, "section_y": self.section.y,
                "runtime_seconds": "" if self.runtime_seconds is None else self.runtime_seconds}

    def to_csv(self) -> str:
        return _csv([self.row()])


def section_index(spec, y: float) -> int:
    """Nearest node column to ``y``; exact ties round up (y = 0.5 on 64 nodes -> 32)."""
    j = int(math.floor(y / spec.hy + 0.5))
    return min(max(j, 0), spec.ny - 1)


def default_section(p: PdeProblem | None, spec) -> int:
    if p is None or isinstance(p, Poisson):
        return section_index(spec, 0.5 * spec.ly)
    return spec.ny - 1


def evaluate(pred: Field, ref: Field, section: int | None = None, problem: PdeProblem | None = None,
             runtime_seconds: float | None = None, config: dict | None = None) -> EvalReport:
    """Full-field metrics plus one cross-section (column index ``section``)."""
    if pred.spec != ref.spec:
        raise GridError(f"grid mismatch: {pred.spec} vs {ref.spec}")
    spec = pred.spec
    j = default_section(problem, spec) if section is None else int(section)
    if not 0 <= j < spec.ny:
        raise GridError(f"section index {j} outside 0..{spec.ny - 1}")
    cs = CrossSection(j, j * spec.hy, spec.x(), pred.values[:, j].copy(), ref.values[:, j].copy())
    return EvalReport(relative_l2(pred, ref), max_abs_error(pred, ref),
                      np.abs(pred.values - ref.values), cs, runtime_seconds, dict(config or {}))


# --------------------------------------------------------------------------
# robustness

@dataclass
class RobustnessSummary:
    coefficient: float
    n_trials: int
    mean: float
    std: float
    values: list[float]
    failures: list[int] = field(default_factory=list)
    seconds: float = 0.0

    def row(self) -> dict:
        return {"coef": self.coefficient, "trials": self.n_trials, "mean_pct": self.mean,
                "std_pct": self.std, "failed": len(self.failures), "seconds": round(self.seconds, 3)}


def trial_seed(base_seed: int, i: int) -> int:
    """Independent stream for trial ``i``."""
    return int(np.random.SeedSequence([base_seed, i]).generate_state(1)[0])


def robustness(ckpt: Checkpoint | None, p: PdeProblem, cfg: GuidanceConfig, n_trials: int = 50,
               base_seed: int = 0, ref: Field | None = None, chunk: int = 10) -> RobustnessSummary:
    """Mean and sample standard deviation of percent relative L2 over seeded trials.

    Trials that blow up are listed in ``failures`` and left out of the statistics.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be positive")
    t0 = time.time()
    ref = ref or reference_solution(p)
    seeds = [trial_seed(base_seed, i) for i in range(n_trials)]
    values: list[float] = []
    failures: list[int] = []
    for start in range(0, n_trials, chunk):
        block = seeds[start:start + chunk]
        try:
            fields = _run(ckpt, p, cfg, block)
        except NumericError:
            fields = []
            for k, sd in enumerate(block):
                try:
                    fields.extend(_run(ckpt, p, cfg, [sd]))
                except NumericError:
                    failures.append(start + k)
                    fields.append(None)
        values.extend(100.0 * relative_l2(f, ref) for f in fields if f is not None)
    arr = np.array(values)
    mean = float(arr.mean()) if arr.size else float("nan")
    std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return RobustnessSummary(p.coefficient, n_trials, mean, std, values, failures, time.time() - t0)


def _run(ckpt, p, cfg, seeds) -> list[Field]:
    if cfg.mode == "physics_only":
        return [physics_only_solve(p, replace(cfg, seed=sd))[0] for sd in seeds]
    return sample_batch(ckpt, p, cfg, seeds)[0]


# --------------------------------------------------------------------------
# smoothing ablation

@dataclass
class AblationRow:
    dt: float
    smoothed: bool
    stable: bool
    rel_l2: float | None
    failed_at: int | None = None


@dataclass
class AblationTable:
    rows: list[AblationRow]

    def max_stable(self, smoothed: bool) -> float | None:
        dts = [r.dt for r in self.rows if r.smoothed == smoothed and r.stable]
        return max(dts) if dts else None

    def to_csv(self) -> str:
        return _csv([{"dt": r.dt, "smoothed": int(r.smoothed), "stable": int(r.stable),
                      "rel_l2": "" if r.rel_l2 is None else r.rel_l2,
                      "failed_at": "" if r.failed_at is None else r.failed_at} for r in self.rows])


DEFAULT_DT_GRID = (3.0e-5, 5.0e-5, 7.0e-5, 1.0e-4, 1.5e-4, 3.0e-4, 5.0e-4, 6.7e-4, 9.0e-4, 1.2e-3)


def ablate_smoothing(p: PdeProblem, dt_grid: Sequence[float] = DEFAULT_DT_GRID,
                     sigma_on: float = 0.9, sigma_off: float = 0.0,
                     cfg: GuidanceConfig | None = None, ckpt: Checkpoint | None = None,
                     iterations: int = 8000, ref: Field | None = None) -> AblationTable:
    """Stability of each step size with and without smoothing.

    Uses physics-only descent unless ``cfg.mode`` is guided/unguided and a
    checkpoint is supplied.  A cell is stable when the run finishes without a
    blow-up and its final relative L2 against the reference is below 1.
    """
    dts = [float(d) for d in dt_grid]
    if any(b <= a for a, b in zip(dts, dts[1:])):
        raise ValueError("dt_grid must be strictly increasing")
    cfg = cfg or GuidanceConfig(mode="physics_only")
    if cfg.mode != "physics_only" and ckpt is None:
        cfg = replace(cfg, mode="physics_only")
    cfg = replace(cfg, iterations=iterations, epsilon=0.0, snapshot_stride=0)
    ref = ref or reference_solution(p)
    rows = []
    for smoothed, sigma in ((False, sigma_off), (True, sigma_on)):
        for dt in dts:
            run = replace(cfg, sigma=sigma, guidance_dt=dt)
            try:
                if run.mode == "physics_only":
                    u, _ = physics_only_solve(p, run)
                else:
                    u = sample_batch(ckpt, p, run, [run.seed])[0][0]
                err = relative_l2(u, ref)
                rows.append(AblationRow(dt, smoothed, err < 1.0, err))
            except GuidanceInstability as exc:
                rows.append(AblationRow(dt, smoothed, False, None, exc.step))
    return AblationTable(rows)


# --------------------------------------------------------------------------
# exports and plots

def _csv(rows: list[dict], header: Sequence[str] | None = None) -> str:
    buf = io.StringIO()
    cols = list(header or (rows[0].keys() if rows else []))
    w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r)
    return buf.getvalue()


def convergence_trace_export(trace: SamplerTrace) -> str:
    """CSV with columns step, energy, residual_norm, rel_l2 (header only when empty)."""
    return trace.to_csv()


def robustness_csv(summaries: Sequence[RobustnessSummary]) -> str:
    return _csv([s.row() for s in summaries],
                header=["coef", "trials", "mean_pct", "std_pct", "failed", "seconds"])


def _pyplot():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def plot_field(u: Field, path, title: str = "", cmap: str = FIELD_CMAP) -> None:
    """Heatmap with x horizontal, y vertical and min/max in the title."""
    plt = _pyplot()
    v = u.values
    fig, ax = plt.subplots(figsize=(4.8, 4.0))
    im = ax.imshow(v.T, origin="lower", extent=(0, u.spec.lx, 0, u.spec.ly),
                   cmap=cmap, aspect="auto")
    fig.colorbar(im, ax=ax)
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    ax.set_title(f"{title}  min {v.min():.4g}  max {v.max():.4g}".strip(), fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def plot_section(cs: CrossSection, path, title: str = "") -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(4.8, 3.4))
    ax.plot(cs.x, cs.reference, "k-", label="reference")
    ax.plot(cs.x, cs.predicted, "r--", label="prediction")
    ax.set_xlabel("x")
    ax.set_ylabel("u")
    ax.set_title(f"{title} y = {cs.y:.4f} (node {cs.index})".strip(), fontsize=9)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def plot_report(report: EvalReport, pred: Field, ref: Field, outdir) -> list[str]:
    from pathlib import Path
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "prediction.png", out / "reference.png", out / "error.png", out / "section.png"]
    plot_field(pred, paths[0], "prediction")
    plot_field(ref, paths[1], "reference")
    plot_field(Field(pred.spec, report.error), paths[2], "|error|", ERROR_CMAP)
    plot_section(report.section, paths[3])
    return [str(p) for p in paths]
