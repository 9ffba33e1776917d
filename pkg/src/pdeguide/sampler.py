"""Physics-guided reverse diffusion, the unguided sampler and residual descent.

One guided step (all in normalized units ``u``, physical field ``s*u``):

1. plain DDPM reverse update with the learned noise predictor;
2. smoothing, either of the state itself or of the residual's argument;
3. residual descent ``u <- u - (dt/s) * R(s*u)``;
4. hard projection of boundary/initial data ``g/s``.

Steps 2-4 are one call of the ``relax`` kernel on the physical field.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from . import kernels
from .diffusion import Checkpoint, NoiseSchedule
from .errors import ConfigError, GuidanceInstability
from .grid import Field, SmoothingKernel
from .problems import (PdeProblem, Poisson, adjoint_direction, energy_from_residual,
                       residual_array, source_array)

MODES = ("guided", "unguided", "physics_only")
TARGETS = ("state", "gradient_argument")

DEFAULT_STEPS = {"poisson": 1000, "heat": 750, "burgers": 750}

# Largest stable smoothed guidance step for Poisson at kappa = 0.9 on the
# 64-node unit square; other grids and coefficients follow Courant scaling.
POISSON_SMOOTHED_DT = 6.7e-4
_REF_H2 = (1.0 / 63.0) ** 2

# Smoothing width in cells.  Burgers uses a narrower kernel: its front spans
# only a few cells on coarse grids and a wide kernel smears it.
DEFAULT_SIGMA = {"poisson": 0.9, "heat": 0.9, "burgers": 0.5}

# Space-time guidance steps on the 64-node grid (Courant-scaled elsewhere).
# Measured on 32-node chains of 750 guided steps: heat stays stable to about
# 1.2x these values over alpha in [0.02, 0.05], Burgers to about 1.1x for
# nu >= 0.017.  Smaller coefficients are less damped and sit closer to the edge.
SPACE_TIME_DT = {
    ("heat", "gradient_argument"): 2.0e-3,
    ("heat", "state"): 2.0e-3,
    ("heat", "none"): 1.5e-3,
    ("burgers", "gradient_argument"): 1.5e-3,
    ("burgers", "state"): 1.5e-3,
    ("burgers", "none"): 6.5e-4,
}

# Physics-only descent runs for 1e5+ iterations, far past the 750-step
# horizon above, so it uses unsmoothed steps well inside the long-run limit.
# Burgers first runs a state-smoothed warm-up (see physics_only_solve).
PHYSICS_ONLY_DT = {"heat": 1.0e-4, "burgers": 2.0e-5}
PHYSICS_ONLY_ITERATIONS = 200_000
BURGERS_WARMUP = {"iterations": 100_000, "dt": 1.0e-4}


@dataclass
class GuidanceConfig:
    """Inference controls.  ``None`` fields resolve to per-equation defaults."""

    mode: str = "guided"
    steps: int | None = None
    guidance_dt: float | None = None
    sigma: float | None = None
    smoothing_target: str = "gradient_argument"
    scale: float | None = None
    seed: int = 0
    final_step_noise: bool = False
    snapshot_stride: int = 0
    iterations: int | None = None
    epsilon: float = 0.0
    anneal: bool = True
    adjoint: bool = False
    blowup: float = 1e10
    warmup_iterations: int | None = None
    warmup_sigma: float = 0.9
    warmup_dt: float | None = None

    def __post_init__(self):
        self.mode = self.mode.replace("-", "_")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.smoothing_target not in TARGETS:
            raise ConfigError(f"smoothing_target must be one of {TARGETS}")
        if self.sigma is not None and self.sigma < 0:
            raise ConfigError("sigma must be >= 0 (0 disables smoothing)")
        if self.guidance_dt is not None and not self.guidance_dt > 0:
            raise ConfigError("guidance_dt must be positive")
        if self.steps is not None and self.steps < 1:
            raise ConfigError("steps must be positive")
        if self.scale is not None and not self.scale > 0:
            raise ConfigError("scale must be positive")
        counts = (self.iterations or 0, self.epsilon, self.snapshot_stride, self.warmup_iterations or 0)
        if min(counts) < 0:
            raise ConfigError("iteration counts, epsilon and snapshot_stride must be >= 0")
        if self.warmup_iterations and not self.warmup_sigma > 0:
            raise ConfigError("warmup_sigma must be positive")

    @property
    def target_name(self) -> str:
        return "none" if self.sigma == 0 else self.smoothing_target

    def to_dict(self) -> dict:
        return asdict(self)


def _h2_factor(p: PdeProblem) -> float:
    # explicit-diffusion Courant factor relative to the 64-node unit grid
    return 2.0 / (1.0 / p.spec.hx ** 2 + 1.0 / p.spec.hy ** 2) / _REF_H2


def explicit_poisson_bound(p: Poisson) -> float:
    """Richardson stability limit 1 / (2 kappa (1/hx^2 + 1/hy^2)) without smoothing."""
    return 1.0 / (2.0 * p.kappa * (1.0 / p.spec.hx ** 2 + 1.0 / p.spec.hy ** 2))


def default_guidance_dt(p: PdeProblem, cfg: GuidanceConfig | None = None) -> float:
    cfg = cfg or GuidanceConfig()
    target = cfg.target_name
    if isinstance(p, Poisson):
        if target == "none":
            return 0.9 * explicit_poisson_bound(p)
        base = POISSON_SMOOTHED_DT if target == "gradient_argument" else 0.6 * POISSON_SMOOTHED_DT
        return base * (0.9 / p.kappa) * _h2_factor(p)
    return SPACE_TIME_DT[(p.equation, target)] * _h2_factor(p)


def resolve(cfg: GuidanceConfig, p: PdeProblem, ckpt: Checkpoint | None = None) -> GuidanceConfig:
    """Fill in ``None`` defaults for a given problem (and checkpoint)."""
    steps = cfg.steps or DEFAULT_STEPS[p.equation]
    if ckpt is not None and cfg.mode != "physics_only" and steps > ckpt.schedule.T:
        raise ConfigError(f"steps={steps} exceeds the trained schedule length {ckpt.schedule.T}")
    scale = cfg.scale or (ckpt.scale if ckpt is not None else 1.0)
    iterations = PHYSICS_ONLY_ITERATIONS if cfg.iterations is None else cfg.iterations
    cfg = replace(cfg, steps=steps, scale=scale, iterations=iterations)
    if cfg.mode == "physics_only" and not isinstance(p, Poisson):
        return _resolve_descent(cfg, p)
    sigma = DEFAULT_SIGMA[p.equation] if cfg.sigma is None else cfg.sigma
    cfg = replace(cfg, sigma=sigma, warmup_iterations=cfg.warmup_iterations or 0)
    return replace(cfg, guidance_dt=cfg.guidance_dt or default_guidance_dt(p, cfg))


def _resolve_descent(cfg: GuidanceConfig, p: PdeProblem) -> GuidanceConfig:
    h2 = _h2_factor(p)
    sigma = 0.0 if cfg.sigma is None else cfg.sigma
    dt = cfg.guidance_dt or PHYSICS_ONLY_DT[p.equation] * h2
    warm = cfg.warmup_iterations
    warm_dt = cfg.warmup_dt
    if p.equation == "burgers":
        warm = BURGERS_WARMUP["iterations"] if warm is None else warm
        warm_dt = warm_dt or BURGERS_WARMUP["dt"] * h2
    return replace(cfg, sigma=sigma, guidance_dt=dt, warmup_iterations=warm or 0, warmup_dt=warm_dt)


# --------------------------------------------------------------------------
# traces

@dataclass
class Snapshot:
    step: int
    values: np.ndarray
    energy: float
    residual_norm: float
    rel_l2: float | None = None


@dataclass
class SamplerTrace:
    """Snapshots in execution order (reverse t for diffusion, iteration for descent)."""

    snapshots: list[Snapshot] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.snapshots)

    @property
    def energies(self) -> np.ndarray:
        return np.array([s.energy for s in self.snapshots])

    @property
    def steps(self) -> np.ndarray:
        return np.array([s.step for s in self.snapshots])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step", "energy", "residual_norm", "rel_l2"])
        for s in self.snapshots:
            w.writerow([s.step, repr(s.energy), repr(s.residual_norm),
                        "" if s.rel_l2 is None else repr(s.rel_l2)])
        return buf.getvalue()


class _Recorder:
    def __init__(self, p: PdeProblem, ref: Field | None, stride: int):
        self.p = p
        self.ref = None if ref is None else ref.values
        self.ref_norm = None if ref is None else float(np.linalg.norm(ref.values))
        self.stride = stride
        self.trace = SamplerTrace()
        self.last_energy: float | None = None

    def energy(self, phys: np.ndarray) -> float:
        e = energy_from_residual(residual_array(self.p, phys), self.p.spec)
        if math.isfinite(e):
            self.last_energy = e
        return e

    def record(self, step: int, phys: np.ndarray) -> None:
        e = self.energy(phys)
        rel = None
        if self.ref is not None and self.ref_norm:
            rel = float(np.linalg.norm(phys - self.ref)) / self.ref_norm
        # plain interior 2-norm of R
        rnorm = math.sqrt(2.0 * e / (self.p.spec.hx * self.p.spec.hy))
        self.trace.snapshots.append(Snapshot(step, phys.copy(), e, rnorm, rel))

    def want(self, step: int, first: bool, last: bool) -> bool:
        return first or last or (self.stride > 0 and step % self.stride == 0)


# --------------------------------------------------------------------------
# building blocks

def reverse_step(predict, u: np.ndarray, t: int, s: NoiseSchedule,
                 rng: np.random.Generator | None, add_noise: bool = True) -> np.ndarray:
    """DDPM ancestral update.

    ``predict(u, t)`` returns the noise estimate for ``u`` (a field or a batch
    of fields).  Noise is skipped when ``add_noise`` is False or ``t == 1``.
    """
    if not 1 <= t <= s.T:
        raise ConfigError(f"timestep {t} outside 1..{s.T}")
    beta = s.beta[t]
    eps = predict(u, t)
    mean = (u - (beta / math.sqrt(1.0 - s.alpha_bar[t])) * eps) / math.sqrt(s.alpha[t])
    if add_noise and t > 1:
        mean = mean + math.sqrt(beta) * rng.standard_normal(u.shape)
    return mean


class _Guide:
    """Smoothing + residual descent + projection on one physical field, in place."""

    def __init__(self, p: PdeProblem, cfg: GuidanceConfig):
        self.p = p
        self.cfg = cfg
        spec = p.spec
        self.plan = p.bc.plan(spec)
        self.f = np.ascontiguousarray(source_array(p))
        if cfg.sigma > 0:
            self.w = SmoothingKernel(cfg.sigma).weights
            if (len(self.w) - 1) // 2 >= min(spec.shape) - 1:
                raise ConfigError(f"sigma={cfg.sigma} is too wide for grid {spec.shape}")
            self.target = (kernels.TARGET_STATE if cfg.smoothing_target == "state"
                           else kernels.TARGET_GRADIENT)
        else:
            self.w = np.ones(1)
            self.target = kernels.TARGET_NONE
        self.a = np.empty(spec.shape)
        self.tmp = np.empty(spec.shape)
        self.r = np.empty(spec.shape)

    def project(self, u: np.ndarray) -> None:
        self.plan.apply(u)

    def __call__(self, u: np.ndarray, dt: float, n_iter: int = 1) -> int:
        """Run ``n_iter`` descent iterations; returns how many completed."""
        if self.cfg.adjoint:
            return self._adjoint(u, dt, n_iter)
        return kernels.relax(u, self.p.code, self.p.coefficient, self.f, self.p.spec.hx,
                             self.p.spec.hy, dt, self.w, self.plan.pad, self.target,
                             self.plan.order, self.plan.kinds, self.plan.vals, n_iter,
                             self.cfg.blowup, self.a, self.tmp, self.r)

    def _adjoint(self, u: np.ndarray, dt: float, n_iter: int) -> int:
        # transposed-stencil gradient; python only, used for comparisons
        for it in range(n_iter):
            arg = u
            if self.target != kernels.TARGET_NONE:
                kernels.smooth(u, self.w, self.plan.pad, self.tmp, self.a)
                if self.target == kernels.TARGET_STATE:
                    u[...] = self.a
                else:
                    self.plan.apply(self.a)
                    arg = self.a
            r = residual_array(self.p, arg, self.f)
            u[1:-1, 1:-1] -= dt * adjoint_direction(self.p, arg, r)[1:-1, 1:-1]
            bad = not (np.abs(u[1:-1, 1:-1]).max() <= self.cfg.blowup)
            self.plan.apply(u)
            if bad:
                return it
        return n_iter


def guided_reverse_step(ckpt: Checkpoint, u: np.ndarray, t: int, p: PdeProblem,
                        cfg: GuidanceConfig, rng: np.random.Generator,
                        last: bool = False) -> np.ndarray:
    """One full guided step for a single chain; ``u`` is in normalized units."""
    cfg = resolve(cfg, p, ckpt)
    guide = _Guide(p, cfg)
    return _guided_batch(ckpt, u[None], t, guide, cfg, [rng], last)[0]


def _guided_batch(ckpt: Checkpoint, u: np.ndarray, t: int, guide: _Guide | None,
                  cfg: GuidanceConfig, rngs: Sequence[np.random.Generator],
                  last: bool) -> np.ndarray:
    eps = ckpt.predict_noise(u, t)
    beta = ckpt.schedule.beta[t]
    coef = beta / math.sqrt(1.0 - ckpt.schedule.alpha_bar[t])
    out = (u - coef * eps) / math.sqrt(ckpt.schedule.alpha[t])
    noisy = t > 1 and (cfg.final_step_noise or not last)
    s = cfg.scale
    for b, rng in enumerate(rngs):
        if noisy:
            out[b] += math.sqrt(beta) * rng.standard_normal(out.shape[1:])
        if guide is None:
            continue
        phys = np.ascontiguousarray(out[b] * s)
        if guide(phys, cfg.guidance_dt) < 1:
            raise GuidanceInstability(f"guidance blew up at reverse step t={t}", t, None)
        out[b] = phys / s
    return out


# --------------------------------------------------------------------------
# drivers

def sample_batch(ckpt: Checkpoint, p: PdeProblem, cfg: GuidanceConfig,
                 seeds: Sequence[int], ref: Field | None = None) -> tuple[list[Field], list[SamplerTrace]]:
    """Run one chain per seed; chains share network calls but not randomness."""
    cfg = resolve(cfg, p, ckpt)
    if cfg.mode == "physics_only":
        results = [physics_only_solve(p, replace(cfg, seed=sd), ref) for sd in seeds]
        return [r[0] for r in results], [r[1] for r in results]
    if p.spec.nx % 4 or p.spec.ny % 4:
        raise ConfigError(f"grid {p.spec.shape} must have sides divisible by 4 for the denoiser")
    rngs = [np.random.default_rng(sd) for sd in seeds]
    u = np.stack([r.standard_normal(p.spec.shape) for r in rngs])
    guide = _Guide(p, cfg) if cfg.mode == "guided" else None
    if guide is not None:
        for b in range(len(rngs)):
            u[b] = _project_scaled(guide, u[b], cfg.scale)
    recs = [_Recorder(p, ref, cfg.snapshot_stride) for _ in rngs]
    steps = cfg.steps
    for t in range(steps, 0, -1):
        try:
            u = _guided_batch(ckpt, u, t, guide, cfg, rngs, last=(t == 1))
        except GuidanceInstability as exc:
            raise GuidanceInstability(str(exc), exc.step,
                                      min((r.last_energy for r in recs if r.last_energy is not None),
                                          default=None)) from None
        for b, rec in enumerate(recs):
            if rec.want(t, t == steps, t == 1):
                if not np.isfinite(u[b]).all():
                    raise GuidanceInstability(f"non-finite state at reverse step t={t}", t,
                                              rec.last_energy)
                rec.record(t, u[b] * cfg.scale)
    fields = []
    plan = p.bc.plan(p.spec)
    for b, rec in enumerate(recs):
        phys = u[b] * cfg.scale
        if not np.isfinite(phys).all():
            raise GuidanceInstability("sampling produced a non-finite field", 1, rec.last_energy)
        plan.apply(phys)
        fields.append(Field(p.spec, phys))
    return fields, [r.trace for r in recs]


def _project_scaled(guide: _Guide, u: np.ndarray, s: float) -> np.ndarray:
    phys = np.ascontiguousarray(u * s)
    guide.project(phys)
    return phys / s


def sample(ckpt: Checkpoint, p: PdeProblem, cfg: GuidanceConfig,
           ref: Field | None = None) -> tuple[Field, SamplerTrace]:
    """Single seeded chain (``cfg.seed``); returns the physical field and its trace."""
    fields, traces = sample_batch(ckpt, p, cfg, [cfg.seed], ref)
    return fields[0], traces[0]


def physics_only_solve(p: PdeProblem, cfg: GuidanceConfig,
                       ref: Field | None = None) -> tuple[Field, SamplerTrace]:
    """Residual descent / Langevin iteration from a standard-normal start.

    ``u <- P(u - dt R(u) + sqrt(2 eps_k dt) xi)``, with ``eps_k`` decreasing
    linearly from ``cfg.epsilon`` to 0 when ``cfg.anneal`` is set.  With
    ``epsilon = 0`` this is deterministic residual descent (Richardson
    iteration for Poisson).

    ``warmup_iterations > 0`` prepends a phase of state-smoothed descent
    (width ``warmup_sigma``).  That phase is contractive and pulls a noise
    start into the basin of the discrete solution; the Burgers space-time
    system needs it because raw descent from noise wanders when the state
    is large enough for central advection to lose monotonicity.
    """
    cfg = resolve(replace(cfg, mode="physics_only"), p)
    rng = np.random.default_rng(cfg.seed)
    guide = _Guide(p, cfg)
    u = cfg.scale * rng.standard_normal(p.spec.shape)
    guide.project(u)
    rec = _Recorder(p, ref, cfg.snapshot_stride)
    n = cfg.iterations
    dt = cfg.guidance_dt
    rec.record(0, u)
    if cfg.warmup_iterations:
        warm = _Guide(p, replace(cfg, sigma=cfg.warmup_sigma, smoothing_target="state"))
        wdt = cfg.warmup_dt or dt
        if warm(u, wdt, cfg.warmup_iterations) < cfg.warmup_iterations:
            raise GuidanceInstability("smoothed warm-up blew up", 0, rec.last_energy)
        rec.record(0, u)
    if cfg.epsilon == 0.0:
        chunk = cfg.snapshot_stride or max(n, 1)
        done = 0
        while done < n:
            k = min(chunk, n - done)
            got = guide(u, dt, k)
            if got < k:
                raise GuidanceInstability(f"residual descent blew up at iteration {done + got + 1}",
                                          done + got + 1, rec.last_energy)
            done += k
            rec.record(done, u)
    else:
        interior = (slice(1, -1), slice(1, -1))
        for k in range(n):
            if guide(u, dt, 1) < 1:
                raise GuidanceInstability(f"Langevin iteration blew up at iteration {k + 1}",
                                          k + 1, rec.last_energy)
            eps = cfg.epsilon * (1.0 - k / n) if cfg.anneal else cfg.epsilon
            if eps > 0:
                u[interior] += math.sqrt(2.0 * eps * dt) * rng.standard_normal(
                    (p.spec.nx - 2, p.spec.ny - 2))
            if rec.want(k + 1, False, k + 1 == n):
                rec.record(k + 1, u)
    if not np.isfinite(u).all():
        raise GuidanceInstability("residual descent produced a non-finite field", n, rec.last_energy)
    return Field(p.spec, u), rec.trace


def calibrate_guidance_dt(p: PdeProblem, cfg: GuidanceConfig | None = None,
                          lo: float = 1e-6, hi: float = 1e-2, iterations: int = 4000,
                          rel_tol: float = 0.02, seeds: Sequence[int] = (0, 1)) -> float:
    """Bisect (geometrically) for the largest stable descent step.

    A step is stable when every seeded physics-only run of ``iterations``
    iterations stays below the blow-up threshold.  ``lo`` must be stable and
    ``hi`` unstable.
    """
    cfg = replace(cfg or GuidanceConfig(), mode="physics_only", epsilon=0.0,
                  iterations=iterations, snapshot_stride=0)

    def stable(dt):
        for sd in seeds:
            try:
                physics_only_solve(p, replace(cfg, guidance_dt=dt, seed=sd))
            except GuidanceInstability:
                return False
        return True

    if not stable(lo):
        raise ConfigError(f"lower bracket dt={lo:g} is already unstable")
    if stable(hi):
        return hi
    while hi / lo > 1.0 + rel_tol:
        mid = math.sqrt(lo * hi)
        if stable(mid):
            lo = mid
        else:
            hi = mid
    return lo
