"""Exit criteria.

Each test prints one ``PASS``/``FAIL`` line (also collected into the pytest
terminal summary).  Group A needs no training.  Group B uses the smoke-scale
checkpoints from ``smoke.py``; they are trained on first use (about 16
minutes on a laptop CPU) and cached afterwards.  Group C (full-scale
training) is optional and reported as skipped.
"""

from __future__ import annotations

import math
import time

import numpy as np
import pytest
import torch

from pdeguide.diffusion import forward_noise, linear_schedule, training_loss
from pdeguide.errors import GuidanceInstability
from pdeguide.grid import (BoundarySpec, Field, GridSpec, Periodic, Neumann, SmoothingKernel,
                           gaussian_smooth, project_boundary, relative_l2)
from pdeguide.problems import analytic_solution, make_problem
from pdeguide.sampler import GuidanceConfig, guided_reverse_step, physics_only_solve, sample_batch
from pdeguide.solvers import burgers_substeps, reference_solution, solve_burgers
from pdeguide.diffusion import Checkpoint
from pdeguide.evaluation import robustness
from pdeguide.unet import Denoiser

pytestmark = pytest.mark.acceptance

G64 = GridSpec.square(64)
SEEDS = [0, 1, 2, 3, 4]

# tolerances
ORACLE_TOL = 1e-3
PHYSICS_POISSON_TOL = 1e-3
PHYSICS_SPACE_TIME_TOL = 5e-2
STABILITY_RUNTIME_S = 120.0
ALPHA_BAR_RANGE = (3.5e-5, 4.5e-5)
MC_SIGMAS = 4.0
KERNEL_SUM_TOL = 1e-12
GUIDED_MAX = 0.10
UNGUIDED_FACTOR = 2.0
EXTRAP_UNGUIDED_MIN = 0.20
ROBUST_STD_MAX_PCT = 2.5
ZERO_MODEL_LOSS = (0.95, 1.05)

# one interpolation coefficient per equation (first of each test pair)
INTERP = {"poisson": 1.35, "heat": 0.031, "burgers": 0.024}


def _report(request, key: str, name: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} {key} {name}: {detail}"
    print(line)
    request.config._acceptance_lines.append(line)
    assert ok, line


# ------------------------------------------------------------------ A


def test_A1_oracle_accuracy(request):
    errs = {}
    for k in (1.0, 2.0):
        p = make_problem("poisson", k, G64)
        errs[f"poisson k={k}"] = relative_l2(reference_solution(p), analytic_solution(p))
    for a in (0.02, 0.05):
        p = make_problem("heat", a, G64)
        errs[f"heat a={a}"] = relative_l2(reference_solution(p), analytic_solution(p))
    p = make_problem("burgers", 0.017, G64)
    base = solve_burgers(0.017, p.initial, p.bc, G64)
    n = burgers_substeps(0.017, 1.0, G64, 16)
    fine = solve_burgers(0.017, p.initial, p.bc, G64, t_refine=2 * n)
    errs["burgers dt/2"] = relative_l2(base, fine)
    ok = all(e < ORACLE_TOL for e in errs.values())
    _report(request, "A1", "oracle accuracy", ok,
            ", ".join(f"{k} {v:.2e}" for k, v in errs.items()) + f" (< {ORACLE_TOL:g})")


def _stable(p, dt, sigma, iterations=20000):
    cfg = GuidanceConfig(mode="physics_only", sigma=sigma, guidance_dt=dt, iterations=iterations)
    try:
        u, _ = physics_only_solve(p, cfg)
        return bool(np.isfinite(u.values).all())
    except GuidanceInstability:
        return False


def test_A2_stability_thresholds(request):
    p = make_problem("poisson", 0.9, G64)
    t0 = time.time()
    a = _stable(p, 7.0e-5, 0.0)
    b = _stable(p, 1.5e-4, 0.0)
    c = _stable(p, 6.7e-4, 0.9)
    secs = time.time() - t0
    ok = a and not b and c and secs < STABILITY_RUNTIME_S
    _report(request, "A2", "stability thresholds", ok,
            f"off@7.0e-5 {'stable' if a else 'unstable'}, off@1.5e-4 "
            f"{'stable' if b else 'unstable'}, sigma0.9@6.7e-4 {'stable' if c else 'unstable'}"
            f" ({secs:.1f}s)")


def _explicit_limit(p) -> float:
    # 2 / (kappa * lambda_max) with the largest eigenvalue of the 5-point -Laplacian
    n = p.spec.nx - 1
    lam = 4.0 * math.sin(math.pi * (n - 1) / (2 * n)) ** 2 * (1 / p.spec.hx ** 2 + 1 / p.spec.hy ** 2)
    return 2.0 / (p.kappa * lam)


def test_A3_physics_only_convergence(request):
    parts, ok = [], True
    for k in (0.90, 1.35, 2.05):
        p = make_problem("poisson", k, G64)
        cfg = GuidanceConfig(mode="physics_only", sigma=0, guidance_dt=6.0e-5, iterations=200_000)
        try:
            e = relative_l2(physics_only_solve(p, cfg)[0], reference_solution(p))
            ok &= e < PHYSICS_POISSON_TOL
            parts.append(f"poisson k={k} {e:.2e}")
        except GuidanceInstability as exc:
            ok = False
            parts.append(f"poisson k={k} blew up at iteration {exc.step} "
                         f"(explicit limit {_explicit_limit(p):.2e} < 6.0e-5)")
    parts[-1] += f" (< {PHYSICS_POISSON_TOL:g})"
    for eq, c in (("heat", 0.031), ("burgers", 0.017)):
        p = make_problem(eq, c, G64)
        e = relative_l2(physics_only_solve(p, GuidanceConfig(mode="physics_only"))[0],
                        reference_solution(p))
        ok &= e < PHYSICS_SPACE_TIME_TOL
        parts.append(f"{eq} {c} {e:.2e}")
    parts[-1] += f" (< {PHYSICS_SPACE_TIME_TOL:g})"
    _report(request, "A3", "physics-only convergence", ok, ", ".join(parts))


def test_A4_energy_monotonicity(request):
    p = make_problem("poisson", 0.90, G64)
    cfg = GuidanceConfig(mode="physics_only", sigma=0, guidance_dt=6.0e-5, iterations=1000,
                         snapshot_stride=1)
    _, trace = physics_only_solve(p, cfg)
    e = trace.energies
    res = np.array([s.residual_norm for s in trace.snapshots])
    active = res[:-1] > 1e-12
    bad = int(np.sum((np.diff(e) >= 0) & active))
    _report(request, "A4", "energy monotonicity", bad == 0 and len(e) == 1001,
            f"{bad} non-decreasing steps in 1000; E {e[0]:.3e} -> {e[-1]:.3e}")


def test_A5_schedule_statistics(request):
    s = linear_schedule()
    ab = s.alpha_bar[1000]
    rng = np.random.default_rng(5)
    n = 10_000
    details, ok = [f"alpha_bar[1000] {ab:.3e}"], ALPHA_BAR_RANGE[0] <= ab <= ALPHA_BAR_RANGE[1]
    for t in (100, 500, 1000):
        u0 = np.zeros(n)
        ut = forward_noise(u0, t, rng.standard_normal(n), s)
        target = 1.0 - s.alpha_bar[t]
        se = target * math.sqrt(2.0 / (n - 1))
        z = abs(ut.var(ddof=1) - target) / se
        ok = ok and z < MC_SIGMAS
        details.append(f"t={t} z={z:.2f}")
    _report(request, "A5", "schedule statistics", ok, ", ".join(details))


def test_A6_projection_smoothing_properties(request):
    rng = np.random.default_rng(6)
    g = GridSpec.square(32)
    checks = {}
    idem = True
    for bc in (BoundarySpec.dirichlet_all(), BoundarySpec(x0=Periodic(), x1=Periodic()),
               BoundarySpec(y1=Neumann()), make_problem("heat", 0.03, g).bc):
        u = Field(g, rng.standard_normal(g.shape))
        once = project_boundary(u, bc)
        idem &= project_boundary(once, bc).values.tobytes() == once.values.tobytes()
    checks["idempotence"] = idem
    const = Field(g, np.full(g.shape, 2.5))
    checks["constant"] = all(np.allclose(gaussian_smooth(const, SmoothingKernel(s)).values, 2.5,
                                         rtol=0, atol=1e-14) for s in (0.5, 0.9, 2.0))
    checks["normalization"] = all(abs(SmoothingKernel(s).weights.sum() - 1.0) < KERNEL_SUM_TOL
                                  for s in (0.3, 0.9, 1.7, 3.0))
    torch.manual_seed(0)
    ckpt = Checkpoint(Denoiser(8), linear_schedule(), 1.0)
    exact = True
    for eq, c in (("poisson", 1.35), ("heat", 0.031), ("burgers", 0.024)):
        p = make_problem(eq, c, g)
        plan = p.bc.plan(g)
        r = np.random.default_rng(0)
        u = r.standard_normal(g.shape)
        for t in range(30, 0, -1):
            u = guided_reverse_step(ckpt, u, t, p, GuidanceConfig(steps=30), r, last=t == 1)
            v = u.copy()
            plan.apply(v)
            exact &= v.tobytes() == u.tobytes()
    checks["boundary bit-exact"] = exact
    _report(request, "A6", "projection/smoothing properties", all(checks.values()),
            ", ".join(f"{k} {'ok' if v else 'broken'}" for k, v in checks.items()))


# ------------------------------------------------------------------ B


@pytest.fixture(scope="module")
def smoke():
    smoke_mod = pytest.importorskip("smoke")
    return smoke_mod


def _median_errors(ckpt, p, mode):
    ref = reference_solution(p)
    fields, _ = sample_batch(ckpt, p, GuidanceConfig(mode=mode), SEEDS)
    return float(np.median([relative_l2(f, ref) for f in fields]))


@pytest.mark.parametrize("equation", ["poisson", "heat", "burgers"])
def test_B7_guided_beats_unguided(request, smoke, equation):
    ckpt = smoke.smoke_checkpoint(equation)
    p = make_problem(equation, INTERP[equation], smoke.smoke_spec())
    g = _median_errors(ckpt, p, "guided")
    u = _median_errors(ckpt, p, "unguided")
    ok = g < GUIDED_MAX and u > UNGUIDED_FACTOR * g
    _report(request, f"B7[{equation}]", "guided vs unguided", ok,
            f"coef {INTERP[equation]}: guided median {g:.4f} (< {GUIDED_MAX}), unguided "
            f"median {u:.4f} ({u / g:.1f}x, need > {UNGUIDED_FACTOR}x)")


def test_B8_extrapolation(request, smoke):
    ckpt = smoke.smoke_checkpoint("poisson")
    p = make_problem("poisson", 2.05, smoke.smoke_spec())
    g = _median_errors(ckpt, p, "guided")
    u = _median_errors(ckpt, p, "unguided")
    _report(request, "B8", "extrapolation kappa=2.05", g < GUIDED_MAX and u > EXTRAP_UNGUIDED_MIN,
            f"guided {g:.4f} (< {GUIDED_MAX}), unguided {u:.4f} (> {EXTRAP_UNGUIDED_MIN})")


def test_B9_robustness(request, smoke):
    ckpt = smoke.smoke_checkpoint("poisson")
    p = make_problem("poisson", 1.35, smoke.smoke_spec())
    s = robustness(ckpt, p, GuidanceConfig(), n_trials=20, base_seed=0)
    ok = not s.failures and s.std < ROBUST_STD_MAX_PCT
    _report(request, "B9", "robustness (20 trials)", ok,
            f"{s.mean:.3f} +- {s.std:.3f} % (std < {ROBUST_STD_MAX_PCT}), "
            f"{len(s.failures)} failed, {s.seconds:.0f}s")


def test_B10_training_sanity(request, smoke):
    import csv
    details, ok = [], True
    for eq in ("poisson", "heat", "burgers"):
        smoke.smoke_checkpoint(eq)
        with open(smoke.CACHE / f"{eq}_trace.csv") as fh:
            loss = np.array([float(r["loss"]) for r in csv.DictReader(fh)])
        end = min(3000, len(loss))
        trailing = loss[end - 500:end].mean()
        first = loss[:500].mean()
        ok &= trailing < first
        details.append(f"{eq} trailing@{end} {trailing:.4f} < first500 {first:.4f}")
    d = smoke.smoke_dataset("poisson")
    u0 = torch.as_tensor(d.values[:256], dtype=torch.float64)
    zero = lambda x, t: torch.zeros_like(x)
    base = float(training_loss(zero, u0, linear_schedule(), torch.Generator().manual_seed(0)))
    ok &= ZERO_MODEL_LOSS[0] <= base <= ZERO_MODEL_LOSS[1]
    details.append(f"zero-model loss {base:.4f}")
    _report(request, "B10", "training sanity", ok, "; ".join(details))


# ------------------------------------------------------------------ C


def test_C_full_scale(request):
    line = "SKIP C full-scale reproduction: optional, non-gating (needs GPU-hours of training)"
    print(line)
    request.config._acceptance_lines.append(line)
    pytest.skip("full-scale training is optional")
