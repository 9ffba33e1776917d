"""Finite-difference ground truth for the three canonical equations."""

from __future__ import annotations

import math
from typing import Callable, Union

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import solve_banded

from . import kernels
from .errors import CFLError, ConfigError, ConvergenceError, GridError
from .grid import BoundarySpec, Dirichlet, Field, GridSpec
from .problems import (BurgersSpaceTime, HeatSpaceTime, PdeProblem, Poisson,
                       SourceSpec)

Profile = Union[np.ndarray, Callable[[np.ndarray], np.ndarray]]


def solve_poisson(kappa: float, source: SourceSpec, bc: BoundarySpec, spec: GridSpec,
                  tol: float = 1e-10, maxiter: int | None = None) -> Field:
    """Conjugate gradients on the SPD system -kappa * lap_h(u) = f.

    Dirichlet data are eliminated into the right-hand side; iteration stops
    once ||r|| / ||b|| < tol on the interior unknowns.
    """
    if not kappa > 0:
        raise ConfigError("kappa must be positive")
    edges = bc.edges().values()
    if not all(isinstance(c, Dirichlet) for c in edges):
        raise ConfigError("solve_poisson supports Dirichlet edges only")
    plan = bc.plan(spec)
    hx, hy = spec.hx, spec.hy
    f = source.evaluate(spec)

    g = np.zeros(spec.shape)
    plan.apply(g)
    lap_g = np.empty(spec.shape)
    kernels.laplacian(g, hx, hy, lap_g)
    b = np.zeros(spec.shape)
    b[1:-1, 1:-1] = f[1:-1, 1:-1] + kappa * lap_g[1:-1, 1:-1]

    work = np.empty(spec.shape)

    def apply_A(v):
        kernels.laplacian(v, hx, hy, work)
        return -kappa * work

    x = np.zeros(spec.shape)
    bnorm = math.sqrt(float(np.sum(b * b)))
    if bnorm == 0.0:
        return Field(spec, g)
    r = b.copy()
    p = r.copy()
    rr = float(np.sum(r * r))
    maxiter = maxiter or 10 * spec.nx * spec.ny
    for _ in range(maxiter):
        Ap = apply_A(p)
        step = rr / float(np.sum(p * Ap))
        x += step * p
        r -= step * Ap
        rr_new = float(np.sum(r * r))
        if math.sqrt(rr_new) < tol * bnorm:
            break
        p = r + (rr_new / rr) * p
        rr = rr_new
    else:
        raise ConvergenceError(
            f"CG did not reach relative residual {tol:g} in {maxiter} iterations "
            f"(reached {math.sqrt(rr) / bnorm:.3e})")
    u = g + x
    plan.apply(u)
    return Field(spec, u)


def _side_values(bc: BoundarySpec, spec: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    left = bc.edge_values(spec, "x0")
    right = bc.edge_values(spec, "x1")
    if left is None or right is None:
        raise ConfigError("space-time solvers need Dirichlet data on the x edges")
    return left, right


def _initial_samples(h: Profile, x: np.ndarray, coarse_x: np.ndarray) -> np.ndarray:
    if callable(h):
        return np.asarray(h(x), dtype=float)
    h = np.asarray(h, dtype=float)
    if h.shape != coarse_x.shape:
        raise GridError(f"initial data has {h.size} samples, grid has {coarse_x.size}")
    if x.shape == coarse_x.shape and np.allclose(x, coarse_x):
        return h.copy()
    return CubicSpline(coarse_x, h)(x)


def solve_heat(alpha: float, h: Profile, bc: BoundarySpec, spec: GridSpec,
               refine: int = 8) -> Field:
    """Crank-Nicolson marching in y with ``refine`` substeps per grid row.

    Returns the whole space-time field; column 0 equals the initial data.
    """
    if not alpha > 0:
        raise ConfigError("alpha must be positive")
    x = spec.x()
    u = _initial_samples(h, x, x)
    left, right = _side_values(bc, spec)
    n = spec.nx - 2
    dt = spec.hy / refine
    r = alpha * dt / spec.hx ** 2

    # (I - r/2 D) u^{k+1} = (I + r/2 D) u^k + boundary terms
    ab = np.zeros((3, n))
    ab[0, 1:] = -0.5 * r
    ab[1, :] = 1.0 + r
    ab[2, :-1] = -0.5 * r

    out = np.empty(spec.shape)
    u = u.copy()
    u[0], u[-1] = left[0], right[0]
    out[:, 0] = u
    for c in range(1, spec.ny):
        for s in range(refine):
            t0 = (c - 1) + s / refine
            t1 = (c - 1) + (s + 1) / refine
            gl0, gl1 = np.interp([t0, t1], [c - 1, c], left[c - 1:c + 1])
            gr0, gr1 = np.interp([t0, t1], [c - 1, c], right[c - 1:c + 1])
            rhs = u[1:-1] + 0.5 * r * (u[:-2] - 2.0 * u[1:-1] + u[2:])
            rhs[0] += 0.5 * r * gl1
            rhs[-1] += 0.5 * r * gr1
            u[1:-1] = solve_banded((1, 1), ab, rhs)
            u[0], u[-1] = gl1, gr1
        out[:, c] = u
    return Field(spec, out)


def burgers_substeps(nu: float, umax: float, spec: GridSpec, x_refine: int,
                     cfl: float = 0.8, minimum: int = 128) -> int:
    """Fine time steps per coarse row so that (umax dt/dx + 2 nu dt/dx^2) <= cfl."""
    dx = spec.hx / x_refine
    rate = umax / dx + 2.0 * nu / dx ** 2
    return max(minimum, math.ceil(spec.hy * rate / cfl))


def solve_burgers(nu: float, h: Profile, bc: BoundarySpec, spec: GridSpec,
                  x_refine: int = 16, t_refine: int | None = None) -> Field:
    """Explicit upwind (Godunov flux) / central-diffusion march on a refined grid.

    The fine grid has ``x_refine`` cells per coarse cell; ``t_refine`` fine
    steps per coarse row default to the smallest count satisfying the CFL
    restriction with safety 0.8 (never fewer than 128).  The result is
    restricted back by subsampling.
    """
    if not nu > 0:
        raise ConfigError("nu must be positive")
    left, right = _side_values(bc, spec)
    nfine = (spec.nx - 1) * x_refine + 1
    xf = np.linspace(0.0, spec.lx, nfine)
    u = np.ascontiguousarray(_initial_samples(h, xf, spec.x()))
    u[0], u[-1] = left[0], right[0]
    umax = max(float(np.abs(u).max()), float(np.abs(left).max()), float(np.abs(right).max()))
    steps = t_refine or burgers_substeps(nu, umax, spec, x_refine)
    dx = spec.hx / x_refine
    dt = spec.hy / steps
    out = np.zeros(spec.shape)
    failed = kernels.burgers_march(u, float(nu), dx, dt, int(steps), spec.ny, x_refine,
                                   np.ascontiguousarray(left), np.ascontiguousarray(right), out)
    if failed >= 0:
        raise CFLError(f"CFL restriction violated at fine step {failed} "
                       f"(dt={dt:.3e}, dx={dx:.3e}, nu={nu})")
    out[:, 0] = _initial_samples(h, spec.x(), spec.x())
    out[0, :], out[-1, :] = left, right
    return Field(spec, out)


def reference_solution(p: PdeProblem, **kwargs) -> Field:
    """Ground-truth field for a problem, dispatching on its equation."""
    if isinstance(p, Poisson):
        return solve_poisson(p.kappa, p.source, p.bc, p.spec, **kwargs)
    if isinstance(p, HeatSpaceTime):
        return solve_heat(p.alpha, p.initial, p.bc, p.spec, **kwargs)
    if isinstance(p, BurgersSpaceTime):
        return solve_burgers(p.nu, p.initial, p.bc, p.spec, **kwargs)
    raise ConfigError(f"no reference solver for {type(p).__name__}")
