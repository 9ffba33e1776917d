"""Compiled and numpy kernels must agree on arbitrary inputs."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pdeguide import kernels as K
from pdeguide.grid import BoundarySpec, Dirichlet, Initial, Neumann, Periodic, GridSpec, SmoothingKernel

cy = pytest.importorskip("pdeguide._ckernels")
py = K.backend("python")

shapes = st.tuples(st.integers(8, 24), st.integers(8, 24))
seeds = st.integers(0, 2**32 - 1)

_EDGE_CHOICES = [
    BoundarySpec.dirichlet_all(),
    BoundarySpec(x0=Periodic(), x1=Periodic()),
    BoundarySpec(y1=Neumann()),
    BoundarySpec(x0=Dirichlet(0.3), y0=Initial(-0.2), y1=Neumann()),
]


def _pair(fn, *arrays):
    """Run the same kernel on both backends with private copies of the buffers."""
    a = [x.copy() for x in arrays]
    b = [x.copy() for x in arrays]
    return fn(cy, a), fn(py, b), a, b


@settings(max_examples=30, deadline=None)
@given(shapes, seeds, st.floats(0.01, 1.0), st.floats(0.01, 1.0))
def test_stencils_agree(shape, seed, hx, hy):
    u = np.random.default_rng(seed).standard_normal(shape)
    for name, args in (("laplacian", (hx, hy)), ("deriv_x", (hx,)), ("deriv_y", (hy,)),
                       ("deriv_xx", (hx,))):
        oc, op = np.empty(shape), np.empty(shape)
        getattr(cy, name)(u, *args, oc)
        getattr(py, name)(u, *args, op)
        np.testing.assert_allclose(oc, op, rtol=1e-12, atol=1e-12 / min(hx, hy) ** 2)


@settings(max_examples=30, deadline=None)
@given(shapes, seeds, st.floats(0.3, 2.0), st.sampled_from(range(len(_EDGE_CHOICES))))
def test_smooth_and_project_agree(shape, seed, sigma, bci):
    g = GridSpec(*shape)
    plan = _EDGE_CHOICES[bci].plan(g)
    w = SmoothingKernel(sigma).weights
    if len(w) // 2 >= min(shape) - 1:
        return
    u = np.random.default_rng(seed).standard_normal(shape)
    oc, op = np.empty(shape), np.empty(shape)
    cy.smooth(u, w, plan.pad, np.empty(shape), oc)
    py.smooth(u, w, plan.pad, np.empty(shape), op)
    np.testing.assert_allclose(oc, op, rtol=1e-13, atol=1e-13)
    uc, upy = u.copy(), u.copy()
    cy.project(uc, plan.order, plan.kinds, plan.vals)
    py.project(upy, plan.order, plan.kinds, plan.vals)
    assert uc.tobytes() == upy.tobytes()


@settings(max_examples=30, deadline=None)
@given(shapes, seeds, st.sampled_from([K.EQ_POISSON, K.EQ_HEAT, K.EQ_BURGERS]),
       st.floats(0.01, 2.0))
def test_residual_agrees(shape, seed, eq, coef):
    rng = np.random.default_rng(seed)
    u, f = rng.standard_normal(shape), rng.standard_normal(shape)
    h = 1.0 / (shape[0] - 1)
    oc, op = np.empty(shape), np.empty(shape)
    cy.residual(u, eq, coef, f, h, h, oc)
    py.residual(u, eq, coef, f, h, h, op)
    np.testing.assert_allclose(oc, op, rtol=1e-12, atol=1e-9)


@settings(max_examples=25, deadline=None)
@given(shapes, seeds, st.sampled_from([K.EQ_POISSON, K.EQ_HEAT, K.EQ_BURGERS]),
       st.sampled_from([K.TARGET_NONE, K.TARGET_STATE, K.TARGET_GRADIENT]),
       st.sampled_from(range(len(_EDGE_CHOICES))))
def test_relax_agrees(shape, seed, eq, target, bci):
    g = GridSpec(*shape)
    plan = _EDGE_CHOICES[bci].plan(g)
    rng = np.random.default_rng(seed)
    u0, f = rng.standard_normal(shape), rng.standard_normal(shape)
    w = SmoothingKernel(0.9).weights
    dt = 0.1 * g.hx * g.hy
    res = []
    for mod in (cy, py):
        u = u0.copy()
        n = mod.relax(u, eq, 0.05, f, g.hx, g.hy, dt, w, plan.pad, target, plan.order, plan.kinds,
                      plan.vals, 7, 1e10, np.empty(shape), np.empty(shape), np.empty(shape))
        res.append((n, u))
    assert res[0][0] == res[1][0] == 7
    np.testing.assert_allclose(res[0][1], res[1][1], rtol=1e-10, atol=1e-10)


def test_relax_reports_blowup_identically():
    g = GridSpec.square(12)
    plan = BoundarySpec.dirichlet_all().plan(g)
    u0 = np.random.default_rng(0).standard_normal(g.shape)
    counts = []
    for mod in (cy, py):
        u = u0.copy()
        counts.append(mod.relax(u, K.EQ_POISSON, 1.0, np.zeros(g.shape), g.hx, g.hy, 0.01,
                                np.ones(1), plan.pad, K.TARGET_NONE, plan.order, plan.kinds,
                                plan.vals, 500, 1e6, np.empty(g.shape), np.empty(g.shape),
                                np.empty(g.shape)))
    assert counts[0] == counts[1] < 500


@settings(max_examples=15, deadline=None)
@given(seeds, st.floats(0.005, 0.05), st.integers(1, 4))
def test_burgers_march_bit_identical(seed, nu, stride):
    rng = np.random.default_rng(seed)
    n = 8 * stride + 1
    u0 = 0.5 * rng.standard_normal(n)
    ncols = 6
    left, right = 0.1 * rng.standard_normal(ncols), 0.1 * rng.standard_normal(ncols)
    dx = 1.0 / (n - 1)
    dt = 0.2 * dx * dx / max(nu, 1e-3)
    outs = []
    for mod in (cy, py):
        u = u0.copy()
        out = np.zeros((9, ncols))
        flag = mod.burgers_march(u, nu, dx, dt, 5, ncols, stride, left, right, out)
        outs.append((flag, out, u))
    assert outs[0][0] == outs[1][0]
    assert outs[0][1].tobytes() == outs[1][1].tobytes()
    assert outs[0][2].tobytes() == outs[1][2].tobytes()


def test_backend_switch_roundtrip():
    before = K.BACKEND
    K.use_backend("python")
    assert K.backend() is py and K.BACKEND == "python"
    K.use_backend(before)
    with pytest.raises(ValueError):
        K.backend("fortran")
