"""Pure numpy versions of the compiled kernels in ``_ckernels.pyx``.

Signatures and in-place output conventions are identical so the two
backends are interchangeable.
"""

from __future__ import annotations

import numpy as np

PAD_EVEN, PAD_ODD, PAD_WRAP = 0, 1, 2
KIND_PERIODIC, KIND_NEUMANN, KIND_DIRICHLET, KIND_INITIAL = 1, 2, 3, 4
EQ_POISSON, EQ_HEAT, EQ_BURGERS = 0, 1, 2
TARGET_NONE, TARGET_STATE, TARGET_GRADIENT = -1, 0, 1


def _zero_edges(out):
    out[0, :] = 0.0
    out[-1, :] = 0.0
    out[:, 0] = 0.0
    out[:, -1] = 0.0


def laplacian(u, hx, hy, out):
    _zero_edges(out)
    c = u[1:-1, 1:-1]
    out[1:-1, 1:-1] = ((u[:-2, 1:-1] - 2.0 * c + u[2:, 1:-1]) / (hx * hx)
                       + (u[1:-1, :-2] - 2.0 * c + u[1:-1, 2:]) / (hy * hy))


def deriv_x(u, hx, out):
    _zero_edges(out)
    out[1:-1, 1:-1] = (0.5 / hx) * (u[2:, 1:-1] - u[:-2, 1:-1])


def deriv_y(u, hy, out):
    _zero_edges(out)
    out[1:-1, 1:-1] = (0.5 / hy) * (u[1:-1, 2:] - u[1:-1, :-2])


def deriv_xx(u, hx, out):
    _zero_edges(out)
    out[1:-1, 1:-1] = (u[:-2, 1:-1] - 2.0 * u[1:-1, 1:-1] + u[2:, 1:-1]) / (hx * hx)


def _reflect(m, n):
    period = 2 * (n - 1)
    m = np.mod(m, period)
    return np.where(m > n - 1, period - m, m)


def _wrap(m, n):
    return np.mod(m - 1, n - 2) + 1


def _pad_axis0(u, r, lo, hi):
    n = u.shape[0]
    below = np.arange(-r, 0)
    above = np.arange(n, n + r)
    parts = []
    for idx, mode, anchor in ((below, lo, 0), (above, hi, n - 1)):
        if mode == PAD_WRAP:
            parts.append(u[_wrap(idx, n)])
        elif mode == PAD_ODD:
            parts.append(2.0 * u[anchor] - u[_reflect(idx, n)])
        else:
            parts.append(u[_reflect(idx, n)])
    return np.concatenate([parts[0], u, parts[1]], axis=0)


def _smooth_axis0(u, w, lo, hi):
    r = (len(w) - 1) // 2
    p = _pad_axis0(u, r, lo, hi)
    n = u.shape[0]
    acc = np.zeros_like(u)
    for k in range(len(w)):
        acc += w[k] * p[k:k + n]
    return acc


def smooth(u, w, pad, tmp, out):
    tmp[...] = _smooth_axis0(np.asarray(u), w, pad[0], pad[1])
    out[...] = _smooth_axis0(tmp.T, w, pad[2], pad[3]).T


def project(u, order, kinds, vals):
    nx, ny = u.shape
    for e in order:
        kind = kinds[e]
        if e == 0:
            u[0, :] = (u[nx - 2, :] if kind == KIND_PERIODIC
                       else u[1, :] if kind == KIND_NEUMANN else vals[0, :ny])
        elif e == 1:
            u[nx - 1, :] = (u[1, :] if kind == KIND_PERIODIC
                            else u[nx - 2, :] if kind == KIND_NEUMANN else vals[1, :ny])
        elif e == 2:
            u[:, 0] = (u[:, ny - 2] if kind == KIND_PERIODIC
                       else u[:, 1] if kind == KIND_NEUMANN else vals[2, :nx])
        else:
            u[:, ny - 1] = (u[:, 1] if kind == KIND_PERIODIC
                            else u[:, ny - 2] if kind == KIND_NEUMANN else vals[3, :nx])


def residual(u, eq, coef, f, hx, hy, out):
    _zero_edges(out)
    c = u[1:-1, 1:-1]
    uxx = (u[:-2, 1:-1] - 2.0 * c + u[2:, 1:-1]) / (hx * hx)
    if eq == EQ_POISSON:
        uyy = (u[1:-1, :-2] - 2.0 * c + u[1:-1, 2:]) / (hy * hy)
        out[1:-1, 1:-1] = -coef * (uxx + uyy) - f[1:-1, 1:-1]
        return
    uy = (0.5 / hy) * (u[1:-1, 2:] - u[1:-1, :-2])
    if eq == EQ_HEAT:
        out[1:-1, 1:-1] = uy - coef * uxx
    else:
        ux = (0.5 / hx) * (u[2:, 1:-1] - u[:-2, 1:-1])
        out[1:-1, 1:-1] = uy + c * ux - coef * uxx


def relax(u, eq, coef, f, hx, hy, dt, w, pad, target, order, kinds, vals,
          n_iter, blowup, a, tmp, r):
    for it in range(n_iter):
        if target == TARGET_STATE:
            smooth(u, w, pad, tmp, a)
            u[...] = a
            residual(u, eq, coef, f, hx, hy, r)
        elif target == TARGET_GRADIENT:
            smooth(u, w, pad, tmp, a)
            project(a, order, kinds, vals)
            residual(a, eq, coef, f, hx, hy, r)
        else:
            residual(u, eq, coef, f, hx, hy, r)
        u[1:-1, 1:-1] -= dt * r[1:-1, 1:-1]
        # NaN compares false, so this also catches non-finite entries
        bad = not (np.abs(u[1:-1, 1:-1]).max() <= blowup)
        project(u, order, kinds, vals)
        if bad:
            return it
    return n_iter


def burgers_march(u, nu, dx, dt, steps, ncols, stride, left, right, out):
    lam = dt / dx
    mu = nu * dt / (dx * dx)
    out[:, 0] = u[::stride][:out.shape[0]]
    for c in range(1, ncols):
        for s in range(steps):
            if np.abs(u).max() * lam + 2.0 * mu > 1.0:
                return (c - 1) * steps + s
            fl = np.maximum(u[:-1], 0.0)
            fr = np.minimum(u[1:], 0.0)
            flux = np.maximum(0.5 * fl * fl, 0.5 * fr * fr)
            nxt = np.empty_like(u)
            nxt[1:-1] = (u[1:-1] - lam * (flux[1:] - flux[:-1])
                         + mu * (u[:-2] - 2.0 * u[1:-1] + u[2:]))
            frac = (s + 1.0) / steps
            nxt[0] = (1.0 - frac) * left[c - 1] + frac * left[c]
            nxt[-1] = (1.0 - frac) * right[c - 1] + frac * right[c]
            u[:] = nxt
        out[:, c] = u[::stride][:out.shape[0]]
    return -1
