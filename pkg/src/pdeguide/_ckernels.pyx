# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled stencil kernels.

Every function mirrors one in ``_pykernels`` with an identical signature;
arrays are C-contiguous float64 of shape (nx, ny), outputs are written in
place.  Edge codes: 0 = x0 (i = 0), 1 = x1 (i = nx-1), 2 = y0 (j = 0),
3 = y1 (j = ny-1).
"""

from libc.math cimport fabs, sqrt, fmax, fmin

cdef enum:
    PAD_EVEN = 0
    PAD_ODD = 1
    PAD_WRAP = 2

cdef enum:
    KIND_PERIODIC = 1
    KIND_NEUMANN = 2
    KIND_DIRICHLET = 3
    KIND_INITIAL = 4

cdef enum:
    EQ_POISSON = 0
    EQ_HEAT = 1
    EQ_BURGERS = 2

cdef enum:
    TARGET_NONE = -1
    TARGET_STATE = 0
    TARGET_GRADIENT = 1


def laplacian(const double[:, ::1] u, double hx, double hy, double[:, ::1] out):
    cdef Py_ssize_t nx = u.shape[0], ny = u.shape[1], i, j
    cdef double ax = 1.0 / (hx * hx), ay = 1.0 / (hy * hy)
    _zero_edges(out)
    for i in range(1, nx - 1):
        for j in range(1, ny - 1):
            out[i, j] = (ax * (u[i - 1, j] - 2.0 * u[i, j] + u[i + 1, j])
                         + ay * (u[i, j - 1] - 2.0 * u[i, j] + u[i, j + 1]))


def deriv_x(const double[:, ::1] u, double hx, double[:, ::1] out):
    cdef Py_ssize_t nx = u.shape[0], ny = u.shape[1], i, j
    cdef double a = 0.5 / hx
    _zero_edges(out)
    for i in range(1, nx - 1):
        for j in range(1, ny - 1):
            out[i, j] = a * (u[i + 1, j] - u[i - 1, j])


def deriv_y(const double[:, ::1] u, double hy, double[:, ::1] out):
    cdef Py_ssize_t nx = u.shape[0], ny = u.shape[1], i, j
    cdef double a = 0.5 / hy
    _zero_edges(out)
    for i in range(1, nx - 1):
        for j in range(1, ny - 1):
            out[i, j] = a * (u[i, j + 1] - u[i, j - 1])


def deriv_xx(const double[:, ::1] u, double hx, double[:, ::1] out):
    cdef Py_ssize_t nx = u.shape[0], ny = u.shape[1], i, j
    cdef double a = 1.0 / (hx * hx)
    _zero_edges(out)
    for i in range(1, nx - 1):
        for j in range(1, ny - 1):
            out[i, j] = a * (u[i - 1, j] - 2.0 * u[i, j] + u[i + 1, j])


cdef inline void _zero_edges(double[:, ::1] out) noexcept nogil:
    cdef Py_ssize_t nx = out.shape[0], ny = out.shape[1], i, j
    for j in range(ny):
        out[0, j] = 0.0
        out[nx - 1, j] = 0.0
    for i in range(nx):
        out[i, 0] = 0.0
        out[i, ny - 1] = 0.0


cdef inline Py_ssize_t _reflect(Py_ssize_t m, Py_ssize_t n) noexcept nogil:
    # mirror about the end nodes without repeating them: u[-1] := u[1]
    cdef Py_ssize_t period = 2 * (n - 1)
    m = m % period
    if m < 0:
        m += period
    if m > n - 1:
        m = period - m
    return m


cdef inline Py_ssize_t _wrap(Py_ssize_t m, Py_ssize_t n) noexcept nogil:
    # ghost-node periodicity: node 0 == node n-2, node n-1 == node 1
    cdef Py_ssize_t period = n - 2
    cdef Py_ssize_t k = (m - 1) % period
    if k < 0:
        k += period
    return k + 1


cdef inline double _ext_x(const double[:, ::1] u, Py_ssize_t m, Py_ssize_t j,
                          int lo, int hi) noexcept nogil:
    cdef Py_ssize_t n = u.shape[0]
    if m < 0:
        if lo == PAD_WRAP:
            return u[_wrap(m, n), j]
        if lo == PAD_ODD:
            return 2.0 * u[0, j] - u[_reflect(m, n), j]
        return u[_reflect(m, n), j]
    if m > n - 1:
        if hi == PAD_WRAP:
            return u[_wrap(m, n), j]
        if hi == PAD_ODD:
            return 2.0 * u[n - 1, j] - u[_reflect(m, n), j]
        return u[_reflect(m, n), j]
    return u[m, j]


cdef inline double _ext_y(const double[:, ::1] u, Py_ssize_t i, Py_ssize_t m,
                          int lo, int hi) noexcept nogil:
    cdef Py_ssize_t n = u.shape[1]
    if m < 0:
        if lo == PAD_WRAP:
            return u[i, _wrap(m, n)]
        if lo == PAD_ODD:
            return 2.0 * u[i, 0] - u[i, _reflect(m, n)]
        return u[i, _reflect(m, n)]
    if m > n - 1:
        if hi == PAD_WRAP:
            return u[i, _wrap(m, n)]
        if hi == PAD_ODD:
            return 2.0 * u[i, n - 1] - u[i, _reflect(m, n)]
        return u[i, _reflect(m, n)]
    return u[i, m]


cdef void _smooth(const double[:, ::1] u, const double[::1] w, const int[::1] pad,
                  double[:, ::1] tmp, double[:, ::1] out) noexcept nogil:
    cdef Py_ssize_t nx = u.shape[0], ny = u.shape[1], i, j, k
    cdef Py_ssize_t r = (w.shape[0] - 1) // 2
    cdef double acc
    for i in range(nx):
        for j in range(ny):
            if i >= r and i < nx - r:
                acc = 0.0
                for k in range(-r, r + 1):
                    acc = acc + w[k + r] * u[i + k, j]
            else:
                acc = 0.0
                for k in range(-r, r + 1):
                    acc = acc + w[k + r] * _ext_x(u, i + k, j, pad[0], pad[1])
            tmp[i, j] = acc
    for i in range(nx):
        for j in range(ny):
            if j >= r and j < ny - r:
                acc = 0.0
                for k in range(-r, r + 1):
                    acc = acc + w[k + r] * tmp[i, j + k]
            else:
                acc = 0.0
                for k in range(-r, r + 1):
                    acc = acc + w[k + r] * _ext_y(tmp, i, j + k, pad[2], pad[3])
            out[i, j] = acc


def smooth(const double[:, ::1] u, const double[::1] w, const int[::1] pad,
           double[:, ::1] tmp, double[:, ::1] out):
    """Separable convolution; ``pad`` holds one padding code per edge."""
    with nogil:
        _smooth(u, w, pad, tmp, out)


cdef void _project(double[:, ::1] u, const int[::1] order, const int[::1] kinds,
                   const double[:, ::1] vals) noexcept nogil:
    cdef Py_ssize_t nx = u.shape[0], ny = u.shape[1], i, j, q
    cdef int e, kind
    for q in range(order.shape[0]):
        e = order[q]
        kind = kinds[e]
        if e == 0:
            for j in range(ny):
                if kind == KIND_PERIODIC:
                    u[0, j] = u[nx - 2, j]
                elif kind == KIND_NEUMANN:
                    u[0, j] = u[1, j]
                else:
                    u[0, j] = vals[0, j]
        elif e == 1:
            for j in range(ny):
                if kind == KIND_PERIODIC:
                    u[nx - 1, j] = u[1, j]
                elif kind == KIND_NEUMANN:
                    u[nx - 1, j] = u[nx - 2, j]
                else:
                    u[nx - 1, j] = vals[1, j]
        elif e == 2:
            for i in range(nx):
                if kind == KIND_PERIODIC:
                    u[i, 0] = u[i, ny - 2]
                elif kind == KIND_NEUMANN:
                    u[i, 0] = u[i, 1]
                else:
                    u[i, 0] = vals[2, i]
        else:
            for i in range(nx):
                if kind == KIND_PERIODIC:
                    u[i, ny - 1] = u[i, 1]
                elif kind == KIND_NEUMANN:
                    u[i, ny - 1] = u[i, ny - 2]
                else:
                    u[i, ny - 1] = vals[3, i]


def project(double[:, ::1] u, const int[::1] order, const int[::1] kinds,
            const double[:, ::1] vals):
    """Overwrite edges in ``order`` (lowest priority first)."""
    with nogil:
        _project(u, order, kinds, vals)


cdef void _residual(const double[:, ::1] u, int eq, double coef, const double[:, ::1] f,
                    double hx, double hy, double[:, ::1] out) noexcept nogil:
    cdef Py_ssize_t nx = u.shape[0], ny = u.shape[1], i, j
    cdef double ax = 1.0 / (hx * hx), ay = 1.0 / (hy * hy)
    cdef double cx = 0.5 / hx, cy = 0.5 / hy
    cdef double uxx
    _zero_edges(out)
    if eq == EQ_POISSON:
        for i in range(1, nx - 1):
            for j in range(1, ny - 1):
                out[i, j] = (-coef * (ax * (u[i - 1, j] - 2.0 * u[i, j] + u[i + 1, j])
                                      + ay * (u[i, j - 1] - 2.0 * u[i, j] + u[i, j + 1]))
                             - f[i, j])
    elif eq == EQ_HEAT:
        for i in range(1, nx - 1):
            for j in range(1, ny - 1):
                uxx = ax * (u[i - 1, j] - 2.0 * u[i, j] + u[i + 1, j])
                out[i, j] = cy * (u[i, j + 1] - u[i, j - 1]) - coef * uxx
    else:
        for i in range(1, nx - 1):
            for j in range(1, ny - 1):
                uxx = ax * (u[i - 1, j] - 2.0 * u[i, j] + u[i + 1, j])
                out[i, j] = (cy * (u[i, j + 1] - u[i, j - 1])
                             + u[i, j] * cx * (u[i + 1, j] - u[i - 1, j])
                             - coef * uxx)


def residual(const double[:, ::1] u, int eq, double coef, const double[:, ::1] f,
             double hx, double hy, double[:, ::1] out):
    with nogil:
        _residual(u, eq, coef, f, hx, hy, out)


def relax(double[:, ::1] u, int eq, double coef, const double[:, ::1] f,
          double hx, double hy, double dt, const double[::1] w, const int[::1] pad,
          int target, const int[::1] order, const int[::1] kinds,
          const double[:, ::1] vals, long n_iter, double blowup,
          double[:, ::1] a, double[:, ::1] tmp, double[:, ::1] r):
    """Run ``n_iter`` deterministic residual-descent iterations in place.

    Returns the number of completed iterations; a value below ``n_iter``
    means the state left the finite range at that iteration.
    """
    cdef Py_ssize_t nx = u.shape[0], ny = u.shape[1], i, j
    cdef long it
    cdef double v
    cdef bint bad = False
    cdef long done = n_iter
    with nogil:
        for it in range(n_iter):
            if target == TARGET_STATE:
                _smooth(u, w, pad, tmp, a)
                for i in range(nx):
                    for j in range(ny):
                        u[i, j] = a[i, j]
                _residual(u, eq, coef, f, hx, hy, r)
            elif target == TARGET_GRADIENT:
                _smooth(u, w, pad, tmp, a)
                _project(a, order, kinds, vals)
                _residual(a, eq, coef, f, hx, hy, r)
            else:
                _residual(u, eq, coef, f, hx, hy, r)
            for i in range(1, nx - 1):
                for j in range(1, ny - 1):
                    v = u[i, j] - dt * r[i, j]
                    u[i, j] = v
                    if not (fabs(v) <= blowup):
                        bad = True
            _project(u, order, kinds, vals)
            if bad:
                done = it
                break
    return done


def burgers_march(double[::1] u, double nu, double dx, double dt, long steps,
                  long ncols, long stride, const double[::1] left,
                  const double[::1] right, double[:, ::1] out):
    """Explicit Godunov-upwind / central-diffusion march on a fine 1D grid.

    ``u`` holds the fine initial state and is advanced in place; column
    ``c`` of ``out`` receives every ``stride``-th fine node after
    ``c * steps`` steps.  Boundary values are interpolated linearly between
    consecutive entries of ``left``/``right``.  Returns -1 on success or the
    global step index at which the CFL number exceeded one.
    """
    cdef Py_ssize_t n = u.shape[0], i, c, s
    cdef double[::1] spare = _empty(n)
    cdef double* cur = &u[0]
    cdef double* nxt = &spare[0]
    cdef double* swap
    cdef double a, fl, fr, f_lo, f_hi, umax, frac
    cdef double lam = dt / dx, mu = nu * dt / (dx * dx)
    cdef long failed = -1
    for i in range(out.shape[0]):
        out[i, 0] = u[i * stride]
    with nogil:
        umax = 0.0
        for i in range(n):
            umax = fmax(umax, fabs(cur[i]))
        for c in range(1, ncols):
            for s in range(steps):
                if umax * lam + 2.0 * mu > 1.0:
                    failed = (c - 1) * steps + s
                    break
                frac = (s + 1.0) / steps
                nxt[0] = (1.0 - frac) * left[c - 1] + frac * left[c]
                nxt[n - 1] = (1.0 - frac) * right[c - 1] + frac * right[c]
                umax = fmax(fabs(nxt[0]), fabs(nxt[n - 1]))
                fl = fmax(cur[0], 0.0)
                fr = fmin(cur[1], 0.0)
                f_lo = fmax(0.5 * fl * fl, 0.5 * fr * fr)
                for i in range(1, n - 1):
                    fl = fmax(cur[i], 0.0)
                    fr = fmin(cur[i + 1], 0.0)
                    f_hi = fmax(0.5 * fl * fl, 0.5 * fr * fr)
                    a = (cur[i] - lam * (f_hi - f_lo)
                         + mu * (cur[i - 1] - 2.0 * cur[i] + cur[i + 1]))
                    nxt[i] = a
                    umax = fmax(umax, fabs(a))
                    f_lo = f_hi
                swap = cur
                cur = nxt
                nxt = swap
            if failed >= 0:
                break
            for i in range(out.shape[0]):
                out[i, c] = cur[i * stride]
        if cur != &u[0]:
            for i in range(n):
                u[i] = cur[i]
    return failed


cdef double[::1] _empty(Py_ssize_t n):
    import numpy as np
    return np.zeros(n)
