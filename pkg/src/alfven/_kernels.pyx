# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops.  ``_kernels_py`` holds reference numpy versions with
identical signatures; ``kernels`` picks one at import."""

from libc.math cimport floor, fabs
cimport cython

ctypedef double complex cplx


cdef inline bint _in_band(Py_ssize_t i, Py_ssize_t n, Py_ssize_t b) nogil:
    return i <= b or i >= n - b


def spectral_nonlinear(cplx[:, :, :, :, ::1] M, double[::1] k1, double[::1] k2, double[::1] k3,
                       Py_ssize_t b1, Py_ssize_t b2, Py_ssize_t b3,
                       cplx[:, :, :, ::1] dzp, cplx[:, :, :, ::1] dzm, cplx[:, :, ::1] phat,
                       cplx[:, :, :, ::1] zp, cplx[:, :, :, ::1] zm, double b0, bint nonlinear):
    """Projected nonlinear terms and pressure from ``M[a,b] = FFT(z+^a z-^b)``,
    plus the Alfven terms ``+-i b0 k3 z+-`` (pass ``b0 = 0`` to omit them).

    Only modes with ``|n_i| <= b_i`` are written; callers pass zeroed outputs.
    """
    cdef Py_ssize_t n1 = dzp.shape[1], n2 = dzp.shape[2], n3 = dzp.shape[3]
    cdef Py_ssize_t i, j, l, a
    cdef double ka[3]
    cdef double q, inv
    cdef cplx S[3]
    cdef cplx T[3]
    cdef cplx ks, kt
    with nogil:
        for i in range(n1):
            if not _in_band(i, n1, b1):
                continue
            ka[0] = k1[i]
            for j in range(n2):
                if not _in_band(j, n2, b2):
                    continue
                ka[1] = k2[j]
                for l in range(b3 + 1 if b3 + 1 < n3 else n3):
                    ka[2] = k3[l]
                    if not nonlinear:
                        for a in range(3):
                            dzp[a, i, j, l] = 1j * b0 * ka[2] * zp[a, i, j, l]
                            dzm[a, i, j, l] = -1j * b0 * ka[2] * zm[a, i, j, l]
                        continue
                    q = ka[0] * ka[0] + ka[1] * ka[1] + ka[2] * ka[2]
                    inv = 1.0 / q if q > 0 else 0.0
                    for a in range(3):
                        S[a] = ka[0] * M[a, 0, i, j, l] + ka[1] * M[a, 1, i, j, l] + ka[2] * M[a, 2, i, j, l]
                        T[a] = ka[0] * M[0, a, i, j, l] + ka[1] * M[1, a, i, j, l] + ka[2] * M[2, a, i, j, l]
                    ks = (ka[0] * S[0] + ka[1] * S[1] + ka[2] * S[2]) * inv
                    kt = (ka[0] * T[0] + ka[1] * T[1] + ka[2] * T[2]) * inv
                    phat[i, j, l] = -ks
                    for a in range(3):
                        dzp[a, i, j, l] = -1j * (S[a] - ka[a] * ks) + 1j * b0 * ka[2] * zp[a, i, j, l]
                        dzm[a, i, j, l] = -1j * (T[a] - ka[a] * kt) - 1j * b0 * ka[2] * zm[a, i, j, l]


def lawson_stage(cplx[:, ::1] u, cplx[:, ::1] k, cplx[::1] e1, cplx[::1] e2,
                 double c, int mode, cplx[:, ::1] out):
    """RK stage combinations on flattened ``(3, M)`` spectra.

    mode 0: ``e1*(u + c*k)``;  mode 1: ``e1*u + c*k``;  mode 2: ``e1*u + c*e2*k``.
    """
    cdef Py_ssize_t n = u.shape[1], a, m
    with nogil:
        for a in range(u.shape[0]):
            if mode == 0:
                for m in range(n):
                    out[a, m] = e1[m] * (u[a, m] + c * k[a, m])
            elif mode == 1:
                for m in range(n):
                    out[a, m] = e1[m] * u[a, m] + c * k[a, m]
            else:
                for m in range(n):
                    out[a, m] = e1[m] * u[a, m] + c * (e2[m] * k[a, m])


def lawson_final(cplx[:, ::1] u, cplx[:, ::1] ka, cplx[:, ::1] kb, cplx[:, ::1] kc, cplx[:, ::1] kd,
                 cplx[::1] efull, cplx[::1] ehalf, double h, cplx[:, ::1] out):
    """``E(h)u + h/6 (E(h)k1 + 2E(h/2)(k2+k3) + k4)``."""
    cdef Py_ssize_t n = u.shape[1], a, m
    cdef double c = h / 6.0
    with nogil:
        for a in range(u.shape[0]):
            for m in range(n):
                out[a, m] = efull[m] * u[a, m] + c * (efull[m] * ka[a, m]
                                                      + 2.0 * (ehalf[m] * (kb[a, m] + kc[a, m])) + kd[a, m])


cdef inline void _weights(double f, double* w) nogil:
    w[0] = -f * (f - 1.0) * (f - 2.0) / 6.0
    w[1] = (f + 1.0) * (f - 1.0) * (f - 2.0) / 2.0
    w[2] = -(f + 1.0) * f * (f - 2.0) / 2.0
    w[3] = (f + 1.0) * f * (f - 1.0) / 6.0


def tricubic(double[:, :, :, ::1] fields, double[::1] origin, double[::1] spacing,
             double[:, ::1] pos, double[:, ::1] out):
    """Periodic 4-point Lagrange interpolation in each axis (64-point stencil)."""
    cdef Py_ssize_t nf = fields.shape[0], n1 = fields.shape[1], n2 = fields.shape[2], n3 = fields.shape[3]
    cdef Py_ssize_t npos = pos.shape[0], p, q, a, b, c
    cdef double s, w1[4]
    cdef double w2[4]
    cdef double w3[4]
    cdef Py_ssize_t i1[4]
    cdef Py_ssize_t i2[4]
    cdef Py_ssize_t i3[4]
    cdef double base, acc, wab
    cdef long m
    with nogil:
        for p in range(npos):
            s = (pos[p, 0] - origin[0]) / spacing[0]
            base = floor(s)
            _weights(s - base, w1)
            m = <long>base
            for a in range(4):
                i1[a] = ((m - 1 + a) % n1 + n1) % n1
            s = (pos[p, 1] - origin[1]) / spacing[1]
            base = floor(s)
            _weights(s - base, w2)
            m = <long>base
            for a in range(4):
                i2[a] = ((m - 1 + a) % n2 + n2) % n2
            s = (pos[p, 2] - origin[2]) / spacing[2]
            base = floor(s)
            _weights(s - base, w3)
            m = <long>base
            for a in range(4):
                i3[a] = ((m - 1 + a) % n3 + n3) % n3
            for q in range(nf):
                acc = 0.0
                for a in range(4):
                    for b in range(4):
                        wab = w1[a] * w2[b]
                        for c in range(4):
                            acc = acc + wab * w3[c] * fields[q, i1[a], i2[b], i3[c]]
                out[q, p] = acc


cdef inline double _cubic(double f, double* v) nogil:
    cdef double w[4]
    _weights(f, w)
    return w[0] * v[0] + w[1] * v[1] + w[2] * v[2] + w[3] * v[3]


cdef inline double _dcubic(double f, double* v) nogil:
    return (-(3 * f * f - 6 * f + 2) / 6.0 * v[0] + (3 * f * f - 4 * f - 1) / 2.0 * v[1]
            - (3 * f * f - 2 * f - 2) / 2.0 * v[2] + (3 * f * f - 1) / 6.0 * v[3])


def column_roots(double[:, :, ::1] u, double period, double[::1] levels, double[:, :, ::1] out):
    """Solve ``u(x1, x2, s) = c`` for the fractional node index ``s`` per column.

    ``u`` holds nodal values of a function with ``u(s + N3) = u(s) + period``
    that increases in ``s``.  Roots are refined on the local cubic through the
    four surrounding nodes by safeguarded Newton/bisection.  Returns the number
    of columns where the bracket was not monotone (then ``out`` is NaN there).
    """
    cdef Py_ssize_t n1 = u.shape[0], n2 = u.shape[1], n3 = u.shape[2], nl = levels.shape[0]
    cdef Py_ssize_t i, j, l, kk, it, a
    cdef double c, u0, shift, lo, hi, f, val, der, v[4]
    cdef long wraps, k
    cdef int bad = 0
    cdef bint ok
    with nogil:
        for i in range(n1):
            for j in range(n2):
                ok = True
                for kk in range(n3 - 1):
                    if u[i, j, kk + 1] <= u[i, j, kk]:
                        ok = False
                if u[i, j, 0] + period <= u[i, j, n3 - 1]:
                    ok = False
                if not ok:
                    bad += 1
                    for l in range(nl):
                        out[l, i, j] = 0.0 / 0.0
                    continue
                u0 = u[i, j, 0]
                for l in range(nl):
                    c = levels[l]
                    wraps = <long>floor((c - u0) / period)
                    c = c - wraps * period
                    k = n3 - 1
                    for kk in range(n3 - 1):
                        if u[i, j, kk + 1] > c:
                            k = kk
                            break
                    for a in range(4):
                        it = k - 1 + a
                        shift = 0.0
                        if it < 0:
                            it += n3
                            shift = -period
                        elif it >= n3:
                            it -= n3
                            shift = period
                        v[a] = u[i, j, it] + shift - c
                    lo = 0.0
                    hi = 1.0
                    f = -v[1] / (v[2] - v[1])
                    for it in range(60):
                        val = _cubic(f, v)
                        if fabs(val) < 1e-15 * (1.0 + fabs(c)):
                            break
                        if val > 0:
                            hi = f
                        else:
                            lo = f
                        der = _dcubic(f, v)
                        if der > 0:
                            f = f - val / der
                        if der <= 0 or f <= lo or f >= hi:
                            f = 0.5 * (lo + hi)
                        if hi - lo < 1e-15:
                            break
                    out[l, i, j] = k + f + wraps * n3
    return bad
