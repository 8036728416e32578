# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: nonlocal velocity convolution, upwind stepping and
acceptance-rejection Euler sampling of the bounded mean-reverting diffusion.

Floating-point semantics match snvsim._backend.fallback operation for
operation (same accumulation order, no fused multiply-add), so both backends
produce bit-identical state arrays.
"""

import numpy as np

cimport numpy as cnp
from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport fabs, sqrt
from numpy.random cimport bitgen_t
from numpy.random.c_distributions cimport random_standard_normal

cnp.import_array()


def convolve_velocity(const double[::1] vcell, const double[::1] gamma,
                      double[::1] out):
    """Kernel-weighted downstream velocity average.

    out[i] = sum_k gamma[k] * vext[i + k] for i = 0..n, where vext extends
    vcell by repeating the last entry (downstream ghost cells). out[0] is the
    velocity of the upstream ghost cell, out[j + 1] the one of cell j.
    """
    cdef Py_ssize_t n = vcell.shape[0]
    cdef Py_ssize_t n_eta = gamma.shape[0]
    cdef Py_ssize_t i, k, idx
    cdef double acc, term, vlast
    with nogil:
        vlast = vcell[n - 1]
        for i in range(n + 1):
            acc = 0.0
            for k in range(n_eta):
                idx = i + k
                if idx < n:
                    term = gamma[k] * vcell[idx]
                else:
                    term = gamma[k] * vlast
                acc = acc + term
            out[i] = acc
    return 0


def step_upwind(const double[::1] rho, const double[::1] vfull, double lam,
                double[::1] out):
    """One conservative upwind step.

    vfull has length n + 1 as produced by convolve_velocity; the inflow flux
    uses the upstream ghost cell with value rho[0]. Returns
    (f_in, f_out, sum(out), bv(out), min(out), max(out)); the sums run in a
    single pass so callers avoid extra reductions. The state array is
    bit-identical to the fallback's, the scalar sums may differ in the last
    bits (sequential vs pairwise summation).
    """
    cdef Py_ssize_t n = rho.shape[0]
    cdef Py_ssize_t j
    cdef double f_prev, f_cur, f_in
    cdef double total = 0.0, bv = 0.0, mn, mx, val, prev
    with nogil:
        f_in = rho[0] * vfull[0]
        f_prev = f_in
        prev = 0.0
        mn = 1e300
        mx = -1e300
        for j in range(n):
            f_cur = rho[j] * vfull[j + 1]
            val = rho[j] - lam * (f_cur - f_prev)
            out[j] = val
            f_prev = f_cur
            total = total + val
            if j > 0:
                bv = bv + fabs(val - prev)
            if val < mn:
                mn = val
            if val > mx:
                mx = val
            prev = val
    return f_in, f_prev, total, bv, mn, mx


def jacobi_path(object bit_generator, double tau, double alpha, double sigma,
                double delta_r, Py_ssize_t r_t, double x0,
                Py_ssize_t max_redraws):
    """Sample one acceptance-rejection Euler path, values X_0..X_{r_t}.

    Stream contract (shared with the fallback): the first r_t standard
    normals drawn from the stream are the main proposal increments, further
    singles are rejection redraws in chronological step order.
    """
    cdef bitgen_t *rng = <bitgen_t *> PyCapsule_GetPointer(
        bit_generator.capsule, "BitGenerator")
    path = np.empty(r_t + 1, dtype=np.float64)
    chunk = np.empty(r_t, dtype=np.float64)
    cdef double[::1] vals = path
    cdef double[::1] z = chunk
    cdef Py_ssize_t n, tries
    cdef double x, mu, sd, var, prop
    cdef double drift = 1.0 - alpha * delta_r
    cdef double sq_dt = sqrt(delta_r)
    cdef bint failed = 0
    with bit_generator.lock:
        with nogil:
            for n in range(r_t):
                z[n] = random_standard_normal(rng)
            vals[0] = x0
            x = x0
            for n in range(r_t):
                mu = x * drift
                var = (x + tau) * (tau - x)
                if var < 0.0:
                    var = 0.0
                sd = sigma * sqrt(var) * sq_dt
                prop = mu + sd * z[n]
                tries = 0
                while fabs(prop) > tau:
                    tries = tries + 1
                    if tries > max_redraws:
                        failed = 1
                        break
                    prop = mu + sd * random_standard_normal(rng)
                if failed:
                    break
                vals[n + 1] = prop
                x = prop
    if failed:
        raise RuntimeError(
            f"rejection sampling exceeded {max_redraws} redraws at step {n}; "
            f"parameters look pathological (x={x}, sd={sd})")
    return path
