"""Pure-numpy backend, bit-compatible with the compiled kernels.

Every accumulation runs in the same order as the Cython code (ascending
kernel index, plain multiply-then-add), so results agree to the last bit
with the extension built with -ffp-contract=off.
"""

import numpy as np


def convolve_velocity(vcell, gamma, out):
    """out[i] = sum_k gamma[k] * vext[i + k], i = 0..n, vext ghost-extended."""
    n = vcell.shape[0]
    n_eta = gamma.shape[0]
    vext = np.concatenate([vcell, np.full(n_eta, vcell[-1])])
    out[:] = 0.0
    for k in range(n_eta):
        out += gamma[k] * vext[k:k + n + 1]
    return 0


def step_upwind(rho, vfull, lam, out):
    """One conservative upwind step.

    Returns (f_in, f_out, sum(out), bv(out), min(out), max(out)); the state
    array matches the compiled kernel bit for bit, the scalar sums may differ
    in the last bits (pairwise vs sequential summation).
    """
    f = rho * vfull[1:]
    f_in = rho[0] * vfull[0]
    f_prev = np.empty_like(f)
    f_prev[0] = f_in
    f_prev[1:] = f[:-1]
    out[:] = rho - lam * (f - f_prev)
    return (float(f_in), float(f[-1]), float(np.sum(out)),
            float(np.sum(np.abs(np.diff(out)))), float(out.min()),
            float(out.max()))


def jacobi_path(bit_generator, tau, alpha, sigma, delta_r, r_t, x0,
                max_redraws):
    """Sample one acceptance-rejection Euler path, values X_0..X_{r_t}.

    Stream contract shared with the compiled kernel: r_t main increments are
    drawn as one block, rejection redraws as singles in step order.
    """
    gen = np.random.Generator(bit_generator)
    z = gen.standard_normal(r_t)
    vals = np.empty(r_t + 1)
    vals[0] = x0
    drift = 1.0 - alpha * delta_r
    sq_dt = np.sqrt(delta_r)
    x = x0
    for n in range(r_t):
        mu = x * drift
        var = (x + tau) * (tau - x)
        if var < 0.0:
            var = 0.0
        sd = sigma * np.sqrt(var) * sq_dt
        prop = mu + sd * z[n]
        tries = 0
        while abs(prop) > tau:
            tries += 1
            if tries > max_redraws:
                raise RuntimeError(
                    f"rejection sampling exceeded {max_redraws} redraws at "
                    f"step {n}; parameters look pathological (x={x}, sd={sd})")
            prop = mu + sd * float(gen.standard_normal())
        vals[n + 1] = prop
        x = prop
    return vals


def jacobi_paths(bit_generators, tau, alpha, sigma, delta_r, r_t, x0,
                 max_redraws):
    """Vectorized multi-path variant of jacobi_path (same stream contract).

    Each path owns its bit generator, so the step-synchronous recurrence
    consumes every stream exactly as the sequential sampler would.
    """
    m = len(bit_generators)
    gens = [np.random.Generator(bg) for bg in bit_generators]
    z = np.empty((m, r_t))
    for i, gen in enumerate(gens):
        z[i] = gen.standard_normal(r_t)
    vals = np.empty((m, r_t + 1))
    x = np.broadcast_to(np.asarray(x0, dtype=np.float64), (m,)).copy()
    vals[:, 0] = x
    drift = 1.0 - alpha * delta_r
    sq_dt = np.sqrt(delta_r)
    for n in range(r_t):
        mu = x * drift
        var = (x + tau) * (tau - x)
        np.maximum(var, 0.0, out=var)
        sd = sigma * np.sqrt(var) * sq_dt
        prop = mu + sd * z[:, n]
        for i in np.flatnonzero(np.abs(prop) > tau):
            p = prop[i]
            tries = 0
            while abs(p) > tau:
                tries += 1
                if tries > max_redraws:
                    raise RuntimeError(
                        f"rejection sampling exceeded {max_redraws} redraws "
                        f"at step {n} of path {i}")
                p = mu[i] + sd[i] * float(gens[i].standard_normal())
            prop[i] = p
        x = prop
        vals[:, n + 1] = x
    return vals
