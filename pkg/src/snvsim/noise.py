"""Bounded Markovian velocity-error processes.

Two admissible generators are provided: white noise (i.i.d. uniform draws on
(-tau, tau)) and an acceptance-rejection Euler discretization of the
mean-reverting bounded diffusion

    d eps = -alpha eps dt + sigma sqrt((eps + tau)(tau - eps)) dW,

whose paths stay in [-tau, tau]. Proposals leaving the band are redrawn with
a fresh Gaussian increment, which avoids the boundary point masses a clipping
projection would create. Every path is a pure function of (seed, stream)
through a counter-based Philox generator, so realizations are reproducible in
isolation and independent of execution order.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from . import _backend

__all__ = [
    "NoiseKind", "NoiseParams", "NoisePath", "NoiseRealization",
    "sample_white_noise", "sample_jacobi", "sample_jacobi_from",
    "sample_jacobi_ensemble", "evaluate_noise", "zero_noise", "constant_path",
    "piecewise_path", "stream_generator", "MAX_REDRAWS",
]

MAX_REDRAWS = 10 ** 6
_MASK64 = (1 << 64) - 1
_INDEX_EPS = 1e-9


class NoiseKind(str, Enum):
    WHITE = "white"
    JACOBI = "jacobi"


@dataclass(frozen=True)
class NoiseParams:
    """Parameters of the error process; delta_r is the noise grid step."""

    tau: float
    kind: NoiseKind = NoiseKind.WHITE
    alpha: float | None = None
    sigma: float | None = None
    delta_r: float | None = None

    def __post_init__(self):
        if not 0.0 < self.tau:
            raise ValueError("tau must be positive")
        if self.kind == NoiseKind.JACOBI:
            if self.alpha is None or self.alpha <= 0:
                raise ValueError("Jacobi noise needs alpha > 0")
            if self.sigma is None or self.sigma <= 0:
                raise ValueError("Jacobi noise needs sigma > 0")
        if self.delta_r is not None and self.delta_r <= 0:
            raise ValueError("delta_r must be positive")

    def with_delta_r(self, delta_r):
        return replace(self, delta_r=delta_r)


@dataclass(frozen=True)
class NoisePath:
    """Piecewise-constant-in-time path: value values[k] on [k d, (k+1) d)."""

    values: np.ndarray
    delta_r: float

    def __post_init__(self):
        vals = np.ascontiguousarray(self.values, dtype=np.float64)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        if vals.ndim != 1 or vals.shape[0] < 1:
            raise ValueError("path needs at least one value")
        if self.delta_r <= 0:
            raise ValueError("delta_r must be positive")

    @property
    def r_t(self):
        return self.values.shape[0] - 1

    @property
    def t_max(self):
        return self.r_t * self.delta_r


@dataclass(frozen=True)
class NoiseRealization(NoisePath):
    """Sampled admissible path: starts at zero, seeded and replayable."""

    seed: tuple | None = None

    def __post_init__(self):
        super().__post_init__()
        if self.values[0] != 0.0:
            raise ValueError("admissible error paths start at 0")


def stream_generator(seed, stream=0):
    """Philox generator for stream (seed, stream); any stream is reproducible
    without generating its predecessors."""
    key = (int(seed) & _MASK64) | ((int(stream) & _MASK64) << 64)
    return np.random.Generator(np.random.Philox(key=key))


def _stream_bitgen(seed, stream):
    key = (int(seed) & _MASK64) | ((int(stream) & _MASK64) << 64)
    return np.random.Philox(key=key)


def _require_delta_r(params):
    if params.delta_r is None:
        raise ValueError("params.delta_r must be set before sampling")
    return params.delta_r


def sample_white_noise(params, r_t, seed, stream=0):
    """values[0] = 0, values[1..r_t] i.i.d. uniform on (-tau, tau)."""
    if params.kind != NoiseKind.WHITE:
        raise ValueError("params.kind must be WHITE")
    delta_r = _require_delta_r(params)
    gen = stream_generator(seed, stream)
    u = gen.random(r_t)
    vals = np.empty(r_t + 1)
    vals[0] = 0.0
    vals[1:] = params.tau * (2.0 * u - 1.0)
    return NoiseRealization(values=vals, delta_r=delta_r,
                            seed=(int(seed), int(stream)))


def sample_jacobi(params, r_t, seed, stream=0):
    """Acceptance-rejection Euler path of the bounded diffusion, X_0 = 0."""
    if params.kind != NoiseKind.JACOBI:
        raise ValueError("params.kind must be JACOBI")
    delta_r = _require_delta_r(params)
    bg = _stream_bitgen(seed, stream)
    vals = _backend.jacobi_path(bg, params.tau, params.alpha, params.sigma,
                                delta_r, int(r_t), 0.0, MAX_REDRAWS)
    return NoiseRealization(values=vals, delta_r=delta_r,
                            seed=(int(seed), int(stream)))


def sample_jacobi_from(x0, params, r_t, seed, stream=0):
    """Raw chain restarted from state x0 (|x0| <= tau); returns the values
    array only, since a restarted path is not an admissible realization."""
    if abs(x0) > params.tau:
        raise ValueError("|x0| must not exceed tau")
    delta_r = _require_delta_r(params)
    bg = _stream_bitgen(seed, stream)
    return _backend.jacobi_path(bg, params.tau, params.alpha, params.sigma,
                                delta_r, int(r_t), float(x0), MAX_REDRAWS)


def sample_jacobi_ensemble(params, r_t, seed, m, keep="terminal",
                           stream_offset=0, chunk=4096, x0s=None):
    """Sample m independent paths on streams (seed, offset..offset+m-1).

    keep="terminal" returns the m end states X_{r_t} with bounded memory;
    keep="full" returns the (m, r_t + 1) path matrix. x0s optionally
    restarts path k from x0s[k] instead of 0 (replay studies).
    """
    if params.kind != NoiseKind.JACOBI:
        raise ValueError("params.kind must be JACOBI")
    delta_r = _require_delta_r(params)
    if keep not in ("terminal", "full"):
        raise ValueError("keep must be 'terminal' or 'full'")
    if x0s is not None:
        x0s = np.asarray(x0s, dtype=np.float64)
        if x0s.shape != (m,):
            raise ValueError("x0s must have one start state per path")
        if np.max(np.abs(x0s)) > params.tau:
            raise ValueError("|x0| must not exceed tau")
    out = (np.empty(m) if keep == "terminal"
           else np.empty((m, int(r_t) + 1)))
    for lo in range(0, m, chunk):
        hi = min(lo + chunk, m)
        bgs = [_stream_bitgen(seed, stream_offset + k) for k in range(lo, hi)]
        starts = x0s[lo:hi] if x0s is not None else np.zeros(hi - lo)
        if _backend.jacobi_paths is not None:
            block = _backend.jacobi_paths(bgs, params.tau, params.alpha,
                                          params.sigma, delta_r, int(r_t),
                                          starts, MAX_REDRAWS)
        else:
            block = np.stack([
                _backend.jacobi_path(bg, params.tau, params.alpha,
                                     params.sigma, delta_r, int(r_t),
                                     float(starts[i]), MAX_REDRAWS)
                for i, bg in enumerate(bgs)])
        if keep == "terminal":
            out[lo:hi] = block[:, -1]
        else:
            out[lo:hi] = block
    return out


def evaluate_noise(path, t):
    """Left-continuous evaluation eps(t) = values[floor(t / delta_r)]."""
    if t < 0.0 or t > path.t_max * (1.0 + 1e-12):
        raise ValueError(f"t={t} outside the sampled range "
                         f"[0, {path.t_max}]")
    idx = int(np.floor(t / path.delta_r + _INDEX_EPS))
    idx = min(idx, path.r_t)
    return float(path.values[idx])


def zero_noise(t_end, delta_r):
    """Identically-zero admissible path covering [0, t_end]."""
    r_t = int(np.floor(t_end / delta_r + _INDEX_EPS))
    return NoiseRealization(values=np.zeros(r_t + 1), delta_r=delta_r,
                            seed=None)


def constant_path(a, t_end, delta_r):
    """Constant deterministic path (stability studies, local evolution)."""
    r_t = int(np.floor(t_end / delta_r + _INDEX_EPS))
    return NoisePath(values=np.full(r_t + 1, float(a)), delta_r=delta_r)


def piecewise_path(values, delta_r):
    return NoisePath(values=np.asarray(values, dtype=np.float64),
                     delta_r=delta_r)
