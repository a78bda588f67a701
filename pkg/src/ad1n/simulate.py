"""Sample path generation on a uniform grid.

Y is advanced with its exact transition law: conditionally on Y_t, the value
Y_{t+dt} is c times a noncentral chi-square with df = 4a/sigma_1^2 degrees
of freedom and noncentrality Y_t * exp(-b*dt) / c, where

    c = sigma_1^2 * (1 - exp(-b*dt)) / (4b)      (c = sigma_1^2*dt/4 at b=0).

For df >= 1 the draw is decomposed as chi2(df-1) + (Z + sqrt(ncp))^2, which
lets the chi-square and normal variates be drawn in vectorized blocks ahead
of the recursion; for df in (0, 1) it falls back to per-step noncentral
chi-square draws, and df = 0 (a = 0) uses the Poisson mixture with an atom
at zero.  This keeps Y >= 0 exactly, with no discretization error in Y.

X is advanced by a conditional Euler-type step with the drift integrated
exactly over the step,

    X_{t+dt} = e^{-theta*dt} X_t + m~ - k~ * Y_t + sqrt(Y_t)*rho_tilde*dB,

where (m~, k~) are the exact one-step conditional-mean coefficients (the
same integrals the one-step estimator map uses), so E[X_{t+dt} | F_t] is
exact and only the noise term carries the O(dt) left-point approximation.
The plain Euler drift (m - kappa*Y_t - theta*X_t)*dt agrees with this step
to first order but tilts the growth rate by ~ ||theta||^2 dt/2 and biases
the drift estimators by sqrt(T)*O(dt), which is visible at the step sizes
the acceptance experiments use.

The first Brownian increment dB^1 is reconstructed from the exact Y
transition, dB^1 = (Y_{t+dt} - E[Y_{t+dt} | F_t]) / (rho_11*sqrt(Y_t)), so
the cross-correlation between Y and X noise is preserved to first order in
dt and the reconstructed increment is exactly conditionally centered; when
Y_t <= 1e-12 a fresh N(0, dt) increment is substituted.  The remaining
coordinates dB^2..dB^d are independent N(0, dt).

Randomness comes from the counter-based Philox generator keyed by
(seed, stream), so every path index owns an independent substream and
results are bit-reproducible for fixed (params, horizon, delta, seed).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from ._matfun import one_step_conditional_mean_coeffs
from .errors import InadmissibleParamsError, InvalidGridError
from .model import ModelParams, validate

#: Y values at or below this use a fresh normal instead of the reconstructed
#: Brownian increment.
RECONSTRUCT_EPS = 1e-12

def substream(master_seed: int, index: int) -> tuple[int, int]:
    """Key of the Philox substream owned by path ``index``."""
    return (int(master_seed), int(index))


def generator(seed) -> np.random.Generator:
    """Philox generator for a seed given as an int or a (master, index) key."""
    if isinstance(seed, (tuple, list)):
        key = np.array(seed, dtype=np.uint64)
    else:
        key = np.array([int(seed), 0], dtype=np.uint64)
    if key.shape != (2,):
        raise InvalidGridError("seed must be an int or a pair of ints")
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class Path:
    """A simulated trajectory on the uniform grid t_k = k*delta."""

    delta: float
    times: np.ndarray  # (N+1,)
    states: np.ndarray  # (N+1, d) with column 0 = Y
    seed: object
    params_hash: str

    @property
    def Y(self) -> np.ndarray:
        return self.states[:, 0]

    @property
    def X(self) -> np.ndarray:
        return self.states[:, 1:]

    @property
    def n(self) -> int:
        return self.states.shape[1] - 1

    @property
    def n_steps(self) -> int:
        return self.states.shape[0] - 1

    @property
    def horizon(self) -> float:
        return float(self.times[-1])


def _resolve_initials(params: ModelParams, rng: np.random.Generator):
    y0 = params.y0(rng) if callable(params.y0) else float(params.y0)
    if callable(params.x0):
        x0 = np.asarray(params.x0(rng), dtype=float).reshape(params.n)
    else:
        x0 = np.array(params.x0, dtype=float)
    if y0 < 0:
        raise InadmissibleParamsError("initial Y must be nonnegative")
    return y0, x0


def _cir_constants(a: float, b: float, sigma1: float, delta: float):
    if b != 0.0:
        emb = math.exp(-b * delta)
        c = sigma1 * sigma1 * (1.0 - emb) / (4.0 * b)
    else:
        emb = 1.0
        c = sigma1 * sigma1 * delta / 4.0
    return emb, c


def _draw_y_slow(rng, df, ncp):
    """Single exact CIR transition draw (unscaled) for df < 1."""
    if df > 0.0:
        if ncp > 0.0:
            return rng.noncentral_chisquare(df, ncp)
        return rng.chisquare(df)
    j = rng.poisson(ncp / 2.0) if ncp > 0.0 else 0
    return rng.chisquare(2 * j) if j > 0 else 0.0


def simulate_path(
    params: ModelParams,
    horizon: float,
    delta: float,
    seed,
    _force_general: bool = False,
) -> Path:
    """Simulate (Y, X) on the grid k*delta, k = 0..floor(horizon/delta).

    Deterministic given (params, horizon, delta, seed).  ``seed`` may be a
    plain int or a (master_seed, stream_index) pair from :func:`substream`.
    """
    if delta <= 0:
        raise InvalidGridError("delta must be positive")
    if horizon < delta:
        raise InvalidGridError("horizon must be at least one step")
    report = validate(params)
    if not report.ok:
        raise InadmissibleParamsError("; ".join(report.violations))

    N = int(math.floor(horizon / delta + 1e-9))
    n, d = params.n, params.d
    rng = generator(seed)
    y0, x0 = _resolve_initials(params, rng)

    a, b, sigma1 = float(params.a), float(params.b), params.sigma1
    emb, c = _cir_constants(a, b, sigma1, delta)
    df = 4.0 * a / (sigma1 * sigma1)
    sq_delta = math.sqrt(delta)

    # vectorized pre-draws; the slow CIR branch draws per step instead
    fast = df >= 1.0
    if fast:
        chi_part = rng.chisquare(df - 1.0, size=N) if df > 1.0 else np.zeros(N)
        z_y = rng.standard_normal(N)
    dB_J = rng.standard_normal((N, n)) * sq_delta
    fresh1 = rng.standard_normal(N) * sq_delta

    states = np.empty((N + 1, d))
    states[0, 0] = y0
    states[0, 1:] = x0

    if n == 1 and not _force_general:
        _loop_scalar(params, states, N, delta, emb, c, df, fast,
                     chi_part if fast else None, z_y if fast else None,
                     dB_J, fresh1, rng)
    else:
        _loop_general(params, states, N, delta, emb, c, df, fast,
                      chi_part if fast else None, z_y if fast else None,
                      dB_J, fresh1, rng)

    if np.any(states[:, 0] < 0):  # exact transitions cannot go negative
        raise AssertionError("negative Y produced by exact CIR transition")

    times = np.arange(N + 1) * delta
    return Path(delta=float(delta), times=times, states=states, seed=seed,
                params_hash=params.digest())


def _loop_scalar(params, states, N, delta, emb, c, df, fast,
                 chi_part, z_y, dB_J, fresh1, rng):
    """n = 1 specialization on plain floats (identical draws to the
    general loop, so the two are interchangeable for fixed seed)."""
    a, b, sigma1 = float(params.a), float(params.b), params.sigma1
    emth, m_t, k_t = one_step_conditional_mean_coeffs(
        a, b, params.m, params.kappa, params.theta, delta
    )
    eth = float(emth[0, 0])
    mt0 = float(m_t[0])
    kt0 = float(k_t[0])
    a_t = a * (1.0 - emb) / b if b != 0.0 else a * delta
    rj1 = float(params.rho_J1[0])
    rjj = float(params.rho_JJ[0, 0])
    y = states[0, 0]
    x = states[0, 1]
    for k in range(N):
        ncp = y * emb / c
        if fast:
            zz = z_y[k] + math.sqrt(ncp)
            y_new = c * (chi_part[k] + zz * zz)
        else:
            y_new = c * _draw_y_slow(rng, df, ncp)
        if y > RECONSTRUCT_EPS:
            dB1 = (y_new - emb * y - a_t) / (sigma1 * math.sqrt(y))
        else:
            dB1 = fresh1[k]
        x = eth * x + mt0 - kt0 * y + math.sqrt(y) * (rj1 * dB1 + rjj * dB_J[k, 0])
        y = y_new
        states[k + 1, 0] = y
        states[k + 1, 1] = x


def _loop_general(params, states, N, delta, emb, c, df, fast,
                  chi_part, z_y, dB_J, fresh1, rng):
    a, b, sigma1 = float(params.a), float(params.b), params.sigma1
    emth, m_t, k_t = one_step_conditional_mean_coeffs(
        a, b, params.m, params.kappa, params.theta, delta
    )
    a_t = a * (1.0 - emb) / b if b != 0.0 else a * delta
    rho_J1 = np.array(params.rho_J1)
    rho_JJ = np.array(params.rho_JJ)
    y = states[0, 0]
    x = states[0, 1:].copy()
    for k in range(N):
        ncp = y * emb / c
        if fast:
            zz = z_y[k] + math.sqrt(ncp)
            y_new = c * (chi_part[k] + zz * zz)
        else:
            y_new = c * _draw_y_slow(rng, df, ncp)
        if y > RECONSTRUCT_EPS:
            dB1 = (y_new - emb * y - a_t) / (sigma1 * math.sqrt(y))
        else:
            dB1 = fresh1[k]
        x = emth @ x + m_t - k_t * y + math.sqrt(y) * (
            rho_J1 * dB1 + rho_JJ @ dB_J[k]
        )
        y = y_new
        states[k + 1, 0] = y
        states[k + 1, 1:] = x


@dataclass(frozen=True)
class CriticalLimitSample:
    """One draw of the path functionals of the zero-started process
    (Y, X) with dY = a dt + rho_11 sqrt(Y) dB^1, dX = m dt + sqrt(Y) rho~ dB
    on [0, 1]:  end values, Riemann integrals (left point) and Ito sums."""

    y1: float
    x1: np.ndarray  # (n,)
    int_y: float
    int_x: np.ndarray  # (n,)
    int_yy: float
    int_xx: np.ndarray  # (n, n)
    int_yx: np.ndarray  # (n,)
    int_y_dy: float
    int_y_dx: np.ndarray  # (n,)
    int_x_dx: np.ndarray  # (n, n), entry (i, j) = sum X^i d(X^j)


def _functionals_from_arrays(times, Y, X, scale_t: float) -> CriticalLimitSample:
    """Left-point quadrature / Ito sums of the ten limit functionals,
    with time rescaled by scale_t (state implicitly rescaled by scale_t
    through the caller)."""
    delta = float(times[1] - times[0])
    T = float(times[-1])
    s = scale_t
    Yl, Xl = Y[:-1], X[:-1, :]
    dY, dX = np.diff(Y), np.diff(X, axis=0)
    return CriticalLimitSample(
        y1=float(Y[-1] / s),
        x1=X[-1] / s,
        int_y=float(np.sum(Yl) * delta / s**2),
        int_x=np.sum(Xl, axis=0) * delta / s**2,
        int_yy=float(np.sum(Yl**2) * delta / s**3),
        int_xx=(Xl.T @ Xl) * delta / s**3,
        int_yx=(Yl @ Xl) * delta / s**3,
        int_y_dy=float(np.sum(Yl * dY)) / s**2,
        int_y_dx=(Yl @ dX) / s**2,
        int_x_dx=(Xl.T @ dX) / s**2,
    )


def simulate_critical_limit(
    params: ModelParams, seed, fine_delta: float = 1e-3
) -> CriticalLimitSample:
    """Simulate the zero-started limit process on [0, 1] and return its
    functionals.  Only a, m and rho are read from ``params``; b, kappa and
    theta are forced to zero internally."""
    if not (0 < fine_delta <= 1e-3):
        raise InvalidGridError("fine_delta must be in (0, 1e-3]")
    base = ModelParams(
        n=params.n,
        a=params.a,
        b=0.0,
        m=params.m,
        kappa=np.zeros(params.n),
        theta=np.zeros((params.n, params.n)),
        rho=params.rho,
        y0=0.0,
        x0=np.zeros(params.n),
    )
    path = simulate_path(base, 1.0, fine_delta, seed)
    return _functionals_from_arrays(path.times, path.Y, path.X, scale_t=1.0)


def scaled_critical_functionals(path: Path) -> CriticalLimitSample:
    """Functionals of a horizon-T path under the critical scaling
    (Y_T/T, X_T/T, T^-2 int Y, ..., T^-2 sum Y dY, ...).

    By the Brownian scaling identity these match the distribution of the
    [0, 1] limit functionals when the path is the zero-started critical
    process.
    """
    return _functionals_from_arrays(path.times, path.Y, path.X,
                                    scale_t=float(path.times[-1]))


def write_path_csv(path: Path, csv_file: str, sidecar: dict | None = None) -> None:
    """Write a path as CSV (header t, Y, X1..Xn) plus a JSON sidecar with
    the generating seed, step and parameter digest."""
    import json

    n = path.n
    header = ["t", "Y"] + [f"X{i + 1}" for i in range(n)]
    with open(csv_file, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for k in range(path.states.shape[0]):
            row = [f"{path.times[k]:.17g}"] + [f"{v:.17g}" for v in path.states[k]]
            fh.write(",".join(row) + "\n")
    meta = {
        "delta": path.delta,
        "seed": list(path.seed) if isinstance(path.seed, (tuple, list)) else path.seed,
        "params_hash": path.params_hash,
    }
    if sidecar:
        meta.update(sidecar)
    with open(csv_file + ".json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_path_csv(csv_file: str) -> Path:
    """Read a path written by :func:`write_path_csv` (sidecar optional)."""
    import json
    import os

    data = np.loadtxt(csv_file, delimiter=",", skiprows=1, ndmin=2)
    times = data[:, 0]
    states = data[:, 1:]
    if times.shape[0] < 2:
        raise InvalidGridError("path file must contain at least two rows")
    steps = np.diff(times)
    delta = float(steps[0])
    if np.max(np.abs(steps - delta)) > 1e-12 * max(abs(times[-1]), 1.0):
        raise InvalidGridError("path grid is not uniform")
    seed: object = None
    params_hash = ""
    sidecar = csv_file + ".json"
    if os.path.exists(sidecar):
        with open(sidecar, "r", encoding="utf-8") as fh:
            meta = json.load(fh)
        seed = meta.get("seed")
        if isinstance(seed, list):
            seed = tuple(seed)
        delta = float(meta.get("delta", delta))
        params_hash = meta.get("params_hash", "")
    return Path(delta=delta, times=times, states=states, seed=seed,
                params_hash=params_hash)


@dataclass
class IncrementEstimate:
    s: float
    t: float
    value: float
    std_error: float
    replications: int


def increment_moment_probe(
    params: ModelParams,
    q: float,
    pairs: Iterable[tuple[float, float]],
    delta: float,
    replications: int,
    seed: int,
) -> list[IncrementEstimate]:
    """Monte Carlo estimates of E ||Z_t - Z_s||_1^q for each (s, t) pair.

    All pairs are evaluated on the same replication paths; s and t are
    snapped to the simulation grid.  s = t returns exactly zero.
    """
    pairs = [(float(s), float(t)) for s, t in pairs]
    for s, t in pairs:
        if t < s:
            raise InvalidGridError("need s <= t in every pair")
        if t - s >= 1.0:
            raise InvalidGridError("increments longer than 1 are not supported")
    horizon = max(t for _, t in pairs)
    idx = [(int(round(s / delta)), int(round(t / delta))) for s, t in pairs]
    samples = np.zeros((replications, len(pairs)))
    for r in range(replications):
        path = simulate_path(params, horizon, delta, seed=substream(seed, r))
        for j, (i0, i1) in enumerate(idx):
            diff = path.states[i1] - path.states[i0]
            samples[r, j] = np.sum(np.abs(diff)) ** q
    out = []
    for j, (s, t) in enumerate(pairs):
        vals = samples[:, j]
        se = float(np.std(vals, ddof=1) / math.sqrt(replications)) if replications > 1 else 0.0
        out.append(IncrementEstimate(s, t, float(np.mean(vals)), se, replications))
    return out
