"""Model parameters, validation, regime classification and drift stacking.

The model is the affine diffusion Z = (Y, X) on [0, inf) x R^n,

    dY_t = (a - b*Y_t) dt + rho_11 * sqrt(Y_t) dB^1_t
    dX_t = (m - kappa*Y_t - theta*X_t) dt + sqrt(Y_t) * rho_tilde dB_t,

driven by a d-dimensional Brownian motion B, d = n + 1, where rho is a
d x d lower-triangular matrix with positive diagonal and rho_tilde is its
lower (n x d) block.  The drift parameters are collected into the vector

    tau = (a, b, m_1, kappa_1, theta_11, ..., theta_1n, ...,
           m_n, kappa_n, theta_n1, ..., theta_nn)

of length d^2 + 1, i.e. (a, b) followed by vec([m kappa theta]^T), which is
the layout every estimator and normalizer in this package uses.

Regimes are classified from the sign of b and the spectrum of theta:
subcritical when min(b, lambda_min(theta)) > 0, critical when the mean of
Z grows polynomially, supercritical when it grows exponentially.  Matrices
theta outside the positive definite / negative definite / zero trichotomy
are reported as unsupported.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence, Union

import numpy as np

from .errors import (
    ComplexSpectrumError,
    DimensionMismatchError,
    NonDiagonalizableError,
)

InitialValue = Union[float, Callable[[np.random.Generator], float]]
InitialVector = Union[Sequence[float], Callable[[np.random.Generator], np.ndarray]]

#: relative tolerance on imaginary parts when the spectrum must be real
IMAG_TOL = 1e-8
#: relative tolerance on the eigendecomposition reconstruction residual
DIAG_RESIDUAL_TOL = 1e-10
#: eigenvalues below this (relative) size are treated as exact zeros
EIG_ZERO_TOL = 1e-12


class Regime(str, Enum):
    SUBCRITICAL = "subcritical"
    CRITICAL = "critical"
    SUPERCRITICAL = "supercritical"
    UNSUPPORTED = "unsupported"


def _as_readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ModelParams:
    """Full parameter set of the affine diffusion.

    Parameters
    ----------
    n : int
        Dimension of the X component (so the state is (n+1)-dimensional).
    a, b : float
        Level and mean-reversion rate of Y.  a must be nonnegative.
    m, kappa : array_like, shape (n,)
        Constant drift and Y-coupling of X.
    theta : array_like, shape (n, n)
        Mean-reversion matrix of X.
    rho : array_like, shape (n+1, n+1)
        Lower-triangular diffusion matrix with positive diagonal.  The row
        norms sigma_i = ||rho_i||_2 are derived, never stored.
    y0, x0 : float / vector, or callables rng -> value
        Initial values; callables are drawn once per path from the path's
        own random stream.
    """

    n: int
    a: float
    b: float
    m: np.ndarray
    kappa: np.ndarray
    theta: np.ndarray
    rho: np.ndarray
    y0: InitialValue = 1.0
    x0: InitialVector = field(default=0.0)  # broadcast to (n,) when numeric

    def __post_init__(self):
        object.__setattr__(self, "m", _as_readonly(np.atleast_1d(self.m)))
        object.__setattr__(self, "kappa", _as_readonly(np.atleast_1d(self.kappa)))
        object.__setattr__(self, "theta", _as_readonly(np.atleast_2d(self.theta)))
        object.__setattr__(self, "rho", _as_readonly(np.atleast_2d(self.rho)))
        if not callable(self.x0):
            x0 = np.broadcast_to(np.atleast_1d(np.asarray(self.x0, dtype=float)), (self.n,))
            object.__setattr__(self, "x0", _as_readonly(x0))

    @property
    def d(self) -> int:
        return self.n + 1

    @property
    def sigma(self) -> np.ndarray:
        """Row norms of rho: sigma_i^2 = sum_j rho_ij^2."""
        return np.sqrt(np.sum(self.rho**2, axis=1))

    @property
    def sigma1(self) -> float:
        return float(self.rho[0, 0])

    @property
    def rho_tilde(self) -> np.ndarray:
        """Lower n x d block of rho (the diffusion loading of X)."""
        return self.rho[1:, :]

    @property
    def rho_J1(self) -> np.ndarray:
        """First column of rho_tilde (loading of X on the Y-driving noise)."""
        return self.rho[1:, 0]

    @property
    def rho_JJ(self) -> np.ndarray:
        """Lower-right n x n block of rho."""
        return self.rho[1:, 1:]

    def digest(self) -> str:
        """Stable hex digest of the numeric parameter content."""
        h = hashlib.sha256()
        h.update(str(self.n).encode())
        for v in (self.a, self.b):
            h.update(f"{v:.17g}".encode())
        for arr in (self.m, self.kappa, self.theta, self.rho):
            h.update(np.ascontiguousarray(arr, dtype=float).tobytes())
        for init in (self.y0, self.x0):
            if callable(init):
                h.update(getattr(init, "__qualname__", repr(init)).encode())
            else:
                h.update(np.ascontiguousarray(init, dtype=float).tobytes())
        return h.hexdigest()


@dataclass
class ValidationReport:
    violations: list[str]

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


def _try_real_eig(theta: np.ndarray):
    """Eigendecomposition with reality and diagonalizability checks.

    Returns (eigenvalues ascending, row transform P with P theta P^-1 = D)
    or raises ComplexSpectrumError / NonDiagonalizableError.
    """
    theta = np.asarray(theta, dtype=float)
    norm2 = float(np.linalg.norm(theta, 2)) if theta.size else 0.0
    w, v = np.linalg.eig(theta)
    imag_tol = IMAG_TOL * max(norm2, 1.0)
    if np.max(np.abs(w.imag)) > imag_tol:
        raise ComplexSpectrumError(
            f"theta has eigenvalues with imaginary part above {imag_tol:g}"
        )
    w = w.real
    v = v.real if np.max(np.abs(v.imag)) <= imag_tol else None
    if v is None:
        raise NonDiagonalizableError("theta has no real eigenvector basis")
    order = np.argsort(w)
    w = w[order]
    v = v[:, order]
    # residual check of theta = V D V^-1
    try:
        vinv = np.linalg.inv(v)
    except np.linalg.LinAlgError as exc:
        raise NonDiagonalizableError("eigenvector matrix is singular") from exc
    resid = np.linalg.norm(theta - v @ np.diag(w) @ vinv, "fro")
    if resid > DIAG_RESIDUAL_TOL * max(np.linalg.norm(theta, "fro"), 1e-300):
        raise NonDiagonalizableError(
            f"theta not diagonalizable within tolerance (residual {resid:.3e})"
        )
    # convention: P X diagonalizes, i.e. P theta P^-1 = D with P = V^-1
    return w, vinv


def validate(params: ModelParams) -> ValidationReport:
    """Report every violated parameter invariant; empty means admissible."""
    v: list[str] = []
    n, d = params.n, params.d
    if params.m.shape != (n,):
        v.append(f"m must have shape ({n},), got {params.m.shape}")
    if params.kappa.shape != (n,):
        v.append(f"kappa must have shape ({n},), got {params.kappa.shape}")
    if params.theta.shape != (n, n):
        v.append(f"theta must have shape ({n},{n}), got {params.theta.shape}")
    if params.rho.shape != (d, d):
        v.append(f"rho must have shape ({d},{d}), got {params.rho.shape}")
    else:
        if np.any(np.abs(np.triu(params.rho, k=1)) > 0):
            v.append("rho must be lower triangular")
        if np.any(np.diag(params.rho) <= 0):
            v.append("rho diagonal must be positive")
        if np.any(params.sigma <= 0):
            v.append("every rho row norm sigma_i must be positive")
    if params.a < 0:
        v.append("a must be nonnegative")
    if not callable(params.y0) and params.y0 < 0:
        v.append("y0 must be nonnegative")
    if params.theta.shape == (n, n):
        try:
            _try_real_eig(params.theta)
        except ComplexSpectrumError:
            v.append("theta eigenvalues not real within tolerance")
        except NonDiagonalizableError:
            v.append("theta not diagonalizable")
    return ValidationReport(v)


@dataclass
class Classification:
    regime: Regime
    b: float
    eig_theta: np.ndarray  # real parts, ascending


def classify(params: ModelParams) -> Classification:
    """Assign the regime from b and the spectrum of theta.

    theta must be diagonalizable with a real spectrum.  Combinations where
    theta is neither positive definite, negative definite nor zero fall
    outside the supported trichotomy and are returned as UNSUPPORTED.
    """
    w, _ = _try_real_eig(params.theta)
    b = float(params.b)
    scale = max(float(np.max(np.abs(w))) if w.size else 0.0, 1.0)
    zero_tol = EIG_ZERO_TOL * scale
    lam_min, lam_max = float(w[0]), float(w[-1])
    pos_def = lam_min > zero_tol
    neg_def = lam_max < -zero_tol
    zero = np.all(np.abs(w) <= zero_tol)
    if not (pos_def or neg_def or zero):
        return Classification(Regime.UNSUPPORTED, b, w)
    if min(b, lam_min) > 0:
        regime = Regime.SUBCRITICAL
    elif (b >= 0 and zero) or (b == 0 and pos_def):
        regime = Regime.CRITICAL
    elif min(b, lam_max) < 0:
        regime = Regime.SUPERCRITICAL
    else:  # pragma: no cover - unreachable for pd/nd/zero theta
        regime = Regime.UNSUPPORTED
    return Classification(regime, b, w)


def tau_length(n: int) -> int:
    return (n + 1) ** 2 + 1


def stack_drift_fields(a, b, m, kappa, theta) -> np.ndarray:
    """Stack drift fields into the canonical tau vector.

    Layout: (a, b) then per X coordinate j the block (m_j, kappa_j,
    theta_j1, ..., theta_jn), i.e. vec([m kappa theta]^T) after the prefix.
    """
    m = np.atleast_1d(np.asarray(m, dtype=float))
    kappa = np.atleast_1d(np.asarray(kappa, dtype=float))
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    n = m.shape[0]
    if kappa.shape != (n,) or theta.shape != (n, n):
        raise DimensionMismatchError("m, kappa, theta dimensions disagree")
    out = np.empty(tau_length(n))
    out[0], out[1] = a, b
    for j in range(n):
        base = 2 + j * (n + 2)
        out[base] = m[j]
        out[base + 1] = kappa[j]
        out[base + 2 : base + 2 + n] = theta[j, :]
    return out


def stack_tau(params: ModelParams) -> np.ndarray:
    return stack_drift_fields(params.a, params.b, params.m, params.kappa, params.theta)


def unstack_tau(v: np.ndarray, n: int):
    """Inverse of :func:`stack_drift_fields`.

    Returns (a, b, m, kappa, theta).  Raises DimensionMismatchError when the
    vector length is not (n+1)^2 + 1.
    """
    v = np.asarray(v, dtype=float).ravel()
    if v.shape[0] != tau_length(n):
        raise DimensionMismatchError(
            f"tau vector of length {v.shape[0]} does not match n={n}"
        )
    a, b = float(v[0]), float(v[1])
    m = np.empty(n)
    kappa = np.empty(n)
    theta = np.empty((n, n))
    for j in range(n):
        base = 2 + j * (n + 2)
        m[j] = v[base]
        kappa[j] = v[base + 1]
        theta[j, :] = v[base + 2 : base + 2 + n]
    return a, b, m, kappa, theta


def drift_design_row(y: float, x: np.ndarray) -> np.ndarray:
    """Design matrix Lambda(z) with Lambda(z) @ tau equal to the drift.

    Shape (d, d^2+1): first row (1, -y, 0, ...), then I_n kron K(z) with
    K(z) = (1, -y, -x_1, ..., -x_n).
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    n = x.shape[0]
    d = n + 1
    K = np.concatenate(([1.0, -y], -x))
    out = np.zeros((d, tau_length(n)))
    out[0, 0] = 1.0
    out[0, 1] = -y
    for j in range(n):
        base = 2 + j * (n + 2)
        out[1 + j, base : base + n + 2] = K
    return out


def drift(params: ModelParams, y: float, x: np.ndarray) -> np.ndarray:
    """Direct drift evaluation (a - b*y, m - kappa*y - theta @ x)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return np.concatenate(
        ([params.a - params.b * y], params.m - params.kappa * y - params.theta @ x)
    )
