"""Conditional least squares estimation of the drift vector tau.

Three estimator flavors are exposed, all computed from the same per-step
sums over a sampled path (left endpoints throughout):

``discrete``
    The high-frequency estimator: solve

        (a, b)           = (delta * Gamma1)^-1 phi1,
        [m^T; k^T; th^T] = (delta * Gamma2)^-1 phi2,

    where Gamma1 = [[N, -sum Y], [-sum Y, sum Y^2]],
    phi1 = (Y_tN - Y_0, -sum (Y_k - Y_{k-1}) Y_{k-1}), and Gamma2 / phi2
    are the analogous (n+2)-row systems including the X observations.

``continuous``
    Identical numbers presented as the Riemann/Ito-sum approximation
    (delta*Gamma, phi) of the continuous-observation systems (G_T, f_T);
    the solved estimate coincides with the discrete flavor by construction.

``exact``
    The per-step conditional regression: solve Gamma x = phi without the
    1/delta scaling, giving the one-step regression coefficients
    (a~, b~, m~, k~, th~), then invert the exact one-step map g (below).

The map g sends drift fields to one-step conditional-expectation
coefficients over a step h:

    a~  = a * int_0^h e^{-bu} du            b~  = 1 - e^{-bh}
    th~ = I - e^{-h*theta}                  k~  = int_0^h e^{-bu} e^{theta(u-h)} kappa du
    m~  = int_0^h e^{-theta u} m du - a * int_0^h (int_0^u e^{-b(u-v)} dv) e^{theta(u-h)} kappa du

and its inverse recovers b = -log(1 - b~)/h, theta = -logm(I - th~)/h and
then a, kappa, m by solving the displayed integral relations at the
recovered (b, theta).  Matrix exponentials use Pade scaling-and-squaring
and the matrix logarithm its principal branch (scipy.linalg).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from ._matfun import double_exp_integral, expm_integral
from .errors import (
    DegeneratePathError,
    DimensionMismatchError,
    LogDomainError,
    PathTooShortError,
    SingularBlocksError,
)
from .model import stack_drift_fields
from .simulate import Path

#: condition-number guard on the design blocks
COND_LIMIT = 1e12

FLAVORS = ("continuous", "discrete", "exact")


@dataclass
class TildeParams:
    """One-step conditional-regression coefficients over step h."""

    a: float
    b: float
    m: np.ndarray
    kappa: np.ndarray
    theta: np.ndarray


def g_map(a: float, b: float, m, kappa, theta, h: float) -> TildeParams:
    """Drift fields -> one-step conditional-expectation coefficients."""
    if h <= 0:
        raise DimensionMismatchError("step h must be positive")
    m = np.atleast_1d(np.asarray(m, dtype=float))
    kappa = np.atleast_1d(np.asarray(kappa, dtype=float))
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    n = m.shape[0]
    emth = scipy.linalg.expm(-theta * h)
    if b != 0.0:
        a_t = a * (1.0 - math.exp(-b * h)) / b
    else:
        a_t = a * h
    b_t = -math.expm1(-b * h)
    theta_t = np.eye(n) - emth
    kappa_t = emth @ expm_integral(theta - b * np.eye(n), h) @ kappa
    m_t = expm_integral(-theta, h) @ m - a * (emth @ double_exp_integral(b, theta, h) @ kappa)
    return TildeParams(a=float(a_t), b=float(b_t), m=m_t, kappa=kappa_t, theta=theta_t)


def g_inverse(tilde: TildeParams, h: float):
    """One-step regression coefficients -> drift fields (a, b, m, kappa, theta).

    Raises LogDomainError when b~ >= 1 or I - theta~ has an eigenvalue on
    the closed negative real axis, i.e. the regression output left the
    neighborhood where the one-step map is invertible.
    """
    if h <= 0:
        raise DimensionMismatchError("step h must be positive")
    if tilde.b >= 1.0:
        raise LogDomainError(f"b-tilde = {tilde.b:.6g} >= 1")
    n = tilde.m.shape[0]
    b = -math.log1p(-tilde.b) / h
    a = tilde.a * b / tilde.b if tilde.b != 0.0 else tilde.a / h
    A = np.eye(n) - np.atleast_2d(tilde.theta)
    eig = np.linalg.eigvals(A)
    scale = max(np.max(np.abs(eig)), 1e-300)
    on_negative_axis = (eig.real <= 0) & (np.abs(eig.imag) <= 1e-12 * scale)
    if np.any(on_negative_axis):
        raise LogDomainError("I - theta-tilde has an eigenvalue on (-inf, 0]")
    logA = scipy.linalg.logm(A)
    if np.max(np.abs(np.imag(logA))) > 1e-8 * max(1.0, np.max(np.abs(logA))):
        raise LogDomainError("matrix logarithm left the real branch")
    theta = -np.real(logA) / h
    emth = scipy.linalg.expm(-theta * h)
    K = emth @ expm_integral(theta - b * np.eye(n), h)
    try:
        kappa = np.linalg.solve(K, tilde.kappa)
        Mmat = expm_integral(-theta, h)
        m = np.linalg.solve(
            Mmat, tilde.m + a * (emth @ double_exp_integral(b, theta, h) @ kappa)
        )
    except np.linalg.LinAlgError as exc:
        raise LogDomainError("integral coefficient matrix is singular") from exc
    return float(a), float(b), m, kappa, theta


@dataclass
class DesignBlocks:
    """Normal-equation blocks accumulated from a path.

    For the discrete flavor G1/G2 hold the raw per-step sums Gamma; for the
    continuous flavor they hold delta * Gamma, the Riemann approximation of
    the continuous-observation design integrals.  f1/f2 are the telescoped
    increments and left-point Ito sums in both flavors.
    """

    G1: np.ndarray  # (2, 2)
    f1: np.ndarray  # (2,)
    G2: np.ndarray  # (n+2, n+2)
    f2: np.ndarray  # (n+2, n)
    flavor: str
    horizon: float
    step: float
    n_steps: int
    cond1: float
    cond2: float


def _equilibrated_cond(G: np.ndarray) -> float:
    """Condition number after symmetric diagonal scaling.

    The raw blocks scale like powers of sup Y, which grows exponentially on
    supercritical paths; equilibration makes the guard detect genuine rank
    deficiency instead of units.
    """
    d = np.sqrt(np.abs(np.diag(G)))
    if np.any(d <= 0) or not np.all(np.isfinite(d)):
        return float("inf")
    S = G / np.outer(d, d)
    return float(np.linalg.cond(S))


def _equilibrated_solve(G: np.ndarray, F: np.ndarray) -> np.ndarray:
    d = np.sqrt(np.abs(np.diag(G)))
    S = G / np.outer(d, d)
    Z = np.linalg.solve(S, F / d[:, None] if F.ndim == 2 else F / d)
    return Z / d[:, None] if F.ndim == 2 else Z / d


def _raw_sums(path: Path):
    Y, X = path.Y, path.X
    Yl, Xl = Y[:-1], X[:-1, :]
    dY, dX = np.diff(Y), np.diff(X, axis=0)
    N = path.n_steps
    n = path.n
    s_y = float(np.sum(Yl))
    s_yy = float(np.sum(Yl * Yl))
    s_x = np.sum(Xl, axis=0)
    s_yx = Yl @ Xl
    s_xx = Xl.T @ Xl
    G1 = np.array([[N, -s_y], [-s_y, s_yy]])
    f1 = np.array([Y[-1] - Y[0], -float(np.sum(dY * Yl))])
    G2 = np.empty((n + 2, n + 2))
    G2[0, 0] = N
    G2[0, 1] = G2[1, 0] = -s_y
    G2[1, 1] = s_yy
    G2[0, 2:] = -s_x
    G2[2:, 0] = -s_x
    G2[1, 2:] = s_yx
    G2[2:, 1] = s_yx
    G2[2:, 2:] = s_xx
    f2 = np.empty((n + 2, n))
    f2[0, :] = X[-1] - X[0]
    f2[1, :] = -(Yl @ dX)
    f2[2:, :] = -(Xl.T @ dX)
    return G1, f1, G2, f2


def design_blocks(path: Path, flavor: str = "discrete") -> DesignBlocks:
    """Accumulate the estimation systems from a path."""
    if flavor not in ("continuous", "discrete"):
        raise SingularBlocksError(f"unknown design flavor {flavor!r}")
    if path.n_steps < path.n + 2:
        raise PathTooShortError("path must have at least d+2 points")
    if np.count_nonzero(path.Y[:-1] > 0) < 2:
        raise PathTooShortError("Y must be strictly positive at two grid points")
    G1, f1, G2, f2 = _raw_sums(path)
    cond1 = _equilibrated_cond(G1)
    cond2 = _equilibrated_cond(G2)
    if not np.isfinite(cond1) or cond1 > COND_LIMIT or not np.isfinite(cond2) or cond2 > COND_LIMIT:
        raise DegeneratePathError(
            f"design blocks are degenerate (cond {cond1:.3g}, {cond2:.3g})"
        )
    if flavor == "continuous":
        G1 = G1 * path.delta
        G2 = G2 * path.delta
    return DesignBlocks(
        G1=G1, f1=f1, G2=G2, f2=f2, flavor=flavor,
        horizon=path.horizon, step=path.delta, n_steps=path.n_steps,
        cond1=cond1, cond2=cond2,
    )


@dataclass
class Estimate:
    tau_hat: np.ndarray
    a: float
    b: float
    m: np.ndarray
    kappa: np.ndarray
    theta: np.ndarray
    flavor: str
    cond1: float
    cond2: float
    horizon: float
    step: float

    @classmethod
    def from_fields(cls, a, b, m, kappa, theta, flavor, cond1, cond2, horizon, step):
        return cls(
            tau_hat=stack_drift_fields(a, b, m, kappa, theta),
            a=float(a), b=float(b),
            m=np.atleast_1d(np.asarray(m, float)),
            kappa=np.atleast_1d(np.asarray(kappa, float)),
            theta=np.atleast_2d(np.asarray(theta, float)),
            flavor=flavor, cond1=cond1, cond2=cond2, horizon=horizon, step=step,
        )


def clse_solve(blocks: DesignBlocks) -> Estimate:
    """Solve the block systems for the stacked drift estimate."""
    scale = blocks.step if blocks.flavor == "discrete" else 1.0
    try:
        ab = _equilibrated_solve(blocks.G1 * scale, blocks.f1)
        mkth = _equilibrated_solve(blocks.G2 * scale, blocks.f2)
    except np.linalg.LinAlgError as exc:
        raise SingularBlocksError("design blocks are singular") from exc
    m_hat = mkth[0, :]
    kappa_hat = mkth[1, :]
    theta_hat = mkth[2:, :].T  # solved rows are columns of [m k th]^T
    flavor = "continuous" if blocks.flavor == "continuous" else "discrete"
    return Estimate.from_fields(
        ab[0], ab[1], m_hat, kappa_hat, theta_hat,
        flavor, blocks.cond1, blocks.cond2, blocks.horizon, blocks.step,
    )


def tilde_regression(path: Path) -> TildeParams:
    """Per-step conditional regression: solve Gamma x = phi (no 1/delta)."""
    blocks = design_blocks(path, flavor="discrete")
    ab = _equilibrated_solve(blocks.G1, blocks.f1)
    mkth = _equilibrated_solve(blocks.G2, blocks.f2)
    return TildeParams(
        a=float(ab[0]), b=float(ab[1]),
        m=mkth[0, :].copy(), kappa=mkth[1, :].copy(), theta=mkth[2:, :].T.copy(),
    )


def estimate_path(path: Path, flavor: str = "discrete") -> Estimate:
    """Estimate tau from a path with the requested flavor."""
    if flavor not in FLAVORS:
        raise SingularBlocksError(f"unknown flavor {flavor!r}")
    if flavor in ("continuous", "discrete"):
        return clse_solve(design_blocks(path, flavor))
    tilde = tilde_regression(path)
    a, b, m, kappa, theta = g_inverse(tilde, path.delta)
    blocks = design_blocks(path, "discrete")
    return Estimate.from_fields(
        a, b, m, kappa, theta, "exact-conditional",
        blocks.cond1, blocks.cond2, path.horizon, path.delta,
    )


def error_term(estimate: Estimate, truth: np.ndarray) -> np.ndarray:
    """Componentwise estimation error tau_hat - tau."""
    truth = np.asarray(truth, dtype=float).ravel()
    if truth.shape != estimate.tau_hat.shape:
        raise DimensionMismatchError(
            f"truth has length {truth.shape[0]}, estimate {estimate.tau_hat.shape[0]}"
        )
    return estimate.tau_hat - truth
