"""Regime-specific normalizations and limit objects for the estimator error.

Each regime has its own invertible scaling Q_T applied to tau_hat - tau:

subcritical    Q_T = sqrt(T) * I, limit N(0, sandwich covariance);
critical       Q_T = diag(1, T, I_n kron diag(1, T, T*I_n)): the level
               estimates (a, m) converge without scaling while the
               mean-reversion estimates (b, kappa, theta) are blown up by
               T; the limit is diag(U1^-1, I kron U2^-1)(R1, vec R2) built
               from path functionals of the zero-started process on [0,1];
supercritical  Q_T = diag(T e^{bT/2}, e^{-bT/2}, I_n kron Q~_T) with
               Q~_T = diag(T e^{bT/2}, e^{-bT/2}, e^{(b-2 lam_min)T/2} I_n),
               requiring lam_max(theta) < b < 0; the limit is V^-1 eta xi
               with V and eta*eta^T closed forms in the almost-sure limits
               C1 of e^{bt} Y_t and C_J of e^{lam_min t} X_t.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NotStabilizedError, SingularUError, UnsupportedRegimeError
from .model import Classification, ModelParams, Regime, tau_length
from .simulate import CriticalLimitSample, Path

U_COND_LIMIT = 1e12


@dataclass
class Normalizer:
    regime: Regime
    T: float
    diag: np.ndarray  # diagonal entries of Q_T

    @property
    def Q(self) -> np.ndarray:
        return np.diag(self.diag)

    def apply(self, err: np.ndarray) -> np.ndarray:
        return self.diag * np.asarray(err, dtype=float)


def normalizer(classification: Classification, T: float, params: ModelParams) -> Normalizer:
    """The regime's error scaling Q_T at horizon T."""
    if T <= 0:
        raise UnsupportedRegimeError("horizon must be positive")
    n = params.n
    L = tau_length(n)
    regime = classification.regime
    if regime == Regime.SUBCRITICAL:
        diag = np.full(L, math.sqrt(T))
    elif regime == Regime.CRITICAL:
        block = np.concatenate(([1.0, T], np.full(n, T)))
        diag = np.concatenate(([1.0, T], np.tile(block, n)))
    elif regime == Regime.SUPERCRITICAL:
        b = float(params.b)
        lam_min = float(classification.eig_theta[0])
        lam_max = float(classification.eig_theta[-1])
        if not (lam_max < b < 0):
            raise UnsupportedRegimeError(
                "supercritical normalization needs lam_max(theta) < b < 0"
            )
        ebt2 = math.exp(0.5 * b * T)
        block = np.concatenate(
            ([T * ebt2, 1.0 / ebt2], np.full(n, math.exp(0.5 * (b - 2.0 * lam_min) * T)))
        )
        diag = np.concatenate(([T * ebt2, 1.0 / ebt2], np.tile(block, n)))
    else:
        raise UnsupportedRegimeError(f"no normalization for regime {regime.value}")
    return Normalizer(regime=regime, T=float(T), diag=diag)


@dataclass
class SupercriticalLimits:
    """Almost-sure scaling limits read from a path tail plus the closed-form
    limit matrices of the supercritical theorem."""

    c1: float
    cj: np.ndarray  # (n,)
    v1: np.ndarray  # (2, 2)
    v2: np.ndarray  # (n+2, n+2)
    eta_etaT: np.ndarray  # (d^2+1, d^2+1)


def _tail_stat(values: np.ndarray, rel_tol: float) -> float:
    """Mean over the window; raises NotStabilized when the relative change
    across the window exceeds rel_tol."""
    end = values[-1]
    start = values[0]
    scale = max(abs(end), 1e-300)
    if abs(end - start) / scale > rel_tol:
        raise NotStabilizedError(
            f"scaled tail moved {abs(end - start) / scale:.3%} over the window"
        )
    return float(np.mean(values))


def extract_supercritical_limits(
    path: Path,
    params: ModelParams,
    classification: Classification,
    tail_fraction: float = 0.1,
    rel_tol: float = 0.01,
) -> SupercriticalLimits:
    """Read C1 and C_J from the stabilized tail of a supercritical path and
    assemble the limit matrices V1, V2 and eta*eta^T.

    The tail criterion requires the relative change of e^{bt} Y_t and of
    every e^{lam_min t} X^i_t over the final ``tail_fraction`` of the
    horizon to stay below ``rel_tol``.

    The Euler update of X carries a growth-rate bias of order
    ||theta||^2 * delta / 2 per unit time, so the X criterion needs
    delta small enough that this bias over the window stays below
    ``rel_tol`` (Y uses exact transitions and has no such bias).
    """
    b = float(params.b)
    lam_min = float(classification.eig_theta[0])
    n = params.n
    k0 = int(math.floor((1.0 - tail_fraction) * path.n_steps))
    t_tail = path.times[k0:]
    wy = np.exp(b * t_tail) * path.Y[k0:]
    c1 = _tail_stat(wy, rel_tol)
    cj = np.empty(n)
    for i in range(n):
        wx = np.exp(lam_min * t_tail) * path.X[k0:, i]
        cj[i] = _tail_stat(wx, rel_tol)

    v1 = np.array([[1.0, c1 / b], [0.0, -c1 * c1 / (2.0 * b)]])
    v2 = np.zeros((n + 2, n + 2))
    v2[0, 0] = 1.0
    v2[0, 1] = c1 / b
    v2[0, 2:] = cj / lam_min
    v2[1, 1] = -c1 * c1 / (2.0 * b)
    v2[1, 2:] = -c1 * cj / (b + lam_min)
    v2[2:, 1] = -c1 * cj / (b + lam_min)
    v2[2:, 2:] = -np.outer(cj, cj) / (2.0 * lam_min)

    C1m = np.array([
        [-c1 / b, c1 * c1 / (2.0 * b)],
        [c1 * c1 / (2.0 * b), -c1**3 / (3.0 * b)],
    ])
    C2m = np.zeros((2, n + 2))
    C2m[0] = np.concatenate(([-c1 / b, c1 * c1 / (2.0 * b)], c1 * cj / (b + lam_min)))
    C2m[1] = np.concatenate(
        ([c1 * c1 / (2.0 * b), -c1**3 / (3.0 * b)], -c1 * c1 * cj / (2.0 * b + lam_min))
    )
    C3m = np.zeros((n + 2, n + 2))
    C3m[:2, :] = C2m
    C3m[2:, 0] = c1 * cj / (b + lam_min)
    C3m[2:, 1] = -c1 * c1 * cj / (2.0 * b + lam_min)
    C3m[2:, 2:] = -c1 * np.outer(cj, cj) / (b + 2.0 * lam_min)

    s1 = params.sigma1
    rho_t = params.rho_tilde
    top_right = s1 * np.kron(params.rho_J1[None, :], C2m)
    eta_etaT = np.block([
        [s1 * s1 * C1m, top_right],
        [top_right.T, np.kron(rho_t @ rho_t.T, C3m)],
    ])
    eta_etaT = 0.5 * (eta_etaT + eta_etaT.T)
    return SupercriticalLimits(c1=c1, cj=cj, v1=v1, v2=v2, eta_etaT=eta_etaT)


@dataclass
class CriticalLimitFunctional:
    """The critical limit draw diag(U1^-1, I kron U2^-1) (R1, vec R2)."""

    u1: np.ndarray  # (2, 2)
    u2: np.ndarray  # (n+2, n+2)
    r1: np.ndarray  # (2,)
    r2: np.ndarray  # (n+2, n)

    def limit_draw(self) -> np.ndarray:
        """One realization of the limit of the normalized error vector."""
        cond1 = np.linalg.cond(self.u1)
        cond2 = np.linalg.cond(self.u2)
        if not np.isfinite(cond1) or cond1 > U_COND_LIMIT or not np.isfinite(cond2) or cond2 > U_COND_LIMIT:
            raise SingularUError(
                f"limit functional is singular (cond {cond1:.3g}, {cond2:.3g})"
            )
        head = np.linalg.solve(self.u1, self.r1)
        tail = np.linalg.solve(self.u2, self.r2)
        return np.concatenate([head, tail.T.ravel()])


def critical_limit_functional(
    sample: CriticalLimitSample, a: float, m
) -> CriticalLimitFunctional:
    """Fill U1, U2, R1, R2 from the functionals of one zero-started draw."""
    m = np.atleast_1d(np.asarray(m, dtype=float))
    n = m.shape[0]
    u1 = np.array([[1.0, -sample.int_y], [-sample.int_y, sample.int_yy]])
    u2 = np.zeros((n + 2, n + 2))
    u2[0, 0] = 1.0
    u2[0, 1] = u2[1, 0] = -sample.int_y
    u2[1, 1] = sample.int_yy
    u2[0, 2:] = -sample.int_x
    u2[2:, 0] = -sample.int_x
    u2[1, 2:] = sample.int_yx
    u2[2:, 1] = sample.int_yx
    u2[2:, 2:] = sample.int_xx
    r1 = np.array([sample.y1 - a, a * sample.int_y - sample.int_y_dy])
    r2 = np.empty((n + 2, n))
    r2[0, :] = sample.x1 - m
    r2[1, :] = sample.int_y * m - sample.int_y_dx
    r2[2:, :] = np.outer(sample.int_x, m) - sample.int_x_dx
    return CriticalLimitFunctional(u1=u1, u2=u2, r1=r1, r2=r2)
