"""Matrix integral helpers shared by the simulator and the estimators."""

from __future__ import annotations

import numpy as np
import scipy.linalg


def expm_integral(A: np.ndarray, h: float) -> np.ndarray:
    """int_0^h expm(A*u) du via the augmented-block exponential
    expm([[A, I], [0, 0]] * h) = [[e^{Ah}, integral], [0, I]]."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    p = A.shape[0]
    M = np.zeros((2 * p, 2 * p))
    M[:p, :p] = A * h
    M[:p, p:] = np.eye(p) * h
    return scipy.linalg.expm(M)[:p, p:]


def gauss_legendre_matrix_integral(f, h: float, p: int, order: int = 40) -> np.ndarray:
    nodes, weights = np.polynomial.legendre.leggauss(order)
    u = 0.5 * h * (nodes + 1.0)
    out = np.zeros((p, p))
    for ui, wi in zip(u, weights):
        out += wi * f(ui)
    return 0.5 * h * out


def double_exp_integral(b: float, theta: np.ndarray, h: float) -> np.ndarray:
    """W(h) = int_0^h g_b(u) e^{theta*u} du with g_b(u) = int_0^u e^{-b(u-v)} dv."""
    theta = np.atleast_2d(theta)
    p = theta.shape[0]
    if b != 0.0:
        # g_b(u) = (1 - e^{-bu})/b, so W = (Phi(theta) - Phi(theta - b I))/b
        return (expm_integral(theta, h) - expm_integral(theta - b * np.eye(p), h)) / b
    if np.allclose(theta, 0.0):
        return 0.5 * h * h * np.eye(p)
    return gauss_legendre_matrix_integral(
        lambda u: u * scipy.linalg.expm(theta * u), h, p
    )


def one_step_conditional_mean_coeffs(a, b, m, kappa, theta, h: float):
    """Coefficients (E_theta, m~, k~) of the exact one-step conditional mean
    E[X_{t+h} | F_t] = E_theta @ X_t + m~ - k~ * Y_t, with
    E_theta = e^{-theta h}."""
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    m = np.atleast_1d(np.asarray(m, dtype=float))
    kappa = np.atleast_1d(np.asarray(kappa, dtype=float))
    n = theta.shape[0]
    emth = scipy.linalg.expm(-theta * h)
    kappa_t = emth @ expm_integral(theta - b * np.eye(n), h) @ kappa
    m_t = expm_integral(-theta, h) @ m - a * (
        emth @ double_exp_integral(b, theta, h) @ kappa
    )
    return emth, m_t, kappa_t
