"""LMMSE estimation of the cluster channels from the received pilot signal."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg

log = logging.getLogger(__name__)


class SingularGramError(np.linalg.LinAlgError):
    """The regularised pilot Gram matrix is not positive definite."""


@dataclass(frozen=True)
class LmmseContext:
    """Everything needed to apply the estimator for one set of cluster pilots.

    The prior on h_C is (sigma_C^2 / N_a) I and the interference-plus-noise
    covariance is (sigma_w^2 + sigma_phi^2 - sigma_C^2) I, so the estimator is
    (reg I + P^H P)^-1 P^H y_p with reg = N_a * noise / sigma_C^2.
    """

    pilots: np.ndarray
    regularizer: float
    pilot_gram: np.ndarray
    solve_factor: tuple | None
    sigma_c_sq: float
    noise: float  # sigma_w^2 + sigma_phi^2 - sigma_C^2
    pseudo_inverse: np.ndarray | None = None

    @property
    def n_a(self) -> int:
        return self.pilots.shape[1]

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        if self.solve_factor is not None:
            return linalg.cho_solve(self.solve_factor, rhs)
        return self.pseudo_inverse @ rhs


def build_context(
    pilots_cluster: np.ndarray,
    sigma_c_sq: float,
    sigma_phi_sq: float,
    sigma_w_sq: float,
    allow_pinv: bool = False,
) -> LmmseContext:
    pilots = np.asarray(pilots_cluster, dtype=complex)
    if pilots.ndim != 2:
        raise ValueError("cluster pilots must be an N_p x N_a matrix")
    if sigma_c_sq <= 0:
        raise ValueError("sigma_C^2 must be positive")
    n_a = pilots.shape[1]
    noise = sigma_w_sq + max(sigma_phi_sq - sigma_c_sq, 0.0)
    reg = n_a * noise / sigma_c_sq
    gram = pilots.conj().T @ pilots
    gram = 0.5 * (gram + gram.conj().T)
    matrix = gram + reg * np.eye(n_a)
    try:
        factor = linalg.cho_factor(matrix, lower=True, check_finite=True)
    except linalg.LinAlgError as exc:
        if not allow_pinv:
            raise SingularGramError(
                f"regularised Gram not positive definite (reg={reg:.3g}, N_a={n_a}, N_p={pilots.shape[0]})"
            ) from exc
        log.warning("singular regularised Gram; using pseudo-inverse (outside the model)")
        return LmmseContext(pilots, reg, gram, None, sigma_c_sq, noise, np.linalg.pinv(matrix))
    return LmmseContext(pilots, reg, gram, factor, sigma_c_sq, noise)


def estimate(ctx: LmmseContext, y_p: np.ndarray) -> tuple[np.ndarray, complex]:
    """LMMSE estimate of the cluster channels and of their sum."""
    y_p = np.asarray(y_p)
    if y_p.shape[0] != ctx.pilots.shape[0]:
        raise ValueError("pilot signal length does not match N_p")
    h_hat = ctx.solve(ctx.pilots.conj().T @ y_p)
    return h_hat, complex(h_hat.sum())


def exact_error_variance(ctx: LmmseContext) -> float:
    """1^T (N_a/sigma_C^2 I + P^H P / noise)^-1 1 for the given pilots.

    Rewritten as noise * 1^T (reg I + P^H P)^-1 1 so the same factorisation
    serves both the estimate and its error.
    """
    ones = np.ones(ctx.n_a)
    if ctx.noise == 0.0:
        return 0.0
    return ctx.noise * float(np.real(ones @ ctx.solve(ones)))
