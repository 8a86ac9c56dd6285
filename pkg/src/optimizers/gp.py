"""
Gaussian process on bit vectors with the Hamming kernel, and Expected Improvement

K(b1, b2) = theta0 * exp(-theta1 * d_H(b1, b2)) + theta2 * [b1 == b2]
"""

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.stats import norm

from ..core.errors import IllConditionedModelError, UniverseMismatchError
from ..core.rules import BitRule, bit_matrix, hamming


@dataclass(frozen=True)
class HammingKernelParams:
    theta0: float = 1.0
    theta1: float = 1.0
    theta2: float = 1e-6

    def __post_init__(self) -> None:
        if not self.theta0 > 0:
            raise ValueError("theta0 must be positive")
        if not self.theta1 > 0:
            raise ValueError("theta1 must be positive")
        if self.theta2 < 0:
            raise ValueError("theta2 must be non-negative")


def kernel(b1: BitRule, b2: BitRule, params: HammingKernelParams) -> float:
    d = hamming(b1, b2)
    return params.theta0 * float(np.exp(-params.theta1 * d)) + params.theta2 * (1.0 if d == 0 else 0.0)


def hamming_matrix(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Pairwise Hamming distances between rows of two 0/1 matrices"""
    if X.shape[1] != Y.shape[1]:
        raise UniverseMismatchError(f"Bit matrices of width {X.shape[1]} and {Y.shape[1]}")
    Xf = X.astype(np.float64)
    Yf = Y.astype(np.float64)
    d = Xf @ (1.0 - Yf).T + (1.0 - Xf) @ Yf.T
    return np.rint(d)


def kernel_matrix(X: np.ndarray, Y: np.ndarray, params: HammingKernelParams) -> np.ndarray:
    d = hamming_matrix(X, Y)
    return params.theta0 * np.exp(-params.theta1 * d) + params.theta2 * (d == 0)


def _as_matrix(rules: Union[np.ndarray, Sequence[BitRule]]) -> np.ndarray:
    if isinstance(rules, np.ndarray):
        return rules.astype(np.uint8)
    rules = list(rules)
    if not rules:
        raise ValueError("Need at least one bit rule")
    return bit_matrix(rules, rules[0].n)


class GPState:
    """Zero-mean GP conditioned on observations; covariance factorised once"""

    def __init__(self, inputs: Union[np.ndarray, Sequence[BitRule]], values: Sequence[float],
                 params: HammingKernelParams, max_jitter_steps: int = 6):
        self.X = _as_matrix(inputs)
        self.y = np.asarray(values, dtype=float)
        if self.X.shape[0] != self.y.size or self.y.size == 0:
            raise ValueError("GP needs one value per input and at least one observation")
        self.params = params
        self.jitter = 0.0

        K = kernel_matrix(self.X, self.X, params)
        jitter = 0.0
        base = 1e-10 * params.theta0
        for step in range(max_jitter_steps + 1):
            try:
                self._factor = cho_factor(K + jitter * np.eye(K.shape[0]), lower=True, check_finite=True)
                self.jitter = jitter
                break
            except LinAlgError:
                jitter = base * (10.0 ** step)
        else:
            raise IllConditionedModelError(
                f"Covariance not positive definite after {max_jitter_steps} jitter steps",
                detail=f"theta={params}",
            )
        self._alpha = cho_solve(self._factor, self.y)

    @property
    def size(self) -> int:
        return int(self.y.size)

    def log_marginal_likelihood(self) -> float:
        L = self._factor[0]
        return float(-0.5 * self.y @ self._alpha - np.sum(np.log(np.diag(L))) - 0.5 * self.size * np.log(2 * np.pi))

    def predict(self, queries: Union[np.ndarray, Sequence[BitRule]]) -> Tuple[np.ndarray, np.ndarray]:
        Q = _as_matrix(queries)
        k_star = kernel_matrix(Q, self.X, self.params)
        mean = k_star @ self._alpha
        v = cho_solve(self._factor, k_star.T)
        prior = self.params.theta0 + self.params.theta2
        variance = prior - np.einsum("ij,ji->i", k_star, v)
        return mean, np.maximum(variance, 0.0)


def gp_posterior(state: GPState, query: BitRule) -> Tuple[float, float]:
    """Posterior mean and (non-negative) variance at one bit rule"""
    if query.n != state.X.shape[1]:
        raise UniverseMismatchError(f"Query length {query.n} does not match GP inputs {state.X.shape[1]}")
    mean, variance = state.predict(query.to_array()[None, :])
    return float(mean[0]), float(variance[0])


def expected_improvement(mean, variance, best_so_far):
    """EI for maximisation; closed form, max(mu - f*, 0) where sigma is 0"""
    mu = np.asarray(mean, dtype=float)
    sigma = np.sqrt(np.maximum(np.asarray(variance, dtype=float), 0.0))
    improvement = mu - best_so_far
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(sigma > 0, improvement / np.where(sigma > 0, sigma, 1.0), 0.0)
        ei = np.where(sigma > 0, improvement * norm.cdf(z) + sigma * norm.pdf(z), np.maximum(improvement, 0.0))
    ei = np.maximum(ei, 0.0)
    return float(ei) if ei.ndim == 0 else ei


def fit_gp(inputs: np.ndarray, values: Sequence[float], theta0_grid: Sequence[float],
           theta1_grid: Sequence[float], nugget_ratio: float = 1e-6,
           max_jitter_steps: int = 6) -> GPState:
    """Grid search of (theta0, theta1) by log marginal likelihood; theta2 = nugget_ratio * theta0"""
    best: Optional[GPState] = None
    best_lml = -np.inf
    for theta0 in theta0_grid:
        for theta1 in theta1_grid:
            params = HammingKernelParams(theta0, theta1, nugget_ratio * theta0)
            try:
                state = GPState(inputs, values, params, max_jitter_steps)
            except IllConditionedModelError:
                continue
            lml = state.log_marginal_likelihood()
            if lml > best_lml:
                best, best_lml = state, lml
    if best is None:
        raise IllConditionedModelError("No kernel hyperparameters on the grid gave a usable factorisation")
    return best
