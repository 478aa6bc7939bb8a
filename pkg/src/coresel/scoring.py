"""Raw EL2N importance and the Beta-warped selection score.

The raw score of a sample is the Frobenius norm of (predicted probabilities -
one-hot targets). For selection, normalized scores pass through a Beta pdf
whose shape follows the running mean score and the selection budget, so the
curve favors moderately difficult samples and shifts with the budget.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError
from .store import CLAMP_EPS, ScoreLedger, clamp_unit, min_max_normalize

_SIMPLEX_TOL = 1e-6


@dataclass(frozen=True)
class WarpParams:
    alpha: float
    beta: float
    gamma_temp: float


def el2n_score(probs, onehot) -> float:
    """Frobenius norm of (probs - onehot) over one or more probability rows."""
    probs = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    onehot = np.atleast_2d(np.asarray(onehot, dtype=np.float64))
    if probs.shape != onehot.shape:
        raise DomainError(f"probs shape {probs.shape} != onehot shape {onehot.shape}")
    row_sums = probs.sum(axis=1)
    if np.any(np.abs(row_sums - 1.0) > _SIMPLEX_TOL) or np.any(probs < 0.0):
        raise DomainError("probs rows must lie on the probability simplex")
    ones_per_row = (onehot == 1.0).sum(axis=1)
    if np.any(ones_per_row != 1) or not np.all((onehot == 0.0) | (onehot == 1.0)):
        raise DomainError("onehot rows must contain exactly one 1 and zeros elsewhere")
    return float(np.linalg.norm(probs - onehot))


def el2n_from_probs(probs: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Vectorized per-row EL2N for already-validated probability rows."""
    diff = probs.copy()
    diff[np.arange(probs.shape[0]), labels] -= 1.0
    return np.sqrt(np.einsum("ij,ij->i", diff, diff))


def derive_warp_params(normalized_scores, eta: float, cfg) -> WarpParams:
    """Shape parameters alpha = 1 + C * mean^q * eta^r and beta = C - alpha."""
    scores = np.asarray(normalized_scores, dtype=np.float64)
    if scores.size == 0:
        raise DomainError("normalized_scores must be nonempty")
    mean = float(scores.mean())
    c = cfg.beta_const_c
    alpha = 1.0 + c * mean ** cfg.q_exp * eta ** cfg.r_exp
    beta = c - alpha
    if beta <= 0.0 or alpha <= 0.0:
        raise ConfigError(
            f"beta_const_c={c} is too small for mean score {mean:.4f} at eta={eta}: "
            f"derived alpha={alpha:.4f}, beta={beta:.4f}"
        )
    return WarpParams(alpha=alpha, beta=beta, gamma_temp=cfg.gamma_temp)


def _log_beta_pdf(x: float, a: float, b: float) -> float:
    const = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
    if x == 0.0:
        if a == 1.0:
            return const
        return math.inf if a < 1.0 else -math.inf
    if x == 1.0:
        if b == 1.0:
            return const
        return math.inf if b < 1.0 else -math.inf
    return const + (a - 1.0) * math.log(x) + (b - 1.0) * math.log1p(-x)


def warp_importance(x: float, params: WarpParams) -> float:
    """(Beta pdf at x) ** gamma, evaluated through log-gamma for stability."""
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"warp input must lie in [0, 1], got {x}")
    if params.gamma_temp == 0.0:
        return 1.0
    log_pdf = _log_beta_pdf(float(x), params.alpha, params.beta)
    value = params.gamma_temp * log_pdf
    if value == math.inf:
        return math.inf
    try:
        return math.exp(value)
    except OverflowError:
        return math.inf


def warp_mode(params: WarpParams, eps: float = CLAMP_EPS) -> float:
    """Argmax of the warped score over the clamped interval [eps, 1 - eps]."""
    a, b = params.alpha, params.beta
    if a > 1.0 and b > 1.0:
        return min(max((a - 1.0) / (a + b - 2.0), eps), 1.0 - eps)
    if a <= 1.0 and b <= 1.0:
        lo = _log_beta_pdf(eps, a, b)
        hi = _log_beta_pdf(1.0 - eps, a, b)
        return eps if lo >= hi else 1.0 - eps
    return eps if a <= 1.0 else 1.0 - eps


def warped_scores(normalized, params: WarpParams, normalize: bool = True,
                  eps: float = CLAMP_EPS) -> np.ndarray:
    """Warp a vector of normalized scores, clamping inputs away from {0, 1}.

    With ``normalize`` the result is divided by the warped value at the mode,
    so it lies in [0, 1] on the same scale as cosine coverage.
    """
    x = clamp_unit(normalized, eps)
    a, b, g = params.alpha, params.beta, params.gamma_temp
    if g == 0.0:
        return np.ones_like(x)
    const = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
    log_pdf = const + (a - 1.0) * np.log(x) + (b - 1.0) * np.log1p(-x)
    if normalize:
        log_pdf = log_pdf - _log_beta_pdf(warp_mode(params, eps), a, b)
    return np.exp(g * log_pdf)


def selection_scores(ledger: ScoreLedger, cfg) -> np.ndarray:
    """Full pipeline from the ledger's raw scores to per-sample warped scores."""
    normalized = clamp_unit(min_max_normalize(ledger))
    params = derive_warp_params(normalized, cfg.budget_eta, cfg)
    return warped_scores(normalized, params, normalize=cfg.normalize_warp)
