"""Differentiable training objectives.

All losses take autodiff Tensors (batched, shape (B, K) unless noted) and
return a scalar Tensor averaged over the batch. Labels are plain numpy
one-hot arrays and carry no gradient.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import log

import numpy as np

from . import special
from .autodiff import Tensor

__all__ = [
    "LossBundle",
    "loss_ace",
    "loss_kl",
    "loss_acc",
    "loss_conflict",
    "loss_elbo",
    "gaussian_kl",
    "reconstruction_error",
]

_LN2 = log(2.0)


@dataclass
class LossBundle:
    ace: float = 0.0
    kl: float = 0.0
    acc: float = 0.0
    con: float = 0.0
    elbo: float = 0.0
    total: float = 0.0

    def to_dict(self) -> dict:
        return {
            "ace": self.ace,
            "kl": self.kl,
            "acc": self.acc,
            "con": self.con,
            "elbo": self.elbo,
            "total": self.total,
        }


def _as_batch(t: Tensor) -> Tensor:
    return t.reshape(1, -1) if len(t.shape) == 1 else t


def _check_one_hot(y: np.ndarray) -> np.ndarray:
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    if not (np.all((y == 0.0) | (y == 1.0)) and np.all(y.sum(axis=1) == 1.0)):
        raise ValueError("labels must be one-hot")
    return y


def loss_ace(alpha: Tensor, y) -> Tensor:
    """Expected cross-entropy under the Dirichlet: sum_j y_j (psi(S) - psi(alpha_j))."""
    alpha = _as_batch(alpha)
    y = _check_one_hot(y)
    s = alpha.sum(axis=1, keepdims=True)
    per_sample = ((s.digamma() - alpha.digamma()) * y).sum(axis=1)
    return per_sample.mean()


def loss_kl(alpha: Tensor, y) -> Tensor:
    """KL from the evidence-adjusted Dirichlet to the uniform Dirichlet.

    The true-class parameter is replaced by 1 (alpha_hat = y + (1 - y) * alpha)
    so only misleading evidence is penalized; the loss has zero gradient in
    the true-class direction.
    """
    alpha = _as_batch(alpha)
    y = _check_one_hot(y)
    k = alpha.shape[1]
    alpha_hat = alpha * (1.0 - y) + y
    s_hat = alpha_hat.sum(axis=1, keepdims=True)
    log_beta = alpha_hat.lgamma().sum(axis=1) - s_hat.lgamma().reshape(-1)
    digamma_term = ((alpha_hat - 1.0) * (alpha_hat.digamma() - s_hat.digamma())).sum(axis=1)
    per_sample = -log_beta - special.lgamma(float(k)) + digamma_term
    return per_sample.mean()


def loss_acc(alpha: Tensor, y, lambda_t: float) -> Tensor:
    """Classification loss with annealed misleading-evidence regularizer."""
    if not 0.0 <= lambda_t <= 1.0:
        raise ValueError("lambda_t must be in [0, 1]")
    out = loss_ace(alpha, y)
    if lambda_t > 0.0:
        out = out + lambda_t * loss_kl(alpha, y)
    return out


def _discounted(evidence: Tensor, base_rate: np.ndarray) -> Tensor:
    """q = P * (1 - u) from a batch of evidence vectors."""
    evidence = _as_batch(evidence)
    k = evidence.shape[1]
    s = (evidence + 1.0).sum(axis=1, keepdims=True)
    b = evidence / s
    u = k / s
    p = b + u * base_rate
    return p * (1.0 - u)


def loss_conflict(evidences: list[Tensor], base_rate=None) -> Tensor:
    """Mean pairwise disagreement between per-view discounted distributions.

    (1/(V-1)) sum_A sum_{B!=A} D_JS(q^A || q^B) with base-2 logs, so the
    value is 0 when all views agree and grows toward 2 for V strongly
    opposed near-certain views. Minimizing it minimizes conflict.
    """
    v = len(evidences)
    if v < 2:
        raise ValueError("need at least two views")
    k = _as_batch(evidences[0]).shape[1]
    a = np.full(k, 1.0 / k) if base_rate is None else np.asarray(base_rate, dtype=np.float64)
    qs = [_discounted(e, a) for e in evidences]
    total = None
    for i in range(v):
        for j in range(i + 1, v):
            m = (qs[i] + qs[j]) * 0.5
            log_m = m.log()
            kl_i = (qs[i] * (qs[i].log() - log_m)).sum(axis=1)
            kl_j = (qs[j] * (qs[j].log() - log_m)).sum(axis=1)
            d_js = (kl_i + kl_j) * (0.5 / _LN2)
            total = d_js if total is None else total + d_js
    # each unordered pair appears twice in the ordered double sum
    return (total * (2.0 / (v - 1))).mean()


def gaussian_kl(mu: Tensor, logvar: Tensor) -> Tensor:
    """Closed-form KL(N(mu, sigma^2) || N(0, I)), summed over dims, batch-mean."""
    per_sample = ((mu * mu + logvar.exp() - 1.0 - logvar) * 0.5).sum(axis=1)
    return per_sample.mean()


def reconstruction_error(decoder_output: Tensor, z_target: Tensor, weight=None) -> Tensor:
    """Unit-variance Gaussian negative log-likelihood (constant dropped).

    ``weight`` optionally masks entries (e.g. only source-observed features
    contribute); it is a plain numpy array broadcastable to the output shape.
    """
    if decoder_output.shape != z_target.shape:
        raise ValueError("decoder output and target shapes differ")
    diff = decoder_output - z_target
    sq = diff * diff
    if weight is not None:
        sq = sq * np.asarray(weight, dtype=np.float64)
    return (sq.sum(axis=1) * 0.5).mean()


def loss_elbo(mu: Tensor, logvar: Tensor, decoder_output: Tensor, z_target: Tensor, weight=None) -> Tensor:
    """Negative evidence lower bound: reconstruction error plus Gaussian KL."""
    return reconstruction_error(decoder_output, z_target, weight) + gaussian_kl(mu, logvar)
