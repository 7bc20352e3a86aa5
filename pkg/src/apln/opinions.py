"""Subjective-logic opinion algebra.

An opinion over K classes is a triple (belief vector b, uncertainty mass u,
base rates a) with sum(b) + u = 1. Opinions are in bijection with Dirichlet
evidence vectors e >= 0 through alpha = e + 1, S = sum(alpha), b = e / S,
u = K / S. Fusion of two opinions is uncertainty-weighted belief averaging,
which is algebraically the same as averaging the two evidence vectors.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Opinion",
    "EvidenceVector",
    "SingularOpinionError",
    "opinion_from_evidence",
    "evidence_from_opinion",
    "project_probability",
    "discounted_distribution",
    "fuse_pair",
    "fuse_views",
    "js_divergence",
    "conflict_degree",
    "conflict_matrix",
]

_ATOL = 1e-9


class SingularOpinionError(ValueError):
    """Raised when an operation needs u > 0 but got a dogmatic opinion."""


@dataclass(frozen=True)
class Opinion:
    belief: np.ndarray
    uncertainty: float
    base_rate: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.belief, dtype=np.float64)
        a = np.asarray(self.base_rate, dtype=np.float64)
        object.__setattr__(self, "belief", b)
        object.__setattr__(self, "base_rate", a)
        if b.ndim != 1 or a.shape != b.shape:
            raise ValueError("belief and base_rate must be 1-d vectors of equal length")
        if np.any(b < -_ATOL) or self.uncertainty < -_ATOL:
            raise ValueError("belief masses and uncertainty must be nonnegative")
        if abs(b.sum() + self.uncertainty - 1.0) > _ATOL:
            raise ValueError("belief masses and uncertainty must sum to 1")
        if abs(a.sum() - 1.0) > _ATOL:
            raise ValueError("base rates must sum to 1")

    @property
    def num_classes(self) -> int:
        return self.belief.shape[0]

    def to_json(self) -> dict:
        return {
            "belief": self.belief.tolist(),
            "uncertainty": float(self.uncertainty),
            "base_rate": self.base_rate.tolist(),
        }

    @staticmethod
    def from_json(obj: dict) -> "Opinion":
        return Opinion(
            np.asarray(obj["belief"], dtype=np.float64),
            float(obj["uncertainty"]),
            np.asarray(obj["base_rate"], dtype=np.float64),
        )


@dataclass(frozen=True)
class EvidenceVector:
    evidence: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.evidence, dtype=np.float64)
        object.__setattr__(self, "evidence", e)
        if e.ndim != 1:
            raise ValueError("evidence must be a 1-d vector")
        if np.any(e < 0.0):
            raise ValueError("evidence must be nonnegative")

    @property
    def alpha(self) -> np.ndarray:
        return self.evidence + 1.0

    @property
    def strength(self) -> float:
        return float(self.alpha.sum())


def uniform_base_rate(k: int) -> np.ndarray:
    return np.full(k, 1.0 / k)


def opinion_from_evidence(e, base_rate=None) -> Opinion:
    """Map an evidence vector to its opinion: b = e/S, u = K/S."""
    ev = e if isinstance(e, EvidenceVector) else EvidenceVector(np.asarray(e, dtype=np.float64))
    k = ev.evidence.shape[0]
    if k < 2:
        raise ValueError("need at least two classes")
    a = uniform_base_rate(k) if base_rate is None else np.asarray(base_rate, dtype=np.float64)
    s = ev.strength
    return Opinion(ev.evidence / s, k / s, a)


def evidence_from_opinion(w: Opinion) -> EvidenceVector:
    """Inverse bijection; requires u > 0 since S = K/u."""
    if w.uncertainty <= 0.0:
        raise SingularOpinionError("dogmatic opinion (u = 0) has infinite evidence")
    s = w.num_classes / w.uncertainty
    return EvidenceVector(w.belief * s)


def project_probability(w: Opinion) -> np.ndarray:
    """Point-estimate distribution P_k = b_k + a_k * u."""
    return w.belief + w.base_rate * w.uncertainty


def discounted_distribution(w: Opinion) -> np.ndarray:
    """Uncertainty-discounted distribution q_k = P_k * (1 - u); sums to 1 - u."""
    return project_probability(w) * (1.0 - w.uncertainty)


def fuse_pair(wa: Opinion, wb: Opinion) -> Opinion:
    """Aggregate two opinions over the same frame.

    b = (b_a u_b + b_b u_a)/(u_a + u_b), u = 2 u_a u_b/(u_a + u_b),
    base rates are averaged. Equivalent to averaging the evidences.
    """
    if wa.num_classes != wb.num_classes:
        raise ValueError("opinions must share the same number of classes")
    ua, ub = wa.uncertainty, wb.uncertainty
    if ua + ub <= 0.0:
        raise SingularOpinionError("cannot fuse two dogmatic opinions (u_a = u_b = 0)")
    denom = ua + ub
    b = (wa.belief * ub + wb.belief * ua) / denom
    u = 2.0 * ua * ub / denom
    a = 0.5 * wa.base_rate + 0.5 * wb.base_rate
    return Opinion(b, u, a)


def fuse_views(opinions: list[Opinion], mode: str = "balanced") -> Opinion:
    """Fuse V opinions into one.

    mode="sequential": left fold of pairwise fusion in list order; the
    implied evidence weights halve at each step, so the last view carries
    weight 1/2. mode="balanced": the opinion of the arithmetic mean of all
    view evidences, which treats views symmetrically. Both agree for V=2.
    """
    if not opinions:
        raise ValueError("need at least one opinion to fuse")
    ks = {w.num_classes for w in opinions}
    if len(ks) != 1:
        raise ValueError("opinions must share the same number of classes")
    if len(opinions) == 1:
        return opinions[0]
    if mode == "sequential":
        fused = opinions[0]
        for w in opinions[1:]:
            fused = fuse_pair(fused, w)
        return fused
    if mode == "balanced":
        evidences = np.stack([evidence_from_opinion(w).evidence for w in opinions])
        base = np.mean(np.stack([w.base_rate for w in opinions]), axis=0)
        return opinion_from_evidence(evidences.mean(axis=0), base)
    raise ValueError(f"unknown fusion mode: {mode!r}")


def _generalized_kl_base2(p: np.ndarray, m: np.ndarray) -> float:
    """sum p log2(p/m) with the 0*log 0 = 0 convention; p, m sub-normalized."""
    mask = p > 0.0
    return float(np.sum(p[mask] * np.log2(p[mask] / m[mask])))


def js_divergence(wa: Opinion, wb: Opinion) -> float:
    """Base-2 Jensen-Shannon divergence between discounted distributions."""
    qa = discounted_distribution(wa)
    qb = discounted_distribution(wb)
    m = 0.5 * (qa + qb)
    return 0.5 * _generalized_kl_base2(qa, m) + 0.5 * _generalized_kl_base2(qb, m)


def conflict_degree(wa: Opinion, wb: Opinion) -> float:
    """Agreement score c = 1 - D_JS, clamped to [0, 1]; 1 means no conflict."""
    if wa.num_classes != wb.num_classes:
        raise ValueError("opinions must share the same number of classes")
    return float(np.clip(1.0 - js_divergence(wa, wb), 0.0, 1.0))


def conflict_matrix(opinions: list[Opinion]) -> np.ndarray:
    """Symmetric V x V matrix of pairwise conflict degrees; diagonal 1."""
    if len(opinions) < 2:
        raise ValueError("need at least two opinions")
    v = len(opinions)
    mat = np.eye(v)
    for i in range(v):
        for j in range(i + 1, v):
            c = conflict_degree(opinions[i], opinions[j])
            mat[i, j] = mat[j, i] = c
    return mat


def aggregate_agreement(opinions: list[Opinion]) -> float:
    """Sum of pairwise agreement scores, (1/(V-1)) * sum_A sum_{B!=A} c(A, B).

    Diagnostic counterpart of the conflict loss: high values mean the views
    agree. Not differentiable; training uses losses.loss_conflict instead.
    """
    if len(opinions) < 2:
        raise ValueError("need at least two opinions")
    v = len(opinions)
    total = 0.0
    for i in range(v):
        for j in range(v):
            if i != j:
                total += conflict_degree(opinions[i], opinions[j])
    return total / (v - 1)


def opinions_to_json(opinions: list[Opinion]) -> str:
    return json.dumps([w.to_json() for w in opinions], indent=2)
