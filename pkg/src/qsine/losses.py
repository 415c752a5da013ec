"""Loss functions for training and evaluation.

Detection uses a heavy-sided loss that punishes undercounting exponentially
and overcounting quadratically. Parameter estimates use per-parameter MSE,
combined into a single scalar by normalizing each term with its learning
threshold (see qsine.thresholds). Set-to-set comparisons with mismatched
counts use the Chamfer distance.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np


class LossVector(NamedTuple):
    """Per-parameter loss (or threshold) triple in (amp, freq, phase) order."""

    amp: float
    freq: float
    phase: float


def detection_loss(m, mhat):
    """Heavy-sided count loss: e^(m-mhat)-1 if m >= mhat, else (m-mhat)^2/2.

    Undercounting (mhat < m) costs exponentially, overcounting quadratically;
    zero iff mhat == m. Accepts scalars or broadcastable arrays; mhat may be
    fractional.
    """
    m = np.asarray(m, dtype=np.float64)
    mhat = np.asarray(mhat, dtype=np.float64)
    diff = m - mhat
    out = np.where(diff >= 0.0, np.expm1(diff), 0.5 * diff * diff)
    if out.ndim == 0:
        return float(out)
    return out


def multi_mse(c: np.ndarray, chat: np.ndarray) -> float:
    """Mean squared error over a stacked parameter vector: ||c - chat||^2 / p."""
    c = np.asarray(c, dtype=np.float64)
    chat = np.asarray(chat, dtype=np.float64)
    if c.shape != chat.shape:
        raise ValueError(f"length mismatch: {c.shape} vs {chat.shape}")
    if c.size == 0:
        raise ValueError("multi_mse requires at least one element")
    return float(np.mean((c - chat) ** 2))


def chamfer(f: np.ndarray, fhat: np.ndarray) -> float:
    """Symmetric nearest-neighbor distance between two value sets.

    sum_i min_k |f_i - fhat_k| + sum_i min_k |fhat_i - f_k|. Both sides must
    be nonempty; callers comparing against an empty estimate substitute
    empty_side_penalty() instead.
    """
    f = np.atleast_1d(np.asarray(f, dtype=np.float64))
    fhat = np.atleast_1d(np.asarray(fhat, dtype=np.float64))
    if f.size == 0 or fhat.size == 0:
        raise ValueError("chamfer requires nonempty vectors on both sides")
    d = np.abs(f[:, None] - fhat[None, :])
    return float(d.min(axis=1).sum() + d.min(axis=0).sum())


def empty_side_penalty(values: np.ndarray) -> float:
    """Sentinel Chamfer penalty when one side of the comparison is empty."""
    return float(2.0 * np.sum(np.abs(values)))


def effective_loss(ell, thresholds, m: int) -> float:
    """Unified scalar loss: (1/m) * sum of per-parameter loss/threshold ratios.

    Args:
        ell: LossVector (or 3-sequence) of amp/freq/phase losses.
        thresholds: LossVector of the corresponding learning thresholds.
        m: sinusoid count of the task.
    """
    la, lf, lp = ell
    ta, tf, tp = thresholds
    if min(ta, tf, tp) <= 0.0:
        raise ValueError("thresholds must be positive")
    if m < 1:
        raise ValueError("m must be >= 1")
    return (la / ta + lf / tf + lp / tp) / m


def normalized_chamfer(truth, est, thresholds) -> float:
    """Set-to-set estimate quality in threshold-normalized units.

    Chamfer distance per parameter (amps, freqs, phases), each scaled by the
    inverse square root of its learning threshold, combined like
    effective_loss with the true count's 1/m factor. Zero iff est matches
    truth exactly as sets.
    """
    ta, tf, tp = thresholds
    if min(ta, tf, tp) <= 0.0:
        raise ValueError("thresholds must be positive")
    terms = (
        chamfer(truth.amps, est.amps) / np.sqrt(ta)
        + chamfer(truth.freqs, est.freqs) / np.sqrt(tf)
        + chamfer(truth.phases, est.phases) / np.sqrt(tp)
    )
    return float(terms / truth.m)
