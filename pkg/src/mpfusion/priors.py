"""Joint distributions over node states: exact pairwise-field enumeration
and empirical frequency estimates.

Both classes expose the same conditional interface,

    configs, probs = prior.conditional(j, v)

returning every configuration (rows of +-1 with x_j = v) and its conditional
probability, which is what the closed-form performance mixtures consume.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import MrfParams, Topology

_MAX_ENUM_NODES = 20


def _all_configs(n: int) -> np.ndarray:
    """(2^n, n) matrix of +-1 rows; row index read as little-endian bits."""
    idx = np.arange(2 ** n, dtype=np.int64)
    bits = (idx[:, None] >> np.arange(n)) & 1
    return (2 * bits - 1).astype(np.int8)


@dataclass(frozen=True)
class Prior:
    """Configurations with probabilities; rows are +-1 state vectors."""

    configs: np.ndarray
    probs: np.ndarray

    def __post_init__(self) -> None:
        if self.configs.ndim != 2 or self.configs.shape[0] != self.probs.shape[0]:
            raise ValueError("configs/probs shape mismatch")
        if np.any(self.probs < 0):
            raise ValueError("negative probabilities")
        if abs(float(self.probs.sum()) - 1.0) > 1e-9:
            raise ValueError("probabilities must sum to 1")

    @property
    def node_count(self) -> int:
        return self.configs.shape[1]

    def marginal(self, j: int) -> float:
        """P{x_j = +1}."""
        on = self.configs[:, j - 1] == 1
        return float(self.probs[on].sum())

    def conditional(self, j: int, v: int):
        """(configs, probs) of full states given x_j = v; probs renormalized."""
        if v not in (-1, 1):
            raise ValueError("v must be -1 or +1")
        mask = self.configs[:, j - 1] == v
        total = float(self.probs[mask].sum())
        if total <= 0.0:
            raise ValueError(f"no probability mass with x_{j} = {v:+d}")
        return self.configs[mask], self.probs[mask] / total


def joint_prior(params: MrfParams, top: Topology) -> Prior:
    """Exact enumeration of p(x) ∝ exp(sum J_ij x_i x_j), theta = 0.

    Exhaustive over 2^N states; refuses N > 20 — estimate from samples with
    `empirical_prior` instead.
    """
    n = top.node_count
    if n > _MAX_ENUM_NODES:
        raise ValueError(
            f"exhaustive enumeration limited to {_MAX_ENUM_NODES} nodes "
            f"(got {n}); use empirical_prior on a sample stream instead")
    configs = _all_configs(n)
    log_w = np.zeros(configs.shape[0])
    for (i, j), coupling in params.couplings.items():
        log_w += coupling * configs[:, i - 1].astype(float) * configs[:, j - 1]
    log_w -= log_w.max()
    w = np.exp(log_w)
    return Prior(configs, w / w.sum())


def empirical_prior(samples) -> Prior:
    """Frequency estimate from a (T, N) stream of +-1 state rows.

    Unseen configurations get probability zero; a conditional query on a
    value that never occurred raises (the estimate genuinely has no
    information there).
    """
    x = np.asarray(samples)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("need a nonempty (slots, nodes) sample matrix")
    if not np.all(np.isin(x, (-1, 1))):
        raise ValueError("samples must be +-1 valued")
    configs, counts = np.unique(x, axis=0, return_counts=True)
    return Prior(configs.astype(np.int8), counts / counts.sum())
