"""Segmentation quality metrics: normalized mutual information and switch counts."""

from __future__ import annotations

import numpy as np

from .errors import ConfigError


def contingency(a, b) -> np.ndarray:
    """Count table of joint label occurrences; rows index labels of `a`."""
    a = np.asarray(a, dtype=int)
    b = np.asarray(b, dtype=int)
    if a.shape != b.shape or a.ndim != 1:
        raise ConfigError(f"label sequences must be 1-d and equal length, got {a.shape} vs {b.shape}")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1), dtype=int)
    np.add.at(table, (ai, bi), 1)
    return table


def _sorted_sum(values: np.ndarray) -> float:
    # canonical summation order: exact symmetry and relabeling invariance
    return float(np.sum(np.sort(values, kind="stable")))


def nmi(a, b) -> float:
    """Mutual information normalized by the mean of the two label entropies.

    Natural logarithms throughout.  Identical partitions (up to relabeling)
    give 1.0 including the single-cluster case; if exactly one side is
    single-cluster the score is 0.0.
    """
    table = contingency(a, b)
    n = table.sum()
    if n < 1:
        raise ConfigError("label sequences must be nonempty")
    p_joint = table / n
    p_a = p_joint.sum(axis=1)
    p_b = p_joint.sum(axis=0)

    nz = p_joint > 0
    outer = np.outer(p_a, p_b)
    mi_terms = p_joint[nz] * (np.log(p_joint[nz]) - np.log(outer[nz]))
    mi = _sorted_sum(mi_terms)
    ent_a = _sorted_sum(-p_a[p_a > 0] * np.log(p_a[p_a > 0]))
    ent_b = _sorted_sum(-p_b[p_b > 0] * np.log(p_b[p_b > 0]))

    denom = ent_a + ent_b
    if denom == 0.0:
        # both partitions trivial, hence identical
        return 1.0
    return 2.0 * mi / denom


def switch_count(seq) -> int:
    """Number of positions whose label differs from the previous one."""
    seq = np.asarray(seq)
    if seq.ndim != 1 or seq.size < 1:
        raise ConfigError("sequence must be 1-d and nonempty")
    return int(np.sum(seq[1:] != seq[:-1]))
