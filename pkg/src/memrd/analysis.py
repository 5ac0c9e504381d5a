"""Trajectory post-processing: heterogeneity, spot counting, mode amplitudes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "PatternSummary",
    "heterogeneity",
    "count_local_maxima",
    "mode_amplitude",
    "classify",
]

# Relative L2 deviation separating solver noise (<=1e-6) from genuine
# patterns (O(1)) by three orders of magnitude on each side.
HOMOGENEITY_THRESHOLD = 1e-3

# A local maximum counts as a spot only if it stands this fraction of the
# field's dynamic range above the mean.
DEFAULT_PROMINENCE = 0.5

# Classification measures deviations of depleted fields (mean below this)
# against the depletion scale instead of the vanishing mean: a field that has
# decayed to ~0 everywhere is homogeneous no matter what its leftover noise
# looks like relative to its own tiny mean.
DEPLETION_FLOOR = 1e-3


@dataclass(frozen=True)
class PatternSummary:
    """Qualitative outcome of a run.

    ``n_maxima`` is reported as 0 for homogeneous states (spot counting is
    meaningless below the heterogeneity threshold).
    """

    classification: str  # homogeneous | pattern | not_converged
    n_maxima: int
    heterogeneity: float
    max_location: int
    converged: bool

    def to_dict(self) -> dict:
        return {
            "classification": self.classification,
            "n_maxima": self.n_maxima,
            "heterogeneity": self.heterogeneity,
            "max_location": self.max_location,
            "converged": self.converged,
        }


def heterogeneity(field, M, mean_floor: float = 1e-12) -> float:
    """Relative L2 deviation of a nodal field from its surface mean.

    sqrt(integral (field - mean)^2 / area) / max(|mean|, mean_floor);
    invariant under positive scaling of the field (for means above the floor).
    """
    field = np.asarray(field, dtype=float)
    area = M.sum()
    mean = float((M @ field).sum()) / area
    dev = field - mean
    variance = float(dev @ (M @ dev)) / area
    return float(np.sqrt(max(variance, 0.0)) / max(abs(mean), mean_floor))


def count_local_maxima(mesh, field, prominence: float = DEFAULT_PROMINENCE):
    """Count prominent strict one-ring maxima of a nodal field.

    A vertex counts iff its value strictly exceeds all one-ring neighbours
    and exceeds mean + prominence * (max - mean), with the mean taken with
    lumped vertex areas. Returns ``(count, vertex_indices)``; invariant under
    adding constants and positive scaling.
    """
    if prominence < 0:
        raise ValueError("prominence must be nonnegative")
    field = np.asarray(field, dtype=float)
    areas = mesh.vertex_areas()
    mean = float(field @ areas / areas.sum())
    cutoff = mean + prominence * (field.max() - mean)
    hits = []
    for i in range(mesh.n_vertices):
        value = field[i]
        if value <= cutoff:
            continue
        if value > mean and np.all(value > field[mesh.vertex_neighbors(i)]):
            hits.append(i)
    return len(hits), hits


def mode_amplitude(field, eigenvector, M) -> float:
    """Coefficient of an M-normalized surface mode in the mean-free field."""
    field = np.asarray(field, dtype=float)
    mean = float((M @ field).sum()) / M.sum()
    return float((field - mean) @ (M @ np.asarray(eigenvector, dtype=float)))


def classify(final_state, series, mesh, M,
             het_threshold: float = HOMOGENEITY_THRESHOLD,
             prominence: float = DEFAULT_PROMINENCE) -> PatternSummary:
    """Label a finished run as homogeneous, patterned or not converged."""
    u = np.asarray(final_state.u, dtype=float)
    het = heterogeneity(u, M, mean_floor=DEPLETION_FLOOR)
    converged = bool(series.converged)
    max_location = int(np.argmax(u))
    n_maxima, _ = count_local_maxima(mesh, u, prominence)
    if converged and het < het_threshold:
        return PatternSummary("homogeneous", 0, het, max_location, True)
    if converged and het >= het_threshold and n_maxima >= 1:
        return PatternSummary("pattern", n_maxima, het, max_location, True)
    return PatternSummary("not_converged", n_maxima, het, max_location, converged)
