"""
Approximate functional equivalence: DBSCAN over objective values and niche elites

Two values are neighbours when |f_i - f_j| < epsilon (strict). A point counts
itself as a neighbour. Labels: 0 is noise (or excluded), clusters are 1..k,
numbered in the order a sequential index-order scan would discover them.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .config import EquivalenceConfig


NOISE = 0


def _neighbour_window(sorted_values: np.ndarray, value: float, epsilon: float):
    # widened by a hair so that the exact |a - b| < eps test decides membership
    slack = epsilon * 1e-9 + 1e-12
    lo = int(np.searchsorted(sorted_values, value - epsilon - slack, side="left"))
    hi = int(np.searchsorted(sorted_values, value + epsilon + slack, side="right"))
    return lo, hi


def dbscan_1d(values: Sequence[float], epsilon: float, min_pts: int) -> np.ndarray:
    """DBSCAN labels for a 1-D point set in O(n log n)

    Core points have at least ``min_pts`` neighbours (self included). Core
    components are runs of sorted core points with gaps below epsilon; a
    border point joins the lowest-numbered component within reach.
    """
    x = np.asarray(values, dtype=float)
    n = x.size
    labels = np.zeros(n, dtype=np.int64)
    if n == 0:
        return labels

    order = np.argsort(x, kind="stable")
    xs = x[order]

    counts = np.empty(n, dtype=np.int64)
    for i in range(n):
        lo, hi = _neighbour_window(xs, x[i], epsilon)
        counts[i] = int(np.count_nonzero(np.abs(xs[lo:hi] - x[i]) < epsilon))
    core = counts >= min_pts
    if not core.any():
        return labels

    # connected runs of core points along the sorted axis
    core_sorted = order[core[order]]
    component = np.empty(core_sorted.size, dtype=np.int64)
    component[0] = 0
    for k in range(1, core_sorted.size):
        gap = abs(x[core_sorted[k]] - x[core_sorted[k - 1]])
        component[k] = component[k - 1] + (0 if gap < epsilon else 1)

    # number components by their lowest original index
    n_components = int(component[-1]) + 1
    first_index = np.full(n_components, n, dtype=np.int64)
    np.minimum.at(first_index, component, core_sorted)
    rank = np.empty(n_components, dtype=np.int64)
    rank[np.argsort(first_index, kind="stable")] = np.arange(1, n_components + 1)

    core_values = x[core_sorted]
    core_labels = rank[component]
    labels[core_sorted] = core_labels

    for i in np.flatnonzero(~core):
        lo, hi = _neighbour_window(core_values, x[i], epsilon)
        if lo >= hi:
            continue
        near = np.abs(core_values[lo:hi] - x[i]) < epsilon
        if near.any():
            labels[i] = int(core_labels[lo:hi][near].min())
    return labels


@dataclass
class EquivalenceClasses:
    labels: np.ndarray
    classes: List[List[int]] = field(default_factory=list)
    elites: List[int] = field(default_factory=list)
    skipped: bool = False

    @property
    def count(self) -> int:
        return len(self.classes)

    def summaries(self, fitnesses: Sequence[float]) -> List[dict]:
        """Class id, size and fitness centroid for the run log"""
        f = np.asarray(fitnesses, dtype=float)
        return [
            {
                "class_id": k + 1,
                "size": len(members),
                "centroid": float(np.mean(f[members])),
                "elite": int(self.elites[k]),
                "elite_fitness": float(f[self.elites[k]]),
            }
            for k, members in enumerate(self.classes)
        ]


def detect_classes(fitnesses: Sequence[float], valid: Sequence[bool],
                   config: EquivalenceConfig,
                   feasible: Optional[Sequence[bool]] = None) -> EquivalenceClasses:
    """Cluster the valid, feasible individuals and pick one elite per class

    ``valid`` marks non-identity atomic vectors. Detection is skipped (and the
    caller keeps its previous elites) when fewer than min_pts individuals qualify.
    Elite ties go to the lowest individual index.
    """
    f = np.asarray(fitnesses, dtype=float)
    keep = np.asarray(valid, dtype=bool).copy()
    if feasible is not None:
        keep &= np.asarray(feasible, dtype=bool)
    labels = np.zeros(f.size, dtype=np.int64)

    members = np.flatnonzero(keep)
    if members.size < config.min_pts:
        return EquivalenceClasses(labels=labels, skipped=True)

    sub_labels = dbscan_1d(f[members], config.epsilon, config.min_pts)
    labels[members] = sub_labels

    # a border point taken by an earlier cluster can leave a later one below min_pts; it is still a class
    classes: List[List[int]] = []
    elites: List[int] = []
    for k in range(1, int(sub_labels.max(initial=NOISE)) + 1):
        cluster = members[sub_labels == k]
        classes.append(cluster.tolist())
        # argmax returns the first maximum; cluster is in ascending index order
        elites.append(int(cluster[int(np.argmax(f[cluster]))]))
    return EquivalenceClasses(labels=labels, classes=classes, elites=elites)
