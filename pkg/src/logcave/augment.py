"""Mode-augmented observation grid."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import SortedSample


@dataclass(frozen=True)
class AugmentedSample:
    """Sorted union ``z`` of the sample points and a candidate mode ``m``.

    ``weights`` is aligned with ``z`` and carries zero mass at ``m`` when
    ``m`` is not an observation.
    """

    base: SortedSample
    m: float
    z: np.ndarray
    weights: np.ndarray
    mode_index: int
    mode_is_datum: bool

    @property
    def N(self) -> int:
        return self.z.size

    def without_mode(self) -> np.ndarray:
        """Grid with the inserted mode removed (the original points)."""
        if self.mode_is_datum:
            return self.z
        return np.delete(self.z, self.mode_index)


def augment(sample: SortedSample, m: float) -> AugmentedSample:
    """Insert ``m`` into the observation grid unless it is already a datum.

    Exact floating equality decides whether ``m`` coincides with an
    observation; ``m`` outside the data range becomes the first or last
    grid point.
    """
    m = float(m)
    if not np.isfinite(m):
        raise ValueError("mode must be finite")
    x = sample.points
    k = int(np.searchsorted(x, m, side="left"))
    if k < x.size and x[k] == m:
        z = x
        w = sample.weights
        datum = True
    else:
        z = np.insert(x, k, m)
        w = np.insert(sample.weights, k, 0.0)
        datum = False
    z = np.array(z)
    w = np.array(w)
    z.setflags(write=False)
    w.setflags(write=False)
    return AugmentedSample(sample, m, z, w, k, datum)
