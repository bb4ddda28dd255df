"""Dataset container shared by all model families."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError


def pairwise_distances(coords):
    """Euclidean distance matrix for an (n, 2) coordinate array."""
    coords = np.asarray(coords, dtype=float)
    diff = coords[:, None, :] - coords[None, :, :]
    return np.sqrt((diff**2).sum(axis=2))


@dataclass
class Dataset:
    """Responses plus the design information a model family needs.

    `groups` maps index names (e.g. "female", "male", "experiment") to
    integer arrays; `distances` is precomputed once for spatial models and
    reused for every covariance build.
    """

    y: np.ndarray
    X: np.ndarray
    x_names: tuple = ()
    t: np.ndarray | None = None
    groups: dict = field(default_factory=dict)
    coords: np.ndarray | None = None
    distances: np.ndarray | None = None

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float)
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        if self.X.shape[0] != self.y.shape[0]:
            raise DataError("design matrix and responses have different lengths")
        if not self.x_names:
            self.x_names = tuple(f"x{j}" for j in range(self.X.shape[1]))
        self.x_names = tuple(self.x_names)
        if len(self.x_names) != self.X.shape[1]:
            raise DataError("x_names length does not match design matrix")
        if self.t is not None:
            self.t = np.asarray(self.t, dtype=float)
            if self.t.shape[0] != self.n:
                raise DataError("exposure vector length mismatch")
            if np.any(self.t <= 0):
                raise DataError("exposures must be strictly positive")
        self.groups = {k: np.asarray(v, dtype=int) for k, v in self.groups.items()}
        for name, idx in self.groups.items():
            if idx.shape[0] != self.n:
                raise DataError(f"group index {name!r} length mismatch")
            if idx.size and idx.min() < 0:
                raise DataError(f"group index {name!r} has negative entries")
        if self.coords is not None:
            self.coords = np.asarray(self.coords, dtype=float)
            if self.coords.shape != (self.n, 2):
                raise DataError("coordinates must be an (n, 2) array")
            if self.distances is None:
                self.distances = pairwise_distances(self.coords)

    @property
    def n(self):
        return self.y.shape[0]

    def subset(self, mask, x_cols=None):
        """Row subset, optionally keeping only the named design columns."""
        mask = np.asarray(mask)
        cols = (
            slice(None)
            if x_cols is None
            else [self.x_names.index(c) for c in x_cols]
        )
        return Dataset(
            y=self.y[mask],
            X=self.X[mask][:, cols],
            x_names=tuple(x_cols) if x_cols is not None else self.x_names,
            t=None if self.t is None else self.t[mask],
            groups={k: v[mask] for k, v in self.groups.items()},
            coords=None if self.coords is None else self.coords[mask],
        )

    def with_responses(self, y, t=None):
        """Copy of the dataset with responses replaced (same design)."""
        return Dataset(
            y=np.asarray(y, dtype=float),
            X=self.X,
            x_names=self.x_names,
            t=self.t if t is None else np.asarray(t, dtype=float),
            groups=dict(self.groups),
            coords=self.coords,
            distances=self.distances,
        )
