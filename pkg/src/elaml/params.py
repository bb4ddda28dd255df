"""Structured parameter vectors with per-coordinate unconstrained transforms.

Fixed effects are unconstrained by nature. Dispersion coordinates carry a
transform tag so optimizers can work on an unconstrained scale while results
are reported on the natural scale:

    identity   natural == unconstrained (e.g. log-scale covariance params)
    log        natural = exp(u), for standard deviations / variances
    fisher-z   natural = tanh(u), for correlations in (-1, 1)
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

IDENTITY = "identity"
LOG = "log"
FISHER_Z = "fisher-z"

TRANSFORMS = (IDENTITY, LOG, FISHER_Z)


def to_natural(u, tag):
    """Map an unconstrained value to the natural scale."""
    if tag == IDENTITY:
        return u
    if tag == LOG:
        return np.exp(u)
    if tag == FISHER_Z:
        return np.tanh(u)
    raise ValueError(f"unknown transform tag {tag!r}")


def to_unconstrained(v, tag):
    """Map a natural-scale value to the unconstrained scale."""
    if tag == IDENTITY:
        return v
    if tag == LOG:
        if np.any(np.asarray(v) <= 0):
            raise ValueError("log-transformed coordinate must be positive")
        return np.log(v)
    if tag == FISHER_Z:
        if np.any(np.abs(np.asarray(v)) >= 1):
            raise ValueError("fisher-z coordinate must lie in (-1, 1)")
        return np.arctanh(v)
    raise ValueError(f"unknown transform tag {tag!r}")


@dataclass(frozen=True)
class ParamLayout:
    """Names and transform tags for the (beta, tau) parameter blocks."""

    beta_names: tuple
    tau_names: tuple
    tau_transforms: tuple

    def __post_init__(self):
        object.__setattr__(self, "beta_names", tuple(self.beta_names))
        object.__setattr__(self, "tau_names", tuple(self.tau_names))
        object.__setattr__(self, "tau_transforms", tuple(self.tau_transforms))
        if len(self.tau_names) != len(self.tau_transforms):
            raise ValueError("tau_names and tau_transforms length mismatch")
        for tag in self.tau_transforms:
            if tag not in TRANSFORMS:
                raise ValueError(f"unknown transform tag {tag!r}")
        names = self.beta_names + self.tau_names
        if len(set(names)) != len(names):
            raise ValueError("duplicate coordinate names")

    @property
    def p(self):
        return len(self.beta_names)

    @property
    def q(self):
        return len(self.tau_names)

    @property
    def names(self):
        return self.beta_names + self.tau_names

    def index(self, name):
        """Position of a coordinate in the stacked (beta, tau) vector."""
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"unknown coordinate {name!r}") from None


def _frozen_array(values):
    arr = np.array(values, dtype=float)
    if arr.ndim != 1:
        raise ValueError("parameter block must be one-dimensional")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ParamVec:
    """Parameter value: beta block plus tau block on the unconstrained scale."""

    beta: np.ndarray
    tau: np.ndarray
    layout: ParamLayout

    def __post_init__(self):
        object.__setattr__(self, "beta", _frozen_array(self.beta))
        object.__setattr__(self, "tau", _frozen_array(self.tau))
        if self.beta.size != self.layout.p:
            raise ValueError("beta length does not match layout")
        if self.tau.size != self.layout.q:
            raise ValueError("tau length does not match layout")

    @classmethod
    def from_natural(cls, layout, beta, tau_natural):
        tau_u = [
            to_unconstrained(v, tag)
            for v, tag in zip(np.asarray(tau_natural, dtype=float), layout.tau_transforms)
        ]
        return cls(beta=np.asarray(beta, dtype=float), tau=np.array(tau_u), layout=layout)

    @classmethod
    def from_unconstrained(cls, layout, x):
        x = np.asarray(x, dtype=float)
        if x.size != layout.p + layout.q:
            raise ValueError("unconstrained vector length does not match layout")
        return cls(beta=x[: layout.p], tau=x[layout.p :], layout=layout)

    @classmethod
    def from_natural_vector(cls, layout, v):
        v = np.asarray(v, dtype=float)
        if v.size != layout.p + layout.q:
            raise ValueError("natural vector length does not match layout")
        return cls.from_natural(layout, v[: layout.p], v[layout.p :])

    @property
    def tau_natural(self):
        return np.array(
            [to_natural(u, tag) for u, tag in zip(self.tau, self.layout.tau_transforms)]
        )

    def unconstrained(self):
        """Stacked (beta, tau) vector on the optimizer scale."""
        return np.concatenate([self.beta, self.tau])

    def natural(self):
        """Stacked (beta, tau) vector on the natural (reporting) scale."""
        return np.concatenate([self.beta, self.tau_natural])

    def natural_dict(self):
        return dict(zip(self.layout.names, self.natural()))

    def replace(self, beta=None, tau=None):
        return ParamVec(
            beta=self.beta if beta is None else beta,
            tau=self.tau if tau is None else tau,
            layout=self.layout,
        )
