"""Canonical designs for simulation studies and bundled data generation."""

from __future__ import annotations

import numpy as np

from .datasets import Dataset
from .models import POOLED_X_COLS


def one_way_design(n_groups=10, per_group=5):
    """Balanced one-way layout: intercept-only design, one random intercept."""
    n = n_groups * per_group
    return Dataset(
        y=np.zeros(n),
        X=np.ones((n, 1)),
        x_names=("intercept",),
        groups={"group": np.repeat(np.arange(n_groups), per_group)},
    )


def cluster_design(n=5):
    """Single-cluster intercept-only design for the Bernoulli toy."""
    return Dataset(y=np.zeros(n), X=np.ones((n, 1)), x_names=("intercept",))


def salamander_design(replicates=1):
    """Balanced three-experiment crossed mating design.

    Per experiment: 20 females and 20 males (10 rough-butt, 10 whiteside
    each), two closed groups of 5+5 females and 5+5 males; every female
    meets 3 males of each type in her group on a cyclic rota, giving 120
    pairings per experiment and 6 matings per animal. Experiments 1 and 2
    reuse the same animals (ids), experiment 3 uses fresh animals whose ids
    are recycled; the pooled model's zero covariance between the repeated
    seasons and season 3 keeps the reuse harmless.

    replicates > 1 stacks extra rota passes (offset by 3 males each pass)
    onto the same animals; used for better-identified synthetic studies.
    """
    rows = []
    for exp in (1, 2, 3):
        season = 0 if exp == 1 else 1
        for group in (0, 1):
            base = 5 * group
            r_females = [base + i for i in range(5)]
            w_females = [10 + base + i for i in range(5)]
            r_males = [base + i for i in range(5)]
            w_males = [10 + base + i for i in range(5)]
            # difference-set rota {0, 1, 3} mod 5 keeps partner overlap
            # between females near-uniform, mirroring the balanced crossing
            for flist in (r_females, w_females):
                for a, f in enumerate(flist):
                    for rep in range(replicates):
                        for j in (0, 1, 3):
                            k = (a + j + 3 * rep) % 5
                            rows.append((f, r_males[k], exp, season))
                            rows.append((f, w_males[k], exp, season))
    rows = np.array(rows)
    female, male, exp, season = rows.T
    trtf = (female >= 10).astype(float)
    trtm = (male >= 10).astype(float)
    X = np.column_stack(
        [np.ones(len(rows)), trtf, trtm, trtf * trtm, season.astype(float)]
    )
    return Dataset(
        y=np.zeros(len(rows)),
        X=X,
        x_names=POOLED_X_COLS,
        groups={"female": female, "male": male, "experiment": exp},
    )


def spatial_design(n=157, times=None):
    """Survey-style spatial layout in kilometres: a coarse grid of 107
    points at 0.2 km spacing plus two 5x5 fine grids at 0.04 km spacing.
    Requesting fewer than 157 points keeps the leading points."""
    pts = []
    row_lengths = (28, 27, 26, 26)
    for j, length in enumerate(row_lengths):
        x0 = 0.1 * (j % 2)
        for i in range(length):
            pts.append((x0 + 0.2 * i, 0.2 * j))
    for cx, cy in ((0.5, 1.0), (4.5, 1.0)):
        for i in range(5):
            for j in range(5):
                pts.append((cx + 0.04 * i, cy + 0.04 * j))
    coords = np.array(pts)
    if n > coords.shape[0]:
        raise ValueError(f"canonical spatial layout has {coords.shape[0]} points")
    coords = coords[:n]
    t = np.ones(n) if times is None else np.asarray(times, dtype=float)[:n]
    return Dataset(
        y=np.zeros(n),
        X=np.ones((n, 1)),
        x_names=("intercept",),
        t=t,
        coords=coords,
    )


DESIGN_BUILDERS = {
    "normal_lmm": one_way_design,
    "bernoulli_cluster_toy": cluster_design,
    "summer_glmm": salamander_design,
    "pooled_glmm": salamander_design,
    "pooled_shared_glmm": salamander_design,
    "spatial_poisson": spatial_design,
    "spatial_odp": spatial_design,
}


def canonical_design(family, **options):
    try:
        builder = DESIGN_BUILDERS[family]
    except KeyError:
        raise ValueError(f"no canonical design for family {family!r}") from None
    return builder(**options)
