"""Seeded test-function generators shared by the experiment suites.

Each generator takes a ``numpy.random.Generator`` (or builds one from a seed)
and returns grid functions as columns of an ``(n, m)`` array.
"""

from __future__ import annotations

import numpy as np

from .filtration import DyadicSystem, make_simple_block
from .tree import RadialTree


def rng_for(seed, *salt: int) -> np.random.Generator:
    """Independent stream for ``seed`` and a tuple of integers (grid coordinates, trial ids)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, salt)]))


def representative_vertices(tree: RadialTree) -> list[int]:
    """First vertex of every level."""
    return [int(tree.level_offsets[j]) for j in range(tree.depth + 1)]


def point_masses(system: DyadicSystem, vertices) -> np.ndarray:
    """``mu(x)^-1 delta_x``, unit mass at each vertex."""
    t = system.tree
    out = np.zeros((t.n, len(vertices)))
    for i, x in enumerate(vertices):
        out[x, i] = 1.0 / system.mu.values[x]
    return out


def cube_indicators(system: DyadicSystem, cubes) -> np.ndarray:
    return np.stack([system.mask(int(c)).astype(float) for c in cubes], axis=1)


def random_nonnegative(tree: RadialTree, rng: np.random.Generator, count: int, density: float | None = None) -> np.ndarray:
    """Non-negative functions; each column draws its own support density unless one is given.

    Columns alternate between uniform values and heavy-tailed values to
    exercise both flat and peaked profiles.  No column is identically zero.
    """
    n = tree.n
    dens = rng.uniform(0.02, 1.0, count) if density is None else np.full(count, float(density))
    vals = rng.random((n, count))
    heavy = rng.random(count) < 0.5
    vals[:, heavy] = rng.pareto(1.5, (n, int(heavy.sum())))
    mask = rng.random((n, count)) < dens
    empty = ~mask.any(axis=0)
    mask[rng.integers(0, n, int(empty.sum())), np.flatnonzero(empty)] = True
    return vals * mask


def random_signs(tree: RadialTree, rng: np.random.Generator, count: int) -> np.ndarray:
    return rng.choice([-1.0, 1.0], size=(tree.n, count))


def simple_block_candidates(system: DyadicSystem, rng: np.random.Generator, random_per_cube: int = 2):
    """Simple blocks on one sector per level and one singleton per level.

    For every cube ``Q``: the flat block ``mu(Q)^-1 1_Q``, a point mass at the
    deepest first vertex of ``Q`` and ``random_per_cube`` random inner
    functions bounded by ``mu(Q)^-1``.  Yields ``(label, block)``.
    """
    t = system.tree
    for j in range(t.depth + 1):
        v = int(t.level_offsets[j])
        cubes = []
        if j >= 1:
            cubes.append(("sector", v))
        if j < t.depth:
            cubes.append(("singleton", system.singleton(v)))
        for kind, c in cubes:
            m = system.mask(c)
            bound = 1.0 / system.measure(c)
            yield f"{kind}{j}:flat", make_simple_block(system, c, m * bound)
            deep = int(system.members(c)[-1])
            a = np.zeros(t.n)
            a[deep] = bound
            yield f"{kind}{j}:point", make_simple_block(system, c, a)
            for r in range(random_per_cube):
                a = np.where(m, rng.uniform(-bound, bound, t.n), 0.0)
                yield f"{kind}{j}:random{r}", make_simple_block(system, c, a)


def single_scale_differences(system: DyadicSystem, rng: np.random.Generator, count: int) -> np.ndarray:
    """``D_k f`` for random ``f`` and random ``k``: functions living on one scale."""
    from .filtration import martingale_difference

    t = system.tree
    cols = []
    for _ in range(count):
        k = int(rng.integers(1, t.depth + 1))
        cols.append(martingale_difference(system, rng.standard_normal(t.n), k))
    return np.stack(cols, axis=1)


def cz_case(system: DyadicSystem, rng: np.random.Generator) -> tuple[np.ndarray, float, int]:
    """A non-negative ``f`` supported in a random sector ``R`` and a height above its average."""
    t = system.tree
    level = int(rng.integers(0, t.depth))
    r = int(rng.integers(int(t.level_offsets[level]), int(t.level_offsets[level + 1])))
    f = random_nonnegative(t, rng, 1)[:, 0] * system.mask(r)
    if not f.any():
        f[r] = 1.0
    height = system.average(r, f) * float(rng.uniform(1.05, 20.0))
    return f, height, r


def structured_nonnegative(system: DyadicSystem) -> tuple[np.ndarray, list[str]]:
    """Normalized cube indicators and point masses at fixed positions of every level.

    Per level: the first sector, its singleton, the neighbouring sector and the
    point masses at both first vertices; plus the constant 1.  These reach the
    worst observed sparse-domination ratios at every depth, where random
    functions only approach them on shallow trees.
    """
    t = system.tree
    cols, labels = [np.ones(t.n)], ["one"]
    for j in range(t.depth + 1):
        v = int(t.level_offsets[j])
        cubes = [("sector", v)]
        if j < t.depth:
            cubes.append(("singleton", system.singleton(v)))
        if j >= 1:
            cubes.append(("sibling", v + 1))
        for kind, c in cubes:
            cols.append(system.mask(c) / system.measure(c))
            labels.append(f"{kind}{j}")
        for x, kind in ((v, "point"), (v + 1, "point_sibling")):
            if j == 0 and kind == "point_sibling":
                continue
            e = np.zeros(t.n)
            e[x] = 1.0 / system.mu.values[x]
            cols.append(e)
            labels.append(f"{kind}{j}")
    return np.stack(cols, axis=1), labels
