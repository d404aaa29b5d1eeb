"""Empirical endpoint estimates: weak (1,1), H^1 -> L^1, L^inf -> BMO, H^1 -> H^1, BMO -> BMO.

Every estimator is a maximum of exact ratios over a fixed, seeded candidate
family, so it is a lower bound for the corresponding operator norm.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bergman import BergmanProjector
from .filtration import DyadicSystem, SimpleAtomicBlock, bmo_norm, h1_norm, l1_norm
from .kernels import KernelOperator, bergman_kernel
from .samplers import (
    cube_indicators,
    point_masses,
    random_nonnegative,
    random_signs,
    representative_vertices,
    rng_for,
    simple_block_candidates,
    single_scale_differences,
)

BMO_FLOOR = 1e-12


@dataclass
class EndpointReport:
    estimator: str
    candidates: list[str] = field(default_factory=list)
    ratios: list[float] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def add(self, label: str, ratio: float):
        self.candidates.append(label)
        self.ratios.append(float(ratio))

    @property
    def max_ratio(self) -> float:
        return max(self.ratios, default=0.0)

    @property
    def argmax(self) -> str | None:
        if not self.ratios:
            return None
        return self.candidates[int(np.argmax(self.ratios))]


def _operator(T) -> KernelOperator:
    if isinstance(T, BergmanProjector):
        return bergman_kernel(T)
    return T


def weak_type_value(system: DyadicSystem, g: np.ndarray) -> float:
    """``sup_{lam > 0} lam mu(|g| > lam)``, exactly.

    The supremum is approached from below each level ``v`` of ``|g|``, where
    it equals ``v mu(|g| >= v)``.
    """
    v = np.abs(np.asarray(g, dtype=float))
    order = np.argsort(-v, kind="stable")
    vs = v[order]
    mass = np.cumsum(system.mu.values[order])
    # for ties, count every vertex at that level
    last = np.r_[vs[1:] != vs[:-1], True]
    return float((vs[last] * mass[last]).max(initial=0.0))


def weak_candidates(system: DyadicSystem, seed: int = 0, count: int = 16):
    t = system.tree
    reps = representative_vertices(t)
    yield from ((f"point{j}", c) for j, c in enumerate(point_masses(system, reps).T))
    cubes = [v for v in reps] + [system.singleton(v) for v in reps[:-1]]
    yield from ((f"cube{c}", col) for c, col in zip(cubes, cube_indicators(system, cubes).T))
    rng = rng_for(seed, 11)
    for i, col in enumerate(random_nonnegative(t, rng, count, density=0.05).T):
        yield f"sparse{i}", col


def weak11_ratio(T, seed: int = 0, count: int = 16, candidates=None) -> EndpointReport:
    op = _operator(T)
    s = DyadicSystem(op.tree, op.mu)
    rep = EndpointReport("weak11")
    items = list(candidates if candidates is not None else weak_candidates(s, seed, count))
    F = np.stack([f for _, f in items], axis=1)
    TF = op.apply(F)
    for i, (label, f) in enumerate(items):
        norm = l1_norm(s, f)
        if norm > 0:
            rep.add(label, weak_type_value(s, TF[:, i]) / norm)
    return rep


def linf_candidates(system: DyadicSystem, seed: int = 0, count: int = 16):
    t = system.tree
    yield "one", np.ones(t.n)
    for v in representative_vertices(t)[:-1]:
        yield f"cube{v}", system.mask(v).astype(float)
        kids = t.children(v)
        f = np.where(system.mask(int(kids[0])), 1.0, -1.0)
        yield f"split{v}", f
        # alternate signs across children, constant elsewhere
        g = np.ones(t.n)
        for i, c in enumerate(kids):
            g[system.mask(int(c))] = (-1.0) ** i
        yield f"alternate{v}", g
    rng = rng_for(seed, 13)
    for i, col in enumerate(random_signs(t, rng, count).T):
        yield f"signs{i}", col


def linf_to_bmo(T, seed: int = 0, count: int = 16) -> EndpointReport:
    op = _operator(T)
    s = DyadicSystem(op.tree, op.mu)
    rep = EndpointReport("linf_to_bmo")
    items = list(linf_candidates(s, seed, count))
    TF = op.apply(np.stack([f for _, f in items], axis=1))
    for i, (label, f) in enumerate(items):
        rep.add(label, bmo_norm(s, TF[:, i]) / float(np.abs(f).max()))
    return rep


def block_candidates(system: DyadicSystem, seed: int = 0, random_per_cube: int = 2) -> list[tuple[str, SimpleAtomicBlock]]:
    return list(simple_block_candidates(system, rng_for(seed, 17), random_per_cube))


def h1_to_l1(T, seed: int = 0, random_per_cube: int = 2) -> EndpointReport:
    """``max ||T b||_1`` over simple blocks, each of which has ``H^1`` certificate at most 1."""
    op = _operator(T)
    s = DyadicSystem(op.tree, op.mu)
    rep = EndpointReport("h1_to_l1")
    items = block_candidates(s, seed, random_per_cube)
    TB = op.apply(np.stack([b.values for _, b in items], axis=1))
    for i, (label, _) in enumerate(items):
        rep.add(label, l1_norm(s, TB[:, i]))
    return rep


def endpoint_ratios(T, which: str, **kw) -> EndpointReport:
    if which == "linf_to_bmo":
        return linf_to_bmo(T, **kw)
    if which == "h1_to_l1":
        return h1_to_l1(T, **kw)
    if which == "weak11":
        return weak11_ratio(T, **kw)
    raise ValueError(f"unknown estimator {which!r}")


# strong endpoints for the projector ---------------------------------------------


def block_projection_split(projector: BergmanProjector, block: SimpleAtomicBlock) -> tuple[np.ndarray, list[np.ndarray]]:
    """``(P^Q a, [D_{Q^(1)} b, D_{Q^(2)} b, ...])`` whose sum is ``P b``."""
    s = projector.system
    local = projector.localized(block.cube, block.inner)
    ups = [projector.diff(c, block.values) for c in s.ancestors(block.cube)]
    return local, ups


def h1_to_h1(projector: BergmanProjector, seed: int = 0, random_per_cube: int = 2) -> EndpointReport:
    """``max ||P b||_{H^1}`` over simple blocks, with the split ``P b = P^Q a + sum_k D_{Q^(k)} b``.

    ``meta`` records the largest pointwise defect of the split (relative to
    ``max(||P b||_inf, 1)``) and the largest
    ratio of ``||P b||_{H^1}`` to the sum of the split pieces' norms.
    """
    s = projector.system
    rep = EndpointReport("h1_to_h1")
    items = block_candidates(s, seed, random_per_cube)
    PB = projector.apply(np.stack([b.values for _, b in items], axis=1))
    split_defect = 0.0
    split_ratio = 0.0
    for i, (label, b) in enumerate(items):
        value = h1_norm(s, PB[:, i])
        local, ups = block_projection_split(projector, b)
        scale = max(float(np.abs(PB[:, i]).max()), 1.0)
        split_defect = max(split_defect, float(np.abs(local + sum(ups) - PB[:, i]).max()) / scale)
        upper = h1_norm(s, local) + sum(h1_norm(s, u) for u in ups)
        if upper > 0:
            split_ratio = max(split_ratio, value / upper)
        rep.add(label, value)
    rep.meta.update(split_defect=split_defect, split_ratio=split_ratio)
    return rep


def bmo_candidates(system: DyadicSystem, seed: int = 0, count: int = 8):
    t = system.tree
    rng = rng_for(seed, 19)
    yield "one", np.ones(t.n)
    for v in representative_vertices(t)[1:]:
        yield f"indicator{v}", system.mask(v) / system.measure(v)
    blocks = block_candidates(system, seed, 1)
    for i in range(count):
        pick = rng.choice(len(blocks), size=min(3, len(blocks)), replace=False)
        f = sum(rng.standard_normal() * blocks[int(k)][1].values for k in pick)
        yield f"blocksum{i}", f
    for i, col in enumerate(single_scale_differences(system, rng, count).T):
        yield f"scale{i}", col
    # bounded oscillation: random constants on the cubes of a random generation
    for i in range(count):
        k = int(rng.integers(1, t.depth + 1))
        vals = rng.standard_normal(system.n_cubes)
        ids = np.where(t.level < k, t.n + np.arange(t.n), t.ancestors[:, k])
        yield f"partition{i}", vals[ids]


def bmo_to_bmo(projector: BergmanProjector, seed: int = 0, count: int = 8) -> EndpointReport:
    s = projector.system
    rep = EndpointReport("bmo_to_bmo")
    items = list(bmo_candidates(s, seed, count))
    PF = projector.apply(np.stack([f for _, f in items], axis=1))
    skipped = 0
    for i, (label, f) in enumerate(items):
        den = bmo_norm(s, f)
        if den < BMO_FLOOR:
            skipped += 1
            continue
        rep.add(label, bmo_norm(s, PF[:, i]) / den)
    rep.meta["skipped"] = skipped
    return rep


def strong_endpoint_ratios(projector: BergmanProjector, which: str, **kw) -> EndpointReport:
    if which == "h1_to_h1":
        return h1_to_h1(projector, **kw)
    if which == "bmo_to_bmo":
        return bmo_to_bmo(projector, **kw)
    raise ValueError(f"unknown estimator {which!r}")
