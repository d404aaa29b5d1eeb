"""Integral operators on trees and verifiers for kernel regularity and size estimates."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .bergman import BergmanProjector
from .filtration import DyadicSystem, SimpleAtomicBlock, l1_norm
from .tree import MeasureVector, RadialTree, nu

EXHAUSTIVE_LIMIT = 500


class KernelOperator:
    """``T f(x) = sum_y K(x, y) f(y) mu(y)`` on a fixed tree and measure.

    A kernel is given by a vectorized ``evaluate(x, y)``, or by a ``column``
    callback returning ``K(., y)``.  ``applier`` may supply a fast path for
    ``T`` itself.
    """

    def __init__(
        self,
        tree: RadialTree,
        mu: MeasureVector,
        evaluate: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None,
        column: Callable[[int], np.ndarray] | None = None,
        applier: Callable[[np.ndarray], np.ndarray] | None = None,
        symmetric: bool = True,
        name: str = "kernel",
    ):
        if evaluate is None and column is None:
            raise ValueError("a kernel needs an evaluate or a column callback")
        self.tree, self.mu = tree, mu
        self._evaluate, self._column, self._applier = evaluate, column, applier
        self.symmetric = symmetric
        self.name = name

    @property
    def n(self) -> int:
        return self.tree.n

    def column(self, y: int) -> np.ndarray:
        """``K(x, y)`` for every ``x``."""
        if self._column is not None:
            return np.asarray(self._column(int(y)), dtype=float)
        return np.asarray(self._evaluate(np.arange(self.n), np.full(self.n, int(y))), dtype=float)

    def row(self, x: int) -> np.ndarray:
        """``K(x, y)`` for every ``y``."""
        if self.symmetric:
            return self.column(x)
        if self._evaluate is None:
            raise ValueError("row access on a non-symmetric kernel needs evaluate")
        return np.asarray(self._evaluate(np.full(self.n, int(x)), np.arange(self.n)), dtype=float)

    def value(self, x: int, y: int) -> float:
        if self._evaluate is not None:
            return float(np.asarray(self._evaluate(np.array([x]), np.array([y])))[0])
        return float(self.column(y)[x])

    def matrix(self) -> np.ndarray:
        return np.stack([self.column(y) for y in range(self.n)], axis=1)

    def apply(self, f: np.ndarray) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if self._applier is not None:
            return self._applier(f)
        fm = f * self.mu.values.reshape((-1,) + (1,) * (f.ndim - 1))
        out = np.zeros_like(f)
        support = np.flatnonzero(np.any(fm.reshape(self.n, -1) != 0, axis=1))
        for y in support:
            col = self.column(y)
            out += col.reshape((-1,) + (1,) * (f.ndim - 1)) * fm[y]
        return out

    __call__ = apply

    def symmetry_defect(self, samples: int = 64, seed: int = 0) -> float:
        rng = np.random.default_rng(seed)
        x = rng.integers(0, self.n, samples)
        y = rng.integers(0, self.n, samples)
        return float(max(abs(self.value(a, b) - self.value(b, a)) for a, b in zip(x, y)))


def confluent_levels(tree: RadialTree, y: int) -> np.ndarray:
    """``|x ^ y|`` for every ``x``."""
    ly = int(tree.level[y])
    anc = tree.ancestors[:, : ly + 1]
    return (anc == tree.ancestors[y, : ly + 1]).sum(axis=1) - 1


def bergman_kernel(projector: BergmanProjector) -> KernelOperator:
    return KernelOperator(
        projector.tree, projector.mu, column=projector.kernel_column, applier=projector.apply, name="bergman"
    )


def constant_kernel(tree: RadialTree, mu: MeasureVector, c: float = 1.0) -> KernelOperator:
    return KernelOperator(tree, mu, evaluate=lambda x, y: np.full(np.shape(x), float(c)), name="constant")


def zero_kernel(tree: RadialTree, mu: MeasureVector) -> KernelOperator:
    return KernelOperator(
        tree, mu, evaluate=lambda x, y: np.zeros(np.shape(x)), applier=lambda f: np.zeros_like(f), name="zero"
    )


def identity_kernel(tree: RadialTree, mu: MeasureVector) -> KernelOperator:
    """``K(x, y) = delta_{xy} / mu(x)``, the kernel of the identity."""
    m = mu.values

    def evaluate(x, y):
        x, y = np.asarray(x), np.asarray(y)
        return np.where(x == y, 1.0 / m[x], 0.0)

    return KernelOperator(tree, mu, evaluate=evaluate, applier=lambda f: np.array(f, dtype=float), name="identity")


def confluent_kernel(tree: RadialTree, mu: MeasureVector, power: float = 2.0) -> KernelOperator:
    """``K(x, y) = mu(x ^ y)^(-power)``: too large near the diagonal for the size condition."""
    lv = mu.level_values

    def column(y):
        return lv[confluent_levels(tree, y)] ** (-power)

    return KernelOperator(tree, mu, column=column, name=f"confluent^{power:g}")


def geometric_mean_kernel(tree: RadialTree, mu: MeasureVector) -> KernelOperator:
    """``K(x, y) = (mu(x) mu(y))^(-1/2)``: smooth in neither variable."""
    s = 1.0 / np.sqrt(mu.values)
    return KernelOperator(tree, mu, column=lambda y: s * s[y], name="geometric_mean")


# Hormander and size constants -------------------------------------------------


def _representatives(tree: RadialTree, mode: str) -> list[int]:
    if mode == "exhaustive":
        return list(range(tree.n))
    return [int(tree.level_offsets[j]) for j in range(tree.depth + 1)]


def sector_candidates(tree: RadialTree, v: int) -> np.ndarray:
    """``v`` plus the first vertex of every child sector at every deeper level."""
    out = [v]
    j = int(tree.level[v])
    for c in tree.children(v):
        for m in range(j + 1, tree.depth + 1):
            out.append(tree.descendant_range(int(c), m)[0])
    return np.array(out, dtype=np.int64)


def _check_mode(tree: RadialTree, mode: str):
    if mode not in ("candidates", "exhaustive"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "exhaustive" and tree.n > EXHAUSTIVE_LIMIT:
        raise ValueError(f"exhaustive mode is limited to {EXHAUSTIVE_LIMIT} vertices")


def hormander_constant(kernel: KernelOperator, mode: str = "candidates") -> float:
    """``max_Q max_{x,y in Q} sum_{z not in Q} |K(z,x) - K(z,y)| mu(z)`` over non-point cubes.

    ``candidates`` scans one sector per level with the points of
    :func:`sector_candidates`, which is exact for kernels invariant under the
    tree's automorphisms; ``exhaustive`` scans every cube and every pair.
    """
    tree, mu = kernel.tree, kernel.mu.values
    _check_mode(tree, mode)
    best = 0.0
    for v in _representatives(tree, mode):
        j = int(tree.level[v])
        if j == 0 or j == tree.depth:
            continue
        pts = tree.sector(v) if mode == "exhaustive" else sector_candidates(tree, v)
        outside = ~tree.in_sector(v, np.arange(tree.n))
        cols = np.stack([kernel.column(x) for x in pts], axis=1)[outside]
        w = mu[outside]
        for a in range(len(pts)):
            best = max(best, float((np.abs(cols - cols[:, a : a + 1]).T @ w).max()))
    return best


def size_constant(kernel: KernelOperator, mode: str = "candidates") -> float:
    """``max_Q max_{x in Q} sum_{z in Q^(1) minus Q} |K(x,z)| mu(z)`` over cubes other than X."""
    tree, mu = kernel.tree, kernel.mu.values
    _check_mode(tree, mode)
    allv = np.arange(tree.n)
    best = 0.0
    for v in _representatives(tree, mode):
        j = int(tree.level[v])
        # singleton {v}: the companion is S_v minus v
        if j < tree.depth:
            region = tree.in_sector(v, allv)
            region[v] = False
            best = max(best, float(np.abs(kernel.row(v)[region]) @ mu[region]))
        if j == 0:
            continue
        p = int(tree.parent[v])
        region = tree.in_sector(p, allv) & ~tree.in_sector(v, allv)
        pts = tree.sector(v) if mode == "exhaustive" else sector_candidates(tree, v)
        for x in pts:
            best = max(best, float(np.abs(kernel.row(x)[region]) @ mu[region]))
    return best


# estimates for the pieces of the projector ------------------------------------


@dataclass
class BoundReport:
    """Rows of ``(case, cube_level, ell, lhs, rhs_shape, ratio)`` plus metadata."""

    rows: list[dict] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def add(self, case: str, cube_level: int, ell: int, lhs: float, rhs: float):
        ratio = lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else float("inf"))
        self.rows.append(
            {"case": case, "cube_level": int(cube_level), "ell": int(ell), "lhs": float(lhs), "rhs_shape": float(rhs), "ratio": float(ratio)}
        )

    def extend(self, other: "BoundReport"):
        self.rows.extend(other.rows)

    @property
    def max_ratio(self) -> float:
        return max((r["ratio"] for r in self.rows), default=0.0)


def _piece_mask(n: int, v: int) -> np.ndarray:
    m = np.zeros(n, dtype=bool)
    m[v] = True
    return m


def _level_points(tree: RadialTree, v: int) -> np.ndarray:
    """One vertex of the sector of ``v`` at every level from ``|v|`` down."""
    return np.array([tree.descendant_range(v, m)[0] for m in range(int(tree.level[v]), tree.depth + 1)])


def _require_sector(system: DyadicSystem, cube: int):
    if system.is_point(cube):
        raise ValueError(f"cube {cube} is a single point")


def verify_piece_oscillation(projector: BergmanProjector, cube: int, ell: int) -> BoundReport:
    """Oscillation of ``K_{Q^(l)}(z, .)`` over ``Q`` against ``nu / mu(Q^(l-1))``.

    The kernel of a piece above ``Q`` sees a point of ``Q`` only through its
    level, so the supremum over ``x, y`` is a range over one point per level.
    """
    sysm, tree = projector.system, projector.tree
    _require_sector(sysm, cube)
    k = sysm.generation(cube)
    if not 1 <= ell <= k:
        raise ValueError(f"ell must lie in 1..{k}")
    top = sysm.ancestor(cube, ell)
    below = sysm.ancestor(cube, ell - 1)
    vt = sysm.vertex(top)
    active = _piece_mask(tree.n, vt)
    pts = _level_points(tree, sysm.vertex(cube))
    cols = np.stack([projector.kernel_column(int(x), active, constant=False) for x in pts], axis=1)
    osc = cols.max(axis=1) - cols.min(axis=1)
    in_top = sysm.mask(top)
    in_below = sysm.mask(below)
    mq = sysm.measure(below)
    rep = BoundReport()
    rep.add("piece_osc:in", k, ell, float(osc[in_below].max()), nu(tree, k - ell + 1, k) / mq)
    rest = in_top & ~in_below
    if rest.any():
        rep.add("piece_osc:out", k, ell, float(osc[rest].max()), nu(tree, k - ell, k) / mq)
    return rep


def verify_piece_size(projector: BergmanProjector, cube: int) -> BoundReport:
    """``|K_{Q^(1)}(x, y)|`` on ``Q^(1)`` minus its base, split by the confluent."""
    sysm, tree = projector.system, projector.tree
    _require_sector(sysm, cube)
    k = sysm.generation(cube)
    if k < 1:
        raise ValueError("the whole space has no parent cube")
    par = sysm.ancestor(cube, 1)
    p = sysm.vertex(par)
    active = _piece_mask(tree.n, p)
    region = sysm.mask(par)
    region[p] = False
    kids = tree.children(p)
    same_best = diff_best = 0.0
    for c in kids:
        for x in _level_points(tree, int(c)):
            col = np.abs(projector.kernel_column(int(x), active, constant=False))
            same = tree.in_sector(int(c), np.arange(tree.n)) & region
            same_best = max(same_best, float(col[same].max()))
            other = region & ~same
            if other.any():
                diff_best = max(diff_best, float(col[other].max()))
    mq = sysm.measure(cube)
    rep = BoundReport()
    rep.add("piece_size:same", k, 1, same_best, 1.0 / mq)
    rep.add("piece_size:split", k, 1, diff_best, 1.0 / (tree.q[int(tree.level[p])] * mq))
    return rep


def verify_truncated_oscillation(projector: BergmanProjector, cube: int, family=(), q0: int = 0) -> BoundReport:
    """Regularity of the truncated kernel ``K_F^{Q0}`` at points above ``Q``."""
    sysm, tree = projector.system, projector.tree
    family = [int(c) for c in family]
    if not sysm.contains(q0, cube):
        raise ValueError("cube must lie inside q0")
    if any(sysm.contains(r, cube) for r in family):
        raise ValueError("cube lies inside a member of the family")
    active = projector.mask_outside(family, q0)
    k = sysm.generation(cube)
    pts = _level_points(tree, sysm.vertex(cube)) if sysm.is_sector(cube) else np.array([sysm.vertex(cube)])
    cols = np.stack([projector.kernel_column(int(x), active, constant=False) for x in pts], axis=1)
    osc = cols.max(axis=1) - cols.min(axis=1)
    rep = BoundReport()
    g0 = sysm.generation(q0)
    for ell in range(1, k - g0 + 1):
        top, below = sysm.ancestor(cube, ell), sysm.ancestor(cube, ell - 1)
        region = sysm.mask(top) & ~sysm.mask(below)
        base = sysm.vertex(top)
        shape = nu(tree, k - ell, k)
        if region[base]:
            rep.add("truncated_osc:base", k, ell, float(osc[base]), shape / sysm.measure(top))
            region[base] = False
        if region.any():
            rep.add("truncated_osc:other", k, ell, float(osc[region].max()), shape / sysm.measure(below))
    return rep


def verify_kernel_bounds(projector: BergmanProjector, case: str, cube: int, ell: int = 1, family=(), q0: int = 0) -> BoundReport:
    if case == "piece_oscillation":
        return verify_piece_oscillation(projector, cube, ell)
    if case == "piece_size":
        return verify_piece_size(projector, cube)
    if case == "truncated":
        return verify_truncated_oscillation(projector, cube, family, q0)
    raise ValueError(f"unknown case {case!r}")


def verify_diff_bounds(projector: BergmanProjector, block: SimpleAtomicBlock, ell: int) -> BoundReport:
    """``|D_{cl(Q)^(l)} b|`` inside ``cl(Q)^(l-1)`` and in the rest of ``cl(Q)^(l)``."""
    sysm, tree = projector.system, projector.tree
    cube = block.cube
    v = sysm.closure(cube)
    lv = int(tree.level[v])
    if not 1 <= ell <= lv:
        raise ValueError(f"ell must lie in 1..{lv}")
    k = sysm.generation(cube)
    big = int(tree.ancestors[v, lv - ell])
    inner = int(tree.ancestors[v, lv - ell + 1])
    d = np.abs(projector.diff(big, block.values))
    allv = np.arange(tree.n)
    in_inner = tree.in_sector(inner, allv)
    rest = tree.in_sector(big, allv) & ~in_inner
    b1 = l1_norm(sysm, block.values)
    mq = sysm.measure(sysm.ancestor(cube, ell - 1))
    rep = BoundReport()
    rep.add("diff_in", k, ell, float(d[in_inner].max()), nu(tree, k - ell + 1, k) * b1 / mq)
    rep.add("diff_out", k, ell, float(d[rest].max()), nu(tree, k - ell, k) * b1 / mq)
    return rep


def closure_diff(projector: BergmanProjector, block: SimpleAtomicBlock) -> float:
    """``max |D_{cl(Q)} b|``; vanishes when ``Q`` is a singleton."""
    return float(np.abs(projector.diff(projector.system.closure(block.cube), block.values)).max())
