"""Dyadic system of sectors and singletons, martingale operators, BMO and H^1.

Cube identifiers are integers: the sector ``S_v`` has id ``v`` and the
singleton ``{v}`` of a non-leaf vertex has id ``n + v``.  A leaf ``v`` only has
the sector cube ``S_v = {v}``; its generation is capped at the tree depth.

Generation ``k`` of the filtration is::

    D_0 = {X},   D_k = {{x} : |x| < k}  u  {S_y : |y| = k}.

Each cube is tagged with its canonical generation, the smallest ``k`` for which
it belongs to ``D_k``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tree import MeasureVector, RadialTree, sector_measures

SECTOR = "sector"
SINGLETON = "singleton"

EXACT_TOL = 1e-12
SUM_TOL = 1e-10


@dataclass(frozen=True)
class DyadicCube:
    id: int
    kind: str
    vertex: int
    generation: int
    parent: int | None

    @property
    def is_sector(self) -> bool:
        return self.kind == SECTOR


class DyadicSystem:
    """All cubes of the filtration on a truncated radial tree, with a measure."""

    def __init__(self, tree: RadialTree, mu: MeasureVector):
        if len(mu) != tree.n:
            raise ValueError("measure does not match the tree")
        self.tree = tree
        self.mu = mu
        self.sector_mu = sector_measures(tree, mu)
        n = tree.n
        self.n_cubes = n + tree.interior_count

    # cube bookkeeping -------------------------------------------------------

    @property
    def max_generation(self) -> int:
        return self.tree.depth

    def sector(self, v: int) -> int:
        self.tree._check(v)
        return int(v)

    def singleton(self, v: int) -> int:
        """Cube id of ``{v}``; for a leaf this is its sector."""
        self.tree._check(v)
        return int(v) if self.tree.level[v] == self.tree.depth else self.tree.n + int(v)

    @property
    def root(self) -> int:
        return 0

    def _check(self, c: int):
        if not 0 <= c < self.n_cubes:
            raise IndexError(f"cube id {c} out of range")

    def is_sector(self, c: int) -> bool:
        self._check(c)
        return c < self.tree.n

    def vertex(self, c: int) -> int:
        self._check(c)
        return c if c < self.tree.n else c - self.tree.n

    def generation(self, c: int) -> int:
        v = self.vertex(c)
        return int(self.tree.level[v]) + (0 if self.is_sector(c) else 1)

    def parent(self, c: int) -> int | None:
        """The cube of the previous generation containing ``c`` (``None`` for X)."""
        v = self.vertex(c)
        if not self.is_sector(c):
            return v
        return None if v == 0 else int(self.tree.parent[v])

    def cube(self, c: int) -> DyadicCube:
        return DyadicCube(c, SECTOR if self.is_sector(c) else SINGLETON, self.vertex(c), self.generation(c), self.parent(c))

    def is_point(self, c: int) -> bool:
        """True when the cube has exactly one vertex."""
        return not self.is_sector(c) or self.tree.level[c] == self.tree.depth

    def closure(self, c: int) -> int:
        """Smallest sector containing ``c``."""
        return self.vertex(c)

    def ancestor(self, c: int, s: int) -> int:
        """``Q^(s)``: the cube of generation ``gen(c) - s`` containing ``c``."""
        g = self.generation(c)
        if not 0 <= s <= g:
            raise IndexError(f"cube {c} of generation {g} has no ancestor {s} steps up")
        return self.cube_containing(self.vertex(c), g - s)

    def ancestors(self, c: int) -> list[int]:
        """``[Q^(1), Q^(2), ..., X]``."""
        return [self.ancestor(c, s) for s in range(1, self.generation(c) + 1)]

    def cube_containing(self, x: int, k: int) -> int:
        """Id of the cube of ``D_k`` containing the vertex ``x``."""
        if not 0 <= k <= self.max_generation:
            raise IndexError(f"generation {k} out of range")
        l = int(self.tree.level[x])
        if l < k:
            return self.singleton(x)
        return int(self.tree.ancestors[x, k])

    def children(self, c: int) -> list[int]:
        """Cubes whose parent is ``c`` (``D_1(Q)``), in id order."""
        if not self.is_sector(c) or self.is_point(c):
            return []
        return [int(w) for w in self.tree.children(c)] + [self.tree.n + c]

    def partition(self, k: int) -> list[int]:
        """Ids of the cubes of ``D_k`` (canonical or not)."""
        if not 0 <= k <= self.max_generation:
            raise IndexError(f"generation {k} out of range")
        if k == 0:
            return [0]
        t = self.tree
        singles = [self.singleton(x) for x in range(int(t.level_offsets[k]))]
        return singles + list(range(*map(int, (t.level_offsets[k], t.level_offsets[k + 1]))))

    def canonical(self, k: int) -> list[int]:
        """Cubes whose canonical generation is ``k``."""
        t = self.tree
        out = list(range(*map(int, (t.level_offsets[k], t.level_offsets[k + 1]))))
        if k >= 1:
            out += [t.n + x for x in range(*map(int, (t.level_offsets[k - 1], t.level_offsets[k])))]
        return out

    def all_cubes(self) -> range:
        return range(self.n_cubes)

    def members(self, c: int) -> np.ndarray:
        v = self.vertex(c)
        return self.tree.sector(v) if self.is_sector(c) else np.array([v], dtype=np.int64)

    def mask(self, c: int) -> np.ndarray:
        out = np.zeros(self.tree.n, dtype=bool)
        v = self.vertex(c)
        if not self.is_sector(c):
            out[v] = True
            return out
        for m in range(int(self.tree.level[v]), self.tree.depth + 1):
            lo, hi = self.tree.descendant_range(v, m)
            out[lo:hi] = True
        return out

    def measure(self, c: int) -> float:
        v = self.vertex(c)
        return float(self.sector_mu[v] if self.is_sector(c) else self.mu.values[v])

    def contains(self, big: int, small: int) -> bool:
        """Set inclusion ``small`` in ``big``."""
        vb, vs = self.vertex(big), self.vertex(small)
        if not self.is_sector(big):
            return self.is_point(small) and vs == vb
        return bool(self.tree.in_sector(vb, vs))

    def average(self, c: int, f: np.ndarray) -> float:
        v = self.vertex(c)
        if not self.is_sector(c):
            return float(f[v])
        return float(self.sector_averages(f)[v])

    def sector_averages(self, f: np.ndarray) -> np.ndarray:
        """``<f>_{S_v}`` for every vertex ``v`` (trailing batch axes allowed)."""
        f = np.asarray(f, dtype=float)
        w = self.mu.values.reshape((-1,) + (1,) * (f.ndim - 1))
        return self.tree.sector_sums(f * w) / self.sector_mu.reshape(w.shape)

    def cube_averages(self, f: np.ndarray) -> np.ndarray:
        """Averages indexed by cube id."""
        f = np.asarray(f, dtype=float)
        return np.concatenate([self.sector_averages(f), f[: self.tree.interior_count]])

    def cube_measures(self) -> np.ndarray:
        return np.concatenate([self.sector_mu, self.mu.values[: self.tree.interior_count]])


def enumerate_cubes(tree: RadialTree, mu: MeasureVector) -> DyadicSystem:
    return DyadicSystem(tree, mu)


# martingale operators -------------------------------------------------------


def integral(system: DyadicSystem, f: np.ndarray) -> float:
    return float(np.dot(np.asarray(f, dtype=float), system.mu.values))


def l1_norm(system: DyadicSystem, f: np.ndarray) -> float:
    return float(np.dot(np.abs(f), system.mu.values))


def l2_norm(system: DyadicSystem, f: np.ndarray) -> float:
    return float(np.sqrt(np.dot(np.square(f), system.mu.values)))


def _expectations(system: DyadicSystem, f: np.ndarray, avg: np.ndarray | None = None) -> list[np.ndarray]:
    t = system.tree
    f = np.asarray(f, dtype=float)
    if avg is None:
        avg = system.sector_averages(f)
    out = []
    for k in range(t.depth + 1):
        e = f.copy()
        start = int(t.level_offsets[k])
        e[start:] = avg[t.ancestors[start:, k]]
        out.append(e)
    return out


def conditional_expectation(system: DyadicSystem, f: np.ndarray, k: int) -> np.ndarray:
    """``E_k f``, constant on each cube of ``D_k``."""
    t = system.tree
    if not 0 <= k <= t.depth:
        raise IndexError(f"generation {k} outside 0..{t.depth}")
    f = np.asarray(f, dtype=float)
    avg = system.sector_averages(f)
    e = f.copy()
    start = int(t.level_offsets[k])
    e[start:] = avg[t.ancestors[start:, k]]
    return e


def martingale_difference(system: DyadicSystem, f: np.ndarray, k: int) -> np.ndarray:
    """``D_k f = E_k f - E_{k-1} f`` for ``1 <= k <= depth``."""
    if not 1 <= k <= system.tree.depth:
        raise IndexError(f"martingale difference index {k} outside 1..{system.tree.depth}")
    return conditional_expectation(system, f, k) - conditional_expectation(system, f, k - 1)


def maximal_function(system: DyadicSystem, f: np.ndarray) -> np.ndarray:
    """Dyadic maximal function ``sup_{Q containing x} <|f|>_Q``."""
    t = system.tree
    a = np.abs(np.asarray(f, dtype=float))
    avg = system.sector_averages(a)
    out = a.copy()
    for j in range(t.depth + 1):
        start = int(t.level_offsets[j])
        np.maximum(out[start:], avg[t.ancestors[start:, j]], out=out[start:])
    return out


def bmo_terms(system: DyadicSystem, f: np.ndarray) -> tuple[float, float, float]:
    """The three suprema of the computable BMO norm.

    Returns ``(oscillation, parent_jump, mean)`` where ``oscillation`` is the
    largest mean oscillation over a cube, ``parent_jump`` the largest
    ``|<f>_Q - <f>_{Q^(1)}|`` and ``mean`` is ``|sum f mu|``.
    """
    t = system.tree
    mu = system.mu.values
    f = np.asarray(f, dtype=float)
    avg = system.sector_averages(f)
    osc = 0.0
    for j in range(t.depth):
        start = int(t.level_offsets[j])
        dev = np.zeros(t.n)
        dev[start:] = np.abs(f[start:] - avg[t.ancestors[start:, j]]) * mu[start:]
        s = t.sector_sums(dev)[t.level_slice(j)] / system.sector_mu[t.level_slice(j)]
        osc = max(osc, float(s.max()))
    jumps = np.abs(avg[1:] - avg[t.parent[1:]])
    interior = t.interior_count
    jump = max(float(jumps.max(initial=0.0)), float(np.abs(f[:interior] - avg[:interior]).max(initial=0.0)))
    return osc, jump, abs(float(np.dot(f, mu)))


def bmo_norm(system: DyadicSystem, f: np.ndarray) -> float:
    """BMO norm through cube oscillations, parent jumps and the total mean.

    The mean term presumes a probability measure; on a raw measure it is the
    plain integral, so the value scales with the total mass.
    """
    return float(sum(bmo_terms(system, f)))


def bmo_norm_martingale(system: DyadicSystem, f: np.ndarray) -> float:
    """``||E_0 f||_inf + sup_k ||E_k |f - E_{k-1} f| ||_inf``; reported as a diagnostic."""
    t = system.tree
    e = _expectations(system, f)
    best = 0.0
    for k in range(1, t.depth + 1):
        r = conditional_expectation(system, np.abs(np.asarray(f, dtype=float) - e[k - 1]), k)
        best = max(best, float(np.abs(r).max()))
    return float(np.abs(e[0]).max()) + best


def square_function(system: DyadicSystem, f: np.ndarray) -> np.ndarray:
    e = _expectations(system, f)
    s = np.zeros(system.tree.n)
    for k in range(1, system.tree.depth + 1):
        s += np.square(e[k] - e[k - 1])
    return np.sqrt(s)


def h1_norm(system: DyadicSystem, f: np.ndarray) -> float:
    """Martingale H^1 norm ``|| (sum_k |D_k f|^2)^(1/2) ||_1``."""
    return float(np.dot(square_function(system, f), system.mu.values))


# atomic blocks ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SimpleAtomicBlock:
    """``s = a - <a>_{Q^(1)} 1_{Q^(1)}`` with ``a`` supported in ``Q``.

    ``scale`` is the factor applied to the supplied inner function to enforce
    ``||a||_inf <= mu(Q)^-1`` (1 when nothing was rescaled).
    """

    cube: int
    parent: int
    inner: np.ndarray
    values: np.ndarray
    scale: float = 1.0


def make_simple_block(system: DyadicSystem, cube: int, a_values: np.ndarray, rescale: bool = True) -> SimpleAtomicBlock:
    parent = system.parent(cube)
    if parent is None:
        raise ValueError("the whole space has no parent cube; cannot build a simple block on it")
    a = np.array(a_values, dtype=float)
    if a.shape != (system.tree.n,):
        raise ValueError("inner function must be a full grid function")
    inside = system.mask(cube)
    if np.any(a[~inside] != 0):
        raise ValueError("inner function is not supported in the cube")
    scale = 1.0
    bound = 1.0 / system.measure(cube)
    sup = float(np.abs(a).max())
    if rescale and sup > bound * (1 + EXACT_TOL):
        scale = bound / sup
        a = a * scale
    pmask = system.mask(parent)
    s = a.copy()
    s[pmask] -= float(np.dot(a, system.mu.values)) / system.measure(parent)
    return SimpleAtomicBlock(cube, parent, a, s, scale)


def decompose_block(system: DyadicSystem, cube: int, subatoms) -> tuple[list[tuple[float, SimpleAtomicBlock]], float]:
    """Rewrite an atomic block as a sum of simple atomic blocks.

    Parameters
    ----------
    cube : int
        Support cube ``Q`` of the block (generation ``k``; not a single point).
    subatoms : iterable of ``(lam, a, Q_i)``
        ``a`` is a grid function supported in the cube ``Q_i``, which lies in
        ``Q`` with generation ``k_i >= k`` and ``||a||_inf <= mu(Q_i)^-1 / (k_i-k+1)``.

    Returns
    -------
    pieces : list of ``(coefficient, SimpleAtomicBlock)``
        ``sum coefficient * block.values`` reproduces the block exactly.
    constant : float
        ``sum |coefficients| / sum |lam|``.

    Each subatom is telescoped along its chain of ancestor cubes up to ``Q``;
    the leftover constants ``lam <a>_Q 1_Q`` cancel because the block has zero
    mean.  A subatom living at the generation of ``Q`` itself is split over the
    children of ``Q`` instead.
    """
    subatoms = [(float(lam), np.asarray(a, dtype=float), int(c)) for lam, a, c in subatoms]
    if system.is_point(cube):
        raise ValueError("an atomic block cannot live on a single point")
    k = system.generation(cube)
    mu = system.mu.values
    mq = system.measure(cube)
    total_mean = sum(lam * float(np.dot(a, mu)) for lam, a, _ in subatoms) / mq
    scale = max([1.0] + [abs(lam) * float(np.abs(a).max()) * mq for lam, a, _ in subatoms])
    if abs(total_mean) * mq > SUM_TOL * scale:
        raise ValueError(f"atomic block has non-zero mean {total_mean:.3e}")

    pieces: list[tuple[float, SimpleAtomicBlock]] = []
    for lam, a, qi in subatoms:
        if not system.contains(cube, qi):
            raise ValueError(f"subatom cube {qi} is not inside the block cube {cube}")
        ki = system.generation(qi)
        if np.any(a[~system.mask(qi)] != 0):
            raise ValueError(f"subatom is not supported in its cube {qi}")
        if lam == 0 or not np.any(a):
            continue
        if ki == k:
            for child in system.children(cube):
                part = np.where(system.mask(child), a, 0.0)
                if np.any(part):
                    pieces.append((lam, make_simple_block(system, child, part, rescale=False)))
            continue
        pieces.append((lam, make_simple_block(system, qi, a, rescale=False)))
        width = ki - k + 1
        for ell in range(1, ki - k):
            anc = system.ancestor(qi, ell)
            inner = np.where(system.mask(anc), float(np.dot(a, mu)) / system.measure(anc), 0.0)
            pieces.append((lam / width, make_simple_block(system, anc, width * inner, rescale=False)))
    lam_in = sum(abs(lam) for lam, _, _ in subatoms)
    lam_out = sum(abs(c) for c, _ in pieces)
    return pieces, (lam_out / lam_in if lam_in else 0.0)
