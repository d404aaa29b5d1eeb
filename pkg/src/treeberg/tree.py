"""Finite radial trees and their Bergman-type measures.

Vertices are stored breadth-first: every vertex of level ``l`` precedes every
vertex of level ``l + 1`` and the children of a vertex occupy a contiguous
block of the next level.  Because of that layout, the descendants of a vertex
at any fixed level form a contiguous index range, which is what makes all the
sector sums below plain ``reshape(...).sum(axis=1)`` operations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

DEFAULT_MAX_VERTICES = 10**6


class BranchingError(ValueError):
    """Branching values below 2, or a depth below 1."""


class TreeSizeError(ValueError):
    """The truncated tree would exceed the configured vertex cap."""


@dataclass(frozen=True)
class BranchingSpec:
    """Branching function ``level -> number of children``.

    Three kinds are supported::

        {"kind": "constant", "q": 2}
        {"kind": "affine", "a": 2, "b": 1, "cap": 8}      # a + b*l, capped
        {"kind": "table", "values": [2, 3, 2], "tail": "repeat_last"}

    ``tail`` is ``"repeat_last"`` or ``"cycle"`` and decides the values past the
    end of the table.
    """

    kind: str
    q: int | None = None
    a: int | None = None
    b: int | None = None
    cap: int | None = None
    values: tuple[int, ...] = ()
    tail: str = "repeat_last"

    def __post_init__(self):
        if self.kind == "constant":
            _check_int(self.q, "q")
        elif self.kind == "affine":
            _check_int(self.a, "a")
            if not isinstance(self.b, (int, np.integer)) or self.b < 0:
                raise BranchingError(f"affine slope b must be a non-negative integer, got {self.b!r}")
            if self.cap is not None:
                _check_int(self.cap, "cap")
        elif self.kind == "table":
            if not self.values:
                raise BranchingError("table branching needs at least one value")
            object.__setattr__(self, "values", tuple(int(v) for v in self.values))
            for v in self.values:
                _check_int(v, "values[]")
            if self.tail not in ("repeat_last", "cycle"):
                raise BranchingError(f"unknown table tail rule {self.tail!r}")
        else:
            raise BranchingError(f"unknown branching kind {self.kind!r}")

    @classmethod
    def constant(cls, q: int) -> "BranchingSpec":
        return cls("constant", q=q)

    @classmethod
    def affine(cls, a: int, b: int, cap: int | None = None) -> "BranchingSpec":
        return cls("affine", a=a, b=b, cap=cap)

    @classmethod
    def table(cls, values, tail: str = "repeat_last") -> "BranchingSpec":
        return cls("table", values=tuple(values), tail=tail)

    def __call__(self, level: int) -> int:
        if level < 0:
            raise ValueError(f"negative level {level}")
        if self.kind == "constant":
            return int(self.q)
        if self.kind == "affine":
            v = self.a + self.b * level
            return int(v if self.cap is None else min(v, self.cap))
        if level < len(self.values):
            return self.values[level]
        if self.tail == "repeat_last":
            return self.values[-1]
        return self.values[level % len(self.values)]

    @property
    def label(self) -> str:
        """Short stable identifier used in report files."""
        if self.kind == "constant":
            return f"constant({self.q})"
        if self.kind == "affine":
            cap = "" if self.cap is None else f";cap={self.cap}"
            return f"affine({self.a},{self.b}{cap})"
        return f"table({','.join(map(str, self.values))};{self.tail})"

    def to_config(self) -> dict:
        if self.kind == "constant":
            return {"kind": "constant", "q": self.q}
        if self.kind == "affine":
            d = {"kind": "affine", "a": self.a, "b": self.b}
            if self.cap is not None:
                d["cap"] = self.cap
            return d
        return {"kind": "table", "values": list(self.values), "tail": self.tail}

    @classmethod
    def from_config(cls, cfg: dict) -> "BranchingSpec":
        if not isinstance(cfg, dict) or "kind" not in cfg:
            raise BranchingError(f"branching entry must be an object with a 'kind', got {cfg!r}")
        kind = cfg["kind"]
        allowed = {"constant": {"q"}, "affine": {"a", "b", "cap"}, "table": {"values", "tail"}}
        if kind not in allowed:
            raise BranchingError(f"unknown branching kind {kind!r}")
        extra = set(cfg) - allowed[kind] - {"kind"}
        if extra:
            raise BranchingError(f"unexpected keys for {kind} branching: {sorted(extra)}")
        if kind == "table":
            return cls.table(cfg.get("values", ()), cfg.get("tail", "repeat_last"))
        if kind == "affine":
            return cls.affine(cfg.get("a"), cfg.get("b"), cfg.get("cap"))
        return cls.constant(cfg.get("q"))


def _check_int(v, name):
    if isinstance(v, bool) or not isinstance(v, (int, np.integer)):
        raise BranchingError(f"branching value {name} must be an integer, got {v!r}")
    if v < 2:
        raise BranchingError(f"branching value {name} must be >= 2, got {v}")


def _readonly(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class RadialTree:
    """Depth-``L`` truncation of a radial tree.

    Attributes
    ----------
    depth : int
        Number of levels below the root; leaves sit at level ``depth``.
    branching : BranchingSpec
    q : tuple of int
        ``q[l]`` is the number of children of a level-``l`` vertex, ``l < depth``.
    level_sizes, level_offsets : ndarray
        Level ``l`` occupies indices ``level_offsets[l]:level_offsets[l+1]``.
    parent, level : ndarray
        Per-vertex parent index (``-1`` at the root) and distance to the root.
    """

    depth: int
    branching: BranchingSpec
    q: tuple
    level_sizes: np.ndarray
    level_offsets: np.ndarray
    parent: np.ndarray
    level: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def vertex_count(self) -> int:
        return int(self.level_offsets[-1])

    n = vertex_count

    @property
    def root(self) -> int:
        return 0

    @property
    def interior_count(self) -> int:
        """Vertices with children, i.e. the first ``level_offsets[depth]`` indices."""
        return int(self.level_offsets[self.depth])

    def level_slice(self, l: int) -> slice:
        return slice(int(self.level_offsets[l]), int(self.level_offsets[l + 1]))

    def block(self, j: int, m: int) -> int:
        """Number of level-``m`` descendants of a level-``j`` vertex."""
        return math.prod(self.q[j:m])

    def branching_at(self, l: int) -> int:
        """``q~(l)``; defined past the truncation through the branching spec."""
        return self.q[l] if l < self.depth else self.branching(l)

    def _check(self, x):
        if not 0 <= x < self.n:
            raise IndexError(f"vertex {x} out of range [0, {self.n})")

    # navigation -------------------------------------------------------------

    def level_of(self, x: int) -> int:
        self._check(x)
        return int(self.level[x])

    def children(self, x: int) -> np.ndarray:
        self._check(x)
        l = int(self.level[x])
        if l == self.depth:
            return np.empty(0, dtype=np.int64)
        first = self.level_offsets[l + 1] + (x - self.level_offsets[l]) * self.q[l]
        return np.arange(first, first + self.q[l], dtype=np.int64)

    def ancestor(self, x: int, k: int) -> int:
        """The vertex ``k`` steps up the geodesic from ``x`` to the root."""
        self._check(x)
        l = int(self.level[x])
        if not 0 <= k <= l:
            raise IndexError(f"ancestor({x}, {k}) needs 0 <= k <= |x| = {l}")
        return int(self.ancestors[x, l - k])

    def descendant_range(self, x: int, m: int) -> tuple[int, int]:
        """Index range of the level-``m`` vertices of the sector of ``x``."""
        j = int(self.level[x])
        if m < j:
            return (0, 0)
        b = self.block(j, m)
        lo = int(self.level_offsets[m]) + (x - int(self.level_offsets[j])) * b
        return lo, lo + b

    def sector(self, x: int) -> np.ndarray:
        """All vertices ``y`` having ``x`` as ancestor (``x`` included)."""
        self._check(x)
        parts = [np.arange(*self.descendant_range(x, m)) for m in range(int(self.level[x]), self.depth + 1)]
        return np.concatenate(parts).astype(np.int64)

    def in_sector(self, x: int, y) -> np.ndarray | bool:
        """Whether ``y`` (scalar or array) lies in the sector of ``x``."""
        j = int(self.level[x])
        y = np.asarray(y)
        ok = self.level[y] >= j
        return ok & (self.ancestors[y, j] == x)

    def confluent(self, x: int, y: int) -> int:
        """Deepest common ancestor of ``x`` and ``y``."""
        self._check(x)
        self._check(y)
        top = min(int(self.level[x]), int(self.level[y]))
        ax, ay = self.ancestors[x], self.ancestors[y]
        j = top
        while ax[j] != ay[j]:
            j -= 1
        return int(ax[j])

    @property
    def ancestors(self) -> np.ndarray:
        """``ancestors[x, j]`` is the level-``j`` ancestor of ``x`` (``-1`` if ``j > |x|``)."""
        a = self._cache.get("ancestors")
        if a is None:
            a = np.full((self.n, self.depth + 1), -1, dtype=np.int64)
            for m in range(self.depth + 1):
                sl = self.level_slice(m)
                local = np.arange(self.level_sizes[m], dtype=np.int64)
                for j in range(m + 1):
                    a[sl, j] = self.level_offsets[j] + local // self.block(j, m)
            self._cache["ancestors"] = _readonly(a)
        return a

    # level-structured reductions --------------------------------------------

    def sector_sums(self, g: np.ndarray) -> np.ndarray:
        """``out[v] = sum of g over the sector of v``; ``g`` may carry trailing batch axes."""
        out = np.array(g, dtype=float, copy=True)
        tail = out.shape[1:]
        for m in range(self.depth - 1, -1, -1):
            child = out[self.level_slice(m + 1)]
            out[self.level_slice(m)] += child.reshape((int(self.level_sizes[m]), self.q[m]) + tail).sum(axis=1)
        return out

    def expand(self, values: np.ndarray, j: int, m: int) -> np.ndarray:
        """Copy per-vertex values of level ``j`` onto their level-``m`` descendants."""
        return np.repeat(values, self.block(j, m), axis=0)

    def gather_ancestor(self, values: np.ndarray, j: int) -> np.ndarray:
        """``out[x] = values[ancestor of x at level j]`` for ``|x| >= j``, zero above."""
        values = np.asarray(values)
        out = np.zeros((self.n,) + values.shape[1:], dtype=values.dtype)
        start = int(self.level_offsets[j])
        out[start:] = values[self.ancestors[start:, j]]
        return out


def build_tree(spec: BranchingSpec, depth: int, max_vertices: int = DEFAULT_MAX_VERTICES) -> RadialTree:
    """Truncate the radial tree with branching ``spec`` at level ``depth``.

    Raises
    ------
    BranchingError
        ``depth < 1`` or some ``q~(l) < 2`` for ``l < depth``.
    TreeSizeError
        The vertex count exceeds ``max_vertices``.
    """
    if isinstance(depth, bool) or not isinstance(depth, (int, np.integer)) or depth < 1:
        raise BranchingError(f"depth must be an integer >= 1, got {depth!r}")
    q = tuple(int(spec(l)) for l in range(depth))
    if min(q) < 2:
        raise BranchingError(f"branching below 2 in {q}")
    sizes = [1]
    for l in range(depth):
        sizes.append(sizes[-1] * q[l])
        if sum(sizes) > max_vertices:
            raise TreeSizeError(f"{spec.label} at depth {depth} exceeds the cap of {max_vertices} vertices")
    sizes = np.array(sizes, dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    n = int(offsets[-1])
    level = np.repeat(np.arange(depth + 1, dtype=np.int64), sizes)
    parent = np.full(n, -1, dtype=np.int64)
    for m in range(1, depth + 1):
        local = np.arange(sizes[m], dtype=np.int64)
        parent[offsets[m]:offsets[m + 1]] = offsets[m - 1] + local // q[m - 1]
    return RadialTree(depth, spec, q, _readonly(sizes), _readonly(offsets), _readonly(parent), _readonly(level))


@dataclass(frozen=True, eq=False)
class MeasureVector:
    """Per-vertex weights ``mu(x) = prod_{l < |x|} q~(l)^(-alpha)``.

    ``total_mass`` is the mass of the truncated tree in raw units; when
    ``normalized`` is set the stored values are divided by it.
    """

    alpha: float
    values: np.ndarray
    level_values: np.ndarray
    normalized: bool
    total_mass: float
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __len__(self):
        return len(self.values)

    @property
    def mass(self) -> float:
        """Mass of the whole tree in the stored units."""
        return 1.0 if self.normalized else self.total_mass


def build_measure(tree: RadialTree, alpha: float, normalize: bool = False) -> MeasureVector:
    """Bergman measure of exponent ``alpha > 1`` on ``tree``."""
    alpha = float(alpha)
    if not alpha > 1.0 or not math.isfinite(alpha):
        raise ValueError(f"alpha must be > 1, got {alpha}")
    lv = np.ones(tree.depth + 1)
    for l in range(tree.depth):
        lv[l + 1] = lv[l] / float(tree.q[l]) ** alpha
    total = float(np.dot(tree.level_sizes, lv))
    if normalize:
        lv = lv / total
    values = lv[tree.level]
    return MeasureVector(alpha, _readonly(values), _readonly(lv), bool(normalize), total)


def sector_measure(tree: RadialTree, mu: MeasureVector, x: int) -> float:
    """``mu(S_x)`` as a finite sum over the truncated sector."""
    j = tree.level_of(x)
    return float(sum(mu.level_values[m] * tree.block(j, m) for m in range(j, tree.depth + 1)))


def sector_measures(tree: RadialTree, mu: MeasureVector) -> np.ndarray:
    """``mu(S_v)`` for every vertex ``v``."""
    if len(mu) != tree.n:
        raise ValueError("measure and tree sizes differ")
    cached = mu._cache.get("sector")
    if cached is None:
        cached = _readonly(tree.sector_sums(mu.values))
        mu._cache["sector"] = cached
    return cached


def nu(tree: RadialTree, j: int, k: int) -> float:
    """``prod_{l=j}^{k} 1/q~(l)``, and 1 when ``j > k``."""
    if j < 0:
        raise ValueError("nu needs j >= 0")
    out = 1.0
    for l in range(j, k + 1):
        out /= tree.branching_at(l)
    return out
