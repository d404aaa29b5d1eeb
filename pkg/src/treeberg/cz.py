"""Calderon-Zygmund decomposition for the dyadic system, sparse families and sparse forms."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bergman import BergmanProjector
from .filtration import DyadicSystem, bmo_norm, l1_norm, maximal_function

THRESHOLD_FACTOR = 4.0
DENSITY_TOL = 1e-12


def _cube_tables(system: DyadicSystem):
    """Parent cube of every cube (``-1`` for X) and the generation lists."""
    cached = system.__dict__.get("_tables")
    if cached is not None:
        return cached
    t = system.tree
    n = t.n
    parent = np.concatenate([t.parent, np.arange(t.interior_count)]).astype(np.int64)
    gens = []
    for g in range(t.depth + 1):
        ids = np.arange(int(t.level_offsets[g]), int(t.level_offsets[g + 1]), dtype=np.int64)
        if g >= 1:
            ids = np.concatenate([n + np.arange(int(t.level_offsets[g - 1]), int(t.level_offsets[g])), ids])
        gens.append(ids)
    point = np.ones(system.n_cubes, dtype=bool)
    point[: t.interior_count] = False
    cached = (parent, gens, point)
    system.__dict__["_tables"] = cached
    return cached


def _inside(system: DyadicSystem, root: int) -> np.ndarray:
    """Boolean over cube ids: contained in ``root``."""
    t = system.tree
    out = np.zeros(system.n_cubes, dtype=bool)
    if not system.is_sector(root):
        out[root] = True
        return out
    vmask = system.mask(root)
    out[: t.n] = vmask
    out[t.n :] = vmask[: t.interior_count]
    return out


def _vertex_labels(system: DyadicSystem, selected: np.ndarray, fallback: int = -1) -> np.ndarray:
    """For every vertex, the deepest selected cube containing it (``fallback`` if none)."""
    t = system.tree
    n = t.n
    lab = np.full(n, fallback, dtype=np.int64)
    sec = selected[:n]
    for m in range(t.depth + 1):
        sl = t.level_slice(m)
        ids = np.arange(sl.start, sl.stop)
        inherited = lab[t.parent[sl]] if m > 0 else lab[sl]
        lab[sl] = np.where(sec[sl], ids, inherited)
    single = selected[n:]
    lab[: t.interior_count] = np.where(single, n + np.arange(t.interior_count), lab[: t.interior_count])
    return lab


def _contains_vertex(system: DyadicSystem, labels: np.ndarray) -> np.ndarray:
    """Whether cube ``labels[x]`` contains vertex ``x``, for every ``x``."""
    t = system.tree
    x = np.arange(t.n)
    sector = labels < t.n
    base = np.where(sector, labels, labels - t.n)
    lvl = t.level[base]
    anc = t.ancestors[x, np.minimum(lvl, t.level)]
    return np.where(sector, (t.level >= lvl) & (anc == base), base == x)


# Calderon-Zygmund ------------------------------------------------------------


@dataclass
class CZDecomposition:
    """``f = g + sum_j b_j`` with ``b_j = f 1_{Q_j} - c_j 1_{Q_j^(1)}``."""

    system: DyadicSystem
    f: np.ndarray
    height: float
    region: int
    cubes: np.ndarray
    parents: np.ndarray
    coefficients: np.ndarray
    good: np.ndarray

    def bad(self, j: int) -> np.ndarray:
        s = self.system
        out = np.where(s.mask(int(self.cubes[j])), self.f, 0.0)
        out[s.mask(int(self.parents[j]))] -= self.coefficients[j]
        return out

    def bad_sum(self) -> np.ndarray:
        return self.f - self.good

    def bad_l1(self) -> float:
        """``sum_j ||b_j||_1`` without forming the pieces."""
        s = self.system
        mu = s.mu.values
        if len(self.cubes) == 0:
            return 0.0
        sel = np.zeros(s.n_cubes, dtype=bool)
        sel[self.cubes] = True
        lab = _vertex_labels(s, sel)
        pos = np.full(s.n_cubes, -1, dtype=np.int64)
        pos[self.cubes] = np.arange(len(self.cubes))
        inside = lab >= 0
        j = pos[lab[inside]]
        on_cube = np.bincount(j, np.abs(self.f[inside] - self.coefficients[j]) * mu[inside], len(self.cubes))
        cm = s.cube_measures()
        rest = np.abs(self.coefficients) * (cm[self.parents] - cm[self.cubes])
        return float((on_cube + rest).sum())

    def constants(self) -> dict:
        s = self.system
        f1 = l1_norm(s, self.f)
        lam = self.height
        return {
            "good_l1": l1_norm(s, self.good) / f1,
            "bad_l1": self.bad_l1() / f1,
            "good_l2": float(np.dot(self.good**2, s.mu.values)) / (lam * f1),
            "good_bmo": bmo_norm(s, self.good) / lam,
        }

    def check(self) -> dict:
        """Defects of the structural properties (all zero up to rounding)."""
        s = self.system
        mu = s.mu.values
        cm = s.cube_measures()
        sums = np.array([np.dot(np.where(s.mask(int(c)), self.f, 0.0), mu) for c in self.cubes])
        mean_defect = float(np.abs(sums - self.coefficients * cm[self.parents]).max(initial=0.0))
        cover = np.zeros(s.tree.n, dtype=np.int64)
        total = self.good.copy()
        outside = []
        for j, c in enumerate(self.cubes):
            cover += s.mask(int(c))
            b = self.bad(j)
            total += b
            outside.append(float(np.abs(b[~s.mask(int(self.parents[j]))]).max(initial=0.0)))
        big = maximal_function(s, self.f) > self.height
        parent_covered = any(bool(np.all(cover[s.mask(int(p))] > 0)) for p in self.parents)
        return {
            "mean_defect": mean_defect,
            "overlap": int(cover.max(initial=0) > 1),
            "uncovered": int(np.count_nonzero(big & (cover == 0))),
            "parent_covered": int(parent_covered),
            "localization": max(outside, default=0.0),
            "reconstruction": float(np.abs(total - self.f).max()),
        }


def cz_decompose(system: DyadicSystem, f: np.ndarray, height: float, region: int = 0) -> CZDecomposition:
    """Stop at the maximal cubes inside ``region`` whose average exceeds ``height``."""
    t = system.tree
    f = np.asarray(f, dtype=float)
    if np.any(f < 0):
        raise ValueError("f must be non-negative")
    inside = _inside(system, region)
    if np.any(f[~system.mask(region)] != 0):
        raise ValueError("f must be supported in the region")
    if not height > system.average(region, f):
        raise ValueError("height must exceed the average over the region")
    parent, gens, _ = _cube_tables(system)
    avg = system.cube_averages(f)
    over = inside & (avg > height)
    # a cube is chosen when it exceeds and no larger cube inside the region did
    blocked = np.zeros(system.n_cubes, dtype=bool)
    chosen = np.zeros(system.n_cubes, dtype=bool)
    for ids in gens:
        par = parent[ids]
        pb = np.where(par >= 0, blocked[np.maximum(par, 0)], False)
        chosen[ids] = over[ids] & ~pb
        blocked[ids] = pb | over[ids]
    cubes = np.flatnonzero(chosen)
    parents = parent[cubes]
    cm = system.cube_measures()
    mu = system.mu.values
    lab = _vertex_labels(system, chosen)
    mass = np.bincount(np.where(lab >= 0, lab, system.n_cubes), f * mu, system.n_cubes + 1)[:-1]
    coef = mass[cubes] / cm[parents]
    # g = f off the cubes plus the constants spread over the parents
    add = np.zeros(t.n)
    np.add.at(add, parents if len(parents) else np.empty(0, dtype=np.int64), coef)
    for m in range(1, t.depth + 1):
        sl = t.level_slice(m)
        add[sl] += add[t.parent[sl]]
    good = np.where(lab >= 0, 0.0, f) + add
    return CZDecomposition(system, f, float(height), int(region), cubes, parents, coef, good)


# sparse families -------------------------------------------------------------


@dataclass
class SparseFamily:
    """Stopping cubes with their exceptional sets.

    ``owner[i]`` is the member whose stopping step produced ``cubes[i]``
    (``-1`` for X).  ``labels[x]`` is the member whose exceptional set contains
    the vertex ``x``.
    """

    system: DyadicSystem
    cubes: np.ndarray
    owner: np.ndarray
    labels: np.ndarray
    cube_mass: np.ndarray
    exceptional_mass: np.ndarray
    depth: np.ndarray
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.cubes)

    def exceptional_set(self, cube: int) -> np.ndarray:
        return np.flatnonzero(self.labels == cube)

    def certify(self) -> dict:
        """Exact checks of containment, disjointness and the half-density property."""
        s = self.system
        mu = s.mu.values
        pos = np.full(s.n_cubes, -1, dtype=np.int64)
        pos[self.cubes] = np.arange(len(self.cubes))
        lab_pos = pos[self.labels]
        labelled = np.bincount(lab_pos, mu, len(self.cubes)) if np.all(lab_pos >= 0) else None
        contained = bool(np.all(_contains_vertex(s, self.labels)))
        # children's masses subtracted from the parent must match the labelled mass
        stopped = np.zeros(len(self.cubes))
        has = self.owner >= 0
        np.add.at(stopped, pos[self.owner[has]], self.cube_mass[has])
        density = self.exceptional_mass / self.cube_mass
        return {
            "labelled": labelled is not None,
            "contained": contained,
            "disjoint_defect": float(np.abs(labelled - (self.cube_mass - stopped)).max()) if labelled is not None else float("inf"),
            "partition_defect": float(abs(self.exceptional_mass.sum() - s.mu.mass)),
            "min_density": float(density.min()),
            "half_density": bool(np.all(density >= 0.5 * (1 - DENSITY_TOL))),
        }

    def records(self) -> list[dict]:
        s = self.system
        return [
            {
                "cube": int(c),
                "level": int(s.tree.level[s.vertex(int(c))]),
                "is_sector": bool(s.is_sector(int(c))),
                "exceptional_mass": float(m),
                "parent": int(s.parent(int(c))) if s.parent(int(c)) is not None else -1,
            }
            for c, m in zip(self.cubes, self.exceptional_mass)
        ]


def sparse_family(system: DyadicSystem, f1: np.ndarray, f2: np.ndarray, factor: float = THRESHOLD_FACTOR) -> SparseFamily:
    """Iterated stopping time: a cube joins when one of its averages exceeds ``factor`` times its owner's.

    Starting from X, each member ``Q0`` stops at the maximal cubes strictly
    inside it where ``<f_i>_Q > factor <f_i>_{Q0}`` for ``i = 1`` or ``2``; those
    become members and the step repeats inside them.  Single points end the
    recursion.  ``E_Q`` is ``Q`` minus the cubes stopped inside it.
    """
    f1 = np.asarray(f1, dtype=float)
    f2 = np.asarray(f2, dtype=float)
    if np.any(f1 < 0) or np.any(f2 < 0):
        raise ValueError("sparse families need non-negative functions")
    if not np.any(f1) or not np.any(f2):
        raise ValueError("sparse families need functions with positive mass")
    parent, gens, _ = _cube_tables(system)
    a1 = system.cube_averages(f1)
    a2 = system.cube_averages(f2)
    nc = system.n_cubes
    member = np.zeros(nc, dtype=bool)
    owner = np.full(nc, -1, dtype=np.int64)
    depth = np.zeros(nc, dtype=np.int64)
    member[0] = True
    for ids in gens[1:]:
        par = parent[ids]
        own = np.where(member[par], par, owner[par])
        owner[ids] = own
        hit = (a1[ids] > factor * a1[own]) | (a2[ids] > factor * a2[own])
        member[ids] = hit
        depth[ids] = depth[own] + 1
    cubes = np.flatnonzero(member)
    cm = system.cube_measures()
    lab = _vertex_labels(system, member)
    pos = np.full(nc, -1, dtype=np.int64)
    pos[cubes] = np.arange(len(cubes))
    emass = np.bincount(pos[lab], system.mu.values, len(cubes))
    own = np.where(cubes == 0, -1, owner[cubes])
    return SparseFamily(system, cubes, own, lab, cm[cubes], emass, depth[cubes], {"factor": factor})


def sparse_forms(family: SparseFamily, f1: np.ndarray, f2: np.ndarray) -> tuple[float, float]:
    """``(A_S(f1, f2), E_S(f1, f2))``; the second form is not symmetric in its arguments."""
    s = family.system
    t = s.tree
    cubes = family.cubes
    a1 = s.cube_averages(f1)[cubes]
    a2 = s.cube_averages(f2)[cubes]
    cm = family.cube_mass
    A = float(np.sum(a1 * a2 * cm))
    sec = (cubes < t.n) & (cubes != 0)
    v = cubes[sec]
    if len(v) == 0:
        return A, 0.0
    p = t.parent[v]
    sib = np.bincount(p, a2[sec], t.n)
    qp = np.asarray(t.q)[t.level[p]]
    E = float(np.sum(a1[sec] * sib[p] / qp * cm[sec]))
    return A, E


@dataclass
class DominationReport:
    lhs: np.ndarray
    A: np.ndarray
    E: np.ndarray
    family_sizes: np.ndarray
    certified: bool
    min_density: float

    @property
    def ratios(self) -> np.ndarray:
        return self.lhs / (self.A + self.E)

    @property
    def max_ratio(self) -> float:
        return float(self.ratios.max(initial=0.0))


def domination_report(projector: BergmanProjector, f1: np.ndarray, f2: np.ndarray, certify: bool = True) -> DominationReport:
    """``|<P f1, f2>|`` against ``A_S + E_S`` for each column pair of ``f1, f2``."""
    s = projector.system
    f1 = np.asarray(f1, dtype=float)
    f2 = np.asarray(f2, dtype=float)
    if f1.ndim == 1:
        f1, f2 = f1[:, None], f2[:, None]
    Pf = projector.apply(f1)
    lhs = np.abs(np.einsum("it,it,i->t", Pf, f2, s.mu.values))
    A, E, sizes = [], [], []
    ok, dens = True, 1.0
    for i in range(f1.shape[1]):
        fam = sparse_family(s, f1[:, i], f2[:, i])
        a, e = sparse_forms(fam, f1[:, i], f2[:, i])
        A.append(a)
        E.append(e)
        sizes.append(len(fam))
        if certify:
            c = fam.certify()
            ok &= c["half_density"] and c["contained"] and c["disjoint_defect"] <= 1e-12 * s.mu.mass
            dens = min(dens, c["min_density"])
    return DominationReport(lhs, np.array(A), np.array(E), np.array(sizes), bool(ok), dens)
