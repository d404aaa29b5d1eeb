"""Radial harmonic profiles, the orthonormal basis of the Bergman space and the projector.

Every non-trivial piece of the projector is attached to a sector ``Q = S_v``
with ``v`` interior.  Writing ``k = |v| + 1`` for the level of the children of
``v`` and ``phi_k`` for the radial harmonic profile, the piece acts as::

    D_Q f(x) = q(v) phi_k(|x|) / N_k * (s_c(x) - mean_c s_c),
    s_c = sum_{y in S_c} phi_k(|y|) f(y) mu(y),

where ``c(x)`` is the child of ``v`` above ``x`` and ``N_k = ||phi_k 1_Q||^2``
depends only on ``k`` (radiality).  All operators below are evaluated from this
factored form; a dense matrix is only formed on request for small trees.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse

from .filtration import DyadicSystem
from .tree import MeasureVector, RadialTree, nu

DENSE_LIMIT = 2000


# profiles -------------------------------------------------------------------


def phi_table(tree: RadialTree) -> np.ndarray:
    """``table[k, m] = phi_k(m)`` for ``0 <= k, m <= depth`` (zero when ``m < k``)."""
    tab = tree._cache.get("phi")
    if tab is None:
        L = tree.depth
        tab = np.zeros((L + 1, L + 1))
        for k in range(L + 1):
            tab[k, k] = 1.0
            for m in range(k + 1, L + 1):
                tab[k, m] = tab[k, m - 1] + nu(tree, k, m - 1)
        tab.setflags(write=False)
        tree._cache["phi"] = tab
    return tab


def phi(tree: RadialTree, k: int, m: int) -> float:
    """Radial harmonic profile ``phi_k`` at level ``m``."""
    if not 0 <= k <= tree.depth or not 0 <= m <= tree.depth:
        raise IndexError(f"phi needs 0 <= k, m <= {tree.depth}")
    return float(phi_table(tree)[k, m])


def phi_increment_constant(tree: RadialTree) -> float:
    """Largest ``(phi_k(m+1) - phi_k(m)) / nu_k^m`` over the tree; exactly 1 by construction."""
    tab = phi_table(tree)
    best = 0.0
    for k in range(tree.depth + 1):
        for m in range(k, tree.depth):
            best = max(best, (tab[k, m + 1] - tab[k, m]) / nu(tree, k, m))
    return best


def profile_norms(tree: RadialTree, mu: MeasureVector) -> np.ndarray:
    """``N[k] = ||phi_k 1_Q||_2^2`` for a sector ``Q`` rooted at level ``k-1`` (``N[0]`` unused)."""
    out = mu._cache.get("profile_norms")
    if out is None:
        tab = phi_table(tree)
        L = tree.depth
        out = np.zeros(L + 1)
        for k in range(1, L + 1):
            out[k] = sum(tab[k, m] ** 2 * mu.level_values[m] * tree.block(k - 1, m) for m in range(k, L + 1))
        out.setflags(write=False)
        mu._cache["profile_norms"] = out
    return out


def child_vectors(q: int) -> np.ndarray:
    """Deterministic orthonormal basis of the zero-sum subspace of ``R^q`` (rows)."""
    return scipy.linalg.helmert(q, full=False)


def radial_extension(tree: RadialTree, mu: MeasureVector, v: int, e: np.ndarray) -> np.ndarray:
    """Harmonic extension of child data ``e`` below ``v``, normalized in ``L^2(mu)``."""
    tree._check(v)
    j = int(tree.level[v])
    if j == tree.depth:
        raise ValueError("a leaf has no children to extend from")
    e = np.asarray(e, dtype=float)
    if e.shape != (tree.q[j],):
        raise ValueError(f"child vector must have length {tree.q[j]}")
    k = j + 1
    tab = phi_table(tree)
    out = np.zeros(tree.n)
    for m in range(k, tree.depth + 1):
        lo, hi = tree.descendant_range(v, m)
        out[lo:hi] = tab[k, m] * np.repeat(e, tree.block(k, m))
    norm = np.sqrt(np.dot(e, e) * profile_norms(tree, mu)[k] / tree.q[j])
    return out / norm


# basis ----------------------------------------------------------------------


@dataclass(frozen=True)
class BasisAtom:
    vertex: int
    index: int
    child_vector: np.ndarray
    norm: float

    @property
    def cube(self) -> int:
        return self.vertex


class BergmanBasis:
    """The constant function and ``h_Q^l`` for every interior sector ``Q``.

    ``atoms[i]`` holds the cube's base vertex, the index ``l`` (1-based), the
    child vector and ``||E_Q(e)||_2``.
    """

    def __init__(self, tree: RadialTree, mu: MeasureVector):
        self.tree = tree
        self.mu = mu
        norms = profile_norms(tree, mu)
        atoms = []
        for j in range(tree.depth):
            vecs = child_vectors(tree.q[j])
            nrm = float(np.sqrt(norms[j + 1] / tree.q[j]))
            for v in range(*map(int, (tree.level_offsets[j], tree.level_offsets[j + 1]))):
                atoms.extend(BasisAtom(v, l + 1, vecs[l], nrm) for l in range(len(vecs)))
        self.atoms = atoms

    def __len__(self) -> int:
        return len(self.atoms) + 1

    @property
    def size(self) -> int:
        return len(self)

    def constant(self) -> np.ndarray:
        return np.full(self.tree.n, 1.0 / np.sqrt(self.mu.mass))

    def atom_values(self, i: int) -> np.ndarray:
        """Grid values of atom ``i``; index 0 is the normalized constant."""
        if i == 0:
            return self.constant()
        a = self.atoms[i - 1]
        return radial_extension(self.tree, self.mu, a.vertex, a.child_vector)

    def matrix(self) -> scipy.sparse.csc_matrix:
        """Sparse ``n x size`` matrix whose columns are the basis functions."""
        t = self.tree
        tab = phi_table(t)
        rows, cols, vals = [np.arange(t.n)], [np.zeros(t.n, dtype=np.int64)], [self.constant()]
        col = 1
        for j in range(t.depth):
            q, k = t.q[j], j + 1
            vecs = child_vectors(q)
            nv = int(t.level_sizes[j])
            nrm = np.sqrt(profile_norms(t, self.mu)[k] / q)
            for m in range(k, t.depth + 1):
                b = t.block(k, m)
                # vertex r of level m sits below cube r // (q b), child (r // b) % q
                local = np.arange(int(t.level_sizes[m]))
                cube, child = local // (q * b), (local // b) % q
                for l in range(q - 1):
                    rows.append(local + int(t.level_offsets[m]))
                    cols.append(col + cube * (q - 1) + l)
                    vals.append(tab[k, m] * vecs[l][child] / nrm)
            col += nv * (q - 1)
        H = scipy.sparse.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(t.n, col)
        )
        return H.tocsc()

    def gram(self) -> scipy.sparse.csc_matrix:
        H = self.matrix()
        return (H.T @ scipy.sparse.diags(self.mu.values) @ H).tocsc()

    def gram_errors(self) -> tuple[float, float]:
        """``(max |G_ij| off the diagonal, max |G_ii - 1|)``."""
        G = self.gram().tocoo()
        off = G.row != G.col
        off_max = float(np.abs(G.data[off]).max(initial=0.0))
        diag = G.diagonal()
        return off_max, float(np.abs(diag - 1.0).max())

    def to_records(self) -> list[dict]:
        return [
            {"cube": a.vertex, "ell": a.index, "child_vector": a.child_vector.tolist(), "norm": a.norm}
            for a in self.atoms
        ]


def build_basis(tree: RadialTree, mu: MeasureVector) -> BergmanBasis:
    return BergmanBasis(tree, mu)


def basis_size(tree: RadialTree) -> int:
    return 1 + sum(int(tree.level_sizes[j]) * (tree.q[j] - 1) for j in range(tree.depth))


# projector ------------------------------------------------------------------


class BergmanProjector:
    """Matrix-free Bergman projector and its truncations.

    Cube masks are boolean arrays over vertices: entry ``v`` switches on the
    piece ``D_{S_v}``.  Leaves carry no piece; singletons never do.
    """

    def __init__(self, tree: RadialTree, mu: MeasureVector):
        self.tree = tree
        self.mu = mu
        self.system = DyadicSystem(tree, mu)
        self._phi = phi_table(tree)
        self._norms = profile_norms(tree, mu)

    # core -------------------------------------------------------------------

    def _pieces(self, f: np.ndarray, active: np.ndarray | None, constant: bool) -> np.ndarray:
        t = self.tree
        f = np.asarray(f, dtype=float)
        if f.shape[0] != t.n:
            raise ValueError(f"expected {t.n} values, got {f.shape[0]}")
        tail = f.shape[1:]
        shape = (-1,) + (1,) * len(tail)
        fm = f * self.mu.values.reshape(shape)
        out = np.zeros_like(f)
        if constant:
            out += fm.sum(axis=0) / self.mu.mass
        lv = t.level
        for j in range(t.depth):
            k, q = j + 1, t.q[j]
            if active is not None and not active[t.level_slice(j)].any():
                continue
            start = int(t.level_offsets[k])
            pk = self._phi[k, lv[start:]].reshape(shape)
            g = np.zeros_like(f)
            g[start:] = pk * fm[start:]
            s = t.sector_sums(g)[t.level_slice(k)]
            s = s.reshape((int(t.level_sizes[j]), q) + tail)
            d = s - s.mean(axis=1, keepdims=True)
            if active is not None:
                d = d * active[t.level_slice(j)].reshape((-1, 1) + (1,) * len(tail))
            d = d.reshape((int(t.level_sizes[k]),) + tail)
            out[start:] += (q / self._norms[k]) * pk * d[t.ancestors[start:, k] - start]
        return out

    def apply(self, f: np.ndarray) -> np.ndarray:
        """``P f``; trailing batch axes are allowed."""
        return self._pieces(f, None, True)

    __call__ = apply

    def apply_mask(self, f: np.ndarray, active: np.ndarray, constant: bool = False) -> np.ndarray:
        active = np.asarray(active, dtype=bool)
        if active.shape != (self.tree.n,):
            raise ValueError("cube mask must have one entry per vertex")
        return self._pieces(f, active, constant)

    def diff(self, cube: int, f: np.ndarray) -> np.ndarray:
        """``D_Q f`` for a cube id, touching only the vertices of ``Q``."""
        sysm, t = self.system, self.tree
        f = np.asarray(f, dtype=float)
        out = np.zeros_like(f)
        if sysm.is_point(cube):
            return out
        v = sysm.vertex(cube)
        j = int(t.level[v])
        k, q = j + 1, t.q[j]
        mu = self.mu.values
        tail = f.shape[1:]
        shape = (-1,) + (1,) * len(tail)
        s = np.zeros((q,) + tail)
        spans = []
        for m in range(k, t.depth + 1):
            lo, hi = t.descendant_range(v, m)
            b = t.block(k, m)
            block = (self._phi[k, m] * f[lo:hi] * mu[lo:hi].reshape(shape)).reshape((q, b) + tail)
            s += block.sum(axis=1)
            spans.append((m, lo, hi, b))
        d = (q / self._norms[k]) * (s - s.mean(axis=0, keepdims=True))
        for m, lo, hi, b in spans:
            out[lo:hi] = self._phi[k, m] * np.repeat(d, b, axis=0)
        return out

    # masks ------------------------------------------------------------------

    def mask_all(self) -> np.ndarray:
        m = np.zeros(self.tree.n, dtype=bool)
        m[: self.tree.interior_count] = True
        return m

    def mask_inside(self, cube: int) -> np.ndarray:
        """Pieces ``D_T`` with ``T`` contained in ``cube``."""
        m = np.zeros(self.tree.n, dtype=bool)
        if not self.system.is_sector(cube):
            return m
        m[self.system.mask(cube)] = True
        m[self.tree.interior_count :] = False
        return m

    def mask_outside(self, family, q0: int = 0) -> np.ndarray:
        """Pieces ``D_T`` with ``T`` inside ``q0`` but inside no member of ``family``."""
        family = [int(c) for c in family]
        sysm = self.system
        check_disjoint(sysm, family)
        for c in family:
            if not sysm.contains(q0, c):
                raise ValueError(f"cube {c} is not inside {q0}")
        m = self.mask_inside(q0)
        for c in family:
            m &= ~self.mask_inside(c)
        return m

    # truncations --------------------------------------------------------------

    def project(self, f: np.ndarray, mode: str = "full", cube: int | None = None, family=(), q0: int = 0) -> np.ndarray:
        """``mode`` is ``full``, ``localized`` (needs ``cube``) or ``outside`` (``family``, ``q0``)."""
        if mode == "full":
            return self.apply(f)
        if mode == "localized":
            if cube is None:
                raise ValueError("localized projection needs a cube")
            return self.apply_mask(f, self.mask_inside(cube))
        if mode == "outside":
            return self.apply_mask(f, self.mask_outside(family, q0), constant=(q0 == 0))
        raise ValueError(f"unknown projection mode {mode!r}")

    def localized(self, cube: int, f: np.ndarray) -> np.ndarray:
        return self.project(f, "localized", cube=cube)

    def outside(self, family, q0: int, f: np.ndarray) -> np.ndarray:
        return self.project(f, "outside", family=family, q0=q0)

    # kernels ----------------------------------------------------------------

    def kernel_column(self, y: int, active: np.ndarray | None = None, constant: bool = True) -> np.ndarray:
        """``K(., y)`` over all vertices, summed over the active pieces."""
        t = self.tree
        out = np.full(t.n, 1.0 / self.mu.mass if constant else 0.0)
        ly = int(t.level[y])
        for j in range(ly):
            v = int(t.ancestors[y, j])
            if active is not None and not active[v]:
                continue
            k, q = j + 1, t.q[j]
            wy = int(t.ancestors[y, k])
            coef = q * self._phi[k, ly] / self._norms[k]
            for m in range(k, t.depth + 1):
                lo, hi = t.descendant_range(v, m)
                col = np.full(hi - lo, -1.0 / q)
                wlo, whi = t.descendant_range(wy, m)
                col[wlo - lo : whi - lo] += 1.0
                out[lo:hi] += coef * self._phi[k, m] * col
        return out

    def kernel(self, x: int, y: int, scope: str = "full", cube: int | None = None, family=(), q0: int = 0) -> float:
        """Kernel value for scope ``cube`` (single ``D_Q``), ``truncated`` or ``full``."""
        t = self.tree
        t._check(x)
        t._check(y)
        if scope == "cube":
            return self._kernel_piece(x, y, cube)
        if scope == "truncated":
            active = self.mask_outside(family, q0)
            return float(self.kernel_column(y, active, constant=False)[x])
        if scope == "full":
            c = t.confluent(x, y)
            total = 1.0 / self.mu.mass
            for v in t.ancestors[c, : int(t.level[c]) + 1]:
                total += self._kernel_piece(x, y, int(v))
            return total
        raise ValueError(f"unknown kernel scope {scope!r}")

    def _kernel_piece(self, x: int, y: int, cube: int | None) -> float:
        t, sysm = self.tree, self.system
        if cube is None or sysm.is_point(cube):
            return 0.0
        v = sysm.vertex(cube)
        j = int(t.level[v])
        lx, ly = int(t.level[x]), int(t.level[y])
        if lx <= j or ly <= j or t.ancestors[x, j] != v or t.ancestors[y, j] != v:
            return 0.0
        k, q = j + 1, t.q[j]
        kq = (1.0 if t.ancestors[x, k] == t.ancestors[y, k] else 0.0) - 1.0 / q
        return float(q * self._phi[k, lx] * self._phi[k, ly] / self._norms[k] * kq)

    def kernel_matrix(self, active: np.ndarray | None = None, constant: bool = True) -> np.ndarray:
        """Dense kernel (``n <= DENSE_LIMIT``)."""
        if self.tree.n > DENSE_LIMIT:
            raise ValueError(f"dense kernel limited to {DENSE_LIMIT} vertices")
        return np.stack([self.kernel_column(y, active, constant) for y in range(self.tree.n)], axis=1)


def dense_projector(basis: BergmanBasis) -> np.ndarray:
    """Oracle ``P = sum_i h_i h_i^T diag(mu)`` built from the explicit atoms."""
    if basis.tree.n > DENSE_LIMIT:
        raise ValueError(f"dense projector limited to {DENSE_LIMIT} vertices")
    H = basis.matrix().toarray()
    return H @ (H.T * basis.mu.values)


def apply_diff(projector: BergmanProjector, cube: int, f: np.ndarray) -> np.ndarray:
    return projector.diff(cube, f)


def check_disjoint(system: DyadicSystem, family) -> None:
    family = list(family)
    for i, a in enumerate(family):
        for b in family[i + 1 :]:
            if system.contains(a, b) or system.contains(b, a):
                raise ValueError(f"cubes {a} and {b} overlap")


def laplacian(tree: RadialTree, f: np.ndarray) -> np.ndarray:
    """Combinatorial Laplacian at the interior vertices (indices ``0..interior_count-1``).

    The root averages over its children only; any other vertex averages over
    its ``q + 1`` neighbours.
    """
    f = np.asarray(f, dtype=float)
    out = np.empty((tree.interior_count,) + f.shape[1:])
    for j in range(tree.depth):
        sl = tree.level_slice(j)
        q = tree.q[j]
        kids = f[tree.level_slice(j + 1)].reshape((-1, q) + f.shape[1:]).sum(axis=1)
        if j == 0:
            out[sl] = f[sl] - kids / q
        else:
            out[sl] = f[sl] - (kids + f[tree.parent[sl]]) / (q + 1)
    return out
