"""Weight characteristics and weighted norm estimates for the Bergman projector."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bergman import BergmanProjector, dense_projector, build_basis
from .cz import SparseFamily
from .filtration import DyadicSystem, make_simple_block
from .tree import RadialTree

DENSE_ORACLE_LIMIT = 500


@dataclass(frozen=True, eq=False)
class Weight:
    values: np.ndarray
    label: str = "weight"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(v)) or np.any(v <= 0):
            raise ValueError("a weight must be finite and strictly positive")
        object.__setattr__(self, "values", v)

    def dual(self, p: float) -> "Weight":
        """``sigma = w^(-p'/p) = w^(-1/(p-1))``."""
        return Weight(self.values ** (-1.0 / (p - 1.0)), f"dual({self.label})")

    def scaled(self, t: float) -> "Weight":
        return Weight(self.values * t, self.label)


def radial_geometric(tree: RadialTree, beta: float) -> Weight:
    return Weight(float(beta) ** tree.level.astype(float), f"radial_geometric({beta:g})")


def sector_bump(tree: RadialTree, level: int, child: int, factor: float) -> Weight:
    """``factor`` on the sector of the ``child``-th vertex of ``level``, 1 elsewhere."""
    if not 0 <= level <= tree.depth or not 0 <= child < int(tree.level_sizes[level]):
        raise ValueError("sector bump outside the tree")
    v = int(tree.level_offsets[level]) + child
    w = np.where(tree.in_sector(v, np.arange(tree.n)), float(factor), 1.0)
    return Weight(w, f"sector_bump({level},{child},{factor:g})")


def random_weight(tree: RadialTree, seed: int, log_range: float = 3.0) -> Weight:
    """``10^U`` with ``U`` uniform on ``[-log_range, log_range]``."""
    rng = np.random.default_rng(seed)
    return Weight(10.0 ** rng.uniform(-log_range, log_range, tree.n), f"random({seed},{log_range:g})")


def weight_from_config(tree: RadialTree, cfg: dict) -> Weight:
    kind = cfg.get("kind")
    if kind == "radial_geometric":
        return radial_geometric(tree, cfg["beta"])
    if kind == "sector_bump":
        return sector_bump(tree, int(cfg["level"]), int(cfg["child"]), float(cfg["factor"]))
    if kind == "random":
        return random_weight(tree, int(cfg["seed"]), float(cfg.get("log_range", 3.0)))
    if kind == "constant":
        return Weight(np.full(tree.n, float(cfg.get("value", 1.0))), "constant")
    raise ValueError(f"unknown weight kind {kind!r}")


def _check_p(p: float):
    if not 1.0 < p < np.inf:
        raise ValueError(f"p must lie in (1, inf), got {p}")


def _bp_terms(system: DyadicSystem, w: Weight, p: float) -> np.ndarray:
    aw = system.cube_averages(w.values)
    asig = system.cube_averages(w.dual(p).values)
    return aw * asig ** (p - 1.0)


def bp_characteristic(system: DyadicSystem, w: Weight, p: float) -> float:
    """``sup_Q <w>_Q <sigma>_Q^(p-1)`` over every cube, singletons included."""
    _check_p(p)
    return float(_bp_terms(system, w, p).max())


def bp_characteristic_nonroot(system: DyadicSystem, w: Weight, p: float) -> float:
    """The same supremum with X left out."""
    _check_p(p)
    return float(_bp_terms(system, w, p)[1:].max())


def tilde_bp_characteristic(system: DyadicSystem, w: Weight, p: float) -> float:
    """``sup <w>_Q <sigma>_R^(p-1)`` over pairs of cubes with a common parent.

    The children of a sector ``S_v`` are its child sectors and ``{v}``;
    X has no parent and is not part of any pair.
    """
    _check_p(p)
    t = system.tree
    sig = w.dual(p).values
    sw = system.sector_averages(w.values)
    ss = system.sector_averages(sig)
    best = 0.0
    for j in range(t.depth):
        q = t.q[j]
        sl = t.level_slice(j)
        kids_w = sw[t.level_slice(j + 1)].reshape(-1, q).max(axis=1)
        kids_s = ss[t.level_slice(j + 1)].reshape(-1, q).max(axis=1)
        mw = np.maximum(kids_w, w.values[sl])
        ms = np.maximum(kids_s, sig[sl])
        best = max(best, float((mw * ms ** (p - 1.0)).max()))
    return best


# operator norms ----------------------------------------------------------------


@dataclass
class NormEstimate:
    value: float
    iterations: int
    converged: bool
    residual: float
    strategy: str


def _wnorm(f: np.ndarray, wm: np.ndarray, p: float) -> np.ndarray:
    return (np.abs(f) ** p * wm.reshape((-1,) + (1,) * (f.ndim - 1))).sum(axis=0) ** (1.0 / p)


def power_iteration(
    projector: BergmanProjector,
    w: Weight,
    tol: float = 1e-8,
    max_iter: int = 5000,
    seed: int = 0,
    block: int = 8,
    min_iter: int = 5,
) -> NormEstimate:
    """Largest singular value of ``T g = w^(1/2) P (w^(-1/2) g)`` on ``L^2(mu)``.

    Block power iteration on ``T*T`` with a Rayleigh-Ritz step, stopped when the
    leading eigen-residual and the eigenvalue update are both below ``tol``
    relative to the eigenvalue.  The returned
    value is ``||T g|| / ||g||`` for the final leading vector, hence a lower
    bound whether or not the iteration converged.
    """
    mu = projector.mu.values
    sw = np.sqrt(w.values)
    sq = np.sqrt(mu)
    n = len(mu)
    rng = np.random.default_rng(seed)
    # weight-aligned starts keep mass near the root, where the top vector lives
    starts = [np.ones(n), 1.0 / sw, sw, 1.0 / w.values, w.values]
    G = np.column_stack(starts + list(rng.standard_normal((max(block - len(starts), 1), n))))
    G = G[:, : min(max(block, 1), n)]

    def tstar_t(X):
        return projector.apply(w.values[:, None] * projector.apply(X / sw[:, None])) / sw[:, None]

    def orth(X):
        # orthonormal in L^2(mu)
        qm, _ = np.linalg.qr(sq[:, None] * X)
        return qm / sq[:, None]

    G = orth(G)
    lam = prev = 0.0
    res, it = np.inf, 0
    for it in range(1, max_iter + 1):
        H = tstar_t(G)
        small = G.T @ (mu[:, None] * H)
        vals, vecs = np.linalg.eigh((small + small.T) / 2)
        order = np.argsort(vals)[::-1]
        vals, vecs = vals[order], vecs[:, order]
        G, H = G @ vecs, H @ vecs
        prev, lam = lam, float(vals[0])
        if lam <= 0:
            return NormEstimate(0.0, it, True, 0.0, "power_iteration")
        r = H[:, 0] - lam * G[:, 0]
        res = float(np.sqrt(np.dot(r * r, mu)))
        if it >= min_iter and res <= tol * lam and abs(lam - prev) <= tol * lam:
            break
        G = orth(H)
    g = G[:, 0]
    tg = sw * projector.apply(g / sw)
    value = float(np.sqrt(np.dot(tg * tg, mu) / np.dot(g * g, mu)))
    return NormEstimate(value, it, bool(res <= tol * lam and abs(lam - prev) <= tol * lam), res / lam, "power_iteration")


def dense_weighted_norm(projector: BergmanProjector, w: Weight) -> float:
    """Spectral norm of ``diag(sqrt(mu w)) P diag(1/sqrt(mu w))`` (small trees only)."""
    if projector.tree.n > DENSE_ORACLE_LIMIT:
        raise ValueError(f"dense oracle limited to {DENSE_ORACLE_LIMIT} vertices")
    P = dense_projector(build_basis(projector.tree, projector.mu))
    s = np.sqrt(projector.mu.values * w.values)
    return float(np.linalg.norm(s[:, None] * P / s[None, :], 2))


def structured_candidates(projector: BergmanProjector, count: int = 64, seed: int = 0) -> np.ndarray:
    """Cube indicators, point masses, simple blocks and seeded random functions (columns)."""
    s = projector.system
    t = projector.tree
    rng = np.random.default_rng(seed)
    cols = [np.ones(t.n)]
    for j in range(t.depth + 1):
        v = int(t.level_offsets[j])
        cols.append(s.mask(v).astype(float))
        e = np.zeros(t.n)
        e[v] = 1.0 / projector.mu.values[v]
        cols.append(e)
        if j >= 1:
            a = s.mask(v) / s.measure(v)
            cols.append(make_simple_block(s, v, a).values)
        if j < t.depth:
            a = np.zeros(t.n)
            a[v] = 1.0 / projector.mu.values[v]
            cols.append(make_simple_block(s, s.singleton(v), a).values)
    cols.extend(rng.standard_normal((count, t.n)))
    cols.extend(np.abs(rng.standard_normal((count, t.n))) * (rng.random((count, t.n)) < 0.1))
    return np.stack(cols, axis=1)


def random_search(projector: BergmanProjector, w: Weight, p: float, count: int = 64, seed: int = 0) -> NormEstimate:
    """``max ||P f||_{L^p(w)} / ||f||_{L^p(w)}`` over the structured candidates."""
    _check_p(p)
    F = structured_candidates(projector, count, seed)
    wm = w.values * projector.mu.values
    num = _wnorm(projector.apply(F), wm, p)
    den = _wnorm(F, wm, p)
    ok = den > 0
    return NormEstimate(float((num[ok] / den[ok]).max()), F.shape[1], True, 0.0, "random_search")


def weighted_opnorm_lowerbound(projector: BergmanProjector, w: Weight, p: float = 2.0, strategy: str | None = None, **kw) -> NormEstimate:
    strategy = strategy or ("power_iteration" if p == 2 else "random_search")
    if strategy == "power_iteration":
        if p != 2:
            raise ValueError("power iteration needs p = 2")
        return power_iteration(projector, w, **kw)
    if strategy == "random_search":
        return random_search(projector, w, p, **kw)
    raise ValueError(f"unknown strategy {strategy!r}")


@dataclass
class WeightedBoundCheck:
    norm_lb: float
    bp: float
    tilde_bp: float
    bound: float
    converged: bool

    @property
    def ratio(self) -> float:
        return self.norm_lb / self.bound


def weighted_bound(bp: float, tilde: float, p: float) -> float:
    """``[w]_tilde^(1/p) [w]_B^(p'/p^2 + 1/p')``."""
    pp = p / (p - 1.0)
    return tilde ** (1.0 / p) * bp ** (pp / p**2 + 1.0 / pp)


def weighted_bound_check(projector: BergmanProjector, w: Weight, p: float = 2.0, **kw) -> WeightedBoundCheck:
    s = projector.system
    est = weighted_opnorm_lowerbound(projector, w, p, **kw)
    bp = bp_characteristic(s, w, p)
    tb = tilde_bp_characteristic(s, w, p)
    return WeightedBoundCheck(est.value, bp, tb, weighted_bound(bp, tb, p), est.converged)


def sparse_weight_constant(family: SparseFamily, w: Weight, p: float) -> float:
    """``max_Q w(Q) / ([w]_{B_p} w(E_Q))`` over a sparse family; at most ``2^p``."""
    s = family.system
    wm = w.values * s.mu.values
    pos = np.full(s.n_cubes, -1, dtype=np.int64)
    pos[family.cubes] = np.arange(len(family.cubes))
    w_e = np.bincount(pos[family.labels], wm, len(family.cubes))
    w_q = np.concatenate([s.tree.sector_sums(wm), wm[: s.tree.interior_count]])[family.cubes]
    return float((w_q / w_e).max() / bp_characteristic(s, w, p))
