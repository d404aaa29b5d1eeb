"""Per-grid-point experiment suites.

Each runner takes a :class:`GridPoint`, the suite parameters and the tolerance
table, and returns a :class:`SuiteResult`: CSV rows (dicts with the columns in
``COLUMNS[suite]``), hard failures and free-form metadata.  Runners are pure
functions of their arguments so grid points can be evaluated in any order or
in separate processes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bergman import BergmanProjector, build_basis, dense_projector, laplacian
from .cz import cz_decompose, domination_report, sparse_family
from .endpoints import bmo_to_bmo, h1_to_h1, h1_to_l1, linf_to_bmo, weak11_ratio
from .filtration import DyadicSystem, make_simple_block
from .kernels import (
    bergman_kernel,
    confluent_kernel,
    geometric_mean_kernel,
    hormander_constant,
    size_constant,
    verify_diff_bounds,
    verify_truncated_oscillation,
    verify_piece_oscillation,
    verify_piece_size,
)
from .samplers import cz_case, random_nonnegative, rng_for, structured_nonnegative
from .tree import BranchingSpec, build_measure, build_tree
from .weights import (
    bp_characteristic,
    bp_characteristic_nonroot,
    power_iteration,
    random_search,
    weighted_bound,
    tilde_bp_characteristic,
    sparse_weight_constant,
    weight_from_config,
)

DENSE_CHECK_LIMIT = 2000

KEYS = ("spec", "alpha", "depth")
COLUMNS = {
    "basis": KEYS + ("n", "basis_size", "gram_max_offdiag", "gram_max_diag_dev", "p1_defect", "idempotence", "selfadjoint", "harmonic", "dense_defect"),
    "kernels": KEYS + ("kernel", "case", "value"),
    "cz": KEYS + ("trials", "max_cubes", "mean_defect", "localization", "reconstruction", "overlap", "uncovered", "good_l1", "bad_l1", "good_l2", "good_bmo"),
    "sparse": KEYS + ("trials", "structured_pairs", "max_family", "min_density", "certified", "min_ratio", "random_max", "structured_max", "max_ratio"),
    "weights": KEYS + ("weight", "p", "bp", "bp_nonroot", "tilde_bp", "duality_defect", "norm_lb", "bound", "ratio", "converged", "iterations", "strategy", "sparse_constant"),
    "endpoints": KEYS + ("estimator", "candidate_id", "ratio"),
}
# long-format layout for plot data: series columns and, for suites already in
# long form, the metric and value columns
LAYOUT = {
    "basis": {"series": (), "metric": None, "value": None},
    "kernels": {"series": ("kernel",), "metric": "case", "value": "value"},
    "cz": {"series": (), "metric": None, "value": None},
    "sparse": {"series": (), "metric": None, "value": None},
    "weights": {"series": ("weight", "p"), "metric": None, "value": None},
    "endpoints": {"series": ("estimator",), "metric": "candidate_id", "value": "ratio"},
}
MAX_LABEL = "__max__"


@dataclass(frozen=True)
class GridPoint:
    index: tuple[int, int]
    spec: dict
    alpha: float
    depth: int
    normalized: bool = True
    size_cap: int = 100_000

    @property
    def branching(self) -> BranchingSpec:
        return BranchingSpec.from_config(self.spec)

    def build(self):
        tree = build_tree(self.branching, self.depth, self.size_cap)
        return tree, build_measure(tree, self.alpha, self.normalized)

    def keys(self) -> dict:
        return {"spec": self.branching.label, "alpha": self.alpha, "depth": self.depth}

    def rng(self, seed: int, *salt: int) -> np.random.Generator:
        return rng_for(seed, *self.index, self.depth, *salt)


@dataclass
class SuiteResult:
    rows: list[dict] = field(default_factory=list)
    failures: list[str] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def fail_if(self, condition: bool, point: GridPoint, message: str):
        if condition:
            k = point.keys()
            self.failures.append(f"{k['spec']} alpha={k['alpha']:g} depth={k['depth']}: {message}")


def _maxabs(a) -> float:
    return float(np.max(np.abs(a), initial=0.0))


# basis ---------------------------------------------------------------------------


def run_basis(point: GridPoint, params: dict, tol: dict) -> SuiteResult:
    tree, mu = point.build()
    basis = build_basis(tree, mu)
    off, diag = basis.gram_errors()
    P = BergmanProjector(tree, mu)
    m = mu.values
    p1 = _maxabs(P.apply(np.ones(tree.n)) - 1.0)

    rng = point.rng(0, 1)
    F = rng.standard_normal((tree.n, params["pairs"]))
    G = rng.standard_normal((tree.n, params["pairs"]))
    PF, PG = P.apply(F), P.apply(G)
    nf = np.sqrt(np.einsum("it,it,i->t", F, F, m))
    ng = np.sqrt(np.einsum("it,it,i->t", G, G, m))
    idem = _maxabs(P.apply(PF) - PF) / max(_maxabs(F), 1.0)
    sym = _maxabs((np.einsum("it,it,i->t", PF, G, m) - np.einsum("it,it,i->t", F, PG, m)) / (nf * ng))
    harm = _maxabs(laplacian(tree, PF)) / _maxabs(F)
    dense = ""
    if tree.n <= DENSE_CHECK_LIMIT:
        dense = _maxabs(dense_projector(basis) @ F - PF) / max(_maxabs(PF), 1.0)

    res = SuiteResult()
    res.rows.append(
        {
            **point.keys(),
            "n": tree.n,
            "basis_size": basis.size,
            "gram_max_offdiag": off,
            "gram_max_diag_dev": diag,
            "p1_defect": p1,
            "idempotence": idem,
            "selfadjoint": sym,
            "harmonic": harm,
            "dense_defect": dense,
        }
    )
    res.fail_if(off > tol["gram"] or diag > tol["gram"], point, f"Gram identity off by {max(off, diag):.3g}")
    res.fail_if(p1 > tol["constant"], point, f"P1 differs from 1 by {p1:.3g}")
    worst = max(idem, sym, harm, dense if dense != "" else 0.0)
    res.fail_if(worst > tol["identity"], point, f"projector identity defect {worst:.3g}")
    return res


# kernels -------------------------------------------------------------------------


def _bound_rows(P: BergmanProjector) -> dict:
    """Largest observed ratio per case for the pieces of the projector."""
    s, tree = P.system, P.tree
    best: dict[str, float] = {}

    def take(rep):
        for r in rep.rows:
            best[r["case"]] = max(best.get(r["case"], 0.0), r["ratio"])

    for j in range(1, tree.depth):
        v = int(tree.level_offsets[j])
        for ell in range(1, j + 1):
            take(verify_piece_oscillation(P, v, ell))
        take(verify_piece_size(P, v))
        take(verify_truncated_oscillation(P, v))
    for j in range(tree.depth):
        v = int(tree.level_offsets[j])
        take(verify_truncated_oscillation(P, s.singleton(v)))
    for j in range(tree.depth + 1):
        v = int(tree.level_offsets[j])
        cubes = ([v] if j >= 1 else []) + ([s.singleton(v)] if j < tree.depth else [])
        for c in cubes:
            a = s.mask(c) / s.measure(c)
            block = make_simple_block(s, c, a)
            lv = int(tree.level[s.closure(c)])
            for ell in range(1, lv + 1):
                take(verify_diff_bounds(P, block, ell))
    return best


def run_kernels(point: GridPoint, params: dict, tol: dict) -> SuiteResult:
    tree, mu = point.build()
    P = BergmanProjector(tree, mu)
    mode = params["mode"]
    kernels = [("bergman", bergman_kernel(P))]
    if params["controls"]:
        kernels += [("confluent_control", confluent_kernel(tree, mu)), ("geometric_control", geometric_mean_kernel(tree, mu))]
    res = SuiteResult()
    for name, K in kernels:
        res.rows.append({**point.keys(), "kernel": name, "case": "hormander", "value": hormander_constant(K, mode)})
        res.rows.append({**point.keys(), "kernel": name, "case": "size", "value": size_constant(K, mode)})
    for case, ratio in sorted(_bound_rows(P).items()):
        res.rows.append({**point.keys(), "kernel": "bergman", "case": case, "value": ratio})
    return res


# Calderon-Zygmund ----------------------------------------------------------------


def run_cz(point: GridPoint, params: dict, tol: dict) -> SuiteResult:
    tree, mu = point.build()
    s = DyadicSystem(tree, mu)
    agg = dict.fromkeys(("mean_defect", "localization", "reconstruction", "good_l1", "bad_l1", "good_l2", "good_bmo"), 0.0)
    overlap = uncovered = max_cubes = 0
    for trial in range(params["trials"]):
        f, height, region = cz_case(s, point.rng(params["seed"], trial))
        dec = cz_decompose(s, f, height, region)
        ch = dec.check()
        scale = _maxabs(f)
        agg["mean_defect"] = max(agg["mean_defect"], ch["mean_defect"] / float(np.dot(f, mu.values)))
        agg["localization"] = max(agg["localization"], ch["localization"] / scale)
        agg["reconstruction"] = max(agg["reconstruction"], ch["reconstruction"] / scale)
        overlap = max(overlap, ch["overlap"])
        uncovered = max(uncovered, ch["uncovered"])
        max_cubes = max(max_cubes, len(dec.cubes))
        for k, v in dec.constants().items():
            agg[k] = max(agg[k], v)
    res = SuiteResult()
    res.rows.append({**point.keys(), "trials": params["trials"], "max_cubes": max_cubes, **agg, "overlap": overlap, "uncovered": uncovered})
    t = tol["cz"]
    res.fail_if(agg["reconstruction"] > t, point, f"reconstruction defect {agg['reconstruction']:.3g}")
    res.fail_if(agg["mean_defect"] > t, point, f"mean-zero defect {agg['mean_defect']:.3g}")
    res.fail_if(agg["localization"] > t, point, f"localization defect {agg['localization']:.3g}")
    res.fail_if(overlap > 0, point, "stopping cubes overlap")
    res.fail_if(uncovered > 0, point, f"{uncovered} points above the height are not covered")
    return res


# sparse domination ---------------------------------------------------------------


SPARSE_CHUNK = 100


def run_sparse(point: GridPoint, params: dict, tol: dict) -> SuiteResult:
    tree, mu = point.build()
    P = BergmanProjector(tree, mu)
    rng = point.rng(params["seed"])
    trials = params["trials"]
    S, _ = structured_nonnegative(P.system)
    si, sj = (a.ravel() for a in np.meshgrid(np.arange(S.shape[1]), np.arange(S.shape[1]), indexing="ij"))

    # fixed chunk sizes keep memory flat and the random stream independent of the machine
    reports = []
    for start in range(0, trials, SPARSE_CHUNK):
        m = min(SPARSE_CHUNK, trials - start)
        F1 = random_nonnegative(tree, rng, m)
        F2 = random_nonnegative(tree, rng, m)
        reports.append(domination_report(P, F1, F2))
    # every ordered pair of the structured family rides along
    for start in range(0, len(si), SPARSE_CHUNK):
        sel = slice(start, start + SPARSE_CHUNK)
        reports.append(domination_report(P, S[:, si[sel]], S[:, sj[sel]]))
    ratios = np.concatenate([r.ratios for r in reports])
    certified = all(r.certified for r in reports)
    min_density = min(r.min_density for r in reports)
    res = SuiteResult()
    res.rows.append(
        {
            **point.keys(),
            "trials": trials,
            "structured_pairs": len(si),
            "max_family": max(int(r.family_sizes.max()) for r in reports),
            "min_density": min_density,
            "certified": int(certified),
            "min_ratio": float(ratios.min()),
            "random_max": float(ratios[:trials].max()),
            "structured_max": float(ratios[trials:].max()),
            "max_ratio": float(ratios.max()),
        }
    )
    res.fail_if(not certified, point, "sparse family failed containment, disjointness or half density")
    res.fail_if(min_density < 0.5 * (1 - tol["sparse"]), point, f"density {min_density:.6g} below 1/2")
    return res


# weights -------------------------------------------------------------------------


def run_weights(point: GridPoint, params: dict, tol: dict) -> SuiteResult:
    tree, mu = point.build()
    P = BergmanProjector(tree, mu)
    s = P.system
    seed = params["seed"]
    rng = point.rng(seed)
    fam = sparse_family(s, *random_nonnegative(tree, rng, 2).T)
    res = SuiteResult()
    for cfg in params["weights"]:
        w = weight_from_config(tree, cfg)
        for p in params["p"]:
            bp = bp_characteristic(s, w, p)
            pp = p / (p - 1.0)
            dual = bp_characteristic(s, w.dual(p), pp)
            duality = abs(dual - bp ** (pp / p)) / bp ** (pp / p)
            tb = tilde_bp_characteristic(s, w, p)
            if p == 2.0:
                est = power_iteration(P, w, tol=params["tol"], max_iter=params["max_iter"], seed=seed)
            else:
                est = random_search(P, w, p, count=params["candidates"], seed=seed)
            bound = weighted_bound(bp, tb, p)
            res.rows.append(
                {
                    **point.keys(),
                    "weight": w.label,
                    "p": p,
                    "bp": bp,
                    "bp_nonroot": bp_characteristic_nonroot(s, w, p),
                    "tilde_bp": tb,
                    "duality_defect": duality,
                    "norm_lb": est.value,
                    "bound": bound,
                    "ratio": est.value / bound,
                    "converged": int(est.converged),
                    "iterations": est.iterations,
                    "strategy": est.strategy,
                    "sparse_constant": sparse_weight_constant(fam, w, p),
                }
            )
            res.fail_if(duality > tol["duality"], point, f"duality identity off by {duality:.3g} for {w.label}, p={p:g}")
            if not est.converged:
                res.meta.setdefault("not_converged", []).append(f"{point.keys()['spec']} alpha={point.alpha:g} depth={point.depth} {w.label}")
    return res


# endpoints -----------------------------------------------------------------------


def run_endpoints(point: GridPoint, params: dict, tol: dict) -> SuiteResult:
    tree, mu = point.build()
    P = BergmanProjector(tree, mu)
    seed, count, rpc = params["seed"], params["count"], params["random_per_cube"]
    reports = [
        weak11_ratio(P, seed=seed, count=count),
        h1_to_l1(P, seed=seed, random_per_cube=rpc),
        linf_to_bmo(P, seed=seed, count=count),
        h1_to_h1(P, seed=seed, random_per_cube=rpc),
        bmo_to_bmo(P, seed=seed, count=count),
    ]
    res = SuiteResult()
    for rep in reports:
        for label, ratio in zip(rep.candidates, rep.ratios):
            res.rows.append({**point.keys(), "estimator": rep.estimator, "candidate_id": label, "ratio": ratio})
        res.rows.append({**point.keys(), "estimator": rep.estimator, "candidate_id": MAX_LABEL, "ratio": rep.max_ratio})
    if params["kernel_constants"]:
        K = bergman_kernel(P)
        res.rows.append({**point.keys(), "estimator": "kernel_hormander", "candidate_id": MAX_LABEL, "ratio": hormander_constant(K)})
        res.rows.append({**point.keys(), "estimator": "kernel_size", "candidate_id": MAX_LABEL, "ratio": size_constant(K)})
    split = reports[3].meta
    res.meta["h1_split_defect"] = split["split_defect"]
    res.meta["h1_split_ratio"] = split["split_ratio"]
    res.meta["bmo_skipped"] = reports[4].meta["skipped"]
    res.fail_if(split["split_defect"] > tol["identity"], point, f"block split of P b off by {split['split_defect']:.3g}")
    return res


RUNNERS = {
    "basis": run_basis,
    "kernels": run_kernels,
    "cz": run_cz,
    "sparse": run_sparse,
    "weights": run_weights,
    "endpoints": run_endpoints,
}


def run_suite_point(suite: str, point: GridPoint, params: dict, tol: dict) -> SuiteResult:
    return RUNNERS[suite](point, params, tol)
