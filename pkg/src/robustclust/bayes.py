"""Bayes (IBR) partition search.

Under the effective RLPP the IBR clusterer is the Bayes clusterer, so the
same routines serve both: hand :func:`bayes_partition` an effective model and
it returns the IBR partition.
"""
from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.special import logsumexp

from .gaussian import (LabelPrior, NiwModel, _partition_posterior_arrays, as_points)
from .partitions import Partition, cost_matrix

__all__ = ["ClusterResult", "partition_error", "bayes_partition", "map_partition",
           "pseed_fast", "MAX_EXACT_N"]

#: Exhaustive search refuses larger point sets (two labels).
MAX_EXACT_N = 12
#: Exhaustive search refuses larger candidate sets for any label count.
MAX_EXACT_CANDIDATES = 5000

_TIE = 1e-12


@dataclass
class ClusterResult:
    """Output of a clusterer.

    ``score`` is the partition error for :func:`bayes_partition`, the negative
    normalized log posterior for :func:`map_partition` and the negative
    unnormalized log posterior for :func:`pseed_fast`. Baselines report their
    own objective.
    """

    partition: Partition
    score: float
    method: str
    diagnostics: dict = field(default_factory=dict)


@lru_cache(maxsize=32)
def _cached_costs(l: int, parts: tuple[Partition, ...]) -> np.ndarray:
    costs = cost_matrix(parts, parts, l)
    costs.setflags(write=False)
    return costs


def partition_error(p: Partition, probs: Mapping[Partition, float], l: int) -> float:
    """Expected natural cost of ``p`` against a partition pmf."""
    refs = list(probs)
    q = np.fromiter((probs[r] for r in refs), dtype=float, count=len(refs))
    if abs(q.sum() - 1) > 1e-9 or np.any(q < 0):
        raise ValueError(f"partition probabilities must form a pmf (sum={q.sum():.12g})")
    return float(cost_matrix([p], refs, l)[0] @ q)


def _first_min(values: np.ndarray) -> int:
    return int(np.flatnonzero(values <= values.min() + _TIE)[0])


def _check_exact(points: np.ndarray, prior: LabelPrior, model):
    n = points.shape[0]
    if n > MAX_EXACT_N:
        raise ValueError(f"exhaustive search is limited to n <= {MAX_EXACT_N} points "
                         f"(got {n}); use pseed_fast for larger sets")
    if model.n_labels < prior.n_labels:
        raise ValueError("label prior uses more labels than the model provides")


def bayes_partition(points, prior: LabelPrior, model) -> ClusterResult:
    """Minimum partition-error partition over the size-valid candidates.

    Candidates and references are the partitions induced by the prior support;
    ties go to the first candidate in canonical order.
    """
    t0 = time.perf_counter()
    points = as_points(points)
    _check_exact(points, prior, model)
    parts, logq = _partition_posterior_arrays(points, prior, model)
    if len(parts) > MAX_EXACT_CANDIDATES:
        raise ValueError(f"{len(parts)} candidate partitions exceed the exhaustive limit; "
                         "use pseed_fast")
    costs = _cached_costs(model.n_labels, tuple(parts))
    errors = costs @ np.exp(logq)
    best = _first_min(errors)
    return ClusterResult(parts[best], float(errors[best]), "ibr-exact",
                         {"candidates": len(parts), "runtime_s": time.perf_counter() - t0,
                          "errors": errors, "partitions": parts})


def map_partition(points, prior: LabelPrior, model) -> ClusterResult:
    """Maximum posterior-probability partition (first in canonical order on ties)."""
    t0 = time.perf_counter()
    points = as_points(points)
    _check_exact(points, prior, model)
    parts, logq = _partition_posterior_arrays(points, prior, model)
    best = _first_min(-logq)
    return ClusterResult(parts[best], float(-logq[best]), "map",
                         {"candidates": len(parts), "runtime_s": time.perf_counter() - t0})


# ---------------------------------------------------------------------------
# Suboptimal Pseed Fast

def _largest_remainder(sizes: Sequence[int], total: int) -> list[int]:
    n = sum(sizes)
    quotas = [s * total / n for s in sizes]
    out = [math.floor(q) for q in quotas]
    order = sorted(range(len(sizes)), key=lambda i: (-(quotas[i] - out[i]), i))
    for i in order[: total - sum(out)]:
        out[i] += 1
    return out


class _BlockState:
    """Sufficient statistics of each block of a labeled point set."""

    def __init__(self, x: np.ndarray, codes: np.ndarray, n_blocks: int):
        self.x = x
        self.xx = np.einsum("nd,ne->nde", x, x)
        self.codes = codes.copy()
        self.n_blocks = n_blocks
        onehot = (codes[:, None] == np.arange(n_blocks)).astype(float)
        self.counts = onehot.sum(axis=0)
        self.s1 = onehot.T @ x
        self.s2 = np.einsum("nb,nde->bde", onehot, self.xx)

    def move(self, i: int, c: int):
        a = self.codes[i]
        self.counts[a] -= 1
        self.counts[c] += 1
        self.s1[a] -= self.x[i]
        self.s1[c] += self.x[i]
        self.s2[a] -= self.xx[i]
        self.s2[c] += self.xx[i]
        self.codes[i] = c


def _score_from_stats(model: NiwModel, counts, s1, s2) -> np.ndarray:
    # counts (K, B), s1 (K, B, d), s2 (K, B, d, d) with B == l blocks (padded)
    l = model.n_labels
    w = np.stack([model._terms_from_stats(counts, s1, s2, y) for y in range(l)], axis=-1)
    perms = np.array(list(itertools.permutations(range(l))))
    totals = w[:, np.arange(l), perms].sum(axis=-1)
    return logsumexp(totals, axis=-1)


def _candidate_moves(codes: np.ndarray, l: int, sizes: tuple[int, ...]):
    # every reassignment of at most two points preserving the block-size multiset,
    # singles first, then pairs, each in index order
    n = codes.size
    target = np.sort(np.asarray(sizes))
    counts = np.bincount(codes, minlength=l)
    eye = np.eye(l, dtype=np.intp)

    # singles: (i, c) for c != codes[i]
    i1, c1 = np.nonzero(np.arange(l)[None, :] != codes[:, None])
    new1 = counts - eye[codes[i1]] + eye[c1]
    ok1 = np.all(np.sort(new1, axis=1) == target, axis=1)
    singles = np.column_stack([i1, c1, np.full_like(i1, -1), np.full_like(i1, -1)])[ok1]

    # pairs: i < j, ci != codes[i], cj != codes[j]
    ii, jj = np.triu_indices(n, 1)
    alt = np.array([[c for c in range(l) if c != a] for a in range(l)], dtype=np.intp)
    opts = np.array(list(itertools.product(range(l - 1), repeat=2)), dtype=np.intp)
    pi = np.repeat(ii, len(opts))
    pj = np.repeat(jj, len(opts))
    ci = alt[codes[pi], np.tile(opts[:, 0], ii.size)]
    cj = alt[codes[pj], np.tile(opts[:, 1], ii.size)]
    new2 = counts - eye[codes[pi]] + eye[ci] - eye[codes[pj]] + eye[cj]
    ok2 = np.all(np.sort(new2, axis=1) == target, axis=1)
    pairs = np.column_stack([pi, ci, pj, cj])[ok2]
    return np.vstack([singles, pairs]).astype(np.intp)


def _move_scores(model: NiwModel, state: _BlockState, moves: np.ndarray) -> np.ndarray:
    K = moves.shape[0]
    counts = np.repeat(state.counts[None], K, axis=0)
    s1 = np.repeat(state.s1[None], K, axis=0)
    s2 = np.repeat(state.s2[None], K, axis=0)
    rows = np.arange(K)
    for pi, pc in ((0, 1), (2, 3)):
        active = moves[:, pi] >= 0
        r = rows[active]
        i = moves[active, pi]
        a = state.codes[i]
        c = moves[active, pc]
        # each row appears once per pass, so fancy-index updates do not collide
        counts[r, a] -= 1
        counts[r, c] += 1
        s1[r, a] -= state.x[i]
        s1[r, c] += state.x[i]
        s2[r, a] -= state.xx[i]
        s2[r, c] += state.xx[i]
    return _score_from_stats(model, counts, s1, s2)


def _hill_climb(model: NiwModel, x: np.ndarray, codes: np.ndarray, sizes: tuple[int, ...],
                max_sweeps: int = 10_000):
    l = model.n_labels
    state = _BlockState(x, codes, l)
    current = float(_score_from_stats(model, state.counts[None], state.s1[None], state.s2[None])[0])
    d = x.shape[1]
    chunk = max(64, int(2e7 // max(1, l * d * d)))
    accepted = 0
    for _ in range(max_sweeps):
        moves = _candidate_moves(state.codes, l, sizes)
        found = None
        for s in range(0, moves.shape[0], chunk):
            block = moves[s:s + chunk]
            scores = _move_scores(model, state, block)
            better = np.flatnonzero(scores > current + 1e-10 * max(1.0, abs(current)))
            if better.size:
                found = block[better[0]], float(scores[better[0]])
                break
        if found is None:
            break
        (i, ci, j, cj), current = found
        state.move(int(i), int(ci))
        if j >= 0:
            state.move(int(j), int(cj))
        accepted += 1
    return state.codes, current, accepted


def _qda_extend(x: np.ndarray, subset: np.ndarray, sub_codes: np.ndarray,
                sizes: tuple[int, ...], l: int) -> np.ndarray:
    """Grow subset clusters to all points with a size-constrained QDA rule."""
    n, d = x.shape
    codes = np.full(n, -1, dtype=np.intp)
    codes[subset] = sub_codes
    rest = np.flatnonzero(codes < 0)
    if rest.size == 0:
        return codes
    sub_x = x[subset]
    sub_counts = np.bincount(sub_codes, minlength=l)
    means = np.zeros((l, d))
    covs = np.zeros((l, d, d))
    pooled = np.zeros((d, d))
    dof = 0
    for b in range(l):
        pts = sub_x[sub_codes == b]
        if pts.shape[0] == 0:
            continue
        means[b] = pts.mean(axis=0)
        centered = pts - means[b]
        pooled += centered.T @ centered
        dof += pts.shape[0] - 1
        if pts.shape[0] >= d + 2:
            covs[b] = centered.T @ centered / (pts.shape[0] - 1)
    pooled = pooled / dof if dof > 0 else np.cov(sub_x.T, bias=True).reshape(d, d)
    logdens = np.full((rest.size, l), -np.inf)
    for b in range(l):
        if sub_counts[b] == 0:
            continue
        cov = covs[b] if sub_counts[b] >= d + 2 else pooled
        lam = 1e-3 * np.trace(cov) / d
        cov = cov + (lam if lam > 0 else 1e-3) * np.eye(d)
        chol = np.linalg.cholesky(cov)
        z = np.linalg.solve(chol, (x[rest] - means[b]).T)
        logdens[:, b] = (-0.5 * (z * z).sum(axis=0) - np.log(np.diag(chol)).sum()
                         + np.log(sub_counts[b] / subset.size))
    best_total, best_codes = -np.inf, None
    for target in sorted(set(itertools.permutations(sizes))):
        cap = np.array(target) - sub_counts
        if np.any(cap < 0):
            continue
        slots = np.repeat(np.arange(l), cap)
        score = logdens[:, slots]
        r, c = linear_sum_assignment(np.where(np.isfinite(score), score, -1e300), maximize=True)
        total = score[r, c].sum()
        if total > best_total:
            best_total = total
            best_codes = codes.copy()
            best_codes[rest[r]] = slots[c]
    if best_codes is None:
        raise ValueError("subset clusters cannot be extended to the requested sizes")
    return best_codes


def pseed_fast(points, prior: LabelPrior, model: NiwModel, restarts: int = 10,
               subset_size: int = 10, seed=None) -> ClusterResult:
    """Approximate maximum-posterior partition for point sets too large to enumerate.

    Each restart finds the best partition of a random subset exhaustively,
    extends it with a size-constrained QDA rule fit on the subset clusters,
    then hill-climbs over reassignments of at most two points. The subset
    is the whole set when ``n <= subset_size``. The highest
    scoring restart wins (earliest restart on ties). Restart ``r`` draws from
    the ``r``-th child of ``SeedSequence(seed)``.
    """
    t0 = time.perf_counter()
    x = as_points(points)
    n = x.shape[0]
    if not isinstance(model, NiwModel):
        raise TypeError("pseed_fast needs a NiwModel likelihood")
    if prior.kind != "fixed-sizes-uniform":
        raise ValueError("pseed_fast needs a fixed-sizes label prior")
    l = model.n_labels
    sizes = tuple(prior.sizes) + (0,) * (l - len(prior.sizes))
    if any(s <= 0 for s in sizes):
        raise ValueError("pseed_fast needs a positive size for every label")
    if sum(sizes) != n:
        raise ValueError(f"sizes {sizes} do not sum to n={n}")
    if subset_size < 1:
        raise ValueError("subset_size must be >= 1")
    subset_size = min(subset_size, n)
    sub_sizes = _largest_remainder(sizes, subset_size)
    if any(s == 0 for s in sub_sizes):
        raise ValueError(f"subset of {subset_size} points leaves a cluster empty; enlarge it")
    sub_prior = LabelPrior.fixed_sizes(sub_sizes)
    x = x - x.mean(axis=0)
    model_c = model._shifted(as_points(points).mean(axis=0))

    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    children = root.spawn(restarts)
    best = None
    seed_scores, final_scores = [], []
    for r, child in enumerate(children):
        rng = np.random.default_rng(child)
        subset = np.sort(rng.choice(n, subset_size, replace=False))
        sub = map_partition(x[subset], sub_prior, model_c)
        sub_codes = np.array(sub.partition.labels, dtype=np.intp) - 1
        codes = _qda_extend(x, subset, sub_codes, sizes, l)
        state = _BlockState(x, codes, l)
        seed_score = float(_score_from_stats(model_c, state.counts[None], state.s1[None],
                                             state.s2[None])[0])
        codes, score, moves = _hill_climb(model_c, x, codes, sizes)
        seed_scores.append(seed_score)
        final_scores.append(score)
        if best is None or score > best[1] + 1e-10 * max(1.0, abs(best[1])):
            best = (codes.copy(), score, r, moves)
    codes, score, r, moves = best
    return ClusterResult(Partition.from_labels(codes + 1), -score, "ibr-pseed",
                         {"restarts": restarts, "best_restart": r, "moves": moves,
                          "seed_log_scores": seed_scores, "final_log_scores": final_scores,
                          "subset_sizes": sub_sizes, "runtime_s": time.perf_counter() - t0})
