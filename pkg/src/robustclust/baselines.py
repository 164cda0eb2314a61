"""Classical clusterers used as comparison points.

None of these use the known cluster sizes except ``random``. Euclidean
distance throughout. Each iterative method keeps the objective trace of its
winning run in ``diagnostics["history"]`` so monotonicity can be checked.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, replace
import numpy as np
from scipy.cluster.hierarchy import cut_tree, linkage
from scipy.special import logsumexp

from .bayes import ClusterResult
from .gaussian import as_points
from .partitions import Partition

__all__ = ["BaselineConfig", "METHODS", "run_baseline", "kmeans", "fuzzy_cmeans",
           "hierarchical", "em_gmm", "random_partition"]

METHODS = ("kmeans", "fcm", "hier-s", "hier-a", "hier-c", "em", "random")
_LINKAGE = {"hier-s": "single", "hier-a": "average", "hier-c": "complete"}


@dataclass(frozen=True)
class BaselineConfig:
    """Settings shared by the baseline clusterers.

    ``sizes`` is only read by ``random``; when omitted it splits ``n`` as
    evenly as possible into ``k`` blocks.
    """

    method: str
    k: int = 2
    max_iter: int = 300
    tol: float = 1e-6
    restarts: int = 10
    fuzzifier: float = 2.0
    reg: float = 1e-6
    seed: int | np.random.SeedSequence | None = None
    sizes: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown baseline {self.method!r}; choose from {METHODS}")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be > 0")
        if not self.fuzzifier > 1:
            raise ValueError("fuzzifier must be > 1")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")


def _result(labels, score, method, t0, **diag) -> ClusterResult:
    diag["runtime_s"] = time.perf_counter() - t0
    return ClusterResult(Partition.from_labels(np.asarray(labels) + 1), float(score), method, diag)


# ---------------------------------------------------------------------------
# k-means

def _kmeanspp(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centers = [x[rng.integers(n)]]
    d2 = ((x - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        idx = rng.choice(n, p=d2 / total) if total > 0 else rng.integers(n)
        centers.append(x[idx])
        d2 = np.minimum(d2, ((x - x[idx]) ** 2).sum(axis=1))
    return np.array(centers)


def _lloyd(x, centers, max_iter, tol):
    history = []
    for _ in range(max_iter):
        dist = ((x[:, None, :] - centers[None]) ** 2).sum(axis=2)
        labels = dist.argmin(axis=1)
        history.append(float(dist[np.arange(x.shape[0]), labels].sum()))
        new = centers.copy()
        for c in range(centers.shape[0]):
            members = x[labels == c]
            if members.shape[0]:
                new[c] = members.mean(axis=0)
        shift = np.abs(new - centers).max()
        centers = new
        if shift <= tol:
            break
    dist = ((x[:, None, :] - centers[None]) ** 2).sum(axis=2)
    labels = dist.argmin(axis=1)
    history.append(float(dist[np.arange(x.shape[0]), labels].sum()))
    return labels, centers, history


def kmeans(points, cfg: BaselineConfig) -> ClusterResult:
    """Lloyd's algorithm with k-means++ seeding, best of ``restarts`` by inertia."""
    t0 = time.perf_counter()
    x = as_points(points)
    _need(x, cfg.k)
    rng = np.random.default_rng(cfg.seed)
    best = None
    for _ in range(cfg.restarts):
        labels, centers, hist = _lloyd(x, _kmeanspp(x, cfg.k, rng), cfg.max_iter, cfg.tol)
        if best is None or hist[-1] < best[2][-1]:
            best = (labels, centers, hist)
    labels, centers, hist = best
    return _result(labels, hist[-1], "kmeans", t0, history=hist, centers=centers)


# ---------------------------------------------------------------------------
# fuzzy c-means

def _fcm_objective(x, centers, u, m):
    d2 = ((x[:, None, :] - centers[None]) ** 2).sum(axis=2)
    return float((u ** m * d2).sum())


def _fcm_memberships(x, centers, m):
    d2 = ((x[:, None, :] - centers[None]) ** 2).sum(axis=2)
    zero = d2 <= 1e-300
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = d2 ** (-1.0 / (m - 1))
        u = inv / inv.sum(axis=1, keepdims=True)
    hit = zero.any(axis=1)
    if hit.any():
        # a point sitting on a center belongs to it (split evenly across coincident centers)
        u[hit] = zero[hit] / zero[hit].sum(axis=1, keepdims=True)
    return u


def fuzzy_cmeans(points, cfg: BaselineConfig) -> ClusterResult:
    """Fuzzy c-means; hard partition by maximum membership."""
    t0 = time.perf_counter()
    x = as_points(points)
    _need(x, cfg.k)
    m = cfg.fuzzifier
    rng = np.random.default_rng(cfg.seed)
    best = None
    for _ in range(cfg.restarts):
        u = rng.dirichlet(np.ones(cfg.k), size=x.shape[0])
        history = []
        for _ in range(cfg.max_iter):
            um = u ** m
            centers = um.T @ x / um.sum(axis=0)[:, None]
            history.append(_fcm_objective(x, centers, u, m))
            new_u = _fcm_memberships(x, centers, m)
            change = np.abs(new_u - u).max()
            u = new_u
            if change <= cfg.tol:
                break
        history.append(_fcm_objective(x, centers, u, m))
        if best is None or history[-1] < best[2][-1]:
            best = (u, centers, history)
    u, centers, history = best
    return _result(u.argmax(axis=1), history[-1], "fcm", t0, history=history,
                   memberships=u, centers=centers)


# ---------------------------------------------------------------------------
# hierarchical

def hierarchical(points, cfg: BaselineConfig) -> ClusterResult:
    """Agglomerative clustering cut at ``k`` clusters (single/average/complete)."""
    t0 = time.perf_counter()
    x = as_points(points)
    _need(x, cfg.k)
    if x.shape[0] == 1:
        return _result([0], 0.0, cfg.method, t0)
    z = linkage(x, method=_LINKAGE[cfg.method], metric="euclidean")
    labels = cut_tree(z, n_clusters=cfg.k).ravel()
    height = z[x.shape[0] - cfg.k - 1, 2] if cfg.k < x.shape[0] else 0.0
    return _result(labels, height, cfg.method, t0, linkage=z)


# ---------------------------------------------------------------------------
# EM for Gaussian mixtures

def _gmm_logpdf(x, means, covs):
    n, d = x.shape
    out = np.empty((n, means.shape[0]))
    for c in range(means.shape[0]):
        chol = np.linalg.cholesky(covs[c])
        z = np.linalg.solve(chol, (x - means[c]).T)
        out[:, c] = (-0.5 * (z * z).sum(axis=0) - np.log(np.diag(chol)).sum()
                     - d / 2 * np.log(2 * np.pi))
    return out


def _em_run(x, labels0, k, lam, max_iter, tol):
    n, d = x.shape
    resp = np.eye(k)[labels0]
    history = []
    prior_scale = lam * n / k
    for _ in range(max_iter + 1):
        # M step; the lam term is a fixed inverse-Wishart-type penalty, keeping EM monotone
        nk = resp.sum(axis=0)
        if np.any(nk < 1e-8):
            raise np.linalg.LinAlgError("a mixture component lost all its mass")
        weights = nk / n
        means = resp.T @ x / nk[:, None]
        covs = np.empty((k, d, d))
        for c in range(k):
            cen = x - means[c]
            covs[c] = ((resp[:, c, None] * cen).T @ cen + prior_scale * np.eye(d)) / nk[c]
        # E step
        logp = _gmm_logpdf(x, means, covs) + np.log(weights)
        norm = logsumexp(logp, axis=1)
        inv_trace = sum(np.trace(np.linalg.inv(covs[c])) for c in range(k))
        history.append(float(norm.sum() - 0.5 * prior_scale * inv_trace))
        resp = np.exp(logp - norm[:, None])
        if len(history) > 1 and abs(history[-1] - history[-2]) <= tol * max(1.0, abs(history[-1])):
            break
    return resp.argmax(axis=1), history, means, covs, weights


def em_gmm(points, cfg: BaselineConfig) -> ClusterResult:
    """Full-covariance EM initialized from k-means, hard assignment by responsibility.

    Covariances carry a ridge ``lam = reg * trace(S) / d`` (``S`` the sample
    covariance of all points) applied as a penalty so the penalized
    log-likelihood in ``history`` never decreases.
    """
    t0 = time.perf_counter()
    x = as_points(points)
    _need(x, cfg.k)
    n, d = x.shape
    if cfg.k == 1:
        mean = x.mean(axis=0)
        cov = np.cov(x.T, bias=True).reshape(d, d)
        return _result(np.zeros(n, dtype=int), 0.0, "em", t0, history=[], means=mean[None],
                       covs=cov[None])
    spread = np.trace(np.cov(x.T, bias=True).reshape(d, d)) / d
    if spread == 0:
        # all points identical: no mixture to fit, return the single block
        return _result(np.zeros(n, dtype=int), 0.0, "em", t0, history=[], degenerate=True)
    lam = cfg.reg * spread
    root = cfg.seed if isinstance(cfg.seed, np.random.SeedSequence) else np.random.SeedSequence(cfg.seed)
    seeds = root.spawn(cfg.restarts)
    best, failures = None, 0
    for child in seeds:
        km = kmeans(x, replace(cfg, method="kmeans", restarts=1, seed=child))
        labels0 = np.array(km.partition.labels) - 1
        try:
            labels, hist, means, covs, weights = _em_run(x, labels0, cfg.k, lam,
                                                         cfg.max_iter, cfg.tol)
        except np.linalg.LinAlgError:
            failures += 1
            continue
        if best is None or hist[-1] > best[1][-1]:
            best = (labels, hist, means, covs, weights)
    if best is None:
        raise RuntimeError("EM failed on every restart")
    labels, hist, means, covs, weights = best
    return _result(labels, -hist[-1], "em", t0, history=hist, means=means, covs=covs,
                   weights=weights, failed_restarts=failures)


# ---------------------------------------------------------------------------
# random reference

def _even_sizes(n: int, k: int) -> tuple[int, ...]:
    base, extra = divmod(n, k)
    return tuple(base + (1 if i < extra else 0) for i in range(k))


def random_partition(points, cfg: BaselineConfig) -> ClusterResult:
    """Uniformly random partition with the configured (or equal) block sizes."""
    t0 = time.perf_counter()
    x = as_points(points)
    n = x.shape[0]
    sizes = cfg.sizes if cfg.sizes is not None else _even_sizes(n, cfg.k)
    if sum(sizes) != n:
        raise ValueError(f"sizes {tuple(sizes)} do not sum to n={n}")
    rng = np.random.default_rng(cfg.seed)
    labels = np.repeat(np.arange(len(sizes)), sizes)
    return _result(labels[rng.permutation(n)], 0.0, "random", t0)


def _need(x: np.ndarray, k: int):
    if x.shape[0] < k:
        raise ValueError(f"need at least k={k} points, got {x.shape[0]}")


_DISPATCH = {"kmeans": kmeans, "fcm": fuzzy_cmeans, "hier-s": hierarchical,
             "hier-a": hierarchical, "hier-c": hierarchical, "em": em_gmm,
             "random": random_partition}


def run_baseline(points, cfg: BaselineConfig) -> ClusterResult:
    """Run the baseline named by ``cfg.method``."""
    return _DISPATCH[cfg.method](points, cfg)
