"""Separable Gaussian RLPPs with normal-inverse-Wishart priors.

Every likelihood is kept in log space. Determinants and positive-definiteness
checks go through Cholesky factorizations; a failed factorization raises
``numpy.linalg.LinAlgError`` rather than being silently repaired.

Likelihood providers
--------------------
Anything exposing ``n_labels`` and ``log_label_weights(points, labels)`` can
drive the posterior and the Bayes engine. ``labels`` is a ``(K, n)`` array of
1-based label functions and the return value is a length-``K`` vector equal to
``log f(S | phi)`` up to an additive constant that does not depend on ``phi``.
:class:`NiwModel`, :class:`EffectiveRlpp` and
:class:`robustclust.granulometry.GranularModel` all qualify.

The posterior scale update is applied for every cluster with ``n_y >= 2``;
the ``n_y = 1`` and ``n_y = 0`` cases fall out of the same expression because
the centered scatter vanishes and the shrinkage weight ``nu n/(nu + n)`` is
zero for an empty cluster.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.special import gammaln, logsumexp, multigammaln

from .partitions import (MAX_ENUMERATION_N, Partition, as_label_function,
                         enumerate_partitions)

__all__ = [
    "NiwModel", "LabelPrior", "UncertaintyClass", "EffectiveRlpp",
    "as_points", "log_multivariate_gamma", "cluster_stats", "log_label_weight",
    "posterior_label_probs", "partition_probs", "build_effective", "sample_rlpp",
    "sample_inverse_wishart",
]


def as_points(points) -> np.ndarray:
    """Coerce to an ``(n, d)`` float array of finite coordinates."""
    x = np.asarray(points, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
        raise ValueError("a point set needs shape (n, d) with n, d >= 1")
    if not np.all(np.isfinite(x)):
        raise ValueError("point coordinates must be finite")
    return x


def log_multivariate_gamma(d: int, a: float) -> float:
    """``log Gamma_d(a) = d(d-1)/4 log(pi) + sum_j log Gamma(a + (1-j)/2)``."""
    if d < 1:
        raise ValueError("dimension must be >= 1")
    if not a > (d - 1) / 2:
        raise ValueError(f"log Gamma_{d}(a) needs a > {(d - 1) / 2}, got {a}")
    j = np.arange(1, d + 1)
    return float(d * (d - 1) / 4 * math.log(math.pi) + gammaln(a + (1 - j) / 2).sum())


def cluster_stats(points) -> tuple[int, np.ndarray | None, np.ndarray | None]:
    """Size, sample mean and unbiased sample covariance of a subset.

    The covariance is ``None`` for fewer than two points and the mean is
    ``None`` for an empty subset.
    """
    x = np.asarray(points, dtype=float)
    if x.size == 0:
        return 0, None, None
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    mean = x.mean(axis=0)
    if n < 2:
        return n, mean, None
    centered = x - mean
    return n, mean, centered.T @ centered / (n - 1)


def _chol_logdet(mats: np.ndarray) -> np.ndarray:
    chol = np.linalg.cholesky(mats)
    return 2.0 * np.log(np.diagonal(chol, axis1=-2, axis2=-1)).sum(axis=-1)


@dataclass(frozen=True)
class NiwModel:
    """Per-label normal-inverse-Wishart hyperparameters.

    Parameters
    ----------
    m : ndarray, shape (l, d)
        Prior means.
    nu : ndarray, shape (l,)
        Mean-precision scales, all > 0.
    kappa : ndarray, shape (l,)
        Degrees of freedom, all > d - 1.
    psi : ndarray, shape (l, d, d)
        Symmetric positive-definite scale matrices.
    """

    m: np.ndarray
    nu: np.ndarray
    kappa: np.ndarray
    psi: np.ndarray

    def __post_init__(self):
        m = np.atleast_2d(np.asarray(self.m, dtype=float))
        l, d = m.shape
        nu = np.broadcast_to(np.asarray(self.nu, dtype=float), (l,)).copy()
        kappa = np.broadcast_to(np.asarray(self.kappa, dtype=float), (l,)).copy()
        psi = np.asarray(self.psi, dtype=float)
        if psi.ndim == 2:
            psi = np.broadcast_to(psi, (l, d, d))
        psi = psi.reshape(l, d, d).copy()
        if np.any(nu <= 0):
            raise ValueError("nu must be positive")
        if np.any(kappa <= d - 1):
            raise ValueError(f"kappa must exceed d - 1 = {d - 1}")
        if not np.allclose(psi, np.swapaxes(psi, 1, 2)):
            raise ValueError("psi must be symmetric")
        try:
            np.linalg.cholesky(psi)
        except np.linalg.LinAlgError as exc:
            raise ValueError("psi must be positive definite") from exc
        for name, val in (("m", m), ("nu", nu), ("kappa", kappa), ("psi", psi)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @classmethod
    def symmetric(cls, l: int, d: int, *, m: float | Sequence[float] = 0.0, nu: float = 1.0,
                  kappa: float | None = None, psi=None) -> "NiwModel":
        """Identical hyperparameters for every label (defaults: kappa = d + 2, psi = I)."""
        mm = np.broadcast_to(np.asarray(m, dtype=float), (d,))
        psi = np.eye(d) if psi is None else np.asarray(psi, dtype=float).reshape(d, d)
        return cls(np.tile(mm, (l, 1)), np.full(l, nu),
                   np.full(l, d + 2.0 if kappa is None else kappa), np.tile(psi, (l, 1, 1)))

    @property
    def n_labels(self) -> int:
        return self.m.shape[0]

    @property
    def dim(self) -> int:
        return self.m.shape[1]

    def _check(self, points: np.ndarray):
        if points.shape[1] != self.dim:
            raise ValueError(f"points have dimension {points.shape[1]}, model has {self.dim}")

    # -- likelihood from sufficient statistics ------------------------------

    def _scale_update(self, counts, s1, s2, y=None):
        # counts (..., l), s1 (..., l, d), s2 (..., l, d, d) -> psi + psi* per label
        m = self.m if y is None else self.m[y]
        nu = self.nu if y is None else self.nu[y]
        psi = self.psi if y is None else self.psi[y]
        n = np.asarray(counts, dtype=float)
        safe = np.where(n > 0, n, 1.0)
        mean = s1 / safe[..., None]
        scatter = s2 - n[..., None, None] * mean[..., :, None] * mean[..., None, :]
        dev = mean - m
        shrink = nu * n / (nu + n)
        update = scatter + shrink[..., None, None] * dev[..., :, None] * dev[..., None, :]
        return psi + update

    def _terms_from_stats(self, counts, s1, s2, y=None) -> np.ndarray:
        """Per-label log factor of the label weight (before summing over labels)."""
        kappa = self.kappa if y is None else self.kappa[y]
        nu = self.nu if y is None else self.nu[y]
        n = np.asarray(counts, dtype=float)
        d = self.dim
        logdet = _chol_logdet(self._scale_update(counts, s1, s2, y))
        a = (kappa + n) / 2
        return multigammaln(a, d) - d / 2 * np.log(n + nu) - a * logdet

    def _marginal_terms_from_stats(self, counts, s1, s2) -> np.ndarray:
        d = self.dim
        n = np.asarray(counts, dtype=float)
        psi_logdet = _chol_logdet(self.psi)
        base = (-n * d / 2 * math.log(math.pi) - multigammaln(self.kappa / 2, d)
                + self.kappa / 2 * psi_logdet + d / 2 * np.log(self.nu))
        return base + self._terms_from_stats(counts, s1, s2)

    def _stats(self, points: np.ndarray, labels: np.ndarray):
        labels = np.atleast_2d(labels)
        if labels.min() < 1 or labels.max() > self.n_labels:
            raise ValueError(f"labels must lie in 1..{self.n_labels}")
        # translation invariance: center on the global mean for conditioning
        shift = points.mean(axis=0)
        x = points - shift
        onehot = (labels[..., None] == np.arange(1, self.n_labels + 1)).astype(float)
        counts = onehot.sum(axis=1)
        s1 = np.einsum("knl,nd->kld", onehot, x)
        s2 = np.einsum("knl,nd,ne->klde", onehot, x, x)
        return counts, s1, s2, shift

    def _shifted(self, shift: np.ndarray) -> "NiwModel":
        if not np.any(shift):
            return self
        return NiwModel(self.m - shift, self.nu, self.kappa, self.psi)

    def log_label_weights(self, points, labels) -> np.ndarray:
        """Label-weight logs (product over labels, no label prior) for ``(K, n)`` labels."""
        points = as_points(points)
        self._check(points)
        labels = np.atleast_2d(np.asarray(labels, dtype=np.int64))
        counts, s1, s2, shift = self._stats(points, labels)
        return self._shifted(shift)._terms_from_stats(counts, s1, s2).sum(axis=-1)

    def log_marginal_likelihood(self, points, labels) -> np.ndarray:
        """Normalized ``log f(S | phi)`` with means and covariances integrated out."""
        points = as_points(points)
        self._check(points)
        labels = np.atleast_2d(np.asarray(labels, dtype=np.int64))
        counts, s1, s2, shift = self._stats(points, labels)
        return self._shifted(shift)._marginal_terms_from_stats(counts, s1, s2).sum(axis=-1)

    # -- sampling ------------------------------------------------------------

    def sample_parameters(self, rng: np.random.Generator):
        """Draw ``(mu, sigma)`` for every label: sigma ~ IW(kappa, psi), mu ~ N(m, sigma/nu)."""
        mus, sigmas = [], []
        for y in range(self.n_labels):
            sigma = sample_inverse_wishart(self.kappa[y], self.psi[y], rng)
            mu = rng.multivariate_normal(self.m[y], sigma / self.nu[y], method="cholesky")
            mus.append(mu)
            sigmas.append(sigma)
        return np.array(mus), np.array(sigmas)

    def sample(self, sizes: Sequence[int], rng: np.random.Generator):
        labels = _sample_labels(sizes, self.n_labels, rng)
        mu, sigma = self.sample_parameters(rng)
        pts = np.empty((labels.size, self.dim))
        for y in range(self.n_labels):
            idx = np.flatnonzero(labels == y + 1)
            if idx.size:
                chol = np.linalg.cholesky(sigma[y])
                pts[idx] = mu[y] + rng.standard_normal((idx.size, self.dim)) @ chol.T
        return pts, labels, {"mu": mu, "sigma": sigma}

    def log_likelihood(self, points, labels) -> np.ndarray:
        return self.log_marginal_likelihood(points, labels)


def sample_inverse_wishart(kappa: float, psi, rng: np.random.Generator) -> np.ndarray:
    """Inverse-Wishart draw: invert a Bartlett-constructed Wishart(kappa, psi^-1) draw."""
    psi = np.atleast_2d(np.asarray(psi, dtype=float))
    d = psi.shape[0]
    if not kappa > d - 1:
        raise ValueError("inverse-Wishart needs kappa > d - 1")
    chol = np.linalg.cholesky(np.linalg.inv(psi))
    a = np.zeros((d, d))
    a[np.diag_indices(d)] = np.sqrt(rng.chisquare(kappa - np.arange(d)))
    low = np.tril_indices(d, -1)
    a[low] = rng.standard_normal(len(low[0]))
    la = chol @ a
    w = la @ la.T
    sigma = np.linalg.inv(w)
    return (sigma + sigma.T) / 2


def _sample_labels(sizes: Sequence[int], l: int, rng: np.random.Generator) -> np.ndarray:
    # uniform over label functions whose count vector is a permutation of `sizes`
    sizes = [int(s) for s in sizes]
    if len(sizes) > l or any(s < 0 for s in sizes):
        raise ValueError(f"need at most {l} nonnegative sizes, got {sizes}")
    counts = np.array(sizes + [0] * (l - len(sizes)))
    counts = counts[rng.permutation(l)]
    labels = np.repeat(np.arange(1, l + 1), counts)
    return labels[rng.permutation(labels.size)]


def log_label_weight(points, phi, model: NiwModel) -> float:
    """Log of the per-label product for one label function (no label prior)."""
    phi = as_label_function(phi, model.n_labels)
    points = as_points(points)
    if phi.size != points.shape[0]:
        raise ValueError("label function length differs from the number of points")
    return float(model.log_label_weights(points, phi[None, :])[0])


# ---------------------------------------------------------------------------
# label priors and posteriors

@dataclass(frozen=True)
class LabelPrior:
    """Prior mass ``P(Phi = phi)`` on label functions.

    ``kind="fixed-sizes-uniform"`` puts equal mass on every label function
    whose cluster-size vector is a permutation of ``sizes``.
    ``kind="explicit-table"`` lists the support and its probabilities.
    """

    kind: str
    sizes: tuple[int, ...] | None = None
    table: Mapping[tuple[int, ...], float] | None = None

    def __post_init__(self):
        if self.kind == "fixed-sizes-uniform":
            if not self.sizes:
                raise ValueError("fixed-sizes-uniform needs sizes")
            object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))
            if any(s < 0 for s in self.sizes):
                raise ValueError("sizes must be nonnegative")
        elif self.kind == "explicit-table":
            if not self.table:
                raise ValueError("explicit-table needs a nonempty table")
            total = sum(self.table.values())
            if any(v < 0 for v in self.table.values()) or abs(total - 1) > 1e-9:
                raise ValueError("table probabilities must be nonnegative and sum to 1")
            object.__setattr__(self, "table",
                               {tuple(int(v) for v in k): float(p) for k, p in self.table.items()})
        else:
            raise ValueError(f"unknown label prior kind {self.kind!r}")

    @classmethod
    def fixed_sizes(cls, sizes: Sequence[int]) -> "LabelPrior":
        return cls("fixed-sizes-uniform", sizes=tuple(sizes))

    @property
    def n_labels(self) -> int:
        if self.kind == "fixed-sizes-uniform":
            return len(self.sizes)
        return max(max(k) for k in self.table)

    def support(self, n: int, l: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        """``(labels, log_prior)``: support label functions as a ``(K, n)`` array."""
        l = self.n_labels if l is None else l
        if self.kind == "explicit-table":
            keys = [k for k, p in self.table.items() if p > 0]
            if any(len(k) != n for k in keys):
                raise ValueError("table label functions have the wrong length")
            labels = np.array(keys, dtype=np.int64)
            if labels.max() > l:
                raise ValueError(f"table uses labels above l={l}")
            logp = np.log([self.table[k] for k in keys])
            return labels, logp
        if sum(self.sizes) != n:
            raise ValueError(f"sizes {self.sizes} do not sum to n={n}")
        if len(self.sizes) > l:
            raise ValueError("more sizes than labels")
        if n > MAX_ENUMERATION_N:
            raise ValueError(f"support enumeration refused for n={n} > {MAX_ENUMERATION_N}")
        labels = _sized_label_functions(n, l, self.sizes)
        if labels.shape[0] == 0:
            raise ValueError("empty label-prior support")
        return labels, np.full(labels.shape[0], -math.log(labels.shape[0]))


def _sized_label_functions(n: int, l: int, sizes: tuple[int, ...]) -> np.ndarray:
    target = sorted(list(sizes) + [0] * (l - len(sizes)))
    out = []
    for part in enumerate_partitions(n, l, sizes):
        codes = np.array(part.labels) - 1
        for assign in itertools.permutations(range(1, l + 1), part.n_blocks):
            phi = np.array(assign)[codes]
            counts = np.bincount(phi, minlength=l + 1)[1:]
            if sorted(counts.tolist()) == target:
                out.append(phi)
    return np.array(out, dtype=np.int64).reshape(-1, n)


def _label_posterior_arrays(points, prior: LabelPrior, model) -> tuple[np.ndarray, np.ndarray]:
    points = as_points(points)
    labels, log_prior = prior.support(points.shape[0], model.n_labels)
    logw = log_prior + model.log_label_weights(points, labels)
    if not np.any(np.isfinite(logw)):
        raise ValueError("posterior has no mass on the prior support")
    return labels, logw - logsumexp(logw)


def posterior_label_probs(points, prior: LabelPrior, model) -> dict[tuple[int, ...], float]:
    """Posterior ``P(Phi_S = phi | S)`` over the prior support, normalized."""
    labels, logp = _label_posterior_arrays(points, prior, model)
    return {tuple(int(v) for v in row): float(p) for row, p in zip(labels, np.exp(logp))}


def _partition_posterior_arrays(points, prior: LabelPrior, model):
    labels, logp = _label_posterior_arrays(points, prior, model)
    parts = [Partition.from_labels(row) for row in labels]
    index: dict[Partition, int] = {}
    group = np.empty(len(parts), dtype=np.intp)
    for k, p in enumerate(parts):
        group[k] = index.setdefault(p, len(index))
    uniq = sorted(index, key=lambda p: p.labels)
    order = np.array([index[p] for p in uniq])
    logq = np.full(len(index), -np.inf)
    for g in range(len(index)):
        logq[g] = logsumexp(logp[group == g])
    return uniq, logq[order]


def partition_probs(points, prior: LabelPrior, model) -> dict[Partition, float]:
    """Posterior partition masses: sums of label-function probabilities per partition."""
    parts, logq = _partition_posterior_arrays(points, prior, model)
    return dict(zip(parts, np.exp(logq).tolist()))


# ---------------------------------------------------------------------------
# uncertainty classes and the effective RLPP

@dataclass(frozen=True)
class UncertaintyClass:
    """Finite uncertainty class: states with prior weights.

    Each state must provide ``n_labels``, ``log_likelihood(points, labels)``
    returning the normalized ``log f(S | phi, theta)`` for ``(K, n)`` labels,
    and ``sample(sizes, rng)`` for generation.
    """

    states: tuple
    weights: tuple[float, ...]
    names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if len(self.states) == 0 or w.shape != (len(self.states),):
            raise ValueError("need one weight per state and at least one state")
        if np.any(w < 0) or abs(w.sum() - 1) > 1e-12:
            raise ValueError("state weights must be nonnegative and sum to 1")
        if len({s.n_labels for s in self.states}) != 1:
            raise ValueError("all states must share a label count")
        names = tuple(self.names) or tuple(str(i) for i in range(len(self.states)))
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "weights", tuple(float(v) for v in w))


class EffectiveRlpp:
    """Separable RLPP over the joint parameter ``[theta, rho]``.

    Its likelihood is the prior-weighted mixture of state likelihoods and its
    sampler draws a state first, then delegates.
    """

    def __init__(self, uc: UncertaintyClass):
        self.uc = uc
        self._log_w = np.log(np.asarray(uc.weights))

    @property
    def n_labels(self) -> int:
        return self.uc.states[0].n_labels

    def state_log_likelihoods(self, points, labels) -> np.ndarray:
        return np.stack([s.log_likelihood(points, labels) for s in self.uc.states], axis=0)

    def log_likelihood(self, points, labels) -> np.ndarray:
        lls = self.state_log_likelihoods(points, labels)
        return logsumexp(lls + self._log_w[:, None], axis=0)

    log_label_weights = log_likelihood

    def sample(self, sizes: Sequence[int], rng: np.random.Generator):
        k = int(rng.choice(len(self.uc.states), p=np.asarray(self.uc.weights)))
        pts, labels, info = self.uc.states[k].sample(sizes, rng)
        return pts, labels, {"state": k, "name": self.uc.names[k], **info}


def build_effective(uc: UncertaintyClass) -> EffectiveRlpp:
    return EffectiveRlpp(uc)


def sample_rlpp(model, sizes: Sequence[int], seed) -> tuple[np.ndarray, np.ndarray, dict]:
    """Draw ``(points, labels, state record)``; fully determined by ``seed``.

    ``seed`` may be an int, a ``SeedSequence`` or a ``Generator``.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return model.sample(tuple(int(s) for s in sizes), rng)
