"""Robust clustering of images by their granulometric features.

Each image is a point ``x`` in R^4. Class ``y`` images share the gamma
shapes ``alpha[y]``; the uncertain parameters are the triangle proportion
``rho`` and the scale parameter ``theta``, both on finite grids. The class
maps are ``b1 = rho`` / ``1 - rho`` and ``beta = theta`` / ``beta_total -
theta`` for class 1 / class 2.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from ..gaussian import LabelPrior, _sample_labels, as_points, posterior_label_probs
from .features import AsymptoticLaw, asymptotic_law, exact_features_from_radii, \
    features_from_image, simulate_radii
from .scene import SizingModel, render_scene, sample_scene

__all__ = ["GranularConfig", "GranularModel", "gaussian_logpdf", "granular_log_likelihood",
           "granular_posterior", "simulate_image_features"]

_LOG2PI = np.log(2 * np.pi)


@dataclass(frozen=True)
class GranularConfig:
    """Granular image model.

    ``alpha[y]`` holds the (triangle, rod) gamma shapes of class ``y + 1``.
    Grid weights default to uniform.
    """

    n_grains: int = 1000
    alpha: tuple[tuple[float, float], tuple[float, float]] = ((1.95, 1.97), (1.97, 1.95))
    beta_total: float = 3.75
    theta_grid: tuple[float, ...] = tuple(np.linspace(1.75, 2.0, 10))
    rho_grid: tuple[float, ...] = tuple(np.linspace(0.45, 0.55, 500))
    theta_weights: tuple[float, ...] | None = None
    rho_weights: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.n_grains < 1:
            raise ValueError("n_grains must be >= 1")
        if len(self.alpha) != 2:
            raise ValueError("the granular model has exactly two classes")
        object.__setattr__(self, "theta_grid", tuple(float(t) for t in self.theta_grid))
        object.__setattr__(self, "rho_grid", tuple(float(r) for r in self.rho_grid))
        if not self.theta_grid or not self.rho_grid:
            raise ValueError("parameter grids must be nonempty")
        if min(self.rho_grid) < 0 or max(self.rho_grid) > 1:
            raise ValueError("rho grid must lie in [0, 1]")
        for t in self.theta_grid:
            self.betas(t)
        for name, grid in (("theta_weights", self.theta_grid), ("rho_weights", self.rho_grid)):
            w = getattr(self, name)
            if w is None:
                w = np.full(len(grid), 1.0 / len(grid))
            w = np.asarray(w, dtype=float)
            if w.shape != (len(grid),) or np.any(w < 0) or abs(w.sum() - 1) > 1e-9:
                raise ValueError(f"{name} must be a probability vector matching its grid")
            object.__setattr__(self, name, tuple(w.tolist()))

    def betas(self, theta: float) -> tuple[float, float]:
        b = (float(theta), self.beta_total - float(theta))
        if min(b) <= 0:
            raise ValueError(f"theta={theta} gives a nonpositive gamma scale")
        return b

    def proportion(self, rho, y: int):
        """Triangle proportion of class ``y`` (1-based)."""
        return rho if y == 1 else 1.0 - np.asarray(rho)

    def sizing(self, y: int, theta: float) -> SizingModel:
        return SizingModel(tuple(self.alpha[y - 1]), self.betas(theta)[y - 1])

    def law(self, y: int, rho, theta) -> AsymptoticLaw:
        beta = theta if y == 1 else self.beta_total - np.asarray(theta)
        return asymptotic_law(self.proportion(rho, y), self.alpha[y - 1], beta, self.n_grains)


def gaussian_logpdf(x, mean, cov) -> np.ndarray:
    """Multivariate normal log density, broadcasting over leading axes.

    Raises ``ValueError`` if a covariance is not positive definite.
    """
    x = np.asarray(x, dtype=float)
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise ValueError("covariance is not positive definite") from None
    diff = x - mean
    sol = np.linalg.solve(chol, diff[..., None])[..., 0]
    d = diff.shape[-1]
    logdet = 2 * np.log(np.diagonal(chol, axis1=-2, axis2=-1)).sum(axis=-1)
    return -0.5 * ((sol ** 2).sum(axis=-1) + logdet + d * _LOG2PI)


def granular_log_likelihood(features, y: int, rho: float, theta: float,
                            config: GranularConfig) -> float:
    """``log f(S_y | y, rho, theta)``: summed Gaussian log densities of class-``y`` images."""
    feats = [f.x if hasattr(f, "x") else np.asarray(f, dtype=float) for f in features]
    if not feats:
        return 0.0
    law = config.law(y, rho, theta)
    return float(gaussian_logpdf(np.array(feats), law.mean, law.cov).sum())


class GranularModel:
    """Effective likelihood of the granular model, for use with the label posterior.

    ``log_label_weights(points, labels)`` returns
    ``log sum_theta sum_rho pi(theta) f(rho) prod_i f(x_i | phi_i, rho, theta)``
    for every label function row. Laws over the grids are computed once.
    """

    n_labels = 2

    def __init__(self, config: GranularConfig | None = None):
        self.config = config or GranularConfig()

    @cached_property
    def _laws(self):
        cfg = self.config
        theta = np.asarray(cfg.theta_grid)[:, None]
        rho = np.asarray(cfg.rho_grid)[None, :]
        means, chols = [], []
        for y in (1, 2):
            law = cfg.law(y, rho, theta)
            try:
                chols.append(np.linalg.cholesky(law.cov))
            except np.linalg.LinAlgError:
                raise ValueError(f"class {y} covariance is not positive definite") from None
            means.append(law.mean)
        mean = np.stack(means, axis=2)                     # (T, R, 2, 4)
        chol = np.stack(chols, axis=2)                     # (T, R, 2, 4, 4)
        logdet = 2 * np.log(np.diagonal(chol, axis1=-2, axis2=-1)).sum(axis=-1)
        prior = (np.log(np.asarray(cfg.theta_weights))[:, None]
                 + np.log(np.asarray(cfg.rho_weights))[None, :])
        return mean, chol, logdet, prior

    def image_log_densities(self, points) -> np.ndarray:
        """``L[t, r, y, i] = log f(x_i | class y+1, rho_r, theta_t)``."""
        x = as_points(points)
        if x.shape[1] != 4:
            raise ValueError(f"granular features are 4-dimensional, got {x.shape[1]}")
        mean, chol, logdet, _ = self._laws
        diff = x[None, None, None, :, :] - mean[..., None, :]          # (T, R, 2, n, 4)
        inv = np.linalg.inv(chol)                                       # (T, R, 2, 4, 4)
        sol = np.einsum("trypq,tryiq->tryip", inv, diff)
        return -0.5 * ((sol ** 2).sum(axis=-1) + logdet[..., None] + 4 * _LOG2PI)

    def log_label_weights(self, points, labels) -> np.ndarray:
        labels = np.atleast_2d(np.asarray(labels, dtype=np.int64))
        if labels.min() < 1 or labels.max() > 2:
            raise ValueError("granular labels must be 1 or 2")
        L = self.image_log_densities(points)
        onehot = np.eye(2)[labels - 1]                                  # (K, n, 2)
        total = np.einsum("kiy,tryi->ktr", onehot, L)
        prior = self._laws[3]
        return logsumexp(total + prior[None], axis=(1, 2))

    log_likelihood = log_label_weights

    def sample(self, sizes: Sequence[int], rng: np.random.Generator, mode: str = "analytic",
               **render):
        """Draw ``theta`` and ``rho`` from their grid priors, then image features."""
        cfg = self.config
        t = int(rng.choice(len(cfg.theta_grid), p=np.asarray(cfg.theta_weights)))
        r = int(rng.choice(len(cfg.rho_grid), p=np.asarray(cfg.rho_weights)))
        labels = _sample_labels(sizes, 2, rng)
        theta, rho = cfg.theta_grid[t], cfg.rho_grid[r]
        feats = np.array([simulate_image_features(cfg, int(y), rho, theta, rng, mode, **render).x
                          for y in labels])
        return feats, labels, {"theta": theta, "rho": rho, "theta_index": t, "rho_index": r}


def simulate_image_features(config: GranularConfig, y: int, rho: float, theta: float, rng,
                            mode: str = "analytic", radius_unit: float = 10.0,
                            min_radius: float = 8.0, width: int | None = None,
                            height: int | None = None):
    """Features of one simulated class-``y`` image.

    ``mode="analytic"`` computes features from the radii directly;
    ``mode="rendered"`` places the grains in a binary image and measures its
    pattern spectra. Rendered frames default to a square whose area is four
    times the expected grain area.
    """
    sizing = config.sizing(y, theta)
    b1 = float(config.proportion(rho, y))
    if mode == "analytic":
        return exact_features_from_radii(simulate_radii(sizing, b1, config.n_grains, rng))
    if mode != "rendered":
        raise ValueError(f"unknown image mode {mode!r}")
    if width is None or height is None:
        mean_r2 = max(a * (a + 1) for a in sizing.alpha) * sizing.beta ** 2
        side = int(np.ceil(np.sqrt(4 * config.n_grains * mean_r2) * radius_unit))
        width, height = width or side, height or side
    scene = sample_scene(config.n_grains, b1, sizing, width, height, seed=rng,
                         min_radius=min_radius, radius_unit=radius_unit)
    return features_from_image(render_scene(scene), radius_unit=radius_unit)


def granular_posterior(features, prior: LabelPrior,
                       config: GranularConfig | None = None) -> dict[tuple[int, ...], float]:
    """Posterior over label functions of a set of images, normalized."""
    feats = np.array([f.x if hasattr(f, "x") else np.asarray(f, dtype=float) for f in features])
    return posterior_label_probs(feats, prior, GranularModel(config))
