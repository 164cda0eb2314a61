"""Granulometric moment features and their large-sample Gaussian law.

Feature order is ``x = (x_11, x_21, x_12, x_22)`` with
``x_ik = sum_j r_ij**(k+2) / sum_all r**2``: primitive ``i`` (1 triangle,
2 rod), moment order ``k``. The raw moments are
``z = (mu1(I,B1), mu1(I,B2), mu2(I,B1), mu2(I,B2))`` for the vertical (B1)
and horizontal (B2) line, and ``z = M x``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import poch

from .morphology import opening_area_sweep, pattern_spectrum_moments
from .scene import PRIMITIVES, SizingModel

__all__ = ["DIRECTIONS", "primitive_constants", "moment_matrix", "gamma_ratios", "FeatureVector",
           "exact_features_from_radii", "granulometric_moment", "features_from_image",
           "AsymptoticLaw", "asymptotic_law", "simulate_radii"]

DIRECTIONS = ("vertical", "horizontal")


def primitive_constants() -> dict[tuple[int, str, str], float]:
    """Moments ``mu^(k)(A_i, B_j)`` of the unit-area primitives.

    Keys are ``(k, primitive, direction)``. A unit-area primitive's vertical
    (horizontal) chords all have the shape's height (width) in expectation
    over its area, which gives these closed forms.
    """
    return {
        (1, "triangle", "vertical"): 2 * 3 ** -0.75,
        (2, "triangle", "vertical"): 3 ** 0.5 / 2,
        (1, "triangle", "horizontal"): 4 * 3 ** -1.25,
        (2, "triangle", "horizontal"): 2 * 3 ** -0.5,
        (1, "rod", "vertical"): 5 ** 0.5,
        (2, "rod", "vertical"): 5.0,
        (1, "rod", "horizontal"): 5 ** -0.5,
        (2, "rod", "horizontal"): 0.2,
    }


def moment_matrix() -> np.ndarray:
    """The fixed 4x4 block-diagonal map with ``z = M x``."""
    c = primitive_constants()
    m = np.zeros((4, 4))
    for k in (1, 2):
        for j, direction in enumerate(DIRECTIONS):
            for i, prim in enumerate(PRIMITIVES):
                m[2 * (k - 1) + j, 2 * (k - 1) + i] = c[(k, prim, direction)]
    return m


def gamma_ratios(alpha: float, max_order: int = 8) -> np.ndarray:
    """``gamma_k = Gamma(alpha + k) / Gamma(alpha)`` for ``k = 0..max_order``."""
    if not alpha > 0:
        raise ValueError("gamma shape must be positive")
    return poch(alpha, np.arange(max_order + 1))


@dataclass(frozen=True)
class FeatureVector:
    x: np.ndarray
    z: np.ndarray | None = None


def _radii(radii) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(radii, dict):
        radii = [radii.get(p, ()) for p in PRIMITIVES]
    tri, rod = (np.asarray(r, dtype=float).ravel() for r in radii)
    if tri.size + rod.size == 0:
        raise ValueError("need at least one grain")
    if np.any(tri <= 0) or np.any(rod <= 0):
        raise ValueError("radii must be positive")
    return tri, rod


def exact_features_from_radii(radii) -> FeatureVector:
    """Features of a scene computed from its grain radii alone.

    Parameters
    ----------
    radii : dict or pair
        Triangle and rod radii, either ``{"triangle": ..., "rod": ...}`` or a
        ``(triangle_radii, rod_radii)`` pair.
    """
    tri, rod = _radii(radii)
    area = (tri ** 2).sum() + (rod ** 2).sum()
    x = np.array([(tri ** 3).sum(), (rod ** 3).sum(), (tri ** 4).sum(), (rod ** 4).sum()]) / area
    return FeatureVector(x, moment_matrix() @ x)


def granulometric_moment(radii, k: int, direction: str) -> float:
    """Scene moment under one line direction, as a ratio of grain sums.

    Computed grain by grain rather than through ``M``; used to cross-check
    the matrix form.
    """
    tri, rod = _radii(radii)
    c = primitive_constants()
    u = v = 0.0
    for prim, rs in zip(PRIMITIVES, (tri, rod)):
        for r in rs:
            u += c[(k, prim, direction)] * r ** (k + 2)
            v += r ** 2
    return u / v


def features_from_image(img: np.ndarray, radius_unit: float = 1.0,
                        t_max: int | None = None) -> FeatureVector:
    """Features from the pattern spectra of a binary image.

    Pixel moments are divided by ``radius_unit`` (first order) and its
    square (second order) so that ``x`` is in model units.
    """
    img = np.asarray(img, dtype=bool)
    if not img.any():
        raise ValueError("image has no foreground")
    z = np.empty(4)
    for j, direction in enumerate(DIRECTIONS):
        span = img.shape[0] if direction == "vertical" else img.shape[1]
        omega = opening_area_sweep(img, direction, t_max if t_max is not None else span)
        z[[j, 2 + j]] = pattern_spectrum_moments(omega, (1, 2))
    z = z / np.array([radius_unit, radius_unit, radius_unit ** 2, radius_unit ** 2])
    return FeatureVector(np.linalg.solve(moment_matrix(), z), z)


@dataclass(frozen=True)
class AsymptoticLaw:
    mean: np.ndarray
    cov: np.ndarray


def asymptotic_law(b1, alpha, beta, n_grains: int) -> AsymptoticLaw:
    """Large-sample Gaussian law of ``x`` for a gamma-sized scene.

    Parameters
    ----------
    b1 : float or array
        Triangle proportion; rods make up ``1 - b1``.
    alpha : pair of float
        Gamma shapes for triangle and rod radii.
    beta : float or array
        Common gamma scale. ``b1`` and ``beta`` broadcast together.
    n_grains : int
        Total grain count ``N``.

    Returns
    -------
    AsymptoticLaw
        ``mean`` of shape ``(..., 4)`` and ``cov`` of shape ``(..., 4, 4)``.
    """
    b1 = np.asarray(b1, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if np.any(b1 < 0) or np.any(b1 > 1):
        raise ValueError("proportions must lie in [0, 1]")
    if np.any(beta <= 0):
        raise ValueError("gamma scale must be positive")
    if n_grains < 1:
        raise ValueError("need at least one grain")
    b1, beta = np.broadcast_arrays(b1, beta)
    b = np.stack([b1, 1.0 - b1], axis=-1)                  # (..., 2)
    g = np.stack([gamma_ratios(a) for a in alpha])        # (2, 9)
    D = b @ g[:, 2]                                       # (...)

    mean = np.stack([b[..., 0] * g[0, 3] * beta, b[..., 1] * g[1, 3] * beta,
                     b[..., 0] * g[0, 4] * beta ** 2, b[..., 1] * g[1, 4] * beta ** 2],
                    axis=-1) / D[..., None]

    # C[i, j, k] over moment indices i, j in {0, 1, 2} (0 is the area term)
    orders = np.arange(3)
    C = g[:, orders[:, None] + orders[None, :] + 4] - g[:, orders[:, None] + 2] * g[:, orders[None, :] + 2]
    C = np.moveaxis(C, 0, -1)                             # (3, 3, primitive)
    cov = np.zeros(b.shape[:-1] + (4, 4))
    for i in (1, 2):
        for j in (1, 2):
            # B[k, l, p]
            B = (C[0, 0][None, None, :] * g[:, i + 2][:, None, None] * g[:, j + 2][None, :, None]
                 - g[:, 2][None, None, :] * g[:, i + 2][:, None, None] * C[0, j][None, :, None]
                 - g[:, 2][None, None, :] * C[i, 0][:, None, None] * g[:, j + 2][None, :, None])
            A = np.einsum("...k,...l,...p,klp->...kl", b, b, b, B)
            diag = b * (D ** 2)[..., None] * C[i, j]
            A = A + diag[..., :, None] * np.eye(2)
            block = A * (beta ** (i + j))[..., None, None]
            cov[..., 2 * (i - 1):2 * i, 2 * (j - 1):2 * j] = block
    cov = cov / (n_grains * D[..., None, None] ** 4)
    return AsymptoticLaw(mean, cov)


def simulate_radii(sizing: SizingModel, b1: float, n_grains: int, rng,
                   ) -> tuple[np.ndarray, np.ndarray]:
    """Draw triangle and rod radii for one scene (no rasterization)."""
    n_tri = int(round(b1 * n_grains))
    tri = rng.gamma(sizing.alpha[0], sizing.beta, size=n_tri)
    rod = rng.gamma(sizing.alpha[1], sizing.beta, size=n_grains - n_tri)
    return tri, rod
