"""Seeded synthetic wind deviations for out-of-sample protocols.

Every test family shares the training mean and has mean absolute deviation
no larger than the training value, so each lies inside the mean-MAD set
built from the training moments.
"""
from __future__ import annotations

import numpy as np

from .uncertainty import ScenarioSet


def uniform_training(S: int, half_width: float = 40.0, K: int = 1, seed: int = 0) -> ScenarioSet:
    rng = np.random.default_rng(seed)
    return ScenarioSet(rng.uniform(-half_width, half_width, size=(S, K)))


def uniform_family(mu, sigma, S: int, seed: int) -> ScenarioSet:
    """Uniform on ``mu +- 2 sigma`` (its MAD equals ``sigma``)."""
    mu, sigma = np.asarray(mu, float), np.asarray(sigma, float)
    rng = np.random.default_rng(seed)
    return ScenarioSet(mu + rng.uniform(-2.0, 2.0, size=(S, mu.size)) * sigma)


def two_point_family(mu, sigma, S: int, seed: int) -> ScenarioSet:
    """Equal mass at ``mu +- sigma`` per coordinate."""
    mu, sigma = np.asarray(mu, float), np.asarray(sigma, float)
    rng = np.random.default_rng(seed)
    signs = rng.choice([-1.0, 1.0], size=(S, mu.size))
    return ScenarioSet(mu + signs * sigma)


def three_point_family(mu, sigma, reach, S: int, seed: int) -> ScenarioSet:
    """Mass ``sigma / (2 reach)`` at each of ``mu +- reach``, the rest at ``mu``.

    This is the extremal shape the mean-MAD worst case concentrates on; it
    puts more weight in the tails than the training data for ``reach``
    near the support edge.
    """
    mu, sigma = np.asarray(mu, float), np.asarray(sigma, float)
    reach = np.broadcast_to(np.asarray(reach, float), mu.shape)
    q = sigma / (2.0 * reach)
    if np.any(2 * q > 1):
        raise ValueError("reach must be at least sigma / 2")
    rng = np.random.default_rng(seed)
    u = rng.uniform(size=(S, mu.size))
    step = np.where(u < q, -1.0, np.where(u < 2 * q, 1.0, 0.0))
    return ScenarioSet(mu + step * reach)


def bimodal_training(S: int, centers=(-30.0, 25.0), spread: float = 5.0, weights=(0.5, 0.5), seed: int = 0) -> ScenarioSet:
    """K=1 draws from an equal-width two-bump uniform mixture."""
    rng = np.random.default_rng(seed)
    which = rng.choice(len(centers), size=S, p=np.asarray(weights) / np.sum(weights))
    draws = np.asarray(centers)[which] + rng.uniform(-spread, spread, size=S)
    return ScenarioSet(draws[:, None])


PROTOCOL_FAMILIES = ("uniform", "two_point", "three_point")


def protocol_family(name: str, mu, sigma, S: int, seed: int, reach=None) -> ScenarioSet:
    if name == "uniform":
        return uniform_family(mu, sigma, S, seed)
    if name == "two_point":
        return two_point_family(mu, sigma, S, seed)
    if name == "three_point":
        return three_point_family(mu, sigma, reach, S, seed)
    raise ValueError(f"unknown test family {name!r}")


def edge_family(support, S: int, seed: int, reach: float = 0.97) -> ScenarioSet:
    """Equal mass near the two ends of a box support (a dispersion-shifted test set)."""
    lo, hi = support.box_bounds()
    rng = np.random.default_rng(seed)
    upper = rng.uniform(size=(S, lo.size)) < 0.5
    return ScenarioSet(np.where(upper, reach * hi, reach * lo))
