"""Wind scenarios, support polytopes, moment statistics and ambiguity sets.

All user-facing uncertainty quantities are in MW of net injection
deviation, one coordinate per wind farm. Formulation builders convert to
per-unit on the case base themselves.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.cluster.vq import ClusterError, kmeans2
from scipy.optimize import linprog

from .errors import (
    DegenerateCoordinate,
    DimensionMismatch,
    EmptyCluster,
    EmptyFile,
    MalformedDocument,
    MeanOutsideSupport,
    NonNumericCell,
    RaggedRows,
)

SCENARIO_SCHEMA_VERSION = "1.0"
AMBIGUITY_SCHEMA_VERSION = "1.0"


@dataclass(frozen=True)
class ScenarioSet:
    """``S`` samples of a ``K``-dimensional deviation, stored as an ``S x K`` array."""

    samples: np.ndarray

    def __post_init__(self):
        arr = np.atleast_2d(np.asarray(self.samples, dtype=float))
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise EmptyFile("scenario set must hold at least one sample")
        if not np.all(np.isfinite(arr)):
            raise NonNumericCell("scenario set contains non-finite values")
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)

    @property
    def S(self) -> int:
        return self.samples.shape[0]

    @property
    def K(self) -> int:
        return self.samples.shape[1]

    def scaled(self, factor: float) -> ScenarioSet:
        return ScenarioSet(self.samples * factor)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow([f"xi_{k + 1}" for k in range(self.K)])
        for row in self.samples:
            writer.writerow([repr(float(v)) for v in row])
        return buf.getvalue()


@dataclass(frozen=True)
class Polytope:
    """The set ``{xi : U xi <= t}``."""

    U: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        U = np.atleast_2d(np.asarray(self.U, dtype=float))
        t = np.asarray(self.t, dtype=float).ravel()
        if U.shape[0] != t.size:
            raise DimensionMismatch("polytope U and t disagree on row count")
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "t", t)

    @classmethod
    def box(cls, lower, upper) -> Polytope:
        lower = np.asarray(lower, dtype=float).ravel()
        upper = np.asarray(upper, dtype=float).ravel()
        K = lower.size
        return cls(np.vstack([np.eye(K), -np.eye(K)]), np.concatenate([upper, -lower]))

    @property
    def K(self) -> int:
        return self.U.shape[1]

    @property
    def W(self) -> int:
        return self.U.shape[0]

    def box_bounds(self):
        """``(lower, upper)`` when the polytope is an axis-aligned box, else ``None``."""
        K = self.K
        if self.W != 2 * K:
            return None
        if not (np.array_equal(self.U[:K], np.eye(K)) and np.array_equal(self.U[K:], -np.eye(K))):
            return None
        return -self.t[K:], self.t[:K]

    def is_box(self) -> bool:
        return self.box_bounds() is not None

    def contains(self, xi, tol: float = 0.0) -> bool:
        return bool(np.all(self.U @ np.asarray(xi, dtype=float) <= self.t + tol))

    def interior_margin(self, xi) -> float:
        """Smallest normalized slack of ``xi`` across the facets (positive when strictly inside)."""
        norms = np.linalg.norm(self.U, axis=1)
        return float(np.min((self.t - self.U @ np.asarray(xi, dtype=float)) / norms))

    def support_value(self, a) -> float:
        """``max a.xi`` over the polytope."""
        a = np.asarray(a, dtype=float)
        bb = self.box_bounds()
        if bb is not None:
            lo, hi = bb
            return float(np.sum(np.where(a >= 0, a * hi, a * lo)))
        res = linprog(-a, A_ub=self.U, b_ub=self.t, bounds=[(None, None)] * self.K, method="highs")
        if res.status == 3:
            return math.inf
        return float(-res.fun)

    def coordinate_bounds(self):
        lo = np.array([-self.support_value(-e) for e in np.eye(self.K)])
        hi = np.array([self.support_value(e) for e in np.eye(self.K)])
        return lo, hi

    def chebyshev_radius(self) -> float:
        """Radius of the largest inscribed ball; positive iff full-dimensional."""
        norms = np.linalg.norm(self.U, axis=1)
        c = np.zeros(self.K + 1)
        c[-1] = -1.0
        A = np.hstack([self.U, norms[:, None]])
        res = linprog(c, A_ub=A, b_ub=self.t, bounds=[(None, None)] * self.K + [(0, None)], method="highs")
        if res.status == 3:
            return math.inf
        if res.status != 0:
            return 0.0
        return float(res.x[-1])

    def vertices(self) -> np.ndarray:
        """Vertices of a box support (``2**K`` rows)."""
        bb = self.box_bounds()
        if bb is None:
            raise NotImplementedError("vertex enumeration is only provided for boxes")
        lo, hi = bb
        grid = np.array(np.meshgrid(*[[l, h] for l, h in zip(lo, hi)], indexing="ij"))
        return grid.reshape(self.K, -1).T

    def scaled(self, factor: float) -> Polytope:
        return Polytope(self.U, self.t * factor)

    def to_dict(self) -> dict:
        bb = self.box_bounds()
        if bb is not None:
            return {"lower": bb[0].tolist(), "upper": bb[1].tolist()}
        return {"U": self.U.tolist(), "t": self.t.tolist()}

    @classmethod
    def from_dict(cls, doc: dict) -> Polytope:
        if "lower" in doc and "upper" in doc:
            return cls.box(doc["lower"], doc["upper"])
        if "U" in doc and "t" in doc:
            return cls(doc["U"], doc["t"])
        raise MalformedDocument("support needs lower/upper or U/t")


# Ambiguity descriptions ------------------------------------------------------


@dataclass(frozen=True)
class Empirical:
    scenarios: ScenarioSet
    kind: str = field(default="empirical", init=False)


@dataclass(frozen=True)
class Gaussian:
    mu: np.ndarray
    Sigma: np.ndarray
    kind: str = field(default="gaussian", init=False)

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float).ravel()
        S = np.atleast_2d(np.asarray(self.Sigma, dtype=float))
        if S.shape != (mu.size, mu.size):
            raise DimensionMismatch("covariance shape does not match the mean")
        if not np.allclose(S, S.T, atol=1e-12):
            raise MalformedDocument("covariance must be symmetric")
        if np.linalg.eigvalsh(S).min() < -1e-9 * max(1.0, np.abs(S).max()):
            raise MalformedDocument("covariance must be positive semidefinite")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "Sigma", S)


@dataclass(frozen=True)
class MeanMad:
    """Distributions on ``support`` with mean ``mu`` and ``E|xi - mu| <= sigma``."""

    mu: np.ndarray
    sigma: np.ndarray
    support: Polytope
    kind: str = field(default="mean_mad", init=False)

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float).ravel()
        sigma = np.asarray(self.sigma, dtype=float).ravel()
        if sigma.size != mu.size or self.support.K != mu.size:
            raise DimensionMismatch("mu, sigma and support dimensions differ")
        if np.any(sigma < 0):
            raise MalformedDocument("sigma must be nonnegative")
        if self.support.interior_margin(mu) <= 0:
            raise MeanOutsideSupport("mean must lie strictly inside the support")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)

    @property
    def K(self) -> int:
        return self.mu.size

    def scaled(self, factor: float) -> MeanMad:
        return MeanMad(self.mu * factor, self.sigma * factor, self.support.scaled(factor))


@dataclass(frozen=True)
class Wasserstein:
    delta: float
    scenarios: ScenarioSet
    support: Polytope | None = None
    kind: str = field(default="wasserstein", init=False)

    def __post_init__(self):
        if self.delta < 0:
            raise MalformedDocument("Wasserstein radius must be nonnegative")


@dataclass(frozen=True)
class MultiMad:
    """Mixture of ``m`` mean-MAD sets with weights ``p``."""

    p: np.ndarray
    modes: tuple[MeanMad, ...]
    kind: str = field(default="multi_mad", init=False)

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float).ravel()
        if p.size != len(self.modes) or p.size == 0:
            raise DimensionMismatch("one weight per mode required")
        if np.any(p <= 0) or abs(p.sum() - 1.0) > 1e-9:
            raise MalformedDocument("mode weights must be positive and sum to 1")
        if len({m.K for m in self.modes}) != 1:
            raise DimensionMismatch("modes disagree on K")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "modes", tuple(self.modes))

    @property
    def m(self) -> int:
        return len(self.modes)

    @property
    def K(self) -> int:
        return self.modes[0].K

    def mean(self) -> np.ndarray:
        return sum(pj * md.mu for pj, md in zip(self.p, self.modes))

    def scaled(self, factor: float) -> MultiMad:
        return MultiMad(self.p, tuple(md.scaled(factor) for md in self.modes))


# Operations -----------------------------------------------------------------


def parse_scenarios(text: str) -> ScenarioSet:
    """Parse the scenario CSV: header ``xi_1..xi_K`` and one sample per row."""
    rows = [r for r in csv.reader(io.StringIO(text)) if any(cell.strip() for cell in r)]
    if not rows:
        raise EmptyFile("scenario file is empty")
    header = [h.strip() for h in rows[0]]
    expected = [f"xi_{k + 1}" for k in range(len(header))]
    if header != expected:
        raise MalformedDocument(f"scenario header must be {','.join(expected)}, got {','.join(header)}")
    body = rows[1:]
    if not body:
        raise EmptyFile("scenario file has a header but no samples")
    K = len(header)
    data = np.empty((len(body), K))
    for i, row in enumerate(body):
        if len(row) != K:
            raise RaggedRows(f"row {i + 2} has {len(row)} cells, expected {K}")
        for k, cell in enumerate(row):
            try:
                value = float(cell)
            except ValueError:
                raise NonNumericCell(f"row {i + 2}, column {k + 1}: {cell!r}") from None
            if not math.isfinite(value):
                raise NonNumericCell(f"row {i + 2}, column {k + 1}: {cell!r}")
            data[i, k] = value
    return ScenarioSet(data)


def load_scenarios(path) -> ScenarioSet:
    return parse_scenarios(Path(path).read_text())


def box_support(s: ScenarioSet, margin: float = 0.0) -> Polytope:
    """Axis-aligned hull of the samples widened by ``margin`` times each coordinate's range."""
    if margin < 0:
        raise MalformedDocument("margin must be nonnegative")
    lo = s.samples.min(axis=0)
    hi = s.samples.max(axis=0)
    spread = hi - lo
    if np.any(spread <= 0):
        raise DegenerateCoordinate("a coordinate has zero spread; the box is not full-dimensional")
    return Polytope.box(lo - margin * spread, hi + margin * spread)


def moment_stats(s: ScenarioSet):
    """Sample mean and mean absolute deviation about it, per coordinate."""
    mu = s.samples.mean(axis=0)
    sigma = np.abs(s.samples - mu).mean(axis=0)
    return mu, sigma


def fit_gaussian(s: ScenarioSet):
    """Sample mean and unbiased covariance, regularized when near singular."""
    mu = s.samples.mean(axis=0)
    if s.S > 1:
        Sigma = np.atleast_2d(np.cov(s.samples, rowvar=False, ddof=1))
    else:
        Sigma = np.zeros((s.K, s.K))
    Sigma = 0.5 * (Sigma + Sigma.T)
    if np.linalg.eigvalsh(Sigma).min() < 1e-10:
        scale = np.trace(Sigma) / s.K
        Sigma = Sigma + 1e-8 * (scale if scale > 0 else 1.0) * np.eye(s.K)
    return mu, Sigma


def _mode_support(cluster: np.ndarray, pooled_spread: np.ndarray, margin: float) -> Polytope:
    lo, hi = cluster.min(axis=0), cluster.max(axis=0)
    spread = hi - lo
    # singleton or flat clusters still need a full-dimensional box around their mean
    pad = np.where(spread > 0, margin * spread, 0.0)
    pad = np.maximum(pad, np.where(spread > 0, 0.0, 1e-3 * np.maximum(pooled_spread, 1e-9)))
    return Polytope.box(lo - pad, hi + pad)


def partition_modes(
    s: ScenarioSet, m: int, seed: int = 0, margin: float = 0.05, max_retries: int = 10
) -> MultiMad:
    """Split the samples into ``m`` k-means clusters and fit a mean-MAD set to each.

    Each mode's support is the cluster box widened by ``margin``.
    """
    if m < 1 or m > s.S:
        raise MalformedDocument(f"mode count must lie in [1, {s.S}], got {m}")
    pooled_spread = s.samples.max(axis=0) - s.samples.min(axis=0)
    if m == 1:
        labels = np.zeros(s.S, dtype=int)
    else:
        rng = np.random.default_rng(seed)
        labels = None
        for _ in range(max_retries):
            try:
                _, labels = kmeans2(s.samples, m, minit="++", missing="raise", seed=rng)
            except ClusterError:
                labels = None
                continue
            if np.bincount(labels, minlength=m).min() > 0:
                break
            labels = None
        if labels is None:
            raise EmptyCluster(f"k-means left a cluster empty after {max_retries} seeds")
    # order modes by their first-coordinate mean so the output is label-permutation free
    clusters = [s.samples[labels == j] for j in range(m)]
    clusters.sort(key=lambda c: tuple(c.mean(axis=0)))
    p, modes = [], []
    for c in clusters:
        mu, sigma = moment_stats(ScenarioSet(c))
        p.append(c.shape[0] / s.S)
        modes.append(MeanMad(mu, sigma, _mode_support(c, pooled_spread, margin)))
    return MultiMad(np.array(p), tuple(modes))


def placement_matrix(case, buses) -> np.ndarray:
    """``F`` (N x K): column ``k`` is the unit vector of the bus hosting source ``k``."""
    idx = case.bus_index()
    F = np.zeros((case.n_bus, len(buses)))
    for k, bus in enumerate(buses):
        if bus not in idx:
            raise DimensionMismatch(f"uncertainty source at unknown bus {bus}")
        F[idx[bus], k] = 1.0
    return F


# Sidecar ---------------------------------------------------------------------


def ambiguity_to_dict(spec) -> dict:
    doc = {"schema_version": AMBIGUITY_SCHEMA_VERSION, "type": spec.kind}
    if isinstance(spec, MeanMad):
        doc.update(mu=spec.mu.tolist(), sigma=spec.sigma.tolist(), support=spec.support.to_dict())
    elif isinstance(spec, Gaussian):
        doc.update(mu=spec.mu.tolist(), Sigma=spec.Sigma.tolist())
    elif isinstance(spec, MultiMad):
        doc["modes"] = [
            {"p": float(pj), "mu": md.mu.tolist(), "sigma": md.sigma.tolist(), "support": md.support.to_dict()}
            for pj, md in zip(spec.p, spec.modes)
        ]
    else:
        raise MalformedDocument(f"{spec.kind} ambiguity is sample based and has no sidecar form")
    return doc


def parse_ambiguity(document) -> MeanMad | Gaussian | MultiMad:
    """Read an ``ambiguity.json`` sidecar (dict, JSON text or path)."""
    if isinstance(document, (str, Path)) and not str(document).lstrip().startswith("{"):
        document = Path(document).read_text()
    if isinstance(document, str):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise MalformedDocument(f"ambiguity sidecar is not JSON: {exc}") from None
    try:
        kind = document["type"]
        if kind == "mean_mad":
            return MeanMad(document["mu"], document["sigma"], Polytope.from_dict(document["support"]))
        if kind == "gaussian":
            return Gaussian(document["mu"], document["Sigma"])
        if kind == "multi_mad":
            modes = document["modes"]
            return MultiMad(
                np.array([md["p"] for md in modes]),
                tuple(MeanMad(md["mu"], md["sigma"], Polytope.from_dict(md["support"])) for md in modes),
            )
    except (KeyError, TypeError) as exc:
        raise MalformedDocument(f"ambiguity sidecar missing field {exc}") from None
    raise MalformedDocument(f"unknown ambiguity type {kind!r}")
