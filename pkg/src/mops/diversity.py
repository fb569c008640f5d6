"""Semantic diversity metrics: breadth and density of a projected corpus.

Premises are embedded, reduced to 2D, and scored two ways: breadth is the
area of the convex hull of the projected points; density is the population
standard deviation of per-bin point counts over the grid bins whose centers
fall inside the hull (lower means more uniform coverage).
"""

from __future__ import annotations

import inspect
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from sklearn.manifold import TSNE

from .dedup import EmbeddingProvider

log = logging.getLogger(__name__)

__all__ = [
    "DiversityError",
    "DegenerateHullError",
    "ProjectionError",
    "Hull",
    "convex_hull",
    "polygon_area",
    "breadth_score",
    "GridSpec",
    "bin_counts",
    "bins_in_hull",
    "density_score",
    "density_stats",
    "project_2d",
    "DiversityReport",
    "diversity_report",
]

_TSNE_ITER_KW = "max_iter" if "max_iter" in inspect.signature(TSNE.__init__).parameters else "n_iter"


class DiversityError(Exception):
    """Base class for diversity-metric failures."""


class DegenerateHullError(DiversityError):
    """Points are collinear/coincident; no 2D hull exists."""


class ProjectionError(DiversityError):
    """Too few points for the projection, or non-finite output."""


@dataclass(frozen=True)
class Hull:
    """Convex hull vertices in counter-clockwise order."""

    vertices: np.ndarray
    degenerate: bool

    def contains(self, x: float, y: float, tol: float = 1e-9) -> bool:
        """True if (x, y) is inside or on the hull boundary."""
        if self.degenerate:
            return False
        v = self.vertices
        scale = max(1.0, float(np.abs(v).max()))
        eps = tol * scale
        for i in range(len(v)):
            ox, oy = v[i]
            ax, ay = v[(i + 1) % len(v)]
            if (ax - ox) * (y - oy) - (ay - oy) * (x - ox) < -eps:
                return False
        return True


def _as_points(points: Sequence) -> np.ndarray:
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"expected an (n, 2) point array, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError("points contain non-finite coordinates")
    return arr


def convex_hull(points: Sequence) -> Hull:
    """Monotone-chain convex hull; degenerate inputs get a zero-area flag."""
    arr = _as_points(points)
    unique = sorted({(float(x), float(y)) for x, y in arr})
    if len(unique) < 3:
        return Hull(np.asarray(unique, dtype=np.float64).reshape(-1, 2), degenerate=True)

    def cross(o: tuple, a: tuple, b: tuple) -> float:
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list[tuple] = []
    for p in unique:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list[tuple] = []
    for p in reversed(unique):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    hull = lower[:-1] + upper[:-1]
    if len(hull) < 3:
        return Hull(np.asarray(hull, dtype=np.float64), degenerate=True)
    return Hull(np.asarray(hull, dtype=np.float64), degenerate=False)


def polygon_area(vertices: np.ndarray) -> float:
    """Shoelace area of a simple polygon given ordered vertices."""
    v = np.asarray(vertices, dtype=np.float64)
    if len(v) < 3:
        return 0.0
    x, y = v[:, 0], v[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y)))


def breadth_score(points: Sequence) -> float:
    """Convex-hull area of the projected points; 0 (with a warning) if degenerate."""
    hull = convex_hull(points)
    if hull.degenerate:
        log.warning("breadth is 0: projected points are degenerate (collinear or coincident)")
        return 0.0
    return polygon_area(hull.vertices)


@dataclass(frozen=True)
class GridSpec:
    """M x M histogram grid over a tight bounding box.

    Bins are half-open with the top/right edges closed, so every point in
    the box lands in exactly one bin.
    """

    m: int
    xmin: float
    xmax: float
    ymin: float
    ymax: float

    @classmethod
    def from_points(cls, points: Sequence, m: int) -> "GridSpec":
        if m < 2:
            raise ValueError(f"grid needs m >= 2, got {m}")
        arr = _as_points(points)
        return cls(
            m=m,
            xmin=float(arr[:, 0].min()),
            xmax=float(arr[:, 0].max()),
            ymin=float(arr[:, 1].min()),
            ymax=float(arr[:, 1].max()),
        )

    def _axis_bin(self, value: float, lo: float, hi: float) -> int:
        if hi <= lo:
            return 0
        idx = int((value - lo) / (hi - lo) * self.m)
        return min(max(idx, 0), self.m - 1)

    def bin_of(self, x: float, y: float) -> tuple[int, int]:
        return self._axis_bin(x, self.xmin, self.xmax), self._axis_bin(y, self.ymin, self.ymax)

    def center_of(self, i: int, j: int) -> tuple[float, float]:
        return (
            self.xmin + (i + 0.5) * (self.xmax - self.xmin) / self.m,
            self.ymin + (j + 0.5) * (self.ymax - self.ymin) / self.m,
        )

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "bounds": [self.xmin, self.xmax, self.ymin, self.ymax],
        }


def bin_counts(points: Sequence, grid: GridSpec) -> np.ndarray:
    """Point count per bin, indexed [x_bin, y_bin]; counts always sum to n."""
    arr = _as_points(points)
    counts = np.zeros((grid.m, grid.m), dtype=np.int64)
    for x, y in arr:
        i, j = grid.bin_of(float(x), float(y))
        counts[i, j] += 1
    return counts


def bins_in_hull(grid: GridSpec, hull: Hull) -> np.ndarray:
    """Boolean mask of bins whose center lies inside or on the hull."""
    mask = np.zeros((grid.m, grid.m), dtype=bool)
    for i in range(grid.m):
        for j in range(grid.m):
            cx, cy = grid.center_of(i, j)
            mask[i, j] = hull.contains(cx, cy)
    return mask


def density_stats(points: Sequence, m: int = 10) -> tuple[Hull, GridSpec, np.ndarray, np.ndarray, float]:
    """Shared histogram machinery: hull, grid, counts, in-hull mask, density."""
    hull = convex_hull(points)
    if hull.degenerate:
        raise DegenerateHullError("density is undefined for a degenerate hull")
    grid = GridSpec.from_points(points, m)
    counts = bin_counts(points, grid)
    mask = bins_in_hull(grid, hull)
    if not mask.any():
        raise DegenerateHullError("no grid bin center falls inside the hull")
    density = float(np.std(counts[mask]))
    return hull, grid, counts, mask, density


def density_score(points: Sequence, m: int = 10) -> float:
    """Population std of in-hull bin counts; 0 means perfectly uniform coverage."""
    return density_stats(points, m)[4]


def project_2d(
    vectors: Sequence,
    seed: int,
    perplexity: float = 30.0,
    iterations: int = 1000,
) -> np.ndarray:
    """t-SNE projection to 2D, deterministic for a fixed seed."""
    arr = np.asarray(vectors, dtype=np.float64)
    if arr.ndim != 2:
        raise ProjectionError(f"expected an (n, d) vector array, got shape {arr.shape}")
    n = arr.shape[0]
    needed = int(np.ceil(3 * perplexity + 1))
    if n < needed:
        raise ProjectionError(
            f"projection needs at least {needed} points for perplexity {perplexity}, got {n}"
        )
    tsne = TSNE(
        n_components=2,
        random_state=seed,
        perplexity=perplexity,
        init="pca",
        learning_rate="auto",
        **{_TSNE_ITER_KW: iterations},
    )
    coords = np.asarray(tsne.fit_transform(arr), dtype=np.float64)
    if not np.isfinite(coords).all():
        raise ProjectionError("projection produced non-finite coordinates")
    return coords


@dataclass
class DiversityReport:
    """Per-seed and seed-averaged breadth/density for one corpus."""

    corpus: str
    size: int
    m: int
    perplexity: float
    provider: str
    seeds: list[int]
    per_seed: list[dict]
    breadth: float
    density: float
    projections: dict[int, np.ndarray] = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        return {
            "corpus": self.corpus,
            "size": self.size,
            "grid_m": self.m,
            "perplexity": self.perplexity,
            "embedding_provider": self.provider,
            "seeds": list(self.seeds),
            "per_seed": [dict(row) for row in self.per_seed],
            "breadth": self.breadth,
            "density": self.density,
        }


def diversity_report(
    texts: Sequence[str],
    embedder: EmbeddingProvider,
    seeds: Sequence[int],
    m: int = 10,
    perplexity: float = 30.0,
    iterations: int = 1000,
    label: str = "corpus",
) -> DiversityReport:
    """Embed once, project per seed, average breadth and density across seeds."""
    if not seeds:
        raise ValueError("at least one projection seed is required")
    vectors = embedder.embed(texts)
    per_seed: list[dict] = []
    projections: dict[int, np.ndarray] = {}
    for seed in seeds:
        coords = project_2d(vectors, seed, perplexity, iterations)
        per_seed.append(
            {
                "seed": int(seed),
                "breadth": breadth_score(coords),
                "density": density_score(coords, m),
            }
        )
        projections[int(seed)] = coords
    return DiversityReport(
        corpus=label,
        size=len(texts),
        m=m,
        perplexity=perplexity,
        provider=embedder.name,
        seeds=[int(s) for s in seeds],
        per_seed=per_seed,
        breadth=float(np.mean([row["breadth"] for row in per_seed])),
        density=float(np.mean([row["density"] for row in per_seed])),
        projections=projections,
    )
