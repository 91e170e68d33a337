"""Finding a named functional part inside an observed partial cloud.

Every observed point seeds a candidate cluster (its k nearest neighbors,
with k scaled from the template's part-to-whole point ratio). Each cluster
is scored against each template part by three normalized dissimilarities:

* shape: distance between unit-normalized PCA spectra,
* dispersion: difference of normalized point-distance spreads around the
  seed (observed) and around the template part's center point (template),
* placement: difference of part-center offsets relative to the whole
  object, in units of the whole's half bounding-box diagonal.

The seed with the lowest mean combined score across templates wins.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from .errors import (
    DegenerateClusterError,
    DegenerateTemplateError,
    InsufficientPointsError,
    RecognitionFailureError,
    SchemaError,
)
from .geometry import (
    PointCloud,
    aabb,
    knn,
    knn_indices_batch,
    pca_singular_values,
    singular_values_batch,
)

if TYPE_CHECKING:
    from .templates import Template


def cluster_size_from_counts(n_obj_all: int, n_tpl_part: int, n_tpl_all: int) -> int:
    """Cluster size from raw point counts: round half up, clamp to [3, n_obj].

    Exact integer arithmetic; (2ab + c) // 2c == floor(ab/c + 1/2).
    """
    if n_tpl_all <= 0:
        raise DegenerateTemplateError("template whole cloud is empty")
    if n_tpl_part <= 0:
        raise DegenerateTemplateError("template part cloud is empty")
    if n_obj_all < 3:
        raise InsufficientPointsError(
            f"observed cloud has {n_obj_all} points, need >= 3"
        )
    k = (2 * n_obj_all * n_tpl_part + n_tpl_all) // (2 * n_tpl_all)
    return min(max(k, 3), n_obj_all)


def cluster_size(o_all: PointCloud, template: "Template", part_path: str) -> int:
    """Neighborhood size for clusters matched against one template part."""
    if part_path not in template.parts:
        raise SchemaError(
            f"template '{template.id}' has no part '{part_path}'"
        )
    return cluster_size_from_counts(
        len(o_all), len(template.parts[part_path]), len(template.full_cloud)
    )


def _normalized_sigma(cloud: PointCloud) -> np.ndarray:
    sigma = pca_singular_values(cloud)
    norm = np.linalg.norm(sigma)
    if norm <= 0:
        raise DegenerateClusterError("all points coincident, PCA spectrum is zero")
    return sigma / norm


def d_pca(o_part: PointCloud, m_part: PointCloud) -> float:
    """Shape dissimilarity: distance between unit-normalized PCA spectra."""
    return float(np.linalg.norm(_normalized_sigma(o_part) - _normalized_sigma(m_part)))


def part_reference_index(m_part: PointCloud) -> int:
    """Index of the part point nearest the part's own box center."""
    return knn(m_part, aabb(m_part).center, 1)[0]


def _spread(points: np.ndarray, reference: np.ndarray, exclude_mask) -> float:
    dists = np.linalg.norm(points - reference, axis=1)
    dists = dists[~exclude_mask]
    if len(dists) < 2:
        raise DegenerateClusterError("not enough points for a distance spread")
    dev = np.abs(dists - dists.mean())
    max_dev = dev.max()
    if max_dev <= 0:
        raise DegenerateClusterError("all points equidistant from the reference")
    return float(dists.std() / max_dev)


def d_ppd(o_part: PointCloud, seed, m_part: PointCloud) -> float:
    """Dispersion dissimilarity around seed (observed) vs center (template).

    Distances run from the reference to all *other* points: the seed's own
    entry is dropped by exact coordinate match here; the clustered path in
    `recognize` drops it by index (identical on duplicate-free clouds).
    """
    seed = np.asarray(seed, dtype=np.float64).reshape(3)
    o_self = np.all(o_part.points == seed, axis=1)
    ref_idx = part_reference_index(m_part)
    m_self = np.zeros(len(m_part), dtype=bool)
    m_self[ref_idx] = True
    s_o = _spread(o_part.points, seed, o_self)
    s_m = _spread(m_part.points, m_part.points[ref_idx], m_self)
    return abs(s_o - s_m)


def _center_ratio(whole: PointCloud, part: PointCloud) -> float:
    whole_box = aabb(whole)
    if whole_box.half_diagonal <= 0:
        raise DegenerateClusterError("whole cloud has zero bounding-box diagonal")
    offset = np.linalg.norm(aabb(part).center - whole_box.center)
    return float(offset / whole_box.half_diagonal)


def d_ccd(o_all: PointCloud, o_part: PointCloud, m_all: PointCloud, m_part: PointCloud) -> float:
    """Placement dissimilarity: relative part-center offsets within wholes.

    Built on axis-aligned boxes, so it is exactly invariant under
    translation, uniform scaling, and axis-permuting rotations, but not
    under arbitrary rotation of one cloud.
    """
    return abs(_center_ratio(o_all, o_part) - _center_ratio(m_all, m_part))


@dataclass(frozen=True)
class ClusterCandidate:
    """One seed's cluster with its scores against one template part."""

    seed_index: int
    members: np.ndarray
    d_pca: float
    d_ppd: float
    d_ccd: float

    @property
    def d(self) -> float:
        return self.d_pca + self.d_ppd + self.d_ccd


def score_cluster(
    o_all: PointCloud, seed_index: int, template: "Template", part_path: str
) -> ClusterCandidate:
    """Score one seed's cluster against one template part (reference path)."""
    k = cluster_size(o_all, template, part_path)
    members = np.asarray(knn(o_all, o_all.points[seed_index], k), dtype=np.intp)
    cluster = o_all.select(members)
    m_part = template.parts[part_path]
    return ClusterCandidate(
        seed_index=seed_index,
        members=members,
        d_pca=d_pca(cluster, m_part),
        d_ppd=d_ppd(cluster, o_all.points[seed_index], m_part),
        d_ccd=d_ccd(o_all, cluster, template.full_cloud, m_part),
    )


@dataclass
class RecognitionResult:
    """The winning cluster and its per-template scores."""

    part_cloud: PointCloud
    seed: np.ndarray
    seed_index: int
    members: np.ndarray
    part_path: str
    per_template_scores: dict[str, float]
    winning_template_for_cluster: str
    mean_score: float
    seed_scores: np.ndarray = field(repr=False, default=None)


@dataclass(frozen=True)
class _TemplateStats:
    template: "Template"
    k: int
    sigma_unit: np.ndarray
    spread: float
    center_ratio: float


def _template_stats(o_all: PointCloud, template: "Template", part_path: str) -> _TemplateStats:
    m_part = template.parts[part_path]
    m_all = template.full_cloud
    k = cluster_size(o_all, template, part_path)
    if len(m_part) < 3:
        raise DegenerateTemplateError(
            f"template '{template.id}' part '{part_path}' has {len(m_part)} points, need >= 3"
        )
    try:
        sigma_unit = _normalized_sigma(m_part)
        ref = part_reference_index(m_part)
        self_mask = np.zeros(len(m_part), dtype=bool)
        self_mask[ref] = True
        spread = _spread(m_part.points, m_part.points[ref], self_mask)
        ratio = _center_ratio(m_all, m_part)
    except DegenerateClusterError as exc:
        raise DegenerateTemplateError(
            f"template '{template.id}' part '{part_path}': {exc}"
        ) from exc
    return _TemplateStats(template, k, sigma_unit, spread, ratio)


def _score_all_seeds(o_all: PointCloud, stats: _TemplateStats) -> np.ndarray:
    """Combined score of every seed against one template, NaN = degenerate.

    Assumes a duplicate-free cloud (voxel downsampling guarantees it), so
    each seed appears exactly once in its own neighbor row.
    """
    n = len(o_all)
    k = stats.k
    idx = knn_indices_batch(o_all, o_all.points, k)
    member_pts = o_all.points[idx]

    sigma = singular_values_batch(member_pts)
    sig_norm = np.linalg.norm(sigma, axis=1)
    valid = sig_norm > 0
    sig_norm_safe = np.where(valid, sig_norm, 1.0)
    pca_scores = np.linalg.norm(
        sigma / sig_norm_safe[:, None] - stats.sigma_unit, axis=1
    )

    dists = np.linalg.norm(member_pts - o_all.points[:, None, :], axis=2)
    self_mask = idx == np.arange(n)[:, None]
    others = dists[~self_mask].reshape(n, k - 1)
    mean = others.mean(axis=1)
    std = others.std(axis=1)
    max_dev = np.abs(others - mean[:, None]).max(axis=1)
    spread_ok = max_dev > 0
    valid &= spread_ok
    spread = np.where(spread_ok, std / np.where(spread_ok, max_dev, 1.0), np.nan)
    ppd_scores = np.abs(spread - stats.spread)

    whole_box = aabb(o_all)
    if whole_box.half_diagonal <= 0:
        raise DegenerateClusterError("observed cloud has zero bounding-box diagonal")
    centers = 0.5 * (member_pts.min(axis=1) + member_pts.max(axis=1))
    ratios = np.linalg.norm(centers - whole_box.center, axis=1) / whole_box.half_diagonal
    ccd_scores = np.abs(ratios - stats.center_ratio)

    scores = pca_scores + ppd_scores + ccd_scores
    return np.where(valid, scores, np.nan)


def recognize(
    o_all: PointCloud, templates: list["Template"], part_path: str
) -> RecognitionResult:
    """Locate the part in the observed cloud by template cluster matching.

    Every observed point is a seed; the seed minimizing the mean combined
    score across templates wins (ties: smallest index). The returned
    cluster uses the neighborhood size of the template that scored best at
    the winning seed.
    """
    if len(o_all) < 3:
        raise InsufficientPointsError(
            f"observed cloud has {len(o_all)} points, need >= 3"
        )
    carriers = [t for t in templates if part_path in t.parts]
    if not carriers:
        raise SchemaError(f"no template carries part '{part_path}'")
    stats = [_template_stats(o_all, t, part_path) for t in carriers]
    score_matrix = np.stack([_score_all_seeds(o_all, s) for s in stats], axis=1)

    seed_scores = score_matrix.mean(axis=1)  # NaN if any template degenerate
    if np.all(np.isnan(seed_scores)):
        raise RecognitionFailureError("every seed produced a degenerate cluster")
    winner = int(np.argmin(np.where(np.isnan(seed_scores), np.inf, seed_scores)))

    row = score_matrix[winner]
    best_t = int(np.argmin(row))
    members = np.asarray(
        knn(o_all, o_all.points[winner], stats[best_t].k), dtype=np.intp
    )
    return RecognitionResult(
        part_cloud=o_all.select(members),
        seed=o_all.points[winner].copy(),
        seed_index=winner,
        members=members,
        part_path=part_path,
        per_template_scores={
            s.template.id: float(row[j]) for j, s in enumerate(stats)
        },
        winning_template_for_cluster=stats[best_t].template.id,
        mean_score=float(seed_scores[winner]),
        seed_scores=seed_scores,
    )
