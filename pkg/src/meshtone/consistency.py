"""Cross-view color consistency: gain estimation, infilling and aggregation.

The chain is

1. per face and view, a trimmed mean of the face's pixel samples;
2. for every ordered view pair, the mean ratio of those trimmed means over
   faces both views observe (a multiplicative gain from view j to view i);
3. a faces x views color matrix holding the direct trimmed means, with empty
   cells filled from other views' direct values scaled by the pair gain;
4. a trimmed mean along each face row.

Every reduction is either a sort followed by ``math.fsum`` or an ``fsum`` of
per-item terms, so results do not depend on view order or worker count.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .config import PipelineConfig
from .geometry import PinholeView, TriangleMesh
from .visibility import FaceObservationSet, PixelSampleVector, observe_views

DENOMINATOR_EPS = 1e-6
DIRECT = "direct"
INFILLED = "infilled"


@dataclass(frozen=True)
class TrimParams:
    alpha: float = 0.3

    def __post_init__(self):
        if not 0.0 <= self.alpha < 0.5:
            raise ValueError(f"alpha must lie in [0, 0.5), got {self.alpha}")


TrimLike = Union[TrimParams, float]


def _alpha(params: TrimLike) -> float:
    return params.alpha if isinstance(params, TrimParams) else TrimParams(float(params)).alpha


def trim_count(n: int, alpha: float) -> int:
    """Number of samples dropped from each end: floor(n * alpha)."""
    # guard against n * alpha landing a hair below an integer
    return int(math.floor(n * alpha + 1e-9))


def trimmed_mean(samples, params: TrimLike = 0.3) -> float:
    """Mean of the samples left after dropping floor(n*alpha) from each end.

    Raises:
        ValueError: if ``samples`` is empty or nothing survives trimming.
    """
    alpha = _alpha(params)
    x = np.sort(np.asarray(samples, dtype=np.float64).ravel())
    n = x.size
    if n == 0:
        raise ValueError("trimmed mean of an empty sample")
    k = trim_count(n, alpha)
    if n - 2 * k < 1:
        raise ValueError(f"trimming {k} from each end of {n} samples leaves nothing")
    return math.fsum(x[k : n - k]) / (n - 2 * k)


def trimmed_mean_channels(samples: np.ndarray, params: TrimLike = 0.3) -> np.ndarray:
    """Per-channel trimmed mean of an (n, C) sample array."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim == 1:
        samples = samples[:, None]
    return np.array([trimmed_mean(samples[:, c], params) for c in range(samples.shape[1])])


# --------------------------------------------------------------------------
# pairwise gains
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class GainMatrix:
    """Sparse per-channel view-to-view gains.

    ``entries[(i, j)]`` converts view-j intensities to view-i scale.
    ``agreement[(i, j)]`` is min(w, 1/w) per channel and
    ``overlap_count[(i, j)]`` the number of faces the gain averages over.
    """

    n: int
    entries: dict = field(default_factory=dict)
    agreement: dict = field(default_factory=dict)
    overlap_count: dict = field(default_factory=dict)

    def __contains__(self, pair) -> bool:
        return pair in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def density(self) -> float:
        possible = self.n * (self.n - 1)
        return len(self.entries) / possible if possible else 0.0


def overlap_faces(obs_i: FaceObservationSet, obs_j: FaceObservationSet) -> set:
    """Faces observed in both views."""
    return set(obs_i.observed & obs_j.observed)


def face_means(obs: FaceObservationSet, params: TrimLike = 0.3) -> dict:
    """Trimmed mean of every observed face's samples, keyed by face id."""
    return {f: trimmed_mean_channels(obs.samples[f].samples, params) for f in sorted(obs.observed)}


def pairwise_gain(
    obs_i: FaceObservationSet,
    obs_j: FaceObservationSet,
    params: TrimLike = 0.3,
    eps: float = DENOMINATOR_EPS,
    means_i: Optional[dict] = None,
    means_j: Optional[dict] = None,
):
    """Mean over shared faces of the ratio of per-face trimmed means.

    Faces whose trimmed mean is at or below ``eps`` in either view (any
    channel) are left out, which keeps the pair symmetric and every gain
    finite and positive.

    Returns:
        ``(gain, l)`` with a per-channel gain array and the number of faces
        used, or None when no shared face survives.
    """
    if means_i is None:
        means_i = face_means(obs_i, params)
    if means_j is None:
        means_j = face_means(obs_j, params)
    ratios = []
    for f in sorted(overlap_faces(obs_i, obs_j)):
        a, b = means_i[f], means_j[f]
        if np.any(a <= eps) or np.any(b <= eps):
            continue
        ratios.append(a / b)
    if not ratios:
        return None
    ratios = np.asarray(ratios)
    gain = np.array([math.fsum(ratios[:, c]) for c in range(ratios.shape[1])]) / len(ratios)
    return gain, len(ratios)


def build_gain_matrix(
    all_obs: Sequence[FaceObservationSet],
    params: TrimLike = 0.3,
    min_overlap: int = 3,
    eps: float = DENOMINATOR_EPS,
    workers: int = 1,
    means: Optional[Sequence[dict]] = None,
) -> GainMatrix:
    """Gains for every ordered view pair with at least ``min_overlap`` usable shared faces."""
    n = len(all_obs)
    if means is None:
        means = [face_means(o, params) for o in all_obs]
    pairs = [(i, j) for i in range(n) for j in range(n) if i != j]

    def run(pair):
        i, j = pair
        return pairwise_gain(all_obs[i], all_obs[j], params, eps, means[i], means[j])

    if workers > 1 and len(pairs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, pairs))
    else:
        results = [run(p) for p in pairs]

    entries, agreement, overlap = {}, {}, {}
    for pair, res in zip(pairs, results):
        if res is None or res[1] < min_overlap:
            continue
        gain, l = res
        entries[pair] = gain
        agreement[pair] = np.minimum(gain, 1.0 / gain)
        overlap[pair] = l
    return GainMatrix(n, entries, agreement, overlap)


# --------------------------------------------------------------------------
# face x view color matrix
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ColorEntry:
    value: np.ndarray
    provenance: str


@dataclass(frozen=True)
class ColorMatrix:
    rows: int
    cols: int
    channels: int
    entries: dict = field(default_factory=dict)

    def row(self, face: int) -> dict:
        return {v: e for (f, v), e in self.entries.items() if f == face}

    def rows_by_face(self) -> list[dict]:
        out = [dict() for _ in range(self.rows)]
        for (f, v), e in self.entries.items():
            out[f][v] = e
        return out

    def count(self, provenance: Optional[str] = None) -> int:
        if provenance is None:
            return len(self.entries)
        return sum(e.provenance == provenance for e in self.entries.values())


def build_color_matrix(
    all_obs: Sequence[FaceObservationSet],
    params: TrimLike = 0.3,
    n_faces: Optional[int] = None,
    means: Optional[Sequence[dict]] = None,
) -> ColorMatrix:
    """Direct entries: the trimmed mean of each observed face in each view."""
    if means is None:
        means = [face_means(o, params) for o in all_obs]
    if n_faces is None:
        n_faces = max((len(o.observed) + len(o.unobserved) for o in all_obs), default=0)
    channels = _channels(all_obs)
    entries = {}
    for v, m in enumerate(means):
        for f, value in m.items():
            entries[(f, v)] = ColorEntry(value, DIRECT)
    return ColorMatrix(n_faces, len(all_obs), channels, entries)


def _channels(all_obs) -> int:
    for o in all_obs:
        for s in (o.samples or {}).values():
            return s.samples.shape[1]
    return 1


def infill_color_matrix(C: ColorMatrix, W: GainMatrix, agreement_threshold: float = 0.0) -> ColorMatrix:
    """Fill empty cells from views that observed the face directly.

    Cell (k, i) takes the agreement-weighted mean of ``C[k, j] * w_ij`` over
    donors j with a direct entry for face k and a gain entry for (i, j)
    whose agreement is at least ``agreement_threshold`` in every channel.
    Direct entries are never touched and infilled cells never act as donors.
    """
    entries = dict(C.entries)
    for k, row in enumerate(C.rows_by_face()):
        direct = {v: e.value for v, e in row.items() if e.provenance == DIRECT}
        if not direct:
            continue
        for i in range(C.cols):
            if i in row:
                continue
            terms, weights = [], []
            for j, value in direct.items():
                pair = (i, j)
                if pair not in W.entries:
                    continue
                agree = W.agreement[pair]
                if np.any(agree < agreement_threshold):
                    continue
                terms.append(agree * value * W.entries[pair])
                weights.append(agree)
            if not terms:
                continue
            terms, weights = np.asarray(terms), np.asarray(weights)
            value = np.array(
                [math.fsum(terms[:, c]) / math.fsum(weights[:, c]) for c in range(terms.shape[1])]
            )
            entries[(k, i)] = ColorEntry(value, INFILLED)
    return ColorMatrix(C.rows, C.cols, C.channels, entries)


# --------------------------------------------------------------------------
# aggregation
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class FaceColorTable:
    """Per-face colors; uncolored faces hold NaN and have zero support."""

    colors: np.ndarray
    support: np.ndarray

    @property
    def colored(self) -> np.ndarray:
        return self.support > 0

    @property
    def n_uncolored(self) -> int:
        return int((self.support == 0).sum())

    def __len__(self) -> int:
        return len(self.support)


def aggregate_face_colors(C: ColorMatrix, params: TrimLike = 0.3) -> FaceColorTable:
    """Trimmed mean along each face's row of direct and infilled entries."""
    alpha = _alpha(params)
    colors = np.full((C.rows, C.channels), np.nan)
    support = np.zeros(C.rows, dtype=np.int64)
    for k, row in enumerate(C.rows_by_face()):
        if not row:
            continue
        values = np.asarray([e.value for e in row.values()])
        n = len(values)
        support[k] = n
        for c in range(C.channels):
            if n - 2 * trim_count(n, alpha) >= 1:
                colors[k, c] = trimmed_mean(values[:, c], alpha)
            else:
                colors[k, c] = math.fsum(np.sort(values[:, c])) / n
    return FaceColorTable(colors, support)


# --------------------------------------------------------------------------
# pipeline
# --------------------------------------------------------------------------


CLIP_CEILING = 1.0


def channel_observation(
    obs: FaceObservationSet, channel: int, max_clipped_fraction: float = 1.0
) -> FaceObservationSet:
    """Single-channel view of an observation set.

    Faces with more than ``max_clipped_fraction`` of their samples at the
    1.0 ceiling in this channel move to the unobserved side: a clipped
    intensity says nothing about the view's gain.
    """
    keep = {}
    for f in sorted(obs.observed):
        col = obs.samples[f].samples[:, channel : channel + 1]
        if np.count_nonzero(col >= CLIP_CEILING) > max_clipped_fraction * len(col):
            continue
        keep[f] = PixelSampleVector(f, obs.view_id, col)
    observed = frozenset(keep)
    everything = obs.observed | obs.unobserved
    return FaceObservationSet(obs.view_id, observed, everything - observed, keep, obs.footprint, obs.won)


@dataclass
class ChannelEstimate:
    observations: list
    gains: GainMatrix
    direct: ColorMatrix
    filled: ColorMatrix
    table: FaceColorTable


@dataclass
class Estimate:
    """Everything the estimation pass produced.

    ``observations`` holds the geometric split with all channels;
    ``channels`` holds the per-channel chain, which runs independently.
    """

    observations: list
    channels: list
    table: FaceColorTable
    buffers: Optional[list] = None

    @property
    def gain_pairs(self) -> int:
        return sum(len(ch.gains) for ch in self.channels)

    @property
    def gain_density(self) -> float:
        if not self.channels:
            return 0.0
        return sum(ch.gains.density for ch in self.channels) / len(self.channels)


def estimate_channel(
    all_obs: Sequence[FaceObservationSet],
    n_faces: int,
    params: TrimLike = 0.3,
    min_overlap: int = 3,
    agreement_threshold: float = 0.0,
    workers: int = 1,
) -> ChannelEstimate:
    """Gains, direct colors, infill and aggregation for one set of observations."""
    means = [face_means(o, params) for o in all_obs]
    W = build_gain_matrix(all_obs, params, min_overlap, workers=workers, means=means)
    C = build_color_matrix(all_obs, params, n_faces=n_faces, means=means)
    filled = infill_color_matrix(C, W, agreement_threshold)
    return ChannelEstimate(list(all_obs), W, C, filled, aggregate_face_colors(filled, params))


def run_estimate(
    mesh: TriangleMesh,
    views: Sequence[PinholeView],
    config: Optional[PipelineConfig] = None,
    keep_buffers: bool = False,
) -> Estimate:
    """Visibility, then per channel: gains, direct colors, infill, aggregation."""
    config = config or PipelineConfig()
    if config.channels == "gray":
        views = [v.with_image(v.image.to_gray()) for v in views]
    params = TrimParams(config.alpha)
    obs, bufs = observe_views(
        mesh,
        views,
        workers=config.worker_count,
        return_buffers=True,
        min_pixels=config.min_pixels,
        visibility_fraction=config.visibility_fraction,
    )
    n_channels = views[0].image.channels if views else (1 if config.channels == "gray" else 3)
    per_channel = []
    for c in range(n_channels):
        ch_obs = [channel_observation(o, c, config.max_clipped_fraction) for o in obs]
        per_channel.append(
            estimate_channel(
                ch_obs, mesh.n_faces, params, config.min_overlap, config.agreement_threshold, config.worker_count
            )
        )
    colors = np.full((mesh.n_faces, n_channels), np.nan)
    support = np.zeros(mesh.n_faces, dtype=np.int64)
    for c, ch in enumerate(per_channel):
        colors[:, c] = ch.table.colors[:, 0]
        support = ch.table.support if c == 0 else np.minimum(support, ch.table.support)
    return Estimate(obs, per_channel, FaceColorTable(colors, support), bufs if keep_buffers else None)


def estimate_face_colors(
    mesh: TriangleMesh, views: Sequence[PinholeView], config: Optional[PipelineConfig] = None
) -> FaceColorTable:
    return run_estimate(mesh, views, config).table


# --------------------------------------------------------------------------
# CSV dumps
# --------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return repr(float(x))


def _channel_names(channels: int) -> list[str]:
    return ["r", "g", "b"] if channels == 3 else [f"c{c}" for c in range(channels)] if channels > 1 else ["gray"]


def write_gain_csv(matrices, path) -> None:
    """Dump one multi-channel GainMatrix, or a list of single-channel ones."""
    if isinstance(matrices, GainMatrix):
        matrices = [matrices]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["i", "j", "channel", "gain", "agreement", "overlap"])
        for m_idx, W in enumerate(matrices):
            for (i, j) in sorted(W.entries):
                gain, agree = W.entries[(i, j)], W.agreement[(i, j)]
                for c in range(len(gain)):
                    channel = c if len(matrices) == 1 else m_idx
                    writer.writerow([i, j, channel, _fmt(gain[c]), _fmt(agree[c]), W.overlap_count[(i, j)]])


def write_color_matrix_csv(matrices, path) -> None:
    """Dump one multi-channel ColorMatrix, or a list of single-channel ones."""
    if isinstance(matrices, ColorMatrix):
        matrices = [matrices]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["face", "view", "channel", "value", "provenance"])
        for m_idx, C in enumerate(matrices):
            for (f, v) in sorted(C.entries):
                e = C.entries[(f, v)]
                for c in range(len(e.value)):
                    channel = c if len(matrices) == 1 else m_idx
                    writer.writerow([f, v, channel, _fmt(e.value[c]), e.provenance])


def write_face_colors_csv(table: FaceColorTable, path) -> None:
    channels = table.colors.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["face", *_channel_names(channels), "support"])
        for k in range(len(table)):
            vals = ["" if np.isnan(x) else _fmt(x) for x in table.colors[k]]
            writer.writerow([k, *vals, int(table.support[k])])


def read_face_colors_csv(path) -> FaceColorTable:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    channels = len(header) - 2
    colors = np.full((len(body), channels), np.nan)
    support = np.zeros(len(body), dtype=np.int64)
    for r in body:
        k = int(r[0])
        colors[k] = [float(x) if x else np.nan for x in r[1 : 1 + channels]]
        support[k] = int(r[-1])
    return FaceColorTable(colors, support)
