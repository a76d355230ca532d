"""Contrast-aware image quality metrics for DCE-MRI style transfer.

The evaluation battery couples the classic similarity scores (PSNR, SSIM,
MS-SSIM) with a contrast-weighted SSIM: voxels are weighted by their
normalized distance to the nearest contrast-enhanced voxel, so structural
agreement can be judged away from enhancing tissue (content mode) or right
on top of it (style mode, inverted weighting).

Pipeline for one (generated, content, style) triple:

  1. detect enhancing voxels by averaging post-baseline signal increases
     and thresholding;
  2. turn the enhancement mask into a distance map, normalized onto
     [0.1, 1.0], optionally inverted;
  3. multiply both images by the weighting and score them with SSIM.

Distances come from an exact Euclidean distance transform (separable
lower-envelope construction, one axis at a time), so weightings are
reproducible down to the last bit across runs and platforms.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .tensor import GaussianWindow, VolumeSequence, as_f64, windowed_moments

logger = logging.getLogger(__name__)

#: Per-scale exponents of the standard 5-scale multi-scale SSIM, rescaled
#: to sum to exactly 1 so the weight vector stays a convex combination.
_MS_BASE_EXPONENTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
MS_SSIM_EXPONENTS = tuple(w / sum(_MS_BASE_EXPONENTS) for w in _MS_BASE_EXPONENTS)

DIRECTIONS = ("nce_to_ce", "ce_to_nce")


class WeightingModeWarning(UserWarning):
    """Distance-map inversion flag disagrees with the requested mode."""


@dataclass(frozen=True)
class SSIMParams:
    """Settings shared by the SSIM family.

    ``data_range`` of None derives the dynamic range from the first
    (reference) argument as max - min of the unweighted image.  With
    ``per_slice`` set, volumes are scored slice by slice along the leading
    spatial axis and averaged, instead of using a 3D window.
    """

    window_size: int = 11
    sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    data_range: float | None = None
    per_slice: bool = False


@dataclass(frozen=True)
class MSSSIMParams(SSIMParams):
    """Multi-scale settings; scales are halved dyadically by mean pooling.

    When ``allow_scale_reduction`` is set (the default) the scale count
    drops to whatever the image can support; the exponents are then
    renormalized over the surviving scales.
    """

    scales: int = 5
    scale_exponents: tuple[float, ...] = MS_SSIM_EXPONENTS
    allow_scale_reduction: bool = True


@dataclass
class CEMask:
    """Boolean map of contrast-enhancing voxels for one sequence."""

    mask: np.ndarray
    threshold_used: float
    baseline_index: int

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=bool)


@dataclass
class DistanceMap:
    """Per-voxel weighting in [0.1, 1.0] derived from a CE mask.

    The plain map weights voxels far from enhancement most (content
    scoring); the inverted map flips the emphasis onto enhancing voxels
    (style scoring).  ``distances`` keeps the raw Euclidean distances that
    produced the weights (infinite when the mask had no CE voxel).
    """

    weights: np.ndarray
    inverted: bool = False
    spacing_mode: str = "voxel"
    distances: np.ndarray | None = None


@dataclass
class MetricReport:
    """Score battery for one (generated, content, style) triple."""

    psnr_style_vs_gen: float
    ssim_content_vs_gen: float
    ms_ssim_content_vs_gen: float
    cw_ssim_content: float
    cw_ssim_style: float
    direction: str = "nce_to_ce"
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        psnr_infinite = math.isinf(self.psnr_style_vs_gen)
        return {
            "psnr_style_vs_gen": None if psnr_infinite else float(self.psnr_style_vs_gen),
            "psnr_infinite": psnr_infinite,
            "ssim_content_vs_gen": float(self.ssim_content_vs_gen),
            "ms_ssim_content_vs_gen": float(self.ms_ssim_content_vs_gen),
            "cw_ssim_content": float(self.cw_ssim_content),
            "cw_ssim_style": float(self.cw_ssim_style),
            "direction": self.direction,
            "notes": list(self.notes),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MetricReport":
        psnr = math.inf if d.get("psnr_infinite") else float(d["psnr_style_vs_gen"])
        return cls(
            psnr_style_vs_gen=psnr,
            ssim_content_vs_gen=float(d["ssim_content_vs_gen"]),
            ms_ssim_content_vs_gen=float(d["ms_ssim_content_vs_gen"]),
            cw_ssim_content=float(d["cw_ssim_content"]),
            cw_ssim_style=float(d["cw_ssim_style"]),
            direction=d.get("direction", "nce_to_ce"),
            notes=list(d.get("notes", [])),
        )


@dataclass
class EvalParams:
    """Knobs for evaluating one triple end to end."""

    threshold: float = 20.0
    baseline_index: int = 0
    signed_reverse: bool = False
    spacing_mode: str = "voxel"
    slice_mode: str = "3d"  # "2d" scores volumes slice by slice
    peak: float | None = None  # None: style max - min
    data_range: float | None = None  # None: content max - min
    direction: str = "nce_to_ce"
    ssim: SSIMParams = field(default_factory=SSIMParams)
    ms_ssim: MSSSIMParams = field(default_factory=MSSSIMParams)


def detect_ce(
    seq: VolumeSequence,
    baseline_index: int = 0,
    threshold: float = 20.0,
    signed_reverse: bool = False,
) -> CEMask:
    """Flag voxels whose mean post-baseline intensity rise exceeds ``threshold``.

    Every frame except the baseline is differenced against the baseline
    frame; a voxel enhances when the average difference is strictly above
    the threshold.  Enhancement means signal increase, so the difference is
    frame - baseline; ``signed_reverse`` flips the sign for data where
    enhancement darkens the image.
    """
    frames = seq.frames if isinstance(seq, VolumeSequence) else as_f64(seq, "sequence")
    if frames.shape[0] < 2:
        raise ValueError("CE detection needs at least two frames")
    if not 0 <= baseline_index < frames.shape[0]:
        raise ValueError(
            f"baseline_index {baseline_index} out of range for {frames.shape[0]} frames"
        )
    others = np.delete(frames, baseline_index, axis=0)
    diff = others - frames[baseline_index]
    if signed_reverse:
        diff = -diff
    mean_diff = diff.mean(axis=0)
    return CEMask(mean_diff > threshold, float(threshold), int(baseline_index))


def _lower_envelope_1d(f: np.ndarray, step: float) -> np.ndarray:
    """One pass of the separable squared-distance transform along a row.

    ``f`` holds squared distances so far; sample p sits at coordinate
    p * step.  Returns min_q (step*(p-q))^2 + f[q] for every p, skipping
    infinite entries (rows not yet reached by any site).
    """
    n = f.size
    finite = np.flatnonzero(np.isfinite(f))
    if finite.size == 0:
        return f.copy()
    v = np.empty(finite.size, dtype=np.intp)  # parabola apex indices
    z = np.empty(finite.size + 1, dtype=np.float64)  # interval boundaries
    k = 0
    v[0] = finite[0]
    z[0] = -np.inf
    z[1] = np.inf
    s2 = step * step
    for q in finite[1:]:
        fq = f[q] + s2 * q * q
        while True:
            p = v[k]
            s = (fq - (f[p] + s2 * p * p)) / (2.0 * s2 * (q - p))
            if s <= z[k]:
                k -= 1
            else:
                break
        k += 1
        v[k] = q
        z[k] = s
        z[k + 1] = np.inf
    out = np.empty_like(f)
    k = 0
    for p in range(n):
        while z[k + 1] < p:
            k += 1
        q = v[k]
        d = step * (p - q)
        out[p] = d * d + f[q]
    return out


def distance_transform(mask, spacing=None) -> np.ndarray:
    """Exact Euclidean distance from every voxel to the nearest True voxel.

    Separable lower-envelope construction applied one axis at a time on
    squared distances.  On integer (voxel) grids the result is exact, bit
    for bit, against an all-pairs scan.  All-False masks yield +inf
    everywhere.
    """
    m = np.asarray(mask.mask if isinstance(mask, CEMask) else mask, dtype=bool)
    if m.size == 0:
        raise ValueError("mask must be non-empty")
    if spacing is None:
        spacing = (1.0,) * m.ndim
    spacing = tuple(float(s) for s in spacing)
    if len(spacing) != m.ndim:
        raise ValueError(f"spacing has {len(spacing)} entries for a rank-{m.ndim} mask")
    f = np.where(m, 0.0, np.inf)
    for axis in range(m.ndim):
        moved = np.moveaxis(f, axis, -1)
        flat = moved.reshape(-1, moved.shape[-1])
        for i in range(flat.shape[0]):
            flat[i] = _lower_envelope_1d(flat[i], spacing[axis])
        f = np.moveaxis(flat.reshape(moved.shape), -1, axis)
    return np.sqrt(f)


def distance_map(mask, spacing=None, mode: str = "voxel") -> DistanceMap:
    """Distance-to-enhancement weighting normalized onto [0.1, 1.0].

    Raw distances d are mapped linearly by 0.1 + 0.9 * d / d_max, so CE
    voxels carry weight 0.1 and the farthest voxel weight 1.0.  Degenerate
    masks collapse to uniform maps: all-False -> all 1.0 (no enhancement to
    anchor the map), all-True -> all 0.1.

    ``mode='physical'`` measures distances in millimetres using
    ``spacing``; the default voxel mode ignores spacing.
    """
    m = np.asarray(mask.mask if isinstance(mask, CEMask) else mask, dtype=bool)
    if mode not in ("voxel", "physical"):
        raise ValueError(f"unknown spacing mode {mode!r}")
    if mode == "physical":
        if spacing is None:
            raise ValueError("physical mode needs per-axis spacing")
    else:
        spacing = None
    if not m.any():
        logger.info("distance_map: mask has no CE voxel, weighting is uniform 1.0")
        dist = np.full(m.shape, np.inf)
        return DistanceMap(np.ones(m.shape), False, mode, dist)
    dist = distance_transform(m, spacing)
    d_max = dist.max()
    if d_max == 0.0:
        logger.info("distance_map: mask is all CE, weighting is uniform 0.1")
        weights = np.full(m.shape, 0.1)
    else:
        weights = 0.1 + 0.9 * (dist / d_max)
    return DistanceMap(weights, False, mode, dist)


def invert_map(dm: DistanceMap) -> DistanceMap:
    """Reflect a distance map so enhancing voxels carry the most weight.

    Applies w -> 1.1 - w, preserving the [0.1, 1.0] range.  A map can only
    be inverted once; invert an original map again rather than chaining.
    """
    if dm.inverted:
        raise ValueError("distance map is already inverted")
    return DistanceMap(1.1 - dm.weights, True, dm.spacing_mode, dm.distances)


def _check_pair(x, y) -> tuple[np.ndarray, np.ndarray]:
    xa = as_f64(x, "x")
    ya = as_f64(y, "y")
    if xa.shape != ya.shape:
        raise ValueError(f"shape mismatch: {xa.shape} vs {ya.shape}")
    return xa, ya


def _resolve_range(reference: np.ndarray, data_range) -> float:
    if data_range is None:
        data_range = float(reference.max() - reference.min())
    if data_range <= 0:
        raise ValueError(
            "data_range must be positive; pass it explicitly for constant references"
        )
    return float(data_range)


def _ssim_cs_maps(x, y, window: GaussianWindow, c1: float, c2: float):
    m = windowed_moments(x, y, window)
    lum = (2.0 * m.mu_x * m.mu_y + c1) / (m.mu_x**2 + m.mu_y**2 + c1)
    cs = (2.0 * m.cov_xy + c2) / (m.var_x + m.var_y + c2)
    return lum * cs, cs


def _ssim_single(x, y, params: SSIMParams, data_range: float):
    window = GaussianWindow.for_shape(x.shape, params.window_size, params.sigma)
    c1 = (params.k1 * data_range) ** 2
    c2 = (params.k2 * data_range) ** 2
    ssim_map, cs_map = _ssim_cs_maps(x, y, window, c1, c2)
    return float(ssim_map.mean()), float(cs_map.mean())


def ssim(x, y, params: SSIMParams | None = None) -> float:
    """Mean structural similarity between two images or volumes.

    The Gaussian window (11 taps, sigma 1.5 by default) is truncated per
    axis for small images or thin volumes; only fully interior window
    positions contribute.  The first argument acts as the reference when
    the dynamic range is derived automatically.
    """
    params = params or SSIMParams()
    xa, ya = _check_pair(x, y)
    data_range = _resolve_range(xa, params.data_range)
    if params.per_slice and xa.ndim == 3:
        vals = [_ssim_single(xs, ys, params, data_range)[0] for xs, ys in zip(xa, ya)]
        return float(np.mean(vals))
    return _ssim_single(xa, ya, params, data_range)[0]


def _downsample2(a: np.ndarray) -> np.ndarray:
    """Non-overlapping 2x mean pooling; odd tails are dropped."""
    for ax in range(a.ndim):
        n = a.shape[ax] - (a.shape[ax] % 2)
        a = a[(slice(None),) * ax + (slice(0, n),)]
        shp = a.shape[:ax] + (n // 2, 2) + a.shape[ax + 1 :]
        a = a.reshape(shp).mean(axis=ax + 1)
    return a


def ms_ssim_scale_count(shape, params: MSSSIMParams | None = None) -> int:
    """Number of dyadic scales the image supports, capped at params.scales.

    A scale is usable while every axis still holds the window it had at
    full resolution (truncated per axis for thin volumes), so thin-axis
    inputs fall back to a single scale rather than failing.
    """
    params = params or MSSSIMParams()
    win = []
    for n in shape:
        w = min(params.window_size, int(n))
        win.append(w if w % 2 else w - 1)
    dims = list(shape)
    usable = 0
    while usable < params.scales and all(d >= w >= 1 for d, w in zip(dims, win)):
        usable += 1
        dims = [d // 2 for d in dims]
    return usable


def _ms_exponents(params: MSSSIMParams, n_scales: int) -> tuple[float, ...]:
    if len(params.scale_exponents) < params.scales:
        raise ValueError(
            f"{params.scales} scales need {params.scales} exponents, "
            f"got {len(params.scale_exponents)}"
        )
    trimmed = params.scale_exponents[:n_scales]
    return tuple(w / sum(trimmed) for w in trimmed)


def ms_ssim(x, y, params: MSSSIMParams | None = None) -> float:
    """Multi-scale SSIM over dyadically downsampled image pairs.

    Contrast-structure terms from every scale and the full SSIM at the
    coarsest scale are combined as a weighted geometric mean.  Negative
    per-scale terms are clamped at zero before exponentiation.
    """
    params = params or MSSSIMParams()
    xa, ya = _check_pair(x, y)
    data_range = _resolve_range(xa, params.data_range)
    if params.per_slice and xa.ndim == 3:
        sub = replace(params, per_slice=False, data_range=data_range)
        return float(np.mean([ms_ssim(xs, ys, sub) for xs, ys in zip(xa, ya)]))

    usable = ms_ssim_scale_count(xa.shape, params)
    if usable < params.scales:
        if not params.allow_scale_reduction:
            need = params.window_size * 2 ** (params.scales - 1)
            raise ValueError(
                f"image {xa.shape} too small for {params.scales} scales; needs at "
                f"least {need} per spatial axis (window {params.window_size})"
            )
        logger.info("ms_ssim: reduced to %d of %d scales for shape %s",
                    usable, params.scales, xa.shape)
    exponents = _ms_exponents(params, usable)

    value = 1.0
    xs, ys = xa, ya
    for scale in range(usable):
        ssim_val, cs_val = _ssim_single(xs, ys, params, data_range)
        if scale < usable - 1:
            value *= max(cs_val, 0.0) ** exponents[scale]
            xs = _downsample2(xs)
            ys = _downsample2(ys)
        else:
            value *= max(ssim_val, 0.0) ** exponents[scale]
    return float(value)


def cw_ssim(x, y, dm: DistanceMap, params: SSIMParams | None = None,
            mode: str = "content") -> float:
    """Contrast-weighted SSIM: SSIM of the distance-weighted image pair.

    Both images are multiplied voxelwise by the distance-map weighting
    before scoring, so the plain map emphasizes agreement away from
    enhancement (content) and the inverted map emphasizes the enhancing
    voxels themselves (style).  A map whose inversion flag disagrees with
    ``mode`` triggers a warning but is still applied as given.

    The dynamic range defaults to the range of the unweighted first image
    so weighting never shifts the stabilizing constants.
    """
    if mode not in ("content", "style"):
        raise ValueError(f"unknown mode {mode!r}, expected 'content' or 'style'")
    params = params or SSIMParams()
    xa, ya = _check_pair(x, y)
    w = np.asarray(dm.weights, dtype=np.float64)
    if w.shape != xa.shape:
        raise ValueError(f"distance map {w.shape} does not match images {xa.shape}")
    expect_inverted = mode == "style"
    if dm.inverted != expect_inverted:
        warnings.warn(
            f"{mode} mode expects an {'inverted' if expect_inverted else 'original'} "
            f"distance map, got inverted={dm.inverted}",
            WeightingModeWarning,
            stacklevel=2,
        )
    data_range = _resolve_range(xa, params.data_range)
    weighted = replace(params, data_range=data_range)
    return ssim(xa * w, ya * w, weighted)


def psnr(reference, test, peak: float | None = None) -> float:
    """Peak signal-to-noise ratio in dB; +inf for identical inputs.

    ``peak`` of None uses max - min of the reference.
    """
    ref, tst = _check_pair(reference, test)
    if peak is None:
        peak = float(ref.max() - ref.min())
    if peak <= 0:
        raise ValueError("peak must be positive; pass it explicitly for constant references")
    mse = float(np.mean((ref - tst) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def dice(a, b) -> float:
    """Dice overlap 2|A^B| / (|A|+|B|) between boolean masks."""
    aa = np.asarray(a, dtype=bool)
    bb = np.asarray(b, dtype=bool)
    if aa.shape != bb.shape:
        raise ValueError(f"shape mismatch: {aa.shape} vs {bb.shape}")
    denom = int(aa.sum()) + int(bb.sum())
    if denom == 0:
        return 1.0
    return 2.0 * int((aa & bb).sum()) / denom


def evaluate_triple(generated, content, style, seq_for_mask: VolumeSequence,
                    params: EvalParams | None = None) -> MetricReport:
    """Full score battery for one (generated, content, style) triple.

    Pairings: PSNR scores the generated image against the style image;
    SSIM and MS-SSIM score it against the content image; the
    contrast-weighted SSIMs score content agreement under the plain map
    and style agreement under the inverted map.  One shared dynamic range,
    taken from the unweighted content image unless overridden, feeds every
    SSIM-family score.
    """
    params = params or EvalParams()
    if params.direction not in DIRECTIONS:
        raise ValueError(f"direction must be one of {DIRECTIONS}")
    gen = as_f64(generated, "generated")
    con = as_f64(content, "content")
    sty = as_f64(style, "style")
    if not (gen.shape == con.shape == sty.shape):
        raise ValueError(
            f"triple shapes differ: generated {gen.shape}, content {con.shape}, "
            f"style {sty.shape}"
        )
    if seq_for_mask.spatial_shape != gen.shape:
        raise ValueError(
            f"mask sequence spatial shape {seq_for_mask.spatial_shape} does not "
            f"match images {gen.shape}"
        )

    notes: list[str] = []
    ce = detect_ce(seq_for_mask, params.baseline_index, params.threshold,
                   params.signed_reverse)
    spacing = seq_for_mask.spacing_mm if params.spacing_mode == "physical" else None
    dm = distance_map(ce, spacing, params.spacing_mode)
    if not ce.mask.any():
        notes.append("no CE voxels detected; content weighting is uniform 1.0")
    elif ce.mask.all():
        notes.append("every voxel detected as CE; content weighting is uniform 0.1")
    dm_inv = invert_map(dm)

    data_range = params.data_range
    if data_range is None:
        data_range = float(con.max() - con.min())
    per_slice = params.slice_mode == "2d" and gen.ndim == 3
    sp = replace(params.ssim, data_range=data_range, per_slice=per_slice)
    mp = replace(params.ms_ssim, data_range=data_range, per_slice=per_slice)

    peak = params.peak
    if peak is None:
        peak = float(sty.max() - sty.min())

    used = ms_ssim_scale_count(gen.shape if not per_slice else gen.shape[1:], mp)
    if used < mp.scales:
        notes.append(f"ms_ssim used {used} of {mp.scales} scales")

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", WeightingModeWarning)
        report = MetricReport(
            psnr_style_vs_gen=psnr(sty, gen, peak),
            ssim_content_vs_gen=ssim(con, gen, sp),
            ms_ssim_content_vs_gen=ms_ssim(con, gen, mp),
            cw_ssim_content=cw_ssim(gen, con, dm, sp, mode="content"),
            cw_ssim_style=cw_ssim(gen, sty, dm_inv, sp, mode="style"),
            direction=params.direction,
            notes=notes,
        )
    for w in caught:
        notes.append(str(w.message))
    return report
