"""A-contrario detection of redundant offsets.

For each offset ``t`` the probability map holds the probability, under the
background model, that the auto-similarity statistic is at most its
observed value.  An offset is detected when that probability is at most
``nfa_max / |domain|``; the expected number of detections in the
background is then bounded by ``nfa_max``.  Equivalently, the statistic
itself can be compared against a per-offset quantile threshold.

Laws depend on the offset and the patch shape but not on the patch
anchor, so they are computed once into an :class:`OffsetLawTable` (the
law at ``-t`` equals the law at ``t``, halving the work) and reused
across maps.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import special

from . import imgio
from .background import MicrotextureModel, cumulants
from .grid import PatchDomain, as_map
from .quadform import WoodFParams, cdf, fit, quantile

__all__ = [
    "DetectionResult",
    "OffsetLawTable",
    "ap",
    "autosim_detection",
    "offset_laws",
    "save_detection",
    "stride_mask",
    "threshold_a",
    "window_mask",
]

_KIND_WOOD = 0
_KIND_GAMMA = 1
_KIND_POINT = 2


def ap(model: MicrotextureModel, t, patch: PatchDomain, value: float) -> float:
    """Background probability that the statistic at ``t`` is <= ``value``."""
    if value < 0:
        raise ValueError("auto-similarity values are nonnegative")
    return cdf(fit(cumulants(model, t, patch)), value)


def threshold_a(model: MicrotextureModel, t, patch: PatchDomain, q: float) -> float:
    """Per-offset detection threshold: the ``q``-quantile of the law at ``t``."""
    return quantile(fit(cumulants(model, t, patch)), q)


@dataclass
class OffsetLawTable:
    """Fitted law parameters for every offset of a map shape.

    ``kind`` codes the per-offset evaluation branch (0 beta-prime fit,
    1 scaled chi-square fallback, 2 point mass); ``p0, p1`` hold the two
    shape/scale parameters of the active branch and ``scale`` the
    beta-prime scale.
    """

    shape: tuple[int, int]
    kind: np.ndarray
    p0: np.ndarray
    p1: np.ndarray
    scale: np.ndarray
    mask: np.ndarray | None = None

    def params_at(self, t) -> WoodFParams:
        h, w = self.shape
        iy, ix = t[1] % h, t[0] % w
        k = int(self.kind[iy, ix])
        if k == _KIND_POINT:
            return WoodFParams(fallback="point-mass")
        if k == _KIND_GAMMA:
            return WoodFParams(
                fallback="gamma-two-moment",
                gamma_dof=float(self.p0[iy, ix]),
                gamma_scale=float(self.p1[iy, ix]),
            )
        return WoodFParams(
            fallback="none",
            alpha1=float(self.p0[iy, ix]),
            alpha2=float(self.p1[iy, ix]),
            beta=float(self.scale[iy, ix]),
        )

    def fallback_counts(self) -> dict:
        sel = self.mask if self.mask is not None else np.ones(self.shape, bool)
        return {
            "wood_f": int(np.sum((self.kind == _KIND_WOOD) & sel)),
            "gamma_two_moment": int(np.sum((self.kind == _KIND_GAMMA) & sel)),
            "point_mass": int(np.sum((self.kind == _KIND_POINT) & sel)),
        }

    def cdf_map(self, values: np.ndarray) -> np.ndarray:
        """Vectorized CDF of each offset's law at the given statistic map.

        Masked offsets get probability 1 (never detected).
        """
        v = np.asarray(values, dtype=np.float64)
        out = np.ones(self.shape)
        wood = self.kind == _KIND_WOOD
        gam = self.kind == _KIND_GAMMA
        if self.mask is not None:
            wood &= self.mask
            gam &= self.mask
        if np.any(wood):
            y = v[wood] / self.scale[wood]
            out[wood] = special.betainc(self.p0[wood], self.p1[wood], y / (1.0 + y))
        if np.any(gam):
            out[gam] = special.gammainc(
                self.p0[gam] / 2.0, v[gam] / (2.0 * self.p1[gam])
            )
        pos = self.kind != _KIND_POINT
        out[pos & (v <= 0.0)] = 0.0
        if self.mask is not None:
            out[~self.mask] = 1.0
        return out

    def quantile_map(self, q: float) -> np.ndarray:
        """Vectorized per-offset quantiles (0 for point-mass offsets)."""
        if not 0.0 < q < 1.0:
            raise ValueError(f"quantile level must be in (0,1), got {q}")
        live = self.kind != _KIND_POINT
        if self.mask is not None:
            live &= self.mask
        out = np.zeros(self.shape)
        if not np.any(live):
            return out
        k = self.kind[live]
        p0 = self.p0[live]
        p1 = self.p1[live]
        sc = self.scale[live]
        wood = k == _KIND_WOOD

        def vec_cdf(x: np.ndarray) -> np.ndarray:
            res = np.empty_like(x)
            y = x[wood] / sc[wood]
            res[wood] = special.betainc(p0[wood], p1[wood], y / (1.0 + y))
            g = ~wood
            res[g] = special.gammainc(p0[g] / 2.0, x[g] / (2.0 * p1[g]))
            return res

        mean = np.where(wood, sc * p0 / np.maximum(p1 - 1.0, 1e-12), p0 * p1)
        hi = np.maximum(mean, 1.0)
        for _ in range(200):
            low = vec_cdf(hi) < q
            if not np.any(low):
                break
            hi[low] *= 2.0
        else:
            raise ArithmeticError("quantile bracket expansion failed")
        lo = np.zeros_like(hi)
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            above = vec_cdf(mid) >= q
            hi[above] = mid[above]
            lo[~above] = mid[~above]
        out[live] = hi
        return out

    def live_mask(self) -> np.ndarray:
        """Offsets that can ever be detected: evaluated and nondegenerate."""
        live = self.kind != _KIND_POINT
        if self.mask is not None:
            live &= self.mask
        return live

    def detect_by_threshold(self, as_values: np.ndarray, q: float) -> np.ndarray:
        """Statistic-side thresholding; equivalent to probability-side
        detection away from degenerate offsets (which never detect)."""
        a = self.quantile_map(q)
        return (np.asarray(as_values) <= a) & self.live_mask()


def stride_mask(shape: tuple[int, int], stride: int) -> np.ndarray:
    """Evaluate only offsets whose both components are multiples of
    ``stride`` (a compute-cost control; the NFA denominator is unchanged)."""
    h, w = shape
    ys = (np.arange(h) % stride == 0)[:, None]
    xs = (np.arange(w) % stride == 0)[None, :]
    return ys & xs


def window_mask(shape: tuple[int, int], radius: int) -> np.ndarray:
    """Evaluate only offsets within sup-norm ``radius`` of the origin."""
    h, w = shape
    tx = (np.arange(w) + w // 2) % w - w // 2
    ty = (np.arange(h) + h // 2) % h - h // 2
    return (np.abs(ty)[:, None] <= radius) & (np.abs(tx)[None, :] <= radius)


def offset_laws(
    model: MicrotextureModel, patch: PatchDomain, mask: np.ndarray | None = None
) -> OffsetLawTable:
    """Fit the statistic's law at every (unmasked) offset of the torus."""
    h, w = model.shape
    kind = np.full((h, w), _KIND_POINT, dtype=np.uint8)
    p0 = np.zeros((h, w))
    p1 = np.zeros((h, w))
    scale = np.zeros((h, w))
    for iy in range(h):
        for ix in range(w):
            if mask is not None and not mask[iy, ix]:
                continue
            my, mx = (-iy) % h, (-ix) % w
            if (my, mx) < (iy, ix) and (mask is None or mask[my, mx]):
                # law at -t equals law at t
                kind[iy, ix] = kind[my, mx]
                p0[iy, ix] = p0[my, mx]
                p1[iy, ix] = p1[my, mx]
                scale[iy, ix] = scale[my, mx]
                continue
            params = fit(cumulants(model, (ix, iy), patch))
            if params.fallback == "point-mass":
                kind[iy, ix] = _KIND_POINT
            elif params.fallback == "gamma-two-moment":
                kind[iy, ix] = _KIND_GAMMA
                p0[iy, ix] = params.gamma_dof
                p1[iy, ix] = params.gamma_scale
            else:
                kind[iy, ix] = _KIND_WOOD
                p0[iy, ix] = params.alpha1
                p1[iy, ix] = params.alpha2
                scale[iy, ix] = params.beta
    return OffsetLawTable(
        shape=(h, w), kind=kind, p0=p0, p1=p1, scale=scale, mask=mask
    )


@dataclass
class DetectionResult:
    """Probability map, binary detection map and run metadata."""

    p_map: np.ndarray
    d_map: np.ndarray
    as_values: np.ndarray
    nfa_max: float
    patch: PatchDomain
    model_descriptor: dict
    fallback_counts: dict
    mask: np.ndarray | None = None
    warnings: list[str] = field(default_factory=list)

    @property
    def n_detected(self) -> int:
        return int(self.d_map.sum())


def autosim_detection(
    u,
    patch: PatchDomain,
    model: MicrotextureModel,
    nfa_max: float,
    mask: np.ndarray | None = None,
    laws: OffsetLawTable | None = None,
) -> DetectionResult:
    """Detect offsets whose auto-similarity is improbably small.

    ``P_map(t)`` is the background CDF of the statistic at its observed
    value and ``D_map(t) = 1`` iff ``P_map(t) <= nfa_max / |domain|``.
    Masked offsets get ``P_map = 1`` and are never detected.  A
    precomputed law table may be passed to amortize fits across images
    drawn from the same model.
    """
    if nfa_max < 0:
        raise ValueError("nfa_max must be nonnegative")
    if laws is None:
        laws = offset_laws(model, patch, mask=mask)
    values = as_map(u, patch)
    p_map = laws.cdf_map(values)
    q = nfa_max / values.size
    d_map = p_map <= q
    if laws.mask is not None:
        d_map &= laws.mask
    warnings = []
    if model.degenerate and nfa_max >= values.size:
        warnings.append(
            "degenerate background model with nfa_max >= |domain|: "
            "every offset is trivially detected"
        )
    return DetectionResult(
        p_map=p_map,
        d_map=d_map,
        as_values=values,
        nfa_max=nfa_max,
        patch=patch,
        model_descriptor=model.descriptor(),
        fallback_counts=laws.fallback_counts(),
        mask=laws.mask,
        warnings=warnings,
    )


def save_detection(result: DetectionResult, outdir, basename: str = "") -> dict:
    """Write ``P_map`` (PFM), ``D_map`` (PGM) and a JSON sidecar."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    stem = basename + "_" if basename else ""
    p_path = outdir / f"{stem}P_map.pfm"
    d_path = outdir / f"{stem}D_map.pgm"
    meta_path = outdir / f"{stem}detection.json"
    imgio.write_pfm(p_path, result.p_map)
    imgio.write_pgm(d_path, result.d_map.astype(np.float64) * 255.0, maxval=255)
    meta = {
        "patch": result.patch.descriptor(),
        "nfa_max": result.nfa_max,
        "model": result.model_descriptor,
        "mask": None
        if result.mask is None
        else {"evaluated_offsets": int(result.mask.sum())},
        "fallback_counts": result.fallback_counts,
        "n_detected": result.n_detected,
        "warnings": result.warnings,
    }
    meta_path.write_text(json.dumps(meta, indent=2) + "\n")
    return {"p_map": str(p_path), "d_map": str(d_path), "meta": str(meta_path)}
