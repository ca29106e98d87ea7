"""Stationary Gaussian background models for the a-contrario tests.

A microtexture model is the law of ``U = f * W`` with ``*`` the periodic
convolution on the image torus and ``W`` unit white noise.  Under such a
model the auto-similarity statistic at offset ``t`` is a nonnegative
quadratic form in Gaussians whose matrix ``C_t`` is built from the offset
correlation ``delta(t, x) = 2 Gamma(x) - Gamma(x+t) - Gamma(x-t)``, where
``Gamma`` is the autocorrelation of ``f``.  This module constructs models
from an exemplar image or as white noise, evaluates ``C_t`` and the exact
cumulants of the quadratic form (via matrix traces, no eigendecomposition),
provides the closed-form white-noise eigenvalues for square patches, and
samples from a model by spectral convolution.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import imgio
from .grid import PatchDomain, autocorrelation, _as_image
from .quadform import QuadFormLaw

__all__ = [
    "MicrotextureModel",
    "covariance_matrix",
    "cumulants",
    "delta_map",
    "from_exemplar",
    "load_model",
    "sample",
    "save_model",
    "white_noise",
    "white_noise_covariance",
    "white_noise_eigenvalue_blocks",
    "white_noise_eigenvalues",
    "white_noise_law",
]

# Side cap for covariance matrices (entries per side).
COV_SIDE_CAP = 4096

# delta(t,0) below this fraction of Gamma(0) is round-off from an exact
# repeat in the exemplar; the law is then the point mass at zero.
_DEGENERATE_REL = 1e-12


@dataclass(frozen=True)
class MicrotextureModel:
    """Convolution kernel, its cached autocorrelation and a kind tag."""

    kernel: np.ndarray
    gamma: np.ndarray
    kind: str  # "white-noise" | "exemplar"

    @property
    def shape(self) -> tuple[int, int]:
        return self.kernel.shape

    @property
    def degenerate(self) -> bool:
        return self.gamma[0, 0] <= 0.0

    def descriptor(self) -> dict:
        return {
            "kind": self.kind,
            "dims": [int(self.shape[1]), int(self.shape[0])],
            "variance": float(self.gamma[0, 0]),
        }


def white_noise(shape: tuple[int, int], std: float = 1.0) -> MicrotextureModel:
    """White-noise model of pixel standard deviation ``std``."""
    kernel = np.zeros(shape)
    kernel[0, 0] = std
    gamma = np.zeros(shape)
    gamma[0, 0] = std * std
    return MicrotextureModel(kernel=kernel, gamma=gamma, kind="white-noise")


def _symmetrized(g: np.ndarray) -> np.ndarray:
    """Enforce the exact even symmetry ``g(z) = g(-z)`` (true for any
    autocorrelation; FFT round-off breaks it at the 1e-16 level)."""
    h, w = g.shape
    return 0.5 * (g + g[(-np.arange(h)) % h][:, (-np.arange(w)) % w])


def from_exemplar(u) -> MicrotextureModel:
    """Model whose covariance matches the empirical autocovariance of ``u``.

    The kernel is the centered exemplar scaled by ``|domain|^{-1/2}``, so
    ``Gamma(0)`` equals the empirical pixel variance.  A constant exemplar
    yields the zero model (degenerate; nothing is ever detected under it).
    """
    u = _as_image(u)
    kernel = (u - u.mean()) / math.sqrt(u.size)
    gamma = _symmetrized(autocorrelation(kernel))
    return MicrotextureModel(kernel=kernel, gamma=gamma, kind="exemplar")


def delta_map(model: MicrotextureModel, t: tuple[int, int]) -> np.ndarray:
    """Offset correlation ``x -> 2 Gamma(x) - Gamma(x+t) - Gamma(x-t)``.

    The value at ``x = 0`` is clamped to be nonnegative (it is twice a
    variance; FFT round-off may leave a tiny negative residue).
    """
    g = model.gamma
    tx, ty = int(t[0]), int(t[1])
    fwd = np.roll(g, shift=(-ty, -tx), axis=(0, 1))
    bwd = np.roll(g, shift=(ty, tx), axis=(0, 1))
    out = 2.0 * g - fwd - bwd
    if out[0, 0] < 0.0:
        if out[0, 0] < -1e-10 * max(1.0, abs(g[0, 0])):
            raise ArithmeticError(f"delta(t,0) = {out[0, 0]} badly negative")
        out[0, 0] = 0.0
    return out


_diff_table_cache: dict = {}


def _patch_diff_table(patch: PatchDomain, shape: tuple[int, int]):
    """Unique coordinate differences of a patch and the index matrix
    mapping entry ``(i, j)`` to the difference ``x_i - x_j``.

    Differences are translation-invariant, so the table is cached per
    patch geometry and torus shape (it is reused for every offset and
    every anchor).
    """
    c = patch.coords()
    rel = (c - c[0]).astype(np.int64)
    key = (shape, rel.tobytes())
    hit = _diff_table_cache.get(key)
    if hit is not None:
        return hit
    h, w = shape
    dx = (c[:, 0][:, None] - c[:, 0][None, :]) % w
    dy = (c[:, 1][:, None] - c[:, 1][None, :]) % h
    flat = (dy * w + dx).ravel()
    uniq, inv = np.unique(flat, return_inverse=True)
    inv = inv.ravel()
    counts = np.bincount(inv, minlength=uniq.size).astype(np.float64)
    result = (uniq, uniq % w, uniq // w, inv.reshape(dx.shape), counts)
    if len(_diff_table_cache) >= 16:
        _diff_table_cache.pop(next(iter(_diff_table_cache)))
    _diff_table_cache[key] = result
    return result


def covariance_matrix(model: MicrotextureModel, t, patch: PatchDomain) -> np.ndarray:
    """Covariance matrix of the increment field over the patch, entries
    ``delta(t, x_i - x_j)`` in canonical patch order."""
    n = patch.size()
    if n > COV_SIDE_CAP:
        raise ValueError(f"patch size {n} exceeds covariance cap {COV_SIDE_CAP}")
    d = delta_map(model, t)
    uniq, _, _, inv, _ = _patch_diff_table(patch, model.shape)
    c = d.ravel()[uniq][inv]
    return 0.5 * (c + c.T)


def cumulants(model: MicrotextureModel, t, patch: PatchDomain) -> QuadFormLaw:
    """First three cumulants of the auto-similarity law at offset ``t``.

    ``k1 = tr C``, ``k2 = 2 tr C^2`` (entrywise square sum), ``k3 = 8 tr
    C^3`` (one symmetric matrix product); no eigendecomposition.  Offsets
    whose increment variance is round-off relative to ``Gamma(0)`` give
    the degenerate law.
    """
    n = patch.size()
    if n > COV_SIDE_CAP:
        raise ValueError(f"patch size {n} exceeds covariance cap {COV_SIDE_CAP}")
    g = model.gamma
    h, w = g.shape
    gflat = g.ravel()
    tx, ty = int(t[0]) % w, int(t[1]) % h
    d0 = 2.0 * (g[0, 0] - g[ty, tx])
    if d0 < 0.0:
        if d0 < -1e-10 * max(1.0, abs(g[0, 0])):
            raise ArithmeticError(f"delta(t,0) = {d0} badly negative")
        d0 = 0.0
    if d0 <= 2.0 * _DEGENERATE_REL * g[0, 0]:
        return QuadFormLaw(0.0, 0.0, 0.0)
    uniq, ux, uy, inv, counts = _patch_diff_table(patch, (h, w))
    # delta values at exactly the patch coordinate differences; the
    # symmetrized gamma keeps the implied matrix exactly symmetric
    vals = (
        2.0 * gflat[uniq]
        - gflat[((uy + ty) % h) * w + (ux + tx) % w]
        - gflat[((uy - ty) % h) * w + (ux - tx) % w]
    )
    vals[0] = d0  # uniq is sorted, so index 0 is the zero difference
    k1 = n * d0
    k2 = 2.0 * float(counts @ (vals * vals))
    c = vals[inv]
    k3 = 8.0 * float(np.sum(c * (c @ c)))
    if k3 < 0.0:
        if k3 < -1e-8 * max(k2 ** 1.5, 1.0):
            raise ArithmeticError(f"tr C^3 = {k3 / 8.0} badly negative")
        k3 = 0.0
    return QuadFormLaw(k1=k1, k2=k2, k3=k3)


def white_noise_covariance(p: int, t) -> np.ndarray:
    """Increment covariance for unit white noise on the plane (no wrap),
    square ``p x p`` patch, canonical order."""
    patch = PatchDomain(side=p)
    c = patch.coords()
    dx = c[:, 0][:, None] - c[:, 0][None, :]
    dy = c[:, 1][:, None] - c[:, 1][None, :]
    tx, ty = int(t[0]), int(t[1])
    out = 2.0 * ((dx == 0) & (dy == 0)).astype(np.float64)
    out -= ((dx == tx) & (dy == ty)).astype(np.float64)
    out -= ((dx == -tx) & (dy == -ty)).astype(np.float64)
    return out


def white_noise_eigenvalue_blocks(p: int, t) -> list[tuple[int, int, float, int]]:
    """Closed-form spectrum of the white-noise increment covariance, as
    ``(m, k, eigenvalue, multiplicity)`` blocks.

    Valid for a square ``p x p`` patch and an overlapping offset with both
    components nonzero.  Eigenvalues are ``4 sin^2(k pi / (2m))`` for
    ``m`` in ``[2, q+1]``, ``k`` in ``[1, m-1]``, with
    ``q = ceil(p / max(|tx|, |ty|))``; the multiplicity is independent of
    ``k``, equals ``2 |tx| |ty|`` for ``m < q``, a product of edge
    remainders at ``m = q+1``, and at ``m = q`` whatever brings the total
    to ``p^2``.
    """
    tx, ty = abs(int(t[0])), abs(int(t[1]))
    if tx == 0 or ty == 0 or max(tx, ty) >= p:
        raise ValueError(
            "closed form needs overlap and both offset components nonzero"
        )
    q = math.ceil(p / max(tx, ty))

    def edge_remainder(tc: int) -> int:
        ceil_c = math.ceil(p / tc)
        p_c = tc * ceil_c - p
        return (ceil_c - q) * tc + tc - p_c

    r_edge = edge_remainder(tx) * edge_remainder(ty)
    r_mid = 2 * tx * ty
    inner = (q - 2) * (q - 1) // 2  # sum of (m-1) for m in [2, q-1]
    r_q_total = p * p - q * r_edge - r_mid * inner
    if r_q_total % (q - 1) != 0 or r_q_total < 0:
        raise ArithmeticError(f"inconsistent multiplicities for p={p}, t={t}")
    r_q = r_q_total // (q - 1)

    out: list[tuple[int, int, float, int]] = []
    for m in range(2, q + 2):
        r = r_mid if m < q else (r_q if m == q else r_edge)
        for k in range(1, m):
            out.append((m, k, 4.0 * math.sin(k * math.pi / (2.0 * m)) ** 2, r))
    return out


def white_noise_eigenvalues(p: int, t) -> list[tuple[float, int]]:
    """Flat ``(eigenvalue, multiplicity)`` form of the closed-form
    white-noise spectrum; offsets with no patch overlap give the single
    eigenvalue 2 with multiplicity ``p^2``."""
    tx, ty = abs(int(t[0])), abs(int(t[1]))
    if max(tx, ty) >= p:
        return [(2.0, p * p)]
    return [
        (lam, r)
        for _, _, lam, r in white_noise_eigenvalue_blocks(p, t)
        if r > 0
    ]


def white_noise_law(p: int, t) -> QuadFormLaw:
    """Auto-similarity law under unit white noise on the plane.

    Uses the closed-form eigenvalues when both offset components are
    nonzero, the exact non-overlap law when the offset clears the patch,
    and dense-covariance traces for axis-aligned overlapping offsets.
    """
    tx, ty = int(t[0]), int(t[1])
    if tx == 0 and ty == 0:
        return QuadFormLaw(0.0, 0.0, 0.0)
    if max(abs(tx), abs(ty)) >= p or (tx != 0 and ty != 0):
        return QuadFormLaw.from_eigenvalues(white_noise_eigenvalues(p, t))
    c = white_noise_covariance(p, t)
    k1 = float(np.trace(c))
    k2 = 2.0 * float(np.sum(c * c))
    k3 = 8.0 * float(np.sum(c * (c @ c)))
    return QuadFormLaw(k1=k1, k2=k2, k3=k3)


def sample(model: MicrotextureModel, seed_or_rng) -> np.ndarray:
    """One draw of ``f * W`` via the spectral product; seeded and exact up
    to FFT round-off."""
    rng = np.random.default_rng(seed_or_rng) if not isinstance(
        seed_or_rng, np.random.Generator
    ) else seed_or_rng
    w = rng.standard_normal(model.shape)
    spec = np.fft.rfft2(model.kernel) * np.fft.rfft2(w)
    return np.fft.irfft2(spec, s=model.shape)


def save_model(model: MicrotextureModel, prefix) -> None:
    """Serialize as kernel PFM plus a JSON metadata sidecar."""
    prefix = Path(prefix)
    pfm_path = prefix.with_suffix(".pfm")
    imgio.write_pfm(pfm_path, model.kernel)
    digest = hashlib.sha256(pfm_path.read_bytes()).hexdigest()
    meta = {
        "kind": model.kind,
        "dims": [int(model.shape[1]), int(model.shape[0])],
        "checksum": f"sha256:{digest}",
    }
    prefix.with_suffix(".json").write_text(json.dumps(meta, indent=2) + "\n")


def load_model(prefix) -> MicrotextureModel:
    """Load a serialized model; verifies the checksum and recomputes the
    cached autocorrelation from the stored kernel."""
    prefix = Path(prefix)
    meta = json.loads(prefix.with_suffix(".json").read_text())
    pfm_path = prefix.with_suffix(".pfm")
    digest = hashlib.sha256(pfm_path.read_bytes()).hexdigest()
    if meta["checksum"] != f"sha256:{digest}":
        raise ValueError(f"checksum mismatch for {pfm_path}")
    kernel = imgio.read_pfm(pfm_path)
    if [kernel.shape[1], kernel.shape[0]] != meta["dims"]:
        raise ValueError("dims mismatch in model metadata")
    return MicrotextureModel(
        kernel=kernel, gamma=_symmetrized(autocorrelation(kernel)), kind=meta["kind"]
    )
