"""Stokes vectors, Mueller matrices, frame conversions, Stokes-field grids,
and the synthetic analytic pBRDF.

A Stokes component vector is numeric and only meaningful together with a
measurement frame whose z axis is the propagation direction; reframing
rotates the (s1, s2) pair by twice the frame angle.  Stokes fields are stored
as components under the theta-phi frame field at each sample (no frames are
stored).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geom import (SphereGrid, complex_pair_separate, frame_theta_phi,
                   normalize, sph_to_dir)


# ---------------------------------------------------------------------------
# frame conversion of Stokes components
# ---------------------------------------------------------------------------

def frame_angle(frm, to, tol=1e-9):
    """Angle t with to = frm @ Rz(t); both frames must share their z axis.

    tol bounds the accepted z-axis mismatch (near-pole spherical-coordinate
    round trips can amplify representation noise to ~1e-8).
    """
    frm = np.asarray(frm, dtype=float)
    to = np.asarray(to, dtype=float)
    if np.max(np.abs(frm[..., :, 2] - to[..., :, 2])) > tol:
        raise ValueError("frames have different propagation directions")
    x_new = to[..., :, 0]
    c = np.einsum("...i,...i->...", x_new, frm[..., :, 0])
    s = np.einsum("...i,...i->...", x_new, frm[..., :, 1])
    return np.arctan2(s, c)


def mueller_rotator(two_theta):
    """4x4 coordinate-conversion matrix C with the double-angle rotation."""
    c, s = np.cos(two_theta), np.sin(two_theta)
    return np.array([[1.0, 0.0, 0.0, 0.0],
                     [0.0, c, s, 0.0],
                     [0.0, -s, c, 0.0],
                     [0.0, 0.0, 0.0, 1.0]])


def stokes_reframe(s, frm, to):
    """Stokes components measured in `frm`, re-measured in `to`."""
    t = frame_angle(frm, to)
    return mueller_rotator(2.0 * t) @ np.asarray(s, dtype=float)


@dataclass
class GeometricStokes:
    """Frame-tagged Stokes components; equality is modulo reframing."""
    components: np.ndarray
    frame: np.ndarray

    def __post_init__(self):
        self.components = np.asarray(self.components, dtype=float)
        self.frame = np.asarray(self.frame, dtype=float)

    @property
    def direction(self):
        return self.frame[:, 2]

    def in_frame(self, to):
        return stokes_reframe(self.components, self.frame, to)


def stokes_rotate(s: GeometricStokes, R) -> GeometricStokes:
    """Rotate the underlying ray: components unchanged, frame rotated."""
    return GeometricStokes(s.components.copy(), np.asarray(R) @ s.frame)


def stokes_inner(s: GeometricStokes, t: GeometricStokes) -> float:
    """Frame-independent dot product; directions must agree."""
    if np.max(np.abs(s.direction - t.direction)) > 1e-9:
        raise ValueError("Stokes vectors along different directions")
    return float(np.dot(s.components, t.in_frame(s.frame)))


def stokes_equal(s: GeometricStokes, t: GeometricStokes, tol=1e-12) -> bool:
    if np.max(np.abs(s.direction - t.direction)) > 1e-9:
        return False
    return bool(np.max(np.abs(s.components - t.in_frame(s.frame))) <= tol)


# ---------------------------------------------------------------------------
# Mueller matrices
# ---------------------------------------------------------------------------

@dataclass
class MuellerMatrix:
    """4x4 Mueller matrix together with its input and output frames."""
    matrix: np.ndarray
    frame_in: np.ndarray
    frame_out: np.ndarray

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=float)
        self.frame_in = np.asarray(self.frame_in, dtype=float)
        self.frame_out = np.asarray(self.frame_out, dtype=float)

    def apply(self, s: GeometricStokes) -> GeometricStokes:
        return GeometricStokes(self.matrix @ s.in_frame(self.frame_in),
                               self.frame_out)


def mueller_reframe(M: MuellerMatrix, new_in, new_out) -> MuellerMatrix:
    """Express the same Mueller transform under new frames."""
    c_out = mueller_rotator(2.0 * frame_angle(M.frame_out, new_out))
    c_in = mueller_rotator(2.0 * frame_angle(M.frame_in, new_in))
    return MuellerMatrix(c_out @ M.matrix @ c_in.T, new_in, new_out)


def mueller_spin22(M: np.ndarray):
    """Complex pair (iso, conj) of the spin 2-to-2 submatrix of a 4x4 matrix."""
    return complex_pair_separate(np.asarray(M)[1:3, 1:3])


# ---------------------------------------------------------------------------
# Stokes fields on equirectangular grids
# ---------------------------------------------------------------------------

SAMPLING_QUAD = "quadrature-nodes"
SAMPLING_PIXEL = "uniform-pixel-centers"


@dataclass
class StokesField:
    """Grid of Stokes components measured under frame_theta_phi(theta, phi).

    data has shape (n_theta, n_phi, 4).  For quadrature sampling the grid
    object carries the Gauss-Legendre nodes/weights.
    """
    data: np.ndarray
    sampling: str
    grid: SphereGrid | None = None

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.data.ndim != 3 or self.data.shape[2] != 4:
            raise ValueError("StokesField data must have shape (n_theta, n_phi, 4)")
        if self.sampling == SAMPLING_QUAD and self.grid is None:
            raise ValueError("quadrature sampling requires a grid")

    @property
    def n_theta(self):
        return self.data.shape[0]

    @property
    def n_phi(self):
        return self.data.shape[1]

    def angles(self):
        if self.sampling == SAMPLING_QUAD:
            return self.grid.angles()
        th = (np.arange(self.n_theta) + 0.5) * np.pi / self.n_theta
        ph = (np.arange(self.n_phi) + 0.5) * 2.0 * np.pi / self.n_phi
        return np.meshgrid(th, ph, indexing="ij")

    def spin2_complex(self):
        return self.data[..., 1] + 1j * self.data[..., 2]


def stokes_field_from_function(fn, grid: SphereGrid) -> StokesField:
    """Sample `fn(theta, phi) -> (..., 4)` on a quadrature grid."""
    th, ph = grid.angles()
    return StokesField(np.asarray(fn(th, ph), dtype=float), SAMPLING_QUAD, grid)


# ---------------------------------------------------------------------------
# physically valid range
# ---------------------------------------------------------------------------

def clamp_valid_range(s):
    """Scale (s1, s2, s3) uniformly so that s0 >= |(s1, s2, s3)|.

    Preserves the polarization direction (AoLP); the zero-intensity case maps
    to a fully unpolarized zero vector.
    """
    s = np.asarray(s, dtype=float)
    pol = np.linalg.norm(s[..., 1:], axis=-1)
    s0 = np.clip(s[..., 0], 0.0, None)
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = np.where(pol > s0, np.where(pol > 0.0, s0 / np.where(pol > 0, pol, 1.0), 0.0), 1.0)
    out = s.copy()
    out[..., 0] = s[..., 0]
    out[..., 1:] = s[..., 1:] * scale[..., None]
    return out


# ---------------------------------------------------------------------------
# synthetic analytic pBRDF
# ---------------------------------------------------------------------------

def _fresnel_rs_rp(cos_i, ior):
    """Amplitude reflection coefficients of a dielectric interface."""
    cos_i = np.asarray(cos_i, dtype=float)
    sin2_t = (1.0 - cos_i ** 2) / ior ** 2
    cos_t = np.sqrt(np.clip(1.0 - sin2_t, 0.0, None))
    rs = (cos_i - ior * cos_t) / (cos_i + ior * cos_t)
    rp = (ior * cos_i - cos_t) / (ior * cos_i + cos_t)
    return rs, rp


def fresnel_mueller(cos_i, ior):
    """Mueller matrix of dielectric specular reflection in the s-p frame.

    The frame convention puts the x axis along the s direction (perpendicular
    to the plane of incidence) for both the incident and reflected rays.
    Broadcasts over cos_i; returns (..., 4, 4).
    """
    rs, rp = _fresnel_rs_rp(cos_i, ior)
    a = 0.5 * (rs ** 2 + rp ** 2)
    b = 0.5 * (rs ** 2 - rp ** 2)
    c = rs * rp
    z = np.zeros_like(a)
    return np.stack([
        np.stack([a, b, z, z], axis=-1),
        np.stack([b, a, z, z], axis=-1),
        np.stack([z, z, c, z], axis=-1),
        np.stack([z, z, z, c], axis=-1),
    ], axis=-2)


class SyntheticPbrdf:
    """Smooth isotropic polarizing pBRDF used as a stand-in material.

    A Gaussian lobe about the mirror direction of the incident ray times the
    Fresnel Mueller matrix of a dielectric, with a smooth horizon falloff.
    All ingredients are analytic in the direction dot products, so the field
    is exactly azimuthally symmetric about the normal and has rapidly
    decaying frequency content for large roughness.  Cosine weighting is
    folded in.  Callable as pbrdf(w_i, w_o) -> (4, 4) components under the
    theta-phi frames of w_i and w_o (vectorized over leading axes).
    """

    def __init__(self, normal=(0.0, 0.0, 1.0), roughness=0.5, ior=1.5,
                 horizon_sharpness=None):
        if roughness <= 0.0:
            raise ValueError("roughness must be positive")
        if ior <= 1.0:
            raise ValueError("ior must exceed 1")
        self.normal = normalize(np.asarray(normal, dtype=float))
        self.roughness = float(roughness)
        self.ior = float(ior)
        # None disables the lower-hemisphere falloff (fully smooth variant)
        self.horizon_sharpness = horizon_sharpness

    def mueller_block(self, w_i, w_o):
        """Raw Mueller matrices in the per-ray s-p frames.

        Each ray's s axis is perpendicular to its own (normal, ray) plane, so
        the frames and the matrix vary smoothly away from w || +-normal.
        """
        w_i = np.asarray(w_i, dtype=float)
        w_o = np.asarray(w_o, dtype=float)
        n = self.normal
        ci = w_i @ n
        mirror = 2.0 * ci[..., None] * n - w_i
        # lobe in the dot product, analytic on the whole sphere
        t = np.einsum("...i,...i->...", mirror, np.broadcast_to(w_o, mirror.shape))
        lobe = np.exp((t - 1.0) / self.roughness ** 2)
        if self.horizon_sharpness is not None:
            # logistic falloff keeps the response one-sided; the sharpness
            # trades physical plausibility against spectral decay
            k = self.horizon_sharpness
            co = np.broadcast_to(w_o, mirror.shape) @ n
            lobe = lobe / (1.0 + np.exp(-ci / k)) / (1.0 + np.exp(-co / k))
        # cosine weighting kept analytic; the masked variant suppresses the
        # unphysical negative-cosine region instead of clamping it
        lobe = lobe * ci
        # Fresnel at a smooth proxy angle: cos_f = (1 + n.w_i) / 2
        cos_f = 0.5 * (1.0 + ci)
        rs, rp = _fresnel_rs_rp(cos_f, self.ior)
        a = 0.5 * (rs ** 2 + rp ** 2)
        b = 0.5 * (rs ** 2 - rp ** 2)
        cc = rs * rp
        # Polarizing couplings need a polarization reference on the side they
        # touch, which degenerates where that ray is parallel to the normal;
        # the sin^2 factors make the geometric field continuous there.
        co = np.broadcast_to(w_o, w_i.shape) @ n
        gi = 1.0 - ci ** 2
        go = 1.0 - co ** 2
        z = np.zeros_like(a)
        M = np.stack([
            np.stack([a, b * gi, z, z], axis=-1),
            np.stack([b * go, a * gi * go, z, z], axis=-1),
            np.stack([z, z, cc * gi * go, z], axis=-1),
            np.stack([z, z, z, cc], axis=-1),
        ], axis=-2)
        return M * lobe[..., None, None]

    def _s_axis(self, w):
        """Unit s direction normal x w (fixed fallback along the axis)."""
        n = self.normal
        s_dir = np.cross(np.broadcast_to(n, w.shape), w)
        nrm = np.linalg.norm(s_dir, axis=-1, keepdims=True)
        fallback = np.cross(np.broadcast_to(np.array([1.0, 0.0, 0.0]), w.shape), w)
        fb_n = np.linalg.norm(fallback, axis=-1, keepdims=True)
        return np.where(nrm > 1e-9, s_dir / np.where(nrm > 0, nrm, 1.0),
                        fallback / np.where(fb_n > 0, fb_n, 1.0))

    def __call__(self, w_i, w_o):
        """Mueller components under theta-phi frames at w_i and w_o."""
        w_i = np.asarray(w_i, dtype=float)
        w_o = np.asarray(w_o, dtype=float)
        w_i_b, w_o_b = np.broadcast_arrays(w_i, w_o)
        M = self.mueller_block(w_i_b, w_o_b)
        rot_in = _reframe_from_x(self._s_axis(w_i_b), w_i_b)
        rot_out = _reframe_from_x(self._s_axis(w_o_b), w_o_b)
        return np.einsum("...ij,...jk,...kl->...il", rot_out, M,
                         np.swapaxes(rot_in, -1, -2))


def _reframe_from_x(x_axis, w):
    """C matrix taking components from frame [x, w x x, w] to theta-phi."""
    # project the given x axis onto the tangent basis at w
    th, ph = _dirs_to_sph_arrays(w)
    F = frame_theta_phi(th, ph)
    c = np.einsum("...i,...i->...", x_axis, F[..., :, 0])
    s = np.einsum("...i,...i->...", x_axis, F[..., :, 1])
    ang = np.arctan2(s, c)   # x_axis = Rz(ang) applied to theta_hat
    two = -2.0 * ang
    co, si = np.cos(two), np.sin(two)
    z = np.zeros_like(co)
    one = np.ones_like(co)
    return np.stack([
        np.stack([one, z, z, z], axis=-1),
        np.stack([z, co, si, z], axis=-1),
        np.stack([z, -si, co, z], axis=-1),
        np.stack([z, z, z, one], axis=-1),
    ], axis=-2)


def _dirs_to_sph_arrays(d):
    d = np.asarray(d, dtype=float)
    z = np.clip(d[..., 2], -1.0, 1.0)
    theta = np.arccos(z)
    phi = np.arctan2(d[..., 1], d[..., 0])
    return theta, phi


def synthetic_pbrdf(normal=(0.0, 0.0, 1.0), roughness=0.5, ior=1.5,
                    horizon_sharpness=None) -> SyntheticPbrdf:
    """Factory for the synthetic analytic pBRDF (a MuellerFieldFn)."""
    return SyntheticPbrdf(normal, roughness, ior, horizon_sharpness)
