"""Polarized spherical harmonics.

Spin-2 spherical harmonics, the combined PSH basis over real coefficients,
projection/reconstruction of Stokes fields, rotation blocks, and the
spin-0 x spin-2 triple product.

The spin-2 basis is evaluated through Wigner-d functions,
    2Y_lm(theta, phi) = sqrt((2l+1)/(4 pi)) e^{i m phi} d^l_{m,-2}(theta),
which is regular at the poles; the scalar-SH combination formula is kept as a
cross-check away from the poles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import shscalar as sh
from .geom import SphereGrid, frame_theta_phi, sph_to_dir, dir_to_sph
from .polar import StokesField, SAMPLING_QUAD, frame_angle
from .shscalar import FOUR_PI, sh_index, sh_size

# ---------------------------------------------------------------------------
# index sets
# ---------------------------------------------------------------------------

def spin2_size(l_max: int) -> int:
    """Number of (l, m) pairs with 2 <= l <= l_max."""
    return sh_size(l_max) - 4 if l_max >= 2 else 0


def spin2_index(l: int, m: int) -> int:
    if l < 2 or abs(m) > l:
        raise ValueError(f"invalid spin-2 index (l={l}, m={m})")
    return sh_index(l, m) - 4


def psh_size(l_max: int) -> int:
    """Length of a PSH coefficient vector (p in {1,2} absent below l=2)."""
    return 2 * sh_size(l_max) + 2 * spin2_size(l_max)


def psh_index_list(l_max: int):
    """Canonical I_PSH ordering: (l, m, p) lexicographic."""
    out = []
    for l in range(l_max + 1):
        for m in range(-l, l + 1):
            for p in (0, 1, 2, 3):
                if p in (1, 2) and l < 2:
                    continue
                out.append((l, m, p))
    return out


def psh_index(l: int, m: int, p: int, l_max: int) -> int:
    """Flat canonical index of (l, m, p)."""
    if l > l_max or abs(m) > l or p not in (0, 1, 2, 3):
        raise ValueError(f"invalid PSH index ({l}, {m}, {p})")
    if p in (1, 2) and l < 2:
        raise ValueError("p in {1,2} requires l >= 2")
    per_m = 2 if l < 2 else 4
    base = psh_size(l - 1) if l > 0 else 0
    off = (m + l) * per_m
    order = {0: 0, 3: 1} if l < 2 else {0: 0, 1: 1, 2: 2, 3: 3}
    return base + off + order[p]


@dataclass
class PshCoeffs:
    """Real PSH coefficient vector, stored as three per-(l,m) parts.

    s0 and s3 are real-SH coefficient arrays of length (l_max+1)^2; spin2 is
    the complex array f_{lm1} + i f_{lm2} over the spin-2 index set.
    """
    l_max: int
    s0: np.ndarray
    spin2: np.ndarray
    s3: np.ndarray

    def __post_init__(self):
        self.s0 = np.asarray(self.s0, dtype=float)
        self.s3 = np.asarray(self.s3, dtype=float)
        self.spin2 = np.asarray(self.spin2, dtype=complex)
        if self.s0.shape[-1] != sh_size(self.l_max) or self.spin2.shape[-1] != spin2_size(self.l_max):
            raise ValueError("coefficient part lengths do not match l_max")

    @classmethod
    def zeros(cls, l_max):
        return cls(l_max, np.zeros(sh_size(l_max)), np.zeros(spin2_size(l_max), dtype=complex),
                   np.zeros(sh_size(l_max)))

    @classmethod
    def from_flat(cls, l_max, flat):
        flat = np.asarray(flat, dtype=float)
        if flat.shape[-1] != psh_size(l_max):
            raise ValueError("flat vector length does not match l_max")
        c = cls.zeros(l_max)
        for i, (l, m, p) in enumerate(psh_index_list(l_max)):
            if p == 0:
                c.s0[sh_index(l, m)] = flat[i]
            elif p == 3:
                c.s3[sh_index(l, m)] = flat[i]
            elif p == 1:
                c.spin2[spin2_index(l, m)] += flat[i]
            else:
                c.spin2[spin2_index(l, m)] += 1j * flat[i]
        return c

    def flat(self):
        out = np.empty(psh_size(self.l_max))
        for i, (l, m, p) in enumerate(psh_index_list(self.l_max)):
            if p == 0:
                out[i] = self.s0[sh_index(l, m)]
            elif p == 3:
                out[i] = self.s3[sh_index(l, m)]
            elif p == 1:
                out[i] = self.spin2[spin2_index(l, m)].real
            else:
                out[i] = self.spin2[spin2_index(l, m)].imag
        return out

    def copy(self):
        return PshCoeffs(self.l_max, self.s0.copy(), self.spin2.copy(), self.s3.copy())

    def norm(self):
        return math.sqrt(float(np.sum(self.s0 ** 2) + np.sum(np.abs(self.spin2) ** 2)
                               + np.sum(self.s3 ** 2)))

    def truncated(self, l_new):
        if l_new > self.l_max:
            raise ValueError("cannot extend band by truncation")
        return PshCoeffs(l_new, self.s0[:sh_size(l_new)].copy(),
                         self.spin2[:spin2_size(l_new)].copy(),
                         self.s3[:sh_size(l_new)].copy())


# ---------------------------------------------------------------------------
# spin-2 spherical harmonics
# ---------------------------------------------------------------------------

def s2sh_basis(l_max: int, theta, phi) -> np.ndarray:
    """Matrix of 2Y_lm values over the spin-2 index set, shape (N, n_spin2)."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float)).ravel()
    phi = np.atleast_1d(np.asarray(phi, dtype=float)).ravel()
    out = np.zeros((theta.size, spin2_size(l_max)), dtype=complex)
    if l_max < 2:
        return out
    for m in range(-l_max, l_max + 1):
        cols = sh.wigner_small_d_column(l_max, m, -2, theta)
        e = np.exp(1j * m * phi)
        for l in range(max(2, abs(m)), l_max + 1):
            out[:, spin2_index(l, m)] = math.sqrt((2 * l + 1) / FOUR_PI) * cols[l] * e
    return out


def s2sh_eval(l: int, m: int, theta, phi):
    """Single spin-2 SH value(s); exact at the poles."""
    if l < 2 or abs(m) > l:
        raise ValueError("spin-2 SH need l >= 2 and |m| <= l")
    v = s2sh_basis(l, theta, phi)[:, spin2_index(l, m)]
    return v[0] if v.size == 1 else v


def s2sh_eval_direct(l: int, m: int, theta, phi):
    """Spin-2 SH via the scalar-SH combination; singular near the poles.

    Cross-check path only; raises close to the poles where the 1/sin^2 terms
    blow up (use s2sh_eval there).
    """
    if l < 2 or abs(m) > l:
        raise ValueError("spin-2 SH need l >= 2 and |m| <= l")
    theta = np.asarray(theta, dtype=float)
    if np.any(np.sin(theta) <= 1e-6):
        raise ValueError("formula is singular at the poles; use s2sh_eval")
    st = np.sin(theta)
    ct = np.cos(theta)
    cot = ct / st
    alpha = ((2.0 * m * m - l * (l + 1)) / st ** 2
             - 2.0 * m * (l - 1) * cot / st + l * (l - 1) * cot ** 2)
    beta = 2.0 * math.sqrt((2 * l + 1) / (2 * l - 1.0) * (l * l - m * m)) * (m / st ** 2 + cot / st)
    pref = math.sqrt(math.factorial(l - 2) / math.factorial(l + 2))
    ylm = sh.sh_complex(l, m, theta, phi)
    ylm1 = sh.sh_complex(l - 1, m, theta, phi) if abs(m) <= l - 1 else 0.0 * np.asarray(ylm)
    return pref * (alpha * ylm + beta * ylm1)


# ---------------------------------------------------------------------------
# PSH basis evaluation / projection / reconstruction
# ---------------------------------------------------------------------------

def psh_basis_eval(l: int, m: int, p: int, theta, phi) -> np.ndarray:
    """Stokes components of one PSH basis function under the theta-phi frame."""
    theta = np.asarray(theta, dtype=float)
    shape = np.broadcast(theta, np.asarray(phi)).shape
    out = np.zeros(shape + (4,))
    if p in (0, 3):
        y = sh.sh_real(l, m, np.ravel(theta), np.ravel(np.asarray(phi, dtype=float)))
        out[..., 0 if p == 0 else 3] = np.reshape(y, shape)
    else:
        y = s2sh_eval(l, m, np.ravel(theta), np.ravel(np.asarray(phi, dtype=float)))
        y = np.reshape(1j ** (p - 1) * y, shape)
        out[..., 1] = y.real
        out[..., 2] = y.imag
    return out


def psh_project(field: StokesField, l_max: int) -> PshCoeffs:
    """Quadrature projection f_lmp = <Y_lmp, f> of a Stokes field."""
    if field.sampling != SAMPLING_QUAD:
        raise ValueError("projection requires quadrature sampling")
    if field.grid.band < l_max:
        raise ValueError(f"grid band {field.grid.band} insufficient for l_max {l_max}")
    th, ph = field.grid.angles()
    w = field.grid.weights().ravel()
    br = sh.sh_basis_real(l_max, th.ravel(), ph.ravel())
    b2 = s2sh_basis(l_max, th.ravel(), ph.ravel())
    s0 = br.T @ (w * field.data[..., 0].ravel())
    s3 = br.T @ (w * field.data[..., 3].ravel())
    spin2 = b2.conj().T @ (w * field.spin2_complex().ravel())
    return PshCoeffs(l_max, s0, spin2, s3)


def psh_reconstruct(coeffs: PshCoeffs, theta, phi) -> np.ndarray:
    """Evaluate the Stokes field (components under theta-phi frames)."""
    theta = np.asarray(theta, dtype=float)
    shape = np.broadcast(theta, np.asarray(phi)).shape
    th = np.ravel(np.broadcast_to(theta, shape)).astype(float)
    ph = np.ravel(np.broadcast_to(np.asarray(phi, dtype=float), shape))
    br = sh.sh_basis_real(coeffs.l_max, th, ph)
    b2 = s2sh_basis(coeffs.l_max, th, ph)
    s0 = br @ coeffs.s0
    s3 = br @ coeffs.s3
    c = b2 @ coeffs.spin2
    out = np.stack([s0, c.real, c.imag, s3], axis=-1)
    return out.reshape(shape + (4,))


def psh_reconstruct_field(coeffs: PshCoeffs, grid: SphereGrid) -> StokesField:
    th, ph = grid.angles()
    return StokesField(psh_reconstruct(coeffs, th, ph), SAMPLING_QUAD, grid)


# ---------------------------------------------------------------------------
# rotation
# ---------------------------------------------------------------------------

def psh_rotation_block(l: int, R, dc=None) -> np.ndarray:
    """Dense rotation block over (m, p) for one l, canonical ordering.

    Realizes diag(D^R, R2x2(D^C), D^R) per (m_o, m_i) pair.
    """
    n_p = 2 if l < 2 else 4
    n = (2 * l + 1) * n_p
    if dc is None:
        dc = sh.wigner_d_complex(l, R)
    dr = sh.wigner_d_real_from_complex(dc)
    out = np.zeros((n, n))
    for i in range(2 * l + 1):
        for j in range(2 * l + 1):
            bi, bj = i * n_p, j * n_p
            if l < 2:
                out[bi, bj] = dr[i, j]
                out[bi + 1, bj + 1] = dr[i, j]
            else:
                out[bi, bj] = dr[i, j]
                out[bi + 3, bj + 3] = dr[i, j]
                z = dc[i, j]
                out[bi + 1, bj + 1] = z.real
                out[bi + 1, bj + 2] = -z.imag
                out[bi + 2, bj + 1] = z.imag
                out[bi + 2, bj + 2] = z.real
    return out


def psh_rotation_matrix(l_max: int, R) -> np.ndarray:
    """Block-diagonal rotation matrix over the full canonical PSH index."""
    n = psh_size(l_max)
    out = np.zeros((n, n))
    base = 0
    stack = sh.wigner_d_stack(l_max, R)
    for l in range(l_max + 1):
        blk = psh_rotation_block(l, R, dc=stack[l])
        out[base:base + blk.shape[0], base:base + blk.shape[0]] = blk
        base += blk.shape[0]
    return out


def psh_rotate_coeffs(coeffs: PshCoeffs, R) -> PshCoeffs:
    """Per-l block application; no cross-l mixing."""
    out = PshCoeffs.zeros(coeffs.l_max)
    stack = sh.wigner_d_stack(coeffs.l_max, R)
    for l in range(coeffs.l_max + 1):
        sl = slice(sh_index(l, -l), sh_index(l, l) + 1)
        dr = sh.wigner_d_real_from_complex(stack[l])
        out.s0[sl] = dr @ coeffs.s0[sl]
        out.s3[sl] = dr @ coeffs.s3[sl]
        if l >= 2:
            s2 = slice(spin2_index(l, -l), spin2_index(l, l) + 1)
            out.spin2[s2] = stack[l] @ coeffs.spin2[s2]
    return out


# ---------------------------------------------------------------------------
# angular-domain rotation of Stokes fields (oracle machinery)
# ---------------------------------------------------------------------------

def rotate_field_components(eval_fn, R, theta, phi):
    """Sample the rotated field R_F[f] as components under theta-phi frames.

    eval_fn(theta, phi) -> (..., 4) must return components of f under
    frame_theta_phi(theta, phi).  (R_F f)(w) = R_S f(R^-1 w).
    """
    R = np.asarray(R, dtype=float)
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    w = sph_to_dir(theta, phi)
    w_src = w @ R  # row-vector form of R^-1 w
    th_s, ph_s = dir_to_sph(w_src)
    comps = np.asarray(eval_fn(th_s, ph_s), dtype=float)
    # frame carried by the rotation: G = R F_src, z axis = w
    F_src = frame_theta_phi(th_s, ph_s)
    G = np.einsum("ij,...jk->...ik", R, F_src)
    F_dst = frame_theta_phi(theta, phi)
    ang = frame_angle(G, F_dst)
    two = 2.0 * ang
    c, s = np.cos(two), np.sin(two)
    out = comps.copy()
    out[..., 1] = c * comps[..., 1] + s * comps[..., 2]
    out[..., 2] = -s * comps[..., 1] + c * comps[..., 2]
    return out


def reflect_field_components(eval_fn, theta, phi):
    """Sample the z-flip reflected field: (s0,s1,s2,s3)(pi-theta, phi) with s2 negated."""
    comps = np.asarray(eval_fn(np.pi - np.asarray(theta, dtype=float), phi), dtype=float)
    out = comps.copy()
    out[..., 2] = -comps[..., 2]
    return out


# ---------------------------------------------------------------------------
# triple product
# ---------------------------------------------------------------------------

def triple_product_022(l1, m1, l2, m2, l3, m3) -> float:
    """Integral of 2Y*_{l1 m1} Y_{l2 m2} 2Y_{l3 m3} over the sphere.

    The spin row of the second 3-j symbol is (2, 0, -2); writing it with the
    opposite signs flips odd l1+l2+l3 terms, which the quadrature oracle
    rejects.
    """
    if l1 < 2 or l3 < 2:
        raise ValueError("outer indices must be spin-2 (l >= 2)")
    return ((-1.0) ** m1
            * math.sqrt((2 * l1 + 1) * (2 * l2 + 1) * (2 * l3 + 1) / FOUR_PI)
            * sh.wigner3j(l1, l2, l3, -m1, m2, m3)
            * sh.wigner3j(l1, l2, l3, 2, 0, -2))
