"""Directions, frames, rotations, sphere quadrature grids, and C <-> R^2 helpers.

All directions are unit 3-vectors in global-frame coordinates, all angles are
radians, all matrices are row-major float64.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

TWO_PI = 2.0 * np.pi


# ---------------------------------------------------------------------------
# directions and spherical coordinates
# ---------------------------------------------------------------------------

def normalize(v):
    """Return v / |v| (last-axis normalization for stacked vectors)."""
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    return v / n


def sph_to_dir(theta, phi):
    """Unit direction for zenith angle theta and azimuth phi.

    Works element-wise on broadcastable arrays; returns shape (..., 3).
    """
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    st = np.sin(theta)
    return np.stack([st * np.cos(phi), st * np.sin(phi), np.cos(theta)], axis=-1)


def dir_to_sph(d):
    """Inverse of sph_to_dir: theta in [0, pi], phi in [0, 2*pi).

    At the poles phi is returned as 0 by convention.
    """
    d = np.asarray(d, dtype=float)
    z = np.clip(d[..., 2], -1.0, 1.0)
    theta = np.arccos(z)
    phi = np.mod(np.arctan2(d[..., 1], d[..., 0]), TWO_PI)
    at_pole = np.abs(np.abs(z) - 1.0) < 1e-15
    phi = np.where(at_pole, 0.0, phi)
    if theta.ndim == 0:
        return float(theta), float(phi)
    return theta, phi


# ---------------------------------------------------------------------------
# frames
# ---------------------------------------------------------------------------

def frame_theta_phi(theta, phi):
    """theta-phi frame: columns [theta_hat, phi_hat, omega_hat].

    At theta in {0, pi} the direct substitution is used, so the returned frame
    depends on phi; callers that need a particular pole frame pass phi
    explicitly.  Broadcasts; returns shape (..., 3, 3).
    """
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    st, ct = np.sin(theta), np.cos(theta)
    sp, cp = np.sin(phi), np.cos(phi)
    zero = np.zeros(np.broadcast(theta, phi).shape)
    th_hat = np.stack([ct * cp, ct * sp, -st + zero], axis=-1)
    ph_hat = np.stack([-sp + zero, cp + zero, zero], axis=-1)
    w_hat = np.stack([st * cp, st * sp, ct + zero], axis=-1)
    return np.stack([th_hat, ph_hat, w_hat], axis=-1)


def frame_for_dir(d):
    """theta-phi frame at an arbitrary direction (pole phi = 0 convention)."""
    theta, phi = dir_to_sph(d)
    return frame_theta_phi(theta, phi)


def frame_perspective(d, up):
    """Perspective-camera frame field [normalize(up x d), d x x_hat, d].

    `up` is the camera up axis in world coordinates; undefined when d || up.
    """
    d = np.asarray(d, dtype=float)
    up = np.asarray(up, dtype=float)
    x = normalize(np.cross(np.broadcast_to(up, d.shape), d))
    y = np.cross(d, x)
    return np.stack([x, y, d], axis=-1)


def is_frame(F, tol=1e-12):
    F = np.asarray(F)
    return (np.allclose(F.T @ F, np.eye(3), atol=tol)
            and abs(np.linalg.det(F) - 1.0) < max(tol, 1e-10))


# ---------------------------------------------------------------------------
# rotations
# ---------------------------------------------------------------------------

def rotation_z(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rotation_y(b):
    c, s = np.cos(b), np.sin(b)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rotation_zyz(alpha, beta, gamma):
    """R_z(alpha) @ R_y(beta) @ R_z(gamma)."""
    return rotation_z(alpha) @ rotation_y(beta) @ rotation_z(gamma)


def rotation_about_axis(axis, angle):
    """Rodrigues rotation about a (not necessarily unit) axis."""
    u = normalize(np.asarray(axis, dtype=float))
    ux, uy, uz = u
    K = np.array([[0.0, -uz, uy], [uz, 0.0, -ux], [-uy, ux, 0.0]])
    return np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * (K @ K)


def rotation_align(a, b):
    """A rotation sending unit vector a to unit vector b (shortest arc)."""
    a = normalize(np.asarray(a, dtype=float))
    b = normalize(np.asarray(b, dtype=float))
    c = float(np.dot(a, b))
    if c > 1.0 - 1e-14:
        return np.eye(3)
    if c < -1.0 + 1e-14:
        # pick any axis orthogonal to a
        helper = np.array([1.0, 0.0, 0.0]) if abs(a[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        axis = normalize(np.cross(a, helper))
        return rotation_about_axis(axis, np.pi)
    axis = np.cross(a, b)
    return rotation_about_axis(axis, np.arctan2(np.linalg.norm(axis), c))


def zyz_from_rotation(R):
    """ZYZ Euler angles (alpha, beta, gamma) with R = Rz(a) Ry(b) Rz(g)."""
    R = np.asarray(R, dtype=float)
    beta = np.arccos(np.clip(R[2, 2], -1.0, 1.0))
    if abs(R[2, 2]) > 1.0 - 1e-13:
        # gimbal: only alpha -+ gamma is determined; put it all in alpha
        if R[2, 2] > 0.0:
            alpha = np.arctan2(R[1, 0], R[0, 0])
        else:
            alpha = np.arctan2(-R[1, 0], -R[0, 0])
        return alpha, beta, 0.0
    alpha = np.arctan2(R[1, 2], R[0, 2])
    gamma = np.arctan2(R[2, 1], -R[2, 0])
    return alpha, beta, gamma


def random_rotation(rng):
    """Haar-ish random rotation from a numpy Generator/RandomState."""
    return rotation_zyz(rng.uniform(0, TWO_PI),
                        np.arccos(rng.uniform(-1, 1)),
                        rng.uniform(0, TWO_PI))


def is_rotation(R, tol=1e-12):
    R = np.asarray(R)
    return (np.allclose(R.T @ R, np.eye(3), atol=tol)
            and abs(np.linalg.det(R) - 1.0) < max(tol, 1e-10))


# ---------------------------------------------------------------------------
# complex pair separation of 2x2 real matrices
# ---------------------------------------------------------------------------

JMAT = np.array([[1.0, 0.0], [0.0, -1.0]])


class ComplexPair(NamedTuple):
    iso: complex
    conj: complex


def c_to_r2(z):
    """Complex number(s) -> stacked [Re, Im] vectors."""
    z = np.asarray(z)
    return np.stack([z.real, z.imag], axis=-1)


def r2_to_c(v):
    v = np.asarray(v)
    return v[..., 0] + 1j * v[..., 1]


def c_to_r22(z):
    """Complex number -> [[x, -y], [y, x]] rotation-scaling matrix."""
    z = complex(z)
    return np.array([[z.real, -z.imag], [z.imag, z.real]])


def complex_pair_separate(M) -> ComplexPair:
    """Split a 2x2 real matrix into isomorphic and conjugation parts."""
    M = np.asarray(M, dtype=float)
    iso = 0.5 * (M[0, 0] + M[1, 1]) + 0.5j * (M[1, 0] - M[0, 1])
    conj = 0.5 * (M[0, 0] - M[1, 1]) + 0.5j * (M[1, 0] + M[0, 1])
    return ComplexPair(iso, conj)


def complex_pair_compose(pair) -> np.ndarray:
    """Inverse of complex_pair_separate: R22(iso) + R22(conj) @ J."""
    iso, conj = pair
    return c_to_r22(iso) + c_to_r22(conj) @ JMAT


# ---------------------------------------------------------------------------
# sphere quadrature
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SphereGrid:
    """Gauss-Legendre (in cos theta) x uniform-phi product grid.

    Integrates products of spherical harmonics up to combined band 2*band
    exactly.  theta_weights already include the phi cell width 2*pi/n_phi, so
    integral(f) = sum_ij w_i f(theta_i, phi_j).
    """
    band: int
    theta_nodes: np.ndarray     # (n_theta,)
    theta_weights: np.ndarray   # (n_theta,) including dphi factor
    n_phi: int

    @property
    def phi_nodes(self):
        return TWO_PI * np.arange(self.n_phi) / self.n_phi

    def angles(self):
        """Meshgrid (theta, phi) arrays of shape (n_theta, n_phi)."""
        th, ph = np.meshgrid(self.theta_nodes, self.phi_nodes, indexing="ij")
        return th, ph

    def weights(self):
        """(n_theta, n_phi) quadrature weights."""
        return np.repeat(self.theta_weights[:, None], self.n_phi, axis=1)

    def dirs(self):
        th, ph = self.angles()
        return sph_to_dir(th, ph)


def gauss_legendre_grid(l_max: int) -> SphereGrid:
    """Grid with l_max+1 Gauss-Legendre theta nodes and 2*l_max+2 phi samples."""
    if l_max < 0:
        raise ValueError("l_max must be >= 0")
    x, w = np.polynomial.legendre.leggauss(l_max + 1)
    theta = np.arccos(x[::-1])
    n_phi = 2 * l_max + 2
    weights = w[::-1] * (TWO_PI / n_phi)
    return SphereGrid(l_max, theta, weights, n_phi)


def fibonacci_directions(n: int) -> np.ndarray:
    """Deterministic spherical Fibonacci point set, shape (n, 3)."""
    i = np.arange(n)
    z = 1.0 - (2.0 * i + 1.0) / n
    golden = (1.0 + np.sqrt(5.0)) / 2.0
    phi = TWO_PI * np.mod(i / golden, 1.0)
    st = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    return np.stack([st * np.cos(phi), st * np.sin(phi), z], axis=-1)
