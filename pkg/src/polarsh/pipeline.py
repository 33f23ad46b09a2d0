"""Desk-scale precomputed polarized radiance transfer.

Synthetic environment maps, a small mesh layer (OBJ subset + UV sphere), the
per-vertex precomputation chain (rotate material to the normal frame, shadow
via triple products, project the reflected high band onto convolution
coefficients), and runtime shading, plus the brute-force angular reference.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import psh as P
from . import shscalar as sh
from .geom import (gauss_legendre_grid, normalize, rotation_align, sph_to_dir,
                   dir_to_sph, frame_theta_phi)
from .operators import (PshCoeffMatrix, operator_apply, operator_project,
                        reflection_matrix_psh, shadow_expand,
                        visibility_from_spheres, visibility_project)
from .pconv import PolarConvKernelCoeffs, conv_project_operator, pconv_apply
from .polar import (StokesField, SyntheticPbrdf, frame_angle,
                    stokes_field_from_function)


def _n_workers():
    try:
        return max(1, int(os.environ.get("POLARSH_THREADS", "1")))
    except ValueError:
        return 1


def _map_maybe_parallel(fn, items):
    n = _n_workers()
    if n <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# synthetic environment maps
# ---------------------------------------------------------------------------

def random_psh_coeffs(l_max: int, seed: int = 0, unpolarized=False) -> P.PshCoeffs:
    """Deterministic band-limited random coefficients (physical validity not
    enforced; intended as test data)."""
    rng = np.random.default_rng(seed)
    c = P.PshCoeffs(
        l_max,
        rng.normal(size=sh.sh_size(l_max)),
        np.zeros(P.spin2_size(l_max), dtype=complex) if unpolarized else
        rng.normal(size=P.spin2_size(l_max)) + 1j * rng.normal(size=P.spin2_size(l_max)),
        rng.normal(size=sh.sh_size(l_max)))
    return c


def _tangent_complex(anchor, th, ph):
    """Complex theta-phi components of the tangent projection of a fixed axis."""
    w = sph_to_dir(th, ph)
    t = anchor - np.einsum("...i,i->...", w, anchor)[..., None] * w
    F = frame_theta_phi(th, ph)
    return (np.einsum("...i,...i->...", t, F[..., :, 0])
            + 1j * np.einsum("...i,...i->...", t, F[..., :, 1]))


def two_lobe_field_fn(th, ph):
    """Closed-form polarized field with two anchored lobes.

    The linear pair is a sum of squared tangent projections of fixed axes, so
    it is a genuine smooth spin-2 field satisfying the pole double-rotation
    condition; s0 dominates the polarization magnitude everywhere.
    """
    th = np.asarray(th, dtype=float)
    ph = np.asarray(ph, dtype=float)
    a = np.array([1.0, 0.0, 0.0])
    b = normalize(np.array([0.0, 1.0, 1.0]))
    w = sph_to_dir(th, ph)
    st = _tangent_complex(a, th, ph) ** 2 + 0.5 * _tangent_complex(b, th, ph) ** 2
    s0 = 1.0 + (w @ a) ** 2 + 0.5 * (w @ b) ** 2
    zero = np.zeros_like(s0)
    return np.stack([s0, st.real, st.imag, zero], axis=-1)


def sky_field_fn(th, ph, sun_dir=(0.6, 0.3, 0.74), turbidity=0.35, dop_max=0.6):
    """Analytic clear-sky-like Stokes field (valid range by construction)."""
    th = np.asarray(th, dtype=float)
    ph = np.asarray(ph, dtype=float)
    s = normalize(np.asarray(sun_dir, dtype=float))
    w = sph_to_dir(th, ph)
    cg = np.clip(w @ s, -1.0, 1.0)
    s0 = 0.25 + np.exp((cg - 1.0) / turbidity) + 0.35 * (1.0 + w[..., 2]) / 2.0
    dop = dop_max * (1.0 - cg ** 2) / (1.0 + cg ** 2)
    u = np.cross(np.broadcast_to(s, w.shape), w)
    nrm = np.linalg.norm(u, axis=-1, keepdims=True)
    u = u / np.where(nrm > 1e-12, nrm, 1.0)
    F = frame_theta_phi(th, ph)
    ut = (np.einsum("...i,...i->...", u, F[..., :, 0])
          + 1j * np.einsum("...i,...i->...", u, F[..., :, 1]))
    stl = dop * s0 * ut ** 2
    zero = np.zeros_like(s0)
    return np.stack([s0, stl.real, stl.imag, zero], axis=-1)


def synth_envmap(kind: str, l_max: int = 9, seed: int = 0, band: int | None = None) -> StokesField:
    """Deterministic synthetic Stokes environment maps on a quadrature grid."""
    grid = gauss_legendre_grid(band if band is not None else max(l_max, 9))
    if kind == "band-limited-random":
        c = random_psh_coeffs(l_max, seed)
        return P.psh_reconstruct_field(c, grid)
    if kind == "sky-analytic":
        return stokes_field_from_function(sky_field_fn, grid)
    if kind == "two-lobe-polarized":
        return stokes_field_from_function(two_lobe_field_fn, grid)
    raise ValueError(f"unknown environment kind {kind!r}")


# ---------------------------------------------------------------------------
# meshes
# ---------------------------------------------------------------------------

@dataclass
class Mesh:
    vertices: np.ndarray    # (N, 3)
    normals: np.ndarray     # (N, 3) unit
    triangles: np.ndarray   # (M, 3) int

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float)
        self.normals = np.asarray(self.normals, dtype=float)
        self.triangles = np.asarray(self.triangles, dtype=int)
        if self.triangles.size and self.triangles.max() >= len(self.vertices):
            raise ValueError("triangle index out of range")
        n = np.linalg.norm(self.normals, axis=-1)
        if np.any(np.abs(n - 1.0) > 1e-6):
            self.normals = self.normals / n[:, None]


def sphere_mesh(n_rings: int = 18, n_segments: int = 30, radius: float = 1.0) -> Mesh:
    """UV sphere; default resolution gives 512 vertices."""
    verts = [np.array([0.0, 0.0, radius])]
    for i in range(1, n_rings):
        t = np.pi * i / n_rings
        for j in range(n_segments):
            p = 2.0 * np.pi * j / n_segments
            verts.append(radius * sph_to_dir(t, p))
    verts.append(np.array([0.0, 0.0, -radius]))
    verts = np.asarray(verts)
    tris = []
    def ring(i, j):
        return 1 + (i - 1) * n_segments + (j % n_segments)
    for j in range(n_segments):
        tris.append([0, ring(1, j), ring(1, j + 1)])
    for i in range(1, n_rings - 1):
        for j in range(n_segments):
            a, b = ring(i, j), ring(i, j + 1)
            c, d = ring(i + 1, j), ring(i + 1, j + 1)
            tris.append([a, c, b])
            tris.append([b, c, d])
    last = len(verts) - 1
    for j in range(n_segments):
        tris.append([last, ring(n_rings - 1, j + 1), ring(n_rings - 1, j)])
    return Mesh(verts, verts / radius, np.asarray(tris))


def load_obj(path) -> Mesh:
    """ASCII OBJ subset: v / vn / f (v or v//vn indices)."""
    verts, norms, faces, face_norms = [], [], [], []
    with open(path) as f:
        for line in f:
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:4]])
            elif parts[0] == "vn":
                norms.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                idx = []
                nidx = []
                for tok in parts[1:4]:
                    fields = tok.split("/")
                    idx.append(int(fields[0]) - 1)
                    if len(fields) == 3 and fields[2]:
                        nidx.append(int(fields[2]) - 1)
                faces.append(idx)
                face_norms.append(nidx if len(nidx) == 3 else None)
    verts = np.asarray(verts)
    tris = np.asarray(faces, dtype=int)
    vnorm = np.zeros_like(verts)
    if norms and all(fn is not None for fn in face_norms):
        norms = np.asarray(norms)
        for tri, fn in zip(tris, face_norms):
            for v, ni in zip(tri, fn):
                vnorm[v] = norms[ni]
    else:
        # area-weighted face normals
        for tri in tris:
            a, b, c = verts[tri]
            fn = np.cross(b - a, c - a)
            for v in tri:
                vnorm[v] += fn
    vnorm = normalize(vnorm)
    return Mesh(verts, vnorm, tris)


def save_obj(path, mesh: Mesh):
    with open(path, "w") as f:
        for v in mesh.vertices:
            f.write(f"v {float(v[0])!r} {float(v[1])!r} {float(v[2])!r}\n")
        for n in mesh.normals:
            f.write(f"vn {float(n[0])!r} {float(n[1])!r} {float(n[2])!r}\n")
        for t in mesh.triangles:
            f.write(f"f {t[0]+1}//{t[0]+1} {t[1]+1}//{t[1]+1} {t[2]+1}//{t[2]+1}\n")


def ray_visibility(mesh: Mesh, vertex_index: int, dirs, eps=1e-6):
    """Brute-force triangle occlusion test from a vertex (Moller-Trumbore)."""
    origin = mesh.vertices[vertex_index] + eps * mesh.normals[vertex_index]
    dirs = np.asarray(dirs, dtype=float)
    vis = np.ones(dirs.shape[:-1])
    v0 = mesh.vertices[mesh.triangles[:, 0]]
    e1 = mesh.vertices[mesh.triangles[:, 1]] - v0
    e2 = mesh.vertices[mesh.triangles[:, 2]] - v0
    flat = dirs.reshape(-1, 3)
    hit = np.zeros(flat.shape[0], dtype=bool)
    for d_idx in range(flat.shape[0]):
        d = flat[d_idx]
        p = np.cross(d, e2)
        det = np.einsum("ij,ij->i", e1, p)
        ok = np.abs(det) > 1e-12
        inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
        tvec = origin - v0
        u = np.einsum("ij,ij->i", tvec, p) * inv
        q = np.cross(tvec, e1)
        v = q @ d * inv
        t = np.einsum("ij,ij->i", e2, q) * inv
        hit[d_idx] = np.any(ok & (u >= 0) & (v >= 0) & (u + v <= 1) & (t > eps))
    vis.reshape(-1)[hit] = 0.0
    return vis


# ---------------------------------------------------------------------------
# PPRT precompute and shade
# ---------------------------------------------------------------------------

@dataclass
class TransferRecord:
    """Per-vertex transfer data in the vertex's local frame."""
    normal: np.ndarray
    rotation: np.ndarray              # local -> world
    matrix_low: PshCoeffMatrix        # bands l <= l_low
    conv_high: PolarConvKernelCoeffs | None
    l_low: int
    l_high: int
    conv_residual: float = 0.0


def _truncate_matrix(M: PshCoeffMatrix, l_new: int) -> PshCoeffMatrix:
    n = P.psh_size(l_new)
    return PshCoeffMatrix(l_new, M.matrix[:n, :n].copy())


def pprt_precompute(mesh: Mesh, material: SyntheticPbrdf | PshCoeffMatrix,
                    occluders=(), l_low: int = 4, l_high: int = 9,
                    grid_band: int | None = None, l_vis: int | None = None,
                    use_ray_visibility: bool = False, n_rays: int = 2000):
    """Build per-vertex transfer records.

    material is either the local-frame pBRDF callable (projected here) or an
    already-projected coefficient matrix in the local frame (normal along z).
    Visibility comes from analytic sphere occluders by default, or from
    casting n_rays Fibonacci rays against the mesh itself.
    """
    if l_low > l_high:
        raise ValueError("l_low must not exceed l_high")
    if isinstance(material, PshCoeffMatrix):
        brdf_mat = material
        if brdf_mat.l_max < l_high:
            raise ValueError("material matrix band below l_high")
    else:
        grid = gauss_legendre_grid(grid_band if grid_band is not None else max(12, 2 * l_high))
        brdf_mat = operator_project(material, l_high, grid)
    if l_vis is None:
        l_vis = 2 * l_high
    vis_grid = gauss_legendre_grid(max(l_vis, 2 * l_high))
    refl = reflection_matrix_psh(l_high)
    z = np.array([0.0, 0.0, 1.0])

    def build(i):
        n = mesh.normals[i]
        Rv = rotation_align(z, n)
        # project the visibility directly in the vertex's local frame:
        # V_local(w) = V_world(Rv w)
        if use_ray_visibility:
            # Monte-Carlo projection from Fibonacci ray casts
            from .geom import fibonacci_directions
            dirs_f = fibonacci_directions(n_rays)
            world = dirs_f @ Rv.T
            vals = (ray_visibility(mesh, i, world)
                    * visibility_from_spheres(occluders, world))
            th_f, ph_f = dir_to_sph(dirs_f)
            B = sh.sh_basis_real(l_vis, th_f, ph_f)
            v_local = sh.ShCoeffs(l_vis, "real",
                                  (4.0 * np.pi / n_rays) * (B.T @ vals))
        else:
            v_local = visibility_project(
                lambda dirs: visibility_from_spheres(occluders, dirs @ Rv.T),
                l_vis, vis_grid)
        vmat = shadow_expand(v_local, l_high)
        T = PshCoeffMatrix(l_high, brdf_mat.matrix @ vmat.matrix)
        mat_low = _truncate_matrix(T, l_low)
        conv = None
        resid = 0.0
        if l_high > l_low:
            reflected = PshCoeffMatrix(l_high, refl.matrix @ T.matrix)
            kc, resid, _ = conv_project_operator(reflected)
            for arr in (kc.k00, kc.k03, kc.k30, kc.k33,
                        kc.k0p, kc.k3p, kc.kp0, kc.kp3, kc.kiso, kc.kconj):
                arr[:l_low + 1] = 0.0
            conv = kc
        return TransferRecord(n, Rv, mat_low, conv, l_low, l_high, resid)

    return _map_maybe_parallel(build, range(len(mesh.vertices)))


def _zero_band(c: P.PshCoeffs, l_from: int, l_to: int) -> P.PshCoeffs:
    """Zero coefficients with l_from <= l <= l_to."""
    out = c.copy()
    for l in range(l_from, l_to + 1):
        out.s0[sh.sh_index(l, -l):sh.sh_index(l, l) + 1] = 0.0
        out.s3[sh.sh_index(l, -l):sh.sh_index(l, l) + 1] = 0.0
        if l >= 2:
            out.spin2[P.spin2_index(l, -l):P.spin2_index(l, l) + 1] = 0.0
    return out


def pprt_shade(records, lighting: P.PshCoeffs, view_dirs, zero_s3=False):
    """Per-vertex outgoing Stokes components under world theta-phi frames.

    view_dirs are world-space outgoing directions (vertex toward eye).  The
    low band goes through the transfer matrix and is evaluated at the view
    direction; the high band goes through the convolution coefficients of the
    reflected transfer and is evaluated at the z-flipped local view direction.
    """
    if lighting.l_max < records[0].l_high:
        raise ValueError("lighting band below l_high")
    view_dirs = np.asarray(view_dirs, dtype=float)
    out = np.zeros((len(records), 4))

    def shade(i):
        rec = records[i]
        Rv = rec.rotation
        light_local = P.psh_rotate_coeffs(lighting.truncated(rec.l_high), Rv.T)
        wo_local = Rv.T @ view_dirs[i]
        th_l, ph_l = dir_to_sph(wo_local)
        low_out = operator_apply(rec.matrix_low, light_local.truncated(rec.l_low))
        comps = P.psh_reconstruct(low_out, th_l, ph_l)
        if rec.conv_high is not None and rec.l_high > rec.l_low:
            light_high = _zero_band(light_local, 0, rec.l_low)
            g = pconv_apply(rec.conv_high, light_high)
            flipped = np.array([wo_local[0], wo_local[1], -wo_local[2]])
            th_f, ph_f = dir_to_sph(flipped)
            gc = P.psh_reconstruct(g, th_f, ph_f)
            comps = comps + np.array([gc[0], gc[1], -gc[2], gc[3]])
        # local theta-phi frame -> world theta-phi frame at the view dir
        # (loose tolerance: near-pole round trips cost ~1e-8 in the z axis)
        G = Rv @ frame_theta_phi(th_l, ph_l)
        th_w, ph_w = dir_to_sph(view_dirs[i])
        ang = frame_angle(G, frame_theta_phi(th_w, ph_w), tol=1e-6)
        c2, s2 = math.cos(2 * ang), math.sin(2 * ang)
        res = np.array([comps[0],
                        c2 * comps[1] + s2 * comps[2],
                        -s2 * comps[1] + c2 * comps[2],
                        comps[3]])
        if zero_s3:
            res[3] = 0.0
        return res

    rows = _map_maybe_parallel(shade, range(len(records)))
    for i, r in enumerate(rows):
        out[i] = r
    return out


def save_vertex_stokes(csv_path, bin_path, mesh: Mesh, values):
    """Write per-vertex shading output as CSV plus raw float64.

    The CSV carries index, position, normal, and the four Stokes components;
    the binary file is the (n, 4) component array, little-endian row-major.
    """
    values = np.asarray(values, dtype=float)
    with open(csv_path, "w") as f:
        f.write("index,x,y,z,nx,ny,nz,s0,s1,s2,s3\n")
        for i, (v, n, s) in enumerate(zip(mesh.vertices, mesh.normals, values)):
            f.write(f"{i}," + ",".join(repr(float(x)) for x in (*v, *n, *s)) + "\n")
    with open(bin_path, "wb") as f:
        f.write(values.astype("<f8").tobytes())


def shade_reference(mesh: Mesh, vertex_index: int, material: SyntheticPbrdf,
                    occluders, lighting: P.PshCoeffs, view_dir,
                    band: int = 48):
    """Brute-force angular shading of one vertex (the convergence oracle).

    Integrates pBRDF x visibility x band-limited lighting on a fine world
    grid; the binary visibility keeps this an independent angular-domain
    computation.
    """
    n = mesh.normals[vertex_index]
    pb = SyntheticPbrdf(n, material.roughness, material.ior,
                        material.horizon_sharpness)
    grid = gauss_legendre_grid(band)
    th, ph = grid.angles()
    w = grid.weights().ravel()
    dirs = grid.dirs().reshape(-1, 3)
    light = P.psh_reconstruct(lighting, th, ph).reshape(-1, 4)
    vis = visibility_from_spheres(occluders, dirs).ravel()
    K = pb(dirs, np.asarray(view_dir, dtype=float)[None, :])
    return np.einsum("i,iab,ib->a", w * vis, K, light)
