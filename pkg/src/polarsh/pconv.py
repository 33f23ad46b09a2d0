"""Polarized spherical convolution.

Kernel representation k(theta) (a 4x4 Mueller matrix under great-circle
aligned frames), its PSH kernel coefficients, the frequency-domain
convolution theorem, the angular-domain convolution (oracle path), expansion
of kernel coefficients into a sparse operator matrix, the least-squares
projection of an operator onto the convolution structure, and rotation
averaging.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import psh as P
from . import shscalar as sh
from .geom import (c_to_r22, JMAT, fibonacci_directions, frame_theta_phi,
                   normalize, rotation_about_axis, rotation_align,
                   rotation_zyz, sph_to_dir, dir_to_sph)
from .operators import PshCoeffMatrix, split_psh_matrix
from .polar import frame_angle, mueller_rotator
from .shscalar import FOUR_PI, sh_index

TWO_PI = 2.0 * np.pi


# ---------------------------------------------------------------------------
# kernel coefficients
# ---------------------------------------------------------------------------

@dataclass
class PolarConvKernelCoeffs:
    """Per-l convolution coefficients of a Mueller kernel.

    Four real families couple the scalar slots, four complex families couple
    scalar and spin-2 slots, and the complex pair (iso, conj) carries the
    spin 2-to-2 part.  All spin-2 families vanish for l < 2.
    """
    l_max: int
    k00: np.ndarray
    k03: np.ndarray
    k30: np.ndarray
    k33: np.ndarray
    k0p: np.ndarray   # spin 2 -> s0 row, complex
    k3p: np.ndarray   # spin 2 -> s3 row, complex
    kp0: np.ndarray   # s0 -> spin 2 column, complex
    kp3: np.ndarray   # s3 -> spin 2 column, complex
    kiso: np.ndarray
    kconj: np.ndarray

    @classmethod
    def zeros(cls, l_max):
        r = lambda: np.zeros(l_max + 1)
        c = lambda: np.zeros(l_max + 1, dtype=complex)
        return cls(l_max, r(), r(), r(), r(), c(), c(), c(), c(), c(), c())


def delta_kernel_coeffs(l_max: int) -> PolarConvKernelCoeffs:
    """Coefficients of the identity operator (Dirac delta at theta = 0)."""
    kc = PolarConvKernelCoeffs.zeros(l_max)
    for l in range(l_max + 1):
        v = math.sqrt((2 * l + 1) / FOUR_PI)
        kc.k00[l] = v
        kc.k33[l] = v
        if l >= 2:
            kc.kiso[l] = v
    return kc


def kernel_validate(kernel_fn, tol=1e-9):
    """Check the end-point constraints: conj part zero at 0, iso zero at pi."""
    from .geom import complex_pair_separate
    k0 = np.asarray(kernel_fn(0.0), dtype=float)
    kpi = np.asarray(kernel_fn(np.pi), dtype=float)
    p0 = complex_pair_separate(k0[1:3, 1:3])
    ppi = complex_pair_separate(kpi[1:3, 1:3])
    return abs(p0.conj) <= tol and abs(ppi.iso) <= tol


def _kernel_samples(kernel_fn, theta):
    vals = np.asarray([np.asarray(kernel_fn(float(t)), dtype=float) for t in theta])
    if vals.shape[1:] != (4, 4):
        raise ValueError("kernel must return 4x4 matrices")
    return vals


def kernel_coeffs(kernel_fn, l_max: int, n_nodes=None) -> PolarConvKernelCoeffs:
    """1-D quadrature of the five coefficient families of a kernel.

    kernel_fn(theta) returns the 4x4 Mueller matrix k(theta) under the
    aligned great-circle frame convention.
    """
    if n_nodes is None:
        n_nodes = 4 * l_max + 16
    x, w = np.polynomial.legendre.leggauss(n_nodes)
    theta = 0.5 * np.pi * (x + 1.0)
    w = 0.5 * np.pi * w
    k = _kernel_samples(kernel_fn, theta)
    st = np.sin(theta)

    # 1-D basis rows at phi = 0
    y_l0 = np.zeros((l_max + 1, n_nodes))
    y_lm2 = np.zeros((l_max + 1, n_nodes))      # Y^C_{l,-2}(theta, 0), real
    s2_l0 = np.zeros((l_max + 1, n_nodes))      # 2Y_{l0}(theta, 0), real
    s2_lm2 = np.zeros((l_max + 1, n_nodes))     # 2Y_{l,-2}(theta, 0), real
    s2_lp2 = np.zeros((l_max + 1, n_nodes))     # 2Y_{l,+2}(theta, 0), real
    for l in range(l_max + 1):
        y_l0[l] = np.real(sh.sh_basis_complex(l, theta, np.zeros(n_nodes))[:, sh_index(l, 0)])
        if l >= 2:
            y_lm2[l] = np.real(sh.sh_basis_complex(l, theta, np.zeros(n_nodes))[:, sh_index(l, -2)])
    d0 = {}
    for m in (0, -2, 2):
        cols = sh.wigner_small_d_column(l_max, m, -2, theta) if l_max >= 2 else None
        d0[m] = cols
    for l in range(2, l_max + 1):
        nrm = math.sqrt((2 * l + 1) / FOUR_PI)
        s2_l0[l] = nrm * d0[0][l]
        s2_lm2[l] = nrm * d0[-2][l]
        s2_lp2[l] = nrm * d0[2][l]

    kc = PolarConvKernelCoeffs.zeros(l_max)
    ws = w * st
    iso_s = 0.5 * (k[:, 1, 1] + k[:, 2, 2]) + 0.5j * (k[:, 2, 1] - k[:, 1, 2])
    conj_s = 0.5 * (k[:, 1, 1] - k[:, 2, 2]) + 0.5j * (k[:, 2, 1] + k[:, 1, 2])
    for l in range(l_max + 1):
        kc.k00[l] = TWO_PI * np.sum(ws * y_l0[l] * k[:, 0, 0])
        kc.k03[l] = TWO_PI * np.sum(ws * y_l0[l] * k[:, 0, 3])
        kc.k30[l] = TWO_PI * np.sum(ws * y_l0[l] * k[:, 3, 0])
        kc.k33[l] = TWO_PI * np.sum(ws * y_l0[l] * k[:, 3, 3])
        if l < 2:
            continue
        kc.kp0[l] = TWO_PI * np.sum(ws * s2_l0[l] * (k[:, 1, 0] + 1j * k[:, 2, 0]))
        kc.kp3[l] = TWO_PI * np.sum(ws * s2_l0[l] * (k[:, 1, 3] + 1j * k[:, 2, 3]))
        kc.k0p[l] = TWO_PI * np.sum(ws * y_lm2[l] * np.conj(k[:, 0, 1] + 1j * k[:, 0, 2]))
        kc.k3p[l] = TWO_PI * np.sum(ws * y_lm2[l] * np.conj(k[:, 3, 1] + 1j * k[:, 3, 2]))
        kc.kiso[l] = TWO_PI * np.sum(ws * s2_lm2[l] * iso_s)
        kc.kconj[l] = TWO_PI * np.sum(ws * s2_lp2[l] * conj_s)
    return kc


def kernel_from_mueller_field(field_fn, theta, phi=0.0):
    """Extract k(theta) from an equivariant Mueller field via its definition.

    Evaluates [K(z_hat, w_sph(theta, phi))] between the phi-anchored pole
    frame and the theta-phi frame; the result must not depend on phi.
    """
    w_o = sph_to_dir(theta, phi)
    M = np.asarray(field_fn(np.array([0.0, 0.0, 1.0]), w_o), dtype=float)
    # field returns components for the phi = 0 pole frame; re-anchor to phi
    return M @ mueller_rotator(2.0 * phi).T


# ---------------------------------------------------------------------------
# phase weights
# ---------------------------------------------------------------------------

def _u_to_spin2(m, mp):
    """U^{p0}: scalar input -> spin-2 output weight at (m_o, m_i) = (m, mp)."""
    if m == 0 and mp == 0:
        return 1.0 + 0.0j
    if abs(m) != abs(mp):
        return 0.0j
    am = abs(m)
    r = 0 if m == am else 1
    c = 0 if mp == am else 1
    tab = np.array([[1.0, -1.0j], [(-1.0) ** am, (-1.0) ** am * 1.0j]]) / math.sqrt(2.0)
    return tab[r, c]


def _u_from_spin2(m, mp):
    """U^{0p}: spin-2 input -> scalar output weight at (m_o, m_i) = (m, mp)."""
    if m == 0 and mp == 0:
        return 1.0 + 0.0j
    if abs(m) != abs(mp):
        return 0.0j
    am = abs(m)
    r = 0 if m == am else 1
    c = 0 if mp == am else 1
    tab = np.array([[1.0, (-1.0) ** am], [1.0j, -(-1.0) ** am * 1.0j]]) / math.sqrt(2.0)
    return tab[r, c]


def phase_weights(m: int, m_prime: int):
    """(W^{2->0}, W^{0->2}) constants of the convolution theorem.

    Values are 0 when |m| != |m'|, 1 at m = m' = 0, and magnitude 1/sqrt(2)
    otherwise.  W^{2->0} enters the theorem conjugated together with the
    2-to-0 kernel coefficient.
    """
    return np.conj(_u_from_spin2(m, m_prime)), _u_to_spin2(m, m_prime)


# ---------------------------------------------------------------------------
# the convolution theorem
# ---------------------------------------------------------------------------

def pconv_apply(kc: PolarConvKernelCoeffs, f: P.PshCoeffs) -> P.PshCoeffs:
    """Frequency-domain polarized convolution.

    Per (l, m): the scalar outputs mix {s0, s3} diagonally plus a +-m coupled
    contribution from the spin-2 coefficients; the spin-2 output takes the
    iso term at m, the conjugated mirrored term at -m, and +-m coupled scalar
    contributions.
    """
    if kc.l_max < f.l_max:
        raise ValueError("kernel coefficient band too small")
    out = P.PshCoeffs.zeros(f.l_max)
    for l in range(f.l_max + 1):
        fac = math.sqrt(FOUR_PI / (2 * l + 1))
        for m in range(-l, l + 1):
            i = sh_index(l, m)
            s0 = kc.k00[l] * f.s0[i] + kc.k03[l] * f.s3[i]
            s3 = kc.k30[l] * f.s0[i] + kc.k33[l] * f.s3[i]
            c = 0.0j
            if l >= 2:
                j = P.spin2_index(l, m)
                c += kc.kiso[l] * f.spin2[j] + (-1.0) ** m * kc.kconj[l] * np.conj(
                    f.spin2[P.spin2_index(l, -m)])
                for mp in {m, -m}:
                    ft = f.spin2[P.spin2_index(l, mp)]
                    u = _u_from_spin2(m, mp)
                    s0 += np.real(u * kc.k0p[l] * ft)
                    s3 += np.real(u * kc.k3p[l] * ft)
                    up = _u_to_spin2(m, mp)
                    c += up * (kc.kp0[l] * f.s0[sh_index(l, mp)]
                               + kc.kp3[l] * f.s3[sh_index(l, mp)])
            out.s0[i] = fac * np.real(s0)
            out.s3[i] = fac * np.real(s3)
            if l >= 2:
                out.spin2[P.spin2_index(l, m)] = fac * c
    return out


def conv_expand_to_matrix(kc: PolarConvKernelCoeffs, l_max: int) -> PshCoeffMatrix:
    """Expand kernel coefficients into the sparse operator matrix."""
    if kc.l_max < l_max:
        raise ValueError("kernel coefficient band too small")
    n = P.psh_size(l_max)
    out = np.zeros((n, n))
    for l in range(l_max + 1):
        fac = math.sqrt(FOUR_PI / (2 * l + 1))
        for m in range(-l, l + 1):
            r0 = P.psh_index(l, m, 0, l_max)
            r3 = P.psh_index(l, m, 3, l_max)
            out[r0, r0] = fac * kc.k00[l]
            out[r0, r3] = fac * kc.k03[l]
            out[r3, r0] = fac * kc.k30[l]
            out[r3, r3] = fac * kc.k33[l]
            if l < 2:
                continue
            for mp in {m, -m}:
                c0 = P.psh_index(l, mp, 0, l_max)
                c3 = P.psh_index(l, mp, 3, l_max)
                p1o = P.psh_index(l, m, 1, l_max)
                p1i = P.psh_index(l, mp, 1, l_max)
                up = _u_to_spin2(m, mp)
                for (col, kv) in ((c0, kc.kp0[l]), (c3, kc.kp3[l])):
                    z = up * kv
                    out[p1o, col] = fac * z.real
                    out[p1o + 1, col] = fac * z.imag
                u = _u_from_spin2(m, mp)
                for (row, kv) in ((r0, kc.k0p[l]), (r3, kc.k3p[l])):
                    z = u * kv
                    out[row, p1i] = fac * z.real
                    out[row, p1i + 1] = fac * (-z.imag)
            # spin 2-to-2
            p1o = P.psh_index(l, m, 1, l_max)
            p1i = P.psh_index(l, m, 1, l_max)
            blk = c_to_r22(kc.kiso[l])
            out[p1o:p1o + 2, p1i:p1i + 2] += fac * blk
            p1i = P.psh_index(l, -m, 1, l_max)
            blk = (-1.0) ** m * c_to_r22(kc.kconj[l]) @ JMAT
            out[p1o:p1o + 2, p1i:p1i + 2] += fac * blk
    return PshCoeffMatrix(l_max, out)


# ---------------------------------------------------------------------------
# angular-domain convolution (oracle path)
# ---------------------------------------------------------------------------

def greatcircle_frames(w_src, w_dst):
    """Aligned frames along the oriented great circle from w_src to w_dst.

    Returns (x_src, x_dst): unit tangents at the two points along the circle.
    Undefined for parallel/antiparallel pairs.
    """
    w_src = np.asarray(w_src, dtype=float)
    w_dst = np.asarray(w_dst, dtype=float)
    dot = np.einsum("...i,...i->...", w_src, w_dst)[..., None]
    x_src = normalize(w_dst - dot * w_src)
    x_dst = normalize(dot * w_dst - w_src)
    return x_src, x_dst


def _tangent_angle(x_axis, w):
    """Angle of a tangent vector measured from theta_hat toward phi_hat."""
    th, ph = dir_to_sph(np.asarray(w, dtype=float))
    F = frame_theta_phi(th, ph)
    c = np.einsum("...i,...i->...", x_axis, F[..., :, 0])
    s = np.einsum("...i,...i->...", x_axis, F[..., :, 1])
    return np.arctan2(s, c)


def pconv_angular_pair_matrix(kernel_fn, w_i, w_o):
    """Mueller matrix (theta-phi frames) of the equivariant field of a kernel.

    Realizes [k(angle(w_i, w_o))] between great-circle aligned frames and
    reframes both sides to the theta-phi convention; this is the Mueller
    transform field whose convolution operator the kernel defines.
    """
    w_i = np.asarray(w_i, dtype=float)
    w_o = np.asarray(w_o, dtype=float)
    dot = float(np.clip(np.dot(w_i, w_o), -1.0, 1.0))
    K = np.asarray(kernel_fn(math.acos(dot)), dtype=float)
    if abs(dot) > 1.0 - 1e-12:
        # degenerate great circle: any shared tangent anchor works
        helper = np.array([1.0, 0.0, 0.0]) if abs(w_i[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        x_i = normalize(np.cross(np.cross(w_i, helper), w_i))
        x_o = x_i if dot > 0 else -x_i
    else:
        x_i, x_o = greatcircle_frames(w_i, w_o)
    a_in = _tangent_angle(x_i, w_i)
    a_out = _tangent_angle(x_o, w_o)
    return mueller_rotator(-2.0 * a_out) @ K @ mueller_rotator(2.0 * a_in)


def pconv_angular(kernel_fn, coeffs: P.PshCoeffs, out_theta, out_phi,
                  n_theta=None, n_phi=None):
    """Angular-domain convolution of a band-limited field with a kernel.

    For each output direction the source sphere is integrated on a rotated
    Gauss-Legendre grid aligned with that direction, with the kernel applied
    between great-circle aligned frames (the field is evaluated from its
    coefficients, which is exact for band-limited inputs).  Returns Stokes
    components under the theta-phi frames of the outputs, shape (..., 4).
    """
    L = coeffs.l_max
    if n_theta is None:
        n_theta = 2 * L + 16
    if n_phi is None:
        n_phi = 2 * L + 8
    x, wq = np.polynomial.legendre.leggauss(n_theta)
    tq = 0.5 * np.pi * (x + 1.0)
    wq = 0.5 * np.pi * wq * np.sin(tq) * (TWO_PI / n_phi)
    pq = TWO_PI * np.arange(n_phi) / n_phi
    tg, pg = np.meshgrid(tq, pq, indexing="ij")
    canon = sph_to_dir(tg, pg).reshape(-1, 3)          # (M, 3)
    wgt = np.repeat(wq, n_phi)                         # (M,)
    kmat = _kernel_samples(kernel_fn, tq)              # (n_theta, 4, 4)
    kmat_full = np.repeat(kmat, n_phi, axis=0)         # (M, 4, 4)
    e_out = np.exp(2j * pg.reshape(-1))                # F_o(phi') -> pole anchor

    out_theta = np.asarray(out_theta, dtype=float)
    shape = np.broadcast(out_theta, np.asarray(out_phi)).shape
    th_list = np.ravel(np.broadcast_to(out_theta, shape)).astype(float)
    ph_list = np.ravel(np.broadcast_to(np.asarray(out_phi, dtype=float), shape))
    result = np.zeros((th_list.size, 4))
    for i, (to, po) in enumerate(zip(th_list, ph_list)):
        Rw = rotation_zyz(po, to, 0.0)
        src = canon @ Rw.T
        th_s, ph_s = dir_to_sph(src)
        comps = P.psh_reconstruct(coeffs, th_s, ph_s)
        # reframe field components into the rotated-system theta-phi frames
        G = np.einsum("ij,...jk->...ik", Rw, frame_theta_phi(tg.reshape(-1), pg.reshape(-1)))
        ang = frame_angle(frame_theta_phi(th_s, ph_s), G)
        ctil = (comps[:, 1] + 1j * comps[:, 2]) * np.exp(-2j * ang)
        vec = np.stack([comps[:, 0], ctil.real, ctil.imag, comps[:, 3]], axis=-1)
        contrib = np.einsum("mab,mb->ma", kmat_full, vec)
        ctil_o = (contrib[:, 1] + 1j * contrib[:, 2]) * e_out
        s0 = np.sum(wgt * contrib[:, 0])
        s3 = np.sum(wgt * contrib[:, 3])
        c = np.sum(wgt * ctil_o)
        # rotated pole frame -> theta-phi frame at the output direction
        Gp = Rw  # columns: frame at the output dir
        a2 = frame_angle(Gp, frame_theta_phi(to, po))
        c = c * np.exp(-2j * a2)
        result[i] = [s0, c.real, c.imag, s3]
    return result.reshape(shape + (4,))


def pconv_angular_fixed_grid(kernel_fn, field, out_dirs):
    """Fixed-grid double loop over the field's own quadrature samples.

    Kept for demonstrations; the kernel's conical kink at coincident and
    antipodal pairs limits the attainable accuracy.
    """
    grid = field.grid
    th, ph = grid.angles()
    w = grid.weights().ravel()
    src = grid.dirs().reshape(-1, 3)
    comps = field.data.reshape(-1, 4)
    out_dirs = np.asarray(out_dirs, dtype=float)
    res = np.zeros((out_dirs.shape[0], 4))
    F_src = frame_theta_phi(th.ravel(), ph.ravel())
    for i, wo in enumerate(out_dirs):
        dot = np.clip(src @ wo, -1.0, 1.0)
        ang = np.arccos(dot)
        x_i, x_o = greatcircle_frames(src, np.broadcast_to(wo, src.shape))
        a_in = _tangent_angle(x_i, src)
        ct = (comps[:, 1] + 1j * comps[:, 2]) * np.exp(-2j * a_in)
        vec = np.stack([comps[:, 0], ct.real, ct.imag, comps[:, 3]], axis=-1)
        km = np.asarray([np.asarray(kernel_fn(a), dtype=float) for a in ang])
        contrib = np.einsum("mab,mb->ma", km, vec)
        a_out = _tangent_angle(x_o, np.broadcast_to(wo, src.shape))
        cto = (contrib[:, 1] + 1j * contrib[:, 2]) * np.exp(2j * a_out)
        res[i, 0] = np.sum(w * contrib[:, 0])
        res[i, 3] = np.sum(w * contrib[:, 3])
        c = np.sum(w * cto)
        res[i, 1], res[i, 2] = c.real, c.imag
    return res


# ---------------------------------------------------------------------------
# least-squares projection onto the convolution structure
# ---------------------------------------------------------------------------

def conv_project_operator(M: PshCoeffMatrix):
    """Fit an operator matrix to the convolution structure per l.

    Returns (PolarConvKernelCoeffs, rms_residual, report) where report maps
    block names to per-l dicts with 'matched' (residual on |m_i| = |m_o|
    entries after the fit) and 'unmatched' (energy on |m_i| != |m_o|
    entries, which the structure forces to zero) RMS values.
    """
    l_max = M.l_max
    kc = PolarConvKernelCoeffs.zeros(l_max)
    blocks = split_psh_matrix(M)
    report = {}
    sq_sum = 0.0
    n_sum = 0

    def _fit_family(get_entry, pairs, weights):
        # LSQ of entry = w * k over complex entries: k = sum w* e / sum |w|^2
        num = 0.0j
        den = 0.0
        for (mo, mi), u in zip(pairs, weights):
            num += np.conj(u) * get_entry(mo, mi)
            den += abs(u) ** 2
        return num / den if den > 0 else 0.0j

    # scalar families
    rep_sc = {}
    for l in range(l_max + 1):
        fac = math.sqrt(FOUR_PI / (2 * l + 1))
        for (a, b, name) in ((0, 0, "k00"), (0, 3, "k03"), (3, 0, "k30"), (3, 3, "k33")):
            blk = blocks["scalar"][(a, b)]
            diag = np.array([blk[sh_index(l, m), sh_index(l, m)] for m in range(-l, l + 1)])
            getattr(kc, name)[l] = np.mean(diag) / fac
        res_m, res_u, nm, nu = 0.0, 0.0, 0, 0
        for li in range(l_max + 1):
            for mo in range(-l, l + 1):
                for mi in range(-li, li + 1):
                    for (a, b, name) in ((0, 0, "k00"), (0, 3, "k03"), (3, 0, "k30"), (3, 3, "k33")):
                        v = blocks["scalar"][(a, b)][sh_index(l, mo), sh_index(li, mi)]
                        fit = fac * getattr(kc, name)[l] if (li == l and mi == mo) else 0.0
                        if li == l and abs(mi) == abs(mo):
                            res_m += (v - fit) ** 2
                            nm += 1
                        else:
                            res_u += v ** 2
                            nu += 1
        rep_sc[l] = {"matched": math.sqrt(res_m / max(nm, 1)),
                     "unmatched": math.sqrt(res_u / max(nu, 1))}
        sq_sum += res_m + res_u
        n_sum += nm + nu
    report["scalar"] = rep_sc

    def _pairs(l):
        out = []
        for m in range(-l, l + 1):
            for mp in {m, -m}:
                if (m, mp) not in out:
                    out.append((m, mp))
        return out

    # spin 0 -> 2 (kernel columns kp0, kp3)
    rep = {}
    for l in range(2, l_max + 1):
        fac = math.sqrt(FOUR_PI / (2 * l + 1))
        for (b, name) in ((0, "kp0"), (3, "kp3")):
            C = blocks["to_spin2"][b]
            pairs = _pairs(l)
            ws = [_u_to_spin2(mo, mi) for (mo, mi) in pairs]
            getattr(kc, name)[l] = _fit_family(
                lambda mo, mi: C[P.spin2_index(l, mo), sh_index(l, mi)] / fac, pairs, ws)
    for l in range(2, l_max + 1):
        fac = math.sqrt(FOUR_PI / (2 * l + 1))
        res_m, res_u, nm, nu = 0.0, 0.0, 0, 0
        for (b, name) in ((0, "kp0"), (3, "kp3")):
            C = blocks["to_spin2"][b]
            for li in range(l_max + 1):
                for mo in range(-l, l + 1):
                    for mi in range(-li, li + 1):
                        v = C[P.spin2_index(l, mo), sh_index(li, mi)]
                        fit = (fac * _u_to_spin2(mo, mi) * getattr(kc, name)[l]
                               if li == l and abs(mi) == abs(mo) else 0.0)
                        if li == l and abs(mi) == abs(mo):
                            res_m += abs(v - fit) ** 2
                            nm += 2
                        else:
                            res_u += abs(v) ** 2
                            nu += 2
        rep[l] = {"matched": math.sqrt(res_m / max(nm, 1)),
                  "unmatched": math.sqrt(res_u / max(nu, 1))}
        sq_sum += res_m + res_u
        n_sum += nm + nu
    report["to_spin2"] = rep

    # spin 2 -> 0 (kernel rows k0p, k3p)
    rep = {}
    for l in range(2, l_max + 1):
        fac = math.sqrt(FOUR_PI / (2 * l + 1))
        for (a, name) in ((0, "k0p"), (3, "k3p")):
            C = blocks["from_spin2"][a]
            pairs = _pairs(l)
            ws = [_u_from_spin2(mo, mi) for (mo, mi) in pairs]
            getattr(kc, name)[l] = _fit_family(
                lambda mo, mi: C[sh_index(l, mo), P.spin2_index(l, mi)] / fac, pairs, ws)
        res_m, res_u, nm, nu = 0.0, 0.0, 0, 0
        for (a, name) in ((0, "k0p"), (3, "k3p")):
            C = blocks["from_spin2"][a]
            for li in range(2, l_max + 1):
                for mo in range(-l, l + 1):
                    for mi in range(-li, li + 1):
                        v = C[sh_index(l, mo), P.spin2_index(li, mi)]
                        fit = (fac * _u_from_spin2(mo, mi) * getattr(kc, name)[l]
                               if li == l and abs(mi) == abs(mo) else 0.0)
                        if li == l and abs(mi) == abs(mo):
                            res_m += abs(v - fit) ** 2
                            nm += 2
                        else:
                            res_u += abs(v) ** 2
                            nu += 2
        rep[l] = {"matched": math.sqrt(res_m / max(nm, 1)),
                  "unmatched": math.sqrt(res_u / max(nu, 1))}
        sq_sum += res_m + res_u
        n_sum += nm + nu
    report["from_spin2"] = rep

    # spin 2 -> 2
    rep = {}
    iso_blk = blocks["iso"]
    conj_blk = blocks["conj"]
    for l in range(2, l_max + 1):
        fac = math.sqrt(FOUR_PI / (2 * l + 1))
        iso_vals = [iso_blk[P.spin2_index(l, m), P.spin2_index(l, m)] / fac
                    for m in range(-l, l + 1)]
        kc.kiso[l] = np.mean(iso_vals)
        conj_vals = [(-1.0) ** m * conj_blk[P.spin2_index(l, m), P.spin2_index(l, -m)] / fac
                     for m in range(-l, l + 1)]
        kc.kconj[l] = np.mean(conj_vals)
        res_m, res_u, nm, nu = 0.0, 0.0, 0, 0
        for li in range(2, l_max + 1):
            for mo in range(-l, l + 1):
                for mi in range(-li, li + 1):
                    vi = iso_blk[P.spin2_index(l, mo), P.spin2_index(li, mi)]
                    vc = conj_blk[P.spin2_index(l, mo), P.spin2_index(li, mi)]
                    fit_i = fac * kc.kiso[l] if (li == l and mi == mo) else 0.0
                    fit_c = (fac * (-1.0) ** mo * kc.kconj[l]
                             if (li == l and mi == -mo) else 0.0)
                    if li == l and abs(mi) == abs(mo):
                        res_m += abs(vi - fit_i) ** 2 + abs(vc - fit_c) ** 2
                        nm += 4
                    else:
                        res_u += abs(vi) ** 2 + abs(vc) ** 2
                        nu += 4
        rep[l] = {"matched": math.sqrt(res_m / max(nm, 1)),
                  "unmatched": math.sqrt(res_u / max(nu, 1))}
        sq_sum += res_m + res_u
        n_sum += nm + nu
    report["spin22"] = rep

    rms = math.sqrt(sq_sum / max(n_sum, 1))
    return kc, rms, report


# ---------------------------------------------------------------------------
# rotation averaging
# ---------------------------------------------------------------------------

def _so3_fibonacci(n_rotations: int):
    """Deterministic quasi-uniform rotation sample.

    Fibonacci-distributed alignment axes combined with an in-plane angle from
    an unrelated irrational stride (the Fibonacci azimuths already use the
    golden ratio; reusing it correlates the two factors and biases the
    average).
    """
    normals = fibonacci_directions(n_rotations)
    rots = []
    for k in range(n_rotations):
        psi = TWO_PI * ((k * math.sqrt(2.0)) % 1.0)
        rots.append(rotation_align(np.array([0.0, 0.0, 1.0]), normals[k])
                    @ rotation_about_axis([0.0, 0.0, 1.0], psi))
    return rots


def rotation_average_operator(field_fn, n: int):
    """Average of rotation-conjugated copies of a Mueller field (angular form).

    Uses n^2 quasi-uniform rotations; the average converges to a rotation
    equivariant operator as n grows.
    """
    if n < 2:
        raise ValueError("need n >= 2")
    rots = _so3_fibonacci(n * n)

    def averaged(w_i, w_o):
        w_i = np.asarray(w_i, dtype=float)
        w_o = np.asarray(w_o, dtype=float)
        w_i_b, w_o_b = np.broadcast_arrays(w_i, w_o)
        acc = None
        F_i = _tp_frame_of(w_i_b)
        F_o = _tp_frame_of(w_o_b)
        for R in rots:
            wi_r = w_i_b @ R.T
            wo_r = w_o_b @ R.T
            M = np.asarray(field_fn(wi_r, wo_r), dtype=float)
            # conjugate back: frames R^-1 F_tp(R w) -> F_tp(w)
            Gi = np.einsum("ji,...jk->...ik", R, _tp_frame_of(wi_r))
            Go = np.einsum("ji,...jk->...ik", R, _tp_frame_of(wo_r))
            rot_o = _c_between(Go, F_o)
            rot_i = _c_between(Gi, F_i)
            term = np.einsum("...ab,...bc,...dc->...ad", rot_o, M, rot_i)
            acc = term if acc is None else acc + term
        return acc / len(rots)

    return averaged


def _tp_frame_of(w):
    th, ph = dir_to_sph(np.asarray(w, dtype=float))
    return frame_theta_phi(th, ph)


def _c_between(frm, to):
    ang = frame_angle(frm, to)
    two = 2.0 * ang
    c, s = np.cos(two), np.sin(two)
    z = np.zeros_like(c)
    one = np.ones_like(c)
    return np.stack([
        np.stack([one, z, z, z], axis=-1),
        np.stack([z, c, s, z], axis=-1),
        np.stack([z, -s, c, z], axis=-1),
        np.stack([z, z, z, one], axis=-1),
    ], axis=-2)


def rotation_average_matrix(M: PshCoeffMatrix, n: int) -> PshCoeffMatrix:
    """Coefficient-space rotation average: mean of D(R)^T M D(R).

    Exactly the PSH projection of the angular rotation average, since
    rotations do not mix l.
    """
    from .psh import psh_rotation_matrix
    if n < 2:
        raise ValueError("need n >= 2")
    acc = np.zeros_like(M.matrix)
    rots = _so3_fibonacci(n * n)
    for R in rots:
        D = psh_rotation_matrix(M.l_max, R)
        acc += D.T @ M.matrix @ D
    return PshCoeffMatrix(M.l_max, acc / len(rots))
