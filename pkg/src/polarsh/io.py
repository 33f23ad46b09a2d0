"""File formats.

Binary coefficient containers (PSHC / PSH4 / PSHM / PSHK, all little-endian)
and the S4EM Stokes-map format with an ASCII header.  See docs/formats.md.
"""

from __future__ import annotations

import struct

import numpy as np

from . import psh as P
from .geom import gauss_legendre_grid
from .operators import PshCoeffMatrix
from .pconv import PolarConvKernelCoeffs
from .polar import SAMPLING_PIXEL, SAMPLING_QUAD, StokesField
from .s2l2 import StokesImage, ViewSpec
from .shscalar import ShCoeffs, sh_size


class FormatError(ValueError):
    pass


def _read_exact(f, n):
    buf = f.read(n)
    if len(buf) != n:
        raise FormatError("unexpected end of file")
    return buf


# ---------------------------------------------------------------------------
# PSHC: scalar SH coefficient vectors
# ---------------------------------------------------------------------------

def save_sh_coeffs(path, coeffs: ShCoeffs):
    kind = 0 if coeffs.kind == "complex" else 1
    with open(path, "wb") as f:
        f.write(b"PSHC")
        f.write(struct.pack("<IBI", 1, kind, coeffs.l_max))
        if kind == 0:
            inter = np.empty(2 * coeffs.values.size)
            inter[0::2] = np.real(coeffs.values)
            inter[1::2] = np.imag(coeffs.values)
            f.write(inter.astype("<f8").tobytes())
        else:
            f.write(np.asarray(coeffs.values, dtype="<f8").tobytes())


def load_sh_coeffs(path) -> ShCoeffs:
    with open(path, "rb") as f:
        if _read_exact(f, 4) != b"PSHC":
            raise FormatError("not a PSHC file")
        version, kind, l_max = struct.unpack("<IBI", _read_exact(f, 9))
        if version != 1 or kind not in (0, 1):
            raise FormatError("unsupported PSHC header")
        n = sh_size(l_max)
        if kind == 0:
            raw = np.frombuffer(_read_exact(f, 16 * n), dtype="<f8")
            return ShCoeffs(l_max, "complex", raw[0::2] + 1j * raw[1::2])
        raw = np.frombuffer(_read_exact(f, 8 * n), dtype="<f8")
        return ShCoeffs(l_max, "real", raw.copy())


# ---------------------------------------------------------------------------
# PSH4: PSH coefficient vectors
# ---------------------------------------------------------------------------

def save_psh_coeffs(path, coeffs: P.PshCoeffs):
    with open(path, "wb") as f:
        f.write(b"PSH4")
        f.write(struct.pack("<I", coeffs.l_max))
        f.write(coeffs.flat().astype("<f8").tobytes())


def load_psh_coeffs(path) -> P.PshCoeffs:
    with open(path, "rb") as f:
        if _read_exact(f, 4) != b"PSH4":
            raise FormatError("not a PSH4 file")
        (l_max,) = struct.unpack("<I", _read_exact(f, 4))
        n = P.psh_size(l_max)
        raw = np.frombuffer(_read_exact(f, 8 * n), dtype="<f8")
        return P.PshCoeffs.from_flat(l_max, raw.copy())


# ---------------------------------------------------------------------------
# PSHM: operator matrices
# ---------------------------------------------------------------------------

_SPARSITY_TAGS = {"general": 0, "isotropic": 1}


def save_psh_matrix(path, M: PshCoeffMatrix):
    with open(path, "wb") as f:
        f.write(b"PSHM")
        f.write(struct.pack("<IB", M.l_max, _SPARSITY_TAGS[M.sparsity]))
        f.write(M.matrix.astype("<f8").tobytes())


def load_psh_matrix(path) -> PshCoeffMatrix:
    with open(path, "rb") as f:
        if _read_exact(f, 4) != b"PSHM":
            raise FormatError("not a PSHM file")
        l_max, tag = struct.unpack("<IB", _read_exact(f, 5))
        n = P.psh_size(l_max)
        raw = np.frombuffer(_read_exact(f, 8 * n * n), dtype="<f8")
        name = {v: k for k, v in _SPARSITY_TAGS.items()}.get(tag)
        if name is None:
            raise FormatError("unknown sparsity tag")
        return PshCoeffMatrix(l_max, raw.reshape(n, n).copy(), name)


# ---------------------------------------------------------------------------
# PSHK: convolution kernel coefficients
# ---------------------------------------------------------------------------

_COMPLEX_FIELDS = ("k0p", "k3p", "kp0", "kp3", "kiso", "kconj")


def save_kernel_coeffs(path, kc: PolarConvKernelCoeffs):
    with open(path, "wb") as f:
        f.write(b"PSHK")
        f.write(struct.pack("<I", kc.l_max))
        for l in range(kc.l_max + 1):
            rec = [kc.k00[l], kc.k03[l], kc.k30[l], kc.k33[l]]
            for name in _COMPLEX_FIELDS:
                z = getattr(kc, name)[l]
                rec.extend([z.real, z.imag])
            f.write(np.asarray(rec, dtype="<f8").tobytes())


def load_kernel_coeffs(path) -> PolarConvKernelCoeffs:
    with open(path, "rb") as f:
        if _read_exact(f, 4) != b"PSHK":
            raise FormatError("not a PSHK file")
        (l_max,) = struct.unpack("<I", _read_exact(f, 4))
        kc = PolarConvKernelCoeffs.zeros(l_max)
        for l in range(l_max + 1):
            rec = np.frombuffer(_read_exact(f, 8 * 16), dtype="<f8")
            kc.k00[l], kc.k03[l], kc.k30[l], kc.k33[l] = rec[:4]
            for i, name in enumerate(_COMPLEX_FIELDS):
                getattr(kc, name)[l] = rec[4 + 2 * i] + 1j * rec[5 + 2 * i]
    return kc


# ---------------------------------------------------------------------------
# S4EM: Stokes maps and images
# ---------------------------------------------------------------------------

def save_stokes_field(path, field: StokesField):
    with open(path, "wb") as f:
        f.write(f"S4EM {field.n_theta} {field.n_phi} {field.sampling}\n".encode())
        f.write(field.data.astype("<f4").tobytes())


def save_stokes_image(path, img: StokesImage):
    v = img.view
    with open(path, "wb") as f:
        if v.kind == "equirect":
            f.write(f"S4EM {v.height} {v.width} {SAMPLING_PIXEL}\n".encode())
        else:
            f.write(f"S4EM {v.height} {v.width} perspective\n".encode())
            f.write(f"FOV {float(v.fov_deg)!r}\n".encode())
            f.write(("POSE " + " ".join(repr(float(x)) for x in v.pose.ravel()) + "\n").encode())
        f.write(img.data.astype("<f4").tobytes())


def _load_s4em_raw(path):
    with open(path, "rb") as f:
        header = f.readline().decode("ascii", errors="replace").strip().split()
        if len(header) != 4 or header[0] != "S4EM":
            raise FormatError("not an S4EM file")
        try:
            n_theta, n_phi = int(header[1]), int(header[2])
        except ValueError as e:
            raise FormatError("bad S4EM dimensions") from e
        sampling = header[3]
        fov = None
        pose = None
        if sampling == "perspective":
            fov_line = f.readline().decode().split()
            pose_line = f.readline().decode().split()
            if fov_line[:1] != ["FOV"] or pose_line[:1] != ["POSE"] or len(pose_line) != 10:
                raise FormatError("bad perspective header")
            fov = float(fov_line[1])
            pose = np.array([float(x) for x in pose_line[1:]]).reshape(3, 3)
        raw = np.frombuffer(f.read(), dtype="<f4")
        if raw.size != n_theta * n_phi * 4:
            raise FormatError("S4EM payload size mismatch")
        data = raw.reshape(n_theta, n_phi, 4).astype(float)
    return data, sampling, fov, pose


def load_stokes_field(path) -> StokesField:
    data, sampling, fov, _ = _load_s4em_raw(path)
    if fov is not None:
        raise FormatError("file holds a perspective image, not a sphere map")
    if sampling == SAMPLING_QUAD:
        band = data.shape[0] - 1
        grid = gauss_legendre_grid(band)
        if grid.n_phi != data.shape[1]:
            raise FormatError("quadrature grid shape mismatch")
        return StokesField(data, SAMPLING_QUAD, grid)
    if sampling == SAMPLING_PIXEL:
        return StokesField(data, SAMPLING_PIXEL)
    raise FormatError(f"unknown sampling {sampling!r}")


def load_stokes_image(path) -> StokesImage:
    data, sampling, fov, pose = _load_s4em_raw(path)
    if sampling == "perspective":
        view = ViewSpec("perspective", data.shape[0], data.shape[1], pose, fov)
    elif sampling == SAMPLING_PIXEL:
        view = ViewSpec("equirect", data.shape[0], data.shape[1])
    else:
        raise FormatError("sphere maps with quadrature sampling are not images")
    return StokesImage(view, data)
