"""polarsh: polarized spherical harmonics for Stokes vector fields.

Frequency-domain representation, rotation, linear operators, and spherical
convolution of polarized (Stokes-vector) radiance on the sphere, the
frame-free S2L2 encoding of single Stokes vectors, and a small precomputed
polarized radiance transfer pipeline.
"""

__version__ = "0.1.0"
