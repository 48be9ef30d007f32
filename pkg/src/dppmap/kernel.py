"""Kernel construction, spectral bounds, and kernel file I/O.

The synthetic ensemble is a quality/diversity Gram kernel: unit feature
vectors with log-linear quality weights, optionally shifted by a multiple of
the identity so the smallest eigenvalue exceeds one (which makes the greedy
objective monotone).
"""

import struct
from dataclasses import dataclass

import numpy as np

from ._rng import check_seed, substream
from .linalg import cg_solve

__all__ = [
    "SyntheticConfig",
    "SpectralBounds",
    "KernelFormatError",
    "generate_synthetic_kernel",
    "validate_kernel",
    "spectral_bounds",
    "save_kernel",
    "load_kernel",
    "load_kernel_text",
]

_MAGIC = b"DPPK"
_VERSION = 1


@dataclass(frozen=True)
class SyntheticConfig:
    """Parameters of the synthetic quality/diversity kernel.

    Entry (i, j) is q_i q_j <phi_i, phi_j> with ||phi_i|| = 1 and
    q_i = exp(quality_slope * x_i + quality_offset), x_i standard normal.
    ``feature_dim`` defaults to ``dim``; ``monotone_shift`` is added to the
    diagonal.
    """

    dim: int
    seed: int = 0
    quality_slope: float = 0.01
    quality_offset: float = 0.2
    monotone_shift: float = 1.01
    feature_dim: int = None

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"dim must be positive, got {self.dim}")
        if self.feature_dim is not None and self.feature_dim < 1:
            raise ValueError(f"feature_dim must be positive, got {self.feature_dim}")
        if self.monotone_shift < 0:
            raise ValueError("monotone_shift must be nonnegative")
        check_seed(self.seed)


@dataclass(frozen=True)
class SpectralBounds:
    """An interval [lower, upper] containing the spectrum, and how it was found."""

    lower: float
    upper: float
    method: str

    def __post_init__(self):
        if not self.lower <= self.upper:
            raise ValueError(f"empty bound interval [{self.lower}, {self.upper}]")


class KernelFormatError(ValueError):
    """Raised for malformed kernel files; carries the failing byte offset."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


def generate_synthetic_kernel(config):
    """Build the synthetic kernel for ``config`` (deterministic in the seed).

    Feature and quality draws come from independent named substreams, so the
    same seed always produces the same kernel regardless of what else consumed
    randomness.
    """
    d = config.dim
    f = config.feature_dim or d
    feats = substream(config.seed, "features").standard_normal((d, f))
    feats /= np.linalg.norm(feats, axis=1, keepdims=True)
    x = substream(config.seed, "qualities").standard_normal(d)
    q = np.exp(config.quality_slope * x + config.quality_offset)
    a = q[:, None] * feats
    L = a @ a.T
    L = (L + L.T) / 2.0  # exact symmetry, gemm rounding is not symmetric
    if config.monotone_shift:
        L[np.diag_indices(d)] += config.monotone_shift
    return L


def validate_kernel(L):
    """Check shape, finiteness, and symmetry; returns the array unchanged."""
    L = np.asarray(L)
    if L.ndim != 2 or L.shape[0] != L.shape[1]:
        raise ValueError(f"kernel must be square, got shape {L.shape}")
    if L.shape[0] < 1:
        raise ValueError("kernel must have positive dimension")
    if not np.isfinite(L).all():
        raise ValueError("kernel contains non-finite entries")
    denom = np.maximum(1.0, np.abs(L))
    if not (np.abs(L - L.T) <= 1e-12 * denom).all():
        i, j = np.unravel_index(np.argmax(np.abs(L - L.T)), L.shape)
        raise ValueError(f"kernel is not symmetric at ({i}, {j})")
    return L


def spectral_bounds(L, power_iters=12):
    """Bound the spectrum of SPD ``L``.

    The upper bound is the Gershgorin row bound, which is certified.  The
    lower bound is Gershgorin when that is positive; otherwise it falls back
    to inverse power iteration (CG solves), whose Rayleigh quotient tends to
    overestimate the smallest eigenvalue, so a safety factor of 0.5 is
    applied.  The fallback is an estimate, not a certificate.
    """
    L = np.asarray(L, dtype=float)
    d = L.shape[0]
    diag = np.diag(L)
    radii = np.abs(L).sum(axis=1) - np.abs(diag)
    upper = float(np.max(diag + radii))
    lower = float(np.min(diag - radii))
    if lower > 0:
        return SpectralBounds(lower=lower, upper=upper, method="gershgorin")
    v = np.ones(d) / np.sqrt(d)
    lam = None
    for _ in range(max(1, power_iters)):
        y = cg_solve(L, v, tol=1e-8, max_iter=min(d, 200)).solution
        ray = v @ y  # Rayleigh quotient of L^-1 at unit v
        if ray <= 0:
            break
        lam = 1.0 / ray
        v = y / np.linalg.norm(y)
    if lam is None:  # pathological; fall back to something trivially safe
        lam = upper / max(d, 1) * 1e-12
    return SpectralBounds(lower=0.5 * lam, upper=upper, method="power-iteration")


def save_kernel(path, L):
    """Write a kernel in the binary format: magic, version, dim, row-major f64."""
    L = validate_kernel(np.ascontiguousarray(L, dtype="<f8"))
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", _VERSION))
        fh.write(struct.pack("<Q", L.shape[0]))
        fh.write(L.tobytes())


def load_kernel(path):
    """Read a binary kernel file; malformed input raises KernelFormatError."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 4 or data[:4] != _MAGIC:
        raise KernelFormatError("bad magic, expected b'DPPK'", 0)
    if len(data) < 8:
        raise KernelFormatError("truncated version field", 4)
    (version,) = struct.unpack_from("<I", data, 4)
    if version != _VERSION:
        raise KernelFormatError(f"unsupported version {version}", 4)
    if len(data) < 16:
        raise KernelFormatError("truncated dimension field", 8)
    (dim,) = struct.unpack_from("<Q", data, 8)
    if dim < 1:
        raise KernelFormatError(f"nonpositive dimension {dim}", 8)
    expected = 16 + dim * dim * 8
    if len(data) < expected:
        raise KernelFormatError(
            f"truncated payload: expected {expected - 16} bytes, found {len(data) - 16}",
            len(data),
        )
    if len(data) > expected:
        raise KernelFormatError(f"{len(data) - expected} trailing bytes", expected)
    flat = np.frombuffer(data, dtype="<f8", count=dim * dim, offset=16)
    return flat.reshape(dim, dim).astype(float)


def load_kernel_text(path):
    """Read a kernel from comma-separated plain text (one row per line)."""
    try:
        L = np.loadtxt(path, delimiter=",", ndmin=2, dtype=float)
    except ValueError as exc:
        raise ValueError(f"could not parse {path} as comma-separated floats: {exc}")
    if L.shape[0] != L.shape[1]:
        raise ValueError(f"text kernel is not square: shape {L.shape}")
    return L
