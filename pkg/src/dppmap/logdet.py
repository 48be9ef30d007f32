"""Stochastic log-determinant estimation.

Approximates log det A for SPD A with spectrum inside [delta, 1 - delta] by a
Chebyshev expansion of log evaluated through a three-term matrix recurrence,
with the trace recovered by Hutchinson's Rademacher-probe estimator.  Probe
vectors can be shared between two nearby matrices, which makes the variance of
the *difference* of the two estimates scale with ||A - B||_F^2 instead of with
the matrices themselves.
"""

from dataclasses import dataclass

import numpy as np

from ._rng import substream

__all__ = [
    "ChebyshevExpansion",
    "ProbeSet",
    "RescaledOperator",
    "chebyshev_coefficients",
    "rademacher_probes",
    "rescale_spectrum",
    "estimate_logdet",
    "shared_probe_difference",
    "probe_variance_bound",
]

DELTA_FLOOR = 1e-4
DELTA_CEIL = 0.2


@dataclass(frozen=True)
class ChebyshevExpansion:
    """Chebyshev interpolant of log on [delta, 1 - delta].

    ``coefficients[k]`` multiplies T_k of the affinely mapped argument
    (2x - 1) / (1 - 2 delta).
    """

    degree: int
    delta: float
    coefficients: np.ndarray

    def evaluate(self, x):
        """Evaluate the interpolant at scalar or array ``x`` (original coords)."""
        x = np.asarray(x, dtype=float)
        t = (2.0 * x - 1.0) / (1.0 - 2.0 * self.delta)
        prev = np.ones_like(t)
        out = self.coefficients[0] * prev
        if self.degree >= 1:
            cur = t
            out = out + self.coefficients[1] * cur
            for k in range(2, self.degree + 1):
                prev, cur = cur, 2.0 * t * cur - prev
                out = out + self.coefficients[k] * cur
        return out if out.ndim else float(out)

    def grid_error(self, npoints=1000):
        """Sup error against log on an endpoint-inclusive grid of the interval."""
        xs = np.linspace(self.delta, 1.0 - self.delta, npoints)
        return float(np.max(np.abs(self.evaluate(xs) - np.log(xs))))


def chebyshev_coefficients(degree, delta):
    """Interpolation coefficients of log at the n+1 Chebyshev nodes.

    Node j is cos(pi (j + 1/2) / (n + 1)); c_0 is the plain node average of
    log at the mapped nodes, and c_k for k >= 1 carries the usual factor 2.
    """
    if degree < 0:
        raise ValueError(f"degree must be nonnegative, got {degree}")
    if not 0.0 < delta < 0.5:
        raise ValueError(f"delta must lie in (0, 0.5), got {delta}")
    n = degree
    j = np.arange(n + 1)
    nodes = np.cos(np.pi * (j + 0.5) / (n + 1))
    fx = np.log((1.0 - 2.0 * delta) / 2.0 * nodes + 0.5)
    coeff = np.empty(n + 1)
    coeff[0] = fx.sum() / (n + 1)
    prev = np.ones_like(nodes)
    cur = nodes.copy()
    if n >= 1:
        coeff[1] = 2.0 * (fx * cur).sum() / (n + 1)
    for k in range(2, n + 1):
        prev, cur = cur, 2.0 * nodes * cur - prev
        coeff[k] = 2.0 * (fx * cur).sum() / (n + 1)
    return ChebyshevExpansion(degree=n, delta=delta, coefficients=coeff)


@dataclass(frozen=True)
class ProbeSet:
    """A block of Rademacher probe vectors (entries exactly +-1), one per column."""

    vectors: np.ndarray

    @property
    def dim(self):
        return self.vectors.shape[0]

    @property
    def count(self):
        return self.vectors.shape[1]


def rademacher_probes(dim, count, rng):
    """Draw a ProbeSet from ``rng``; signs come from the top bit of raw draws."""
    if dim < 1 or count < 1:
        raise ValueError("dim and count must be positive")
    if isinstance(rng, (int, np.integer)):
        rng = substream(int(rng), "probes")
    bits = rng.integers(0, 2**64, size=(dim, count), dtype=np.uint64, endpoint=False)
    return ProbeSet(np.where(bits >> np.uint64(63), 1.0, -1.0))


@dataclass(frozen=True)
class RescaledOperator:
    """An SPD operator scaled by ``c`` so its spectrum fits [delta, 1 - delta].

    log det of the original operator = (estimate on the scaled operator)
    + ``logdet_correction``, where the correction is -dim * log c.
    """

    operator: object
    scale: float
    delta: float
    dim: int

    @property
    def logdet_correction(self):
        return -self.dim * np.log(self.scale)

    def matmat(self, w):
        op = self.operator
        prod = op @ w if isinstance(op, np.ndarray) else op.matmat(w)
        if self.scale != 1.0:
            prod *= self.scale
        return prod


def _scale_and_delta(bounds, delta_target=0.01):
    """Scale ``c`` and clamped ``delta`` mapping ``bounds`` into [delta, 1 - delta]."""
    if bounds.upper <= 0:
        raise ValueError("bounds.upper must be positive for an SPD operator")
    if not 0.0 < delta_target < 0.5:
        raise ValueError(f"delta_target must lie in (0, 0.5), got {delta_target}")
    c = (1.0 - delta_target) / bounds.upper
    delta = min(delta_target, c * bounds.lower)
    delta = float(min(max(delta, DELTA_FLOOR), DELTA_CEIL))
    return float(c), delta


def rescale_spectrum(op, bounds, delta_target=0.01, dim=None):
    """Choose the scale and delta that map ``bounds`` into [delta, 1 - delta].

    c = (1 - delta_target) / bounds.upper pins the top of the spectrum;
    delta = min(delta_target, c * bounds.lower) then adapts to the scaled
    bottom, clamped to [1e-4, 0.2].  When the clamp floor binds (severely
    ill-conditioned input) the bottom of the spectrum may fall below delta
    and the estimate degrades smoothly; callers relying on it only rank
    nearby matrices.
    """
    if dim is None:
        dim = op.shape[0] if isinstance(op, np.ndarray) else op.dim
    c, delta = _scale_and_delta(bounds, delta_target)
    return RescaledOperator(operator=op, scale=c, delta=delta, dim=dim)


def _recurrence_quadratic_forms(apply_op, delta, coefficients, v):
    """Per-probe quadratic forms v_i^T (sum_k c_k T_k(scaled op)) v_i.

    ``apply_op`` must apply the already rescaled operator (spectrum inside
    [delta, 1 - delta]); the Chebyshev argument (2x - 1)/(1 - 2 delta) is
    folded into the three-term recurrence.  Runs the whole probe block at
    once; the probe columns may belong to different operators if ``apply_op``
    routes column groups accordingly.
    """
    degree = len(coefficients) - 1
    s = 1.0 / (1.0 - 2.0 * delta)
    w_prev = v
    acc = coefficients[0] * v
    if degree >= 1:
        w_cur = 2.0 * s * apply_op(v) - s * v
        acc = acc + coefficients[1] * w_cur
        for k in range(2, degree + 1):
            w_next = 4.0 * s * apply_op(w_cur) - 2.0 * s * w_cur - w_prev
            acc += coefficients[k] * w_next
            w_prev, w_cur = w_cur, w_next
    return np.einsum("ij,ij->j", v, acc)


def estimate_logdet(rescaled, expansion, probes):
    """Chebyshev/Hutchinson estimate of log det of the original operator.

    Runs the three-term recurrence on the whole probe block at once and
    averages the quadratic forms in fixed probe order, so the result is
    deterministic for a given ProbeSet.
    """
    if expansion.delta != rescaled.delta:
        raise ValueError(
            f"expansion delta {expansion.delta} != operator delta {rescaled.delta}"
        )
    if probes.dim != rescaled.dim:
        raise ValueError(f"probe dim {probes.dim} != operator dim {rescaled.dim}")
    quad = _recurrence_quadratic_forms(
        rescaled.matmat, rescaled.delta, expansion.coefficients, probes.vectors
    )
    return float(quad.mean() + rescaled.logdet_correction)


def shared_probe_difference(a, b, expansion, probes):
    """Estimate log det for two operators with the *same* probe vectors.

    Both operators must share the scale and delta of their rescaling (the
    estimates would not be comparable otherwise).  Returns
    (estimate_a, estimate_b, estimate_a - estimate_b).
    """
    if a.dim != b.dim:
        raise ValueError("operators must have equal dimension")
    if a.scale != b.scale or a.delta != b.delta:
        raise ValueError("operators must share scale and delta")
    ga = estimate_logdet(a, expansion, probes)
    gb = estimate_logdet(b, expansion, probes)
    return ga, gb, ga - gb


def probe_variance_bound(delta, count, frobenius_diff):
    """Variance bound for the shared-probe difference of two estimates.

    For symmetric A, B with spectra in [delta, 1 - delta] and ``count``
    shared probes: Var[Gamma_A - Gamma_B] is at most
    32 M^2 rho^2 (rho+1)^2 / (count (rho-1)^6 (1-2 delta)^2) * ||A - B||_F^2,
    with M = 5 log(2/delta) and rho = 1 + 2 / (sqrt(2/delta - 1) - 1).
    """
    if not 0.0 < delta < 0.5:
        raise ValueError(f"delta must lie in (0, 0.5), got {delta}")
    if count < 1:
        raise ValueError("count must be positive")
    big_m = 5.0 * np.log(2.0 / delta)
    rho = 1.0 + 2.0 / (np.sqrt(2.0 / delta - 1.0) - 1.0)
    num = 32.0 * big_m**2 * rho**2 * (rho + 1.0) ** 2
    den = count * (rho - 1.0) ** 6 * (1.0 - 2.0 * delta) ** 2
    return float(num / den * frobenius_diff**2)
