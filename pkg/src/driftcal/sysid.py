"""Known-perturbation calibration numerics.

With a known excitation and a trusted sensor model, the environment response
is identifiable by linear least squares; once the response is known, a
drifted sensor polynomial is identifiable the same way.  The tap-shape
comparison separates genuine environment change from sensor aging: the shape
(taps modulo amplitude scaling and small delays) survives drift that rescales
the estimated response.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, toeplitz

from .exceptions import (
    DegenerateInputError,
    IllConditionedError,
    InsufficientDataError,
    ZeroFilterError,
)
from .signal_chain import FirFilter, SensorModel, SignalSeries, convolve, invert_sensor
from .validation import as_series, check_equal_length

# A normal matrix with condition estimate above this is treated as singular.
CONDITION_LIMIT = 1e12

# Minimum rows per estimated tap for estimate_fir.
ROWS_PER_TAP = 4


@dataclass(frozen=True)
class FitDiagnostics:
    """Quality record for one least-squares fit."""

    residual_rms: float
    condition_estimate: float
    num_samples_used: int


@dataclass
class ShapeDescriptor:
    """Tap sequence reduced to unit energy and canonical sign.

    The largest-magnitude tap is made positive so that descriptors of c*h
    agree for every nonzero c, including negative c.
    """

    normalized_taps: np.ndarray

    def __post_init__(self):
        self.normalized_taps = as_series(self.normalized_taps, name="normalized_taps")


def _condition_estimate(gram: np.ndarray) -> float:
    s = np.linalg.svd(gram, compute_uv=False)
    if s[0] == 0.0 or s[-1] <= 0.0:
        return np.inf
    return float(s[0] / s[-1])


def _solve_normal_equations(design: np.ndarray, target: np.ndarray):
    """Solve min ||target - design @ p||^2 via Cholesky on the normal matrix."""
    gram = design.T @ design
    cond = _condition_estimate(gram)
    if not np.isfinite(cond) or cond > CONDITION_LIMIT:
        raise IllConditionedError(
            f"normal matrix condition estimate {cond:.3e} exceeds {CONDITION_LIMIT:.0e}"
        )
    try:
        factor = cho_factor(gram)
    except np.linalg.LinAlgError as exc:
        raise IllConditionedError(f"normal matrix is not positive definite: {exc}")
    params = cho_solve(factor, design.T @ target)
    residual = target - design @ params
    diag = FitDiagnostics(
        residual_rms=float(np.sqrt(np.mean(residual**2))),
        condition_estimate=cond,
        num_samples_used=len(target),
    )
    return params, diag


def convolution_design_matrix(e: np.ndarray, order: int) -> np.ndarray:
    """Toeplitz matrix whose row t holds e[t], e[t-1], ..., e[t-order+1].

    Samples before t=0 are zero, matching the causal zero-initial-condition
    convolution: design @ taps == convolve(e, FirFilter(taps)).
    """
    first_row = np.zeros(order)
    first_row[0] = e[0]
    return toeplitz(e, first_row)


def estimate_fir(e: SignalSeries, x_est: SignalSeries, order: int):
    """Least-squares FIR estimate of the excitation-to-measurand response.

    Solves min ||x_est - E @ h||^2 where E is the causal convolution design
    matrix built from the excitation, via normal equations with Cholesky
    factorization.  Returns (FirFilter, FitDiagnostics).

    Raises InsufficientDataError when fewer than 4*order samples are
    available, IllConditionedError when the normal matrix is numerically
    singular (condition estimate > 1e12).
    """
    e = as_series(e, name="e")
    x_est = as_series(x_est, name="x_est")
    check_equal_length(e, x_est, names=("e", "x_est"))
    order = int(order)
    if order < 1:
        raise InsufficientDataError(f"order must be >= 1, got {order}")
    if len(e) < ROWS_PER_TAP * order:
        raise InsufficientDataError(
            f"need at least {ROWS_PER_TAP * order} samples for order {order}, "
            f"got {len(e)}"
        )
    design = convolution_design_matrix(e, order)
    taps, diag = _solve_normal_equations(design, x_est)
    return FirFilter(taps), diag


def fit_sensor_polynomial(x: SignalSeries, y: SignalSeries):
    """Fit the drift coefficients of y = x + k1*x^2 + k2*x^3 by least squares.

    The linear term is fixed at one, so the fit regresses (y - x) on the
    basis {x^2, x^3}.  Returns (SensorModel, FitDiagnostics).

    Raises DegenerateInputError when x cannot support the fit (fewer than 10
    samples would be an InsufficientDataError; fewer than 3 distinct values
    or a singular basis Gram matrix is degenerate).
    """
    x = as_series(x, name="x")
    y = as_series(y, name="y")
    check_equal_length(x, y, names=("x", "y"))
    if len(x) < 10:
        raise InsufficientDataError(f"need at least 10 samples, got {len(x)}")
    if len(np.unique(x)) < 3:
        raise DegenerateInputError("x must take at least 3 distinct values")
    design = np.column_stack([x**2, x**3])
    try:
        coeffs, diag = _solve_normal_equations(design, y - x)
    except IllConditionedError as exc:
        raise DegenerateInputError(f"basis Gram matrix is singular: {exc}")
    return SensorModel(k1=float(coeffs[0]), k2=float(coeffs[1])), diag


def shape_of(h: FirFilter) -> ShapeDescriptor:
    """Reduce a tap vector to its shape: unit energy, canonical sign."""
    energy = np.sum(h.taps**2)
    if energy == 0.0:
        raise ZeroFilterError("cannot take the shape of an all-zero filter")
    taps = h.taps / np.sqrt(energy)
    if taps[np.argmax(np.abs(taps))] < 0.0:
        taps = -taps
    return ShapeDescriptor(taps)


def shape_distance(a: ShapeDescriptor, b: ShapeDescriptor, max_lag: int = 0) -> float:
    """Shape mismatch in [0, 2]: 0 means identical up to scale and small shift.

    Computed as 1 minus the maximum zero-padded cross-correlation between the
    two unit-energy tap sequences over integer lags in [-max_lag, +max_lag].
    """
    max_lag = int(max_lag)
    if max_lag < 0:
        raise ValueError(f"max_lag must be >= 0, got {max_lag}")
    a_taps = a.normalized_taps
    b_taps = b.normalized_taps
    # full cross-correlation; zero lag sits at index len(b_taps) - 1
    corr = np.correlate(a_taps, b_taps, mode="full")
    center = len(b_taps) - 1
    lo = max(0, center - max_lag)
    hi = min(len(corr), center + max_lag + 1)
    return float(1.0 - np.max(corr[lo:hi]))


def semi_blind_rc(
    e_known: SignalSeries,
    y: SignalSeries,
    f_known: SensorModel,
    order: int,
    domain_bound: float | None = None,
):
    """Reliable-stage response identification from a known perturbation.

    The trusted sensor model is inverted to recover the measurand estimate,
    then the FIR response is fit against the known excitation.  Returns
    (FirFilter, FitDiagnostics).
    """
    y = as_series(y, name="y")
    if domain_bound is None:
        domain_bound = 2.0 * float(np.max(np.abs(y))) + 1.0
    x_est = invert_sensor(f_known, y, domain_bound)
    return estimate_fir(e_known, x_est, order)


def semi_blind_uc(e_known: SignalSeries, y: SignalSeries, h_known: FirFilter):
    """Unreliable-stage sensor refit using the previously identified response.

    The response identified while the calibration was trusted predicts the
    measurand from the known excitation; the drifted polynomial is then fit
    between that prediction and the raw readings.  Returns
    (SensorModel, FitDiagnostics).
    """
    x_pred = convolve(as_series(e_known, name="e_known"), h_known)
    return fit_sensor_polynomial(x_pred, as_series(y, name="y"))


def drift_diagnostic(
    e_known: SignalSeries,
    y: SignalSeries,
    f_stale: SensorModel,
    h_reference: FirFilter,
    order: int,
) -> float:
    """Shape distance between the re-estimated response and a reference.

    The response is re-identified under the stale sensor model; a small
    distance indicates the environment is unchanged, so residual calibration
    mismatch is attributable to sensor drift rather than environment change.
    """
    h_hat, _ = semi_blind_rc(e_known, y, f_stale, order)
    return shape_distance(shape_of(h_hat), shape_of(h_reference), max_lag=order // 10)
