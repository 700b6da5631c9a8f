"""Measurement-chain simulation: event, environment filtering, sensor readout.

A sensed value is produced in three steps: a random event excites the
environment, the environment shapes it into the measurand through a causal
FIR response, and the sensor transduces the measurand through a cubic
polynomial before additive Gaussian noise.  Every step here is deterministic
given its seed, and the exact inverse of the sensor transduction is provided
where it exists.

Signal series are 1-D float64 numpy arrays throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import (
    ConvergenceError,
    InvalidArgumentError,
    NonInvertibleModelError,
)
from .validation import as_series, check_finite_scalar, check_seed

# Absolute tolerance for the sensor-inversion root find.
NEWTON_TOL = 1e-12
NEWTON_MAX_ITER = 100

# SignalSeries is a plain 1-D float64 ndarray; see validation.as_series.
SignalSeries = np.ndarray


@dataclass
class FirFilter:
    """Causal FIR tap vector modelling the environment response."""

    taps: np.ndarray

    def __post_init__(self):
        self.taps = as_series(self.taps, name="taps")

    def __len__(self) -> int:
        return len(self.taps)

    def frequency_response(self, freqs) -> np.ndarray:
        """Complex response at normalized frequencies (cycles/sample)."""
        f = np.atleast_1d(np.asarray(freqs, dtype=np.float64))
        n = np.arange(len(self.taps))
        return np.exp(-2j * np.pi * np.outer(f, n)) @ self.taps


@dataclass(frozen=True)
class SensorModel:
    """Cubic sensor transduction y = x + k1*x^2 + k2*x^3."""

    k1: float
    k2: float

    def __post_init__(self):
        check_finite_scalar(self.k1, name="k1")
        check_finite_scalar(self.k2, name="k2")

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return x + self.k1 * x**2 + self.k2 * x**3

    def derivative(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return 1.0 + 2.0 * self.k1 * x + 3.0 * self.k2 * x**2

    def min_derivative_on(self, bound: float) -> float:
        """Minimum of the derivative over [-bound, +bound].

        The derivative is a parabola in x, so the minimum is attained at an
        endpoint or at the vertex when it lies inside the interval.
        """
        candidates = [-bound, bound]
        if self.k2 != 0.0:
            vertex = -self.k1 / (3.0 * self.k2)
            if abs(vertex) <= bound:
                candidates.append(vertex)
        return float(min(self.derivative(np.array(candidates))))


@dataclass(frozen=True)
class NoiseModel:
    """Additive white Gaussian measurement noise; sigma=0 means noiseless."""

    sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        check_finite_scalar(self.sigma, name="sigma")
        if self.sigma < 0:
            raise InvalidArgumentError(f"noise sigma must be >= 0, got {self.sigma}")
        check_seed(self.seed, name="noise seed")


@dataclass
class ChainConfig:
    """Full description of one simulated measurement chain."""

    num_samples: int
    event_sigma: float
    filter: FirFilter
    sensor: SensorModel
    noise: NoiseModel = field(default_factory=NoiseModel)
    seed: int = 0

    def __post_init__(self):
        self.num_samples = int(self.num_samples)
        if self.num_samples < 1:
            raise InvalidArgumentError("num_samples must be >= 1")
        check_finite_scalar(self.event_sigma, name="event_sigma")
        if self.event_sigma <= 0:
            raise InvalidArgumentError("event_sigma must be > 0")
        if self.num_samples < len(self.filter):
            raise InvalidArgumentError(
                f"num_samples ({self.num_samples}) must be >= filter length "
                f"({len(self.filter)})"
            )
        check_seed(self.seed)


def gen_awgn_event(n: int, sigma: float, seed: int) -> SignalSeries:
    """Generate ``n`` iid zero-mean Gaussian samples with std ``sigma``.

    Identical (seed, n, sigma) yields bit-identical output.
    """
    n = int(n)
    if n < 1:
        raise InvalidArgumentError(f"event length must be >= 1, got {n}")
    sigma = check_finite_scalar(sigma, name="sigma")
    if sigma <= 0:
        raise InvalidArgumentError(f"event sigma must be > 0, got {sigma}")
    rng = np.random.default_rng(check_seed(seed))
    return rng.normal(0.0, sigma, n)


def design_bandpass(num_taps: int, low_cut: float, high_cut: float) -> FirFilter:
    """Windowed-sinc band-pass filter, normalized to unit tap energy.

    The kernel is the difference of two Hamming-windowed low-pass sinc
    kernels with cutoffs ``high_cut`` and ``low_cut`` (cycles/sample,
    0 < low < high < 0.5).  Deterministic; no randomness involved.
    """
    num_taps = int(num_taps)
    if num_taps < 3:
        raise InvalidArgumentError(f"num_taps must be >= 3, got {num_taps}")
    low_cut = check_finite_scalar(low_cut, name="low_cut")
    high_cut = check_finite_scalar(high_cut, name="high_cut")
    if not (0.0 < low_cut < high_cut < 0.5):
        raise InvalidArgumentError(
            f"band edges must satisfy 0 < low_cut < high_cut < 0.5, "
            f"got ({low_cut}, {high_cut})"
        )
    m = np.arange(num_taps, dtype=np.float64) - (num_taps - 1) / 2.0
    taps = 2.0 * high_cut * np.sinc(2.0 * high_cut * m)
    taps -= 2.0 * low_cut * np.sinc(2.0 * low_cut * m)
    taps *= np.hamming(num_taps)
    taps /= np.sqrt(np.sum(taps**2))
    return FirFilter(taps)


def convolve(e: SignalSeries, h: FirFilter) -> SignalSeries:
    """Causal FIR filtering with zero initial conditions.

    output[t] = sum_i h[i] * e[t-i], treating e[t<0] = 0; the output has the
    same length as the input.
    """
    e = as_series(e, name="e")
    if len(e) < len(h):
        raise InvalidArgumentError(
            f"input length ({len(e)}) must be >= filter length ({len(h)})"
        )
    return np.convolve(e, h.taps)[: len(e)]


def apply_sensor(f: SensorModel, x: SignalSeries) -> SignalSeries:
    """Pointwise sensor transduction y[t] = x[t] + k1*x[t]^2 + k2*x[t]^3."""
    return f.evaluate(as_series(x, name="x"))


def invert_sensor(
    f: SensorModel, y: SignalSeries, domain_bound: float = 10.0
) -> SignalSeries:
    """Recover the measurand from readings by inverting the sensor polynomial.

    Requires f to be strictly increasing on [-domain_bound, +domain_bound]
    (checked through its derivative).  Each sample is solved by Newton
    iteration started at the reading itself, converged to
    |f(x) - y[t]| < 1e-12, with iterates clamped to the monotone interval.

    Raises NonInvertibleModelError if the derivative is non-positive anywhere
    on the interval, ConvergenceError if any sample fails to converge within
    100 iterations (e.g. the reading lies outside f's range on the interval).
    """
    y = as_series(y, name="y")
    bound = check_finite_scalar(domain_bound, name="domain_bound")
    if bound <= 0:
        raise InvalidArgumentError(f"domain_bound must be > 0, got {domain_bound}")
    if f.min_derivative_on(bound) <= 0.0:
        raise NonInvertibleModelError(
            f"sensor model (k1={f.k1}, k2={f.k2}) is not strictly increasing "
            f"on [-{bound}, {bound}]"
        )
    x = np.clip(y, -bound, bound)
    for _ in range(NEWTON_MAX_ITER):
        residual = f.evaluate(x) - y
        if np.all(np.abs(residual) < NEWTON_TOL):
            return x
        x = np.clip(x - residual / f.derivative(x), -bound, bound)
    raise ConvergenceError(
        f"sensor inversion did not reach |f(x)-y| < {NEWTON_TOL} "
        f"within {NEWTON_MAX_ITER} iterations"
    )


def add_noise(y: SignalSeries, noise: NoiseModel) -> SignalSeries:
    """Add seeded white Gaussian noise; sigma=0 returns the input unchanged."""
    y = as_series(y, name="y")
    if noise.sigma == 0.0:
        return y.copy()
    rng = np.random.default_rng(noise.seed)
    return y + rng.normal(0.0, noise.sigma, len(y))


def simulate(config: ChainConfig):
    """Run the full chain and return (event, measurand, reading) series.

    e is the seeded Gaussian event, x = h * e the measurand, and
    y = f(x) + n the sensor reading.  A pure function of the config,
    including its seeds.
    """
    e = gen_awgn_event(config.num_samples, config.event_sigma, config.seed)
    x = convolve(e, config.filter)
    y = add_noise(apply_sensor(config.sensor, x), config.noise)
    return e, x, y
