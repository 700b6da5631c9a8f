"""Scikit-learn style calibrator estimators.

Both calibrators follow the fit/transform convention so they compose with
the wider ecosystem: ``fit`` learns from data gathered while the factory
calibration is still trustworthy, ``update`` re-learns after the sensor has
aged, and ``transform`` maps raw readings to measurand estimates.  Parameters
set in ``__init__`` are plain values, so ``get_params``/``set_params`` and
``clone`` behave as usual.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from . import network, sysid
from .signal_chain import SensorModel, invert_sensor
from .validation import as_series


def _require_fitted(estimator, attribute: str) -> None:
    if getattr(estimator, attribute, None) is None:
        raise NotFittedError(
            f"{type(estimator).__name__} must be fitted before this call"
        )


class SemiBlindCalibrator(BaseEstimator):
    """Known-perturbation calibrator built on least-squares identification.

    Parameters
    ----------
    order : int
        Number of taps of the environment response to estimate.
    shape_max_lag : int or None
        Alignment window for the shape comparison; defaults to order // 10.
    domain_bound : float or None
        Interval half-width on which sensor models must be monotone; derived
        from the data when None.

    Attributes
    ----------
    response_ : FirFilter
        Environment response identified from the trusted stage.
    sensor_ : SensorModel
        Refreshed sensor polynomial after ``update``.
    drift_score_ : float
        Shape distance between the response re-estimated under the stale
        sensor model and ``response_``; small values attribute the mismatch
        to sensor drift rather than environment change.
    """

    def __init__(self, order: int = 100, shape_max_lag=None, domain_bound=None):
        self.order = order
        self.shape_max_lag = shape_max_lag
        self.domain_bound = domain_bound

    def fit(self, y, e, sensor: SensorModel):
        """Identify the environment response from the trusted stage.

        ``y`` are the sensor readings, ``e`` the known perturbation driving
        them, and ``sensor`` the still-trusted transduction model.
        """
        self.trusted_sensor_ = sensor
        self.response_, self.fit_diagnostics_ = sysid.semi_blind_rc(
            as_series(e, name="e"),
            as_series(y, name="y"),
            sensor,
            self.order,
            domain_bound=self.domain_bound,
        )
        self.sensor_ = None
        self.drift_score_ = None
        return self

    def update(self, y, e):
        """Refresh the sensor polynomial once the old calibration is stale.

        Uses the response identified by ``fit`` to predict the measurand from
        the known perturbation, fits the drifted polynomial against the raw
        readings, and scores how much of the mismatch is environment change.
        """
        _require_fitted(self, "response_")
        y = as_series(y, name="y")
        e = as_series(e, name="e")
        self.sensor_, self.update_diagnostics_ = sysid.semi_blind_uc(
            e, y, self.response_
        )
        self.drift_score_ = sysid.drift_diagnostic(
            e, y, self.trusted_sensor_, self.response_, self.order
        )
        return self

    def transform(self, y):
        """Invert the freshest sensor model to estimate the measurand."""
        _require_fitted(self, "response_")
        sensor = self.sensor_ if self.sensor_ is not None else self.trusted_sensor_
        y = as_series(y, name="y")
        bound = self.domain_bound
        if bound is None:
            bound = 2.0 * float(np.max(np.abs(y))) + 1.0
        return invert_sensor(sensor, y, bound)


class BlindCalibrator(BaseEstimator):
    """Reference-free calibrator built on the two-stage window autoencoder.

    Parameters mirror the training configuration; ``random_state`` seeds both
    the weight initialization and the batch shuffling.

    Attributes
    ----------
    network_ : MlpNetwork
        The trained four-layer network.
    fit_trace_ : TrainTrace
        Loss history of the trusted-stage training (all layers).
    update_trace_ : TrainTrace
        Loss history of the drifted-stage retraining (environment layers
        frozen, readings-only loss).
    """

    def __init__(
        self,
        window_length: int = 128,
        epochs: int = 200,
        batch_size: int = 32,
        learning_rate: float = 1e-3,
        alpha: float = 1.0,
        beta: float = 1.0,
        optimizer: str = "adam",
        random_state: int = 0,
    ):
        self.window_length = window_length
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.alpha = alpha
        self.beta = beta
        self.optimizer = optimizer
        self.random_state = random_state

    def _train_config(self) -> network.TrainConfig:
        return network.TrainConfig(
            alpha=self.alpha,
            beta=self.beta,
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            batch_size=self.batch_size,
            window_length=self.window_length,
            optimizer=self.optimizer,
            seed=self.random_state,
        )

    def fit(self, y, x):
        """Train all four stages on aligned reading/measurand series."""
        cfg = self._train_config()
        y_win = network.make_windows(y, self.window_length)
        x_win = network.make_windows(x, self.window_length)
        self.network_ = network.init_network(self.window_length, self.random_state)
        self.fit_trace_ = network.train(self.network_, y_win, x_win, cfg)
        self.update_trace_ = None
        return self

    def update(self, y):
        """Retrain the observation stages on drifted readings alone.

        The environment stages (layers 2 and 3) stay bit-identical; only the
        reading-to-measurand and measurand-to-reading stages adapt.
        """
        _require_fitted(self, "network_")
        cfg = self._train_config()
        y_win = network.make_windows(y, self.window_length)
        self.update_trace_ = network.train(
            self.network_, y_win, None, cfg,
            frozen_layers=network.ENVIRONMENT_LAYERS,
        )
        return self

    def transform(self, y):
        """Map raw readings through stage 1 to a measurand estimate."""
        _require_fitted(self, "network_")
        return network.calibrate(self.network_, y, self.window_length)
