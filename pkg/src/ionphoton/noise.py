"""Fiber loss and detector-background models for heralded ion-photon states."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .qstate import SETTINGS, born_probabilities, partial_trace, validate_density_matrix
from .tomography import mle_reconstruct, record_from_probabilities

FIBER_TRANSMISSION_101KM = 0.0136
BACKGROUND_RATE_CPS = 2.0
WINDOW_S = 50e-6
SYNTHETIC_COUNTS = 10**7


@dataclass(frozen=True)
class ChannelModel:
    """Photon channel after the node.

    ``background_rate`` is the summed rate of both detectors in counts/s and
    ``window`` the detection window in seconds. ``signal_probability`` is the
    per-window probability of a click caused by a photon from the ion.
    """

    transmission: float = FIBER_TRANSMISSION_101KM
    background_rate: float = BACKGROUND_RATE_CPS
    window: float = WINDOW_S
    signal_probability: float = 7.8e-4 - BACKGROUND_RATE_CPS * WINDOW_S

    def __post_init__(self):
        for name in ("transmission", "signal_probability"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ValueError(f"{name} must be a probability in [0, 1], got {v}")
        if self.background_rate < 0:
            raise ValueError("background_rate must be >= 0")
        if self.window <= 0:
            raise ValueError("window must be > 0")

    @property
    def background_probability(self) -> float:
        return self.background_rate * self.window

    @classmethod
    def from_measured(cls, measured_probability: float, background_rate: float = BACKGROUND_RATE_CPS,
                      window: float = WINDOW_S, transmission: float = FIBER_TRANSMISSION_101KM):
        """Build a model from a measured per-window click probability.

        Measured probabilities include background clicks, so the signal part
        is the excess over ``background_rate * window``.
        """
        b = background_rate * window
        if measured_probability < b:
            raise ValueError(f"measured probability {measured_probability} is below the background {b}")
        return cls(transmission, background_rate, window, measured_probability - b)


def background_fraction(model: ChannelModel) -> float:
    """Fraction of heralded events caused by a background click, ``b / (b + s)``."""
    b = model.background_probability
    s = model.signal_probability
    if b + s == 0:
        raise ValueError("signal and background probabilities are both zero")
    return b / (b + s)


def noisy_probabilities(ideal, lam: float, settings=SETTINGS) -> np.ndarray:
    """Outcome probabilities with a fraction ``lam`` of unpolarized background heralds.

    In a background event the photon outcome is uniform and the ion is left in
    the ion marginal of the ideal state.
    """
    ideal = validate_density_matrix(ideal)
    ion = partial_trace(ideal, "ion")
    mixed = np.kron(ion, np.eye(2) / 2)
    out = []
    for s in settings:
        p = (1 - lam) * born_probabilities(ideal, s, validate=False) + lam * born_probabilities(mixed, s, validate=False)
        out.append(p / p.sum())
    return np.array(out)


def noisy_state_from_fraction(ideal, lam: float, counts: int = SYNTHETIC_COUNTS) -> np.ndarray:
    if not 0 <= lam <= 1:
        raise ValueError("background fraction must be in [0, 1]")
    record = record_from_probabilities(noisy_probabilities(ideal, lam), counts)
    return mle_reconstruct(record).rho


def noisy_state(ideal, model: ChannelModel, counts: int = SYNTHETIC_COUNTS) -> np.ndarray:
    """State reconstructed by maximum likelihood from background-polluted probabilities."""
    return noisy_state_from_fraction(ideal, background_fraction(model), counts)


def apply_loss(photon_probability: float, model: ChannelModel) -> float:
    if not 0 <= photon_probability <= 1:
        raise ValueError("photon_probability must be in [0, 1]")
    return photon_probability * model.transmission


def compose(*models: ChannelModel) -> ChannelModel:
    """Concatenate channels: transmissions multiply, the last detector stage is kept."""
    if not models:
        raise ValueError("at least one channel is required")
    t = float(np.prod([m.transmission for m in models]))
    last = models[-1]
    return ChannelModel(t, last.background_rate, last.window, last.signal_probability)
