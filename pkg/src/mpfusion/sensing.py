"""Local sensing statistics and their closed-form moments.

Each node observes K samples y = s + nu, nu ~ N(0, noise_var I), where s is
the (possibly zero) active signal.  Two local statistics are supported:

* coherent (matched filter):   gamma = t^T y - ||t||^2 / 2
  for a known template t; under the nominal on/off states with s = t or 0
  this is Gaussian with mean +-E/2 and variance E * noise_var, E = ||t||^2.

* energy:                      gamma = ||y||^2 / K - tau0
  with tau0 picked so the Gaussian approximation of the noise-only statistic
  has tail probability `far` above zero:
  tau0 = noise_var * (1 + sqrt(2/K) * Qinv(far)).

Both statistics are "positive means active": deciding gamma > 0 gives the
stand-alone detector with false-alarm rate `far` (exact for the matched
filter when paired with the matching threshold, Gaussian-approximate for
energy).  Moments below are the ones used everywhere else in the package
for closed-form performance work.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np
import scipy.special as _sp

_SQRT2 = np.sqrt(2.0)


def q_function(t):
    """Gaussian tail Q(t) = P{N(0,1) > t}.

    Wraps the complementary error function, Q(t) = erfc(t/sqrt 2)/2; absolute
    error is below 1e-14 for |t| <= 8 (double-precision rational
    approximation), comfortably inside the 1e-12 contract.
    """
    return 0.5 * _sp.erfc(np.asarray(t, dtype=float) / _SQRT2)


def q_inverse(p):
    """Inverse Gaussian tail: q_function(q_inverse(p)) = p for p in (0, 1)."""
    p = np.asarray(p, dtype=float)
    if np.any((p <= 0.0) | (p >= 1.0)):
        raise ValueError("q_inverse domain is the open interval (0, 1)")
    out = -_sp.ndtri(p)
    return float(out) if out.ndim == 0 else out


def energy_threshold(noise_var: float, sample_count: int, far: float) -> float:
    """Energy-detector offset tau0 pinning the stand-alone FAR."""
    _check_noise(noise_var)
    _check_samples(sample_count)
    _check_far(far)
    return noise_var * (1.0 + np.sqrt(2.0 / sample_count) * q_inverse(far))


def gen_observations(amplitudes, noise_var: float, sample_count: int, gen: np.random.Generator):
    """Draw y = a + nu for constant-amplitude signals.

    `amplitudes` has one scalar per observation (any shape); the result
    appends a sample axis of length `sample_count`.
    """
    _check_noise(noise_var)
    _check_samples(sample_count)
    amp = np.asarray(amplitudes, dtype=float)
    noise = gen.standard_normal(amp.shape + (sample_count,)) * np.sqrt(noise_var)
    return amp[..., None] + noise


def llr_matched(y, template):
    """Coherent statistic t^T y - ||t||^2/2 along the last axis of y."""
    y = np.asarray(y, dtype=float)
    t = np.asarray(template, dtype=float)
    if t.ndim != 1 or y.shape[-1] != t.shape[0]:
        raise ValueError("template must be a vector matching y's sample axis")
    if not np.all(np.isfinite(y)):
        raise ValueError("non-finite observations")
    return y @ t - 0.5 * float(t @ t)


def llr_energy(y, tau0: float):
    """Energy statistic ||y||^2 / K - tau0 along the last axis of y."""
    y = np.asarray(y, dtype=float)
    if not np.all(np.isfinite(y)):
        raise ValueError("non-finite observations")
    return np.mean(np.square(y), axis=-1) - tau0


def matched_moments(template_energy: float, cross: float, noise_var: float) -> Tuple[float, float]:
    """Mean/variance of the coherent statistic.

    `cross` is t^T s for the actually-active signal s (E when the nominal
    signal is on, 0 when everything is off, in between for partial overlap).
    """
    _check_noise(noise_var)
    if template_energy < 0:
        raise ValueError("template energy must be nonnegative")
    return cross - 0.5 * template_energy, template_energy * noise_var


def energy_moments(active_energy: float, noise_var: float, sample_count: int,
                   tau0: float) -> Tuple[float, float]:
    """Mean/variance of the energy statistic when the received signal energy
    (over the whole window) is `active_energy` — 0 when silent, and possibly
    a coherent-sum energy when several sources add up."""
    _check_noise(noise_var)
    _check_samples(sample_count)
    if active_energy < 0:
        raise ValueError("active energy must be nonnegative")
    snr = active_energy / (sample_count * noise_var)
    mean = noise_var * (1.0 + snr) - tau0
    var = (2.0 * noise_var**2 / sample_count) * (1.0 + 2.0 * snr)
    return mean, var


def snr_to_energy(snr_db: float, noise_var: float, sample_count: int) -> float:
    """Window energy E = K * noise_var * 10^(snr_db/10)."""
    _check_noise(noise_var)
    _check_samples(sample_count)
    return sample_count * noise_var * 10.0 ** (snr_db / 10.0)


@dataclass(frozen=True)
class SignalProfile:
    """Per-node nominal signal energies plus the shared sensing constants."""

    energies: tuple
    noise_var: float = 1.0
    sample_count: int = 100
    far: float = 0.1

    def __post_init__(self) -> None:
        _check_noise(self.noise_var)
        _check_samples(self.sample_count)
        _check_far(self.far)
        e = tuple(float(v) for v in self.energies)
        if any(v < 0 or not np.isfinite(v) for v in e):
            raise ValueError("node energies must be finite and nonnegative")
        object.__setattr__(self, "energies", e)

    @property
    def node_count(self) -> int:
        return len(self.energies)

    @property
    def tau0(self) -> float:
        return energy_threshold(self.noise_var, self.sample_count, self.far)

    def amplitude(self, j: int) -> float:
        """Constant per-sample amplitude carrying the node-j nominal energy."""
        return float(np.sqrt(self.energies[j - 1] / self.sample_count))


def profile_from_snr(snr_db, noise_var: float = 1.0, sample_count: int = 100,
                     far: float = 0.1) -> SignalProfile:
    energies = [snr_to_energy(s, noise_var, sample_count) for s in np.atleast_1d(snr_db)]
    return SignalProfile(tuple(energies), noise_var, sample_count, far)


def _check_noise(noise_var: float) -> None:
    if not (noise_var > 0 and np.isfinite(noise_var)):
        raise ValueError("noise variance must be positive and finite")


def _check_samples(sample_count: int) -> None:
    if int(sample_count) != sample_count or sample_count < 1:
        raise ValueError("sample count must be a positive integer")


def _check_far(far: float) -> None:
    if not 0.0 < far < 1.0:
        raise ValueError("false-alarm rate must lie in (0, 1)")
