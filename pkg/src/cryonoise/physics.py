"""Photon-flux noise laws and conversions.

All public functions take ordinary frequencies in Hz and broadcast over
numpy arrays.  Noise is expressed as a photon flux (photons per second per
hertz), i.e. PSD / (hbar*omega); symmetrised vacuum noise is 1/2.
"""

import numpy as np

from .constants import HBAR, KB, QE
from .errors import DomainError

__all__ = [
    "angular",
    "planck_occupation",
    "shot_occupation",
    "quantum_limit",
    "emitted_occupation",
    "source_output_occupation",
    "psd_from_occupation",
    "occupation_from_psd",
    "source_qualification",
    "epsilon_from_temperature",
    "temperature_from_epsilon",
    "epsilon_from_voltage",
    "voltage_from_epsilon",
]


def angular(f):
    return 2 * np.pi * np.asarray(f, dtype=float)


def _check_freq(f):
    f = np.asarray(f, dtype=float)
    if np.any(~(f > 0)):
        raise DomainError("frequency must be strictly positive")
    return f


def _check_temp(T):
    T = np.asarray(T, dtype=float)
    if np.any(~(T >= 0)):
        raise DomainError("temperature must be non-negative")
    return T


def _scalar(x):
    return float(x) if np.ndim(x) == 0 else x


def planck_occupation(f, T):
    """Symmetrised thermal occupation ``coth(hbar w / 2 k_B T) / 2``.

    Returns exactly 0.5 at ``T = 0``.
    """
    f = _check_freq(f)
    T = _check_temp(T)
    f, T = np.broadcast_arrays(f, T)
    out = np.full(f.shape, 0.5)
    hot = T > 0
    with np.errstate(over="ignore", divide="ignore"):
        # subnormal T overflows to x = inf, which correctly gives 0.5
        x = HBAR * angular(f[hot]) / (2 * KB * T[hot])
    out[hot] = 0.5 / np.tanh(x)
    return _scalar(out)


def _x_coth(x, two_kt):
    # x * coth(x / 2kT), continuous through x = 0 (-> 2kT) and exact at T = 0 (-> |x|)
    x, two_kt = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(two_kt, dtype=float))
    out = np.array(np.abs(x), dtype=float)
    warm = two_kt > 0
    xs = x[warm]
    a = two_kt[warm]
    with np.errstate(divide="ignore", invalid="ignore"):
        v = xs / np.tanh(xs / a)
    out[warm] = np.where(xs == 0, a, v)
    return out


def shot_occupation(f, V, T):
    """Symmetrised shot-noise occupation of a biased tunnel junction.

    ``(1 / 4 hbar w) * sum_(+/-) (eV +/- hbar w) coth((eV +/- hbar w) / 2 k_B T)``

    Reduces to :func:`planck_occupation` at ``V = 0`` and to
    ``e|V| / (2 hbar w)`` at large bias.
    """
    f = _check_freq(f)
    T = _check_temp(T)
    V = np.asarray(V, dtype=float)
    f, V, T = np.broadcast_arrays(f, V, T)
    hw = HBAR * angular(f)
    ev = QE * V
    two_kt = 2 * KB * T
    s = _x_coth(ev + hw, two_kt) + _x_coth(ev - hw, two_kt)
    return _scalar(s / (4 * hw))


def quantum_limit(G):
    """Minimum added noise ``|(G - 1) / 2G|`` of a phase-preserving device."""
    G = np.asarray(G, dtype=float)
    if np.any(G == 0):
        raise DomainError("gain must be nonzero")
    return _scalar(np.abs((G - 1) / (2 * G)))


def emitted_occupation(s_pp2, s_pq2, n_source):
    """Noise leaving the emitting port of a two-port source.

    ``s_pp2`` is the reflection power |S_pp|^2 of the emitting port, ``s_pq2``
    the transmission power from the other port, which is assumed to see
    vacuum.
    """
    return (1 - np.asarray(s_pp2)) * n_source + 0.5 * np.asarray(s_pq2)


def source_output_occupation(src, n_source, f):
    """Output occupation of a :class:`~cryonoise.sparams.NoiseSourceModel`."""
    s_pp2, s_pq2 = src.port_powers(f)
    return _scalar(emitted_occupation(s_pp2, s_pq2, n_source))


def psd_from_occupation(n, f, gsys, tsys):
    """PSD in W/Hz seen after a linear chain of gain ``gsys`` and noise ``tsys``."""
    f = _check_freq(f)
    return _scalar(np.asarray(gsys) * (HBAR * angular(f) * np.asarray(n) + KB * np.asarray(tsys)))


def occupation_from_psd(psd, f, gsys, tsys):
    f = _check_freq(f)
    return _scalar((np.asarray(psd) / np.asarray(gsys) - KB * np.asarray(tsys)) / (HBAR * angular(f)))


def source_qualification(sparams, emitting_port=2, threshold=0.1):
    """Per-frequency check ``|S_pq|^2 <= threshold * (1 - |S_pp|^2)``.

    Returns a boolean array aligned with ``sparams.freqs``.
    """
    if not 0 < threshold < 1:
        raise DomainError("threshold must lie in (0, 1)")
    s_pp2, s_pq2 = port_powers(sparams.s, emitting_port)
    return s_pq2 <= threshold * (1 - s_pp2)


def port_powers(s, emitting_port):
    """(|S_pp|^2, |S_pq|^2) arrays for a stack of 2x2 matrices."""
    if emitting_port not in (1, 2):
        raise DomainError("emitting_port must be 1 or 2")
    p = emitting_port - 1
    q = 1 - p
    s = np.asarray(s)
    return np.abs(s[..., p, p]) ** 2, np.abs(s[..., p, q]) ** 2


def epsilon_from_temperature(T, f_signal):
    """Dimensionless control parameter k_B T / (hbar w_s)."""
    return _scalar(KB * np.asarray(T, dtype=float) / (HBAR * angular(f_signal)))


def temperature_from_epsilon(eps, f_signal):
    return _scalar(np.asarray(eps, dtype=float) * HBAR * angular(f_signal) / KB)


def epsilon_from_voltage(V, f_signal):
    """Dimensionless control parameter e V / (2 hbar w_s)."""
    return _scalar(QE * np.asarray(V, dtype=float) / (2 * HBAR * angular(f_signal)))


def voltage_from_epsilon(eps, f_signal):
    return _scalar(np.asarray(eps, dtype=float) * 2 * HBAR * angular(f_signal) / QE)
