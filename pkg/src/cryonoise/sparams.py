"""Two-port scattering-parameter containers and network algebra."""

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, GridError, SingularError
from .physics import port_powers


def _as_freqs(freqs):
    freqs = np.atleast_1d(np.asarray(freqs, dtype=float))
    if freqs.ndim != 1:
        raise GridError("frequency grid must be one-dimensional")
    if np.any(~(freqs > 0)):
        raise GridError("frequencies must be strictly positive")
    if np.any(np.diff(freqs) <= 0):
        raise GridError("frequencies must be strictly ascending")
    return freqs


def _interp_complex(x_new, x, y):
    # linear in real and imaginary parts; caller guarantees x_new inside [x0, x-1]
    y = np.asarray(y)
    flat = y.reshape(len(x), -1)
    out = np.empty((len(x_new), flat.shape[1]), dtype=complex)
    for j in range(flat.shape[1]):
        out[:, j] = np.interp(x_new, x, flat[:, j].real) + 1j * np.interp(x_new, x, flat[:, j].imag)
    return out.reshape((len(x_new),) + y.shape[1:])


def _check_span(f_new, freqs):
    f_new = np.atleast_1d(np.asarray(f_new, dtype=float))
    lo, hi = freqs[0], freqs[-1]
    tol = 1e-12 * max(abs(lo), abs(hi))
    bad = f_new[(f_new < lo - tol) | (f_new > hi + tol)]
    if bad.size:
        raise GridError(
            f"cannot extrapolate to {bad.tolist()} Hz (data covers {lo:g}..{hi:g} Hz)"
        )
    return np.clip(f_new, lo, hi)


@dataclass(frozen=True)
class OnePortSParams:
    """Reflection coefficient trace on a frequency grid."""

    freqs: np.ndarray
    gamma: np.ndarray
    z0: float = 50.0

    def __post_init__(self):
        freqs = _as_freqs(self.freqs)
        gamma = np.atleast_1d(np.asarray(self.gamma, dtype=complex))
        if gamma.shape != freqs.shape:
            raise GridError(f"{gamma.shape[0]} reflection values for {freqs.size} frequencies")
        object.__setattr__(self, "freqs", freqs)
        object.__setattr__(self, "gamma", gamma)

    def __len__(self):
        return self.freqs.size

    def at(self, f):
        f = _check_span(f, self.freqs)
        if self.freqs.size == 1:
            return np.full(f.shape, self.gamma[0])
        return _interp_complex(f, self.freqs, self.gamma)


@dataclass(frozen=True)
class TwoPortSParams:
    """Stack of complex 2x2 scattering matrices, one per frequency.

    ``s[k]`` is ``[[S11, S12], [S21, S22]]`` at ``freqs[k]`` (Hz).
    """

    freqs: np.ndarray
    s: np.ndarray
    z0: float = 50.0
    passive: bool = False

    def __post_init__(self):
        freqs = _as_freqs(self.freqs)
        s = np.asarray(self.s, dtype=complex)
        if s.ndim == 2:
            s = s[np.newaxis]
        if s.shape != (freqs.size, 2, 2):
            raise GridError(f"expected S array of shape ({freqs.size}, 2, 2), got {s.shape}")
        object.__setattr__(self, "freqs", freqs)
        object.__setattr__(self, "s", s)
        if self.passive and not self.is_passive():
            raise DomainError("flagged passive but largest singular value exceeds 1")

    @classmethod
    def from_entries(cls, freqs, s11, s12, s21, s22, **kw):
        freqs = np.atleast_1d(np.asarray(freqs, dtype=float))
        n = freqs.size
        s = np.empty((n, 2, 2), dtype=complex)
        for (i, j), v in zip(((0, 0), (0, 1), (1, 0), (1, 1)), (s11, s12, s21, s22)):
            s[:, i, j] = np.broadcast_to(np.asarray(v, dtype=complex), (n,))
        return cls(freqs, s, **kw)

    def __len__(self):
        return self.freqs.size

    @property
    def s11(self):
        return self.s[:, 0, 0]

    @property
    def s12(self):
        return self.s[:, 0, 1]

    @property
    def s21(self):
        return self.s[:, 1, 0]

    @property
    def s22(self):
        return self.s[:, 1, 1]

    def is_passive(self, tol=1e-9):
        if not np.all(np.isfinite(self.s)):
            return False
        sv = np.linalg.svd(self.s, compute_uv=False)
        return bool(np.all(sv[:, 0] <= 1 + tol))

    def is_reciprocal(self, tol=1e-10):
        return bool(np.all(np.abs(self.s12 - self.s21) <= tol))

    def at(self, f):
        """S matrices interpolated onto ``f`` (no extrapolation)."""
        f = _check_span(f, self.freqs)
        if self.freqs.size == 1:
            return np.broadcast_to(self.s[0], (f.size, 2, 2)).copy()
        return _interp_complex(f, self.freqs, self.s)

    def resample(self, freqs):
        freqs = _as_freqs(freqs)
        if freqs.shape == self.freqs.shape and np.array_equal(freqs, self.freqs):
            return self
        return TwoPortSParams(freqs, self.at(freqs), z0=self.z0)

    def reversed(self):
        """Same network with ports 1 and 2 swapped."""
        return TwoPortSParams(self.freqs, self.s[:, ::-1, ::-1], z0=self.z0)

    def allclose(self, other, atol=1e-10):
        return (
            np.array_equal(self.freqs, other.freqs)
            and bool(np.allclose(self.s, other.s, rtol=0, atol=atol))
        )


def s2t(s):
    """S -> T for a stack of 2x2 matrices (``b1,a1 = T @ a2,b2`` convention)."""
    s = np.asarray(s, dtype=complex)
    s11, s12, s21, s22 = s[..., 0, 0], s[..., 0, 1], s[..., 1, 0], s[..., 1, 1]
    t = np.empty_like(s)
    t[..., 0, 0] = -(s11 * s22 - s12 * s21)
    t[..., 0, 1] = s11
    t[..., 1, 0] = -s22
    t[..., 1, 1] = 1
    return t / s21[..., None, None]


def t2s(t):
    t = np.asarray(t, dtype=complex)
    t11, t12, t21, t22 = t[..., 0, 0], t[..., 0, 1], t[..., 1, 0], t[..., 1, 1]
    s = np.empty_like(t)
    s[..., 0, 0] = t12
    s[..., 0, 1] = t11 * t22 - t12 * t21
    s[..., 1, 0] = 1
    s[..., 1, 1] = -t21
    return s / t22[..., None, None]


def _common_grid(a, b):
    if np.array_equal(a.freqs, b.freqs):
        return a, b
    lo = max(a.freqs[0], b.freqs[0])
    hi = min(a.freqs[-1], b.freqs[-1])
    grid = a.freqs[(a.freqs >= lo) & (a.freqs <= hi)]
    if grid.size == 0:
        raise GridError("frequency grids do not overlap")
    return a.resample(grid), b.resample(grid)


def cascade(a, b):
    """Connect port 2 of ``a`` to port 1 of ``b``.

    Mismatched grids are resampled onto ``a``'s points inside the overlap.
    """
    a, b = _common_grid(a, b)
    for name, net in (("first", a), ("second", b)):
        zero = np.abs(net.s21) == 0
        if np.any(zero):
            raise SingularError(
                f"S21 of {name} network vanishes at {net.freqs[zero].tolist()} Hz; "
                "T-parameters undefined"
            )
    return TwoPortSParams(a.freqs, t2s(s2t(a.s) @ s2t(b.s)), z0=a.z0)


def attenuator_model(att_db, freqs):
    """Ideal matched attenuator, ``S21 = S12 = 10**(-att_db/20)``."""
    if att_db < 0:
        raise DomainError("attenuation must be >= 0 dB")
    t = 10 ** (-att_db / 20)
    return TwoPortSParams.from_entries(freqs, 0, t, t, 0)


def thru(freqs):
    return attenuator_model(0.0, freqs)


def line_model(freqs, delay_s=0.0, loss_db=0.0):
    """Matched reciprocal line with a fixed group delay."""
    freqs = np.atleast_1d(np.asarray(freqs, dtype=float))
    t = 10 ** (-loss_db / 20) * np.exp(-2j * np.pi * freqs * delay_s)
    return TwoPortSParams.from_entries(freqs, 0, t, t, 0)


@dataclass(frozen=True)
class NoiseSourceModel:
    """A two-port emitting noise out of ``emitting_port``.

    ``kind`` is ``"thermal"`` or ``"shot"``; ``temperature`` is the junction
    temperature used by shot sources.
    """

    sparams: TwoPortSParams
    kind: str = "thermal"
    emitting_port: int = 2
    temperature: float = 0.0

    def __post_init__(self):
        if self.kind not in ("thermal", "shot"):
            raise DomainError(f"unknown emitter kind {self.kind!r}")
        if self.emitting_port not in (1, 2):
            raise DomainError("emitting_port must be 1 or 2")

    @classmethod
    def ideal(cls, freqs, **kw):
        """Perfectly matched one-port load (S = 0)."""
        return cls(TwoPortSParams.from_entries(freqs, 0, 0, 0, 0), **kw)

    def port_powers(self, f):
        return port_powers(self.sparams.at(f), self.emitting_port)

    def output_occupation(self, f, control):
        """Emitted occupation for a physical control (T in K or V in volts)."""
        from .physics import emitted_occupation, planck_occupation, shot_occupation

        if self.kind == "thermal":
            n = planck_occupation(f, control)
        else:
            n = shot_occupation(f, control, self.temperature)
        s_pp2, s_pq2 = self.port_powers(f)
        out = emitted_occupation(s_pp2, s_pq2, n)
        return float(out[0]) if np.ndim(f) == 0 else out


def random_passive(rng, n=1, reciprocal=False, max_sv=0.95, min_transmission=0.0):
    """Random passive 2x2 S stack; used by tests and the simulator."""
    out = np.empty((n, 2, 2), dtype=complex)
    for k in range(n):
        while True:
            m = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
            if reciprocal:
                m = 0.5 * (m + m.T)
            sv = np.linalg.svd(m, compute_uv=False)[0]
            m = m * (max_sv * rng.uniform(0.3, 1.0) / sv)
            if min(abs(m[1, 0]), abs(m[0, 1])) >= min_transmission:
                break
        out[k] = m
    return out
