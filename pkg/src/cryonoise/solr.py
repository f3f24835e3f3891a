"""SOLR (short-open-load-reciprocal) two-port vector calibration.

Eight-term error model, no switch-term correction::

    port 1 box   [[e00, e01], [e10, e11]]   (VNA side first)
    port 2 box   [[e22, e23], [e32, e33]]   (DUT side first)

Only the products ``e10e01``, ``e23e32``, ``e10e32`` and ``e23e01`` are
observable, tied by ``e10e32 * e23e01 == e10e01 * e23e32``.  Internally the
port-1 box is normalised to ``e01 = 1``.
"""

import json
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import AmbiguityError, DomainError, GridError, SingularError
from .sparams import OnePortSParams, TwoPortSParams, s2t, t2s

TERMS = ("e00", "e11", "e10e01", "e33", "e22", "e23e32", "e10e32", "e23e01")

# consecutive tracking roots closer than this to a quarter turn apart are ambiguous
_AMBIGUOUS_COS = np.cos(np.deg2rad(60))


@dataclass(frozen=True)
class OnePortErrors:
    """Three-term model ``Gm = d + r * G / (1 - s * G)`` for one port."""

    freqs: np.ndarray
    directivity: np.ndarray
    source_match: np.ndarray
    tracking: np.ndarray

    def measure(self, gamma):
        gamma = np.asarray(gamma, dtype=complex)
        return self.directivity + self.tracking * gamma / (1 - self.source_match * gamma)

    def correct(self, gamma_m):
        gamma_m = np.asarray(gamma_m, dtype=complex)
        x = gamma_m - self.directivity
        return x / (self.tracking + self.source_match * x)


def _as_standard(value, name, freqs):
    if isinstance(value, OnePortSParams):
        g = value.at(freqs)
    else:
        g = np.broadcast_to(np.asarray(value, dtype=complex), freqs.shape).copy()
    if np.any(np.abs(g) > 1 + 1e-9):
        raise DomainError(f"{name} standard has |Gamma| > 1")
    return g


@dataclass(frozen=True)
class OnePortStandards:
    """Reflection models of the short/open/load standards.

    Each entry is a complex constant or a file-backed :class:`OnePortSParams`.
    """

    short: object = -1.0
    open: object = 1.0
    load: object = 0.0

    def gammas(self, freqs):
        freqs = np.atleast_1d(np.asarray(freqs, dtype=float))
        return (
            _as_standard(self.short, "short", freqs),
            _as_standard(self.open, "open", freqs),
            _as_standard(self.load, "load", freqs),
        )


def solve_one_port(freqs, measured_short, measured_open, measured_load, standards=None):
    """Exact three-standard solution of the one-port error model per frequency.

    Uses the bilinear form ``Gm = e00 + G*Gm*e11 - G*de`` with
    ``de = e00*e11 - e10e01``.
    """
    standards = standards or OnePortStandards()
    freqs = np.atleast_1d(np.asarray(freqs, dtype=float))
    gm = np.stack([np.broadcast_to(np.asarray(m, dtype=complex), freqs.shape)
                   for m in (measured_short, measured_open, measured_load)], axis=-1)
    gs = np.stack(standards.gammas(freqs), axis=-1)
    a = np.stack([np.ones_like(gs), gs * gm, -gs], axis=-1)
    for k in range(freqs.size):
        g = gs[k]
        if min(abs(g[0] - g[1]), abs(g[0] - g[2]), abs(g[1] - g[2])) < 1e-12:
            raise SingularError(f"degenerate standards at {freqs[k]:g} Hz (two identical reflections)")
    try:
        x = np.linalg.solve(a, gm[..., None])[..., 0]
    except np.linalg.LinAlgError:
        raise SingularError("singular one-port calibration system") from None
    e00, e11, de = x[:, 0], x[:, 1], x[:, 2]
    return OnePortErrors(freqs, e00, e11, e00 * e11 - de)


@dataclass(frozen=True)
class ErrorBoxes:
    freqs: np.ndarray
    e00: np.ndarray
    e11: np.ndarray
    e10e01: np.ndarray
    e33: np.ndarray
    e22: np.ndarray
    e23e32: np.ndarray
    e10e32: np.ndarray
    e23e01: np.ndarray

    def __post_init__(self):
        freqs = np.atleast_1d(np.asarray(self.freqs, dtype=float))
        object.__setattr__(self, "freqs", freqs)
        for name in TERMS:
            v = np.broadcast_to(np.asarray(getattr(self, name), dtype=complex), freqs.shape).copy()
            object.__setattr__(self, name, v)
        for name in ("e10e01", "e23e32", "e10e32", "e23e01"):
            if np.any(getattr(self, name) == 0):
                raise DomainError(f"tracking term {name} vanishes")

    @classmethod
    def identity(cls, freqs):
        return cls(freqs, 0, 0, 1, 0, 0, 1, 1, 1)

    @classmethod
    def from_boxes(cls, freqs, box1, box2):
        """Build from full port-1 / port-2 S stacks (port-2 box DUT side first)."""
        box1 = np.broadcast_to(np.asarray(box1, dtype=complex), (np.size(freqs), 2, 2))
        box2 = np.broadcast_to(np.asarray(box2, dtype=complex), (np.size(freqs), 2, 2))
        e00, e01, e10, e11 = box1[:, 0, 0], box1[:, 0, 1], box1[:, 1, 0], box1[:, 1, 1]
        e22, e23, e32, e33 = box2[:, 0, 0], box2[:, 0, 1], box2[:, 1, 0], box2[:, 1, 1]
        return cls(freqs, e00, e11, e10 * e01, e33, e22, e23 * e32, e10 * e32, e23 * e01)

    def _t_boxes(self):
        one = np.ones_like(self.e00)
        sa = np.stack([np.stack([self.e00, one], -1),
                       np.stack([self.e10e01, self.e11], -1)], -2)
        sb = np.stack([np.stack([self.e22, self.e23e01], -1),
                       np.stack([self.e10e32 / self.e10e01, self.e33], -1)], -2)
        return s2t(sa), s2t(sb)

    def is_identity(self):
        """Per-frequency mask of a perfect error model (data passes through bit for bit)."""
        ident = np.ones(self.freqs.shape, dtype=bool)
        for name in TERMS:
            ident &= getattr(self, name) == (0 if name in ("e00", "e11", "e33", "e22") else 1)
        return ident

    def port1(self):
        return OnePortErrors(self.freqs, self.e00, self.e11, self.e10e01)

    def port2(self):
        return OnePortErrors(self.freqs, self.e33, self.e22, self.e23e32)

    def _check_grid(self, net):
        if not np.array_equal(net.freqs, self.freqs):
            raise GridError("error boxes and measurement are on different frequency grids")

    def embed(self, dut):
        """Raw measurement the VNA would report for ``dut``."""
        self._check_grid(dut)
        ta, tb = self._t_boxes()
        s = t2s(ta @ s2t(dut.s) @ tb)
        ident = self.is_identity()
        s[ident] = dut.s[ident]
        return TwoPortSParams(dut.freqs, s, z0=dut.z0)

    def consistency(self):
        """Residual of ``e10e32*e23e01 - e10e01*e23e32`` (zero for a valid model)."""
        return np.abs(self.e10e32 * self.e23e01 - self.e10e01 * self.e23e32)

    def to_dict(self):
        return {
            "freq_hz": self.freqs.tolist(),
            "terms": {n: [[float(z.real), float(z.imag)] for z in getattr(self, n)] for n in TERMS},
        }

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d):
        terms = {n: np.array([complex(re, im) for re, im in d["terms"][n]]) for n in TERMS}
        return cls(np.asarray(d["freq_hz"], dtype=float), **terms)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def deembed(raw, eb, return_flags=False):
    """Remove the error boxes from a raw two-port measurement.

    Points where the correction is singular (raw S21 == 0 or non-finite
    result) come back as NaN and are reported, not raised.
    """
    eb._check_grid(raw)
    ta, tb = eb._t_boxes()
    bad = (np.abs(raw.s21) == 0) | ~np.all(np.isfinite(raw.s), axis=(1, 2))
    s_raw = raw.s.copy()
    s_raw[bad] = np.eye(2)[::-1]  # placeholder thru, overwritten below
    with np.errstate(all="ignore"):
        t = np.linalg.solve(ta, s2t(s_raw)) @ np.linalg.inv(tb)
        s = t2s(t)
    bad |= ~np.all(np.isfinite(s), axis=(1, 2))
    ident = eb.is_identity()
    s[ident] = raw.s[ident]
    bad &= ~ident | ~np.all(np.isfinite(raw.s), axis=(1, 2))
    s[bad] = np.nan
    flagged = raw.freqs[bad]
    if flagged.size:
        warnings.warn(f"singular de-embedding at {flagged.tolist()} Hz", RuntimeWarning, stacklevel=2)
    out = TwoPortSParams(raw.freqs, s, z0=raw.z0)
    return (out, flagged) if return_flags else out


def _orient_by_estimate(r, op1, op2, m21, m12, m, phi):
    # S21 of the corrected reciprocal standard scales as 1/root: keep the root
    # that puts it within +/-90 deg of the estimate
    eb = ErrorBoxes(op1.freqs, op1.directivity, op1.source_match, op1.tracking,
                    op2.directivity, op2.source_match, op2.tracking,
                    r, op1.tracking * op2.tracking / r)
    with np.errstate(all="ignore"):
        s21 = deembed(TwoPortSParams(op1.freqs, m), eb).s21
    flip = np.real(s21 * np.exp(-1j * phi)) < 0
    return np.where(flip, -r, r)


def solve_solr(port1, port2, measured_reciprocal, phase_estimate=None):
    """Complete the eight-term model from the reciprocal-standard measurement.

    ``port1``/``port2`` are :class:`OnePortErrors`; ``measured_reciprocal`` is
    the raw two-port measurement of any reciprocal network.

    ``phase_estimate`` is the expected transmission phase (radians) of that
    network.  An array gives one estimate per frequency; a scalar (default
    0) applies at the lowest frequency and the remaining branch choices
    follow phase continuity of the tracking term.
    """
    freqs = measured_reciprocal.freqs
    for op in (port1, port2):
        if not np.array_equal(op.freqs, freqs):
            raise GridError("one-port solutions and reciprocal measurement are on different grids")
    m = measured_reciprocal.s
    m21, m12 = m[:, 1, 0], m[:, 0, 1]
    if np.any(m12 == 0) or np.any(m21 == 0):
        raise SingularError("reciprocal standard shows zero transmission")
    r = np.sqrt(port1.tracking * port2.tracking * m21 / m12)

    if phase_estimate is not None and np.ndim(phase_estimate) > 0:
        phi = np.broadcast_to(np.asarray(phase_estimate, dtype=float), freqs.shape)
        r = _orient_by_estimate(r, port1, port2, m21, m12, m, phi)
    else:
        phi0 = 0.0 if phase_estimate is None else float(phase_estimate)
        r[:1] = _orient_by_estimate(r[:1], _slice(port1, 0), _slice(port2, 0),
                                    m21[:1], m12[:1], m[:1], np.array([phi0]))
        ambiguous = []
        for k in range(1, freqs.size):
            c = np.real(r[k] * np.conj(r[k - 1])) / (abs(r[k]) * abs(r[k - 1]))
            if abs(c) < _AMBIGUOUS_COS:
                ambiguous.append(float(freqs[k]))
            if c < 0:
                r[k] = -r[k]
        if ambiguous:
            raise AmbiguityError(
                "tracking phase discontinuity; supply a per-frequency phase estimate. "
                f"Ambiguous at {ambiguous} Hz"
            )
    return ErrorBoxes(freqs, port1.directivity, port1.source_match, port1.tracking,
                      port2.directivity, port2.source_match, port2.tracking,
                      r, port1.tracking * port2.tracking / r)


def _slice(op, k):
    return OnePortErrors(op.freqs[k:k + 1], op.directivity[k:k + 1],
                         op.source_match[k:k + 1], op.tracking[k:k + 1])


def calibrate(freqs, raw_short, raw_open, raw_load, raw_reciprocal,
              standards1=None, standards2=None, phase_estimate=None):
    """Full SOLR from raw two-port measurements of the standards.

    For each reflect standard the VNA sees it on both ports at once, so its
    raw S11 feeds the port-1 solve and its raw S22 the port-2 solve.
    """
    p1 = solve_one_port(freqs, raw_short.s11, raw_open.s11, raw_load.s11, standards1)
    p2 = solve_one_port(freqs, raw_short.s22, raw_open.s22, raw_load.s22, standards2)
    return solve_solr(p1, p2, raw_reciprocal, phase_estimate)
