"""Readout-chain calibration from swept noise sources, and added-noise extraction.

The sweep model

    S(T) = G_sys * [ hbar w * N_pow(T) + k_B T_sys ]

is affine in ``N_pow`` once the source S-parameters are folded into
``N_pow = (1 - |S_pp|^2) N_therm(T) + |S_pq|^2 / 2``.  Every fit here is an
exact linear least-squares problem in ``(G_sys, G_sys k_B T_sys)``.
"""

import csv
import io
import json
import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .constants import HBAR, KB
from .errors import DomainError, GridError, TouchstoneError, UnderdeterminedError
from .physics import angular, emitted_occupation, planck_occupation, quantum_limit
from .sparams import NoiseSourceModel
from .thermal_chain import ReadoutChainParams

log = logging.getLogger(__name__)

RESULT_COLUMNS = ("freq_hz", "gsys_linear", "gsys_db", "tsys_K", "sigma_gsys", "sigma_tsys",
                  "n_out", "n_add", "sigma_n_add", "quantum_limit")


@dataclass(frozen=True)
class PlanckSweep:
    """PSD records of a temperature sweep.

    ``temps`` has shape ``(n_records,)``; ``psd`` has shape
    ``(n_records, n_freqs)`` in W/Hz.  ``source`` defaults to an ideal
    matched load.
    """

    freqs: np.ndarray
    temps: np.ndarray
    psd: np.ndarray
    source: NoiseSourceModel = None
    weights: np.ndarray = None

    def __post_init__(self):
        freqs = np.atleast_1d(np.asarray(self.freqs, dtype=float))
        temps = np.atleast_1d(np.asarray(self.temps, dtype=float))
        psd = np.asarray(self.psd, dtype=float).reshape(temps.size, freqs.size)
        if np.any(temps < 0):
            raise DomainError("negative source temperature")
        if np.any(~(psd > 0)):
            raise DomainError("PSD values must be positive")
        object.__setattr__(self, "freqs", freqs)
        object.__setattr__(self, "temps", temps)
        object.__setattr__(self, "psd", psd)
        if self.source is None:
            object.__setattr__(self, "source", NoiseSourceModel.ideal(freqs))

    def source_occupation(self):
        """``N_pow`` at every (record, frequency)."""
        s_pp2, s_pq2 = self.source.port_powers(self.freqs)
        n_th = planck_occupation(self.freqs[None, :], self.temps[:, None])
        return emitted_occupation(s_pp2[None, :], s_pq2[None, :], n_th)

    @classmethod
    def from_csv(cls, text, source=None):
        """Long-format CSV with columns ``freq_hz, T_vts_K, psd_W_per_Hz``."""
        rows = list(csv.reader(io.StringIO(text)))
        if not rows:
            raise TouchstoneError("empty sweep file", 1)
        header = [h.strip() for h in rows[0]]
        need = ("freq_hz", "T_vts_K", "psd_W_per_Hz")
        missing = [c for c in need if c not in header]
        if missing:
            raise TouchstoneError(f"missing column(s) {missing}", 1)
        cols = [header.index(c) for c in need]
        table = {}
        for lineno, row in enumerate(rows[1:], start=2):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                f, t, p = (float(row[c]) for c in cols)
            except (ValueError, IndexError):
                raise TouchstoneError(f"bad sweep row {row!r}", lineno) from None
            table.setdefault(t, {})[f] = p
        temps = sorted(table)
        freqs = sorted(table[temps[0]])
        psd = np.empty((len(temps), len(freqs)))
        for i, t in enumerate(temps):
            if sorted(table[t]) != freqs:
                raise TouchstoneError(f"record at T={t} K does not cover the common grid")
            psd[i] = [table[t][f] for f in freqs]
        return cls(freqs, temps, psd, source=source)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("freq_hz", "T_vts_K", "psd_W_per_Hz"))
        for i, t in enumerate(self.temps):
            for j, f in enumerate(self.freqs):
                w.writerow((repr(float(f)), repr(float(t)), repr(float(self.psd[i, j]))))
        return buf.getvalue()


@dataclass(frozen=True)
class PlanckFitResult:
    freqs: np.ndarray
    gsys: np.ndarray
    tsys: np.ndarray
    sigma_gsys: np.ndarray
    sigma_tsys: np.ndarray
    cov_gt: np.ndarray
    residual_rms: np.ndarray
    dof: int
    ok: np.ndarray

    def chain(self):
        return ReadoutChainParams(self.freqs, self.gsys, self.tsys, self.sigma_gsys,
                                  self.sigma_tsys, self.cov_gt)

    def to_dict(self):
        d = {k: np.asarray(getattr(self, k)).tolist()
             for k in ("freqs", "gsys", "tsys", "sigma_gsys", "sigma_tsys", "cov_gt",
                       "residual_rms", "ok")}
        d["dof"] = self.dof
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: (np.asarray(v) if k != "dof" else v) for k, v in d.items()})


def _wls(x, y, w):
    """Weighted straight-line fit ``y = a x + b``; returns (a, b, cov, rms)."""
    sw = np.sqrt(w)
    A = np.column_stack([x, np.ones_like(x)]) * sw[:, None]
    coef, *_ = np.linalg.lstsq(A, y * sw, rcond=None)
    resid = y - (coef[0] * x + coef[1])
    n = x.size
    xtx_inv = np.linalg.inv(A.T @ A)
    if n > 2:
        s2 = float(np.sum(w * resid ** 2) / (n - 2))
        cov = s2 * xtx_inv
    else:
        cov = np.full((2, 2), np.inf)
    return coef[0], coef[1], cov, float(np.sqrt(np.mean(resid ** 2)))


def fit_planck(sweep, threads=None):
    """Per-frequency linear least-squares fit of ``G_sys`` and ``T_sys``.

    The regression is done in photon units, ``S/(hbar w) = G N_pow + G N_sys``
    with ``N_sys = k_B T_sys / (hbar w)``; standard errors come from the
    usual OLS covariance with residual-variance estimate and are propagated
    to ``T_sys`` to first order.
    """
    temps = sweep.temps
    if np.unique(temps).size < 2:
        raise UnderdeterminedError("Planck fit needs at least two distinct source temperatures")
    n_pow = sweep.source_occupation()
    hw = HBAR * angular(sweep.freqs)
    y_all = sweep.psd / hw[None, :]
    w = np.ones(temps.size) if sweep.weights is None else np.asarray(sweep.weights, dtype=float)

    def one(j):
        return _wls(n_pow[:, j], y_all[:, j], w)

    idx = range(sweep.freqs.size)
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            fits = list(ex.map(one, idx))
    else:
        fits = [one(j) for j in idx]

    nf = sweep.freqs.size
    g = np.empty(nf); t = np.empty(nf)
    sg = np.empty(nf); st = np.empty(nf); cgt = np.empty(nf); rms = np.empty(nf)
    for j, (a, b, cov, r) in enumerate(fits):
        nsys = b / a
        # T = (hw/k) * b / a ; gradient wrt (a, b)
        scale = hw[j] / KB
        grad = np.array([-b / a ** 2, 1 / a]) * scale
        g[j] = a
        t[j] = nsys * scale
        sg[j] = np.sqrt(cov[0, 0])
        st[j] = np.sqrt(grad @ cov @ grad) if np.all(np.isfinite(cov)) else np.inf
        cgt[j] = (cov[0, 0] * grad[0] + cov[0, 1] * grad[1]) if np.all(np.isfinite(cov)) else np.nan
        rms[j] = r * hw[j]
    ok = g > 0
    if np.any(~ok):
        log.warning("non-positive G_sys fitted at %s Hz", sweep.freqs[~ok].tolist())
    if np.any(t < 0):
        warnings.warn(f"negative T_sys fitted at {sweep.freqs[t < 0].tolist()} Hz", RuntimeWarning, stacklevel=2)
    return PlanckFitResult(sweep.freqs, g, t, sg, st, cgt, rms, temps.size - 2, ok)


def y_factor(hot, cold, f, source=None):
    """Exact two-point solution for ``(G_sys, T_sys)``.

    ``hot`` and ``cold`` are ``(T, psd)`` pairs (``psd`` may be arrays over
    ``f``).
    """
    (t_h, p_h), (t_c, p_c) = hot, cold
    if not t_h > t_c:
        raise DomainError("y_factor needs T_hot > T_cold")
    f = np.asarray(f, dtype=float)
    if source is None:
        n_h, n_c = planck_occupation(f, t_h), planck_occupation(f, t_c)
    else:
        n_h, n_c = source.output_occupation(f, t_h), source.output_occupation(f, t_c)
    hw = HBAR * angular(f)
    y_h, y_c = np.asarray(p_h) / hw, np.asarray(p_c) / hw
    g = (y_h - y_c) / (n_h - n_c)
    tsys = (y_c / g - n_c) * hw / KB
    return g, tsys


def extract_substitution(chain_fit, A_s):
    """Unfold the source-path transmission ``A_s`` from a fit made at the source plane.

    The fit yields ``G~ = G_sys A_s`` and ``N~ = (1 - A_s)/(2 A_s) + k_B T_sys/(hbar w A_s)``
    (the latter reported as ``tsys = hbar w N~ / k_B``).
    """
    A_s = np.broadcast_to(np.asarray(A_s, dtype=float), chain_fit.freqs.shape)
    if np.any(~((A_s > 0) & (A_s <= 1))):
        raise DomainError("A_s must lie in (0, 1]")
    hw = HBAR * angular(chain_fit.freqs)
    n_fit = KB * chain_fit.tsys / hw
    gsys = chain_fit.gsys / A_s
    tsys = (A_s * n_fit - (1 - A_s) / 2) * hw / KB
    return ReadoutChainParams(chain_fit.freqs, gsys, tsys,
                              chain_fit.sigma_gsys / A_s, A_s * chain_fit.sigma_tsys,
                              chain_fit.cov_gt)


@dataclass(frozen=True)
class AddedNoiseResult:
    freqs: np.ndarray
    n_out: np.ndarray
    n_add: np.ndarray
    gain: np.ndarray
    sigma_n_add: np.ndarray
    quantum_limit: np.ndarray
    flagged: np.ndarray

    def to_dict(self):
        return {k: np.asarray(getattr(self, k)).tolist()
                for k in ("freqs", "n_out", "n_add", "gain", "sigma_n_add", "quantum_limit", "flagged")}

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: np.asarray(v) for k, v in d.items()})


def extract_added_noise(psd_dut, chain, G, n_in=0.5, sigma_psd=0.0, sigma_gain=0.0):
    """Input-referred added noise of a DUT from its calibrated output PSD.

    ``N_out = (psd / G_sys - k_B T_sys) / (hbar w)`` and
    ``N_add = N_out / G - N_in``.  The 1-sigma uncertainty is propagated
    linearly from the chain parameters (including their covariance when
    present) and optional PSD and DUT-gain uncertainties.
    """
    freqs = chain.freqs
    psd = np.broadcast_to(np.asarray(psd_dut, dtype=float), freqs.shape)
    G = np.broadcast_to(np.asarray(G, dtype=float), freqs.shape)
    if np.any(~(G > 0)):
        raise DomainError("DUT gain must be positive")
    n_in = np.broadcast_to(np.asarray(n_in, dtype=float), freqs.shape)
    hw = HBAR * angular(freqs)
    n_out = (psd / chain.gsys - KB * chain.tsys) / hw
    n_add = n_out / G - n_in
    d_g = -psd / (chain.gsys ** 2 * hw * G)
    d_t = -KB / (hw * G)
    d_p = 1 / (chain.gsys * hw * G)
    var = (d_g ** 2 * chain.sigma_gsys ** 2 + d_t ** 2 * chain.sigma_tsys ** 2
           + 2 * d_g * d_t * np.nan_to_num(chain.cov_gt)
           + d_p ** 2 * np.broadcast_to(np.asarray(sigma_psd, dtype=float), freqs.shape) ** 2
           + (n_out / G ** 2) ** 2 * np.broadcast_to(np.asarray(sigma_gain, dtype=float), freqs.shape) ** 2)
    flagged = n_out < 0
    if np.any(flagged):
        log.warning("negative N_out at %s Hz: readout chain likely miscalibrated", freqs[flagged].tolist())
    return AddedNoiseResult(freqs, n_out, n_add, G, np.sqrt(np.maximum(var, 0)),
                            np.asarray(quantum_limit(G), dtype=float).reshape(freqs.shape), flagged)


def band_average(freqs, values, f_lo, f_hi):
    """Plain arithmetic mean of ``values`` over ``f_lo <= f <= f_hi``."""
    freqs = np.asarray(freqs)
    sel = (freqs >= f_lo) & (freqs <= f_hi)
    if not np.any(sel):
        raise GridError("no frequencies inside the band")
    return float(np.mean(np.asarray(values)[sel]))


def results_table(fit, noise=None):
    """Rows keyed by :data:`RESULT_COLUMNS` (noise columns NaN when absent)."""
    rows = []
    for j, f in enumerate(fit.freqs):
        row = {
            "freq_hz": float(f),
            "gsys_linear": float(fit.gsys[j]),
            "gsys_db": float(10 * np.log10(fit.gsys[j])) if fit.gsys[j] > 0 else float("nan"),
            "tsys_K": float(fit.tsys[j]),
            "sigma_gsys": float(fit.sigma_gsys[j]),
            "sigma_tsys": float(fit.sigma_tsys[j]),
            "n_out": float("nan"), "n_add": float("nan"),
            "sigma_n_add": float("nan"), "quantum_limit": float("nan"),
        }
        if noise is not None:
            row.update(n_out=float(noise.n_out[j]), n_add=float(noise.n_add[j]),
                       sigma_n_add=float(noise.sigma_n_add[j]),
                       quantum_limit=float(noise.quantum_limit[j]))
        rows.append(row)
    return rows


def results_csv(rows):
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=RESULT_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: repr(r[k]) for k in RESULT_COLUMNS})
    return buf.getvalue()


def results_json(rows, **kw):
    return json.dumps({"columns": list(RESULT_COLUMNS), "rows": rows}, **kw)
