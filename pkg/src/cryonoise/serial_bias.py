"""Bias of an affine calibration fit when the noise source sits at a nonlinear DUT input.

In the serial topology the calibration noise passes through a parametric
amplifier, so the measured photon flux is

    N_meas(eps) = Gt * [ N_cal(eps) + N_0 + dN(eps) ]

where ``dN`` collects source noise scattered into the signal from spurious
intermodulation modes.  Fitting ``Gt * (N_cal + Nt)`` with constant ``Nt``
distorts both parameters.  This module synthesises such data, evaluates the
closed-form distortion and checks it against a plain OLS fit.
"""

import csv
import io
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .constants import HBAR, KB
from .errors import ConfigError, DomainError, UnderdeterminedError
from .physics import (angular, epsilon_from_temperature, planck_occupation, shot_occupation,
                      temperature_from_epsilon, voltage_from_epsilon)

# sidebands kept besides signal (0) and idler (-1): w_p+w_s, 2w_p-w_s, 2w_p+w_s,
# 3w_p+w_s, 4w_p-w_s, 4w_p+w_s, 5w_p-w_s
REFERENCE_SPURS = (1, -2, 2, 3, -4, 4, -5)

RESIDUAL_COLUMNS = ("epsilon", "T_K", "N_cal", "dN", "N_meas", "affine_fit", "residual")


@dataclass(frozen=True)
class ModeSpec:
    n: int
    frequency: float
    A_n: float = 1.0
    x2_fwd: float = 0.0
    x2_back: float = 0.0

    def __post_init__(self):
        if not self.frequency > 0:
            raise DomainError(f"mode {self.n}: frequency must be positive")
        if self.x2_fwd < 0 or self.x2_back < 0:
            raise DomainError(f"mode {self.n}: scattering weights must be >= 0")
        if not 0 < self.A_n <= 1:
            raise DomainError(f"mode {self.n}: A_n must lie in (0, 1]")


@dataclass(frozen=True)
class SerialBiasConfig:
    f_s: float
    f_p: float
    G: float
    A_s: float
    A_i: float
    modes: tuple
    gsys: float
    tsys: float
    epsilon_grid: tuple
    n_exc_loss: float = 0.0
    kind: str = "thermal"
    junction_T: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(self.modes))
        object.__setattr__(self, "epsilon_grid", tuple(float(e) for e in self.epsilon_grid))
        if self.kind not in ("thermal", "shot"):
            raise DomainError(f"unknown source kind {self.kind!r}")
        if not (0 < self.A_s <= 1 and 0 < self.A_i <= 1):
            raise DomainError("A_s and A_i must lie in (0, 1]")
        if not self.G > 0:
            raise DomainError("G must be positive")
        if len(set(self.epsilon_grid)) < 2:
            raise UnderdeterminedError("epsilon grid needs at least two distinct values")
        if self.kind == "thermal" and min(self.epsilon_grid) < 0:
            raise DomainError("thermal control parameter must be >= 0")
        if not any(m.n == -1 for m in self.modes):
            raise DomainError("idler mode (n = -1) missing")

    @property
    def f_i(self):
        return abs(self.f_s - self.f_p)

    @property
    def spurs(self):
        return tuple(m for m in self.modes if m.n not in (0, -1))

    @property
    def gain_tilde(self):
        return self.gsys * self.G * self.A_s

    @property
    def eps(self):
        return np.asarray(self.epsilon_grid)

    def temperatures(self):
        """Source temperatures (K) for a thermal grid; NaN for shot sources."""
        if self.kind != "thermal":
            return np.full(len(self.epsilon_grid), np.nan)
        return temperature_from_epsilon(self.eps, self.f_s)

    def replace(self, **kw):
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d.update(kw)
        return SerialBiasConfig(**d)

    def to_dict(self):
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["modes"] = [asdict(m) for m in self.modes]
        d["epsilon_grid"] = list(self.epsilon_grid)
        d["T_K"] = self.temperatures().tolist() if self.kind == "thermal" else None
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d.pop("T_K", None)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        d["modes"] = [ModeSpec(**m) for m in d["modes"]]
        return cls(**d)

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def n_source(cfg, f, eps):
    """Source occupation at frequency ``f`` for control parameter(s) ``eps``."""
    eps = np.asarray(eps, dtype=float)
    if cfg.kind == "thermal":
        return planck_occupation(f, temperature_from_epsilon(np.abs(eps), cfg.f_s))
    return shot_occupation(f, voltage_from_epsilon(eps, cfg.f_s), cfg.junction_T)


def n_cal(cfg, eps):
    """Modelled calibration flux: signal plus loss-weighted idler source noise."""
    return n_source(cfg, cfg.f_s, eps) + (cfg.A_i / cfg.A_s) * n_source(cfg, cfg.f_i, eps)


def delta_n(cfg, eps):
    """Source noise scattered into the signal from the spurious modes."""
    eps = np.asarray(eps, dtype=float)
    out = np.zeros(eps.shape)
    for m in cfg.spurs:
        out = out + m.A_n * m.x2_fwd / (cfg.A_s * cfg.G) * n_source(cfg, m.frequency, eps)
    return out if out.ndim else float(out)


def n_zero(cfg):
    """Source-independent part of the effective system noise."""
    ws = angular(cfg.f_s)
    back = 0.5 * sum(m.x2_back for m in cfg.modes)
    loss = sum(0.5 * (1 - m.A_n) * m.x2_fwd for m in cfg.spurs)
    return float(
        (2 - cfg.A_s - cfg.A_i) / (2 * cfg.A_s)
        + KB * cfg.tsys / (HBAR * ws * cfg.G * cfg.A_s)
        + cfg.n_exc_loss / cfg.A_s
        + (back + loss) / (cfg.G * cfg.A_s)
    )


def n_sys_tilde(cfg, eps):
    return n_zero(cfg) + delta_n(cfg, eps)


@dataclass(frozen=True)
class SerialDataset:
    eps: np.ndarray
    n_cal: np.ndarray
    n_meas: np.ndarray
    seed: int = None
    noise_rel: float = 0.0


def synth_measured(cfg, noise_rel=0.0, seed=None):
    """Synthetic serial-configuration data ``N_meas(eps)`` on the config's grid.

    ``noise_rel`` adds Gaussian noise with that relative standard deviation,
    drawn from a PCG64 generator seeded with ``seed``.
    """
    eps = cfg.eps
    nc = n_cal(cfg, eps)
    nm = cfg.gain_tilde * (nc + n_sys_tilde(cfg, eps))
    if noise_rel:
        rng = np.random.default_rng(seed)
        nm = nm * (1 + noise_rel * rng.standard_normal(nm.shape))
    return SerialDataset(eps, nc, nm, seed, noise_rel)


def oracle_ols(data):
    """Ordinary least squares of ``N_meas`` on ``N_cal`` (design matrix solve).

    Returns ``(slope, intercept, G_fit, N_fit)`` with ``G_fit = slope`` and
    ``N_fit = intercept / slope``.
    """
    x = np.asarray(data.n_cal, dtype=float)
    y = np.asarray(data.n_meas, dtype=float)
    xs = np.abs(x).max()
    ys = np.abs(y).max()
    X = np.column_stack([x / xs, np.ones_like(x)])
    (a, b), *_ = np.linalg.lstsq(X, y / ys, rcond=None)
    slope = a * ys / xs
    intercept = b * ys
    return slope, intercept, slope, intercept / slope


@dataclass
class SerialBiasReport:
    beta: float
    gain_true: float
    n_sys_true0: float
    n_zero: float
    gain_fit_analytic: float
    n_fit_analytic: float
    noise_error_analytic: float
    gain_fit_oracle: float = None
    n_fit_oracle: float = None
    alpha: float = None
    alpha_limit: float = None
    gamma: float = None
    beta_asym: float = None
    asymptotic_error: float = None
    asymptotic_error_exact_beta: float = None
    eps: list = field(default_factory=list)
    T_K: list = field(default_factory=list)
    n_cal: list = field(default_factory=list)
    delta_n: list = field(default_factory=list)
    n_meas: list = field(default_factory=list)
    seed: int = None

    def to_dict(self):
        return asdict(self)

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


def _moments(cfg):
    eps = cfg.eps
    nc = n_cal(cfg, eps)
    dn = np.asarray(delta_n(cfg, eps), dtype=float)
    var = np.mean((nc - nc.mean()) ** 2)
    if var == 0:
        raise UnderdeterminedError("N_cal does not vary over the epsilon grid")
    cov = np.mean((dn - dn.mean()) * (nc - nc.mean()))
    return nc, dn, cov / var


def analytic_bias(cfg):
    """Closed-form distortion of the affine fit (population moments over the grid)."""
    nc, dn, beta = _moments(cfg)
    n0 = n_zero(cfg)
    dn0 = delta_n(cfg, 0.0)
    gt = cfg.gain_tilde
    n_fit = (n0 + dn.mean() - beta * nc.mean()) / (1 + beta)
    err = ((dn.mean() - dn0) - beta * (nc.mean() + n0 + dn0)) / (1 + beta)
    return SerialBiasReport(
        beta=float(beta),
        gain_true=gt,
        n_sys_true0=n0 + dn0,
        n_zero=n0,
        gain_fit_analytic=float(gt * (1 + beta)),
        n_fit_analytic=float(n_fit),
        noise_error_analytic=float(err),
        eps=cfg.eps.tolist(),
        T_K=cfg.temperatures().tolist(),
        n_cal=nc.tolist(),
        delta_n=dn.tolist(),
    )


@dataclass(frozen=True)
class AsymptoticPrediction:
    alpha: float
    alpha_limit: float
    gamma: float
    beta_asym: float
    error: float
    error_exact_beta: float


def asymptotic_prediction(cfg, beta=None):
    """Large-``eps`` slopes of ``N_cal`` and ``dN`` and the resulting noise error.

    ``alpha`` uses ``1 + A_s w_s / (A_i w_i)``; ``alpha_limit`` is the slope
    of ``N_cal`` itself, ``1 + A_i w_s / (A_s w_i)``.  The two coincide when
    ``A_s == A_i``.
    """
    ws, wi = cfg.f_s, cfg.f_i
    alpha = 1 + cfg.A_s * ws / (cfg.A_i * wi)
    alpha_limit = 1 + cfg.A_i * ws / (cfg.A_s * wi)
    gamma = sum(m.A_n * m.x2_fwd * ws / (cfg.A_s * cfg.G * m.frequency) for m in cfg.spurs)
    b_asym = gamma / alpha
    n0 = n_zero(cfg)
    dn0 = delta_n(cfg, 0.0)
    err = -(dn0 + b_asym / (1 + b_asym) * n0)
    if beta is None:
        beta = _moments(cfg)[2]
    err_exact = -(dn0 + beta / (1 + beta) * n0)
    return AsymptoticPrediction(alpha, alpha_limit, gamma, b_asym, float(err), float(err_exact))


def run_bias(cfg, noise_rel=0.0, seed=None):
    """Synthesis, analytic estimators, OLS oracle and asymptotics in one report."""
    data = synth_measured(cfg, noise_rel, seed)
    rep = analytic_bias(cfg)
    _, _, g_fit, n_fit = oracle_ols(data)
    asym = asymptotic_prediction(cfg, rep.beta)
    rep.gain_fit_oracle = float(g_fit)
    rep.n_fit_oracle = float(n_fit)
    rep.alpha = asym.alpha
    rep.alpha_limit = asym.alpha_limit
    rep.gamma = asym.gamma
    rep.beta_asym = asym.beta_asym
    rep.asymptotic_error = asym.error
    rep.asymptotic_error_exact_beta = asym.error_exact_beta
    rep.n_meas = data.n_meas.tolist()
    rep.seed = seed
    return rep, data


def residuals(data):
    slope, intercept, _, _ = oracle_ols(data)
    fit = slope * np.asarray(data.n_cal) + intercept
    return fit, np.asarray(data.n_meas) - fit


def sign_changes(values):
    s = np.sign(values)
    s = s[s != 0]
    return int(np.count_nonzero(s[1:] != s[:-1]))


def residual_csv(cfg, data):
    """Rows of the calibration points with the affine fit and its residuals, sorted by eps."""
    fit, res = residuals(data)
    dn = np.atleast_1d(delta_n(cfg, data.eps))
    T = cfg.temperatures()
    order = np.argsort(data.eps)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESIDUAL_COLUMNS)
    for k in order:
        w.writerow([repr(float(v)) for v in
                    (data.eps[k], T[k], data.n_cal[k], dn[k], data.n_meas[k], fit[k], res[k])])
    return buf.getvalue()


def scattering_weight(G, n):
    """Down-scaled forward weight |x_(n->s)|^2 used for synthetic data."""
    if n >= 0:
        return G ** (1 / (n + 1))
    return (G - 1) ** (1 / abs(n))


def build_reference_config(G_db=20.0, f_s=4e9, f_p=8e9, A_table=None, temps=None,
                       gsys_db=70.9, tsys=4.65, spurs=REFERENCE_SPURS, back_ratio=100.0,
                       n_exc_loss=0.0, epsilon_grid=None):
    """Reference serial-configuration scenario.

    ``A_table`` maps mode index ``n`` (or a callable of frequency in Hz) to
    the linear path transmission; missing entries default to 1.  The
    epsilon grid defaults to 10 source temperatures uniformly in
    [20 mK, 2 K].
    """
    G = 10 ** (G_db / 10)
    if not G > 1:
        raise DomainError("parametric gain must exceed 1")

    def A_of(n, f):
        if A_table is None:
            return 1.0
        if callable(A_table):
            return float(A_table(f))
        return float(A_table.get(n, A_table.get(str(n), 1.0)))

    modes = []
    for n in (0, -1) + tuple(spurs):
        f = abs(f_s + n * f_p)
        x2 = scattering_weight(G, n)
        modes.append(ModeSpec(n, f, A_of(n, f), x2, x2 / back_ratio))
    if epsilon_grid is None:
        temps = np.linspace(0.02, 2.0, 10) if temps is None else np.asarray(temps, dtype=float)
        epsilon_grid = epsilon_from_temperature(temps, f_s)
    return SerialBiasConfig(
        f_s=f_s, f_p=f_p, G=G,
        A_s=modes[0].A_n, A_i=modes[1].A_n,
        modes=modes,
        gsys=10 ** (gsys_db / 10), tsys=tsys,
        epsilon_grid=np.atleast_1d(epsilon_grid).tolist(),
        n_exc_loss=n_exc_loss,
    )
