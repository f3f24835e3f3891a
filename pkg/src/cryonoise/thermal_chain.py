"""Thermal occupation along attenuated cryogenic input lines and the readout-chain model."""

import csv
import io
import json
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigError, DomainError, GridError
from .physics import planck_occupation, psd_from_occupation

CSV_COLUMNS = ("stage", "T_K", "A_lump_dB", "length_m", "alpha_dB_per_m", "A_tot_dB", "N_photons")


@dataclass(frozen=True)
class ThermalStage:
    name: str
    T: float
    A_lump_db: float = 0.0
    length_m: float = 0.0
    alpha_db_per_m: float = 0.0

    def __post_init__(self):
        if not self.T >= 0:
            raise DomainError(f"stage {self.name!r}: temperature must be >= 0")
        if self.A_lump_db < 0 or self.length_m < 0 or self.alpha_db_per_m < 0:
            raise DomainError(f"stage {self.name!r}: attenuations and lengths must be >= 0")

    @property
    def A_tot_db(self):
        return self.A_lump_db + self.alpha_db_per_m * self.length_m

    @property
    def transmission(self):
        """Linear power transmission 10**(-A_tot/10)."""
        return 10 ** (-self.A_tot_db / 10)


@dataclass(frozen=True)
class ChainSpec:
    """Stages ordered from room temperature inward; ``T0`` is the source temperature."""

    stages: tuple
    T0: float = 295.0

    def __post_init__(self):
        object.__setattr__(self, "stages", tuple(self.stages))
        if not self.T0 >= 0:
            raise DomainError("source temperature must be >= 0")

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - {"T0", "stages"}
        if unknown:
            raise ConfigError(f"unknown chain keys: {sorted(unknown)}")
        stages = []
        for s in d["stages"]:
            extra = set(s) - {"name", "T", "A_lump_db", "length_m", "alpha_db_per_m"}
            if extra:
                raise ConfigError(f"unknown stage keys: {sorted(extra)}")
            stages.append(ThermalStage(**s))
        return cls(stages, d.get("T0", 295.0))

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def to_dict(self):
        return {"T0": self.T0, "stages": [asdict(s) for s in self.stages]}

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


# Input-line attenuation of the reference dilution refrigerator.
# Cold-finger cable loss unknown; taken as zero.
TABLE1 = ChainSpec(
    stages=(
        ThermalStage("RT", 295.0, 15, 5, 0.85),
        ThermalStage("50 K", 50.0, 0, 0.25, 18.98),
        ThermalStage("3 K", 2.55, 10, 0.15, 18.98),
        ThermalStage("Still", 0.82, 10, 0.10, 18.98),
        ThermalStage("CP", 0.13, 10, 0.10, 18.98),
        ThermalStage("MXC", 0.02, 0, 0.15, 18.98),
        ThermalStage("Cold Finger", 0.07, 10, 0, 0),
    ),
    T0=295.0,
)


def cascade_occupation(spec, f):
    """Occupation after each stage: ``N_i = A_i N_(i-1) + (1 - A_i) N_therm(T_i)``.

    Starts from ``planck_occupation(f, T0)``; returns one value per stage
    (an array of shape ``(n_stages,) + shape(f)``).
    """
    n = np.asarray(planck_occupation(f, spec.T0), dtype=float)
    out = []
    for st in spec.stages:
        a = st.transmission
        n = a * n + (1 - a) * np.asarray(planck_occupation(f, st.T))
        out.append(n)
    return np.array(out)


def input_occupation(spec, f):
    """Occupation delivered by the last stage (the DUT input)."""
    if not spec.stages:
        return planck_occupation(f, spec.T0)
    return cascade_occupation(spec, f)[-1]


def stage_table_report(spec, f):
    """CSV with one row per stage at frequency ``f``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    if spec.stages:
        ns = cascade_occupation(spec, float(f))
        for st, n in zip(spec.stages, ns):
            w.writerow([st.name, f"{st.T:g}", f"{st.A_lump_db:g}", f"{st.length_m:g}",
                        f"{st.alpha_db_per_m:g}", f"{st.A_tot_db:.2f}", f"{float(n):.2f}"])
    return buf.getvalue()


@dataclass(frozen=True)
class ReadoutChainParams:
    """Gain and noise temperature of the readout chain on a frequency grid.

    ``cov_gt`` is the optional covariance between ``gsys`` and ``tsys``
    (as delivered by a Planck fit); zero means independent errors.
    """

    freqs: np.ndarray
    gsys: np.ndarray
    tsys: np.ndarray
    sigma_gsys: np.ndarray = None
    sigma_tsys: np.ndarray = None
    cov_gt: np.ndarray = None

    def __post_init__(self):
        freqs = np.atleast_1d(np.asarray(self.freqs, dtype=float))
        if np.any(np.diff(freqs) <= 0):
            raise GridError("readout-chain grid must be strictly ascending")
        object.__setattr__(self, "freqs", freqs)
        for name in ("gsys", "tsys", "sigma_gsys", "sigma_tsys", "cov_gt"):
            v = getattr(self, name)
            v = np.zeros(freqs.shape) if v is None else np.broadcast_to(np.asarray(v, dtype=float), freqs.shape).copy()
            object.__setattr__(self, name, v)
        if np.any(~(self.gsys > 0)):
            raise DomainError("G_sys must be positive")

    @classmethod
    def from_db(cls, freqs, gsys_db, tsys, **kw):
        return cls(freqs, 10 ** (np.asarray(gsys_db, dtype=float) / 10), tsys, **kw)

    def index(self, f):
        f = np.atleast_1d(np.asarray(f, dtype=float))
        idx = np.searchsorted(self.freqs, f)
        idx = np.clip(idx, 0, self.freqs.size - 1)
        if not np.allclose(self.freqs[idx], f, rtol=1e-12, atol=0):
            raise GridError("frequency not on the readout-chain grid")
        return idx


def chain_forward_psd(chain, n_at_plane, f=None):
    """PSD at room temperature for occupation ``n_at_plane`` at the chain input plane."""
    if f is None:
        return psd_from_occupation(n_at_plane, chain.freqs, chain.gsys, chain.tsys)
    idx = chain.index(f)
    g, t = chain.gsys[idx], chain.tsys[idx]
    out = psd_from_occupation(n_at_plane, np.atleast_1d(np.asarray(f, dtype=float)), g, t)
    return float(out[0]) if np.ndim(f) == 0 else out
