"""Instrument interfaces and a simulated cryostat that backs them.

The protocol runner only talks to the four instrument objects of an
:class:`InstrumentSuite`.  :class:`VirtualCryostat` holds the hidden truth
(DUT, readout chain, noise source, error boxes) and produces measurements
with seeded noise on a virtual clock, so runs are bit-reproducible.
"""

import json
import threading
from dataclasses import asdict, dataclass, field

import numpy as np

from .constants import HBAR, KB
from .errors import ConfigError, CryoNoiseError, DomainError
from .physics import angular, emitted_occupation, planck_occupation
from .sparams import TwoPortSParams, random_passive
from .solr import ErrorBoxes

THROWS = ("DUT", "VTS", "short", "open", "load", "thru")


class InstrumentTimeout(CryoNoiseError):
    pass


class RunLog:
    """Append-only event log; safe to read from another thread while a run writes."""

    def __init__(self):
        self._events = []
        self._lock = threading.Lock()
        self.step = 0

    def record(self, t, instrument, call, **params):
        with self._lock:
            ev = {"seq": len(self._events), "t": t, "step": self.step,
                  "instrument": instrument, "call": call, "params": params}
            self._events.append(ev)
        return ev

    def snapshot(self):
        with self._lock:
            return [dict(e) for e in self._events]

    def __len__(self):
        with self._lock:
            return len(self._events)

    def to_jsonl(self):
        return "".join(json.dumps(e) + "\n" for e in self.snapshot())


@dataclass
class DUTModel:
    """Amplifier truth: flat gain, added noise, port matches and a delay.

    ``n_add`` may be a float or a callable of frequency (Hz).
    """

    gain_db: float = 20.0
    n_add: object = 1.0
    s11: complex = 0.0
    s22: complex = 0.0
    s12: complex = 0.0
    delay_s: float = 0.5e-9

    def sparams(self, freqs):
        g = 10 ** (self.gain_db / 20) * np.exp(-2j * np.pi * freqs * self.delay_s)
        return TwoPortSParams.from_entries(freqs, self.s11, self.s12, g, self.s22)

    def added_noise(self, freqs):
        if callable(self.n_add):
            return np.asarray(self.n_add(freqs), dtype=float)
        return np.full(freqs.shape, float(self.n_add))

    def output_occupation(self, freqs, n_in):
        return 10 ** (self.gain_db / 10) * (n_in + self.added_noise(freqs))


@dataclass
class VTSModel:
    """Attenuator on a heated stage, emitting from port 2."""

    att_db: float = 20.0
    s11: complex = 0.0
    s22: complex = 0.0
    T_rest: float = 0.12
    tau_s: float = 60.0

    def sparams(self, freqs):
        t = 10 ** (-self.att_db / 20)
        return TwoPortSParams.from_entries(freqs, self.s11, t, t, self.s22)


@dataclass
class ChainModel:
    gsys_db: float = 70.9
    tsys: float = 4.65
    gsys_slope_db_per_ghz: float = 0.0
    tsys_slope_per_ghz: float = 0.0
    f_ref: float = 4e9

    def gsys(self, freqs):
        return 10 ** ((self.gsys_db + self.gsys_slope_db_per_ghz * (freqs - self.f_ref) / 1e9) / 10)

    def tsys_at(self, freqs):
        return self.tsys + self.tsys_slope_per_ghz * (freqs - self.f_ref) / 1e9


@dataclass
class CryostatConfig:
    dut: DUTModel = field(default_factory=DUTModel)
    vts: VTSModel = field(default_factory=VTSModel)
    chain: ChainModel = field(default_factory=ChainModel)
    n_in: float = 0.5
    standards: tuple = (-1.0, 1.0, 0.0)
    box_delay_s: tuple = (2e-9, 3e-9)
    s_noise: float = 1e-4
    psd_noise_rel: float = 0.0
    seed: int = 0

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        parts = {"dut": DUTModel, "vts": VTSModel, "chain": ChainModel}
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown cryostat keys: {sorted(unknown)}")
        for key, kind in parts.items():
            if key in d:
                sub = dict(d[key])
                bad = set(sub) - set(kind.__dataclass_fields__)
                if bad:
                    raise ConfigError(f"unknown {key} keys: {sorted(bad)}")
                for k, v in sub.items():
                    if isinstance(v, list) and len(v) == 2:
                        sub[k] = complex(*v)
                d[key] = kind(**sub)
        if "standards" in d:
            d["standards"] = tuple(complex(*v) if isinstance(v, list) else v for v in d["standards"])
        if isinstance(d.get("n_in"), list):
            d["n_in"] = np.asarray(d["n_in"], dtype=float)
        if "box_delay_s" in d:
            d["box_delay_s"] = tuple(d["box_delay_s"])
        return cls(**d)

    def to_dict(self):
        def enc(v):
            if isinstance(v, complex):
                return [v.real, v.imag]
            if callable(v):
                return getattr(v, "__name__", "callable")
            return v

        d = asdict(self)
        for key in ("dut", "vts", "chain"):
            d[key] = {k: enc(v) for k, v in d[key].items()}
        d["standards"] = [enc(complex(v)) for v in self.standards]
        d["box_delay_s"] = list(self.box_delay_s)
        if isinstance(self.n_in, np.ndarray):
            d["n_in"] = self.n_in.tolist()
        return d


class VirtualCryostat:
    """Simulation backend; the truth lives here and is only exposed through instruments."""

    def __init__(self, config=None, log=None):
        self.config = config or CryostatConfig()
        self.log = log if log is not None else RunLog()
        self.t = 0.0
        self.throw = "DUT"
        self.T_vts = self.config.vts.T_rest
        self.T_set = self.config.vts.T_rest
        ss = np.random.SeedSequence(self.config.seed)
        hw_ss, vna_ss, sa_ss = ss.spawn(3)
        self._rng_vna = np.random.default_rng(vna_ss)
        self._rng_sa = np.random.default_rng(sa_ss)
        hw = np.random.default_rng(hw_ss)
        self._box1 = random_passive(hw, 1, max_sv=0.9, min_transmission=0.3)[0]
        self._box2 = random_passive(hw, 1, max_sv=0.9, min_transmission=0.3)[0]

    # hidden truth ---------------------------------------------------------
    def error_boxes(self, freqs):
        d1, d2 = self.config.box_delay_s
        ph1 = np.exp(-2j * np.pi * freqs * d1)
        ph2 = np.exp(-2j * np.pi * freqs * d2)
        b1 = np.broadcast_to(self._box1, (freqs.size, 2, 2)).copy()
        b2 = np.broadcast_to(self._box2, (freqs.size, 2, 2)).copy()
        b1[:, 0, 1] *= ph1
        b1[:, 1, 0] *= ph1
        b2[:, 0, 1] *= ph2
        b2[:, 1, 0] *= ph2
        return ErrorBoxes.from_boxes(freqs, b1, b2)

    def _true_sparams(self, freqs):
        c = self.config
        if self.throw == "DUT":
            return c.dut.sparams(freqs)
        if self.throw == "VTS":
            return c.vts.sparams(freqs)
        if self.throw == "thru":
            return TwoPortSParams.from_entries(freqs, 0, 1, 1, 0)
        return None

    def _advance(self, dt):
        tau = self.config.vts.tau_s
        self.T_vts = self.T_set + (self.T_vts - self.T_set) * np.exp(-dt / tau)
        self.t += dt

    # instrument back-ends -------------------------------------------------
    def vna_measure(self, freqs):
        eb = self.error_boxes(freqs)
        sp = self._true_sparams(freqs)
        if sp is None:
            g = dict(zip(("short", "open", "load"), self.config.standards))[self.throw]
            s = np.zeros((freqs.size, 2, 2), dtype=complex)
            s[:, 0, 0] = eb.port1().measure(g)
            s[:, 1, 1] = eb.port2().measure(g)
        else:
            s = eb.embed(sp).s.copy()
        sig = self.config.s_noise
        if sig:
            s = s + sig / np.sqrt(2) * (self._rng_vna.standard_normal(s.shape)
                                        + 1j * self._rng_vna.standard_normal(s.shape))
        self._advance(1.0)
        return TwoPortSParams(freqs, s)

    def output_occupation(self, freqs):
        c = self.config
        if self.throw == "DUT":
            return c.dut.output_occupation(freqs, c.n_in)
        if self.throw == "VTS":
            s = c.vts.sparams(freqs).s
            return emitted_occupation(np.abs(s[:, 1, 1]) ** 2, np.abs(s[:, 1, 0]) ** 2,
                                      planck_occupation(freqs, self.T_vts))
        raise CryoNoiseError(f"no noise path to the readout chain on throw {self.throw!r}")

    def sa_measure(self, freqs, rbw, averages):
        c = self.config
        n = self.output_occupation(freqs)
        psd = c.chain.gsys(freqs) * (HBAR * angular(freqs) * n + KB * c.chain.tsys_at(freqs))
        noise = self._rng_sa.standard_normal(freqs.shape)
        if c.psd_noise_rel:
            psd = psd * (1 + c.psd_noise_rel / np.sqrt(averages) * noise)
        self._advance(averages / rbw)
        return psd

    def suite(self):
        return InstrumentSuite(SwitchController(self), TemperatureController(self),
                               VectorAnalyzer(self), SpectrumAnalyzer(self), self.log)


class _Instrument:
    name = "instrument"

    def __init__(self, cryo):
        self._cryo = cryo

    def _log(self, call, **params):
        self._cryo.log.record(self._cryo.t, self.name, call, **params)


class SwitchController(_Instrument):
    name = "switch"

    def select(self, throw):
        if throw not in THROWS:
            raise DomainError(f"unknown switch throw {throw!r}")
        self._log("select", throw=throw)
        self._cryo.throw = throw
        self._cryo._advance(0.5)


class TemperatureController(_Instrument):
    name = "temperature"

    def set(self, T):
        if T < 0:
            raise DomainError("setpoint must be >= 0 K")
        self._log("set", T=float(T))
        self._cryo.T_set = float(T)

    def read(self):
        self._log("read")
        return float(self._cryo.T_vts)

    def wait_stable(self, tol=1e-3, timeout=3600.0):
        """Advance until the stage is within ``tol`` of the setpoint."""
        self._log("wait_stable", tol=tol, timeout=timeout)
        c = self._cryo
        dt = c.config.vts.tau_s / 20
        waited = 0.0
        while abs(c.T_vts - c.T_set) > tol:
            if waited >= timeout:
                raise InstrumentTimeout(f"VTS not stable within {timeout} s (T={c.T_vts:.4f} K)")
            c._advance(dt)
            waited += dt
        return waited


class VectorAnalyzer(_Instrument):
    name = "vna"

    def measure(self, freqs):
        freqs = np.asarray(freqs, dtype=float)
        self._log("measure", n_points=int(freqs.size))
        return self._cryo.vna_measure(freqs)


class SpectrumAnalyzer(_Instrument):
    name = "sa"

    def measure(self, freqs, rbw=20e3, averages=1000):
        freqs = np.asarray(freqs, dtype=float)
        self._log("measure", n_points=int(freqs.size), rbw=rbw, averages=averages)
        return self._cryo.sa_measure(freqs, rbw, averages)


@dataclass
class InstrumentSuite:
    switch: SwitchController
    temperature: TemperatureController
    vna: VectorAnalyzer
    sa: SpectrumAnalyzer
    log: RunLog
