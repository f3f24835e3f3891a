"""Substitution-topology calibration protocol and report replay.

Steps (step 1, mounting DUT/VTS/standards between the switches, is the
construction of the instrument suite):

2. SOLR calibration on the switch standards
3. DUT scattering parameters
4. DUT noise PSD at the operating point (stored only)
5. VTS scattering parameters and matching check
6. VTS temperature sweep and Planck fit of the readout chain
7. DUT output PSD, converted to photon flux
8. added noise from the calibrated spectrum and the SOLR-corrected gain

Derived quantities are always recomputed from the JSON-native raw record,
so :func:`replay` reproduces a report bit for bit.
"""

import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, DomainError, QualificationError, ReplayError
from .physics import port_powers, source_qualification
from .planck import PlanckFitResult, PlanckSweep, extract_added_noise, fit_planck
from .serial_bias import SerialBiasConfig, delta_n, n_zero, oracle_ols, synth_measured
from .solr import calibrate, deembed
from .sparams import NoiseSourceModel, TwoPortSParams
from .thermal_chain import ChainSpec, input_occupation
from .touchstone import parse_touchstone, write_touchstone

REPORT_FORMAT = "cryonoise-report/1"


@dataclass
class Plan:
    freqs: list = field(default_factory=lambda: np.linspace(3.6e9, 5.5e9, 20).tolist())
    temperatures: list = field(default_factory=lambda: np.linspace(0.15, 2.0, 10).tolist())
    rbw: float = 20e3
    averages: int = 1000
    repeats: int = 4
    vna_repeats: int = 4
    n_in: float = 0.5
    input_chain: dict = None
    thru_delay_s: float = 0.0
    threshold: float = 0.1
    settle_tol: float = 1e-3
    settle_timeout: float = 3600.0

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown plan keys: {sorted(unknown)}")
        plan = cls(**d)
        plan.validate()
        return plan

    def to_dict(self):
        return asdict(self)

    def validate(self):
        f = np.asarray(self.freqs, dtype=float)
        if f.size == 0 or np.any(f <= 0) or np.any(np.diff(f) <= 0):
            raise DomainError("plan frequencies must be positive and strictly ascending")
        if len(set(self.temperatures)) < 2:
            raise DomainError("temperature schedule needs at least two distinct values")
        if self.repeats < 1 or self.averages < 1 or self.vna_repeats < 1:
            raise DomainError("repeats and averages must be >= 1")


def _ts(net):
    return write_touchstone(net, fmt="RI", unit="HZ")


def _hash(obj):
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()


def _n_in(raw):
    return np.asarray(raw["n_in"], dtype=float)


# derivations from raw data ------------------------------------------------

def _mean_net(texts):
    nets = [parse_touchstone(t) for t in texts]
    return TwoPortSParams(nets[0].freqs, sum(n.s for n in nets) / len(nets), z0=nets[0].z0)


def _calibrate(raw, pick):
    freqs = np.asarray(raw["freqs"], dtype=float)
    nets = {k: pick(raw["solr"][k]) for k in ("short", "open", "load", "thru")}
    phase = np.asarray(raw["thru_phase_estimate"], dtype=float)
    return calibrate(freqs, nets["short"], nets["open"], nets["load"], nets["thru"],
                     phase_estimate=phase)


def derive_solr(raw):
    """Error boxes from the repeat-averaged standard measurements."""
    return _calibrate(raw, _mean_net)


def derive_dut(raw, eb):
    return deembed(_mean_net(raw["dut_sparams_raw"]), eb)


def derive_gain_sigma(raw, gain):
    """Standard error of the corrected DUT power gain from the VNA repeats.

    Each repeat is calibrated on its own; the relative scatter of the
    resulting gains is pooled over the grid (frequency-flat VNA noise).
    """
    n = len(raw["dut_sparams_raw"])
    if n < 2:
        return np.zeros_like(gain)
    gains = []
    for k in range(n):
        eb = _calibrate(raw, lambda texts: parse_touchstone(texts[k]))
        gains.append(np.abs(deembed(parse_touchstone(raw["dut_sparams_raw"][k]), eb).s21) ** 2)
    gains = np.array(gains)
    rel = gains / gains.mean(axis=0) - 1
    sigma_rel = np.sqrt(np.sum(rel ** 2) / (rel.size - rel.shape[1]))
    return gain * sigma_rel / np.sqrt(n)


def derive_vts(raw, eb):
    vts = deembed(parse_touchstone(raw["vts_sparams_raw"]), eb)
    return vts, source_qualification(vts, emitting_port=2, threshold=raw["threshold"])


def derive_fit(raw, vts):
    sw = raw["sweep"]
    sweep = PlanckSweep(raw["freqs"], sw["temps"], sw["psd"],
                        source=NoiseSourceModel(vts, emitting_port=2))
    return fit_planck(sweep)


def derive_noise(raw, fit, dut):
    reps = np.asarray(raw["psd_step7"], dtype=float)
    psd = reps.mean(axis=0)
    if reps.shape[0] > 1:
        # relative scatter pooled over the grid; assumes a frequency-flat relative noise
        rel = reps / psd[None, :] - 1
        sigma_rel = np.sqrt(np.sum(rel ** 2) / (rel.size - rel.shape[1]))
        sigma_psd = psd * sigma_rel / np.sqrt(reps.shape[0])
    else:
        sigma_psd = 0.0
    G = np.abs(dut.s21) ** 2
    return extract_added_noise(psd, fit.chain(), G, _n_in(raw), sigma_psd=sigma_psd,
                               sigma_gain=derive_gain_sigma(raw, G))


def derive_all(raw):
    eb = derive_solr(raw)
    dut = derive_dut(raw, eb)
    vts, qual = derive_vts(raw, eb)
    out = {
        "error_boxes": eb.to_dict(),
        "dut_sparams": _ts(dut),
        "vts_sparams": _ts(vts),
        "vts_qualified": qual.tolist(),
    }
    if "sweep" not in raw:
        return out
    fit = derive_fit(raw, vts)
    out["planck_fit"] = fit.to_dict()
    if "psd_step7" in raw:
        out["added_noise"] = derive_noise(raw, fit, dut).to_dict()
    return out


def _qualification_message(vts, qual, threshold):
    s_pp2, s_pq2 = port_powers(vts.s, 2)
    bad = np.flatnonzero(~qual)
    k = bad[0]
    return (f"VTS fails |S21|^2 <= {threshold} * (1 - |S22|^2) on the readout port at "
            f"{vts.freqs[bad].tolist()} Hz (first: |S21|^2={s_pq2[k]:.4g}, "
            f"1-|S22|^2={1 - s_pp2[k]:.4g}); readout chain cannot be calibrated with this source")


class CalibrationReport(dict):
    """JSON-able mapping: ``raw``, ``raw_sha256``, ``derived``, ``provenance``."""

    def to_json(self, **kw):
        return json.dumps(self, sort_keys=True, **kw)

    @classmethod
    def from_json(cls, text):
        return cls(json.loads(text))

    @property
    def added_noise(self):
        from .planck import AddedNoiseResult

        return AddedNoiseResult.from_dict(self["derived"]["added_noise"])

    @property
    def planck_fit(self):
        return PlanckFitResult.from_dict(self["derived"]["planck_fit"])


def run_protocol(suite, plan, config_hash=None, seed=None):
    """Execute steps 2-8 against ``suite`` and return a :class:`CalibrationReport`.

    Raises :class:`QualificationError` at step 5 when the source is not
    usable on the readout port; the partial report is attached to the
    exception as ``.report``.
    """
    plan.validate()
    freqs = np.asarray(plan.freqs, dtype=float)
    log = suite.log
    clock = suite.switch._cryo
    timings = {}

    def step(k):
        log.step = k
        timings.setdefault(str(k), {})["start"] = clock.t

    def done(k):
        timings[str(k)]["end"] = clock.t

    if plan.input_chain is not None:
        n_in = np.atleast_1d(input_occupation(ChainSpec.from_dict(plan.input_chain), freqs))
    else:
        n_in = np.full(freqs.shape, float(plan.n_in))
    raw = {
        "freqs": freqs.tolist(),
        "n_in": n_in.tolist(),
        "threshold": plan.threshold,
        "thru_phase_estimate": (-2 * np.pi * freqs * plan.thru_delay_s).tolist(),
        "solr": {},
    }
    report = CalibrationReport(format=REPORT_FORMAT, raw=raw, derived={},
                               provenance={"seed": seed, "config_hash": config_hash,
                                           "plan": plan.to_dict(), "step_times": timings})

    step(2)
    for std in ("short", "open", "load", "thru"):
        suite.switch.select(std)
        raw["solr"][std] = [_ts(suite.vna.measure(freqs)) for _ in range(plan.vna_repeats)]
    eb = derive_solr(raw)
    done(2)

    step(3)
    suite.switch.select("DUT")
    raw["dut_sparams_raw"] = [_ts(suite.vna.measure(freqs)) for _ in range(plan.vna_repeats)]
    dut = derive_dut(raw, eb)
    done(3)

    step(4)
    raw["psd_step4"] = suite.sa.measure(freqs, plan.rbw, plan.averages).tolist()
    done(4)

    step(5)
    suite.switch.select("VTS")
    raw["vts_sparams_raw"] = _ts(suite.vna.measure(freqs))
    vts, qual = derive_vts(raw, eb)
    done(5)
    if not np.all(qual):
        _finish(report)
        err = QualificationError("step 5: " + _qualification_message(vts, qual, plan.threshold))
        err.report = report
        raise err

    step(6)
    temps, psd = [], []
    for T in plan.temperatures:
        suite.temperature.set(T)
        suite.temperature.wait_stable(plan.settle_tol, plan.settle_timeout)
        temps.append(suite.temperature.read())
        psd.append(suite.sa.measure(freqs, plan.rbw, plan.averages).tolist())
    raw["sweep"] = {"temps": temps, "psd": psd}
    fit = derive_fit(raw, vts)
    done(6)

    step(7)
    suite.switch.select("DUT")
    raw["psd_step7"] = [suite.sa.measure(freqs, plan.rbw, plan.averages).tolist()
                        for _ in range(plan.repeats)]
    done(7)

    step(8)
    derive_noise(raw, fit, dut)
    done(8)
    _finish(report)
    return report


def _finish(report):
    report["raw_sha256"] = _hash(report["raw"])
    report["derived"] = derive_all(report["raw"])


def replay(report):
    """Recompute every derived quantity from the stored raw data.

    Raises :class:`ReplayError` when the report is empty, the raw record
    fails its checksum, or the re-derived results differ from the stored
    ones.
    """
    if not report or "raw" not in report or not report["raw"]:
        raise ReplayError("empty report: nothing to replay")
    raw = report["raw"]
    if _hash(raw) != report.get("raw_sha256"):
        raise ReplayError("raw data checksum mismatch (report was modified)")
    derived = derive_all(raw)
    a = json.dumps(derived, sort_keys=True)
    b = json.dumps(report.get("derived"), sort_keys=True)
    if a != b:
        raise ReplayError("re-derived results differ from the stored results")
    return derived


def simulate(cryo_config, plan, log=None):
    """Build a :class:`VirtualCryostat` and run the protocol on it."""
    from .instruments import VirtualCryostat

    cryo = VirtualCryostat(cryo_config, log=log)
    h = _hash({"cryostat": cryo_config.to_dict(), "plan": plan.to_dict()})
    return run_protocol(cryo.suite(), plan, config_hash=h, seed=cryo_config.seed), cryo


def serial_variant(cryo_config, plan, modes=None, f_p=8e9, f_index=0):
    """Affine-model analysis of the same hardware in the serial topology.

    The VTS is placed at the DUT input, so calibration noise crosses the
    DUT and its spurious modes (``modes``: list of :class:`ModeSpec`).
    Returns ``(fitted_noise, true_noise_at_zero, error)`` in photons
    referred to the source plane.
    """
    from .physics import epsilon_from_temperature

    c = cryo_config
    f_s = float(np.asarray(plan.freqs)[f_index])
    G = 10 ** (c.dut.gain_db / 10)
    if modes is None:
        from .serial_bias import build_reference_config

        modes = build_reference_config(c.dut.gain_db, f_s=f_s, f_p=f_p).modes
    cfg = SerialBiasConfig(
        f_s=f_s, f_p=f_p, G=G, A_s=1.0, A_i=1.0, modes=modes,
        gsys=float(c.chain.gsys(np.array([f_s]))[0]), tsys=float(c.chain.tsys_at(np.array([f_s]))[0]),
        epsilon_grid=epsilon_from_temperature(np.asarray(plan.temperatures), f_s).tolist(),
    )
    data = synth_measured(cfg)
    _, _, _, n_fit = oracle_ols(data)
    truth = n_zero(cfg) + delta_n(cfg, 0.0)
    return n_fit, truth, n_fit - truth
