"""Regenerate the bundled fixtures under src/cryonoise/data/v1.

Run from the repository root: ``python3 tools/make_fixtures.py``.
Every file is a pure function of the code and the seeds below.
"""

import json
from pathlib import Path

import numpy as np

from cryonoise.instruments import CryostatConfig, VTSModel
from cryonoise.physics import psd_from_occupation
from cryonoise.planck import PlanckSweep
from cryonoise.serial_bias import build_reference_config
from cryonoise.solr import ErrorBoxes
from cryonoise.sparams import TwoPortSParams, line_model, random_passive
from cryonoise.thermal_chain import TABLE1, stage_table_report
from cryonoise.touchstone import write_touchstone
from cryonoise.workflow import Plan

OUT = Path(__file__).resolve().parents[1] / "src" / "cryonoise" / "data" / "v1"


def dump(path, obj):
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def solr_set(name, eb, dut, thru_delay, note):
    d = OUT / name
    d.mkdir(parents=True, exist_ok=True)
    freqs = eb.freqs
    raw = {}
    for std, g in (("short", -1.0), ("open", 1.0), ("load", 0.0)):
        s = np.zeros((freqs.size, 2, 2), dtype=complex)
        s[:, 0, 0] = eb.port1().measure(g)
        s[:, 1, 1] = eb.port2().measure(g)
        raw[std] = TwoPortSParams(freqs, s)
    raw["thru"] = eb.embed(line_model(freqs, thru_delay))
    raw["dut"] = eb.embed(dut)
    for k, net in raw.items():
        (d / f"{k}.s2p").write_text(write_touchstone(net, fmt="RI", unit="HZ", comment=f"raw {k}"))
    (d / "dut_true.s2p").write_text(write_touchstone(dut, fmt="RI", unit="HZ", comment="true DUT"))
    (d / "error_boxes_true.json").write_text(eb.to_json(indent=1) + "\n")
    dump(d / "fixture.json", {"thru_delay_s": thru_delay, "note": note})


def main():
    OUT.mkdir(parents=True, exist_ok=True)

    dump(OUT / "table1_chain.json", TABLE1.to_dict())
    (OUT / "table1_expected_5GHz.csv").write_text(stage_table_report(TABLE1, 5e9))

    dump(OUT / "reference_bias_config.json", build_reference_config().to_dict())

    # noiseless Planck sweep from known chain parameters
    freqs = np.linspace(4e9, 8e9, 9)
    temps = np.linspace(0.02, 2.0, 12)
    gsys = 10 ** (70.9 / 10) * (1 + 0.01 * (freqs - 6e9) / 1e9)
    tsys = 4.65 + 0.1 * (freqs - 6e9) / 1e9
    sweep = PlanckSweep(freqs, temps, np.ones((temps.size, freqs.size)))
    psd = psd_from_occupation(sweep.source_occupation(), freqs[None, :], gsys[None, :], tsys[None, :])
    (OUT / "planck_sweep.csv").write_text(PlanckSweep(freqs, temps, psd).to_csv())
    dump(OUT / "planck_sweep_truth.json", {"freq_hz": freqs.tolist(), "gsys": gsys.tolist(),
                                           "tsys_K": tsys.tolist()})

    # SOLR sets: random passive boxes around an amplifier, and identity boxes
    rng = np.random.default_rng(20240501)
    f = np.linspace(3.6e9, 5.5e9, 11)
    b1 = random_passive(rng, 1, max_sv=0.9, min_transmission=0.3)[0]
    b2 = random_passive(rng, 1, max_sv=0.9, min_transmission=0.3)[0]
    eb = ErrorBoxes.from_boxes(f, np.broadcast_to(b1, (f.size, 2, 2)), np.broadcast_to(b2, (f.size, 2, 2)))
    g = 10 * np.exp(-2j * np.pi * f * 0.5e-9)
    dut = TwoPortSParams.from_entries(f, 0.05 + 0.02j, 0.001, g, -0.03 + 0.04j)
    solr_set("solr_roundtrip", eb, dut, 0.0, "random passive error boxes, ideal thru")
    solr_set("solr_identity", ErrorBoxes.identity(f), dut, 0.0, "perfect VNA: raw data equals truth")

    base = CryostatConfig(psd_noise_rel=0.0, s_noise=0.0, seed=7)
    plan = Plan()
    dump(OUT / "demo_protocol.json", {"cryostat": base.to_dict(), "plan": plan.to_dict()})
    bad = CryostatConfig(vts=VTSModel(s22=1.0), psd_noise_rel=0.0, s_noise=0.0, seed=7)
    dump(OUT / "bad_vts_protocol.json", {"cryostat": bad.to_dict(), "plan": plan.to_dict()})


if __name__ == "__main__":
    main()
