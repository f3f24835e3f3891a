import csv
import io

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cryonoise.errors import ConfigError, DomainError, GridError
from cryonoise.physics import planck_occupation
from cryonoise.thermal_chain import (CSV_COLUMNS, TABLE1, ChainSpec, ReadoutChainParams,
                                     ThermalStage, cascade_occupation, chain_forward_psd,
                                     input_occupation, stage_table_report)

TABLE1_N = [1229.36, 550.80, 38.70, 5.72, 1.02, 0.77, 0.56]


def test_reference_chain_at_5ghz():
    n = cascade_occupation(TABLE1, 5e9)
    assert np.allclose(n, TABLE1_N, rtol=0.01, atol=0)
    assert input_occupation(TABLE1, 5e9) == pytest.approx(0.56, rel=0.01)


def test_total_attenuation_column():
    a = [s.A_tot_db for s in TABLE1.stages]
    assert a == pytest.approx([19.25, 4.745, 12.847, 11.898, 11.898, 2.847, 10.0])


def test_one_stage_by_hand():
    f, T0, T1, att = 6e9, 300.0, 4.0, 20.0
    spec = ChainSpec([ThermalStage("x", T1, att)], T0=T0)
    a = 10 ** (-att / 10)
    expect = a * planck_occupation(f, T0) + (1 - a) * planck_occupation(f, T1)
    assert cascade_occupation(spec, f)[0] == pytest.approx(expect, rel=1e-14)


@given(st.lists(st.tuples(st.floats(0, 300), st.floats(0, 40)), min_size=1, max_size=6),
       st.floats(1e9, 1e10))
def test_output_bounded_by_extreme_temperatures(stages, f):
    spec = ChainSpec([ThermalStage(str(i), T, A) for i, (T, A) in enumerate(stages)], T0=295)
    n = cascade_occupation(spec, f)[-1]
    temps = [295] + [T for T, _ in stages]
    lo, hi = planck_occupation(f, min(temps)), planck_occupation(f, max(temps))
    assert lo * (1 - 1e-12) <= n <= hi * (1 + 1e-12)


def test_zero_attenuation_is_transparent_and_infinite_absorbs():
    f = 5e9
    clear = ChainSpec([ThermalStage("a", 0.01, 0)], T0=295)
    assert cascade_occupation(clear, f)[0] == pytest.approx(planck_occupation(f, 295))
    dark = ChainSpec([ThermalStage("a", 0.0, 400)], T0=295)
    assert cascade_occupation(dark, f)[0] == pytest.approx(0.5, abs=1e-30)


def test_vectorised_over_frequency():
    f = np.array([4e9, 5e9, 6e9])
    n = cascade_occupation(TABLE1, f)
    assert n.shape == (7, 3)
    assert n[-1, 1] == pytest.approx(cascade_occupation(TABLE1, 5e9)[-1])


def test_csv_report_shape_and_values():
    rows = list(csv.reader(io.StringIO(stage_table_report(TABLE1, 5e9))))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert [float(r[-1]) for r in rows[1:]] == pytest.approx(TABLE1_N, rel=0.01)
    assert rows[1][5] == "19.25"


def test_empty_chain_report_is_header_only():
    assert stage_table_report(ChainSpec([]), 5e9).strip() == ",".join(CSV_COLUMNS)
    assert input_occupation(ChainSpec([], T0=0.0), 5e9) == 0.5


def test_json_roundtrip_and_validation():
    back = ChainSpec.from_json(TABLE1.to_json())
    assert back == TABLE1
    with pytest.raises(ConfigError):
        ChainSpec.from_dict({"stages": [], "Tzero": 3})
    with pytest.raises(ConfigError):
        ChainSpec.from_dict({"stages": [{"name": "a", "T": 1, "loss": 3}]})
    with pytest.raises(DomainError):
        ThermalStage("a", -1.0)
    with pytest.raises(DomainError):
        ThermalStage("a", 1.0, A_lump_db=-3)


def test_readout_chain_forward_model():
    f = np.array([4e9, 5e9])
    ch = ReadoutChainParams.from_db(f, 70.9, 4.65)
    assert ch.gsys[0] == pytest.approx(10 ** 7.09)
    psd = chain_forward_psd(ch, 0.5, 5e9)
    assert isinstance(psd, float)
    with pytest.raises(GridError):
        chain_forward_psd(ch, 0.5, 4.5e9)
    with pytest.raises(DomainError):
        ReadoutChainParams(f, 0.0, 1.0)
