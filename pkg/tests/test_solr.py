import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cryonoise.errors import AmbiguityError, DomainError, GridError, SingularError
from cryonoise.solr import (TERMS, ErrorBoxes, OnePortStandards, calibrate, deembed,
                            solve_one_port)
from cryonoise.sparams import TwoPortSParams, line_model, random_passive, thru

seeds = st.integers(0, 2 ** 32 - 1)


def delayed_boxes(rng, freqs, d1=1e-9, d2=1.5e-9):
    b1 = np.broadcast_to(random_passive(rng, 1, max_sv=0.9, min_transmission=0.3)[0],
                         (freqs.size, 2, 2)).copy()
    b2 = np.broadcast_to(random_passive(rng, 1, max_sv=0.9, min_transmission=0.3)[0],
                         (freqs.size, 2, 2)).copy()
    for b, d in ((b1, d1), (b2, d2)):
        ph = np.exp(-2j * np.pi * freqs * d)
        b[:, 0, 1] *= ph
        b[:, 1, 0] *= ph
    return ErrorBoxes.from_boxes(freqs, b1, b2)


def raw_standards(eb, gammas=(-1.0, 1.0, 0.0)):
    out = []
    for g in gammas:
        s = np.zeros((eb.freqs.size, 2, 2), dtype=complex)
        s[:, 0, 0] = eb.port1().measure(g)
        s[:, 1, 1] = eb.port2().measure(g)
        out.append(TwoPortSParams(eb.freqs, s))
    return out


def test_one_port_three_term_recovery(rng):
    f = np.linspace(1e9, 2e9, 6)
    e00, e11, e10e01 = 0.1 + 0.05j, -0.2j, 0.7 * np.exp(1j * 0.3)
    from cryonoise.solr import OnePortErrors
    truth = OnePortErrors(f, e00, e11, e10e01)
    sol = solve_one_port(f, truth.measure(-1), truth.measure(1), truth.measure(0))
    assert np.allclose(sol.directivity, e00, atol=1e-13)
    assert np.allclose(sol.source_match, e11, atol=1e-13)
    assert np.allclose(sol.tracking, e10e01, atol=1e-13)
    g = 0.3 - 0.4j
    assert np.allclose(sol.correct(truth.measure(g)), g, atol=1e-13)


def test_custom_standards(rng):
    f = np.array([1e9, 2e9])
    std = OnePortStandards(short=-0.98 + 0.05j, open=0.99 - 0.1j, load=0.02)
    eb = delayed_boxes(rng, f)
    rs, ro, rl = raw_standards(eb, (std.short, std.open, std.load))
    sol = solve_one_port(f, rs.s11, ro.s11, rl.s11, std)
    assert np.allclose(sol.tracking, eb.e10e01, atol=1e-12)


def test_degenerate_standards_raise():
    f = [1e9]
    with pytest.raises(SingularError):
        solve_one_port(f, 0.1, 0.1, 0.2, OnePortStandards(short=1.0, open=1.0, load=0.0))


@given(seeds)
def test_embed_deembed_inverse(seed):
    rng = np.random.default_rng(seed)
    f = np.linspace(2e9, 3e9, 4)
    eb = delayed_boxes(rng, f)
    dut = TwoPortSParams(f, random_passive(rng, f.size))
    assert np.allclose(deembed(eb.embed(dut), eb).s, dut.s, rtol=0, atol=1e-10)


@given(seeds)
def test_full_solr_roundtrip_with_reciprocal_unknown(seed):
    rng = np.random.default_rng(seed)
    f = np.linspace(2e9, 6e9, 9)
    eb = delayed_boxes(rng, f)
    # arbitrary reciprocal standard: phase known only to within 60 deg
    recip = TwoPortSParams(f, random_passive(rng, f.size, reciprocal=True, min_transmission=0.2))
    estimate = np.angle(recip.s21) + rng.uniform(-1, 1, f.size)
    dut = TwoPortSParams(f, random_passive(rng, f.size))
    cal = calibrate(f, *raw_standards(eb), eb.embed(recip), phase_estimate=estimate)
    for name in TERMS:
        assert np.allclose(getattr(cal, name), getattr(eb, name), rtol=0, atol=1e-10)
    assert np.allclose(deembed(eb.embed(dut), cal).s, dut.s, rtol=0, atol=1e-10)
    assert np.all(cal.consistency() < 1e-12)


def test_scalar_estimate_follows_continuity(rng):
    f = np.linspace(2e9, 6e9, 81)
    eb = delayed_boxes(rng, f)
    line = line_model(f, delay_s=0.3e-9)
    cal = calibrate(f, *raw_standards(eb), eb.embed(line), phase_estimate=-2 * np.pi * 2e9 * 0.3e-9)
    assert np.allclose(cal.e10e32, eb.e10e32, atol=1e-10)


def test_coarse_grid_with_scalar_estimate_is_ambiguous(rng):
    # tracking phase advances 90 deg per point
    f = 1e9 + 1e8 * np.arange(6)
    eb = delayed_boxes(rng, f, d1=1.25e-9, d2=1.25e-9)
    with pytest.raises(AmbiguityError, match="Ambiguous at"):
        calibrate(f, *raw_standards(eb), eb.embed(thru(f)))
    # a per-frequency estimate resolves it
    cal = calibrate(f, *raw_standards(eb), eb.embed(thru(f)), phase_estimate=np.zeros(f.size))
    assert np.allclose(cal.e10e32, eb.e10e32, atol=1e-10)


def test_identity_is_exact_passthrough(rng):
    f = np.linspace(1e9, 2e9, 5)
    eb = ErrorBoxes.identity(f)
    dut = TwoPortSParams(f, random_passive(rng, f.size))
    assert np.array_equal(eb.embed(dut).s, dut.s)
    cal = calibrate(f, *raw_standards(eb), eb.embed(thru(f)))
    assert np.array_equal(deembed(dut, cal).s, dut.s)


def test_deembed_flags_singular_points(rng):
    f = np.array([1e9, 2e9, 3e9])
    eb = delayed_boxes(rng, f)
    raw = eb.embed(TwoPortSParams(f, random_passive(rng, 3, min_transmission=0.1)))
    s = raw.s.copy()
    s[1, 1, 0] = 0
    with pytest.warns(RuntimeWarning):
        out, flagged = deembed(TwoPortSParams(f, s), eb, return_flags=True)
    assert flagged.tolist() == [2e9]
    assert np.all(np.isnan(out.s[1])) and np.all(np.isfinite(out.s[[0, 2]]))


def test_grid_mismatch(rng):
    eb = ErrorBoxes.identity([1e9, 2e9])
    with pytest.raises(GridError):
        deembed(thru([1e9, 3e9]), eb)


def test_zero_tracking_rejected():
    with pytest.raises(DomainError):
        ErrorBoxes([1e9], 0, 0, 0, 0, 0, 1, 1, 1)


def test_reciprocal_without_transmission(rng):
    f = np.array([1e9, 2e9])
    eb = delayed_boxes(rng, f)
    with pytest.raises(SingularError):
        calibrate(f, *raw_standards(eb), raw_standards(eb)[2])


def test_json_roundtrip_is_exact(rng):
    eb = delayed_boxes(rng, np.linspace(1e9, 2e9, 3))
    back = ErrorBoxes.from_json(eb.to_json())
    for name in TERMS:
        assert np.array_equal(getattr(back, name), getattr(eb, name))
    assert set(json.loads(eb.to_json())["terms"]) == set(TERMS)
