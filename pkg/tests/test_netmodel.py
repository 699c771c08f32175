"""Schema, validation, and blend arithmetic."""
import dataclasses

import numpy as np
import pytest

from hcng_trade.netmodel import (
    BlendConstants,
    BlendState,
    ScenarioFormatError,
    ScenarioValidationError,
    bundled_scenario_names,
    equivalent_gas_load,
    hhv_mix,
    hydrogen_fraction,
    load_bundled,
    orient_radial,
    scenario_content_hash,
    scenario_from_dict,
    scenario_to_dict,
    validate_scenario,
)

CONST = BlendConstants(hhv_ch4=39.8, hhv_h2=12.7, omega_max=0.2)


def test_hydrogen_fraction_basics():
    assert hydrogen_fraction(0.0, 10.0) == 0.0
    assert hydrogen_fraction(10.0, 0.0) == 1.0
    assert hydrogen_fraction(2.0, 8.0) == pytest.approx(0.2)
    with pytest.raises(ValueError):
        hydrogen_fraction(-1.0, 5.0)
    with pytest.raises(ValueError):
        hydrogen_fraction(0.0, 0.0)


def test_hhv_mix_at_cap():
    # 20% hydrogen in 12.7/39.8 gas: 0.2*12.7 + 0.8*39.8
    assert hhv_mix(0.2, 12.7, 39.8) == pytest.approx(34.38)
    assert hhv_mix(0.0, 12.7, 39.8) == pytest.approx(39.8)
    assert hhv_mix(1.0, 12.7, 39.8) == pytest.approx(12.7)
    with pytest.raises(ValueError):
        hhv_mix(1.2, 12.7, 39.8)


def test_equivalent_gas_load_dilution():
    # serving a 100 m3 methane contract with 34.38-heat blend takes more volume
    assert equivalent_gas_load(100.0, 34.38, 39.8) == pytest.approx(
        115.76497963932516
    )
    assert equivalent_gas_load(100.0, 39.8, 39.8) == pytest.approx(100.0)


def test_blend_math_random_consistency():
    rng = np.random.default_rng(7)
    for _ in range(200):
        h2 = float(rng.uniform(0.0, 50.0))
        ch4 = float(rng.uniform(0.1, 500.0))
        om = hydrogen_fraction(h2, ch4)
        assert 0.0 <= om < 1.0
        hv = hhv_mix(om, CONST.hhv_h2, CONST.hhv_ch4)
        # mix heat interpolates between the pure components
        assert CONST.hhv_h2 <= hv <= CONST.hhv_ch4
        # dilution never shrinks the contracted volume
        assert equivalent_gas_load(ch4, hv, CONST.hhv_ch4) >= ch4
        # energy carried by the equivalent volume equals the contract energy
        vol = equivalent_gas_load(ch4, hv, CONST.hhv_ch4)
        assert vol * hv == pytest.approx(ch4 * CONST.hhv_ch4, rel=1e-12)


def test_blend_state_from_volumes():
    st = BlendState.from_volumes([2.0, 0.0], [8.0, 0.0], CONST)
    assert st.omega[0] == pytest.approx(0.2)
    assert st.hhv[0] == pytest.approx(34.38)
    # idle period falls back to pure methane instead of 0/0
    assert st.omega[1] == 0.0
    assert st.hhv[1] == pytest.approx(39.8)
    assert st.max_abs_omega_delta(BlendState.pure_methane(2, CONST)) == pytest.approx(0.2)


def test_orient_radial_directions():
    edges = [("b", "a"), ("b", "c")]  # first edge stored against the flow
    oriented = orient_radial(["a", "b", "c"], edges, "a")
    by_edge = {e: (up, down) for up, down, e in oriented}
    assert by_edge[0] == (0, 1)  # a -> b despite the reversed declaration
    assert by_edge[1] == (1, 2)


def test_bundled_scenarios_load_and_validate():
    names = bundled_scenario_names()
    assert "tiny4x3" in names and "ieee33_belgian20" in names
    for name in names:
        sc = load_bundled(name)
        assert validate_scenario(sc) == []


def test_roundtrip_preserves_hash(tiny):
    doc = scenario_to_dict(tiny)
    again = scenario_from_dict(doc)
    assert again == tiny
    assert scenario_content_hash(again) == scenario_content_hash(tiny)


def test_hash_tracks_content(tiny):
    bumped = dataclasses.replace(
        tiny, market=dataclasses.replace(tiny.market, dt_h=0.5)
    )
    assert scenario_content_hash(bumped) != scenario_content_hash(tiny)
    # renaming alone also changes the hash: the name is part of the content
    renamed = dataclasses.replace(tiny, name="other")
    assert scenario_content_hash(renamed) != scenario_content_hash(tiny)


def test_format_errors():
    with pytest.raises(ScenarioFormatError):
        scenario_from_dict({"schema_version": "one"})
    with pytest.raises(ScenarioFormatError):
        scenario_from_dict({"schema_version": 1})  # market missing


def test_validation_catches_domain_errors(tiny):
    doc = scenario_to_dict(tiny)
    doc["power_network"]["slack"] = "nowhere"
    with pytest.raises(ScenarioValidationError) as err:
        scenario_from_dict(doc)
    assert "slack" in str(err.value)

    doc = scenario_to_dict(tiny)
    doc["market"]["power_price"] = doc["market"]["power_price"][:-1]
    with pytest.raises(ScenarioValidationError):
        scenario_from_dict(doc)

    doc = scenario_to_dict(tiny)
    doc["gas_network"]["pipes"].append({"from": "N2", "to": "N0", "weymouth": 10.0})
    with pytest.raises(ScenarioValidationError) as err:
        scenario_from_dict(doc)
    assert "radial" in str(err.value)

    doc = scenario_to_dict(tiny)
    doc["devices"]["batteries"][0]["cycle_b1"] = 5.0
    with pytest.raises(ScenarioValidationError) as err:
        scenario_from_dict(doc)
    assert "cycle" in str(err.value)


def test_unknown_algorithm_key_rejected(tiny):
    doc = scenario_to_dict(tiny)
    doc["algorithm"]["rho_extra"] = 2.0
    with pytest.raises(ScenarioFormatError):
        scenario_from_dict(doc)
