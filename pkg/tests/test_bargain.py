"""Two-round settlement: quantities by consensus, prices by equal split."""

import dataclasses

import numpy as np
import pytest

from hcng_trade.adn import branchflow_tightness
from hcng_trade.bargain import bargain, entity_views, nash_product
from hcng_trade.gdn import weymouth_tightness
from hcng_trade.netmodel import BlendState


def test_disagreement_points(tiny_independent):
    assert tiny_independent.c0_e == pytest.approx(32.079481, abs=1e-4)
    assert tiny_independent.c0_g == pytest.approx(99.0, abs=1e-6)


def test_joint_benefit_matches_centralized(tiny, tiny_bargain, tiny_central):
    """The decomposed negotiation must find the same joint saving as one
    monolithic solve of both networks (the quantities are the only thing
    money cannot change)."""
    out = tiny_bargain
    admm_joint = (out.c0_e + out.c0_g) - (out.c_e + out.c_g)
    central_joint = (out.c0_e + out.c0_g) - tiny_central.joint_ops
    assert central_joint > 0.0
    assert admm_joint == pytest.approx(central_joint, rel=1e-3)
    assert out.joint_benefit == pytest.approx(18.596494, rel=1e-3)
    assert out.q1_converged and out.q2_converged


def test_surpluses_split_equally(tiny_bargain):
    out = tiny_bargain
    s = out.joint_benefit
    assert s > 0.0
    assert abs(out.surplus_e - out.surplus_g) <= 0.01 * s
    # the transfer moves money only: both sides keep a strict gain
    assert out.surplus_e > 0.0
    assert out.surplus_g > 0.0
    assert nash_product(out) > 0.0


def test_cost_identities(tiny_bargain):
    out = tiny_bargain
    dt = 1.0
    assert out.surplus_e + out.surplus_g == pytest.approx(out.joint_benefit, abs=1e-9)
    assert out.c_e == pytest.approx(out.adn_breakdown.total, rel=1e-9)
    assert out.c_g == pytest.approx(out.gdn_breakdown.total, rel=1e-9)
    assert out.transfer == pytest.approx(out.trade.transfer(dt), rel=1e-9)
    assert out.c_e + out.c_g == pytest.approx(
        out.adn_breakdown.total + out.gdn_breakdown.total, rel=1e-9
    )


def test_settled_point_is_physical(tiny, tiny_bargain):
    out = tiny_bargain
    assert weymouth_tightness(tiny, out.gdn_schedule) <= 1e-4
    assert branchflow_tightness(tiny, out.adn_schedule) <= 1e-4
    assert max(out.blend.omega) <= tiny.blend.omega_max + 1e-9
    et = tiny.devices.electrolyzers[0]
    assert np.all(out.trade.p2g_kw >= -1e-7)
    assert np.all(out.trade.p2g_kw <= et.rated_kw + 1e-6)
    assert np.all(out.trade.g2p_m3 >= -1e-7)


def test_local_copies_agree_at_settlement(tiny_bargain):
    """Consensus residuals: both entities hold the same trade at the end,
    up to the declared stopping tolerance (1e-3 of the trade scale)."""
    t = tiny_bargain.trade
    np.testing.assert_allclose(t.gdn_p2g, t.adn_p2g, rtol=5e-3, atol=5e-2)
    np.testing.assert_allclose(t.gdn_g2p, t.adn_g2p, rtol=5e-3, atol=5e-2)


def test_prices_are_positive_and_bounded(tiny, tiny_bargain):
    """Negotiated prices stay inside the obvious no-arbitrage band: the
    electric side never pays more per kWh-equivalent than its tariff band,
    and nobody is paid a negative price."""
    t = tiny_bargain.trade
    assert np.all(t.price_p2g >= -1e-9)
    assert np.all(t.price_g2p >= -1e-9)
    assert np.all(t.price_p2g <= 10.0 * max(tiny.market.power_price))
    assert np.all(t.price_g2p <= 10.0 * max(tiny.market.gas_price) * 39.8 / 12.7)


def test_transfer_bisection_mode_agrees(tiny, tiny_bargain):
    """The scalar fallback settles the same quantities and lands on the
    same equal split, just through one number instead of 2T prices."""
    alt = bargain(tiny, mode="transfer-bisection", collect_messages=False)
    assert not alt.no_bargain
    assert alt.joint_benefit == pytest.approx(tiny_bargain.joint_benefit, rel=1e-6)
    assert abs(alt.surplus_e - alt.surplus_g) <= 0.01 * alt.joint_benefit
    assert alt.transfer == pytest.approx(tiny_bargain.transfer, rel=0.02)


def test_consensus_messages_only_carry_trades(tiny_bargain):
    seen = {m.variable.split("[")[0] for m in tiny_bargain.messages}
    assert seen <= {"p2g", "g2p", "price-p2g", "price-g2p"}
    phases = {m.phase for m in tiny_bargain.messages}
    assert phases == {"quantity", "price"}


def test_entity_views_by_variant(tiny):
    g1, e1 = entity_views(tiny)
    assert g1 is tiny and e1 is tiny
    m2 = dataclasses.replace(tiny, variant="model2")
    g2, e2 = entity_views(m2)
    assert not g2.devices.electrolyzers and not g2.devices.fuel_cells
    assert e2.devices.electrolyzers  # electric side now owns the fleet
    m3 = dataclasses.replace(tiny, variant="model3")
    g3, e3 = entity_views(m3)
    assert not g3.devices.electrolyzers and not e3.devices.fuel_cells
    assert e3.devices.batteries  # storage stays


def test_non_trading_variants_fall_back_to_independent(tiny):
    for variant in ("model2", "model3"):
        out = bargain(dataclasses.replace(tiny, variant=variant), collect_messages=False)
        assert out.no_bargain
        assert out.c_e == pytest.approx(out.c0_e)
        assert out.c_g == pytest.approx(out.c0_g)
        assert out.surplus_e == 0.0 and out.surplus_g == 0.0
        assert float(np.abs(out.trade.p2g_kw).sum()) == 0.0
        assert float(np.abs(out.trade.g2p_m3).sum()) == 0.0


def test_no_coupling_devices_means_no_bargain(tiny):
    bare = dataclasses.replace(
        tiny, devices=dataclasses.replace(tiny.devices, electrolyzers=(), fuel_cells=())
    )
    out = bargain(bare, collect_messages=False)
    assert out.no_bargain
    assert out.joint_benefit == 0.0


def test_model2_is_cheaper_than_model3_for_the_electric_side(tiny):
    """Self-built conversion can only help relative to having none, and
    it can never beat being paid to host the gas side's fleet."""
    m2 = bargain(dataclasses.replace(tiny, variant="model2"), collect_messages=False)
    m3 = bargain(dataclasses.replace(tiny, variant="model3"), collect_messages=False)
    assert m2.c_e <= m3.c_e + 1e-6
