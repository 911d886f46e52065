import numpy as np
import pytest
from hypothesis import given, strategies as st

from qbsvie import generator as G
from qbsvie.generator import (Certificate, GeneratorError, SampleSpec, continuity_modulus_probe,
                              validate_certificate)

CATALOG = [
    G.zero(), G.linear_y(0.5), G.linear_y(-1.0), G.quadratic_half(), G.entropic(2.0), G.entropic(0.5),
    G.coherent_abs(1.0), G.convex_sqrt(1.0), G.entropic_weighted(0.25), G.zprime_sine(0.1),
    G.discounted(0.05, G.entropic(2.0)), G.linear_y(0.3) + G.quadratic_half(),
]


def test_catalog_values():
    assert G.quadratic_half()(0, 0, 0, 2.0) == 2.0
    assert G.coherent_abs(1.0)(0, 0, 0, -3.0) == 3.0
    assert G.entropic(2.0)(0, 0, 0, 2.0) == 1.0


@pytest.mark.parametrize("g", CATALOG, ids=lambda g: g.name)
def test_catalog_certificates(g):
    rep = validate_certificate(g, SampleSpec(count=10_000))
    assert rep.ok, rep.violations[:2]


def test_wrong_certificate_detected():
    bad = G.quadratic_half().with_certificate(gamma=0.5)
    assert {"growth", "lipschitz_z"} <= validate_certificate(bad).kinds()
    assert validate_certificate(G.linear_y(1.0)).ok
    fake = G.linear_y(-1.0).with_certificate(monotone=True)
    assert "monotone" in validate_certificate(fake).kinds()


@pytest.mark.parametrize("ctor", [G.coherent_abs, G.convex_sqrt, G.entropic_weighted])
def test_negative_weight_rejected(ctor):
    with pytest.raises(GeneratorError):
        ctor(-0.1)
    with pytest.raises(GeneratorError):
        G.discounted(-0.1, G.zero())


@given(st.floats(-50, 50), st.floats(-50, 50), st.floats(0, 10))
def test_coherent_abs_homogeneous_subadditive(z1, z2, lam):
    g = G.coherent_abs(1.0)
    assert np.isclose(g(0, 0, 0, lam * z1), lam * g(0, 0, 0, z1))
    assert g(0, 0, 0, z1 + z2) <= g(0, 0, 0, z1) + g(0, 0, 0, z2) + 1e-12


@pytest.mark.parametrize("g", [G.convex_sqrt(1.0), G.entropic_weighted(0.25)], ids=lambda g: g.name)
@given(z1=st.floats(-50, 50), z2=st.floats(-50, 50))
def test_midpoint_convex(g, z1, z2):
    mid = g(0, 0, 0, 0.5 * (z1 + z2))
    assert mid <= 0.5 * (g(0, 0, 0, z1) + g(0, 0, 0, z2)) + 1e-9 * (1 + abs(mid))


def test_continuity_probe():
    pairs = [(0.0, 0.01), (0.3, 0.5), (0.9, 1.0)]
    assert continuity_modulus_probe(G.quadratic_half(), pairs) == 0.0
    tz = G.custom(lambda t, s, y, z, zp: t * z, "t*z",
                  certificate=Certificate(L=1.0, rho=lambda u: u))
    assert continuity_modulus_probe(tz, pairs) <= 1.0
    sq = G.custom(lambda t, s, y, z, zp: np.sqrt(t) + 0 * z, "sqrt(t)",
                  certificate=Certificate(L=1.0, rho=lambda u: u))
    assert continuity_modulus_probe(sq, [(0.0, 0.01)]) > 1.0
    with pytest.raises(GeneratorError):
        continuity_modulus_probe(G.coherent_abs(lambda t, s: 1 + 0 * t, gbar_max=1.0), pairs)


def test_unbounded_zprime_rejected():
    with pytest.raises(GeneratorError):
        G.custom(lambda t, s, y, z, zp: zp, "linear z'", uses_zprime=True)
    G.custom(lambda t, s, y, z, zp: np.tanh(zp), "tanh z'", uses_zprime=True)


def test_from_spec_sum():
    g = G.from_spec([{"name": "linear_y", "a": 0.3}, {"name": "quadratic_half"}])
    assert g.uses_y and g.has_quad
    assert np.isclose(g(0, 0, 2.0, 2.0), 0.6 + 2.0)
    d = G.from_spec({"name": "discounted", "r": 0.05, "g0": {"name": "entropic", "gamma": 2.0}})
    assert d.certificate.monotone and np.isclose(d(0, 0, 1.0, 2.0), 0.05 + 1.0)
    with pytest.raises(GeneratorError):
        G.from_spec({"name": "nope"})
    with pytest.raises(GeneratorError):
        G.from_spec({"name": "linear_y", "b": 1})
