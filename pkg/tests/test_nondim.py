from __future__ import annotations

import numpy as np
import pytest
from dataclasses import replace

from crowdsim.errors import ValidationError
from crowdsim.geometry import Domain
from crowdsim.nondim import ReferenceScales, compute_kappa, dimensionless_groups


def random_scales(rng) -> ReferenceScales:
    vals = 10.0 ** rng.uniform(-3, 3, size=10)
    names = [
        "x_ref", "t_ref", "s_ref", "p_ref", "upsilon_ref",
        "omega_ref", "beta_ref", "phi_ref", "mu_ref", "p_max",
    ]
    return ReferenceScales(**dict(zip(names, vals)))


def test_unit_scales_example():
    r = ReferenceScales(x_ref=1.0, t_ref=1.0, p_max=2.0)
    assert dimensionless_groups(r) == (2.0, 1.0, 1.0, 1.0)
    assert compute_kappa(r) == 2.0


def test_equal_groups():
    r = ReferenceScales(x_ref=2.0, t_ref=6.0, p_max=1.0)
    g = dimensionless_groups(r)
    assert g == (3.0, 3.0, 3.0, 3.0)
    assert compute_kappa(r) == 3.0


def test_linearity_in_t_ref():
    rng = np.random.default_rng(11)
    for _ in range(100):
        r = random_scales(rng)
        g1 = dimensionless_groups(r)
        g2 = dimensionless_groups(replace(r, t_ref=2.0 * r.t_ref))
        assert g2 == tuple(2.0 * v for v in g1)
        assert compute_kappa(replace(r, t_ref=2.0 * r.t_ref)) == 2.0 * compute_kappa(r)


def test_inverse_linearity_in_x_ref():
    rng = np.random.default_rng(12)
    for _ in range(100):
        r = random_scales(rng)
        g1 = dimensionless_groups(r)
        g2 = dimensionless_groups(replace(r, x_ref=2.0 * r.x_ref))
        assert g2 == tuple(v / 2.0 for v in g1)


def test_kappa_matches_bruteforce_recomputation():
    rng = np.random.default_rng(13)
    for _ in range(200):
        r = random_scales(rng)
        groups = [
            float(np.prod([r.upsilon_ref, r.t_ref, r.s_ref, r.p_max]) / r.x_ref),
            float(np.prod([r.upsilon_ref, r.t_ref, r.s_ref, r.p_ref]) / r.x_ref),
            float(np.prod([r.omega_ref, r.t_ref]) / r.x_ref),
            float(np.prod([r.beta_ref, r.t_ref]) / r.x_ref),
        ]
        assert dimensionless_groups(r) == tuple(groups)
        k = compute_kappa(r)
        assert k == max(groups)
        assert all(k >= g for g in dimensionless_groups(r))


def test_validation_and_domain_default():
    with pytest.raises(ValidationError):
        ReferenceScales(x_ref=0.0, t_ref=1.0)
    with pytest.raises(ValidationError):
        ReferenceScales(x_ref=1.0, t_ref=1.0, beta_ref=-2.0)
    square = Domain(
        [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)],
        exits=[(3, 0.0, 1.0, 0.05)],
        sphere_radius=0.1,
    )
    r = ReferenceScales.for_domain(square)
    assert r.x_ref == square.diameter
    assert r.t_ref == 1.0
    r2 = ReferenceScales.for_domain(square, t_ref=3.0, p_max=5.0)
    assert r2.t_ref == 3.0 and r2.p_max == 5.0 and r2.x_ref == square.diameter
