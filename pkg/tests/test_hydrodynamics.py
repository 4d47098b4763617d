import numpy as np
import pytest
from scipy import integrate

from gldiffusion.hydrodynamics import (BlowUpError, DensityField, Integrator, frac_deriv,
                                       fractional_multiplier, moment_functional, multiplier,
                                       pde_rhs, phi_density, q_pointwise, q_weak, solve, step)
from gldiffusion.testfunctions import TestFunction

TWO_PI = 2 * np.pi


def cosine_density(M, a=0.5, k=1):
    return DensityField.from_function(lambda t: 1 + a * np.cos(TWO_PI * k * t), M)


def test_multiplier_against_oracle(multiplier_oracle):
    for beta, table in multiplier_oracle.items():
        for k, ref in table.items():
            assert multiplier(k, beta) == pytest.approx(ref, rel=1e-12, abs=1e-10)


def test_multiplier_basics():
    assert multiplier(0, 0.5) == 0.0
    for bad in (0.0, 1.0, -0.2):
        with pytest.raises(ValueError):
            multiplier(1, bad)
    with pytest.raises(ValueError):
        multiplier(-1, 0.5)


def test_multiplier_growth_rate(multiplier_oracle):
    ratio = multiplier(128, 0.5) / multiplier(64, 0.5)
    assert ratio == pytest.approx(2**0.5, rel=0.02)


def test_multiplier_table_invariants():
    mult = fractional_multiplier(64, 0.5)
    assert mult.grid_size == 64
    assert mult.m[0] == 0.0
    assert np.all(mult.m[1:] > 0)
    assert fractional_multiplier(64, 0.5) is not mult  # fresh wrapper ...
    assert fractional_multiplier(64, 0.5).m is mult.m  # ... over a cached table


def test_density_field_validation():
    with pytest.raises(ValueError):
        DensityField(np.ones(24))
    with pytest.raises(ValueError):
        DensityField(np.ones(8))
    with pytest.raises(ValueError):
        DensityField(2 * np.ones(16)).check()
    rho = cosine_density(32)
    assert rho.check() is rho
    spec = rho.spectrum
    assert spec[0] == pytest.approx(1.0)
    assert spec[1] == pytest.approx(0.25)
    back = DensityField.from_spectrum(spec, 32)
    assert np.allclose(back.values, rho.values, atol=1e-15)


def test_frac_deriv_harmonics():
    M = 64
    mult = fractional_multiplier(M, 0.5)
    th = np.arange(M) / M
    d = frac_deriv(DensityField(1 + np.sin(TWO_PI * th)), mult)
    assert np.allclose(d, mult.m[1] * np.cos(TWO_PI * th), atol=1e-12)
    d = frac_deriv(DensityField(1 + np.cos(TWO_PI * th)), mult)
    assert np.allclose(d, -mult.m[1] * np.sin(TWO_PI * th), atol=1e-12)
    assert np.allclose(frac_deriv(DensityField.uniform(M), mult), 0.0)


def test_frac_deriv_direct_quadrature():
    # the defining integral, with the τ^-β endpoint singularity handled by an algebraic weight
    beta = 0.5
    rho = lambda t: 1 + 0.4 * np.cos(TWO_PI * t) + 0.2 * np.sin(3 * TWO_PI * t)
    M = 64
    mult = fractional_multiplier(M, beta)
    D = frac_deriv(DensityField.from_function(rho, M), mult)
    for j in range(0, M, 8):
        th = j / M

        def g(tau):
            # (rho(θ+τ) - rho(θ-τ)) / τ written without cancellation
            s1 = TWO_PI * np.sinc(2 * tau)
            s3 = 3 * TWO_PI * np.sinc(6 * tau)
            return (-0.8 * np.sin(TWO_PI * th) * s1 + 0.4 * np.cos(3 * TWO_PI * th) * s3)

        val, _ = integrate.quad(g, 0, 0.5, weight="alg", wvar=(-beta, 0.0), epsabs=1e-12)
        assert D[j] == pytest.approx(val, abs=1e-9)


def test_q_pointwise_properties():
    M = 64
    mult = fractional_multiplier(M, 0.5)
    assert np.all(q_pointwise(DensityField.uniform(M), mult) == 0.0)
    rt = cosine_density(M)
    two = DensityField(2 * rt.values)
    assert np.allclose(q_pointwise(two, mult), 4 * q_pointwise(rt, mult), rtol=0, atol=1e-12)


def test_q_pointwise_sign_check_duality():
    M = 256
    mult = fractional_multiplier(M, 0.5)
    rho = cosine_density(M)
    f = TestFunction.sin(1).scaled(-1.0)
    lhs = np.mean(q_pointwise(rho, mult) * f(rho.theta))
    assert lhs == pytest.approx(q_weak(rho, f, 0.5), abs=1e-8)


def test_q_weak_trivial_cases():
    M = 64
    assert q_weak(DensityField.uniform(M), TestFunction.sin(2), 0.5) == pytest.approx(0, abs=1e-12)
    assert q_weak(cosine_density(M), TestFunction.constant(3.0), 0.5) == 0.0
    with pytest.raises(TypeError):
        q_weak(cosine_density(M), np.sin, 0.5)


@pytest.mark.parametrize("beta", [0.25, 0.5, 0.75])
def test_q_weak_duality(beta):
    M = 256
    mult = fractional_multiplier(M, beta)
    rho = cosine_density(M)
    f = TestFunction.sin(1)
    strong = np.mean(f(rho.theta) * q_pointwise(rho, mult))
    assert q_weak(rho, f, beta) == pytest.approx(strong, abs=1e-6)


def test_pde_rhs_basics():
    M = 64
    mult = fractional_multiplier(M, 0.5)
    assert np.max(np.abs(pde_rhs(DensityField.uniform(M), mult))) <= 1e-12
    rho = cosine_density(M)
    heat = pde_rhs(rho, mult, nonlocal_term=False)
    assert np.allclose(heat, -0.5 * TWO_PI**2 * 0.5 * np.cos(TWO_PI * rho.theta), atol=1e-10)
    assert abs(np.mean(pde_rhs(rho, mult))) <= 1e-12


def test_weak_strong_consistency():
    M = 256
    mult = fractional_multiplier(M, 0.5)
    rho = DensityField.from_function(lambda t: 1 + 0.3 * np.cos(TWO_PI * t)
                                     + 0.2 * np.sin(2 * TWO_PI * t), M)
    h = TestFunction.cos(1)
    lhs = np.mean(pde_rhs(rho, mult) * h(rho.theta))
    rhs = 0.5 * np.mean(h.d2(rho.theta) * rho.values) + q_weak(rho, h.derivative(), 0.5)
    assert lhs == pytest.approx(rhs, abs=1e-6)


def test_step_uniform_exact_and_mass():
    M = 64
    mult = fractional_multiplier(M, 0.5)
    u = DensityField.uniform(M)
    assert np.array_equal(step(u, 1e-3, mult).values, u.values)
    integ = Integrator(mult, 1e-4)
    v = cosine_density(M).spectrum
    for _ in range(10**4):
        v = integ.step_hat(v)
    assert abs(DensityField.from_spectrum(v, M).mass() - 1) <= 1e-10


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_step_rejects_bad_input():
    mult = fractional_multiplier(32, 0.5)
    with pytest.raises(ValueError):
        step(cosine_density(32), 0.0, mult)
    with pytest.raises(ValueError):
        step(cosine_density(64), 1e-3, mult)
    with pytest.raises(BlowUpError):
        step(DensityField(1 + 1e300 * np.cos(TWO_PI * np.arange(32) / 32)), 1e-3, mult)


def test_self_convergence_order():
    M = 64
    mult = fractional_multiplier(M, 0.5)
    rho0 = cosine_density(M)
    sols = [solve(rho0, 0.05, dt, mult, [0.05])[-1].field
            for dt in (1e-3, 5e-4, 2.5e-4, 1.25e-4)]
    e1 = sols[0].l2_distance(sols[1])
    e2 = sols[1].l2_distance(sols[2])
    e3 = sols[2].l2_distance(sols[3])
    assert np.log2(e1 / e2) >= 3.5
    assert np.log2(e2 / e3) >= 3.5


def test_solve_records():
    M = 32
    mult = fractional_multiplier(M, 0.5)
    rho0 = cosine_density(M)
    snaps = solve(rho0, 0.0, 1e-3, mult, [0.0])
    assert len(snaps) == 1 and np.array_equal(snaps[0].field.values, rho0.values)
    snaps = solve(rho0, 0.01, 1e-3, mult, [0.0, 0.0042, 0.01])
    assert [s.time for s in snaps] == pytest.approx([0.0, 0.004, 0.01])
    for s in snaps:
        s.field.check(1e-12)
        assert np.isfinite(s.moment) and s.warning is None
    with pytest.raises(ValueError):
        solve(rho0, 0.01, 1e-3, mult, [0.02])


def test_solve_default_dt():
    mult = fractional_multiplier(16, 0.5)
    snaps = solve(cosine_density(16), 0.01, None, mult, [0.01])
    dt = 0.25 / 16**2
    assert snaps[-1].time == pytest.approx(round(0.01 / dt) * dt)


def test_negative_density_warning():
    mult = fractional_multiplier(32, 0.5)
    with pytest.warns(RuntimeWarning):
        snaps = solve(cosine_density(32, a=1.5), 0.0, 1e-3, mult, [0.0])
    assert snaps[0].warning is not None


def test_contractivity():
    M = 64
    mult = fractional_multiplier(M, 0.5)
    a = cosine_density(M)
    b = DensityField.from_function(lambda t: 1 + 0.3 * np.sin(2 * TWO_PI * t), M)
    times = [0.0, 0.02, 0.05, 0.1, 1.0, 2.0]
    sa = solve(a, 2.0, 1e-3, mult, times)
    sb = solve(b, 2.0, 1e-3, mult, times)
    gaps = [x.field.l1_distance(y.field) for x, y in zip(sa, sb)]
    assert all(g2 <= g1 + 1e-14 for g1, g2 in zip(gaps, gaps[1:]))
    assert gaps[-1] < 1e-12 < gaps[0]


def test_reflection_equivariance():
    M = 64
    mult = fractional_multiplier(M, 0.5)
    rho0 = DensityField.from_function(lambda t: 1 + 0.3 * np.cos(TWO_PI * t)
                                      + 0.2 * np.sin(2 * TWO_PI * t), M)
    times = [0.01, 0.05, 0.1]
    fwd = solve(rho0, 0.1, 1e-4, mult, times)
    ref = solve(rho0.reflect(), 0.1, 1e-4, mult, times)
    for x, y in zip(fwd, ref):
        assert np.max(np.abs(x.field.reflect().values - y.field.values)) <= 1e-9
    even = solve(cosine_density(M), 0.1, 1e-4, mult, times)
    for s in even:
        assert np.max(np.abs(s.field.reflect().values - s.field.values)) <= 1e-9


def test_spectral_tail():
    M = 128
    mult = fractional_multiplier(M, 0.5)
    for s in solve(cosine_density(M), 0.1, 1e-4, mult, [0.0, 0.01, 0.1]):
        mag = np.abs(s.field.spectrum)
        assert mag[-1] < 1e-12
        assert np.max(mag[M // 4:]) < 1e-12


def test_moment_functional_uniform():
    # ∬ |θ - τ|^-β = 2 (1/2)^(1-β) / (1-β)
    for beta in (0.25, 0.5, 0.75):
        exact = 2 * 0.5 ** (1 - beta) / (1 - beta)
        assert moment_functional(DensityField.uniform(128), beta) == pytest.approx(exact, rel=1e-8)


def test_phi_density_symmetry():
    u = DensityField.uniform(128)
    assert abs(phi_density(TestFunction.sin(1), u, 0.5)) <= 1e-8
    assert phi_density(TestFunction.constant(2.0), cosine_density(128), 0.5) == 0.0
    rho = cosine_density(128)
    f = TestFunction.sin(1)
    assert phi_density(f, rho, 0.5) == pytest.approx(2 * q_weak(rho, f, 0.5))


def test_smoothed_empirical_density():
    x = np.random.default_rng(0).random(64)
    d = DensityField.from_empirical(x, 256, 1 / 64)
    d.check(1e-12)
    assert d.values.min() > 0
    assert d.pairing(TestFunction.cos(1)) == pytest.approx(
        np.mean(np.cos(TWO_PI * x)) * np.exp(-0.5 * (TWO_PI / 64) ** 2), abs=1e-12)
