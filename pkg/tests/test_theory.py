"""Theory lab: closed forms, fits onto the optimality manifold, bound checks."""

from fractions import Fraction

import numpy as np
import pytest

from longshort.seeding import stream
from longshort.theory import (
    FitConfig,
    ReducedLinearParams,
    bound_check,
    bound_constants,
    constant_target_data,
    enumerated_loss,
    fit_linear,
    gamma_star,
    gen_error,
    harmonic,
    linear_forward,
    measured_gen_error,
    random_linear_model,
)


def test_harmonic_values():
    assert harmonic(1) == (Fraction(1), 1.0)
    assert harmonic(2)[0] == Fraction(3, 2)
    h10, f10 = harmonic(10)
    assert h10 == Fraction(7381, 2520)
    assert abs(f10 - 2.9289682539682538) < 1e-12
    with pytest.raises(ValueError):
        harmonic(0)


def test_harmonic_rational_matches_float():
    for n in (1, 2, 5, 17, 60):
        exact, rendered = harmonic(n)
        assert abs(float(exact) - rendered) < 1e-12


def test_gamma_star_values():
    assert gamma_star("length", 10) == 5.5
    assert gamma_star("mean", 3) == 1.0
    expected_sum = 130 / (2 * (10 + 7381 / 2520))
    assert abs(gamma_star("sum", 10) - expected_sum) < 1e-12
    assert abs(gamma_star("sum", 10) - 5.027470) < 1e-5
    with pytest.raises(ValueError):
        gamma_star("bogus", 10)


def test_gamma_star_length_closed_form_exact():
    for n in range(1, 101):
        assert gamma_star("length", n) == (n + 1) / 2


def test_gen_error_closed_forms():
    assert gen_error("length", 10, 50) == (50 - 5.5) ** 2 == 1980.25
    assert gen_error("mean", 10, 50, eps=0.0) == 0.0
    g = gamma_star("sum", 10)
    assert abs(gen_error("sum", 10, 50) - (51 / 100) * (g - 50) ** 2) < 1e-9
    assert abs(gen_error("sum", 10, 50) - 1031.59) < 0.5


def test_gen_error_mean_bounded_by_eps_squared():
    for lt in range(1, 200):
        assert gen_error("mean", 10, lt, eps=0.3) <= 0.3**2 + 1e-15


def test_gen_error_length_strictly_increasing_past_vertex():
    vals = [gen_error("length", 10, lt) for lt in range(7, 60)]
    assert all(b > a for a, b in zip(vals, vals[1:]))


def test_linear_forward_examples():
    const = ReducedLinearParams(q1=1, q0=1, kappa1=0.7, kappa0=0.7)
    for prefix in ([1], [0, 1, 1], [0] * 5):
        assert abs(linear_forward(const, prefix) - 0.7) < 1e-15
    mean_opt = ReducedLinearParams(q1=1, q0=1, kappa1=1, kappa0=0)
    assert abs(linear_forward(mean_opt, [1, 0, 1]) - 2 / 3) < 1e-15
    g = 5.5
    gamma_model = ReducedLinearParams(q1=g**0.5, q0=g**0.5, kappa1=g**0.5, kappa0=g**0.5)
    assert abs(linear_forward(gamma_model, [0, 1, 0, 0]) - 5.5) < 1e-12
    with pytest.raises(ValueError, match="empty"):
        linear_forward(const, [])
    with pytest.raises(ValueError, match="0 or 1"):
        linear_forward(const, [2])


@pytest.mark.parametrize("l_train", [5, 10, 20])
@pytest.mark.parametrize("task", ["length", "sum"])
def test_fit_reproduces_gamma_star(task, l_train):
    fit = fit_linear(task, l_train)
    assert abs(fit.implied_gamma - gamma_star(task, l_train)) < 1e-3


def test_fit_length_10_window():
    fit = fit_linear("length", 10)
    assert 5.499 <= fit.implied_gamma <= 5.501


def test_fit_sum_10_window():
    fit = fit_linear("sum", 10)
    assert 5.0265 <= fit.implied_gamma <= 5.0285


def test_fit_mean_reaches_zero_loss():
    fit = fit_linear("mean", 10)
    assert fit.final_loss <= 1e-8
    # fitted optimum satisfies the condition set: q1=q0, kappa0=0, products=1
    assert fit.params.q1 == fit.params.q0
    assert fit.params.kappa0 == 0.0
    a, b, c, d = fit.params.products()
    assert abs(a - 1) < 1e-4 and abs(c - 1) < 1e-4 and b == d == 0.0


def test_fit_diverges_with_huge_lr():
    from longshort.theory import FitDiverged

    with pytest.raises(FitDiverged) as err:
        fit_linear("length", 10, FitConfig(lr=10.0, max_steps=200))
    assert len(err.value.trace) > 1


def test_enumerated_loss_at_optimum_is_residual_curve():
    # on the length manifold the per-length loss is exactly (gamma - l)^2
    g = 4.0
    params = ReducedLinearParams(q1=2.0, q0=2.0, kappa1=2.0, kappa0=2.0)
    expect = np.mean([(g - l) ** 2 for l in range(1, 8)])
    assert abs(enumerated_loss("length", 7, params) - expect) < 1e-12


def test_measured_gen_error_length_matches_closed_form():
    g = gamma_star("length", 10)
    r = g**0.5
    params = ReducedLinearParams(q1=r, q0=r, kappa1=r, kappa0=r)
    for lt in (20, 30, 50):
        measured = measured_gen_error("length", lt, params)
        assert abs(measured - gen_error("length", 10, lt)) / gen_error("length", 10, lt) < 1e-10


def test_bound_constants_example_and_monotonicity():
    rep = bound_constants(10, 50)
    # l = 5 sits in the upper branch: l_extra = 5, N_l = floor(40/5) = 8
    idx = rep.l_values.index(5)
    assert rep.l_extra_values[idx] == 5
    assert rep.n_values[idx] == 8

    prev = None
    for lt in range(11, 41):
        r = bound_constants(10, lt)
        if prev is not None:
            assert r.c1_exp >= prev.c1_exp - 1e-12
            assert r.c2_exp >= prev.c2_exp - 1e-12
            assert r.c1 / r.c2 >= prev.c1 / prev.c2 - 1e-12
        prev = r
    with pytest.raises(ValueError):
        bound_constants(10, 10)


def test_bound_check_zero_projection_and_zero_target():
    rng = stream(0, "bound-zero")
    data = constant_target_data(vocab_size=6, d=6, out_dim=4, zero_target=True)
    model = random_linear_model(6, 4, scale=0.2, rng=rng)
    model.w = np.zeros_like(model.w)
    rep = bound_check(model, data, l_train=10, l_test=20, rng=rng, n_mc=64)
    assert rep.measured == 0.0
    assert rep.measured <= rep.bound


def test_bound_check_random_small_model():
    rng = stream(1, "bound-one")
    data = constant_target_data(vocab_size=6, d=6, out_dim=4)
    model = random_linear_model(6, 4, scale=0.15, rng=rng)
    rep = bound_check(model, data, l_train=10, l_test=11, rng=rng, n_mc=128)
    assert rep.measured <= rep.bound


def test_bound_grows_with_l_test():
    rng = stream(2, "bound-grow")
    data = constant_target_data(vocab_size=6, d=6, out_dim=4)
    model = random_linear_model(6, 4, scale=0.15, rng=rng)
    bounds = [bound_check(model, data, 10, lt, stream(3, f"b{lt}"), n_mc=64).bound
              for lt in (12, 20, 40)]
    assert bounds[0] < bounds[1] < bounds[2]


def test_bound_check_property_50_random_models():
    data = constant_target_data(vocab_size=5, d=5, out_dim=3)
    for trial in range(50):
        rng = stream(trial, "bound-prop")
        model = random_linear_model(5, 3, scale=0.25, rng=rng)
        l_test = int(rng.integers(11, 41))
        rep = bound_check(model, data, l_train=10, l_test=l_test, rng=rng, n_mc=96)
        assert rep.measured <= rep.bound


def test_bound_check_rejects_violating_data():
    from dataclasses import replace

    rng = stream(4, "bound-bad")
    data = replace(constant_target_data(5, 5, 3), truncation_invariant=False)
    model = random_linear_model(5, 3, scale=0.2, rng=rng)
    with pytest.raises(ValueError, match="truncation"):
        bound_check(model, data, 10, 20, rng)
