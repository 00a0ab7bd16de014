import numpy as np
import pytest
from hypothesis import given, strategies as st

from robout.losses import (
    LossSpec,
    biweight_psi,
    biweight_rho,
    biweight_weight,
    check_loss,
    huber_loss,
    loss_value,
    max_rho,
    psi_value,
)

SPECS = [LossSpec.huber(), LossSpec.quantile(0.5), LossSpec.quantile(0.8), LossSpec.tukey(),
         LossSpec.tukey(1.547)]


def _kinks(spec):
    if spec.kind == "huber":
        return [-spec.tuning, spec.tuning]
    if spec.kind == "quantile":
        return [0.0]
    return [-spec.tuning, spec.tuning]


def finite_difference_errors(spec, ts, h=1e-5):
    """|central difference - psi| at points at least 10 h away from kinks."""
    ts = np.asarray(ts, dtype=float)
    far = np.all(np.abs(ts[:, None] - np.array(_kinks(spec))[None, :]) > 10 * h, axis=1)
    ts = ts[far]
    fd = (loss_value(spec, ts + h) - loss_value(spec, ts - h)) / (2 * h)
    return np.abs(fd - psi_value(spec, ts))


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: f"{s.kind}-{s.tuning}")
def test_psi_matches_finite_difference(spec):
    ts = np.linspace(-8, 8, 1601)
    assert finite_difference_errors(spec, ts).max() < 1e-6


def test_huber_values():
    assert huber_loss(1.0, 1.345) == 0.5
    assert huber_loss(3.0, 1.345) == pytest.approx(1.345 * 3 - 0.5 * 1.345**2)


def test_check_loss_values():
    assert check_loss(2.0, 0.3) == pytest.approx(0.6)
    assert check_loss(-2.0, 0.3) == pytest.approx(1.4)


def test_quantile_subgradient_at_kink():
    assert psi_value(LossSpec.quantile(0.5), 0.0) == 0.0
    assert psi_value(LossSpec.quantile(0.9), 0.0) == pytest.approx(0.4)


def test_biweight_is_bounded():
    c = 4.685
    assert biweight_rho(100.0, c) == pytest.approx(max_rho(LossSpec.tukey(c)))
    assert biweight_psi(5.0, c) == 0.0
    assert biweight_weight(0.0, c) == 1.0
    assert max_rho(LossSpec.huber()) == float("inf")


@given(st.floats(-50, 50))
def test_weight_times_t_is_psi(t):
    c = 4.685
    assert biweight_weight(t, c) * t == pytest.approx(float(biweight_psi(t, c)), abs=1e-12)


@given(st.floats(-1e3, 1e3), st.floats(0.05, 0.95))
def test_check_loss_nonnegative(t, tau):
    assert check_loss(t, tau) >= 0


def test_scalar_in_scalar_out():
    assert isinstance(loss_value(LossSpec.huber(), 0.3), float)
    assert loss_value(LossSpec.huber(), np.array([0.3, 0.4])).shape == (2,)


@pytest.mark.parametrize("kind, tuning", [("cauchy", 1.0), ("huber", 0.0), ("quantile", 1.0)])
def test_loss_spec_validation(kind, tuning):
    with pytest.raises(ValueError):
        LossSpec(kind, tuning)
