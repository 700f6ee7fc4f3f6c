import math

import pytest

from asepquad.core import (
    ParticleConfig,
    PositionEvent,
    ProbResult,
    ValidationError,
    validate_params,
)


def test_symmetric_params():
    params = validate_params(0.5)
    assert params.q == 0.5
    assert params.tau == 1.0
    assert params.eq3_valid and params.thm234_valid


def test_p_zero_flags():
    params = validate_params(0)
    assert params.q == 1.0
    assert not params.eq3_valid
    assert params.thm234_valid
    assert params.tau == 0.0


def test_q_zero_flags_and_tau_guard():
    params = validate_params(1)
    assert params.q == 0.0
    assert params.eq3_valid
    assert not params.thm234_valid
    with pytest.raises(ValidationError):
        params.tau


@pytest.mark.parametrize("bad", [-0.1, 1.3, math.nan, math.inf, "0.5", None])
def test_params_rejects_out_of_range(bad):
    with pytest.raises(ValidationError):
        validate_params(bad)


def test_p_plus_q_exact():
    for p in (0.1, 0.3, 0.7, 0.95):
        params = validate_params(p)
        assert params.p + params.q == 1.0


def test_finite_config_requires_increasing():
    for bad in [(3, 1), (0, 0), (5, 4, 6)]:
        with pytest.raises(ValidationError):
            ParticleConfig.finite(bad)
    cfg = ParticleConfig.finite([-2, 0, 4])
    assert cfg.site(1) == -2 and cfg.site(3) == 4
    with pytest.raises(ValidationError):
        cfg.site(4)
    with pytest.raises(ValidationError):
        cfg.site(0)


def test_step_config_sites_and_truncation():
    cfg = ParticleConfig.step()
    assert cfg.site(1) == 1 and cfg.site(7) == 7
    cut = cfg.truncated(4)
    assert cut.positions == (1, 2, 3, 4)
    offset = ParticleConfig.step(origin=-3)
    assert offset.site(2) == -2


def test_event_validation():
    ev = PositionEvent.of(2, (3, 5))
    assert ev.last_index == 3
    with pytest.raises(ValidationError):
        PositionEvent.of(0, (1,))
    with pytest.raises(ValidationError):
        PositionEvent.of(1, (2, 2))
    with pytest.raises(ValidationError):
        PositionEvent.of(1, ())


def test_prob_result_derived_fields():
    r = ProbResult.from_raw(0.25 - 3e-12j, n_terms=4, n_nodes=100)
    assert r.probability == 0.25
    assert r.imag_residual == 3e-12
    assert r.est_quadrature_error >= 0.0
    assert r.converged
