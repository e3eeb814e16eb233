import pytest

from awgn_lab.checks import CHECKS, CheckResult, VerifyConfig, run_checks


@pytest.mark.parametrize("name", list(CHECKS))
def test_each_check_passes_at_small_counts(name):
    (res,) = run_checks([name], VerifyConfig(seed=1, trials=3))
    assert res.passed, res.detail
    assert res.anchor and res.trials > 0 and res.seconds >= 0
    assert set(res.to_dict()) >= {"name", "anchor", "passed", "worst_excess"}


def test_record_tracks_worst_and_failures():
    r = CheckResult("x", "y")
    assert not r.passed
    r.record(0.1, 0.3)
    r.record(0.5, 0.2)
    assert r.trials == 2 and r.failures == 1 and r.worst == pytest.approx(0.3)


def test_registry_guards():
    assert len(CHECKS) >= 12
    with pytest.raises(KeyError):
        run_checks(["missing"])
    with pytest.raises(ValueError):
        VerifyConfig(trials=0)
    with pytest.raises(ValueError):
        VerifyConfig(amplitudes=(1.0, -2.0))


def test_same_seed_same_report():
    a = run_checks(["wrap-mass"], VerifyConfig(seed=4, trials=5))[0]
    b = run_checks(["wrap-mass"], VerifyConfig(seed=4, trials=5))[0]
    assert a.worst == b.worst and a.detail == b.detail
