import pytest

from stefan.verify import SUITES, run_suites


@pytest.fixture(scope="module")
def summary():
    return run_suites()


def test_all_suites_pass(summary):
    assert list(summary.results) == list(SUITES)
    assert summary.failures == 0 and summary.exit_code == 0
    for r in summary.results.values():
        assert r.cases > 0


def test_filter_runs_one_suite():
    s = run_suites(["spectral"])
    assert list(s.results) == ["spectral"]


def test_deterministic():
    a = run_suites(["bott-duffin-oracle"]).results["bott-duffin-oracle"]
    b = run_suites(["bott-duffin-oracle"]).results["bott-duffin-oracle"]
    assert a == b


@pytest.mark.parametrize("name", ["spectral", "bott-duffin-oracle", "reciprocal-eigenvalue", "pointwise-bounds"])
def test_sign_flip_mutant_is_caught(name):
    s = run_suites([name], mutant="sign-flip")
    assert s.failures > 0 and s.exit_code == 1


def test_unknown_suite():
    with pytest.raises(KeyError):
        run_suites(["nope"])
