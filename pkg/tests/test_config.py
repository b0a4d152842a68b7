import pytest
from hypothesis import given, strategies as st

from stefan.config import RunConfig, parse_config, render, validate
from stefan.errors import ParseError, ValidationError

MINIMAL = """\
model = "classic-ms"   # the textbook case
n = 2
d = [1.0]
cells = 50
dt_init = 1e-5
t_end = 0.1
base = [0.5, 0.5]
"""


def test_minimal_config():
    cfg = parse_config(MINIMAL)
    assert cfg.model == "classic-ms" and cfg.d == (1.0,) and cfg.cells == 50
    assert cfg.profile == "constant" and cfg.safety == 0.4


def test_porous_needs_gamma():
    text = MINIMAL.replace("classic-ms", "porous-medium")
    with pytest.raises(ValidationError) as err:
        parse_config(text)
    assert err.value.key == "gamma"
    assert parse_config(text + "gamma = 2.0\n").gamma == 2.0


def test_d_count_checked():
    with pytest.raises(ValidationError) as err:
        parse_config(MINIMAL.replace("[1.0]", "[1.0, 2.0]"))
    assert err.value.key == "d"


def test_unknown_key_is_error():
    with pytest.raises(ValidationError) as err:
        parse_config(MINIMAL + "celss = 10\n")
    assert err.value.key == "celss"


def test_syntax_error_has_line():
    with pytest.raises(ParseError) as err:
        parse_config(MINIMAL + "cells 20\n")
    assert err.value.line == 8


def test_tables_rejected():
    with pytest.raises(ParseError):
        parse_config(MINIMAL + "[grid]\ncells = 3\n")


@pytest.mark.parametrize("line,key", [
    ('model = "nope"', "model"),
    ("cells = 3", "cells"),
    ("cells = 2.5", "cells"),
    ("dt_init = 0", "dt_init"),
    ("safety = 1.5", "safety"),
    ("base = [0.5, 0.6]", "base"),
    ('profile = "square"', "profile"),
    ("seed = -1", "seed"),
    ('n = "two"', "n"),
])
def test_field_validation(line, key):
    key_name = line.split("=")[0].strip()
    lines = [ln for ln in MINIMAL.splitlines() if not ln.startswith(key_name + " ")]
    with pytest.raises(ValidationError) as err:
        parse_config("\n".join(lines + [line]) + "\n")
    assert err.value.key == key


def test_cosine_profile_checks():
    text = MINIMAL + 'profile = "cosine"\n'
    with pytest.raises(ValidationError):
        parse_config(text)
    with pytest.raises(ValidationError):
        parse_config(text + "amplitude = [0.1, 0.1]\n")
    with pytest.raises(ValidationError):
        parse_config(text + "amplitude = [0.6, -0.6]\n")
    cfg = parse_config(text + "amplitude = [0.1, -0.1]\n")
    f = cfg.initial_field()
    assert f.data[0, 0] > 0.59


def test_tumor_and_molar_configs():
    tumor = parse_config('model = "tumor"\nn = 3\nbeta = 1.0\ntheta = 0.5\ncells = 8\ndt_init = 1e-4\n'
                         't_end = 0.01\nbase = [0.3, 0.3, 0.4]\n')
    assert tumor.build_model().kind == "tumor"
    with pytest.raises(ValidationError):
        parse_config('model = "molar-mass"\nn = 2\ncells = 8\ndt_init = 1e-4\nt_end = 0.01\nbase = [0.5, 0.5]\n')


configs = st.builds(
    lambda n, cells, dt, t_end, seed, stride, eps, prof: RunConfig(
        model="classic-ms", n=n, cells=cells, dt_init=dt, t_end=t_end, base=tuple([1.0 / n] * n),
        d=tuple(0.5 + 0.1 * k for k in range(n * (n - 1) // 2)), seed=seed, snapshot_stride=stride,
        epsilon=eps, profile=prof, amplitude=tuple([0.01, -0.01] + [0.0] * (n - 2)) if prof == "cosine" else None,
        output="out dir/\"x\".csv",
    ),
    st.integers(2, 5), st.integers(4, 500), st.floats(1e-9, 1.0), st.floats(0.0, 10.0),
    st.integers(0, 2**64 - 1), st.integers(1, 100), st.floats(0.0, 1e-3), st.sampled_from(["constant", "cosine", "random"]),
)


@given(configs)
def test_round_trip(cfg):
    validate(cfg)
    assert parse_config(render(cfg)) == cfg
