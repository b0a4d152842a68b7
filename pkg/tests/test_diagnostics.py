import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stefan.diagnostics import (
    build_cutoff,
    dissipation,
    dissipation_density,
    dissipation_lower_bound_check,
    entropy,
    entropy_production_rs,
    eta_min,
    gronwall_report,
    lower_bound_constants,
    record,
    relative_entropy,
    split_dissipation,
    velocity_bound_check,
    velocity_bound_margin,
)
from stefan.errors import GridMismatch, NonPositiveH0, PreconditionError
from stefan.linalg import DiffusionTable, projectors
from stefan.models import make_model
from stefan.rng import XorShift64Star
from stefan.solver import (
    Grid1D,
    SolverConfig,
    Trajectory,
    cosine_profile,
    init_field,
    make_field,
    perturb_initial,
    random_smooth_profile,
    run,
)


def uniform(cells, c, time=0.0):
    return make_field(Grid1D(cells), np.tile(c, (cells, 1)), time)


def cosine(cells=40, amp=0.1):
    return init_field(Grid1D(cells), cosine_profile([0.5, 0.5], [amp, -amp]))


def ternary(seed=3, cells=30):
    return init_field(Grid1D(cells), random_smooth_profile([0.3, 0.3, 0.4], 4, 0.05, seed))


# entropy

def test_entropy_uniform_values(binary_model):
    assert entropy(uniform(10, [0.5, 0.5]), binary_model) == pytest.approx(-math.log(2) - 1, abs=1e-14)
    m3 = make_model("classic-ms", n=3, d=[1.0] * 3)
    assert entropy(uniform(10, [1 / 3] * 3), m3) == pytest.approx(-math.log(3) - 1, abs=1e-14)
    por = make_model("porous-medium", n=2, d=[1.0], gamma=2.0)
    assert entropy(uniform(10, [0.5, 0.5]), por) == pytest.approx(0.5, abs=1e-15)


def test_entropy_allows_vacuum_for_boltzmann(binary_model):
    assert entropy(uniform(4, [1.0, 0.0]), binary_model) == pytest.approx(-1.0)


# relative entropy

def test_relative_entropy_examples(binary_model):
    f = uniform(4, [0.6, 0.4])
    ref = uniform(4, [0.5, 0.5])
    expect = (0.6 * math.log(1.2) - 0.1) + (0.4 * math.log(0.8) + 0.1)
    assert relative_entropy(f, ref, binary_model) == pytest.approx(expect, abs=1e-15)
    assert relative_entropy(f, ref, binary_model) == pytest.approx(0.0201357, abs=5e-7)
    assert relative_entropy(ref, ref, binary_model) == 0.0


def test_relative_entropy_mismatch(binary_model):
    with pytest.raises(GridMismatch):
        relative_entropy(uniform(4, [0.5, 0.5]), uniform(5, [0.5, 0.5]), binary_model)
    with pytest.raises(GridMismatch):
        relative_entropy(uniform(4, [0.5, 0.5]), uniform(4, [0.5, 0.5], time=0.1), binary_model)
    with pytest.raises(PreconditionError):
        relative_entropy(uniform(4, [0.5, 0.5]), uniform(4, [1.0, 0.0]), binary_model)


@given(st.integers(0, 10**6))
@settings(max_examples=30)
def test_relative_entropy_dominates_l2(seed):
    model = make_model("classic-ms", n=3, d=[1.0] * 3)
    a, b = ternary(seed), ternary(seed + 1)
    h = relative_entropy(a, b, model)
    l2 = 0.5 * ((a.data - b.data) ** 2).sum() * a.grid.dx
    assert h >= l2 - 1e-12


# dissipation

def test_dissipation_uniform_zero(binary_model):
    assert dissipation(uniform(8, [0.3, 0.7]), binary_model) == 0.0


def test_dissipation_binary_closed_form():
    d = 1.3
    model = make_model("classic-ms", n=2, d=[d])
    f = cosine(100)
    c1 = f.data[:, 0]
    cf = 0.5 * (c1[1:] + c1[:-1])
    dc = np.diff(c1) / f.grid.dx
    closed = d * np.sum(dc**2 * (1 / cf + 1 / (1 - cf))) * f.grid.dx
    # sqrt-differences and arithmetic face values agree up to the cubic jump term
    assert dissipation(f, model) == pytest.approx(closed, rel=1e-5)


@given(st.integers(0, 10**6), st.sampled_from(["classic-ms", "porous-medium", "pvd", "molar-mass"]))
@settings(max_examples=30)
def test_dissipation_nonnegative(seed, kind):
    kw = {"classic-ms": dict(d=[0.5, 1.0, 2.0]), "porous-medium": dict(d=[0.5, 1.0, 2.0], gamma=2.0),
          "pvd": dict(d=[0.5, 1.0, 2.0]), "molar-mass": dict(masses=[1.0, 2.0, 0.5])}[kind]
    model = make_model(kind, n=3, **kw)
    assert dissipation(ternary(seed), model) >= -1e-10


# entropy production

def test_rs_uniform_zero(binary_model):
    rs, mn = entropy_production_rs(uniform(6, [0.5, 0.5]), binary_model)
    assert np.array_equal(rs, np.zeros(5)) and mn == 0.0


@given(st.integers(0, 10**6))
@settings(max_examples=30)
def test_rs_equals_dissipation_density(seed):
    rng = XorShift64Star(seed)
    model = make_model("classic-ms", n=3, d=list(rng.uniforms(3, 0.5, 2.0)))
    f = ternary(seed)
    rs, mn = entropy_production_rs(f, model)
    dens = dissipation_density(f, model)
    assert np.abs(rs - dens).max() <= 1e-12 * max(1.0, np.abs(dens).max())
    assert mn >= -1e-10


def test_rs_along_cosine_run(binary_model):
    traj = run(SolverConfig(binary_model, 1e-5, 0.01), cosine(30), snapshot_stride=5)
    assert min(entropy_production_rs(s, binary_model)[1] for s in traj.snapshots) >= -1e-10


# velocity bound

def test_velocity_bound_uniform_and_cosine():
    t = DiffusionTable.constant(2, 1.0)
    assert velocity_bound_check(uniform(6, [0.5, 0.5]), t) == 0.0
    assert velocity_bound_check(cosine(), t) <= 1e-15


@given(st.integers(0, 10**6))
def test_velocity_bound_random_states(seed):
    rng = XorShift64Star(seed)
    t = DiffusionTable.from_upper(list(rng.uniforms(3, 0.5, 2.0)), 3)
    c = rng.simplex_floor(3, 1e-3)
    g = projectors(c).p_l @ rng.normals(3)
    assert velocity_bound_margin(c, g, t) <= 1e-10


# lower bound

def test_lower_bound_constants_binary():
    model = make_model("classic-ms", n=2, d=[1.0])
    k = lower_bound_constants(model, 1.0)
    assert k.eta == pytest.approx(1.0)
    assert k.zeta == pytest.approx(1.0 / 32.0)
    assert k.gamma_hat == pytest.approx(1.0)
    assert k.beta == pytest.approx(0.5 * (1 / 32) * (1 / 3))


def test_eta_porous():
    model = make_model("porous-medium", n=2, d=[1.0], gamma=3.0)
    # h'' = 3c is smallest at c = m/2
    assert eta_min(model, 0.2) == pytest.approx(0.3)


def test_lower_bound_zero_gradient():
    model = make_model("classic-ms", n=2, d=[1.0])
    res = dissipation_lower_bound_check([0.5, 0.5], [0.0, 0.0], model, 1.0)
    assert res.lhs == 0.0 and res.rhs == 0.0 and res.passed


@given(st.integers(0, 10**6), st.sampled_from([2, 3]))
def test_lower_bound_sampled(seed, n):
    rng = XorShift64Star(seed)
    model = make_model("classic-ms", n=n, d=[1.0] * (n * (n - 1) // 2))
    c = rng.simplex_floor(n, 0.1)
    g = rng.normals(n)
    g -= g.mean()
    assert dissipation_lower_bound_check(c, g, model, 0.2).passed


def test_lower_bound_preconditions():
    model = make_model("classic-ms", n=2, d=[1.0])
    with pytest.raises(PreconditionError):
        dissipation_lower_bound_check([0.95, 0.05], [0.1, -0.1], model, 0.2)
    with pytest.raises(PreconditionError):
        dissipation_lower_bound_check([0.5, 0.5], [0.1, 0.1], model, 0.2)
    tumor = make_model("tumor", beta=1.0, theta=0.5)
    with pytest.raises(PreconditionError):
        dissipation_lower_bound_check([0.3, 0.3, 0.4], [0.1, -0.1, 0.0], tumor, 0.2)


# cutoff

def test_cutoff_endpoints():
    cut = build_cutoff(0.4, 0.1)
    assert cut.psi(0.2) == 0.0 and cut.psi(0.3) == 1.0
    for s in (0.2, 0.3):
        assert cut.dpsi(s) == 0.0 and cut.d2psi(s) == 0.0
    assert cut.psi(0.25) == pytest.approx(0.5, abs=1e-15)
    assert cut.chi(np.array([0.1, 0.9])) == 0.0
    assert build_cutoff(0.4).eps == pytest.approx(0.1)


def test_cutoff_rejects_degenerate():
    for m, eps in [(0.0, 0.1), (0.4, 0.0), (1.6, 0.3)]:
        with pytest.raises(PreconditionError):
            build_cutoff(m, eps)


@given(st.floats(0.0, 1.0))
def test_cutoff_smoothness(s):
    cut = build_cutoff(0.4, 0.2)
    assert 0.0 <= cut.psi(s) <= 1.0
    h = 1e-6
    if 0.2 + 2 * h < s < 0.4 - 2 * h:
        assert (cut.psi(s + h) - cut.psi(s - h)) / (2 * h) == pytest.approx(cut.dpsi(s), rel=1e-5, abs=1e-6)


def test_split_dissipation_cases(binary_model):
    ref = cosine(20)
    cut = build_cutoff(0.2)
    assert split_dissipation(uniform(20, [0.5, 0.5]), uniform(20, [0.5, 0.5]), binary_model, cut) == (0.0, 0.0)
    low, high = split_dissipation(perturb_initial(ref, 0.01), ref, binary_model, cut)
    # every entry is above m/2 + eps = 0.15, so chi = 1
    assert low == 0.0 and high > 0.0
    with pytest.raises(GridMismatch):
        split_dissipation(ref, cosine(10), binary_model, cut)


def test_split_high_term_bounded_by_dissipation():
    model = make_model("classic-ms", n=2, d=[1.0])
    m = 0.2
    k = lower_bound_constants(model, m)
    f = cosine(40)
    zero = uniform(40, [0.5, 0.5])
    _, high = split_dissipation(f, zero, model, build_cutoff(m))
    # the gradient of c - const is the gradient of c
    assert high <= dissipation(f, model) / (2 * k.beta) + 1e-8


# records and reports

def test_record_fields(binary_model):
    f = cosine(10)
    rec = record(f, binary_model, f, dt=0.5)
    assert rec.rel_entropy == 0.0 and rec.dt == 0.5 and len(rec.mass) == 2
    assert rec.dissipation >= 0.0 and rec.rs_min >= -1e-10


def fake_pairs(model, eps_list, h0_scale=1.0):
    ref = cosine(20)
    ref_traj = Trajectory([ref], [], [0.0])
    out = []
    for e in eps_list:
        p = perturb_initial(ref, e)
        out.append((e, Trajectory([p], [], [0.0]), ref_traj))
    return out


def test_gronwall_report_scaling(binary_model):
    rep = gronwall_report(fake_pairs(binary_model, [0.0, 0.02, 0.01, 0.005]), binary_model)
    assert rep.epsilons == [0.02, 0.01, 0.005]
    assert rep.zero_pair_max == 0.0
    assert 1.95 <= rep.fitted_order <= 2.05
    assert rep.sup_ratio == [1.0, 1.0, 1.0]


def test_gronwall_report_preconditions(binary_model):
    with pytest.raises(PreconditionError):
        gronwall_report(fake_pairs(binary_model, [0.02, 0.01]), binary_model)
    with pytest.raises(PreconditionError):
        gronwall_report(fake_pairs(binary_model, [0.02, 0.01, 0.004]), binary_model)
    ref = cosine(20)
    t = Trajectory([ref], [], [0.0])
    with pytest.raises(NonPositiveH0):
        gronwall_report([(0.01, t, t), (0.005, t, t), (0.0025, t, t)], binary_model)


@pytest.mark.parametrize("kind,kw", [("classic-ms", dict(d=[0.6, 1.4, 1.0])),
                                     ("porous-medium", dict(d=[0.6, 1.4, 1.0], gamma=2.0))])
def test_discrete_entropy_dissipation_balance(kind, kw):
    model = make_model(kind, n=3, **kw)
    traj = run(SolverConfig(model, 1e-5, 0.02), ternary(7), snapshot_stride=1)
    snaps = traj.snapshots
    for a, b, rep in zip(snaps, snaps[1:], traj.reports):
        ha, hb = entropy(a, model), entropy(b, model)
        # explicit Euler on a convex functional overshoots by a second order term in dt
        loss = rep.dt_used * dissipation(a, model)
        assert loss > 0.0
        assert -1.02 * loss <= hb - ha <= -0.98 * loss
