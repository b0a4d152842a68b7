"""Deterministic property suites behind ``stefan verify``.

Each suite draws its cases from the xorshift stream with a fixed seed and
records the worst margin, i.e. how close the tightest case came to violating
its inequality (negative means violated).
"""

from dataclasses import dataclass
from typing import Callable, Dict, List, Optional

import numpy as np

from . import linalg
from .diagnostics import dissipation_lower_bound_check, velocity_bound_margin
from .linalg import (
    DiffusionTable,
    friction_array,
    l_basis,
    lu_solve,
    projector_arrays,
    restricted_eigenvalues,
)
from .models import boltzmann_entropy, make_model, relative_entropy_density, relenes_constant
from .rng import DEFAULT_SEED, XorShift64Star

MUTANTS = ("sign-flip",)


@dataclass(frozen=True)
class SuiteResult:
    name: str
    cases: int
    failures: int
    worst_margin: float

    @property
    def passed(self):
        return self.failures == 0


@dataclass
class VerifySummary:
    results: Dict[str, SuiteResult]

    @property
    def failures(self):
        return sum(r.failures for r in self.results.values())

    @property
    def exit_code(self):
        return 0 if self.failures == 0 else 1

    def lines(self):
        for r in self.results.values():
            yield (f"suite={r.name} cases={r.cases} failures={r.failures} "
                   f"worst_margin={r.worst_margin:.6e} status={'PASS' if r.passed else 'FAIL'}")


class _Tally:
    def __init__(self, name):
        self.name, self.cases, self.failures, self.worst = name, 0, 0, np.inf

    def add(self, margin, tol=0.0):
        self.cases += 1
        margin = float(margin) if np.isfinite(margin) else -np.inf
        self.worst = min(self.worst, margin)
        if margin < -tol:
            self.failures += 1

    def result(self):
        return SuiteResult(self.name, self.cases, self.failures, float(self.worst))


def _bd(mutant):
    if mutant == "sign-flip":
        return lambda m, sq: -linalg.bott_duffin_array(m, sq)
    return linalg.bott_duffin_array


def random_table(rng, n, low=0.1, high=10.0):
    upper = [rng.uniform(low, high) for _ in range(n * (n - 1) // 2)]
    return DiffusionTable.from_upper(upper, n)


def random_psd_with_kernel(rng, c, low=0.1, high=10.0):
    """Symmetric PSD matrix with kernel span{sqrt c} and spectrum on L drawn log-uniformly."""
    n = len(c)
    q = l_basis(np.sqrt(c))
    rot, _ = np.linalg.qr(rng.normals((n - 1) * (n - 1)).reshape(n - 1, n - 1))
    ev = np.exp(rng.uniforms(n - 1, np.log(low), np.log(high)))
    basis = q @ rot
    return (basis * ev) @ basis.T


def suite_spectral(seed, samples=1000, mutant=None):
    rng = XorShift64Star(seed)
    bd = _bd(mutant)
    t = _Tally("spectral")
    for _ in range(samples):
        n = rng.integer(2, 6)
        c = rng.simplex_mixed(n)
        table = random_table(rng, n)
        sq = np.sqrt(c)
        a = friction_array(c, table.inverse())
        inv = bd(a, sq)
        ev = restricted_eigenvalues(a, sq)
        iev = restricted_eigenvalues(0.5 * (inv + inv.T), sq)
        t.add(min(ev[0] - table.mu(), iev[0] - table.lam()), 1e-9)
    return t.result()


def suite_bott_duffin_oracle(seed, samples=500, mutant=None):
    rng = XorShift64Star(seed + 1)
    bd = _bd(mutant)
    t = _Tally("bott-duffin-oracle")
    for _ in range(samples):
        n = rng.integer(2, 6)
        c = rng.simplex_mixed(n)
        sq = np.sqrt(c)
        m = random_psd_with_kernel(rng, c)
        inv = bd(m, sq)
        p_l, perp = projector_arrays(sq)
        b = p_l @ rng.normals(n)
        nb = max(1.0, np.linalg.norm(b))
        res_l = np.linalg.norm(m @ inv @ b - b) / nb
        bperp = perp @ rng.normals(n)
        res_perp = np.linalg.norm(inv @ bperp)
        # independent route: hand-written elimination on M P_L + P_perp
        x_oracle = p_l @ lu_solve(m @ p_l + perp, b)
        res_oracle = np.linalg.norm(inv @ b - x_oracle) / nb
        t.add(min(1e-10 - res_l, 1e-12 - res_perp, 1e-10 - res_oracle))
    return t.result()


def suite_reciprocal(seed, samples=500, mutant=None):
    rng = XorShift64Star(seed + 2)
    bd = _bd(mutant)
    t = _Tally("reciprocal-eigenvalue")
    for _ in range(samples):
        n = rng.integer(2, 6)
        c = rng.simplex_mixed(n)
        sq = np.sqrt(c)
        m = random_psd_with_kernel(rng, c)
        inv = bd(m, sq)
        ev = restricted_eigenvalues(m, sq)
        iev = restricted_eigenvalues(0.5 * (inv + inv.T), sq)
        with np.errstate(divide="ignore"):
            rel = np.max(np.abs(np.sort(1.0 / iev) - ev) / ev)
        t.add(1e-9 - rel if np.all(iev > 0) else -np.inf)
    return t.result()


def suite_pointwise(seed=None, points=100, mutant=None):
    """Both relative-entropy lower bounds on a grid over (0,1]^2, then the kappa_m bound."""
    t = _Tally("pointwise-bounds")
    grid = np.arange(1, points + 1) / points
    cc, bb = np.meshgrid(grid, grid, indexing="ij")
    ent = boltzmann_entropy()
    lhs = relative_entropy_density(ent, cc, bb)
    if mutant == "sign-flip":
        lhs = -lhs
    margin = np.minimum(lhs - 0.5 * (cc - bb) ** 2, lhs - (np.sqrt(cc) - np.sqrt(bb)) ** 2)
    for v in margin.ravel():
        t.add(v, 1e-12)
    for m in (0.1, 0.5, 1.0):
        kappa = relenes_constant(ent, m)
        t.add(kappa, 0.0)
        sel = bb >= m - 1e-12
        gap = lhs[sel] - kappa * (cc[sel] - bb[sel]) ** 2
        t.add(gap.min(), 1e-12)
    return t.result()


def suite_velocity(seed, samples=1000, mutant=None):
    rng = XorShift64Star(seed + 3)
    t = _Tally("velocity-bound")
    for _ in range(samples):
        n = rng.integer(2, 5)
        c = rng.simplex_floor(n, 1e-3)
        table = random_table(rng, n, 0.5, 2.0)
        sq = np.sqrt(c)
        p_l, _ = projector_arrays(sq)
        g = p_l @ rng.normals(n)
        margin = velocity_bound_margin(c, g, table)
        if mutant == "sign-flip":
            margin = -margin
        t.add(-margin, 1e-10)
    return t.result()


def suite_dissipation_lower_bound(seed, samples=10000, m=0.2, mutant=None):
    rng = XorShift64Star(seed + 4)
    t = _Tally("dissipation-lower-bound")
    models = {n: make_model("classic-ms", n=n, d=random_table(rng, n, 0.5, 2.0)) for n in (2, 3)}
    for _ in range(samples):
        n = rng.integer(2, 3)
        c = rng.simplex_floor(n, m / 2.0)
        g = rng.normals(n)
        g -= g.mean()
        chk = dissipation_lower_bound_check(c, g, models[n], m)
        lhs = -chk.lhs if mutant == "sign-flip" else chk.lhs
        t.add(lhs - chk.rhs, 1e-10)
    return t.result()


SUITES: Dict[str, Callable[..., SuiteResult]] = {
    "spectral": suite_spectral,
    "bott-duffin-oracle": suite_bott_duffin_oracle,
    "pointwise-bounds": suite_pointwise,
    "reciprocal-eigenvalue": suite_reciprocal,
    "velocity-bound": suite_velocity,
    "dissipation-lower-bound": suite_dissipation_lower_bound,
}


def run_suites(names: Optional[List[str]] = None, seed=DEFAULT_SEED, mutant=None) -> VerifySummary:
    if mutant is not None and mutant not in MUTANTS:
        raise ValueError(f"unknown mutant {mutant!r}")
    chosen = list(SUITES) if not names else names
    for name in chosen:
        if name not in SUITES:
            raise KeyError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
    return VerifySummary({name: SUITES[name](seed, mutant=mutant) for name in chosen})
