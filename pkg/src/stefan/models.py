"""Entropy densities, relative entropies and the model registry.

Each species carries a convex free energy h with pressure p = c h' - h. A
:class:`ModelSpec` combines the per-species entropies with a rule producing the
"mobility core" G(c), the matrix for which

    sqrt(c_i) u_i = -sum_j G_ij(c) sqrt(c_j) grad h'_j(c_j).

For models written through a friction matrix B(c), G is its Bott-Duffin
inverse.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence

import numpy as np

from .errors import EvaluationDomain, PreconditionError
from .linalg import (
    Composition,
    DiffusionTable,
    bott_duffin_array,
    friction_array,
    l_basis,
    make_composition,
    projector_arrays,
)
from .rng import XorShift64Star

MODEL_KINDS = ("classic-ms", "pvd", "tumor", "porous-medium", "molar-mass")


def _positive(c, what):
    c = np.asarray(c, dtype=float)
    if not c.min(initial=np.inf) > 0.0:
        raise EvaluationDomain(f"{what} requires c > 0")
    return c


@dataclass(frozen=True)
class EntropyModel:
    """Per-species free energy with derivatives and the associated pressure.

    ``h0`` is the continuous extension h(0), or None when h is unbounded at 0.
    All callables are vectorized over numpy arrays.
    """

    name: str
    h_fn: Callable
    dh_fn: Callable
    d2h_fn: Callable
    d3h_fn: Callable
    p_fn: Callable
    dp_fn: Callable
    d2p_fn: Callable
    h0: Optional[float] = 0.0
    params: Dict[str, float] = field(default_factory=dict)

    def h(self, c):
        c = np.asarray(c, dtype=float)
        mn = c.min(initial=np.inf)
        if mn > 0.0:
            return self.h_fn(c)
        if mn < 0.0:
            raise EvaluationDomain(f"{self.name}: h undefined for c < 0")
        zero = c == 0.0
        if np.any(zero):
            if self.h0 is None:
                raise EvaluationDomain(f"{self.name}: h has no finite value at c = 0")
            safe = np.where(zero, 1.0, c)
            return np.where(zero, self.h0, self.h_fn(safe))
        return self.h_fn(c)

    def dh(self, c):
        return self.dh_fn(_positive(c, f"{self.name}: h'"))

    def d2h(self, c):
        return self.d2h_fn(_positive(c, f"{self.name}: h''"))

    def d3h(self, c):
        return self.d3h_fn(_positive(c, f"{self.name}: h'''"))

    def p(self, c):
        return self.p_fn(_positive(c, f"{self.name}: p"))

    def dp(self, c):
        return self.dp_fn(_positive(c, f"{self.name}: p'"))

    def d2p(self, c):
        return self.d2p_fn(_positive(c, f"{self.name}: p''"))


def boltzmann_entropy() -> EntropyModel:
    """h(c) = c (log c - 1); pressure p(c) = c."""
    return EntropyModel(
        name="boltzmann",
        h_fn=lambda c: c * (np.log(c) - 1.0),
        dh_fn=np.log,
        d2h_fn=lambda c: 1.0 / c,
        d3h_fn=lambda c: -1.0 / c**2,
        p_fn=lambda c: np.array(c, dtype=float),
        dp_fn=np.ones_like,
        d2p_fn=np.zeros_like,
        h0=0.0,
    )


def molar_boltzmann_entropy(mass) -> EntropyModel:
    """Boltzmann entropy of the molar concentration rho/M, written in rho."""
    mass = float(mass)
    if not mass > 0.0:
        raise PreconditionError("molar mass must be positive")
    return EntropyModel(
        name=f"molar-boltzmann(M={mass:g})",
        h_fn=lambda r: (r / mass) * (np.log(r / mass) - 1.0),
        dh_fn=lambda r: np.log(r / mass) / mass,
        d2h_fn=lambda r: 1.0 / (mass * r),
        d3h_fn=lambda r: -1.0 / (mass * r**2),
        p_fn=lambda r: r / mass,
        dp_fn=lambda r: np.full_like(r, 1.0 / mass),
        d2p_fn=np.zeros_like,
        h0=0.0,
        params={"mass": mass},
    )


def porous_entropy(gamma) -> EntropyModel:
    """h(c) = c^gamma / (gamma - 1); pressure p(c) = c^gamma."""
    g = float(gamma)
    if not g > 1.0:
        raise PreconditionError("porous-medium entropy needs gamma > 1")
    return EntropyModel(
        name=f"porous(gamma={g:g})",
        h_fn=lambda c: c**g / (g - 1.0),
        dh_fn=lambda c: g * c ** (g - 1.0) / (g - 1.0),
        d2h_fn=lambda c: g * c ** (g - 2.0),
        d3h_fn=lambda c: g * (g - 2.0) * c ** (g - 3.0),
        p_fn=lambda c: c**g,
        dp_fn=lambda c: g * c ** (g - 1.0),
        d2p_fn=lambda c: g * (g - 1.0) * c ** (g - 2.0),
        h0=0.0,
        params={"gamma": g},
    )


def relative_entropy_density(model: EntropyModel, c, cbar):
    """h(c|cbar) = h(c) - h(cbar) - h'(cbar)(c - cbar), vectorized."""
    cbar = np.asarray(cbar, dtype=float)
    if np.any(cbar <= 0.0):
        raise EvaluationDomain("relative entropy needs cbar > 0")
    c = np.asarray(c, dtype=float)
    return model.h(c) - model.h(cbar) - model.dh(cbar) * (c - cbar)


@dataclass(frozen=True)
class PointwiseBounds:
    lhs: float
    bound1: float
    bound2: float
    margin: float


def pointwise_bound_check(c, cbar) -> PointwiseBounds:
    """Compare c log(c/cbar) - (c - cbar) with (c-cbar)^2/2 and (sqrt c - sqrt cbar)^2."""
    lhs = float(relative_entropy_density(boltzmann_entropy(), c, cbar))
    b1 = 0.5 * (c - cbar) ** 2
    b2 = (math.sqrt(c) - math.sqrt(cbar)) ** 2
    return PointwiseBounds(lhs, b1, b2, min(lhs - b1, lhs - b2))


def relenes_constant(model: EntropyModel, m, step=1e-3):
    """Grid minimum of h(c|cbar)/(c - cbar)^2 over c in [0,1], cbar in [m,1].

    Pairs with |c - cbar| < 1e-6 are replaced by the Taylor limit h''(cbar)/2.
    """
    if not 0.0 < m <= 1.0:
        raise PreconditionError("m must lie in (0, 1]")
    c = np.linspace(0.0, 1.0, int(round(1.0 / step)) + 1)
    k = int(round((1.0 - m) / step))
    cbar = np.linspace(m, 1.0, k + 1) if k > 0 else np.array([1.0])
    cc, bb = np.meshgrid(c, cbar, indexing="ij")
    diff = cc - bb
    far = np.abs(diff) >= 1e-6
    ratio = relative_entropy_density(model, cc[far], bb[far]) / diff[far] ** 2
    limit = 0.5 * model.d2h(cbar)
    return float(min(ratio.min(initial=np.inf), limit.min()))


@dataclass(frozen=True)
class HypothesisAudit:
    k1_estimate: float
    k2_estimate: float
    samples: int
    passed: bool


def audit_hypothesis_h(model: EntropyModel, grid_points=2000, delta=1e-6) -> HypothesisAudit:
    """Estimate sup c h'' and sup |p''|/h'' on (delta, 1]."""
    half = max(grid_points // 2, 2)
    grid = np.union1d(np.geomspace(delta, 1.0, half), np.linspace(delta, 1.0, grid_points - half))
    ch2 = grid * model.d2h(grid)
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.abs(model.d2p(grid)) / model.d2h(grid)
    positive = bool(np.all(ch2 > 0.0))
    k1 = float(ch2.max())
    k2 = float(q.max()) if positive else float("inf")
    ok = positive and math.isfinite(k1) and math.isfinite(k2)
    return HypothesisAudit(k1, k2, int(grid.size), ok)


def tumor_w_matrix(c, beta, theta):
    """W(c) of the avascular tumor model: species gradients to pressure terms."""
    cv = c.values if isinstance(c, Composition) else np.asarray(c, dtype=float)
    if cv.shape[-1] != 3:
        raise PreconditionError("the tumor model has exactly three species")
    if not beta > 0.0 or theta < 0.0:
        raise PreconditionError("tumor model needs beta > 0 and theta >= 0")
    c1, c2, c3 = cv[..., 0], cv[..., 1], cv[..., 2]
    bt = beta * theta
    w = np.zeros(cv.shape[:-1] + (3, 3))
    w[..., 0, 0] = 2 * c1 * (1 - c1) - bt * c1 * c2**2
    w[..., 0, 1] = -2 * beta * c1 * c2 * (1 + theta * c1)
    w[..., 1, 0] = -2 * c1 * c2 + bt * (1 - c2) * c2**2
    w[..., 1, 1] = 2 * beta * c2 * (1 - c2) * (1 + theta * c1)
    w[..., 2, 0] = -2 * c1 * c3 - bt * c3 * c2**2
    w[..., 2, 1] = -2 * beta * c3 * c2 * (1 + theta * c1)
    return w


def tumor_mobility(c, beta, theta, k: Optional[DiffusionTable] = None, floor=1e-12):
    """R(c) = A^BD(c) diag(1/sqrt c) W(c) diag(sqrt c) P_L with D_ij = 1/k_ij."""
    cv = c.values if isinstance(c, Composition) else np.asarray(c, dtype=float)
    if np.any(cv < floor):
        raise PreconditionError(f"tumor mobility needs all c_i >= {floor:g}")
    k = DiffusionTable.constant(3, 1.0) if k is None else k
    sq = np.sqrt(cv)
    a = friction_array(cv, k.entries)  # 1/D_ij = k_ij
    abd = bott_duffin_array(a, sq)
    p_l, _ = projector_arrays(sq)
    w = tumor_w_matrix(cv, beta, theta)
    inner = w * (sq[..., None, :] / sq[..., :, None])
    return abd @ inner @ p_l


def molar_mass_diffusivities(rho, masses, table: Optional[DiffusionTable] = None):
    """Effective D~_ij(rho) = (sum_k rho_k/M_k)^2 M_i M_j D_ij (D_ij = 1 if no table)."""
    rho = np.asarray(rho, dtype=float)
    masses = np.asarray(masses, dtype=float)
    if np.any(masses <= 0.0):
        raise PreconditionError("molar masses must be positive")
    total = rho @ (1.0 / masses)
    d = np.outer(masses, masses)
    if table is not None:
        d = d * table.entries
    return total[..., None, None] ** 2 * d


def molar_mass_friction(rho, masses, table: Optional[DiffusionTable] = None):
    """A~(rho): the friction matrix built from the mass-fraction diffusivities."""
    rv = rho.values if isinstance(rho, Composition) else make_composition(rho).values
    masses = np.asarray(masses, dtype=float)
    if masses.shape != rv.shape:
        raise PreconditionError("need one molar mass per species")
    dt = molar_mass_diffusivities(rv, masses, table)
    inv = np.zeros_like(dt)
    off = ~np.eye(rv.size, dtype=bool)
    inv[off] = 1.0 / dt[off]
    return friction_array(rv, inv)


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    entropies: Sequence[EntropyModel]
    table: DiffusionTable
    params: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise PreconditionError(f"unknown model kind {self.kind!r}")
        if len(self.entropies) != self.table.n:
            raise PreconditionError("need one entropy per species")
        object.__setattr__(self, "entropies", tuple(self.entropies))

    @property
    def n(self):
        return self.table.n

    @property
    def uses_sqrt_form(self):
        """Classic Maxwell-Stefan is integrated in the sqrt(c) formulation."""
        return self.kind == "classic-ms"

    @property
    def has_friction(self):
        return self.kind != "tumor"

    def floor(self):
        """Smallest admissible entry for the mobility evaluation."""
        return 0.0 if self.kind == "classic-ms" else 1e-12

    def entropy_density(self, c):
        """Sum_i h_i(c_i) over the last axis."""
        c = np.asarray(c, dtype=float)
        return sum(e.h(c[..., i]) for i, e in enumerate(self.entropies))

    def dh(self, c):
        c = np.asarray(c, dtype=float)
        return np.stack([e.dh(c[..., i]) for i, e in enumerate(self.entropies)], axis=-1)

    def d2h(self, c):
        c = np.asarray(c, dtype=float)
        return np.stack([e.d2h(c[..., i]) for i, e in enumerate(self.entropies)], axis=-1)

    def friction(self, c):
        """The friction matrix B(c) (stackable); undefined for the tumor model."""
        c = np.asarray(c, dtype=float)
        if self.kind in ("classic-ms", "porous-medium"):
            return friction_array(c, self.table.inverse())
        if self.kind == "pvd":
            a = friction_array(c, self.table.inverse())
            return bott_duffin_array(a, np.sqrt(c))
        if self.kind == "molar-mass":
            masses = np.asarray(self.params["masses"], dtype=float)
            dt = molar_mass_diffusivities(c, masses, self.params.get("d_table"))
            eye = np.eye(self.n, dtype=bool)
            inv = np.where(eye, 0.0, 1.0 / np.where(eye, 1.0, dt))
            return friction_array(c, inv)
        raise PreconditionError("the tumor model is defined through R(c), not a friction matrix")

    def mobility_core(self, c):
        """G(c) with sqrt(c_i) u_i = -sum_j G_ij sqrt(c_j) grad h'_j (stackable)."""
        c = np.asarray(c, dtype=float)
        if self.kind == "pvd":
            return friction_array(c, self.table.inverse())
        if self.kind == "tumor":
            return tumor_mobility(
                c, self.params["beta"], self.params["theta"], self.params.get("k"), floor=0.0
            )
        return bott_duffin_array(self.friction(c), np.sqrt(c))

    def mu(self):
        """Lower bound for the nonzero eigenvalues of B(c) on the simplex."""
        if self.kind in ("classic-ms", "porous-medium"):
            return self.table.mu()
        if self.kind == "pvd":
            return self.table.lam()
        if self.kind == "molar-mass":
            masses = np.asarray(self.params["masses"], dtype=float)
            d = np.outer(masses, masses) / masses.min() ** 2
            table = self.params.get("d_table")
            if table is not None:
                d = d * table.entries
            return float(1.0 / d[~np.eye(self.n, dtype=bool)].max())
        return None


def make_model(kind, n=None, d=None, gamma=None, beta=None, theta=None, k=None, masses=None):
    """Registry lookup: build a ModelSpec from its string identifier and parameters.

    ``d`` and ``k`` are DiffusionTables or upper-triangular lists. For pvd the
    table holds D_ij = 1/a_ij; for the tumor model ``k`` holds the friction
    coefficients k_ij.
    """

    def table_of(x, default=None):
        if x is None:
            if default is None:
                raise PreconditionError(f"{kind} needs a diffusion table")
            return DiffusionTable.constant(n, default)
        if isinstance(x, DiffusionTable):
            return x
        return DiffusionTable.from_upper(x, n)

    if kind not in MODEL_KINDS:
        raise PreconditionError(f"unknown model {kind!r}; choose from {', '.join(MODEL_KINDS)}")
    if n is None:
        for x in (d, k):
            if isinstance(x, DiffusionTable):
                n = x.n
        if masses is not None:
            n = len(masses)
        if kind == "tumor":
            n = 3
    if n is None:
        raise PreconditionError("species count n is required")
    if kind in ("classic-ms", "pvd"):
        table = table_of(d)
        return ModelSpec(kind, [boltzmann_entropy()] * n, table)
    if kind == "porous-medium":
        if gamma is None:
            raise PreconditionError("porous-medium needs gamma")
        return ModelSpec(kind, [porous_entropy(gamma)] * n, table_of(d), {"gamma": float(gamma)})
    if kind == "tumor":
        if n != 3:
            raise PreconditionError("the tumor model has exactly three species")
        if beta is None or theta is None:
            raise PreconditionError("tumor needs beta and theta")
        if not beta > 0.0 or theta < 0.0:
            raise PreconditionError("tumor model needs beta > 0 and theta >= 0")
        kt = table_of(k, 1.0)
        # A(c) is built with D_ij = 1/k_ij
        table = DiffusionTable(1.0 / np.where(np.eye(3, dtype=bool), 1.0, kt.entries))
        return ModelSpec(
            kind, [boltzmann_entropy()] * 3, table, {"beta": float(beta), "theta": float(theta), "k": kt}
        )
    if masses is None or len(masses) != n:
        raise PreconditionError("molar-mass needs one mass per species")
    d_table = None if d is None else table_of(d)
    ents = [molar_boltzmann_entropy(mm) for mm in masses]
    return ModelSpec(
        kind,
        ents,
        DiffusionTable.constant(n, 1.0) if d_table is None else d_table,
        {"masses": tuple(float(mm) for mm in masses), "d_table": d_table},
    )


@dataclass(frozen=True)
class ClauseResult:
    passed: bool
    margin: float
    detail: str = ""

    def __post_init__(self):
        object.__setattr__(self, "passed", bool(self.passed))
        object.__setattr__(self, "margin", float(self.margin))


@dataclass(frozen=True)
class AssumptionsReport:
    model: str
    samples: int
    floor: float
    mu: Optional[float]
    clauses: Dict[str, ClauseResult]

    @property
    def passed(self):
        return all(r.passed for r in self.clauses.values())


def _sample_pair(rng, n, floor, radius=1e-3):
    c = rng.simplex_floor(n, floor)
    step = rng.normals(n)
    step -= step.mean()
    nrm = np.linalg.norm(step)
    step = step / nrm * radius * rng.uniform(0.1, 1.0) if nrm > 0 else step
    c2 = c + step
    if np.any(c2 < floor):
        c2 = c - step
    if np.any(c2 < floor):
        c2 = c
    return c, c2


def audit_assumptions_b(spec: ModelSpec, samples=500, floor=0.05, seed=None) -> AssumptionsReport:
    """Sample the structural hypotheses on the friction matrix (or R for the tumor model).

    B1 symmetry and kernel/range structure, B2 boundedness with an empirical
    Lipschitz quotient, B3 a Frobenius envelope, B4 the lower eigenvalue bound
    on L. Failures are reported, not raised.
    """
    if not floor > 0.0:
        raise PreconditionError("floor must be positive")
    rng = XorShift64Star(seed if seed is not None else 1)
    n = spec.n
    tumor = spec.kind == "tumor"
    mu = spec.mu()
    sym, ker, rng_min, bound, lip, frob, eig_min = 0.0, 0.0, np.inf, 0.0, 0.0, 0.0, np.inf
    for _ in range(samples):
        c, c2 = _sample_pair(rng, n, floor)
        b = spec.mobility_core(c) if tumor else spec.friction(c)
        b2 = spec.mobility_core(c2) if tumor else spec.friction(c2)
        sq = np.sqrt(c)
        scale = max(1.0, np.abs(b).max())
        sym = max(sym, np.abs(b - b.T).max() / scale)
        ker = max(ker, np.abs(b @ sq).max() / scale)
        q = l_basis(sq)
        r = q.T @ b @ q
        ev = np.linalg.eigvalsh(0.5 * (r + r.T))
        rng_min = min(rng_min, ev.min())
        eig_min = min(eig_min, ev.min())
        bound = max(bound, np.abs(b).max())
        dist = np.abs(c2 - c).max()
        if dist > 0:
            lip = max(lip, np.abs(b2 - b).max() / dist)
        frob = max(frob, np.linalg.norm(b))
    clauses = {
        "B1-symmetry": ClauseResult(sym <= 1e-12, -sym, f"max relative asymmetry {sym:.3e}"),
        "B1-kernel": ClauseResult(ker <= 1e-10 and rng_min > 0.0, min(-ker, rng_min),
                                  f"max |B sqrt(c)| {ker:.3e}, min eigenvalue on L {rng_min:.3e}"),
        "B2-lipschitz": ClauseResult(bool(np.isfinite(bound) and np.isfinite(lip)), -lip,
                                     f"max |B_ij| {bound:.4g}, Lipschitz quotient {lip:.4g}"),
        "B3-frobenius": ClauseResult(bool(np.isfinite(frob)), -frob, f"gamma({floor:g}) ~ {frob:.6g}"),
    }
    if mu is not None:
        clauses["B4-eigenvalues"] = ClauseResult(eig_min >= mu - 1e-9, eig_min - mu,
                                                 f"min nonzero eigenvalue {eig_min:.6g} vs mu {mu:.6g}")
    else:
        clauses["B4-eigenvalues"] = ClauseResult(eig_min > 0.0, eig_min,
                                                 f"Rayleigh infimum on L {eig_min:.6g}")
    return AssumptionsReport(spec.kind, samples, floor, mu, clauses)


def rayleigh_infimum_on_l(matrix_fn, c, samples, rng):
    """Sampled infimum of z^T R z / |P_L z|^2 over random z."""
    sq = np.sqrt(c)
    r = matrix_fn(c)
    p_l, _ = projector_arrays(sq)
    best = np.inf
    for _ in range(samples):
        z = rng.normals(len(c))
        pz = p_l @ z
        den = pz @ pz
        if den > 1e-14:
            best = min(best, (z @ r @ z) / den)
    return best


def frobenius_envelope(spec: ModelSpec, floor, samples=2000, seed=7):
    """Sampled sup of ||B(c)||_F over the simplex with all entries >= floor."""
    rng = XorShift64Star(seed)
    n = spec.n
    pts = [rng.simplex_floor(n, floor) for _ in range(samples)]
    # corners of the restricted simplex
    for i in range(n):
        v = np.full(n, floor)
        v[i] = 1.0 - (n - 1) * floor
        pts.append(v)
    b = spec.friction(np.array(pts))
    return float(np.sqrt((b**2).sum(axis=(-2, -1))).max())
