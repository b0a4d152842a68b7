"""Entropy and relative-entropy functionals evaluated on solver fields.

Gradients are face differences and integrals use the midpoint rule, matching
the finite-volume scheme. Two mobility conventions appear: the classic model
works with g = grad sqrt(c) and the quadratic form 4 g.A^BD g, the
generalized models with y_j = sqrt(c_j) grad h'_j and y.G y.
"""

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import GridMismatch, NonPositiveH0, PreconditionError
from .linalg import DiffusionTable, bott_duffin_array, friction_array, projector_arrays
from .models import ModelSpec, frobenius_envelope, relative_entropy_density
from .solver import Field, Trajectory, _face_terms


@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    entropy: float
    dissipation: float
    rel_entropy: Optional[float]
    rs_min: float
    mass: Tuple[float, ...]
    min_c: float
    sum_dev: float
    dt: float = 0.0


def entropy(field: Field, model: ModelSpec) -> float:
    return float(model.entropy_density(field.data).sum() * field.grid.dx)


def _check_pair(field: Field, ref: Field):
    if field.grid != ref.grid or field.data.shape != ref.data.shape:
        raise GridMismatch("fields live on different grids")
    if abs(field.time - ref.time) > 1e-12 * max(1.0, abs(ref.time)):
        raise GridMismatch(f"fields are at different times ({field.time!r} vs {ref.time!r})")


def relative_entropy(field: Field, ref: Field, model: ModelSpec) -> float:
    """Sum over species and cells of h_i(c_i | cbar_i) dx."""
    _check_pair(field, ref)
    if ref.data.min() < 1e-10:
        raise PreconditionError("reference field must be strictly interior (min >= 1e-10)")
    total = 0.0
    for i, e in enumerate(model.entropies):
        total += relative_entropy_density(e, field.data[:, i], ref.data[:, i]).sum()
    return float(total * field.grid.dx)


def face_quantities(field: Field, model: ModelSpec):
    """Per-face (w, v): w = sqrt(c) u (flux / sqrt c) and v the driving vector.

    For the classic model v = 2 grad sqrt(c) and w = -A^BD v; otherwise
    v_j = sqrt(c_j) grad h'_j and w = -G v. The dissipation density is v.(-w).
    """
    _, _, core, grad, _ = _face_terms(field.data, field.grid.dx, model)
    w = -np.einsum("fij,fj->fi", core, grad)
    return w, grad, core


def dissipation_density(field: Field, model: ModelSpec):
    w, v, _ = face_quantities(field, model)
    return -np.einsum("fi,fi->f", w, v)


def dissipation(field: Field, model: ModelSpec) -> float:
    """Discrete entropy dissipation: sum over interior faces of the density times dx."""
    return float(dissipation_density(field, model).sum() * field.grid.dx)


def entropy_production_rs(field: Field, model: ModelSpec):
    """Per-face r_S = -(J/sqrt c) . P_L (sqrt(c) grad mu) and its minimum."""
    w, v, _ = face_quantities(field, model)
    cf = 0.5 * (field.data[:-1] + field.data[1:])
    p_l, _ = projector_arrays(np.sqrt(cf))
    rs = -np.einsum("fi,fij,fj->f", w, p_l, v)
    return rs, float(rs.min()) if rs.size else 0.0


def velocity_bound_margin(c, grad_sqrt_c, table: DiffusionTable) -> float:
    """sum_i c_i |u_i|^2 - (4/mu^2) sum_i |grad sqrt c_i|^2 at one state."""
    c = np.asarray(c, dtype=float)
    g = np.asarray(grad_sqrt_c, dtype=float)
    a = friction_array(c, table.inverse())
    w = -2.0 * bott_duffin_array(a, np.sqrt(c)) @ g
    mu = table.mu()
    return float(w @ w - 4.0 / mu**2 * (g @ g))


def velocity_bound_check(field: Field, table: DiffusionTable) -> float:
    """Worst face margin of the velocity bound (<= 1e-10 expected)."""
    data, dx = field.data, field.grid.dx
    cf = 0.5 * (data[:-1] + data[1:])
    g = (np.sqrt(data[1:]) - np.sqrt(data[:-1])) / dx
    a = friction_array(cf, table.inverse())
    w = -2.0 * np.einsum("fij,fj->fi", bott_duffin_array(a, np.sqrt(cf)), g)
    mu = table.mu()
    margin = (w * w).sum(axis=1) - 4.0 / mu**2 * (g * g).sum(axis=1)
    return float(margin.max())


def eta_min(model: ModelSpec, m, step=1e-4):
    """min over species and c in [m/2, 1] of h''(c), on a grid of spacing ``step``."""
    lo = m / 2.0
    k = max(int(math.ceil((1.0 - lo) / step)), 1)
    grid = np.linspace(lo, 1.0, k + 1)
    return float(min(e.d2h(grid).min() for e in model.entropies))


@dataclass(frozen=True)
class LowerBoundConstants:
    eta: float
    zeta: float
    gamma_hat: float
    lam: float
    beta: float


_envelope_cache = {}


def lower_bound_constants(model: ModelSpec, m) -> LowerBoundConstants:
    """beta(m) = zeta(m) lambda(m/2) / 2 with zeta = m^2 eta^2 / 32, lambda = 1/(gamma n + 1)."""
    if not model.has_friction:
        raise PreconditionError("the dissipation lower bound needs a friction matrix B(c)")
    key = (id(model), float(m))
    if key not in _envelope_cache:
        _envelope_cache[key] = (model, frobenius_envelope(model, m / 2.0))
    gamma_hat = _envelope_cache[key][1]
    eta = eta_min(model, m)
    zeta = m * m * eta * eta / 32.0
    lam = 1.0 / (gamma_hat * model.n + 1.0)
    return LowerBoundConstants(eta, zeta, gamma_hat, lam, 0.5 * zeta * lam)


@dataclass(frozen=True)
class LowerBoundCheck:
    lhs: float
    rhs: float
    passed: bool


def dissipation_lower_bound_check(c, gradients, model: ModelSpec, m) -> LowerBoundCheck:
    """Compare sum B^BD_ij Z_i Z_j, Z_i = sqrt(c_i) h''(c_i) grad c_i, with 2 beta(m) |grad c|^2."""
    c = np.asarray(c, dtype=float)
    grad = np.asarray(gradients, dtype=float)
    if c.min() < m / 2.0 - 1e-14:
        raise PreconditionError(f"all entries must be >= m/2 = {m / 2.0:g}")
    if abs(c.sum() - 1.0) > 1e-9:
        raise PreconditionError("composition must lie on the simplex")
    if abs(grad.sum()) > 1e-10 * max(1.0, np.abs(grad).max()):
        raise PreconditionError("gradients must sum to zero")
    const = lower_bound_constants(model, m)
    z = np.sqrt(c) * model.d2h(c) * grad
    lhs = float(z @ model.mobility_core(c) @ z)
    rhs = float(2.0 * const.beta * (grad @ grad))
    return LowerBoundCheck(lhs, rhs, lhs >= rhs - 1e-10)


@dataclass(frozen=True)
class CutoffFn:
    """C^2 cutoff: psi = 0 on [0, m/2], 1 on [m/2 + eps, 1], quintic blend between."""

    m: float
    eps: float

    @property
    def lo(self):
        return self.m / 2.0

    def _r(self, s):
        r = np.clip((np.asarray(s, dtype=float) - self.lo) / self.eps, 0.0, 1.0)
        # snap rounding residue at the ends so psi', psi'' vanish there exactly
        return np.where(r > 1.0 - 1e-12, 1.0, np.where(r < 1e-12, 0.0, r))

    def psi(self, s):
        r = self._r(s)
        return np.clip(r**3 * (10.0 - 15.0 * r + 6.0 * r * r), 0.0, 1.0)

    def dpsi(self, s):
        r = self._r(s)
        return 30.0 * r * r * (1.0 - r) ** 2 / self.eps

    def d2psi(self, s):
        r = self._r(s)
        return 60.0 * r * (1.0 - r) * (1.0 - 2.0 * r) / self.eps**2

    def chi(self, c):
        """Product of psi over the species axis (last axis)."""
        return np.prod(self.psi(c), axis=-1)


def build_cutoff(m, eps=None) -> CutoffFn:
    eps = m / 4.0 if eps is None else eps
    if not (m > 0.0 and eps > 0.0 and m / 2.0 + eps < 1.0):
        raise PreconditionError("cutoff needs m > 0, eps > 0 and m/2 + eps < 1")
    return CutoffFn(float(m), float(eps))


def split_dissipation(field: Field, ref: Field, model: ModelSpec, cutoff: CutoffFn):
    """(integral of (1-chi) Z.B^BD Z, integral of chi |grad(c - cbar)|^2) over faces.

    Z_j = sqrt(c_j) grad h'_j(c_j) at the face average. For the classic model
    Z = 2 grad sqrt(c), which is the same quantity written without logarithms.
    """
    _check_pair(field, ref)
    dx = field.grid.dx
    w, v, core = face_quantities(field, model)
    form = -np.einsum("fi,fi->f", w, v)
    cf = 0.5 * (field.data[:-1] + field.data[1:])
    chi = cutoff.chi(cf)
    diff = field.data - ref.data
    gd = (diff[1:] - diff[:-1]) / dx
    low = float(((1.0 - chi) * form).sum() * dx)
    high = float((chi * (gd * gd).sum(axis=1)).sum() * dx)
    return low, high


def record(field: Field, model: ModelSpec, ref: Optional[Field] = None, dt=0.0) -> DiagnosticsRecord:
    _, rs_min = entropy_production_rs(field, model)
    return DiagnosticsRecord(
        t=field.time,
        entropy=entropy(field, model),
        dissipation=dissipation(field, model),
        rel_entropy=None if ref is None else relative_entropy(field, ref, model),
        rs_min=rs_min,
        mass=tuple(float(x) for x in field.mass()),
        min_c=field.min_c(),
        sum_dev=field.sum_deviation(),
        dt=dt,
    )


@dataclass(frozen=True)
class RelEntropyReport:
    epsilons: List[float]
    h0: List[float]
    sup_ratio: List[float]
    fitted_order: float
    histories: List[List[float]]
    zero_pair_max: Optional[float] = None

    def ratio_spread(self):
        return max(self.sup_ratio) / min(self.sup_ratio)


def check_halving(eps):
    if len(eps) < 3:
        raise PreconditionError("need at least three epsilons")
    for a, b in zip(eps, eps[1:]):
        if not (b > 0 and abs(a / b - 2.0) <= 1e-9):
            raise PreconditionError("each epsilon must halve the previous one")


def gronwall_report(pairs: Sequence[Tuple[float, Trajectory, Trajectory]], model: ModelSpec) -> RelEntropyReport:
    """Relative-entropy history for each (epsilon, perturbed, reference) run pair.

    The epsilon = 0 pair, if present, is excluded from the fit and reported as
    the largest |H(t)| along its history.
    """
    zero = None
    eps, h0s, ratios, hists = [], [], [], []
    for epsilon, pert, ref in pairs:
        if len(pert.snapshots) != len(ref.snapshots):
            raise GridMismatch("paired runs have different snapshot counts")
        hist = [relative_entropy(a, b, model) for a, b in zip(pert.snapshots, ref.snapshots)]
        if epsilon == 0.0:
            zero = max(abs(h) for h in hist)
            continue
        if not hist[0] > 0.0:
            raise NonPositiveH0(f"epsilon={epsilon!r} produced H(0) = {hist[0]!r}")
        eps.append(float(epsilon))
        h0s.append(hist[0])
        ratios.append(max(hist) / hist[0])
        hists.append(hist)
    order = np.argsort(eps)[::-1]
    eps = [eps[i] for i in order]
    h0s = [h0s[i] for i in order]
    ratios = [ratios[i] for i in order]
    hists = [hists[i] for i in order]
    check_halving(eps)
    slope = float(np.polyfit(np.log(eps), np.log(h0s), 1)[0])
    return RelEntropyReport(eps, h0s, ratios, slope, hists, zero)
