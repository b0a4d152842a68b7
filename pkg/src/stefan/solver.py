"""Cell-centered finite-volume evolution of the cross-diffusion system in 1-D.

Fluxes live on cell faces and are built from the Bott-Duffin mobility at the
arithmetic face average, so the species fluxes sum to zero at every face and
the simplex constraint is transported exactly. Time stepping is explicit Euler
with step rejection on negativity, simplex drift or entropy growth.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Sequence, Union

import numpy as np

from .errors import (
    EvaluationDomain,
    PreconditionError,
    SimplexViolation,
    SingularSystem,
    StepStalled,
)
from .linalg import bott_duffin_array, friction_array
from .models import ModelSpec
from .rng import XorShift64Star

log = logging.getLogger(__name__)

SUM_TOL = 1e-12
NEG_TOL = 1e-14
GEN_FLOOR = 1e-12


@dataclass(frozen=True)
class Grid1D:
    cells: int
    length: float = 1.0

    def __post_init__(self):
        if int(self.cells) != self.cells or self.cells < 4:
            raise PreconditionError("grid needs an integer number of cells >= 4")
        if not self.length > 0.0:
            raise PreconditionError("domain length must be positive")

    @property
    def dx(self):
        return self.length / self.cells

    @property
    def centers(self):
        return (np.arange(self.cells) + 0.5) * self.dx


@dataclass(frozen=True)
class Field:
    grid: Grid1D
    data: np.ndarray
    time: float = 0.0

    @property
    def n(self):
        return self.data.shape[1]

    def mass(self):
        """Per-species integral (midpoint rule)."""
        return self.data.sum(axis=0) * self.grid.dx

    def min_c(self):
        return float(self.data.min())

    def sum_deviation(self):
        return float(np.abs(self.data.sum(axis=1) - 1.0).max())


def _validated(data, tol_sum=1e-9):
    data = np.array(data, dtype=float)
    if data.ndim != 2 or data.shape[1] < 2:
        raise PreconditionError("field data must have shape (cells, species >= 2)")
    bad = ~np.all(np.isfinite(data), axis=1) | np.any(data < -1e-12, axis=1) | np.any(data > 1.0 + 1e-12, axis=1)
    s = data.sum(axis=1)
    bad |= np.abs(s - 1.0) > tol_sum
    if np.any(bad):
        k = int(np.flatnonzero(bad)[0])
        raise SimplexViolation(f"cell {k} is not on the simplex: {data[k].tolist()}", cell=k)
    data = np.clip(data, 0.0, None)
    off = s != 1.0
    data[off] /= data[off].sum(axis=1, keepdims=True)
    data.setflags(write=False)
    return data


def make_field(grid: Grid1D, data, time=0.0) -> Field:
    data = _validated(data)
    if data.shape[0] != grid.cells:
        raise PreconditionError(f"expected {grid.cells} cells, got {data.shape[0]}")
    return Field(grid, data, float(time))


Profile = Union[Callable[[np.ndarray], np.ndarray], Sequence[Callable[[np.ndarray], np.ndarray]]]


def init_field(grid: Grid1D, profile: Profile) -> Field:
    """Evaluate a closed-form initial profile at the cell centers.

    ``profile`` is either one callable x -> (cells, n) array or one callable per
    species.
    """
    x = grid.centers
    if callable(profile):
        data = np.asarray(profile(x), dtype=float)
    else:
        data = np.stack([np.broadcast_to(np.asarray(f(x), dtype=float), x.shape) for f in profile], axis=1)
    return make_field(grid, data)


def cosine_profile(base, amplitude, wavenumber=1, length=1.0):
    """c_i(x) = base_i + amplitude_i cos(k pi x / L); amplitudes must sum to zero."""
    base = np.asarray(base, dtype=float)
    amplitude = np.asarray(amplitude, dtype=float)
    if base.shape != amplitude.shape:
        raise PreconditionError("base and amplitude need one entry per species")
    if abs(amplitude.sum()) > 1e-12:
        raise PreconditionError("cosine amplitudes must sum to zero")

    def profile(x):
        return base[None, :] + amplitude[None, :] * np.cos(wavenumber * np.pi * x / length)[:, None]

    return profile


def random_smooth_profile(base, modes, margin, seed, length=1.0):
    """Interior profile base + sum_k a_k cos(k pi x / L) with zero-sum random a_k.

    Amplitudes are scaled so every entry stays >= ``margin``.
    """
    base = np.asarray(base, dtype=float)
    n = base.size
    rng = XorShift64Star(seed)
    coef = np.array([rng.uniforms(n, -1.0, 1.0) for _ in range(modes)])
    coef -= coef.mean(axis=1, keepdims=True)
    coef /= np.arange(1, modes + 1)[:, None]
    bound = np.abs(coef).sum(axis=0)
    room = base - margin
    if np.any(room <= 0.0):
        raise PreconditionError("base composition must exceed the margin")
    scale = np.min(room / np.where(bound > 0, bound, np.inf))
    coef *= scale

    def profile(x):
        k = np.arange(1, modes + 1)
        basis = np.cos(np.pi * np.outer(x, k) / length)
        return base[None, :] + basis @ coef

    return profile


@dataclass(frozen=True)
class SolverConfig:
    model: ModelSpec
    dt_init: float
    t_end: float
    safety: float = 0.4
    max_rejects: int = 40
    entropy_tolerance: float = 1e-10
    positivity_floor: float = 0.0

    def __post_init__(self):
        if not self.dt_init > 0.0:
            raise PreconditionError("dt_init must be positive")
        if not self.t_end >= 0.0:
            raise PreconditionError("t_end must be nonnegative")
        if not 0.0 < self.safety <= 1.0:
            raise PreconditionError("safety must lie in (0, 1]")


@dataclass(frozen=True)
class StepReport:
    dt_used: float
    rejected_count: int
    min_c: float
    sum_deviation_max: float
    entropy_change: float
    dt_next: float
    time: float
    entropy: float


@dataclass
class FaceState:
    """Face fluxes plus what the step controller needs from the same evaluation."""

    fluxes: np.ndarray
    stiffness: float


def _face_terms(data, dx, model: ModelSpec):
    left, right = data[:-1], data[1:]
    cf = 0.5 * (left + right)
    sqf = np.sqrt(cf)
    if model.uses_sqrt_form:
        core = bott_duffin_array(friction_array(cf, model.table.inverse()), sqf)
        grad = 2.0 * (np.sqrt(right) - np.sqrt(left)) / dx
        return cf, sqf, core, grad, None
    if data.min() < GEN_FLOOR:
        raise EvaluationDomain(f"{model.kind}: state below the h' floor {GEN_FLOOR:g}")
    core = model.mobility_core(cf)
    dh = model.dh(data)
    grad = sqf * (dh[1:] - dh[:-1]) / dx
    return cf, sqf, core, grad, model.d2h(data)


def face_state(data, dx, model: ModelSpec) -> FaceState:
    """Numerical fluxes on all N+1 faces (zero on the two boundary faces)."""
    data = np.asarray(data, dtype=float)
    cf, sqf, core, grad, d2h = _face_terms(data, dx, model)
    inner = -sqf * np.einsum("fij,fj->fi", core, grad)
    fluxes = np.zeros((data.shape[0] + 1, data.shape[1]))
    fluxes[1:-1] = inner
    # Frobenius norms bound the spectral norms from above
    if d2h is None:
        # diag(sqrt c) A^BD diag(1/sqrt c) is similar to A^BD
        stiff = float(np.sqrt((core * core).sum(axis=(1, 2)).max()))
    else:
        mob = sqf[:, :, None] * core * sqf[:, None, :]
        hmax = np.maximum(d2h[:-1].max(axis=1), d2h[1:].max(axis=1))
        stiff = float((np.sqrt((mob * mob).sum(axis=(1, 2))) * hmax).max())
    return FaceState(fluxes, stiff)


def face_flux(field: Field, config: SolverConfig, face: int) -> np.ndarray:
    """Flux vector through face ``face`` (0..N; faces 0 and N are the walls)."""
    cells = field.grid.cells
    if not 0 <= face <= cells:
        raise PreconditionError(f"face index must lie in 0..{cells}")
    if face in (0, cells):
        return np.zeros(field.n)
    pair = field.data[face - 1 : face + 1]
    return face_state(pair, field.grid.dx, config.model).fluxes[1]


def discrete_entropy(data, dx, model: ModelSpec):
    return float(model.entropy_density(data).sum() * dx)


def step(field: Field, config: SolverConfig, dt: float, dt_max: Optional[float] = None, entropy=None):
    """One accepted explicit Euler step; returns (new Field, StepReport).

    The trial step is halved on negativity, simplex drift above 1e-12 or
    entropy growth above the configured tolerance. After ``max_rejects``
    consecutive rejections :class:`StepStalled` is raised.
    """
    model = config.model
    dx = field.grid.dx
    data = field.data
    state = face_state(data, dx, model)
    div = (state.fluxes[1:] - state.fluxes[:-1]) / dx
    h_old = discrete_entropy(data, dx, model) if entropy is None else entropy
    clipped = dt_max is not None and dt_max < dt
    trial = min(dt, dt_max) if dt_max is not None else dt
    floor = config.positivity_floor - NEG_TOL
    rejected = 0
    while True:
        new = data - trial * div
        reason = None
        mn = new.min()
        sdev = float(np.abs(new.sum(axis=1) - 1.0).max())
        if mn < floor:
            reason = f"negative entry {mn:.3e}"
        elif not model.uses_sqrt_form and mn < GEN_FLOOR:
            reason = f"entry {mn:.3e} below the h' floor"
        elif sdev > SUM_TOL:
            reason = f"simplex drift {sdev:.3e}"
        else:
            new = np.where(new < 0.0, 0.0, new)
            h_new = discrete_entropy(new, dx, model)
            if h_new - h_old > config.entropy_tolerance:
                reason = f"entropy increase {h_new - h_old:.3e}"
        if reason is None:
            break
        rejected += 1
        log.debug("t=%.6g rejected dt=%.3e: %s", field.time, trial, reason)
        if rejected >= config.max_rejects:
            raise StepStalled(f"step stalled at t={field.time!r} after {rejected} rejections ({reason})",
                              time=field.time)
        trial *= 0.5
    cap = config.safety * dx * dx / (2.0 * state.stiffness) if state.stiffness > 0 else np.inf
    if clipped and rejected == 0:
        dt_next = min(dt, cap)
    else:
        dt_next = min(1.2 * trial, cap)
    t_new = field.time + trial
    if clipped and rejected == 0:
        t_new = field.time + dt_max
    new.setflags(write=False)
    out = Field(field.grid, new, t_new)
    report = StepReport(
        dt_used=trial,
        rejected_count=rejected,
        min_c=float(new.min()),
        sum_deviation_max=sdev,
        entropy_change=h_new - h_old,
        dt_next=dt_next,
        time=t_new,
        entropy=h_new,
    )
    return out, report


@dataclass
class Trajectory:
    snapshots: List[Field] = field(default_factory=list)
    reports: List[StepReport] = field(default_factory=list)
    snapshot_dt: List[float] = field(default_factory=list)

    @property
    def final(self):
        return self.snapshots[-1]

    @property
    def times(self):
        return [f.time for f in self.snapshots]


def run(config: SolverConfig, initial: Field, snapshot_stride: int = 1, snapshot_times=None) -> Trajectory:
    """Integrate to ``config.t_end``.

    Snapshots are taken every ``snapshot_stride`` accepted steps, at every time
    in ``snapshot_times`` (steps are clipped to land on them exactly), and at
    t_end, which is always hit exactly.
    """
    if snapshot_stride < 1:
        raise PreconditionError("snapshot_stride must be >= 1")
    t_end = config.t_end
    targets = sorted(t for t in (snapshot_times or []) if initial.time < t < t_end)
    traj = Trajectory([initial], [], [0.0])
    cur, dt, count, h = initial, config.dt_init, 0, None
    while cur.time < t_end:
        goal = targets[0] if targets else t_end
        remaining = goal - cur.time
        try:
            cur, rep = step(cur, config, dt, dt_max=remaining, entropy=h)
        except StepStalled:
            raise
        except (EvaluationDomain, SingularSystem) as exc:
            raise StepStalled(f"solver failed at t={cur.time!r}: {exc}", time=cur.time) from exc
        if rep.dt_used == remaining and rep.rejected_count == 0:
            cur = replace(cur, time=goal)
        traj.reports.append(rep)
        dt, h = rep.dt_next, rep.entropy
        count += 1
        hit = bool(targets) and cur.time >= targets[0]
        if hit:
            targets.pop(0)
        if hit or count % snapshot_stride == 0 or cur.time >= t_end:
            traj.snapshots.append(cur)
            traj.snapshot_dt.append(rep.dt_used)
    return traj


def perturbation_mode(name, grid: Grid1D, n, seed=0):
    """Named zero-sum perturbation shapes, evaluated at cell centers.

    ``cosine``: species weights alternate in sign, profile cos(2 pi x / L).
    ``random``: random zero-sum weights on the first four cosine modes.
    """
    x = grid.centers
    if name == "cosine":
        w = np.array([(-1.0) ** i for i in range(n)])
        if n % 2:
            w[-1] = 0.0
        return np.outer(np.cos(2.0 * np.pi * x / grid.length), w)
    if name == "random":
        rng = XorShift64Star(seed)
        coef = np.array([rng.uniforms(n, -1.0, 1.0) for _ in range(4)])
        basis = np.cos(np.pi * np.outer(x, np.arange(1, 5)) / grid.length)
        phi = basis @ coef
        return phi / np.abs(phi).max()
    raise PreconditionError(f"unknown perturbation mode {name!r}")


def perturb_initial(reference: Field, epsilon: float, mode="cosine", seed: int = 0) -> Field:
    """c0 = cbar0 + epsilon phi with phi projected to zero species-sum in each cell."""
    if epsilon < 0.0:
        raise PreconditionError("epsilon must be nonnegative")
    if epsilon == 0.0:
        return reference
    if callable(mode):
        phi = np.asarray(mode(reference.grid.centers), dtype=float)
    elif isinstance(mode, str):
        phi = perturbation_mode(mode, reference.grid, reference.n, seed)
    else:
        phi = np.asarray(mode, dtype=float)
    if phi.shape != reference.data.shape:
        raise PreconditionError("perturbation must have shape (cells, species)")
    phi = phi - phi.mean(axis=1, keepdims=True)
    sup = np.abs(phi).max()
    if reference.min_c() < 2.0 * epsilon * sup:
        raise SimplexViolation(
            f"perturbation of size {epsilon * sup:.3e} exceeds the interior margin {reference.min_c():.3e}"
        )
    return make_field(reference.grid, reference.data + epsilon * phi, reference.time)
