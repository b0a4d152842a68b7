"""Dense small-n linear algebra on the unit simplex.

Friction matrices, the projectors onto L = {z : sqrt(c).z = 0} and its
complement, Bott-Duffin inversion and spectral certificates. Every function
accepts vertex compositions (some c_i = 0) except the generalized friction
builder, which divides by sqrt(c_i).
"""

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .errors import NegativeEntry, PreconditionError, SingularSystem, SumViolation

SUM_TOL = 1e-9
NEG_TOL = 1e-12
KERNEL_TOL = 1e-10
COND_LIMIT = 1e14
CERT_TOL = 1e-9


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Composition:
    values: np.ndarray

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def sqrt(self):
        return np.sqrt(self.values)

    def __len__(self):
        return self.n

    def __iter__(self):
        return iter(self.values)

    def __eq__(self, other):
        if not isinstance(other, Composition):
            return NotImplemented
        return np.array_equal(self.values, other.values)

    def __hash__(self):
        return hash(self.values.tobytes())


def make_composition(raw) -> Composition:
    """Validate a point of the unit simplex.

    Entries in [-1e-12, 0) are clamped to zero. A sum off by at most 1e-9 is
    rescaled so the stored values sum to one at machine precision; larger
    deviations raise :class:`SumViolation`.
    """
    c = np.array(raw, dtype=float).reshape(-1)
    if c.size < 2:
        raise PreconditionError("a composition needs at least two species")
    if not np.all(np.isfinite(c)):
        raise PreconditionError("composition entries must be finite")
    if np.any(c < -NEG_TOL):
        i = int(np.argmin(c))
        raise NegativeEntry(f"entry {i} is negative ({c[i]:.3e})")
    c = np.where(c < 0.0, 0.0, c)
    s = c.sum()
    if abs(s - 1.0) > SUM_TOL:
        raise SumViolation(f"entries sum to {s!r}, expected 1")
    if s != 1.0:
        c = c / s
    return Composition(_frozen(np.minimum(c, 1.0)))


def _as_values(c):
    if isinstance(c, Composition):
        return c.values
    return make_composition(c).values


@dataclass(frozen=True)
class DiffusionTable:
    """Symmetric positive off-diagonal diffusivities; the diagonal is ignored."""

    entries: np.ndarray

    def __post_init__(self):
        d = np.array(self.entries, dtype=float)
        if d.ndim != 2 or d.shape[0] != d.shape[1] or d.shape[0] < 2:
            raise PreconditionError("diffusion table must be a square n x n array, n >= 2")
        off = ~np.eye(d.shape[0], dtype=bool)
        if not np.all(d[off] > 0.0) or not np.all(np.isfinite(d[off])):
            raise PreconditionError("off-diagonal diffusivities must be positive and finite")
        if not np.array_equal(d[off], d.T[off]):
            raise PreconditionError("diffusion table must be symmetric")
        np.fill_diagonal(d, 0.0)
        object.__setattr__(self, "entries", _frozen(d))
        inv = np.zeros_like(d)
        inv[off] = 1.0 / d[off]
        object.__setattr__(self, "_inverse", _frozen(inv))

    @classmethod
    def from_upper(cls, upper, n):
        """Build from the row-major upper triangle D_12, D_13, ..., D_(n-1)n."""
        upper = list(upper)
        if len(upper) != n * (n - 1) // 2:
            raise PreconditionError(f"expected {n * (n - 1) // 2} upper-triangular entries, got {len(upper)}")
        d = np.zeros((n, n))
        d[np.triu_indices(n, 1)] = upper
        return cls(d + d.T)

    @classmethod
    def constant(cls, n, value=1.0):
        return cls(np.full((n, n), float(value)))

    @property
    def n(self):
        return self.entries.shape[0]

    def upper(self):
        return [float(v) for v in self.entries[np.triu_indices(self.n, 1)]]

    def inverse(self):
        """Matrix of 1/D_ij with a zero diagonal (read-only)."""
        return self._inverse

    def mu(self):
        """Uniform lower bound min_{i!=j} 1/D_ij for nonzero eigenvalues of A(c)."""
        return float(1.0 / self.entries[~np.eye(self.n, dtype=bool)].max())

    def lam(self):
        """Lower bound (2 sum_{i!=j} (1/D_ij + 1))^-1 for nonzero eigenvalues of A^BD.

        The sum runs over ordered pairs.
        """
        inv = self.inverse()[~np.eye(self.n, dtype=bool)]
        return float(1.0 / (2.0 * np.sum(inv + 1.0)))


@dataclass(frozen=True)
class ProjectorPair:
    p_l: np.ndarray
    p_lperp: np.ndarray


def projector_arrays(sqrtc):
    """P_L and P_perp for one sqrt(c) vector or a stack of them (..., n)."""
    sqrtc = np.asarray(sqrtc, dtype=float)
    perp = sqrtc[..., :, None] * sqrtc[..., None, :]
    return np.eye(sqrtc.shape[-1]) - perp, perp


def projectors(c) -> ProjectorPair:
    p_l, perp = projector_arrays(np.sqrt(_as_values(c)))
    return ProjectorPair(_frozen(p_l), _frozen(perp))


@dataclass(frozen=True)
class FrictionMatrix:
    matrix: np.ndarray
    composition: Composition
    table: DiffusionTable


def friction_array(c, inv_d):
    """A(c) for raw arrays; c may be a stack (..., n), inv_d holds 1/D_ij."""
    c = np.asarray(c, dtype=float)
    sq = np.sqrt(c)
    off = -sq[..., :, None] * sq[..., None, :] * inv_d
    # inv_d (one table or a stack of them) has a zero diagonal: sum_{k!=i} c_k/D_ik
    diag = c @ inv_d if inv_d.ndim == 2 else np.einsum("...k,...ik->...i", c, inv_d)
    n = c.shape[-1]
    off[..., np.arange(n), np.arange(n)] = diag
    return off


def build_friction_matrix(c, table: DiffusionTable) -> FrictionMatrix:
    comp = c if isinstance(c, Composition) else make_composition(c)
    if comp.n != table.n:
        raise PreconditionError(f"composition has {comp.n} species, table has {table.n}")
    a = friction_array(comp.values, table.inverse())
    return FrictionMatrix(_frozen(a), comp, table)


def build_generalized_friction(
    k: Union[Callable[[np.ndarray], np.ndarray], np.ndarray], c, floor=1e-14
) -> np.ndarray:
    """B_ij = K_ij(c) sqrt(c_j) / sqrt(c_i) for a model matrix K with zero column sums."""
    cv = _as_values(c)
    if np.any(cv < floor):
        raise PreconditionError(f"generalized friction needs all c_i >= {floor:g}")
    kmat = np.asarray(k(cv) if callable(k) else k, dtype=float)
    if kmat.shape != (cv.size, cv.size):
        raise PreconditionError("K must be an n x n matrix")
    scale = max(1.0, np.abs(kmat).max())
    if np.abs(kmat.sum(axis=0)).max() > KERNEL_TOL * scale:
        raise PreconditionError("column sums of K must vanish")
    sq = np.sqrt(cv)
    return kmat * sq[None, :] / sq[:, None]


def _check_operator(m, sqrtc):
    scale = max(1.0, np.abs(m).max())
    if np.abs(m - m.T).max() > 1e-12 * scale:
        raise PreconditionError("matrix is not symmetric")
    if np.abs(m @ sqrtc).max() > KERNEL_TOL * scale:
        raise PreconditionError("sqrt(c) is not in the kernel of the matrix")
    if np.linalg.eigvalsh(0.5 * (m + m.T)).min() < -KERNEL_TOL * scale:
        raise PreconditionError("matrix is not positive semidefinite")


def _norm1(x):
    return np.abs(x).sum(axis=-2).max(axis=-1)


def bott_duffin_array(m, sqrtc):
    """P_L (M P_L + P_perp)^-1 for one matrix or a stack (..., n, n).

    Raises SingularSystem when the 1-norm condition number of M P_L + P_perp
    exceeds 1e14.
    """
    p_l, perp = projector_arrays(sqrtc)
    x = m @ p_l + perp
    try:
        xinv = np.linalg.inv(x)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem("M P_L + P_perp is singular") from exc
    # the product of the stack-wide maxima bounds every cond_1 from above
    if not np.abs(x).sum(axis=-2).max() * np.abs(xinv).sum(axis=-2).max() <= COND_LIMIT:
        cond = _norm1(x) * _norm1(xinv)
        if not np.all(np.isfinite(cond)) or np.any(cond > COND_LIMIT):
            raise SingularSystem(f"M P_L + P_perp is ill-conditioned (cond_1 = {np.max(cond):.3e})")
    return p_l @ xinv


def l_basis(sqrtc):
    """Orthonormal basis (n x (n-1)) of L = {z : sqrt(c).z = 0}."""
    p_l, _ = projector_arrays(sqrtc)
    w, v = np.linalg.eigh(p_l)
    return v[:, w > 0.5]


def restricted_eigenvalues(m, sqrtc):
    """Eigenvalues of a symmetric matrix compressed to L, ascending."""
    q = l_basis(sqrtc)
    r = q.T @ m @ q
    return np.linalg.eigvalsh(0.5 * (r + r.T))


@dataclass(frozen=True)
class ConstrainedInverse:
    matrix: np.ndarray
    mu_bound: float
    lambda_bound: float
    composition: Composition


def bott_duffin(m, c, table: Optional[DiffusionTable] = None) -> ConstrainedInverse:
    """Bott-Duffin inverse of a symmetric PSD matrix whose kernel is span{sqrt(c)}.

    With a diffusion table the reported bounds are the uniform ones for A(c);
    otherwise they are the observed extreme eigenvalues on L.
    """
    comp = c if isinstance(c, Composition) else make_composition(c)
    m = np.asarray(m.matrix if isinstance(m, FrictionMatrix) else m, dtype=float)
    sq = comp.sqrt
    _check_operator(m, sq)
    inv = bott_duffin_array(m, sq)
    inv = 0.5 * (inv + inv.T)
    if table is not None:
        mu, lam = table.mu(), table.lam()
    else:
        ev = restricted_eigenvalues(m, sq)
        mu, lam = float(ev[0]), float(1.0 / ev[-1])
    return ConstrainedInverse(_frozen(inv), mu, lam, comp)


def lu_solve(a, b):
    """Gaussian elimination with partial pivoting, written out for use as an oracle."""
    a = np.array(a, dtype=float)
    x = np.array(b, dtype=float)
    n = a.shape[0]
    scale = np.abs(a).max()
    for k in range(n):
        p = k + int(np.argmax(np.abs(a[k:, k])))
        if abs(a[p, k]) <= 1e-14 * scale:
            raise SingularSystem("zero pivot in LU factorization")
        if p != k:
            a[[k, p]] = a[[p, k]]
            x[[k, p]] = x[[p, k]]
        for i in range(k + 1, n):
            f = a[i, k] / a[k, k]
            a[i, k:] -= f * a[k, k:]
            x[i] -= f * x[k]
    for k in range(n - 1, -1, -1):
        x[k] = (x[k] - a[k, k + 1 :] @ x[k + 1 :]) / a[k, k]
    return x


def solve_constrained_oracle(m, c, b):
    """Solve M x + y = b with x in L, y in L-perp through (M P_L + P_perp) z = b."""
    comp = c if isinstance(c, Composition) else make_composition(c)
    m = np.asarray(m.matrix if isinstance(m, FrictionMatrix) else m, dtype=float)
    _check_operator(m, comp.sqrt)
    p_l, perp = projector_arrays(comp.sqrt)
    z = lu_solve(m @ p_l + perp, np.asarray(b, dtype=float))
    x = p_l @ z
    return x, np.asarray(b, dtype=float) - m @ x


@dataclass(frozen=True)
class SpectralCertificate:
    kind: str
    eigenvalues: np.ndarray
    inverse_eigenvalues: np.ndarray
    min_nonzero: float
    min_inverse_nonzero: float
    mu: float
    lam: float
    forward_pass: bool
    inverse_pass: bool
    reciprocal_error: float = field(default=0.0)

    @property
    def passed(self):
        return self.forward_pass and self.inverse_pass


def spectral_certificate(
    m, c=None, kind="classic", table=None, mu=None, gamma=None
) -> SpectralCertificate:
    """Check the eigenvalue bounds of a friction matrix and its Bott-Duffin inverse.

    ``classic`` uses the uniform bounds mu = min 1/D_ij and
    lam = (2 sum_{i!=j}(1/D_ij + 1))^-1. ``generalized`` takes mu from the
    caller (or reports the observed value) and lam = 1/(gamma n + 1) with gamma
    the Frobenius norm of the matrix unless an envelope value is supplied.
    """
    if isinstance(m, FrictionMatrix):
        c = m.composition if c is None else c
        table = m.table if table is None else table
        m = m.matrix
    comp = c if isinstance(c, Composition) else make_composition(c)
    m = np.asarray(m, dtype=float)
    sq = comp.sqrt
    ev = restricted_eigenvalues(m, sq)
    inv = bott_duffin_array(m, sq)
    iev = restricted_eigenvalues(0.5 * (inv + inv.T), sq)
    if kind == "classic":
        if table is None:
            raise PreconditionError("classic certificate needs the diffusion table")
        mu_b, lam_b = table.mu(), table.lam()
    elif kind == "generalized":
        mu_b = float(ev[0]) if mu is None else float(mu)
        g = float(np.linalg.norm(m)) if gamma is None else float(gamma)
        lam_b = 1.0 / (g * comp.n + 1.0)
    else:
        raise PreconditionError(f"unknown certificate kind {kind!r}")
    recip = np.sort(1.0 / iev)
    rel = float(np.max(np.abs(recip - ev) / np.abs(ev)))
    return SpectralCertificate(
        kind=kind,
        eigenvalues=ev,
        inverse_eigenvalues=iev,
        min_nonzero=float(ev[0]),
        min_inverse_nonzero=float(iev[0]),
        mu=mu_b,
        lam=lam_b,
        forward_pass=bool(ev[0] >= mu_b - CERT_TOL),
        inverse_pass=bool(iev[0] >= lam_b - CERT_TOL),
        reciprocal_error=rel,
    )


def invert_fluxes(c, grad_sqrt_c, table: DiffusionTable):
    """sqrt(c_i) u_i = -2 sum_j A^BD_ij grad sqrt(c_j) for one composition."""
    comp = c if isinstance(c, Composition) else make_composition(c)
    g = np.asarray(grad_sqrt_c, dtype=float)
    sq = comp.sqrt
    if abs(sq @ g) > KERNEL_TOL * max(1.0, np.abs(g).max()):
        raise PreconditionError("gradient of sqrt(c) must lie in L")
    a = friction_array(comp.values, table.inverse())
    return -2.0 * bott_duffin_array(a, sq) @ g
