"""Energy-based DAE systems: container type, validation, and pointwise evaluation.

A system couples three state groups: gradient states z1 (energy ½ z1ᵀ M1 z1),
dynamic states z2 behind a possibly singular mass matrix E (energy
½ z2ᵀ M2 z2, effort e = S z2), and algebraic states z3.  The dynamics read

    [M1 z1; E ż2; 0] = (J − R) [ż1; S z2; z3] + B u,      y = Bᵀ [ż1; S z2; z3]

with skew J, symmetric positive semi-definite R and the compatibility
condition Eᵀ S = M2.  All blocks are real and constant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

# Blocks whose largest dimension reaches this bound are held in CSR form;
# anything smaller stays a dense ndarray.
DENSE_LIMIT = 64

# Dense eigenvalue routines are used for PSD checks up to this size.
EIG_DENSE_LIMIT = 2000


class StructureError(ValueError):
    """The model violates the energy-based structure or its declared shapes."""


class NumericalError(RuntimeError):
    """A linear solve or a time step failed numerically."""


# ---------------------------------------------------------------------------
# block helpers (mixed dense / CSR storage)
# ---------------------------------------------------------------------------

def as_block(X, shape, name: str):
    """Normalize a matrix block to float64 dense (small) or CSR (large).

    Raises StructureError naming the block when the shape disagrees.
    """
    if sp.issparse(X):
        if X.shape != shape:
            raise StructureError(
                f"block {name}: expected shape {shape}, got {X.shape}")
        X = sp.csr_array(X).astype(np.float64)
        if max(shape, default=0) < DENSE_LIMIT:
            return X.toarray()
        return X
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.shape != shape:
        raise StructureError(
            f"block {name}: expected shape {shape}, got {X.shape}")
    if max(shape, default=0) >= DENSE_LIMIT:
        return sp.csr_array(X)
    return X


def to_dense(X) -> np.ndarray:
    return X.toarray() if sp.issparse(X) else np.asarray(X, dtype=np.float64)


def to_csr(X):
    return sp.csr_array(X) if not sp.issparse(X) else sp.csr_array(X)


def matvec(X, v: np.ndarray) -> np.ndarray:
    """X @ v with empty-dimension guards (scipy is picky about 0-size operands)."""
    if X.shape[0] == 0:
        return np.zeros(0)
    if X.shape[1] == 0:
        return np.zeros(X.shape[0])
    return X @ v


def max_abs(X) -> float:
    """Largest absolute entry; 0 for empty blocks."""
    if sp.issparse(X):
        return float(abs(X).max()) if X.nnz else 0.0
    X = np.asarray(X)
    return float(np.max(np.abs(X))) if X.size else 0.0


def fro_norm(X) -> float:
    if sp.issparse(X):
        return float(spla.norm(X)) if X.nnz else 0.0
    X = np.asarray(X)
    return float(np.linalg.norm(X)) if X.size else 0.0


def min_sym_eig(R, shift: float = 0.0) -> float:
    """Smallest eigenvalue of the symmetrized matrix ½(R + Rᵀ).

    Dense spectrum up to EIG_DENSE_LIMIT.  Beyond that a shifted
    factorization test is used instead of an eigensolve: if ½(R+Rᵀ)+shift·I
    admits a no-pivoting triangular factorization with positive diagonal, the
    spectrum is certified ≥ −shift and that bound is returned; otherwise a
    Lanczos estimate of the smallest eigenvalue is attempted.
    """
    n = R.shape[0]
    if n == 0:
        return 0.0
    if n <= EIG_DENSE_LIMIT:
        Rs = 0.5 * (to_dense(R) + to_dense(R).T)
        return float(np.linalg.eigvalsh(Rs)[0])
    Rs = to_csr(R)
    Rs = 0.5 * (Rs + Rs.T)
    if shift > 0.0 and _factorization_psd(Rs, shift):
        return -shift
    try:
        val = spla.eigsh(Rs, k=1, which="SA", return_eigenvectors=False)
        return float(val[0])
    except Exception:
        return float(np.linalg.eigvalsh(to_dense(Rs))[0])


def _factorization_psd(sym_csr, shift: float) -> bool:
    """Certify sym_csr + shift·I ≻ 0 via an unpivoted sparse LU.

    With row pivoting disabled on a symmetric matrix the factorization is an
    LDLᵀ in disguise; all-positive U diagonal proves positive definiteness.
    """
    n = sym_csr.shape[0]
    shifted = sp.csc_matrix(sym_csr + shift * sp.identity(n, format="csr"))
    try:
        lu = spla.splu(shifted, diag_pivot_thresh=0.0,
                       permc_spec="MMD_AT_PLUS_A",
                       options={"SymmetricMode": True})
    except RuntimeError:
        return False
    if (lu.perm_r != lu.perm_c).any():
        return False
    return bool(np.all(lu.U.diagonal() > 0.0))


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Partition:
    """State and port dimensions of an energy-based system.

    n1 gradient states, n2 dynamic states, n3 algebraic states, m ports.
    Any of n1, n2, n3 may be zero.
    """

    n1: int
    n2: int
    n3: int
    m: int

    def __post_init__(self):
        for nm in ("n1", "n2", "n3", "m"):
            v = getattr(self, nm)
            if not isinstance(v, (int, np.integer)) or v < 0:
                raise StructureError(f"partition field {nm} must be a count, got {v!r}")

    @property
    def n(self) -> int:
        return self.n1 + self.n2 + self.n3

    def split(self, z: np.ndarray):
        """Split a full state vector into (z1, z2, z3)."""
        z = np.asarray(z, dtype=np.float64)
        if z.shape != (self.n,):
            raise StructureError(f"state vector: expected length {self.n}, got {z.shape}")
        return z[: self.n1], z[self.n1 : self.n1 + self.n2], z[self.n1 + self.n2 :]


@dataclass(frozen=True)
class EnergySystem:
    """One energy-based DAE with quadratic Hamiltonian and linear effort map.

    Immutable after construction; all operations on it are pure functions.
    """

    partition: Partition
    E: object  # n2 x n2, possibly singular
    J: object  # n x n, skew
    R: object  # n x n, symmetric PSD
    B: object  # n x m
    M1: object  # n1 x n1, symmetric
    M2: object  # n2 x n2, symmetric
    S: object  # n2 x n2, effort map e = S z2
    state_labels: tuple = None
    output_labels: tuple = None

    def __post_init__(self):
        p = self.partition
        n = p.n
        object.__setattr__(self, "E", as_block(self.E, (p.n2, p.n2), "E"))
        object.__setattr__(self, "J", as_block(self.J, (n, n), "J"))
        object.__setattr__(self, "R", as_block(self.R, (n, n), "R"))
        object.__setattr__(self, "B", as_block(self.B, (n, p.m), "B"))
        object.__setattr__(self, "M1", as_block(self.M1, (p.n1, p.n1), "M1"))
        object.__setattr__(self, "M2", as_block(self.M2, (p.n2, p.n2), "M2"))
        object.__setattr__(self, "S", as_block(self.S, (p.n2, p.n2), "S"))
        if self.state_labels is not None:
            labels = tuple(self.state_labels)
            if len(labels) != n:
                raise StructureError(
                    f"state_labels: expected {n} labels, got {len(labels)}")
            object.__setattr__(self, "state_labels", labels)
        if self.output_labels is not None:
            labels = tuple(self.output_labels)
            if len(labels) != p.m:
                raise StructureError(
                    f"output_labels: expected {p.m} labels, got {len(labels)}")
            object.__setattr__(self, "output_labels", labels)

    @property
    def n(self) -> int:
        return self.partition.n

    @property
    def m(self) -> int:
        return self.partition.m

    def default_state_labels(self) -> tuple:
        if self.state_labels is not None:
            return self.state_labels
        return tuple(f"x{i}" for i in range(self.n))

    def default_output_labels(self) -> tuple:
        if self.output_labels is not None:
            return self.output_labels
        return tuple(f"y{i}" for i in range(self.m))


@dataclass(frozen=True)
class ValidationReport:
    """Structural defect magnitudes of one EnergySystem."""

    skew_defect: float
    sym_defect: float
    min_R_eig: float
    effort_defect: float
    ok: bool

    def summary(self) -> str:
        lines = [
            f"skew defect   |J + J^T|_max   = {self.skew_defect:.3e}",
            f"sym defect    |R - R^T|_max   = {self.sym_defect:.3e}",
            f"min eig of symmetrized R      = {self.min_R_eig:.3e}",
            f"effort defect |E^T S - M2|max = {self.effort_defect:.3e}",
            f"ok = {self.ok}",
        ]
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def validate(sys: EnergySystem, tol_skew: float = 1e-10,
             tol_psd: float = 1e-10) -> ValidationReport:
    """Measure the structural defects of a system.

    Tolerances are relative to the Frobenius norm of the checked block.
    """
    J, R = sys.J, sys.R
    skew_defect = max_abs(J + J.T) if J.shape[0] else 0.0
    sym_defect = max_abs(R - R.T) if R.shape[0] else 0.0
    min_R = min_sym_eig(R, shift=tol_psd * fro_norm(R))
    if sys.partition.n2:
        effort_defect = max_abs(to_csr(sys.E).T @ to_csr(sys.S) - to_csr(sys.M2))
    else:
        effort_defect = 0.0
    ok = (
        skew_defect <= tol_skew * fro_norm(J)
        and sym_defect <= tol_skew * fro_norm(R)
        and min_R >= -tol_psd * fro_norm(R)
        and effort_defect <= tol_skew * max(fro_norm(sys.M2), fro_norm(sys.E))
    )
    return ValidationReport(skew_defect, sym_defect, min_R, effort_defect, bool(ok))


def hamiltonian(sys: EnergySystem, z: np.ndarray) -> float:
    """Stored energy ½ z1ᵀ M1 z1 + ½ z2ᵀ M2 z2; z3 carries none."""
    z1, z2, _ = sys.partition.split(z)
    h = 0.0
    if z1.size:
        h += 0.5 * float(z1 @ matvec(sys.M1, z1))
    if z2.size:
        h += 0.5 * float(z2 @ matvec(sys.M2, z2))
    return h


def effort_flow(sys: EnergySystem, zdot1: np.ndarray, z: np.ndarray) -> np.ndarray:
    """The flow-side vector w = [ż1; S z2; z3] that J, R and B act on."""
    zdot1 = np.asarray(zdot1, dtype=np.float64)
    if zdot1.shape != (sys.partition.n1,):
        raise StructureError(
            f"zdot1: expected length {sys.partition.n1}, got {zdot1.shape}")
    _, z2, z3 = sys.partition.split(z)
    return np.concatenate([zdot1, matvec(sys.S, z2), z3])


def dae_residual(sys: EnergySystem, z: np.ndarray, zdot: np.ndarray,
                 u: np.ndarray) -> np.ndarray:
    """Residual [M1 z1; E ż2; 0] − (J − R) w − B u; zero along exact solutions."""
    p = sys.partition
    z1, _, _ = p.split(z)
    zdot = np.asarray(zdot, dtype=np.float64)
    if zdot.shape != (p.n,):
        raise StructureError(f"zdot: expected length {p.n}, got {zdot.shape}")
    u = np.asarray(u, dtype=np.float64)
    if u.shape != (p.m,):
        raise StructureError(f"u: expected length {p.m}, got {u.shape}")
    zdot1, zdot2, _ = p.split(zdot)
    w = effort_flow(sys, zdot1, z)
    lhs = np.concatenate([matvec(sys.M1, z1), matvec(sys.E, zdot2), np.zeros(p.n3)])
    return lhs - (matvec(sys.J, w) - matvec(sys.R, w)) - matvec(sys.B, u)


def output(sys: EnergySystem, zdot1: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Port output y = Bᵀ [ż1; S z2; z3]."""
    w = effort_flow(sys, zdot1, z)
    return matvec(sys.B.T, w)


def power_terms(sys: EnergySystem, zdot1: np.ndarray, z: np.ndarray,
                u: np.ndarray):
    """Instantaneous (dissipation, supply) = (wᵀ R w, ⟨y, u⟩).

    Along exact solutions dH/dt = −dissipation + supply.
    """
    u = np.asarray(u, dtype=np.float64)
    if u.shape != (sys.partition.m,):
        raise StructureError(f"u: expected length {sys.partition.m}, got {u.shape}")
    w = effort_flow(sys, zdot1, z)
    dissipation = float(w @ matvec(sys.R, w))
    y = matvec(sys.B.T, w)
    supply = float(y @ u)
    return dissipation, supply
