"""Matrix Dyson Equation solver and self-consistent spectral densities.

The defining fixed point is  -M(z)^{-1} = z - A + S[M(z)]  with the side
condition Im z * Im M(z) > 0, where S is the self-energy operator
S[R] = E[W~ R W~] of the filtered signal.  The density of states is
rho(E) = |<Im M(E + i eta)>| / pi, and the kappa-bulk is the region where
rho >= kappa.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import filtering
from .model import PairModelSpec, SymmetryClass


class NonConvergence(RuntimeError):
    """Fixed-point iteration did not reach the residual tolerance.

    Usually signals that Im z is too small for the damping schedule."""

    def __init__(self, z, iterations, residual):
        self.z = z
        self.iterations = iterations
        self.residual = residual
        super().__init__(
            f"MDE iteration did not converge at z={z} "
            f"(residual {residual:.3e} after {iterations} iterations)"
        )


_THETA_MAX = 0.5
_THETA_MIN = 0.05


@dataclass
class SelfEnergy:
    """Evaluation closure for S[R] = E[W~ R W~], computed analytically.

    ``apply`` acts on dense matrices.  ``diag_apply``, when available, acts on
    the diagonal vector of a diagonal matrix (the map preserves diagonality
    for unfiltered profiles), enabling the O(N^2)-per-iteration solve path.
    """

    n: int
    beta: int
    apply: object
    diag_apply: object | None = None
    description: str = ""

    @classmethod
    def wigner(cls, n) -> "SelfEnergy":
        """Idealized Wigner self-energy S[R] = <R> I (flat large-N limit)."""

        def apply(r):
            return np.trace(r) / n * np.eye(n, dtype=np.asarray(r).dtype)

        def diag_apply(m):
            return np.full(n, np.mean(m), dtype=m.dtype)

        return cls(n, 1, apply, diag_apply, "wigner")

    @classmethod
    def from_model(cls, spec: PairModelSpec, j) -> "SelfEnergy":
        """Exact finite-N self-energy of matrix j from its profile and filter."""
        n = spec.n
        beta = spec.symmetry.beta
        v = spec.variances(j)
        phi = spec.filter(j)
        if phi.is_identity:
            if beta == 1:
                vt = v.copy()
                vt[np.diag_indices(n)] /= 2.0

                def apply(r):
                    r = np.asarray(r)
                    out = vt * r.T
                    out[np.diag_indices(n)] += vt @ np.diag(r)
                    return out

                def diag_apply(m):
                    return np.diag(vt) * m + vt @ m

            else:

                def apply(r):
                    out = np.zeros_like(np.asarray(r, dtype=complex))
                    out[np.diag_indices(n)] = v @ np.diag(r)
                    return out

                def diag_apply(m):
                    return v @ m

            return cls(n, beta, apply, diag_apply, f"profile{j}")

        # Filtered case: S[R] = sum_p var_p Phi[B_p] R Phi[B_p] over the
        # entry basis; images are precomputed.  Affordable at small N only.
        images = []
        for i in range(n):
            for k in range(i, n):
                b = filtering.BasisMatrix(i, k).build(n, beta)
                img = phi.apply(b)
                if beta == 1:
                    var = v[i, k] if i != k else v[i, i]
                    # E[c^2] for the coefficient of B_ik: off-diagonal entries
                    # have coefficient w_ik (variance v), diagonal w_ii.
                    images.append((var, img))
                else:
                    if i == k:
                        images.append((v[i, i], img))
                    else:
                        images.append((v[i, k] / 2.0, img))
                        b_im = filtering.BasisMatrix(i, k, "imag").build(n, beta)
                        images.append((v[i, k] / 2.0, phi.apply(b_im)))

        def apply(r):
            out = np.zeros((n, n), dtype=complex)
            for var, img in images:
                out += var * (img @ r @ img)
            return out

        return cls(n, beta, apply, None, f"profile{j}+filter")

    def operator_matrix(self):
        """Dense matrix of S on the orthonormal symmetry basis (small N)."""
        return filtering.operator_matrix(self.apply, self.n, self.beta)


def _damped_iteration(target_fn, x0, z, tol, max_iter):
    """Generic damped fixed-point loop x <- (1-theta) x + theta target(x).

    theta starts at 0.5, halves on residual increase (floor 0.05), and creeps
    back up after sustained decrease.  Returns (x, iterations, residual).
    """
    x = x0
    theta = _THETA_MAX
    prev_res = np.inf
    streak = 0
    for it in range(1, max_iter + 1):
        tgt = target_fn(x)
        res = float(np.max(np.abs(x - tgt)))
        if res < tol:
            return tgt, it, res
        if res > prev_res:
            theta = max(theta / 2.0, _THETA_MIN)
            streak = 0
        else:
            streak += 1
            if streak >= 12:
                theta = min(theta * 1.3, _THETA_MAX)
                streak = 0
        x = (1.0 - theta) * x + theta * tgt
        prev_res = res
    raise NonConvergence(z, max_iter, prev_res)


def solve_mde(a, s: SelfEnergy, z, init=None, tol=1e-10, max_iter=10_000, full_output=False):
    """Solve -M^{-1} = z - A + S[M] at a single spectral parameter.

    ``a`` may be None (no deformation), a diagonal vector, or a dense matrix.
    Returns the dense M(z); with full_output=True also an info dict with
    iteration count and final residual.
    """
    if np.imag(z) == 0:
        raise ValueError("solve_mde requires Im z != 0")
    n = s.n
    a_vec = _diagonal_of(a, n)
    if a_vec is not None and s.diag_apply is not None:
        m0 = init if init is not None else -1.0 / (z - a_vec)
        m0 = np.asarray(m0, dtype=complex)
        if m0.ndim == 2:
            m0 = np.diag(m0).astype(complex)

        def target(m):
            return -1.0 / (z - a_vec + s.diag_apply(m))

        m, iters, res = _damped_iteration(target, m0, z, tol, max_iter)
        if full_output:
            sign = np.sign(np.imag(z))
            info = {
                "path": "diag",
                "iterations": iters,
                "residual": res,
                "mean": complex(np.mean(m)),
                "min_im": float(np.min(m.imag * sign)),
                "warm": m,
            }
            return np.diag(m), info
        return np.diag(m)

    a_mat = (
        np.zeros((n, n), dtype=complex)
        if a is None
        else (np.diag(a_vec) if a_vec is not None else np.asarray(a, dtype=complex))
    )
    eye = np.eye(n, dtype=complex)
    if init is None:
        m0 = -np.linalg.inv(z * eye - a_mat)
    else:
        m0 = np.asarray(init, dtype=complex)
        if m0.ndim == 1:
            m0 = np.diag(m0)

    def target(m):
        return -np.linalg.inv(z * eye - a_mat + s.apply(m))

    m, iters, res = _damped_iteration(target, np.asarray(m0, dtype=complex), z, tol, max_iter)
    if full_output:
        im = (m - m.conj().T) / 2j
        sign = np.sign(np.imag(z))
        info = {
            "path": "dense",
            "iterations": iters,
            "residual": res,
            "mean": complex(np.trace(m) / n),
            "min_im": float(np.min(np.linalg.eigvalsh(im) * sign)),
            "warm": m,
        }
        return m, info
    return m


def _diagonal_of(a, n):
    if a is None:
        return np.zeros(n)
    a = np.asarray(a)
    if a.ndim == 1:
        return a.astype(complex) * 1.0
    if a.ndim == 2 and np.count_nonzero(a - np.diag(np.diag(a))) == 0:
        return np.diag(a).copy()
    return None


@dataclass
class SpectralSolution:
    """Density-of-states scan of one matrix model over an energy grid.

    Stores trace-level data per grid point (mean of M, rho, positivity margin
    of Im M, iteration metadata); full M(z) at any single point is available
    from solve_mde.
    """

    energies: np.ndarray
    eta: float
    rho: np.ndarray
    mean_m: np.ndarray
    min_im: np.ndarray
    iterations: np.ndarray
    residuals: np.ndarray
    bulk: list = field(default_factory=list)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["E", "eta", "rho", "iterations", "residual"])
            for i, e in enumerate(self.energies):
                w.writerow(
                    [
                        repr(float(e)),
                        repr(float(self.eta)),
                        repr(float(self.rho[i])),
                        int(self.iterations[i]),
                        repr(float(self.residuals[i])),
                    ]
                )


def scdos(a, s: SelfEnergy, energies, eta, tol=1e-10, max_iter=10_000) -> SpectralSolution:
    """rho(E) = |<Im M(E + i eta)>| / pi along the grid, warm-started left to
    right.  Raises NonConvergence if any point fails."""
    energies = np.asarray(energies, dtype=float)
    rho = np.empty_like(energies)
    mean_m = np.empty(energies.shape, dtype=complex)
    min_im = np.empty_like(energies)
    iters = np.empty(energies.shape, dtype=int)
    residuals = np.empty_like(energies)
    warm = None
    for i, e in enumerate(energies):
        z = e + 1j * eta
        m, info = solve_mde(a, s, z, init=warm, tol=tol, max_iter=max_iter, full_output=True)
        warm = info["warm"]
        rho[i] = abs(info["mean"].imag) / np.pi
        mean_m[i] = info["mean"]
        min_im[i] = info["min_im"]
        iters[i] = info["iterations"]
        residuals[i] = info["residual"]
    return SpectralSolution(energies, eta, rho, mean_m, min_im, iters, residuals)


def kappa_bulk(energies, rho, kappa):
    """Maximal intervals where rho >= kappa; endpoints linearly interpolated."""
    energies = np.asarray(energies, dtype=float)
    rho = np.asarray(rho, dtype=float)
    above = rho >= kappa
    intervals = []
    i = 0
    n = len(energies)
    while i < n:
        if not above[i]:
            i += 1
            continue
        # left endpoint
        if i == 0:
            lo = energies[0]
        else:
            e0, e1 = energies[i - 1], energies[i]
            r0, r1 = rho[i - 1], rho[i]
            lo = e0 + (kappa - r0) / (r1 - r0) * (e1 - e0)
        j = i
        while j + 1 < n and above[j + 1]:
            j += 1
        if j == n - 1:
            hi = energies[-1]
        else:
            e0, e1 = energies[j], energies[j + 1]
            r0, r1 = rho[j], rho[j + 1]
            hi = e0 + (kappa - r0) / (r1 - r0) * (e1 - e0)
        intervals.append((float(lo), float(hi)))
        i = j + 1
    return intervals


def free_convolution_check(mhat, t, z_list, tol=1e-10, max_iter=5_000):
    """Solve the scalar fixed point m_c(z) = mhat(z + t m_c(z)) at each z.

    ``mhat`` is a callable Stieltjes transform (from an MDE solution or an
    empirical spectrum).  Returns (m_c values, defining residuals)."""
    z_list = np.asarray(z_list, dtype=complex)
    out = np.empty(z_list.shape, dtype=complex)
    res_out = np.empty(z_list.shape, dtype=float)
    warm = None
    for i, z in enumerate(z_list):
        m0 = warm if warm is not None else complex(mhat(z))

        def target(m):
            return complex(mhat(z + t * m))

        m, _, res = _damped_iteration(target, complex(m0), z, tol, max_iter)
        out[i] = m
        res_out[i] = abs(m - target(m))
        warm = m
    return out, res_out


def empirical_stieltjes(lambdas):
    """m_N(z) = <(H - z)^{-1}> as a callable built from eigenvalues."""
    lam = np.asarray(lambdas, dtype=float)

    def mhat(z):
        return np.mean(1.0 / (lam - z))

    return mhat


def eta_stability(a, s: SelfEnergy, energies, eta, tol=1e-10):
    """Diagnostic: |rho_eta - rho_{eta/2}| against 5 eta times a local
    Lipschitz estimate of rho (bulk smoothness check)."""
    sol1 = scdos(a, s, energies, eta, tol=tol)
    sol2 = scdos(a, s, energies, eta / 2.0, tol=tol)
    diff = np.abs(sol1.rho - sol2.rho)
    de = np.gradient(sol1.rho, sol1.energies)
    lip = np.maximum(np.abs(de), 1.0)
    return diff, 5.0 * eta * lip
