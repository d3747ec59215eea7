"""Covariance-preserving interpolating flow for correlated matrix pairs.

Each index pair (a, b) of the coupled pair evolves as an autonomous 2-dim
Ornstein-Uhlenbeck process: the drift matrix is the inverse S^{ab} of the
2x2 covariance of (w1_ab, w2_ab), scaled so the initial joint second moments
are exactly stationary, while the diffusion injects invariant-ensemble
Gaussian noise.  Diagonalizing S^{ab} = O L O^T decouples each pair into two
scalar OU processes with exact one-step solution

    xi_t = exp(-rate * t) xi_0 + N(0, q (1 - exp(-2 rate t)) / (2 rate)),

which is the primary evolution path; Euler-Maruyama exists only as a
validation oracle.  In the complex Hermitian class the real and imaginary
parts of each off-diagonal entry form two independent such flows.

Because every injected noise is an invariant-Gaussian increment, the state at
time t splits, exactly and per realization, into a residual Wigner-type pair
plus sqrt(s) times independent GOE/GUE matrices, with s/t bounded above and
below by constants.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import model
from .model import CorrelationProfile, PairModelSpec, SymmetryClass


class DegenerateCovariance(ValueError):
    """A per-entry 2x2 covariance matrix is numerically singular."""


class StepSizeUnstable(ValueError):
    """Explicit Euler step exceeds the linear stability radius."""


@dataclass
class EntryTable:
    """Flow data for one family of entry pairs (off-diagonal, imaginary parts,
    or diagonal).  All arrays have length P = number of index pairs.

    ``kappa`` doubles the drift rate on the real-class diagonal; ``q`` is the
    per-unit-time variance of the injected invariant noise, which also serves
    as the unit in which the accumulated Gaussian variance is measured when
    extracting the Gaussian-divisible component.
    """

    name: str
    ia: np.ndarray
    ib: np.ndarray
    kappa: float
    q: float
    c11: np.ndarray
    c12: np.ndarray
    c22: np.ndarray
    s11: np.ndarray
    s12: np.ndarray
    s22: np.ndarray
    lam: np.ndarray  # (P, 2) eigenvalues of S, descending
    oc: np.ndarray  # rotation cosines: S = O diag(lam) O^T, O = [[oc,-os],[os,oc]]
    os: np.ndarray

    @property
    def size(self) -> int:
        return self.ia.shape[0]

    def rate(self, n) -> np.ndarray:
        """Per-direction drift rate kappa * lambda / (2 n), shape (P, 2)."""
        return self.kappa * self.lam / (2.0 * n)

    def rotate_in(self, vec):
        """Entry coordinates -> eigenbasis of S (apply O^T)."""
        x1 = self.oc * vec[:, 0] + self.os * vec[:, 1]
        x2 = -self.os * vec[:, 0] + self.oc * vec[:, 1]
        return np.stack([x1, x2], axis=1)

    def rotate_out(self, xi):
        v1 = self.oc * xi[:, 0] - self.os * xi[:, 1]
        v2 = self.os * xi[:, 0] + self.oc * xi[:, 1]
        return np.stack([v1, v2], axis=1)

    def s_apply(self, vec):
        y1 = self.s11 * vec[:, 0] + self.s12 * vec[:, 1]
        y2 = self.s12 * vec[:, 0] + self.s22 * vec[:, 1]
        return np.stack([y1, y2], axis=1)


@dataclass
class EntryFlowData:
    n: int
    symmetry: SymmetryClass
    alpha: float
    tables: dict

    @property
    def table_order(self):
        if self.symmetry is SymmetryClass.REAL_SYMMETRIC:
            return ("offdiag", "diag")
        return ("re", "im", "diag")

    def max_rate(self) -> float:
        return max(float(np.max(t.rate(self.n))) for t in self.tables.values())

    def max_s_norm(self) -> float:
        return max(float(np.max(t.lam)) for t in self.tables.values())


def _invert_2x2(c11, c12, c22):
    det = c11 * c22 - c12**2
    if np.any(det <= 0) or np.any(c11 <= 0) or np.any(c22 <= 0):
        bad = int(np.argmax(det <= 0))
        raise DegenerateCovariance(
            f"entry covariance not positive definite (first offender index {bad}, det={det.flat[bad]:.3e})"
        )
    return c22 / det, -c12 / det, c11 / det


def _eig_2x2_sym(s11, s12, s22):
    half_tr = 0.5 * (s11 + s22)
    disc = np.sqrt((0.5 * (s11 - s22)) ** 2 + s12**2)
    lam1 = half_tr + disc
    lam2 = half_tr - disc
    phi = 0.5 * np.arctan2(2.0 * s12, s11 - s22)
    return np.stack([lam1, lam2], axis=1), np.cos(phi), np.sin(phi)


def _make_table(name, ia, ib, c11, c12, c22, kappa, q):
    s11, s12, s22 = _invert_2x2(c11, c12, c22)
    lam, oc, osn = _eig_2x2_sym(s11, s12, s22)
    table = EntryTable(name, ia, ib, kappa, q, c11, c12, c22, s11, s12, s22, lam, oc, osn)
    # reconstruction sanity: O L O^T must reproduce S to near machine precision
    r11 = oc**2 * lam[:, 0] + osn**2 * lam[:, 1]
    r12 = oc * osn * (lam[:, 0] - lam[:, 1])
    r22 = osn**2 * lam[:, 0] + oc**2 * lam[:, 1]
    scale = np.max(np.abs(lam))
    err = max(
        float(np.max(np.abs(r11 - s11))),
        float(np.max(np.abs(r12 - s12))),
        float(np.max(np.abs(r22 - s22))),
    )
    if err > 1e-12 * scale:
        raise AssertionError(f"2x2 eigendecomposition residual {err:.3e} (scale {scale:.3e})")
    return table


def build_entry_data(profile: CorrelationProfile, symmetry) -> EntryFlowData:
    """Per-entry covariance inverses and eigendecompositions for the flow.

    The complex class builds separate tables for real and imaginary parts.
    Raises DegenerateCovariance when some 2x2 covariance is singular
    (|rho| = 1), which the profile constraint |rho| <= 1 - alpha excludes for
    alpha > 0.
    """
    symmetry = SymmetryClass.parse(symmetry)
    n = profile.n
    if profile.alpha <= 0:
        raise ValueError("flow requires a nondegenerate profile (alpha > 0)")
    c = profile.cross_covariance
    v1, v2 = profile.variance1, profile.variance2
    iu = np.triu_indices(n, k=1)
    d = np.arange(n)
    tables = {}
    if symmetry is SymmetryClass.REAL_SYMMETRIC:
        tables["offdiag"] = _make_table(
            "offdiag", iu[0], iu[1], v1[iu], c[iu], v2[iu], kappa=1.0, q=1.0 / n
        )
        tables["diag"] = _make_table(
            "diag", d, d, v1[d, d], c[d, d], v2[d, d], kappa=2.0, q=2.0 / n
        )
    else:
        # Parts carry half the entry variance but share the full-entry S;
        # the eigen rates lambda/(2N) with part noise 1/(2N) keep C/2 stationary.
        tables["re"] = _make_table(
            "re", iu[0], iu[1], v1[iu], c[iu], v2[iu], kappa=1.0, q=1.0 / (2.0 * n)
        )
        tables["im"] = _make_table(
            "im", iu[0], iu[1], v1[iu], c[iu], v2[iu], kappa=1.0, q=1.0 / (2.0 * n)
        )
        tables["diag"] = _make_table(
            "diag", d, d, v1[d, d], c[d, d], v2[d, d], kappa=1.0, q=1.0 / n
        )
    return EntryFlowData(n, symmetry, profile.alpha, tables)


@dataclass
class FlowState:
    """Flow snapshot: time, per-table entry vectors, and the accumulated
    Gaussian component (value and variance) in each S-eigendirection."""

    data: EntryFlowData
    t: float
    vec: dict
    g_cum: dict
    var_cum: dict
    em_tainted: bool = False

    def pair(self):
        """Assemble the current (W1, W2) matrices."""
        n = self.data.n
        if self.data.symmetry is SymmetryClass.REAL_SYMMETRIC:
            out = []
            for j in range(2):
                w = np.zeros((n, n))
                to = self.data.tables["offdiag"]
                w[to.ia, to.ib] = self.vec["offdiag"][:, j]
                w[to.ib, to.ia] = self.vec["offdiag"][:, j]
                td = self.data.tables["diag"]
                w[td.ia, td.ib] = self.vec["diag"][:, j]
                out.append(w)
            return out[0], out[1]
        out = []
        for j in range(2):
            w = np.zeros((n, n), dtype=complex)
            tre, tim = self.data.tables["re"], self.data.tables["im"]
            up = self.vec["re"][:, j] + 1j * self.vec["im"][:, j]
            w[tre.ia, tre.ib] = up
            w[tre.ib, tre.ia] = np.conj(up)
            td = self.data.tables["diag"]
            w[td.ia, td.ib] = self.vec["diag"][:, j]
            out.append(w)
        return out[0], out[1]


def state_from_pair(data: EntryFlowData, w1, w2, t=0.0) -> FlowState:
    vec, g_cum, var_cum = {}, {}, {}
    for name in data.table_order:
        tb = data.tables[name]
        if name == "im":
            x1 = w1[tb.ia, tb.ib].imag
            x2 = w2[tb.ia, tb.ib].imag
        elif data.symmetry is SymmetryClass.COMPLEX_HERMITIAN:
            x1 = w1[tb.ia, tb.ib].real
            x2 = w2[tb.ia, tb.ib].real
        else:
            x1 = np.real(w1[tb.ia, tb.ib])
            x2 = np.real(w2[tb.ia, tb.ib])
        vec[name] = np.stack([np.asarray(x1, dtype=float), np.asarray(x2, dtype=float)], axis=1)
        g_cum[name] = np.zeros((tb.size, 2))
        var_cum[name] = np.zeros((tb.size, 2))
    return FlowState(data, float(t), vec, g_cum, var_cum)


def initial_state(spec: PairModelSpec, seed, data: EntryFlowData | None = None) -> FlowState:
    """Sample the t=0 signal pair from the model and wrap it as a FlowState.

    Pass a prebuilt ``data`` when generating many paths from one profile."""
    if data is None:
        data = build_entry_data(spec.profile, spec.symmetry)
    sample = model.sample_pair(spec, seed)
    return state_from_pair(data, sample.w1, sample.w2)


def _check_time(state, t_target):
    if t_target < state.t - 1e-15:
        raise ValueError(f"t_target={t_target} is before current time {state.t}")
    if t_target > state.data.alpha + 1e-12:
        raise ValueError(
            f"time cap exceeded: t_target={t_target} > alpha={state.data.alpha} "
            "(the Gaussian-divisible representation is only valid up to alpha)"
        )


def evolve_exact(state: FlowState, t_target, rng) -> FlowState:
    """Advance the flow with the exact OU transition kernel.

    One fresh standard Gaussian per entry per eigendirection; the accumulated
    Gaussian component and its variance are tracked alongside.
    """
    _check_time(state, t_target)
    dt = t_target - state.t
    if dt == 0:
        return state
    n = state.data.n
    vec, g_cum, var_cum = {}, {}, {}
    for name in state.data.table_order:
        tb = state.data.tables[name]
        rate = tb.rate(n)
        decay = np.exp(-rate * dt)
        step_var = tb.q * (1.0 - decay**2) / (2.0 * rate)
        xi = tb.rotate_in(state.vec[name])
        noise = np.sqrt(step_var) * rng.standard_normal((tb.size, 2))
        xi_new = decay * xi + noise
        vec[name] = tb.rotate_out(xi_new)
        g_cum[name] = decay * state.g_cum[name] + noise
        var_cum[name] = decay**2 * state.var_cum[name] + step_var
    return FlowState(state.data, float(t_target), vec, g_cum, var_cum, state.em_tainted)


def em_stability_limit(data: EntryFlowData) -> float:
    """Largest stable explicit-Euler step 2 / max(rate)."""
    return 2.0 / data.max_rate()


def evolve_em(state: FlowState, t_target, dt, rng, noise_scale=1.0) -> FlowState:
    """Euler-Maruyama evolution (validation oracle for evolve_exact).

    Raises StepSizeUnstable outside the linear stability radius and warns when
    dt exceeds a tenth of it.  ``noise_scale=0`` turns the diffusion off.
    """
    _check_time(state, t_target)
    if dt <= 0:
        raise ValueError("dt must be positive")
    limit = em_stability_limit(state.data)
    if dt >= limit:
        raise StepSizeUnstable(f"dt={dt} exceeds stability radius {limit:.3e}")
    if dt > limit / 10.0:
        warnings.warn(
            f"EM step dt={dt} above the recommended bound {limit / 10.0:.3e}",
            RuntimeWarning,
            stacklevel=2,
        )
    n = state.data.n
    total = t_target - state.t
    n_full = int(np.floor(total / dt + 1e-12))
    remainders = total - n_full * dt
    steps = [dt] * n_full + ([remainders] if remainders > 1e-15 else [])
    xi = {name: state.data.tables[name].rotate_in(state.vec[name]) for name in state.data.table_order}
    for h in steps:
        for name in state.data.table_order:
            tb = state.data.tables[name]
            rate = tb.rate(n)
            z = rng.standard_normal((tb.size, 2))
            xi[name] = (1.0 - rate * h) * xi[name] + noise_scale * np.sqrt(tb.q * h) * z
    vec = {name: state.data.tables[name].rotate_out(xi[name]) for name in state.data.table_order}
    g_cum = {name: state.g_cum[name].copy() for name in state.g_cum}
    var_cum = {name: state.var_cum[name].copy() for name in state.var_cum}
    return FlowState(state.data, float(t_target), vec, g_cum, var_cum, em_tainted=True)


def exact_em_max_deviation(state: FlowState, t_target, dt, rng):
    """Strong-coupling comparison of EM against the exact kernel.

    Both schemes are driven by the same Brownian path: per step the increment
    Delta B and the exact OU stochastic integral are drawn jointly with their
    true 2x2 covariance.  Returns the max entry deviation at t_target.
    """
    _check_time(state, t_target)
    total = t_target - state.t
    n_steps = int(round(total / dt))
    if abs(n_steps * dt - total) > 1e-12:
        raise ValueError("t_target - t must be an integer multiple of dt")
    n = state.data.n
    dev = 0.0
    for name in state.data.table_order:
        tb = state.data.tables[name]
        rate = tb.rate(n)
        decay = np.exp(-rate * dt)
        var_i = (1.0 - decay**2) / (2.0 * rate)
        cov_ib = (1.0 - decay) / rate
        resid = np.sqrt(np.maximum(var_i - cov_ib**2 / dt, 0.0))
        xi_exact = tb.rotate_in(state.vec[name])
        xi_em = xi_exact.copy()
        sq = np.sqrt(tb.q)
        for _ in range(n_steps):
            u = rng.standard_normal((tb.size, 2))
            v = rng.standard_normal((tb.size, 2))
            db = np.sqrt(dt) * u
            stoch = (cov_ib / np.sqrt(dt)) * u + resid * v
            xi_em = (1.0 - rate * dt) * xi_em + sq * db
            xi_exact = decay * xi_exact + sq * stoch
        diff = tb.rotate_out(xi_em) - tb.rotate_out(xi_exact)
        dev = max(dev, float(np.max(np.abs(diff))))
    return dev


@dataclass
class GaussianDivisibleDecomposition:
    """W_t = what + sqrt(s) * wg with wg independent invariant Gaussians."""

    s: float
    c_star: float
    t: float
    what1: np.ndarray
    what2: np.ndarray
    wg1: np.ndarray
    wg2: np.ndarray


def gaussian_divisible_split(state: FlowState, rng) -> GaussianDivisibleDecomposition:
    """Extract the largest uniform invariant-Gaussian component.

    s is the minimum over entries and eigendirections of the accumulated
    Gaussian variance measured in invariant-pattern units; each direction's
    Gaussian part is split conditionally so the decomposition reproduces the
    current realization exactly.
    """
    if not (0.0 < state.t):
        raise ValueError("split requires t > 0")
    if state.t > state.data.alpha + 1e-12:
        raise ValueError("split requires t <= alpha")
    if state.em_tainted:
        raise ValueError("split requires a state evolved by evolve_exact")
    s = min(
        float(np.min(state.var_cum[name] / state.data.tables[name].q))
        for name in state.data.table_order
    )
    hat_vec, wg_vec = {}, {}
    for name in state.data.table_order:
        tb = state.data.tables[name]
        e = s * tb.q
        var = state.var_cum[name]
        frac = e / var
        g = state.g_cum[name]
        z = rng.standard_normal((tb.size, 2))
        g_ex = frac * g + np.sqrt(e * (1.0 - frac)) * z
        xi = tb.rotate_in(state.vec[name])
        hat_vec[name] = tb.rotate_out(xi - g_ex)
        wg_vec[name] = tb.rotate_out(g_ex / np.sqrt(s))
    hat_state = FlowState(state.data, state.t, hat_vec, {}, {})
    wg_state = FlowState(state.data, state.t, wg_vec, {}, {})
    what1, what2 = hat_state.pair()
    wg1, wg2 = wg_state.pair()
    return GaussianDivisibleDecomposition(s, s / state.t, state.t, what1, what2, wg1, wg2)


@dataclass
class DriftDiagnostic:
    naive_bound: float
    improved_bound: float
    measured: float


def drift_norm_diagnostic(state: FlowState) -> DriftDiagnostic:
    """Hilbert-Schmidt size of the inverse-covariance drift, <|Sigma^{-1}[W]|^2>
    over the 2N-dimensional block pair, against the two analytic scales
    N^2/alpha^2 (naive) and N^2/alpha (what the flow actually achieves)."""
    data = state.data
    n, alpha = data.n, data.alpha
    total = 0.0
    if data.symmetry is SymmetryClass.REAL_SYMMETRIC:
        to = data.tables["offdiag"]
        y = to.s_apply(state.vec["offdiag"]) / 2.0  # Sigma acts as 2C off-diagonal
        total += 2.0 * float(np.sum(y**2))
        td = data.tables["diag"]
        y = td.s_apply(state.vec["diag"])
        total += float(np.sum(y**2))
    else:
        for name in ("re", "im"):
            tb = data.tables[name]
            y = tb.s_apply(state.vec[name])
            total += 2.0 * float(np.sum(y**2))
        td = data.tables["diag"]
        y = td.s_apply(state.vec["diag"])
        total += float(np.sum(y**2))
    measured = total / (2.0 * n)
    return DriftDiagnostic(n**2 / alpha**2, n**2 / alpha, measured)
