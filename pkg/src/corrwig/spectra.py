"""Eigenvalue observables and joint local-statistics estimators.

Local statistics live on the microscopic scale: around a bulk energy E the
eigenvalue fluctuations are rescaled by N * rho(E) so consecutive bulk
eigenvalues sit at unit mean spacing.  The joint estimators implement the
sum representation of the rescaled correlation-function pairing with the
combinatorial normalizers C_k = ((N-k)! N^k / N!) * rho(E)^k.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class InsufficientSamples(RuntimeError):
    """Monte Carlo standard error exceeded the requested tolerance."""


@dataclass
class SpectrumPair:
    lambdas1: np.ndarray
    lambdas2: np.ndarray
    seed: int = -1


def eigen_spectrum(h) -> np.ndarray:
    """All eigenvalues of a Hermitian matrix, ascending."""
    return np.linalg.eigvalsh(h)


def resolvent_trace(lambdas, z) -> complex:
    """<G(z)> = N^{-1} sum 1/(lambda_i - z)."""
    lam = np.asarray(lambdas)
    return complex(np.mean(1.0 / (lam - z)))


def empirical_density(lambdas, energies, eta) -> np.ndarray:
    """Cauchy-smoothed empirical eigenvalue density at resolution eta."""
    lam = np.asarray(lambdas, dtype=float)
    e = np.asarray(energies, dtype=float)
    return np.mean(eta / np.pi / ((e[:, None] - lam[None, :]) ** 2 + eta**2), axis=1)


def local_law_residual(lambdas, mean_m, z_list) -> float:
    """max over the grid of |<G(z) - M(z)>| * N * |Im z|.

    ``mean_m`` is <M(z)> per grid point (array) or a callable z -> <M(z)>.
    """
    lam = np.asarray(lambdas)
    n = lam.shape[0]
    worst = 0.0
    for i, z in enumerate(np.asarray(z_list, dtype=complex)):
        m = mean_m(z) if callable(mean_m) else mean_m[i]
        g = resolvent_trace(lam, z)
        worst = max(worst, abs(g - m) * n * abs(z.imag))
    return worst


@dataclass
class LocalWindow:
    """Observation window at bulk energy E with the local density rho(E)."""

    energy: float
    rho: float
    k: int = 1

    def rescale(self, lambdas, n):
        return (np.asarray(lambdas) - self.energy) * n * self.rho


def nearest_fluctuations(spectrum, window: LocalWindow, n=None, k=None):
    """The k eigenvalues closest to the window energy, rescaled to the
    microscopic scale.  Ties break toward the smaller index; the selected
    eigenvalues are returned in ascending order."""
    lam = np.asarray(spectrum)
    if window.rho <= 0:
        raise ValueError("window density must be positive (E must lie in the bulk)")
    if n is None:
        n = lam.shape[0]
    if k is None:
        k = window.k
    dist = np.abs(lam - window.energy)
    order = np.argsort(dist, kind="stable")[:k]
    chosen = np.sort(lam[order])
    return window.rescale(chosen, n)


# -- test functions ------------------------------------------------------


@dataclass
class TestFunction:
    """Two-variable test function with (possibly infinite) support radii."""

    fn: object
    radius_x: float
    radius_y: float
    name: str = ""

    def __call__(self, x, y):
        return self.fn(np.asarray(x, dtype=float), np.asarray(y, dtype=float))


def _bump(u):
    out = np.zeros_like(u)
    inside = np.abs(u) < 1.0
    out[inside] = (1.0 - u[inside] ** 2) ** 3
    return out


def bump_product(width=1.0) -> TestFunction:
    """F(x, y) = (1 - (x/w)^2)^3 (1 - (y/w)^2)^3 on the square |x|, |y| < w."""

    def fn(x, y):
        return _bump(x / width) * _bump(y / width)

    return TestFunction(fn, width, width, f"bump_product({width})")


def gaussian_cosine(scale=1.0, freq=10.0, cutoff=8.0) -> TestFunction:
    """F(x, y) = exp(-(x^2 + y^2) / (2 s^2)) cos(freq (x - y)), truncated at
    |x|, |y| <= cutoff * s.

    In the difference variable this is a Gaussian-windowed cosine; for freq
    above the spectral band limit of the two-level cluster function the
    smooth two-point background integrates to nearly zero against it while
    the diagonal atom x = y survives in full.
    """

    def fn(x, y):
        env = np.exp(-(x**2 + y**2) / (2.0 * scale**2))
        out = env * np.cos(freq * (x - y))
        out[(np.abs(x) > cutoff * scale) | (np.abs(y) > cutoff * scale)] = 0.0
        return out

    return TestFunction(fn, cutoff * scale, cutoff * scale, f"gaussian_cosine({scale},{freq})")


def marginal_bump(width=1.0) -> TestFunction:
    """F(x, y) = bump(x / w), independent of y (infinite y-radius)."""

    def fn(x, y):
        return _bump(x / width) * np.ones_like(y)

    return TestFunction(fn, width, np.inf, f"marginal_bump({width})")


def from_grid(x_grid, y_grid, values) -> TestFunction:
    """Tabulated test function with cubic interpolation, zero outside."""
    from scipy.interpolate import RectBivariateSpline

    spl = RectBivariateSpline(x_grid, y_grid, values, kx=3, ky=3)
    rx = float(max(abs(x_grid[0]), abs(x_grid[-1])))
    ry = float(max(abs(y_grid[0]), abs(y_grid[-1])))

    def fn(x, y):
        out = spl.ev(x, y)
        out = np.where(
            (x < x_grid[0]) | (x > x_grid[-1]) | (y < y_grid[0]) | (y > y_grid[-1]),
            0.0,
            out,
        )
        return out

    return TestFunction(fn, rx, ry, "tabulated")


# -- joint local statistics ----------------------------------------------


def correlation_normalizer(n, k, rho) -> float:
    """C_k = ((N-k)! N^k / N!) rho^k; equals rho^k (1 + O(k^2/N))."""
    c = 1.0
    for j in range(k):
        c *= n / (n - j)
    return c * rho**k


def _window_values(lambdas, window, n, radius):
    x = window.rescale(lambdas, n)
    if np.isinf(radius):
        return x
    return x[np.abs(x) <= radius]


@dataclass
class JointStatResult:
    joint: float
    product: float
    gap: float
    stderr: float
    joint_stderr: float
    product_stderr: float
    diagonal: float = 0.0
    diagonal_stderr: float = 0.0
    n_samples: int = 0


def joint_local_statistic(
    samples,
    f: TestFunction,
    window1: LocalWindow,
    window2: LocalWindow,
    n=None,
    max_stderr=None,
) -> JointStatResult:
    """Monte Carlo estimate of the rescaled joint pairing (m = n = 1) and of
    the product of marginals, from the same sample set.

    The joint estimate uses every sample; the marginal product pairs the
    first-half samples' first spectra with the second-half samples' second
    spectra, so the two factors are statistically independent.  The returned
    ``diagonal`` is the coincident-index sub-sum (the atom on x = y when the
    two matrices are identical), estimated from the same samples.
    """
    samples = list(samples)
    if not samples:
        raise InsufficientSamples("no samples supplied")
    if n is None:
        n = np.asarray(samples[0].lambdas1).shape[0]
    c1 = correlation_normalizer(n, 1, window1.rho)
    c2 = correlation_normalizer(n, 1, window2.rho)
    norm = c1 * c2

    joint_terms = np.empty(len(samples))
    diag_terms = np.empty(len(samples))
    xs_list, ys_list = [], []
    for i, sp in enumerate(samples):
        xs = _window_values(sp.lambdas1, window1, n, f.radius_x)
        ys = _window_values(sp.lambdas2, window2, n, f.radius_y)
        xs_list.append(xs)
        ys_list.append(ys)
        if xs.size and ys.size:
            joint_terms[i] = norm * float(np.sum(f(xs[:, None], ys[None, :])))
        else:
            joint_terms[i] = 0.0
        k = min(xs.size, ys.size)
        diag_terms[i] = norm * float(np.sum(f(xs[:k], ys[:k]))) if k else 0.0

    half = len(samples) // 2
    prod_terms = np.empty(half)
    for i in range(half):
        xs, ys = xs_list[i], ys_list[half + i]
        if xs.size and ys.size:
            prod_terms[i] = norm * float(np.sum(f(xs[:, None], ys[None, :])))
        else:
            prod_terms[i] = 0.0

    joint = float(np.mean(joint_terms))
    joint_se = float(np.std(joint_terms, ddof=1) / np.sqrt(len(samples)))
    product = float(np.mean(prod_terms))
    product_se = float(np.std(prod_terms, ddof=1) / np.sqrt(half))
    gap = joint - product
    stderr = float(np.hypot(joint_se, product_se))
    if max_stderr is not None and stderr > max_stderr:
        raise InsufficientSamples(
            f"stderr {stderr:.3e} exceeds requested tolerance {max_stderr:.3e}"
        )
    return JointStatResult(
        joint=joint,
        product=product,
        gap=gap,
        stderr=stderr,
        joint_stderr=joint_se,
        product_stderr=product_se,
        diagonal=float(np.mean(diag_terms)),
        diagonal_stderr=float(np.std(diag_terms, ddof=1) / np.sqrt(len(samples))),
        n_samples=len(samples),
    )


@dataclass
class FluctuationCorrelation:
    corr: float
    ci_lo: float
    ci_hi: float
    x1: np.ndarray
    x2: np.ndarray


def fluctuation_correlation(
    samples, window1: LocalWindow, window2: LocalWindow, n=None, n_boot=400, boot_seed=0
) -> FluctuationCorrelation:
    """Pearson correlation of the nearest-eigenvalue rescaled fluctuations at
    the two windows, with a bootstrap confidence interval."""
    samples = list(samples)
    if len(samples) < 100:
        raise InsufficientSamples("fluctuation_correlation needs at least 100 samples")
    if n is None:
        n = np.asarray(samples[0].lambdas1).shape[0]
    x1 = np.array([nearest_fluctuations(sp.lambdas1, window1, n, k=1)[0] for sp in samples])
    x2 = np.array([nearest_fluctuations(sp.lambdas2, window2, n, k=1)[0] for sp in samples])
    corr = _pearson(x1, x2)
    rng = np.random.default_rng(boot_seed)
    boots = np.empty(n_boot)
    idx_all = np.arange(len(samples))
    for b in range(n_boot):
        idx = rng.choice(idx_all, size=len(samples), replace=True)
        boots[b] = _pearson(x1[idx], x2[idx])
    lo, hi = np.percentile(boots, [2.5, 97.5])
    return FluctuationCorrelation(corr, float(lo), float(hi), x1, x2)


def _pearson(x, y):
    xc = x - x.mean()
    yc = y - y.mean()
    denom = np.sqrt(np.sum(xc**2) * np.sum(yc**2))
    if denom == 0:
        return 0.0
    return float(np.sum(xc * yc) / denom)


def trace_square_correlation(trace_pairs) -> float:
    """Sample correlation of Tr H1^2 and Tr H2^2 across samples."""
    tp = np.asarray(trace_pairs, dtype=float)
    return _pearson(tp[:, 0], tp[:, 1])


def trace_squares(h1, h2):
    return float(np.sum(np.abs(h1) ** 2)), float(np.sum(np.abs(h2) ** 2))


def gap_ratio_statistic(spectrum, bulk_interval) -> float:
    """Mean consecutive-gap ratio <r> = <min(g_i, g_{i+1}) / max(g_i, g_{i+1})>
    over gaps inside the bulk interval."""
    lam = np.sort(np.asarray(spectrum, dtype=float))
    lo, hi = bulk_interval
    sel = lam[(lam >= lo) & (lam <= hi)]
    if sel.size < 50:
        raise ValueError(f"need >= 50 bulk eigenvalues, got {sel.size}")
    gaps = np.diff(sel)
    gaps = gaps[gaps > 0]
    r = np.minimum(gaps[:-1], gaps[1:]) / np.maximum(gaps[:-1], gaps[1:])
    return float(np.mean(r))


@dataclass
class GreenObservable:
    z1: np.ndarray
    z2: np.ndarray
    value: float


def green_observable(lambdas1, lambdas2, z1_list, z2_list) -> GreenObservable:
    """R = prod_p <Im G1(z_p)> * prod_q <Im G2(z_q)> from eigenvalues."""
    z1 = np.asarray(z1_list, dtype=complex)
    z2 = np.asarray(z2_list, dtype=complex)
    val = 1.0
    for z in z1:
        val *= resolvent_trace(lambdas1, z).imag
    for z in z2:
        val *= resolvent_trace(lambdas2, z).imag
    return GreenObservable(z1, z2, float(val))
