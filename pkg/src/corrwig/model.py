"""Domain types and samplers for correlated Wigner-type matrix pairs.

The basic object is a pair of Hermitian random matrices whose entries are
centered, independent within each matrix (up to symmetry), and correlated
across the two matrices only at matching index pairs.  The strength of the
cross-correlation is controlled by a decorrelation parameter ``alpha``:
every per-entry correlation coefficient is bounded by ``1 - alpha``.
"""

from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass, field

import numpy as np


class SymmetryClass(enum.Enum):
    """Matrix symmetry class; ``beta`` follows the usual ensemble convention."""

    REAL_SYMMETRIC = "real"
    COMPLEX_HERMITIAN = "complex"

    @property
    def beta(self) -> int:
        return 1 if self is SymmetryClass.REAL_SYMMETRIC else 2

    @classmethod
    def parse(cls, value) -> "SymmetryClass":
        if isinstance(value, SymmetryClass):
            return value
        return cls(str(value))


class EntryLaw(enum.Enum):
    GAUSSIAN = "gaussian"
    SHIFTED_BERNOULLI = "shifted_bernoulli"

    @classmethod
    def parse(cls, value) -> "EntryLaw":
        if isinstance(value, EntryLaw):
            return value
        return cls(str(value))


class UnrealizableCorrelation(ValueError):
    """Requested cross-correlation cannot be realized by the chosen entry law."""


def _as_square(arr, n, name):
    a = np.asarray(arr, dtype=float)
    if a.shape != (n, n):
        raise ValueError(f"{name} must have shape ({n}, {n}), got {a.shape}")
    return a


@dataclass
class CorrelationProfile:
    """Per-entry second-moment data for a matrix pair.

    ``variance1[a, b]`` and ``variance2[a, b]`` are the total entry variances
    E|w_ab|^2 of the two matrices (order 1/N in the mean-field regime).
    ``cross[a, b]`` is the correlation coefficient between matching entries,
    constrained to |cross| <= 1 - alpha.  All three arrays are symmetric.
    """

    variance1: np.ndarray
    variance2: np.ndarray
    cross: np.ndarray
    alpha: float

    def __post_init__(self):
        n = np.asarray(self.variance1).shape[0]
        self.variance1 = _as_square(self.variance1, n, "variance1")
        self.variance2 = _as_square(self.variance2, n, "variance2")
        self.cross = _as_square(self.cross, n, "cross")

    @property
    def n(self) -> int:
        return self.variance1.shape[0]

    @property
    def cross_covariance(self) -> np.ndarray:
        """c_ab = rho_ab * sigma1_ab * sigma2_ab, the entry cross-covariance."""
        return self.cross * np.sqrt(self.variance1 * self.variance2)

    @classmethod
    def flat(cls, n, rho=0.0, alpha=None, scale=1.0) -> "CorrelationProfile":
        """Uniform profile: every entry variance equals ``scale/n``."""
        v = np.full((n, n), scale / n)
        r = np.full((n, n), float(rho))
        if alpha is None:
            alpha = 1.0 - float(np.max(np.abs(r)))
        return cls(v, v.copy(), r, float(alpha))

    @classmethod
    def invariant_flavor(cls, n, symmetry, rho=0.0, alpha=None) -> "CorrelationProfile":
        """GOE/GUE-patterned variances (diagonal doubled in the real class)."""
        symmetry = SymmetryClass.parse(symmetry)
        v = np.full((n, n), 1.0 / n)
        if symmetry is SymmetryClass.REAL_SYMMETRIC:
            np.fill_diagonal(v, 2.0 / n)
        r = np.full((n, n), float(rho))
        if alpha is None:
            alpha = 1.0 - float(np.max(np.abs(r)))
        return cls(v, v.copy(), r, float(alpha))


@dataclass
class PairModelSpec:
    """Full description of a correlated matrix-pair model."""

    n: int
    symmetry: SymmetryClass
    profile: CorrelationProfile
    deformation1: np.ndarray | None = None
    deformation2: np.ndarray | None = None
    filter1: object | None = None  # FilterSpec from corrwig.filtering
    filter2: object | None = None
    entry_law: EntryLaw = EntryLaw.GAUSSIAN
    c0: float = 0.5
    C0: float = 10.0

    def __post_init__(self):
        self.symmetry = SymmetryClass.parse(self.symmetry)
        self.entry_law = EntryLaw.parse(self.entry_law)

    def deformation(self, j) -> np.ndarray:
        a = self.deformation1 if j == 1 else self.deformation2
        if a is None:
            dtype = float if self.symmetry is SymmetryClass.REAL_SYMMETRIC else complex
            return np.zeros((self.n, self.n), dtype=dtype)
        return np.asarray(a)

    def filter(self, j):
        from . import filtering

        f = self.filter1 if j == 1 else self.filter2
        return f if f is not None else filtering.FilterSpec.identity()

    def variances(self, j) -> np.ndarray:
        return self.profile.variance1 if j == 1 else self.profile.variance2

    def to_json_dict(self) -> dict:
        def arr(a):
            return None if a is None else np.asarray(a).tolist()

        def filt(f):
            return None if f is None else f.to_json_dict()

        return {
            "schema": 1,
            "n": int(self.n),
            "symmetry": self.symmetry.value,
            "entry_law": self.entry_law.value,
            "c0": self.c0,
            "C0": self.C0,
            "profile": {
                "variance1": self.profile.variance1.tolist(),
                "variance2": self.profile.variance2.tolist(),
                "cross": self.profile.cross.tolist(),
                "alpha": self.profile.alpha,
            },
            "deformation1": arr(self.deformation1),
            "deformation2": arr(self.deformation2),
            "filter1": filt(self.filter1),
            "filter2": filt(self.filter2),
        }

    @classmethod
    def from_json_dict(cls, d) -> "PairModelSpec":
        from . import filtering

        if d.get("schema") != 1:
            raise ValueError(f"unsupported PairModelSpec schema: {d.get('schema')!r}")
        prof = d["profile"]
        profile = CorrelationProfile(
            np.asarray(prof["variance1"], dtype=float),
            np.asarray(prof["variance2"], dtype=float),
            np.asarray(prof["cross"], dtype=float),
            float(prof["alpha"]),
        )

        def arr(x):
            return None if x is None else np.asarray(x)

        def filt(x):
            return None if x is None else filtering.FilterSpec.from_json_dict(x)

        return cls(
            n=int(d["n"]),
            symmetry=SymmetryClass(d["symmetry"]),
            profile=profile,
            deformation1=arr(d.get("deformation1")),
            deformation2=arr(d.get("deformation2")),
            filter1=filt(d.get("filter1")),
            filter2=filt(d.get("filter2")),
            entry_law=EntryLaw(d.get("entry_law", "gaussian")),
            c0=float(d.get("c0", 0.5)),
            C0=float(d.get("C0", 10.0)),
        )

    def spec_hash(self) -> str:
        cached = getattr(self, "_spec_hash", None)
        if cached is None:
            payload = json.dumps(self.to_json_dict(), sort_keys=True).encode()
            cached = hashlib.sha256(payload).hexdigest()
            object.__setattr__(self, "_spec_hash", cached)
        return cached


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class ValidationReport:
    checks: list[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list[CheckResult]:
        return [c for c in self.checks if not c.passed]

    def summary(self) -> str:
        lines = []
        for c in self.checks:
            status = "PASS" if c.passed else "FAIL"
            lines.append(f"[{status}] {c.name}" + (f": {c.detail}" if c.detail else ""))
        return "\n".join(lines)


def operator_norm(a) -> float:
    a = np.asarray(a)
    if a.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvalsh(a))))


def validate_spec(spec: PairModelSpec) -> ValidationReport:
    """Check the model assumptions: variance bounds, cross-correlation bound,
    deformation norm bound, Hermitian symmetry of all declared matrices."""
    rep = ValidationReport()
    n, prof = spec.n, spec.profile
    lo, hi = spec.c0 / n, spec.C0 / n

    for j, v in ((1, prof.variance1), (2, prof.variance2)):
        bad = np.argwhere((v < lo - 1e-15) | (v > hi + 1e-15))
        if bad.size:
            a, b = bad[0]
            rep.checks.append(
                CheckResult(
                    f"variance_bounds_w{j}",
                    False,
                    f"entry ({a}, {b}): {v[a, b]:.3e} outside [{lo:.3e}, {hi:.3e}]",
                )
            )
        else:
            rep.checks.append(CheckResult(f"variance_bounds_w{j}", True))

    bound = 1.0 - prof.alpha
    bad = np.argwhere(np.abs(prof.cross) > bound + 1e-12)
    if bad.size:
        a, b = bad[0]
        rep.checks.append(
            CheckResult(
                "cross_correlation_bound",
                False,
                f"entry ({a}, {b}): |rho|={abs(prof.cross[a, b]):.4f} > 1-alpha={bound:.4f}",
            )
        )
    else:
        rep.checks.append(CheckResult("cross_correlation_bound", True))

    sym_ok = (
        np.array_equal(prof.cross, prof.cross.T)
        and np.array_equal(prof.variance1, prof.variance1.T)
        and np.array_equal(prof.variance2, prof.variance2.T)
    )
    rep.checks.append(
        CheckResult("profile_symmetry", sym_ok, "" if sym_ok else "profile arrays not symmetric")
    )

    for j in (1, 2):
        a = spec.deformation(j)
        herm = np.allclose(a, a.conj().T, rtol=0, atol=0)
        rep.checks.append(
            CheckResult(f"deformation{j}_hermitian", herm, "" if herm else "A != A^*")
        )
        if herm:
            nrm = operator_norm(a)
            ok = nrm <= spec.C0 + 1e-12
            rep.checks.append(
                CheckResult(
                    f"deformation{j}_norm",
                    ok,
                    "" if ok else f"||A|| = {nrm:.4f} > C0 = {spec.C0}",
                )
            )
        else:
            rep.checks.append(CheckResult(f"deformation{j}_norm", False, "not Hermitian"))

    return rep


@dataclass
class MatrixPairSample:
    """One realization of the pair: raw signals and filtered+deformed matrices."""

    w1: np.ndarray
    w2: np.ndarray
    h1: np.ndarray
    h2: np.ndarray
    seed: int
    spec_hash: str = ""


def _rng_from(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def draw_correlated_scalars(rng, v1, v2, rho, law, size):
    """Draw centered pairs (x1, x2) with variances v1, v2 and correlation rho.

    Gaussian law uses the shared-component construction for rho >= 0 and the
    2x2 Cholesky factor for rho < 0.  The two-point law is the symmetric
    +/-sigma law; its correlated pairs are realized by a shared/independent
    mixture, which only exists for rho >= 0.
    """
    v1 = np.broadcast_to(np.asarray(v1, dtype=float), size)
    v2 = np.broadcast_to(np.asarray(v2, dtype=float), size)
    rho = np.broadcast_to(np.asarray(rho, dtype=float), size)
    if law is EntryLaw.GAUSSIAN:
        z0 = rng.standard_normal(size)
        z1 = rng.standard_normal(size)
        z2 = rng.standard_normal(size)
        pos = rho >= 0
        r = np.abs(rho)
        # shared component: sqrt(rho) z0 + sqrt(1-rho) z_j
        u1_shared = np.sqrt(r) * z0 + np.sqrt(1.0 - r) * z1
        u2_shared = np.sqrt(r) * z0 + np.sqrt(1.0 - r) * z2
        # Cholesky for negative rho
        u2_chol = rho * z1 + np.sqrt(np.clip(1.0 - rho**2, 0.0, None)) * z2
        u1 = np.where(pos, u1_shared, z1)
        u2 = np.where(pos, u2_shared, u2_chol)
    elif law is EntryLaw.SHIFTED_BERNOULLI:
        if np.any(rho < 0):
            raise UnrealizableCorrelation(
                "two-point mixture cannot realize negative cross-correlation"
            )
        b0 = rng.integers(0, 2, size=size) * 2.0 - 1.0
        b1 = rng.integers(0, 2, size=size) * 2.0 - 1.0
        b2 = rng.integers(0, 2, size=size) * 2.0 - 1.0
        share = rng.random(size) < rho
        u1 = np.where(share, b0, b1)
        u2 = np.where(share, b0, b2)
    else:
        raise ValueError(f"unknown entry law {law}")
    return np.sqrt(v1) * u1, np.sqrt(v2) * u2


def sample_pair(spec: PairModelSpec, seed) -> MatrixPairSample:
    """Draw one correlated pair; bit-reproducible from (spec, seed)."""
    rng = _rng_from(seed)
    n = spec.n
    prof = spec.profile
    law = spec.entry_law
    iu = np.triu_indices(n)
    v1u, v2u = prof.variance1[iu], prof.variance2[iu]
    rhou = prof.cross[iu]
    diag_mask = iu[0] == iu[1]

    if spec.symmetry is SymmetryClass.REAL_SYMMETRIC:
        x1, x2 = draw_correlated_scalars(rng, v1u, v2u, rhou, law, v1u.shape)
        w1 = np.zeros((n, n))
        w2 = np.zeros((n, n))
        w1[iu] = x1
        w2[iu] = x2
        w1 = w1 + np.triu(w1, 1).T
        w2 = w2 + np.triu(w2, 1).T
    else:
        # Real and imaginary parts are independent and each carries the same
        # correlation coefficient; off-diagonal parts have half the variance,
        # the diagonal is real with full variance.
        half1 = np.where(diag_mask, v1u, v1u / 2.0)
        half2 = np.where(diag_mask, v2u, v2u / 2.0)
        re1, re2 = draw_correlated_scalars(rng, half1, half2, rhou, law, v1u.shape)
        im1, im2 = draw_correlated_scalars(rng, v1u / 2.0, v2u / 2.0, rhou, law, v1u.shape)
        im1 = np.where(diag_mask, 0.0, im1)
        im2 = np.where(diag_mask, 0.0, im2)
        w1 = np.zeros((n, n), dtype=complex)
        w2 = np.zeros((n, n), dtype=complex)
        w1[iu] = re1 + 1j * im1
        w2[iu] = re2 + 1j * im2
        w1 = w1 + np.triu(w1, 1).conj().T
        w2 = w2 + np.triu(w2, 1).conj().T

    h1 = spec.deformation(1) + spec.filter(1).apply(w1)
    h2 = spec.deformation(2) + spec.filter(2).apply(w2)
    seed_val = int(seed) if np.isscalar(seed) and not isinstance(seed, np.random.Generator) else -1
    return MatrixPairSample(w1, w2, h1, h2, seed_val, spec.spec_hash())


def sample_gaussian_invariant(n, symmetry, seed) -> np.ndarray:
    """Invariant Gaussian ensemble sample.

    Real class: off-diagonal variance 1/n, diagonal variance 2/n.
    Complex class: off-diagonal E|w|^2 = 1/n (Re and Im each 1/(2n)),
    diagonal real with variance 1/n.
    """
    rng = _rng_from(seed)
    symmetry = SymmetryClass.parse(symmetry)
    if symmetry is SymmetryClass.REAL_SYMMETRIC:
        a = rng.standard_normal((n, n))
        return (a + a.T) / np.sqrt(2.0 * n)
    x = rng.standard_normal((n, n))
    y = rng.standard_normal((n, n))
    return ((x + x.T) + 1j * (y - y.T)) / (2.0 * np.sqrt(n))


def sample_example_optimal(
    n, symmetry, alpha, seed, deformation=None, normalize=True
) -> MatrixPairSample:
    """Pair sharing a common signal plus independent invariant Gaussian parts:
    w_j = W + sqrt(alpha) * G_j, optionally rescaled to keep the total entry
    variance at the invariant-flavor scale.  Identical deformations applied."""
    rng = _rng_from(seed)
    symmetry = SymmetryClass.parse(symmetry)
    w = sample_gaussian_invariant(n, symmetry, rng)
    g1 = sample_gaussian_invariant(n, symmetry, rng)
    g2 = sample_gaussian_invariant(n, symmetry, rng)
    s = np.sqrt(alpha)
    w1 = w + s * g1
    w2 = w + s * g2
    if normalize:
        w1 = w1 / np.sqrt(1.0 + alpha)
        w2 = w2 / np.sqrt(1.0 + alpha)
    if deformation is None:
        a = np.zeros_like(w1)
    else:
        a = np.asarray(deformation)
    seed_val = int(seed) if np.isscalar(seed) and not isinstance(seed, np.random.Generator) else -1
    return MatrixPairSample(w1, w2, a + w1, a + w2, seed_val, "")


def sample_mixture_pair(n, symmetry, alpha, seed) -> MatrixPairSample:
    """Pair saturating the decorrelation bound via a shared invariant noise:
    h_j = sqrt(1-alpha) W0 + sqrt(alpha) W_j with independent invariant W's."""
    rng = _rng_from(seed)
    symmetry = SymmetryClass.parse(symmetry)
    w0 = sample_gaussian_invariant(n, symmetry, rng)
    wa = sample_gaussian_invariant(n, symmetry, rng)
    wb = sample_gaussian_invariant(n, symmetry, rng)
    a, b = np.sqrt(1.0 - alpha), np.sqrt(alpha)
    h1 = a * w0 + b * wa
    h2 = a * w0 + b * wb
    seed_val = int(seed) if np.isscalar(seed) and not isinstance(seed, np.random.Generator) else -1
    return MatrixPairSample(h1, h2, h1, h2, seed_val, "")
