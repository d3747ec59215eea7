"""Linear filtering transformations on Hermitian matrices.

A filter is a symmetry-preserving linear map Phi acting on the space of
real-symmetric or complex-Hermitian N x N matrices.  Translation-invariant
filters are represented by a kernel F on the discrete torus (Z/NZ)^2 and act
by double circular convolution; generic small-N filters carry their dense
4-index action.  The covariance tensor of a filtered signal transforms by
sandwiching: Sigma -> Phi Sigma Phi.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class FilterDimensionMismatch(ValueError):
    pass


_DIRECT_CONV_MAX_N = 64
_EXPLICIT_LOWER_BOUND_MAX_N = 32


def torus_distance(x, n):
    x = np.mod(x, n)
    return np.minimum(x, n - x)


@dataclass
class BasisMatrix:
    """Symmetrized unit basis element: ones at (i, k) and (k, i); the imaginary
    variant carries +i / -i instead (complex class only, i < k)."""

    i: int
    k: int
    variant: str = "real"  # "real" | "imag"

    def build(self, n, beta=1) -> np.ndarray:
        if not (0 <= self.i <= self.k < n):
            raise ValueError(f"invalid basis indices ({self.i}, {self.k}) for n={n}")
        if self.variant == "imag":
            if beta != 2:
                raise ValueError("imaginary basis element requires the complex class")
            if self.i == self.k:
                raise ValueError("imaginary basis element needs i < k")
            e = np.zeros((n, n), dtype=complex)
            e[self.i, self.k] = 1j
            e[self.k, self.i] = -1j
            return e
        dtype = complex if beta == 2 else float
        e = np.zeros((n, n), dtype=dtype)
        e[self.i, self.k] = 1.0
        e[self.k, self.i] = 1.0
        return e


def kernel_from_triples(n, triples, real=True):
    dtype = float if real else complex
    f = np.zeros((n, n), dtype=dtype)
    for x, y, val in triples:
        f[int(x) % n, int(y) % n] += val
    return f


def kernel_power_decay(n, s=3.0, c=1.0):
    """F(x, y) = c / (1 + (|x| + |y|)^s) with torus distances."""
    x = torus_distance(np.arange(n), n)
    d = x[:, None] + x[None, :]
    return c / (1.0 + d.astype(float) ** s)

def kernel_stencil5(n, eps):
    """Kronecker delta at the origin plus eps at the four nearest neighbors."""
    f = np.zeros((n, n))
    f[0, 0] = 1.0
    f[1 % n, 0] += eps
    f[(n - 1) % n, 0] += eps
    f[0, 1 % n] += eps
    f[0, (n - 1) % n] += eps
    return f


def kernel_delta_power(n, s=3.0, c=0.1):
    """Identity delta plus a polynomially decaying tail."""
    f = kernel_power_decay(n, s=s, c=c)
    f[0, 0] += 1.0
    return f


_KERNEL_PRESETS = {
    "power_decay": kernel_power_decay,
    "stencil5": kernel_stencil5,
    "delta_power": kernel_delta_power,
}


@dataclass
class FilterSpec:
    """A filtering transformation: identity, torus convolution, or an explicit
    dense operator (small N only).

    ``decay_exponent``/``decay_constant`` are the *declared* locality
    parameters (s > 2, C0) that ``check_decay`` verifies against the actual
    basis images.
    """

    kind: str  # "identity" | "convolution" | "explicit"
    kernel: np.ndarray | None = None  # (n, n), indexed by torus offsets
    tensor: np.ndarray | None = None  # (n, n, n, n): out_ab = sum T[a,b,c,d] R_cd
    decay_exponent: float = 3.0
    decay_constant: float = 10.0
    preset: dict | None = field(default=None)

    @classmethod
    def identity(cls, decay_exponent=3.0, decay_constant=10.0) -> "FilterSpec":
        return cls("identity", decay_exponent=decay_exponent, decay_constant=decay_constant)

    @classmethod
    def convolution(cls, kernel, decay_exponent=3.0, decay_constant=10.0, preset=None):
        return cls(
            "convolution",
            kernel=np.asarray(kernel),
            decay_exponent=decay_exponent,
            decay_constant=decay_constant,
            preset=preset,
        )

    @classmethod
    def from_preset(cls, name, n, decay_exponent=3.0, decay_constant=10.0, **params):
        if name == "identity":
            return cls.identity(decay_exponent, decay_constant)
        try:
            maker = _KERNEL_PRESETS[name]
        except KeyError:
            raise ValueError(f"unknown kernel preset {name!r}") from None
        kernel = maker(n, **params)
        return cls.convolution(
            kernel,
            decay_exponent=decay_exponent,
            decay_constant=decay_constant,
            preset={"name": name, "n": n, **params},
        )

    @classmethod
    def explicit(cls, tensor, decay_exponent=3.0, decay_constant=10.0) -> "FilterSpec":
        t = np.asarray(tensor)
        if t.ndim != 4:
            raise ValueError("explicit operator tensor must be 4-dimensional")
        return cls("explicit", tensor=t, decay_exponent=decay_exponent, decay_constant=decay_constant)

    @property
    def is_identity(self) -> bool:
        return self.kind == "identity"

    def kernel_is_hermitian(self) -> bool:
        """F(x, y) == conj(F(y, x)) for all torus points."""
        if self.kind != "convolution":
            return True
        f = self.kernel
        return bool(np.allclose(f, f.T.conj(), rtol=0, atol=1e-14))

    # -- action ------------------------------------------------------------

    def apply(self, w: np.ndarray) -> np.ndarray:
        if self.kind == "identity":
            return w
        w = np.asarray(w)
        if self.kind == "convolution":
            n = self.kernel.shape[0]
            if w.shape != (n, n):
                raise FilterDimensionMismatch(
                    f"matrix shape {w.shape} does not match kernel size {n}"
                )
            if n <= _DIRECT_CONV_MAX_N:
                return _convolve_direct(self.kernel, w)
            return _convolve_fft(self.kernel, w)
        if self.kind == "explicit":
            n = self.tensor.shape[0]
            if w.shape != (n, n):
                raise FilterDimensionMismatch(
                    f"matrix shape {w.shape} does not match operator size {n}"
                )
            out = np.tensordot(self.tensor, w, axes=([2, 3], [0, 1]))
            if not np.iscomplexobj(w) and not np.iscomplexobj(self.tensor):
                return out
            return out
        raise ValueError(f"unknown filter kind {self.kind!r}")

    # -- serialization -----------------------------------------------------

    def to_json_dict(self) -> dict:
        d = {
            "kind": self.kind,
            "decay_exponent": self.decay_exponent,
            "decay_constant": self.decay_constant,
        }
        if self.kind == "convolution":
            if self.preset is not None:
                d["preset"] = self.preset
            else:
                f = self.kernel
                xs, ys = np.nonzero(f)
                if np.iscomplexobj(f):
                    trips = [[int(x), int(y), [f[x, y].real, f[x, y].imag]] for x, y in zip(xs, ys)]
                else:
                    trips = [[int(x), int(y), float(f[x, y])] for x, y in zip(xs, ys)]
                d["n"] = int(f.shape[0])
                d["triples"] = trips
                d["complex"] = bool(np.iscomplexobj(f))
        elif self.kind == "explicit":
            d["tensor"] = self.tensor.tolist()
        return d

    @classmethod
    def from_json_dict(cls, d) -> "FilterSpec":
        kind = d["kind"]
        s = float(d.get("decay_exponent", 3.0))
        c0 = float(d.get("decay_constant", 10.0))
        if kind == "identity":
            return cls.identity(s, c0)
        if kind == "convolution":
            if "preset" in d:
                p = dict(d["preset"])
                name, n = p.pop("name"), p.pop("n")
                return cls.from_preset(name, n, decay_exponent=s, decay_constant=c0, **p)
            n = int(d["n"])
            is_complex = bool(d.get("complex", False))
            if is_complex:
                triples = [(x, y, complex(v[0], v[1])) for x, y, v in d["triples"]]
            else:
                triples = [(x, y, float(v)) for x, y, v in d["triples"]]
            return cls.convolution(
                kernel_from_triples(n, triples, real=not is_complex),
                decay_exponent=s,
                decay_constant=c0,
            )
        if kind == "explicit":
            return cls.explicit(np.asarray(d["tensor"]), s, c0)
        raise ValueError(f"unknown filter kind {kind!r}")


def _convolve_direct(f, r):
    """Literal double sum over nonzero kernel offsets: out_ab = sum F(x,y) R_{a-x,b-y}."""
    out = np.zeros(r.shape, dtype=np.result_type(f, r))
    xs, ys = np.nonzero(f)
    for x, y in zip(xs, ys):
        out += f[x, y] * np.roll(r, shift=(x, y), axis=(0, 1))
    return out


def _convolve_fft(f, r):
    out = np.fft.ifft2(np.fft.fft2(f) * np.fft.fft2(r))
    if not np.iscomplexobj(f) and not np.iscomplexobj(r):
        return out.real
    return out


def apply_filter(phi: FilterSpec, w: np.ndarray) -> np.ndarray:
    return phi.apply(w)


def basis_image(phi: FilterSpec, basis: BasisMatrix, n, beta=1) -> np.ndarray:
    return phi.apply(basis.build(n, beta))


def check_decay(phi: FilterSpec, s, c0, n, beta=1):
    """Verify |Phi[E_ik]_ab| <= c0 / (1 + dist^s) over all basis images.

    Since basis images are Hermitian, decay is measured by the distance from
    the unordered entry pair {a, b} to {i, k}:
    d = min(|a-i| + |b-k|, |a-k| + |b-i|), with torus distances substituted
    for convolution filters.  Returns (passed, worst) where worst describes
    the largest ratio found.
    """
    worst = {"ratio": 0.0}
    a_idx = np.arange(n)

    def scan(i, k, img, dist):
        nonlocal worst
        bound = c0 / (1.0 + dist.astype(float) ** s)
        ratio = np.abs(img) / bound
        idx = np.unravel_index(np.argmax(ratio), ratio.shape)
        if ratio[idx] > worst["ratio"]:
            worst = {
                "ratio": float(ratio[idx]),
                "i": i,
                "k": k,
                "a": int(idx[0]),
                "b": int(idx[1]),
                "value": float(np.abs(img[idx])),
                "bound": float(bound[idx]),
            }

    conv = phi.kind == "convolution"

    def pair_dist(i, k):
        if conv:
            da_i = torus_distance(a_idx - i, n)
            da_k = torus_distance(a_idx - k, n)
        else:
            da_i = np.abs(a_idx - i)
            da_k = np.abs(a_idx - k)
        aligned = da_i[:, None] + da_k[None, :]
        swapped = da_k[:, None] + da_i[None, :]
        return np.minimum(aligned, swapped)

    for i in range(n):
        for k in range(i, n):
            if conv:
                f = phi.kernel
                img = f[(a_idx[:, None] - i) % n, (a_idx[None, :] - k) % n]
                if i != k:
                    img = img + f[(a_idx[:, None] - k) % n, (a_idx[None, :] - i) % n]
            else:
                img = phi.apply(BasisMatrix(i, k).build(n, beta))
            dist = pair_dist(i, k)
            scan(i, k, img, dist)
            if beta == 2 and k > i:
                img = phi.apply(BasisMatrix(i, k, "imag").build(n, beta))
                scan(i, k, img, dist)
    return worst["ratio"] <= 1.0 + 1e-12, worst


def kernel_fourier(f):
    """F_hat(phi, theta) = sum F(x, y) exp(2 pi i (x phi - y theta)) on the
    n x n frequency grid phi, theta in {0, 1/n, ..., (n-1)/n}."""
    n = f.shape[0]
    a = np.fft.ifft(f, axis=0) * n  # sum_x F e^{+2 pi i x j / n}
    return np.fft.fft(a, axis=1)  # sum_y ... e^{-2 pi i y l / n}


def sym_basis(n, beta=1):
    """Orthonormal real basis of the symmetry class (Frobenius inner product)."""
    basis = []
    for i in range(n):
        basis.append(BasisMatrix(i, i).build(n, beta))
    inv_sqrt2 = 1.0 / np.sqrt(2.0)
    for i in range(n):
        for k in range(i + 1, n):
            basis.append(BasisMatrix(i, k).build(n, beta) * inv_sqrt2)
            if beta == 2:
                basis.append(BasisMatrix(i, k, "imag").build(n, beta) * inv_sqrt2)
    return basis


def operator_matrix(apply_fn, n, beta=1):
    """Assemble <B_p, Phi[B_q]> over the orthonormal symmetry basis."""
    basis = sym_basis(n, beta)
    dim = len(basis)
    q = np.zeros((dim, dim))
    images = [apply_fn(b) for b in basis]
    for p, bp in enumerate(basis):
        for qi, img in enumerate(images):
            q[p, qi] = np.real(np.sum(bp.conj() * img))
    return q


def check_lower_bound(phi: FilterSpec, c0, n, beta=1):
    """Check Phi >= c0 as a quadratic form on the symmetry class.

    Convolution filters are checked through the kernel's discrete Fourier
    transform on the n x n frequency grid; explicit operators (n <= 32) by
    the smallest eigenvalue of the assembled operator matrix.
    Returns (passed, min_value).
    """
    if phi.kind == "identity":
        return 1.0 >= c0, 1.0
    if phi.kind == "convolution":
        fhat = kernel_fourier(phi.kernel)
        min_re = float(np.min(fhat.real))
        return min_re >= c0 - 1e-12, min_re
    if phi.kind == "explicit":
        if n > _EXPLICIT_LOWER_BOUND_MAX_N:
            raise ValueError(
                f"explicit lower-bound check limited to n <= {_EXPLICIT_LOWER_BOUND_MAX_N}"
            )
        q = operator_matrix(phi.apply, n, beta)
        q = 0.5 * (q + q.T)
        min_eig = float(np.min(np.linalg.eigvalsh(q)))
        return min_eig >= c0 - 1e-12, min_eig
    raise ValueError(f"unknown filter kind {phi.kind!r}")


# -- covariance tensor ---------------------------------------------------


def _halved_diag(v):
    vt = v.copy()
    vt[np.diag_indices(vt.shape[0])] /= 2.0
    return vt


def raw_covariance_apply(variances, r, beta):
    """Sigma_W[R] = E[W Tr(R W)] for an unfiltered Wigner-type matrix with the
    given per-entry variances (closed form)."""
    r = np.asarray(r)
    if beta == 1:
        vt = _halved_diag(np.asarray(variances, dtype=float))
        return vt * (r + r.T)
    return np.asarray(variances) * r


def covariance_tensor_apply(spec, j, r):
    """Covariance tensor of the filtered signal: Phi Sigma_W Phi applied to r.

    Computed analytically from the profile and filter, never by sampling.
    """
    phi = spec.filter(j)
    beta = spec.symmetry.beta
    inner = phi.apply(np.asarray(r))
    mid = raw_covariance_apply(spec.variances(j), inner, beta)
    return phi.apply(mid)


def pair_covariance_apply(spec, r1, r2):
    """Block covariance tensor of the coupled pair restricted to the invariant
    block-diagonal subspace: returns (S1, S2) where
    S_j = Phi_j Sigma_{W_j} Phi_j [r_j] + Phi_j X Phi_other [r_other],
    with X the cross-covariance map built from rho * sigma1 * sigma2."""
    beta = spec.symmetry.beta
    phi1, phi2 = spec.filter(1), spec.filter(2)
    c = spec.profile.cross_covariance
    out1 = phi1.apply(raw_covariance_apply(spec.profile.variance1, phi1.apply(r1), beta))
    out1 = out1 + phi1.apply(_cross_apply(c, phi2.apply(r2), beta))
    out2 = phi2.apply(raw_covariance_apply(spec.profile.variance2, phi2.apply(r2), beta))
    out2 = out2 + phi2.apply(_cross_apply(c, phi1.apply(r1), beta))
    return out1, out2


def _cross_apply(c, r, beta):
    if beta == 1:
        ct = _halved_diag(np.asarray(c, dtype=float))
        return ct * (r + r.T)
    return np.asarray(c) * r
