import numpy as np
import pytest

from corrwig import filtering, model
from corrwig.filtering import BasisMatrix, FilterSpec


def brute_force_convolution(f, r):
    """O(N^4) literal double sum: out_ab = sum_{c,d} F(a-c, b-d) R_cd."""
    n = r.shape[0]
    out = np.zeros_like(np.asarray(r, dtype=np.result_type(f, r)))
    for a in range(n):
        for b in range(n):
            acc = 0.0
            for c in range(n):
                for d in range(n):
                    acc += f[(a - c) % n, (b - d) % n] * r[c, d]
            out[a, b] = acc
    return out


def random_symmetric(rng, n, beta=1):
    if beta == 1:
        a = rng.standard_normal((n, n))
        return a + a.T
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return a + a.conj().T


class TestApplyFilter:
    def test_identity_returns_input(self):
        w = np.ones((4, 4))
        assert filtering.apply_filter(FilterSpec.identity(), w) is w

    def test_delta_kernel_is_identity(self):
        n = 5
        f = np.zeros((n, n))
        f[0, 0] = 1.0
        phi = FilterSpec.convolution(f)
        rng = np.random.default_rng(0)
        w = random_symmetric(rng, n)
        assert np.allclose(phi.apply(w), w, atol=1e-14)

    def test_against_brute_force_n3(self):
        rng = np.random.default_rng(1)
        n = 3
        f = rng.standard_normal((n, n))
        f = (f + f.T) / 2  # real symmetric kernel (Hermiticity-preserving, beta=1)
        w = random_symmetric(rng, n)
        phi = FilterSpec.convolution(f)
        assert np.allclose(phi.apply(w), brute_force_convolution(f, w), atol=1e-12)

    @pytest.mark.parametrize("n", [4, 8])
    def test_against_brute_force_various_n(self, n):
        rng = np.random.default_rng(n)
        f = rng.standard_normal((n, n))
        f = (f + f.T) / 2
        w = random_symmetric(rng, n)
        phi = FilterSpec.convolution(f)
        assert np.allclose(phi.apply(w), brute_force_convolution(f, w), atol=1e-11)

    def test_direct_and_fft_paths_agree(self):
        rng = np.random.default_rng(2)
        n = 24
        f = rng.standard_normal((n, n))
        w = random_symmetric(rng, n)
        direct = filtering._convolve_direct(f, w)
        fft = filtering._convolve_fft(f, w)
        assert np.allclose(direct, fft, atol=1e-10)

    def test_large_n_uses_fft_and_matches_direct(self):
        rng = np.random.default_rng(3)
        n = 70  # above the direct-path cutoff
        f = np.zeros((n, n))
        f[0, 0] = 1.0
        f[1, 0] = f[n - 1, 0] = f[0, 1] = f[0, n - 1] = 0.1
        w = random_symmetric(rng, n)
        phi = FilterSpec.convolution(f)
        assert np.allclose(phi.apply(w), filtering._convolve_direct(f, w), atol=1e-10)

    def test_dimension_mismatch(self):
        phi = FilterSpec.convolution(np.eye(4))
        with pytest.raises(filtering.FilterDimensionMismatch):
            phi.apply(np.zeros((5, 5)))

    def test_linearity_property(self):
        rng = np.random.default_rng(4)
        n = 10
        phi = FilterSpec.from_preset("delta_power", n, s=3.0, c=0.2)
        x, y = random_symmetric(rng, n), random_symmetric(rng, n)
        a, b = rng.standard_normal(2)
        lhs = phi.apply(a * x + b * y)
        rhs = a * phi.apply(x) + b * phi.apply(y)
        assert np.allclose(lhs, rhs, atol=1e-12)

    def test_preserves_symmetry_class(self):
        rng = np.random.default_rng(5)
        n = 9
        phi = FilterSpec.from_preset("stencil5", n, eps=0.1)
        w = random_symmetric(rng, n)
        out = phi.apply(w)
        assert np.allclose(out, out.T, atol=1e-13)
        wc = random_symmetric(rng, n, beta=2)
        outc = phi.apply(wc)
        assert np.allclose(outc, outc.conj().T, atol=1e-13)


class TestBasisImage:
    def test_identity_filter(self):
        e = filtering.basis_image(FilterSpec.identity(), BasisMatrix(1, 3), 5)
        expected = np.zeros((5, 5))
        expected[1, 3] = expected[3, 1] = 1.0
        assert np.array_equal(e, expected)

    def test_diagonal_basis_element(self):
        e = BasisMatrix(2, 2).build(4)
        assert e[2, 2] == 1.0 and np.count_nonzero(e) == 1

    def test_imag_variant_structure(self):
        e = BasisMatrix(0, 2, "imag").build(4, beta=2)
        assert e[0, 2] == 1j and e[2, 0] == -1j

    def test_imag_under_real_class_rejected(self):
        with pytest.raises(ValueError):
            BasisMatrix(0, 1, "imag").build(4, beta=1)

    def test_convolution_closed_form(self):
        n = 6
        rng = np.random.default_rng(6)
        f = rng.standard_normal((n, n))
        f = (f + f.T) / 2
        phi = FilterSpec.convolution(f)
        i, k = 1, 4
        img = filtering.basis_image(phi, BasisMatrix(i, k), n)
        a = np.arange(n)
        expected = f[(a[:, None] - i) % n, (a[None, :] - k) % n] + f[
            (a[:, None] - k) % n, (a[None, :] - i) % n
        ]
        assert np.allclose(img, expected, atol=1e-12)

    def test_power_decay_kernel_obeys_declared_bound(self):
        n = 12
        phi = FilterSpec.from_preset("power_decay", n, s=3.0, c=0.5)
        ok, worst = filtering.check_decay(phi, s=3.0, c0=1.0, n=n)
        assert ok, worst


class TestCheckDecay:
    def test_identity_passes_any_exponent(self):
        for s in (2.5, 3, 6):
            ok, _ = filtering.check_decay(FilterSpec.identity(), s=s, c0=1.0, n=8)
            assert ok

    def test_s3_tail_passes_s3_fails_s4(self):
        n = 16
        phi = FilterSpec.from_preset("power_decay", n, s=3.0, c=1.0)
        ok3, _ = filtering.check_decay(phi, s=3.0, c0=2.5, n=n)
        assert ok3
        ok4, worst = filtering.check_decay(phi, s=4.0, c0=2.5, n=n)
        assert not ok4
        assert worst["ratio"] > 1

    def test_dense_constant_explicit_operator_fails_at_max_distance(self):
        n = 6
        tensor = np.full((n, n, n, n), 1.0 / n**2)
        phi = FilterSpec.explicit(tensor)
        ok, worst = filtering.check_decay(phi, s=3.0, c0=0.5, n=n)
        assert not ok
        dist = abs(worst["i"] - worst["a"]) + abs(worst["k"] - worst["b"])
        max_dist = max(
            abs(i - a) + abs(k - b)
            for i in range(n)
            for k in range(i, n)
            for a in range(n)
            for b in range(n)
        )
        assert dist == max_dist


class TestLowerBound:
    def test_identity(self):
        ok, val = filtering.check_lower_bound(FilterSpec.identity(), 1.0, 8)
        assert ok and val == 1.0

    def test_stencil5_min_exact(self):
        # 1 + 0.2 cos(2 pi phi) + 0.2 cos(2 pi theta): minimum 0.6 on an even grid
        n = 8
        phi = FilterSpec.from_preset("stencil5", n, eps=0.1)
        ok, val = filtering.check_lower_bound(phi, 0.6, n)
        assert ok
        assert np.isclose(val, 0.6, atol=1e-12)

    def test_negative_fourier_fails(self):
        n = 8
        phi = FilterSpec.from_preset("stencil5", n, eps=0.3)  # min 1 - 1.2 < 0
        ok, val = filtering.check_lower_bound(phi, 0.0, n)
        assert not ok
        assert np.isclose(val, -0.2, atol=1e-12)

    def test_explicit_identity_scaled(self):
        n = 4
        tensor = np.zeros((n, n, n, n))
        for a in range(n):
            for b in range(n):
                tensor[a, b, a, b] = 0.7
        phi = FilterSpec.explicit(tensor)
        ok, val = filtering.check_lower_bound(phi, 0.5, n)
        assert ok and np.isclose(val, 0.7, atol=1e-12)
        ok, _ = filtering.check_lower_bound(phi, 0.8, n)
        assert not ok

    def test_explicit_large_n_rejected(self):
        n = 40
        tensor = np.zeros((2, 2, 2, 2))
        phi = FilterSpec.explicit(tensor)
        with pytest.raises(ValueError):
            filtering.check_lower_bound(phi, 0.1, n)


def profile_spec(n, rho=0.0, symmetry="real", filt=None):
    prof = model.CorrelationProfile.invariant_flavor(n, symmetry, rho=rho)
    return model.PairModelSpec(
        n=n, symmetry=symmetry, profile=prof, filter1=filt, filter2=filt
    )


class TestCovarianceTensor:
    def test_goe_closed_form(self):
        n = 6
        spec = profile_spec(n)
        rng = np.random.default_rng(7)
        r = random_symmetric(rng, n)
        out = filtering.covariance_tensor_apply(spec, 1, r)
        assert np.allclose(out, 2.0 / n * r, atol=1e-14)

    def test_gue_closed_form(self):
        n = 6
        spec = profile_spec(n, symmetry="complex")
        rng = np.random.default_rng(8)
        r = random_symmetric(rng, n, beta=2)
        out = filtering.covariance_tensor_apply(spec, 1, r)
        assert np.allclose(out, 1.0 / n * r, atol=1e-14)

    def test_zero_input(self):
        spec = profile_spec(4)
        assert np.all(filtering.covariance_tensor_apply(spec, 1, np.zeros((4, 4))) == 0)

    def test_generic_profile_against_mc(self):
        # E[W Tr(R W)] estimated from 1e6 independently constructed samples
        n = 4
        rng = np.random.default_rng(9)
        v = rng.uniform(0.5 / n, 2.0 / n, size=(n, n))
        v = (v + v.T) / 2
        prof = model.CorrelationProfile(v, v.copy(), np.zeros((n, n)), 1.0)
        spec = model.PairModelSpec(n=n, symmetry="real", profile=prof)
        r = random_symmetric(rng, n)
        expected = filtering.covariance_tensor_apply(spec, 1, r)

        total = np.zeros((n, n))
        total_sq = np.zeros((n, n))
        chunks, chunk = 5, 200_000
        iu = np.triu_indices(n)
        for c in range(chunks):
            g = rng.standard_normal((chunk, n, n))
            w = np.zeros_like(g)
            w[:, iu[0], iu[1]] = g[:, iu[0], iu[1]] * np.sqrt(v[iu])
            w = w + np.triu(w, 1).transpose(0, 2, 1)
            tr = np.einsum("cd,sdc->s", r, w)
            contrib = w * tr[:, None, None]
            total += contrib.sum(axis=0)
            total_sq += (contrib**2).sum(axis=0)
        m = chunks * chunk
        est = total / m
        se = np.sqrt(np.maximum(total_sq / m - est**2, 0) / m)
        assert np.all(np.abs(est - expected) <= 4 * se + 1e-12)

    def test_filter_sandwich(self):
        # Sigma of the filtered signal equals Phi Sigma_W Phi
        n = 6
        phi = FilterSpec.from_preset("stencil5", n, eps=0.1)
        spec = profile_spec(n, filt=phi)
        rng = np.random.default_rng(10)
        r = random_symmetric(rng, n)
        out = filtering.covariance_tensor_apply(spec, 1, r)
        manual = phi.apply(filtering.raw_covariance_apply(spec.profile.variance1, phi.apply(r), 1))
        assert np.allclose(out, manual, atol=1e-13)

    def test_operator_self_adjoint_and_psd(self):
        n = 5
        phi = FilterSpec.from_preset("delta_power", n, s=3.0, c=0.1)
        spec = profile_spec(n, filt=phi)
        q = filtering.operator_matrix(lambda r: filtering.covariance_tensor_apply(spec, 1, r), n)
        assert np.allclose(q, q.T, atol=1e-11)
        eigs = np.linalg.eigvalsh((q + q.T) / 2)
        assert eigs.min() >= -1e-11

    def test_pair_block_operator_lower_bound(self):
        # coupled-pair covariance operator bounded below by ~ alpha / N
        n, alpha = 4, 0.2
        spec = profile_spec(n, rho=1 - alpha)
        basis = filtering.sym_basis(n)
        dim = len(basis)
        q = np.zeros((2 * dim, 2 * dim))
        for p in range(dim):
            for half, bp in ((0, basis[p]), (1, basis[p])):
                r1 = bp if half == 0 else np.zeros_like(bp)
                r2 = bp if half == 1 else np.zeros_like(bp)
                s1, s2 = filtering.pair_covariance_apply(spec, r1, r2)
                for pp in range(dim):
                    q[half * dim + p, pp] = np.real(np.sum(basis[pp].conj() * s1))
                    q[half * dim + p, dim + pp] = np.real(np.sum(basis[pp].conj() * s2))
        q = (q + q.T) / 2
        eigs = np.linalg.eigvalsh(q)
        assert eigs.min() >= 0.5 * alpha / n
        assert eigs.min() <= 4.0 * alpha / n


class TestKernelSerialization:
    def test_triples_roundtrip(self):
        n = 6
        f = filtering.kernel_from_triples(n, [(0, 0, 1.0), (1, 2, 0.3), (-1, 3, 0.2)])
        phi = FilterSpec.convolution(f)
        back = FilterSpec.from_json_dict(phi.to_json_dict())
        assert np.array_equal(back.kernel, f)

    def test_preset_roundtrip(self):
        phi = FilterSpec.from_preset("power_decay", 8, s=3.0, c=0.4)
        back = FilterSpec.from_json_dict(phi.to_json_dict())
        assert np.array_equal(back.kernel, phi.kernel)

    def test_kernel_hermiticity_check(self):
        n = 5
        f = np.zeros((n, n))
        f[1, 2] = 1.0  # F(x,y) != F(y,x)
        assert not FilterSpec.convolution(f).kernel_is_hermitian()
        assert FilterSpec.from_preset("stencil5", n, eps=0.1).kernel_is_hermitian()
