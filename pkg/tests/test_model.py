import numpy as np
import pytest

from corrwig import matio, model
from corrwig.model import (
    CorrelationProfile,
    EntryLaw,
    PairModelSpec,
    SymmetryClass,
    UnrealizableCorrelation,
    draw_correlated_scalars,
)


def flat_spec(n=8, rho=0.0, alpha=None, symmetry="real", law=EntryLaw.GAUSSIAN, **kw):
    prof = CorrelationProfile.flat(n, rho=rho, alpha=alpha)
    return PairModelSpec(n=n, symmetry=symmetry, profile=prof, entry_law=law, **kw)


class TestValidateSpec:
    def test_canonical_wigner_passes(self):
        rep = model.validate_spec(flat_spec(10, rho=0.0))
        assert rep.passed, rep.summary()

    def test_decorr_violation_reports_index(self):
        spec = flat_spec(6, rho=0.0, alpha=0.4)
        spec.profile.cross[2, 3] = spec.profile.cross[3, 2] = 1 - 0.4 / 2  # > 1 - alpha
        rep = model.validate_spec(spec)
        assert not rep.passed
        bad = [c for c in rep.failures() if c.name == "cross_correlation_bound"]
        assert bad and "(2, 3)" in bad[0].detail

    def test_norm_bound_violation(self):
        spec = flat_spec(6)
        spec.deformation1 = 3 * spec.C0 * np.eye(6)
        rep = model.validate_spec(spec)
        assert any(not c.passed and c.name == "deformation1_norm" for c in rep.checks)

    def test_variance_bound_violation(self):
        spec = flat_spec(6)
        spec.profile.variance1[1, 1] = 100.0  # way above C0/N
        rep = model.validate_spec(spec)
        assert any(not c.passed and c.name == "variance_bounds_w1" for c in rep.checks)


class TestSamplePair:
    def test_real_symmetry_bitwise(self):
        s = model.sample_pair(flat_spec(12, rho=0.3), 5)
        assert np.array_equal(s.w1, s.w1.T)
        assert np.array_equal(s.w2, s.w2.T)

    def test_complex_hermitian_bitwise(self):
        s = model.sample_pair(flat_spec(12, rho=0.3, symmetry="complex"), 5)
        assert np.array_equal(s.w1, s.w1.conj().T)
        assert np.all(s.w1.diagonal().imag == 0)

    def test_determinism_bytes(self):
        spec = flat_spec(10, rho=0.5, symmetry="complex")
        a = model.sample_pair(spec, 123)
        b = model.sample_pair(spec, 123)
        assert matio.matrix_to_bytes(a.w1) == matio.matrix_to_bytes(b.w1)
        assert matio.matrix_to_bytes(a.h2) == matio.matrix_to_bytes(b.h2)
        c = model.sample_pair(spec, 124)
        assert matio.matrix_to_bytes(a.w1) != matio.matrix_to_bytes(c.w1)

    def test_entry_cross_covariance_mc(self):
        # E[w1 w2] = rho / N over 1e5 draws, 3 SE
        rng = np.random.default_rng(0)
        n_draw, v, rho = 100_000, 0.01, 0.5
        x1, x2 = draw_correlated_scalars(rng, v, v, rho, EntryLaw.GAUSSIAN, (n_draw,))
        est = np.mean(x1 * x2)
        se = np.std(x1 * x2, ddof=1) / np.sqrt(n_draw)
        assert abs(est - rho * v) <= 3 * se
        assert abs(np.mean(x1 * x1) - v) <= 3 * np.std(x1 * x1, ddof=1) / np.sqrt(n_draw)

    def test_independent_case_mc(self):
        rng = np.random.default_rng(1)
        x1, x2 = draw_correlated_scalars(rng, 0.01, 0.01, 0.0, EntryLaw.GAUSSIAN, (100_000,))
        se = np.std(x1 * x2, ddof=1) / np.sqrt(x1.size)
        assert abs(np.mean(x1 * x2)) <= 3 * se

    def test_negative_rho_gaussian(self):
        rng = np.random.default_rng(2)
        x1, x2 = draw_correlated_scalars(rng, 0.01, 0.04, -0.6, EntryLaw.GAUSSIAN, (100_000,))
        target = -0.6 * 0.1 * 0.2
        se = np.std(x1 * x2, ddof=1) / np.sqrt(x1.size)
        assert abs(np.mean(x1 * x2) - target) <= 3 * se

    def test_matrix_level_covariance(self):
        n, draws, rho = 6, 20_000, 0.5
        spec = flat_spec(n, rho=rho)
        prods = np.empty((draws, n, n))
        for i in range(draws):
            s = model.sample_pair(spec, 10_000 + i)
            prods[i] = s.w1 * s.w2
        iu = np.triu_indices(n, k=1)
        vals = prods[:, iu[0], iu[1]].ravel()
        est, se = vals.mean(), vals.std(ddof=1) / np.sqrt(vals.size)
        # positions are independent, pooling them is legitimate
        assert abs(est - rho / n) <= 4 * se


class TestShiftedBernoulli:
    def test_two_point_support_and_moments(self):
        n, v = 6, 1.0 / 6
        spec = flat_spec(n, rho=0.25, law=EntryLaw.SHIFTED_BERNOULLI)
        vals = []
        for i in range(200):
            s = model.sample_pair(spec, i)
            vals.append(s.w1[np.triu_indices(n)])
        vals = np.concatenate(vals)
        sigma = np.sqrt(v)
        assert set(np.round(np.unique(np.abs(vals)), 12)) == {np.round(sigma, 12)}
        assert abs(np.mean(vals)) <= 4 * sigma / np.sqrt(vals.size)
        # fourth moment of the +/-sigma law is sigma^4 exactly
        assert np.allclose(np.mean(vals**4), sigma**4, rtol=1e-12)

    def test_cross_covariance_mc(self):
        rng = np.random.default_rng(3)
        x1, x2 = draw_correlated_scalars(
            rng, 0.01, 0.01, 0.4, EntryLaw.SHIFTED_BERNOULLI, (100_000,)
        )
        se = np.std(x1 * x2, ddof=1) / np.sqrt(x1.size)
        assert abs(np.mean(x1 * x2) - 0.004) <= 3 * se

    def test_negative_rho_rejected(self):
        rng = np.random.default_rng(4)
        with pytest.raises(UnrealizableCorrelation):
            draw_correlated_scalars(rng, 0.01, 0.01, -0.1, EntryLaw.SHIFTED_BERNOULLI, (10,))


class TestComplexConventions:
    def test_re_im_independent_and_pseudo_variance_zero(self):
        n, rho = 6, 0.6
        spec = flat_spec(n, rho=rho, symmetry="complex")
        w1s, w2s = [], []
        for i in range(20_000):
            s = model.sample_pair(spec, 50_000 + i)
            w1s.append(s.w1[0, 1])
            w2s.append(s.w2[0, 1])
        w1s, w2s = np.array(w1s), np.array(w2s)
        # E w^2 = 0 off-diagonal (equal Re/Im variances)
        pseudo = np.mean(w1s**2)
        se = np.std(w1s**2, ddof=1) / np.sqrt(w1s.size)
        assert abs(pseudo) <= 4 * se
        # E[w1 conj(w2)] = rho / n, real
        cross = np.mean(w1s * np.conj(w2s))
        sec = np.std(w1s * np.conj(w2s), ddof=1) / np.sqrt(w1s.size)
        assert abs(cross.real - rho / n) <= 4 * sec
        assert abs(cross.imag) <= 4 * sec
        # Re of matrix 1 independent of Im of matrix 2
        mix = np.mean(w1s.real * w2s.imag)
        sem = np.std(w1s.real * w2s.imag, ddof=1) / np.sqrt(w1s.size)
        assert abs(mix) <= 4 * sem


class TestInvariantEnsembles:
    def test_goe_variances(self):
        n, draws = 100, 1000
        diags, offs = [], []
        for i in range(draws):
            w = model.sample_gaussian_invariant(n, "real", i)
            diags.append(np.diag(w))
            offs.append(w[0, 1:])
        diags = np.concatenate(diags)
        offs = np.concatenate(offs)
        # diagonal variance 2/N over ~1e5 draws, 3 SE
        se_d = np.std(diags**2, ddof=1) / np.sqrt(diags.size)
        assert abs(np.mean(diags**2) - 2.0 / n) <= 3 * se_d
        se_o = np.std(offs**2, ddof=1) / np.sqrt(offs.size)
        assert abs(np.mean(offs**2) - 1.0 / n) <= 3 * se_o

    def test_gue_variances(self):
        n, draws = 100, 1000
        offs, diags = [], []
        for i in range(draws):
            w = model.sample_gaussian_invariant(n, "complex", i)
            offs.append(w[0, 1:])
            diags.append(np.diag(w))
        offs = np.concatenate(offs)
        diags = np.concatenate(diags)
        a2 = np.abs(offs) ** 2
        assert abs(np.mean(a2) - 1.0 / n) <= 3 * np.std(a2, ddof=1) / np.sqrt(a2.size)
        assert abs(np.mean(offs.real**2) - 0.5 / n) <= 4 * np.std(offs.real**2, ddof=1) / np.sqrt(offs.size)
        assert np.all(diags.imag == 0)
        d2 = diags.real**2
        assert abs(np.mean(d2) - 1.0 / n) <= 3 * np.std(d2, ddof=1) / np.sqrt(d2.size)

    def test_n1_goe_is_scalar_gaussian_variance_2(self):
        vals = np.array([model.sample_gaussian_invariant(1, "real", i)[0, 0] for i in range(20_000)])
        se = np.std(vals**2, ddof=1) / np.sqrt(vals.size)
        assert abs(np.mean(vals**2) - 2.0) <= 3 * se


class TestExampleOptimal:
    def test_alpha_zero_identical(self):
        s = model.sample_example_optimal(20, "real", 0.0, 9)
        assert np.array_equal(s.w1, s.w2)

    def test_alpha_one_correlation_half(self):
        n = 50
        e1, e2 = [], []
        for i in range(200):
            s = model.sample_example_optimal(n, "real", 1.0, 100 + i)
            iu = np.triu_indices(n, k=1)
            e1.append(s.w1[iu])
            e2.append(s.w2[iu])
        e1, e2 = np.concatenate(e1), np.concatenate(e2)
        corr = np.corrcoef(e1, e2)[0, 1]
        assert abs(corr - 0.5) <= 4.0 / np.sqrt(e1.size)
        # normalized total variance back at 1/N
        se = np.std(e1**2, ddof=1) / np.sqrt(e1.size)
        assert abs(np.mean(e1**2) - 1.0 / n) <= 4 * se

    def test_matches_shared_component_law(self):
        # w = (W + sqrt(a) G)/sqrt(1+a) has the same first two joint moments as
        # the profile sampler with rho = 1/(1+a) and invariant-flavor variances.
        n, a = 40, 0.6
        rho = 1.0 / (1.0 + a)
        prof = CorrelationProfile.invariant_flavor(n, "real", rho=rho)
        spec = PairModelSpec(n=n, symmetry="real", profile=prof)
        iu = np.triu_indices(n, k=1)
        ex1, ex2, sh1, sh2 = [], [], [], []
        for i in range(400):
            s = model.sample_example_optimal(n, "real", a, 900 + i)
            ex1.append(s.w1[iu])
            ex2.append(s.w2[iu])
            p = model.sample_pair(spec, 5000 + i)
            sh1.append(p.w1[iu])
            sh2.append(p.w2[iu])
        ex1, ex2 = np.concatenate(ex1), np.concatenate(ex2)
        sh1, sh2 = np.concatenate(sh1), np.concatenate(sh2)
        m = ex1.size
        for mom_ex, mom_sh in (
            (ex1**2, sh1**2),
            (ex1 * ex2, sh1 * sh2),
        ):
            se = np.hypot(np.std(mom_ex, ddof=1), np.std(mom_sh, ddof=1)) / np.sqrt(m)
            assert abs(np.mean(mom_ex) - np.mean(mom_sh)) <= 4 * se

    def test_tiny_alpha_spectra_close(self):
        n = 60
        alpha = float(n) ** -3
        s = model.sample_example_optimal(n, "real", alpha, 3)
        gap = np.max(np.abs(np.linalg.eigvalsh(s.w1) - np.linalg.eigvalsh(s.w2)))
        assert gap <= 4 * np.sqrt(alpha)


class TestMixturePair:
    def test_entry_correlation(self):
        n, alpha = 40, 0.3
        iu = np.triu_indices(n, k=1)
        e1, e2 = [], []
        for i in range(300):
            s = model.sample_mixture_pair(n, "real", alpha, i)
            e1.append(s.h1[iu])
            e2.append(s.h2[iu])
        e1, e2 = np.concatenate(e1), np.concatenate(e2)
        corr = np.corrcoef(e1, e2)[0, 1]
        assert abs(corr - (1 - alpha)) <= 4.0 / np.sqrt(e1.size)


class TestSerialization:
    def test_spec_json_roundtrip(self):
        from corrwig import filtering

        spec = flat_spec(5, rho=0.2, symmetry="complex")
        spec.deformation1 = np.eye(5)
        spec.filter1 = filtering.FilterSpec.from_preset("stencil5", 5, eps=0.05)
        d = spec.to_json_dict()
        back = PairModelSpec.from_json_dict(d)
        assert back.spec_hash() == spec.spec_hash()
        s1 = model.sample_pair(spec, 1)
        s2 = model.sample_pair(back, 1)
        assert np.array_equal(s1.h1, s2.h1)

    def test_matio_roundtrip(self, tmp_path):
        m = np.arange(9.0).reshape(3, 3)
        path = tmp_path / "m.bin"
        matio.write_matrix(path, m)
        assert np.array_equal(matio.read_matrix(path), m)
        raw = path.read_bytes()
        assert len(raw) == 8 + 9 * 8
        assert int.from_bytes(raw[:8], "little") == 3

    def test_matio_complex_roundtrip(self, tmp_path):
        rng = np.random.default_rng(0)
        m = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
        path = tmp_path / "c.bin"
        matio.write_matrix(path, m)
        assert np.array_equal(matio.read_matrix(path), m)
