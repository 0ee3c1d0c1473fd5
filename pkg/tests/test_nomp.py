import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from ncce.channel import TWO_PI, steering_matrix, steering_vector
from ncce.errors import CollisionError, InvalidInputError
from ncce.nomp import (
    STOP_RESIDUAL,
    EstimatedPath,
    GridDictionary,
    NompOptions,
    detect_on_grid,
    dictionary_derivatives,
    dictionary_response,
    extract_paths,
    fit_amplitudes_ls,
    gr_derivatives,
    gr_value,
    grid_atoms,
    grid_frequencies,
    refine_cyclic,
    refine_newton,
    residual_energy,
)
from ncce.sensing import sample_gaussian_matrix

# Frozen count of K=2 recoveries out of 100 at N=256, M_CS=16 (seed family 9).
# The four misses are greedy mis-detections where the first grid pick lands on a
# cross-term peak; more Newton or cyclic rounds do not move them.
NOMP_K2_FROZEN_SUCCESSES = 96


def a_cs_for(seed, m_cs=16, n=64):
    return sample_gaussian_matrix(m_cs, n, np.random.default_rng(seed))


def wrap_err(a, b):
    return np.abs(np.angle(np.exp(1j * (np.asarray(a) - np.asarray(b)))))


class TestDictionary:
    def test_identity_gives_steering_vector(self):
        n = 16
        np.testing.assert_allclose(dictionary_response(np.eye(n), 0.8), steering_vector(n, 0.8), atol=1e-14)

    def test_nonzero_everywhere(self):
        a_cs = a_cs_for(0)
        norms = np.linalg.norm(a_cs @ steering_matrix(64, np.linspace(-np.pi, np.pi, 1000)), axis=0)
        assert norms.min() > 0

    @pytest.mark.parametrize("omega", [-3.0, -0.4, 0.0, 1.7])
    def test_derivatives_match_finite_differences(self, omega):
        a_cs, h = a_cs_for(1), 1e-6
        f, df, d2f = dictionary_derivatives(a_cs, omega)
        fd1 = (dictionary_response(a_cs, omega + h) - dictionary_response(a_cs, omega - h)) / (2 * h)
        assert np.linalg.norm(df - fd1) <= 1e-6 * np.linalg.norm(df)
        np.testing.assert_allclose(f, dictionary_response(a_cs, omega), atol=1e-12)
        h2 = 1e-4
        fd2 = (dictionary_response(a_cs, omega + h2) - 2 * f + dictionary_response(a_cs, omega - h2)) / h2**2
        assert np.linalg.norm(d2f - fd2) <= 1e-5 * np.linalg.norm(d2f)

    def test_fft_atoms_match_direct(self):
        a_cs = a_cs_for(2, m_cs=6, n=32)
        direct = a_cs @ steering_matrix(32, grid_frequencies(32, 4))
        np.testing.assert_allclose(grid_atoms(a_cs, 4), direct, atol=1e-10)

    def test_gr_derivatives_match_finite_differences(self):
        a_cs = a_cs_for(3)
        y = dictionary_response(a_cs, 0.5) + 0.3j * dictionary_response(a_cs, -1.0)
        w, h = 0.52, 1e-5
        g, dg, d2g, _ = gr_derivatives(y, a_cs, w)
        assert g == pytest.approx(gr_value(y, a_cs, w), rel=1e-12)
        assert dg == pytest.approx((gr_value(y, a_cs, w + h) - gr_value(y, a_cs, w - h)) / (2 * h), rel=1e-5)
        fd2 = (gr_value(y, a_cs, w + h) - 2 * g + gr_value(y, a_cs, w - h)) / h**2
        assert d2g == pytest.approx(fd2, rel=1e-3)


class TestDetect:
    def test_on_grid_atom(self):
        a_cs = a_cs_for(4)
        grid = grid_frequencies(64, 4)
        w0 = grid[37]
        w, alpha, g = detect_on_grid(dictionary_response(a_cs, w0), a_cs, grid)
        assert w == w0
        assert abs(alpha - 1) < 1e-9

    def test_precomputed_dictionary_agrees(self):
        a_cs = a_cs_for(4)
        y = dictionary_response(a_cs, 0.123)
        d = GridDictionary(a_cs, 4)
        w1, a1, g1 = detect_on_grid(y, a_cs, grid_frequencies(64, 4))
        w2, a2, g2 = detect_on_grid(y, a_cs, dictionary=d)
        assert w1 == pytest.approx(w2, abs=1e-15)
        assert a1 == pytest.approx(a2, rel=1e-9) and g1 == pytest.approx(g2, rel=1e-9)

    @settings(max_examples=25)
    @given(st.complex_numbers(min_magnitude=1e-3, max_magnitude=1e3, allow_nan=False, allow_infinity=False))
    def test_homogeneous(self, c):
        a_cs = a_cs_for(5)
        grid = grid_frequencies(64, 4)
        y = dictionary_response(a_cs, grid[100])
        _, a1, g1 = detect_on_grid(y, a_cs, grid)
        w, a2, g2 = detect_on_grid(c * y, a_cs, grid)
        assert w == grid[100]
        assert a2 == pytest.approx(c * a1, rel=1e-9)
        assert g2 == pytest.approx(abs(c) ** 2 * g1, rel=1e-9)

    def test_strongest_first_matches_exhaustive_search(self):
        a_cs = a_cs_for(6, m_cs=24)
        grid = grid_frequencies(64, 4)
        for i0, i1 in [(10, 30), (100, 60), (200, 250)]:
            y = dictionary_response(a_cs, grid[i0]) + 0.5 * dictionary_response(a_cs, grid[i1])
            w, _, g = detect_on_grid(y, a_cs, grid)
            exhaustive = [gr_value(y, a_cs, x) for x in grid]
            assert w == grid[int(np.argmax(exhaustive))] == grid[i0]
            assert g == pytest.approx(max(exhaustive), rel=1e-9)

    def test_zero_input_is_null(self):
        assert detect_on_grid(np.zeros(16), a_cs_for(0), grid_frequencies(64, 4)) is None

    def test_empty_grid(self):
        with pytest.raises(InvalidInputError):
            detect_on_grid(np.ones(16), a_cs_for(0), [])


class TestNewton:
    def test_stationary_at_truth(self):
        a_cs = a_cs_for(7)
        y = dictionary_response(a_cs, 0.4)
        w, alpha, _ = refine_newton(y, a_cs, 0.4, 1.0)
        assert abs(w - 0.4) < 1e-9 and abs(alpha - 1) < 1e-9

    def test_offset_improves(self):
        a_cs = np.eye(64)
        y = dictionary_response(a_cs, 0.4)
        start = 0.4 + 0.3 * TWO_PI / 64
        w, _, accepted = refine_newton(y, a_cs, start, 1.0)
        assert accepted
        assert gr_value(y, a_cs, w) > gr_value(y, a_cs, start)

    @pytest.mark.parametrize("seed", range(10))
    def test_half_grid_offset_improves(self, seed):
        # the worst start the 4x grid can hand over is 1/8 bin from the truth
        a_cs = a_cs_for(seed)
        y = dictionary_response(a_cs, 0.4)
        start = 0.4 - 0.125 * TWO_PI / 64
        w, _, accepted = refine_newton(y, a_cs, start, 1.0)
        assert accepted
        assert gr_value(y, a_cs, w) > gr_value(y, a_cs, start)

    def test_guard_rejects_convex_point(self):
        n = 64
        a_cs = np.eye(n)
        y = dictionary_response(a_cs, 0.4)
        probe = 0.4 + TWO_PI / n  # first null of the array factor: a local minimum of G
        _, _, d2g, _ = gr_derivatives(y, a_cs, probe)
        assert d2g >= 0
        w, _, accepted = refine_newton(y, a_cs, probe, 0.0)
        assert not accepted and w == probe


class TestLeastSquares:
    def test_exact(self):
        a_cs = a_cs_for(8)
        omegas = [0.3, -1.2, 2.5]
        alpha = np.array([1.0, -0.5j, 0.25 + 0.25j])
        y = a_cs @ steering_matrix(64, omegas) @ alpha
        np.testing.assert_allclose(fit_amplitudes_ls(y, a_cs, omegas), alpha, atol=1e-8)

    def test_single_column(self):
        a_cs = a_cs_for(8)
        y = np.random.default_rng(0).standard_normal(16) + 0j
        f = dictionary_response(a_cs, 0.9)
        assert fit_amplitudes_ls(y, a_cs, [0.9])[0] == pytest.approx(np.vdot(f, y) / np.vdot(f, f).real)

    def test_matches_qr_oracle_and_orthogonal_residual(self):
        rng = np.random.default_rng(9)
        a_cs = a_cs_for(9)
        omegas = rng.uniform(-np.pi, np.pi, 4)
        y = rng.standard_normal(16) + 1j * rng.standard_normal(16)
        F = a_cs @ steering_matrix(64, omegas)
        q, r = scipy.linalg.qr(F, mode="economic")
        oracle = scipy.linalg.solve_triangular(r, q.conj().T @ y)
        alpha = fit_amplitudes_ls(y, a_cs, omegas)
        np.testing.assert_allclose(alpha, oracle, atol=1e-6)
        assert np.linalg.norm(F.conj().T @ (y - F @ alpha)) < 1e-8 * np.linalg.norm(y)

    def test_duplicate_frequencies_collide(self):
        with pytest.raises(CollisionError):
            fit_amplitudes_ls(np.ones(16), a_cs_for(0), [0.5, 0.5])

    def test_too_many_atoms(self):
        with pytest.raises(CollisionError):
            fit_amplitudes_ls(np.ones(2), a_cs_for(0, m_cs=2), [0.1, 1.0, 2.0])


class TestCyclic:
    def test_fixed_point(self):
        a_cs = a_cs_for(10)
        y = dictionary_response(a_cs, -0.7)
        out = refine_cyclic(y, a_cs, [EstimatedPath(1.0, -0.7, 1)], rounds=3)
        assert abs(out[0].spatial_freq + 0.7) < 1e-9 and abs(out[0].amplitude - 1) < 1e-9

    def test_two_offset_paths_converge(self):
        n = 64
        bin_ = TWO_PI / n
        a_cs = a_cs_for(11)
        truth = np.array([0.3 + 0.37 * bin_, -1.5 + 0.61 * bin_])
        y = a_cs @ steering_matrix(n, truth) @ np.array([1.0, 0.8j])
        grid = grid_frequencies(n, 4)
        start = np.array([grid[np.argmin(wrap_err(grid, w))] for w in truth])
        paths = [EstimatedPath(a, w, i + 1) for i, (w, a) in enumerate(zip(start, fit_amplitudes_ls(y, a_cs, start)))]
        # each pass is a block-coordinate sweep, so convergence is linear
        out = refine_cyclic(y, a_cs, paths, rounds=10)
        assert np.all(wrap_err([p.spatial_freq for p in out], truth) <= 1e-4 * bin_)

    def test_residual_non_increasing_per_pass(self):
        rng = np.random.default_rng(12)
        for trial in range(20):
            a_cs = a_cs_for(100 + trial)
            truth = rng.uniform(-np.pi, np.pi, 3)
            y = a_cs @ steering_matrix(64, truth) @ (rng.standard_normal(3) + 0j)
            y = y + 0.1 * rng.standard_normal(16)
            start = truth + rng.normal(0, 0.02, 3)
            paths = [EstimatedPath(a, w, i + 1) for i, (w, a) in enumerate(zip(start, fit_amplitudes_ls(y, a_cs, start)))]
            energies = [residual_energy(y, a_cs, start, [p.amplitude for p in paths])]
            for _ in range(4):
                paths = refine_cyclic(y, a_cs, paths, rounds=1)
                energies.append(residual_energy(y, a_cs, [p.spatial_freq for p in paths], [p.amplitude for p in paths]))
            assert np.all(np.diff(energies) <= 1e-12 * energies[0])


class TestExtractPaths:
    def test_single_atom(self):
        a_cs = a_cs_for(13)
        res = extract_paths(dictionary_response(a_cs, 1.234), a_cs, NompOptions(k=1))
        assert len(res.paths) == 1
        assert wrap_err(res.paths[0].spatial_freq, 1.234) <= 1e-6
        assert abs(res.paths[0].amplitude - 1) <= 1e-6

    def test_two_paths_monte_carlo(self):
        n = 256
        ok = 0
        for s in range(100):
            rng = np.random.default_rng(np.random.SeedSequence([9, s]))
            a_cs = sample_gaussian_matrix(16, n, rng)
            while True:
                f = rng.uniform(-np.pi, np.pi, 2)
                if wrap_err(f[0], f[1]) >= 4 * TWO_PI / n:
                    break
            alpha = np.exp(1j * rng.uniform(0, TWO_PI, 2))
            res = extract_paths(a_cs @ steering_matrix(n, f) @ alpha, a_cs, NompOptions(k=2))
            if len(res.paths) == 2:
                err = wrap_err(np.sort(res.freqs), np.sort(f))
                ok += bool(np.all(err <= 1e-2 * TWO_PI / n))
        assert ok == NOMP_K2_FROZEN_SUCCESSES

    @settings(max_examples=10, deadline=None)
    @given(st.floats(-np.pi, np.pi))
    def test_phase_rotation(self, phi):
        a_cs = a_cs_for(14)
        y = a_cs @ steering_matrix(64, [0.2, 2.0]) @ np.array([1.0, 0.6 - 0.3j])
        rot = np.exp(1j * phi)
        r1, r2 = extract_paths(y, a_cs, NompOptions(k=2)), extract_paths(rot * y, a_cs, NompOptions(k=2))
        np.testing.assert_allclose(r1.freqs, r2.freqs, atol=1e-9)
        np.testing.assert_allclose(rot * r1.amplitudes, r2.amplitudes, atol=1e-9)

    def test_zero_input(self):
        res = extract_paths(np.zeros(16), a_cs_for(0), NompOptions(k=2))
        assert res.paths == [] and res.residual_energy_rel == 1.0 and res.degenerate

    def test_residual_threshold_mode(self):
        a_cs = a_cs_for(15, m_cs=24)
        y = a_cs @ steering_matrix(64, [-2.0, 0.1, 1.9]) @ np.array([1.0, 0.7, 0.5j])
        res = extract_paths(y, a_cs, NompOptions(stop_mode=STOP_RESIDUAL, tau_rel=1e-3))
        assert len(res.paths) == 3
        assert 0 <= res.residual_energy_rel < 1e-3
        assert np.all(np.diff(res.residual_history) <= 0)
        mags = np.abs(res.amplitudes)
        assert np.all(np.diff(mags) <= 0)

    def test_on_grid_atoms_exact(self):
        a_cs = a_cs_for(16)
        grid = grid_frequencies(64, 4)
        for w0 in grid[::3]:
            res = extract_paths(dictionary_response(a_cs, w0), a_cs, NompOptions(k=1))
            assert wrap_err(res.paths[0].spatial_freq, w0) <= 1e-9

    def test_known_k_requires_k(self):
        with pytest.raises(InvalidInputError):
            extract_paths(np.ones(16), a_cs_for(0), NompOptions())

    def test_options_validated(self):
        with pytest.raises(InvalidInputError):
            NompOptions(grid_oversampling=1)
        with pytest.raises(InvalidInputError):
            NompOptions(tau_rel=1.0)
