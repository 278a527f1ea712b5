import warnings

import numpy as np
import pytest

from ifslearn.hdi import (
    FitOptions,
    HDIModel,
    RolloutOverflow,
    basis_names,
    fill_symbols,
    fit,
    gradient_check,
    loss_and_gradient,
    monomial_exponents,
    read_model,
    resimulate,
    rollout,
    write_fit_report,
    write_model,
)
from ifslearn.markov import TransitionMatrix, sample_chain
from ifslearn.systems import builtin_system, observe, simulate

QUICK = FitOptions(restarts=2, max_iter=3000)


def linear_model(a, b=0.0):
    return HDIModel(1, 0, 1, [[[b, a]]])


def fd_relative_error(model, z, w, step=1e-6):
    """Central differences of the rollout MSE against the analytic gradient.

    Entries are compared as ``|a - f| / max(|a|, |f|, 1e-3 max|a|)``.
    """
    _, gC, gh = loss_and_gradient(model, z, w)
    a = np.concatenate([gC.ravel(), gh])
    theta = model.to_vector()
    f = np.empty_like(theta)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = step
        f[i] = (rollout(model.from_vector(theta + e), z, w).mse - rollout(model.from_vector(theta - e), z, w).mse) / (2 * step)
    den = np.maximum(np.maximum(np.abs(a), np.abs(f)), 1e-3 * np.abs(a).max())
    return float(np.max(np.abs(a - f) / den))


def random_instance(rng):
    """Random model and data whose rollout stays finite."""
    while True:
        k, V, d = int(rng.integers(1, 4)), int(rng.integers(0, 3)), int(rng.integers(1, 4))
        m = HDIModel.zeros(k, V, d)
        m = m.from_vector(rng.normal(0.0, 0.2, m.n_params))
        z = rng.uniform(-1, 1, 31)
        w = rng.integers(1, k + 1, 30)
        try:
            rollout(m, z, w)
        except RolloutOverflow:
            continue
        return m, z, w


class TestBasis:
    def test_order(self):
        assert monomial_exponents(2, 2).tolist() == [[0, 0], [1, 0], [0, 1], [2, 0], [1, 1], [0, 2]]
        assert basis_names(1, 2) == ["1", "z", "h1", "z^2", "z*h1", "h1^2"]

    def test_count(self):
        assert HDIModel.zeros(3, 1, 3).n_basis == 10
        assert len(monomial_exponents(3, 3)) == 20

    def test_shape_errors(self):
        with pytest.raises(ValueError, match="shape"):
            HDIModel(1, 0, 2, np.zeros((1, 1, 2)))
        with pytest.raises(ValueError, match="h0"):
            HDIModel(1, 1, 1, np.zeros((1, 2, 3)), h0=[0.0, 1.0])
        with pytest.raises(ValueError, match="finite"):
            HDIModel(1, 0, 1, [[[np.nan, 0.0]]])


class TestRollout:
    def test_exact_linear(self):
        z = 2.0 ** -np.arange(20)
        r = rollout(linear_model(0.5), z, np.ones(19, int))
        assert np.all(r.residuals == 0.0) and r.mse == 0.0

    def test_zero_model(self):
        z = np.array([0.3, -0.2, 0.5, 0.1])
        r = rollout(HDIModel.zeros(2, 1, 2), z, [1, 2, 1])
        assert np.all(r.predicted == 0.0)
        assert r.mse == pytest.approx(np.mean(z[1:] ** 2), rel=1e-15)

    def test_hidden_runs_free(self):
        # h_{n+1} = h_n + 1, z_{n+1} = h_n: predictions ignore the observed z
        C = np.zeros((1, 2, 3))
        C[0, 0, 2] = 1.0
        C[0, 1, 0] = 1.0
        C[0, 1, 2] = 1.0
        m = HDIModel(1, 1, 1, C, h0=[2.0])
        r = rollout(m, np.zeros(5), np.ones(4, int))
        assert r.predicted.tolist() == [2, 3, 4, 5]

    def test_overflow_reports_step(self):
        with pytest.raises(RolloutOverflow) as exc:
            rollout(linear_model(0.0, 1e7), np.zeros(5), np.ones(4, int))
        assert exc.value.step == 0

    def test_shape_errors(self):
        with pytest.raises(ValueError, match="len"):
            rollout(linear_model(0.5), np.zeros(5), np.ones(5, int))
        with pytest.raises(ValueError, match="outside"):
            rollout(HDIModel.zeros(1, 1, 1), np.zeros(3), [1, 2])
        with pytest.raises(ValueError, match="outside"):
            rollout(HDIModel.zeros(1, 1, 1), np.zeros(3), [1, 0])

    def test_unknown_symbols_masked_without_hidden(self):
        z = 2.0 ** -np.arange(6)
        r = rollout(linear_model(0.5), z, [1, 0, 1, 0, 1])
        assert r.residuals.size == 3


class TestGradient:
    def test_random_instances(self, rng):
        worst = max(fd_relative_error(*random_instance(rng)) for _ in range(50))
        assert worst <= 1e-5

    def test_library_check_agrees(self, rng):
        m, z, w = random_instance(rng)
        assert gradient_check(m, z, w) <= 1e-5

    def test_zero_residual_zero_gradient(self):
        z = 2.0 ** -np.arange(15)
        loss, gC, _ = loss_and_gradient(linear_model(0.5), z, np.ones(14, int))
        assert loss == 0.0 and np.all(gC == 0.0)

    def test_zero_residual_with_hidden(self, rng):
        m = random_instance(rng)[0]
        m = HDIModel(m.k, m.V, m.degree, m.coefficients * 0.5, m.h0)
        w = rng.integers(1, m.k + 1, 25)
        z = resimulate(m, 0.1, None, w).values
        loss, gC, gh = loss_and_gradient(m, z, w)
        assert loss == 0.0 and np.all(gC == 0.0) and np.all(gh == 0.0)

    def test_normal_equations(self, rng):
        # V = 0: the gradient of the mean squared error is (2/N) F^T (F c - y) per symbol
        k, d = 2, 3
        z = rng.uniform(-1, 1, 41)
        w = rng.integers(1, k + 1, 40)
        m = HDIModel.zeros(k, 0, d).from_vector(rng.normal(0, 0.3, k * (d + 1)))
        _, gC, _ = loss_and_gradient(m, z, w)
        F = np.vander(z[:-1], d + 1, increasing=True)
        for a in range(k):
            sel = w == a + 1
            c = m.coefficients[a, 0]
            ref = 2.0 / w.size * F[sel].T @ (F[sel] @ c - z[1:][sel])
            assert np.allclose(gC[a, 0], ref, atol=1e-14, rtol=1e-12)


class TestFit:
    def test_recovers_half(self):
        z = 2.0 ** -np.arange(40)
        m, r = fit(z, np.ones(39, int), 1, 0, 1, QUICK)
        assert abs(m.coefficients[0, 0, 1] - 0.5) <= 1e-6
        assert r.mse <= 1e-12

    def test_matches_least_squares(self, rng):
        z = np.empty(301)
        z[0] = 0.2
        for n in range(300):
            z[n + 1] = 0.1 + 0.7 * z[n] + 0.05 * rng.standard_normal()
        m, r = fit(z, np.ones(300, int), 1, 0, 1, QUICK)
        F = np.vander(z[:-1], 2, increasing=True)
        ref = np.linalg.lstsq(F, z[1:], rcond=None)[0]
        assert np.max(np.abs(m.coefficients[0, 0] - ref)) <= 1e-8

    def test_history_monotone(self):
        z = np.cos(np.arange(200) * 0.9)
        _, r = fit(z, np.ones(199, int), 1, 1, 2, FitOptions(restarts=1, max_iter=500, polish=False))
        assert r.history.size > 0
        assert np.all(np.diff(r.history) <= 0)

    def test_underdetermined_warning(self):
        with pytest.warns(UserWarning, match="underdetermined"):
            fit(np.arange(6.0), np.ones(5, int), 1, 0, 1, FitOptions(restarts=1, max_iter=50))

    def test_deterministic(self):
        z = np.sin(np.arange(60) * 0.7)
        w = np.arange(59) % 2 + 1
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            a = fit(z, w, 2, 1, 2, FitOptions(restarts=2, max_iter=300), seed=3)[0]
            b = fit(z, w, 2, 1, 2, FitOptions(restarts=2, max_iter=300), seed=3)[0]
        assert np.array_equal(a.to_vector(), b.to_vector())

    def test_unknown_symbols_left_out(self):
        z = 2.0 ** -np.arange(40)
        w = np.ones(39, int)
        w[::3] = 0
        m, r = fit(z, w, 1, 0, 1, QUICK)
        assert r.residuals.size == np.count_nonzero(w)
        assert abs(m.coefficients[0, 0, 1] - 0.5) <= 1e-6

    def test_warm_start_shape_checked(self):
        with pytest.raises(ValueError, match="different shape"):
            fit(np.zeros(60), np.ones(59, int), 1, 0, 1, QUICK, init=HDIModel.zeros(2, 0, 1))


def test_permutation_equivariance(rng):
    for _ in range(20):
        m, z, w = random_instance(rng)
        perm = rng.permutation(m.k) + 1
        before = rollout(m, z, w).mse
        after = rollout(m.permute_symbols(perm), z, perm[w - 1]).mse
        assert after == before


class TestResimulate:
    def test_geometric_decay(self):
        out = resimulate(linear_model(0.5), 1.0, None, np.ones(30, int)).values
        assert np.array_equal(out, 2.0 ** -np.arange(31))

    def test_zero_model(self):
        out = resimulate(HDIModel.zeros(2, 1, 3), 0.7, None, [1, 2, 2, 1]).values
        assert out[0] == 0.7 and np.all(out[1:] == 0.0)

    def test_divergence(self):
        with pytest.raises(RolloutOverflow) as exc:
            resimulate(linear_model(10.0), 1.0, None, np.ones(20, int))
        # step 6 produces z_7 = 1e7, the first value beyond the bound
        assert exc.value.step == 6

    def test_bad_symbols(self):
        with pytest.raises(ValueError):
            resimulate(linear_model(0.5), 1.0, None, [1, 2])


def test_fill_symbols_recovers_henon_driving():
    # the exact Henon map written as a model with h = y
    C = np.zeros((2, 2, 6))
    C[0, 0, [0, 2, 3]] = [1.0, 1.0, -1.2]
    C[0, 1, 1] = 0.3
    C[1, 0, [0, 1, 2, 3]] = [1.0 - 1.2 * 0.04, 2 * 1.2 * 0.2, 1.0, -1.2]
    C[1, 1, 1] = -0.2
    d = sample_chain(TransitionMatrix.uniform(2), 400, seed=5)
    tr = simulate(builtin_system("henon"), d, [0, 0])
    m = HDIModel(2, 1, 2, C, h0=[tr.points[0, 1]])
    z, w = observe(tr, "x1").values, tr.driving.symbols
    assert rollout(m, z, w).mse < 1e-25
    holes = w.copy()
    holes[np.random.default_rng(0).random(w.size) < 0.1] = 0
    assert np.array_equal(fill_symbols(m, z, holes), w)


class TestIO:
    def test_model_round_trip(self, tmp_path, rng):
        m = random_instance(rng)[0]
        write_model(m, tmp_path / "m.ini")
        back = read_model(tmp_path / "m.ini")
        assert np.array_equal(back.coefficients, m.coefficients) and np.array_equal(back.h0, m.h0)

    def test_basis_mismatch(self, tmp_path):
        write_model(HDIModel.zeros(1, 1, 2), tmp_path / "m.ini")
        text = (tmp_path / "m.ini").read_text().replace("degree = 2", "degree = 1")
        (tmp_path / "m.ini").write_text(text)
        with pytest.raises(ValueError, match="basis"):
            read_model(tmp_path / "m.ini")

    def test_report(self, tmp_path):
        _, r = fit(2.0 ** -np.arange(40), np.ones(39, int), 1, 0, 1, QUICK)
        write_fit_report(r, tmp_path / "f.ini")
        assert "mse" in (tmp_path / "f.ini").read_text()
