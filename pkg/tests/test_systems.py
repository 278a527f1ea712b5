import cmath
import math

import numpy as np
import pytest

from ifslearn.markov import SymbolSequence, TransitionMatrix, sample_chain
from ifslearn.systems import (
    DomainError,
    GeneratorSet,
    Domain,
    ObservationSeries,
    Trajectory,
    builtin_system,
    evaluate_generator,
    observe,
    parse_polynomial_system,
    read_observation_csv,
    read_trajectory_csv,
    simulate,
    write_observation_csv,
    write_trajectory_csv,
)

# f(0) = 1 / (sqrt(3) + 1), evaluated with Python complex arithmetic
MOBIUS_AT_ZERO = 0.36602540378443865


def mobius_reference(z: complex, j: int) -> complex:
    s3 = math.sqrt(3.0)
    w = ((s3 - 1) * z + 1) / (-z + s3 + 1)
    return cmath.exp(2j * math.pi * j / 3) * w


class TestGenerators:
    def test_henon_at_origin(self):
        assert evaluate_generator(builtin_system("henon"), 1, [0.0, 0.0]).tolist() == [1.0, 0.0]

    def test_henon_second_map(self):
        x, y = 0.3, -0.1
        out = evaluate_generator(builtin_system("henon"), 2, [x, y])
        assert np.allclose(out, [y + 1 - 1.2 * (x - 0.2) ** 2, -0.2 * x], atol=0, rtol=1e-15)

    def test_logistic_r4(self):
        assert evaluate_generator(builtin_system("logistic3"), 3, [0.5]).tolist() == [1.0]

    def test_mobius_at_zero(self):
        out = evaluate_generator(builtin_system("sierpinski"), 1, [0.0, 0.0])
        assert out[0] == pytest.approx(MOBIUS_AT_ZERO, abs=1e-15)
        assert out[1] == 0.0

    def test_mobius_against_complex_reference(self, rng):
        gs = builtin_system("sierpinski")
        for _ in range(200):
            r, t = math.sqrt(rng.random()), 2 * math.pi * rng.random()
            z = r * cmath.exp(1j * t)
            for j in range(3):
                ref = mobius_reference(z, j)
                out = evaluate_generator(gs, j + 1, [z.real, z.imag])
                assert abs(complex(*out) - ref) < 1e-14

    def test_mobius_maps_disk_into_itself(self, rng):
        gs = builtin_system("sierpinski")
        t = 2 * np.pi * rng.random(5000)
        r = np.concatenate([np.ones(2500), np.sqrt(rng.random(2500))])
        pts = np.column_stack([r * np.cos(t), r * np.sin(t)])
        pts /= np.maximum(1.0, np.hypot(pts[:, 0], pts[:, 1]))[:, None]
        for f in gs.maps:
            img = np.array([f(p) for p in pts])
            assert np.hypot(img[:, 0], img[:, 1]).max() <= 1 + 1e-12

    def test_out_of_domain_reports_coordinate(self):
        with pytest.raises(DomainError) as exc:
            evaluate_generator(builtin_system("logistic3"), 1, [1.5])
        assert exc.value.coordinate is not None

    def test_bad_index(self):
        with pytest.raises(ValueError):
            evaluate_generator(builtin_system("henon"), 3, [0.0, 0.0])

    def test_unknown_builtin(self):
        with pytest.raises(ValueError, match="unknown system"):
            builtin_system("lorenz")


class TestSimulate:
    def test_identity_map_constant(self):
        gs = GeneratorSet("id", 2, (lambda x: x.copy(),), Domain("any"))
        tr = simulate(gs, SymbolSequence([1] * 10, 1), [0.25, -3.0], burn_in=0)
        assert len(tr) == 11 and np.all(tr.points == [0.25, -3.0])

    def test_burn_in_consumes_prefix(self):
        gs = builtin_system("henon")
        d = sample_chain(TransitionMatrix.uniform(2), 50, seed=1)
        tr = simulate(gs, d, [0, 0], burn_in=20)
        assert len(tr) == 31
        assert tr.driving == d[20:]

    def test_recursion_exact(self):
        gs = builtin_system("henon")
        d = sample_chain(TransitionMatrix.uniform(2), 600, seed=2)
        tr = simulate(gs, d, [0, 0], burn_in=100)
        for n in range(len(tr) - 1):
            nxt = evaluate_generator(gs, tr.driving[n], tr.points[n])
            assert np.array_equal(nxt, tr.points[n + 1])

    def test_henon_bounded(self):
        d = sample_chain(TransitionMatrix.uniform(2), 3100, seed=3)
        tr = simulate(builtin_system("henon"), d, [0, 0])
        assert np.abs(tr.points).max() <= 2.0

    def test_sierpinski_in_disk(self):
        d = sample_chain(TransitionMatrix.uniform(3), 5100, seed=4)
        tr = simulate(builtin_system("sierpinski"), d, [0, 0])
        assert np.hypot(tr.points[:, 0], tr.points[:, 1]).max() <= 1 + 1e-9

    def test_deterministic(self):
        gs = builtin_system("sierpinski")
        d = sample_chain(TransitionMatrix.uniform(3), 300, seed=5)
        assert np.array_equal(simulate(gs, d, [0.1, 0.2]).points, simulate(gs, d, [0.1, 0.2]).points)

    def test_domain_violation_reports_step(self):
        gs = parse_polynomial_system("dim 1\ndomain box -1 1\nf1.1 = 2*x1\n")
        with pytest.raises(DomainError) as exc:
            simulate(gs, SymbolSequence([1] * 10, 1), [0.3], burn_in=0)
        assert exc.value.step == 2

    def test_bad_x0(self):
        with pytest.raises(ValueError):
            simulate(builtin_system("henon"), SymbolSequence([1, 2], 2), [0.0], burn_in=0)


class TestObserve:
    def setup_method(self):
        d = sample_chain(TransitionMatrix.uniform(3), 400, seed=6)
        self.sier = simulate(builtin_system("sierpinski"), d, [0, 0])
        d = sample_chain(TransitionMatrix.uniform(2), 400, seed=6)
        self.henon = simulate(builtin_system("henon"), d, [0, 0])

    def test_projection(self):
        assert np.array_equal(observe(self.henon, "x1").values, self.henon.points[:, 0])
        assert np.array_equal(observe(self.henon, 2).values, self.henon.points[:, 1])

    def test_imaginary_part(self):
        z = observe(self.sier, "im").values
        assert np.array_equal(z, self.sier.points[:, 1])
        assert np.all(np.abs(z) <= 1.0)

    def test_identity_on_logistic(self):
        d = sample_chain(TransitionMatrix.uniform(3), 200, seed=7)
        tr = simulate(builtin_system("logistic3"), d, [0.3])
        assert np.array_equal(observe(tr, "identity").values, tr.points[:, 0])

    def test_callable(self):
        z = observe(self.henon, lambda p: p[0] + p[1]).values
        assert np.allclose(z, self.henon.points.sum(axis=1))

    def test_invalid(self):
        with pytest.raises(ValueError):
            observe(self.henon, "x3")
        with pytest.raises(ValueError):
            observe(self.henon, "velocity")


class TestPolynomialSystems:
    def test_matches_builtin_henon(self, rng):
        text = """
        # Henon pair
        dim 2
        domain box -2 2 -2 2
        f1.1 = x2 + 1 - 1.2*x1^2
        f1.2 = 0.3*x1
        f2.1 = x2 + 1 - 1.2*x1^2 + 0.48*x1 - 0.048
        f2.2 = -0.2*x1
        """
        gs = parse_polynomial_system(text)
        ref = builtin_system("henon")
        for _ in range(50):
            x = rng.uniform(-1.5, 1.5, 2)
            for i in (1, 2):
                assert np.allclose(evaluate_generator(gs, i, x), evaluate_generator(ref, i, x), atol=1e-14)

    def test_errors(self):
        with pytest.raises(ValueError):
            parse_polynomial_system("dim 2\nf1.1 = x1\n")
        with pytest.raises(ValueError):
            parse_polynomial_system("dim 1\nf1.1 = x2\n")


class TestCSV:
    def test_trajectory_round_trip(self, tmp_path):
        d = sample_chain(TransitionMatrix.uniform(2), 150, seed=8)
        tr = simulate(builtin_system("henon"), d, [0, 0])
        write_trajectory_csv(tr, tmp_path / "t.csv")
        lines = (tmp_path / "t.csv").read_text().splitlines()
        assert lines[0] == "n,x_1,x_2,omega"
        assert lines[-1].endswith(",")
        back = read_trajectory_csv(tmp_path / "t.csv")
        assert np.array_equal(back.points, tr.points)
        assert back.driving == tr.driving

    def test_trajectory_without_omega(self, tmp_path):
        d = sample_chain(TransitionMatrix.uniform(2), 120, seed=8)
        tr = simulate(builtin_system("henon"), d, [0, 0])
        write_trajectory_csv(tr, tmp_path / "t.csv", include_omega=False)
        assert "omega" not in (tmp_path / "t.csv").read_text().splitlines()[0]
        with pytest.raises(ValueError, match="omega"):
            read_trajectory_csv(tmp_path / "t.csv")

    def test_observation_round_trip(self, tmp_path):
        obs = ObservationSeries(np.linspace(-1, 1, 17), "im")
        write_observation_csv(obs, tmp_path / "o.csv")
        back = read_observation_csv(tmp_path / "o.csv")
        assert np.array_equal(back.values, obs.values)
        assert back.observable_id == "im"

    def test_empty_file(self, tmp_path):
        (tmp_path / "o.csv").write_text("n,z_1\n")
        with pytest.raises(ValueError):
            read_observation_csv(tmp_path / "o.csv")


def test_trajectory_length_invariant():
    with pytest.raises(ValueError):
        Trajectory(np.zeros((3, 1)), SymbolSequence([1], 1))
