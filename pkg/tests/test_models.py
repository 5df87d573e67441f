import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from zakline import models
from zakline.errors import ParseError, ValidationError
from zakline.gauge import LoopGrid
from zakline.models import (
    FourierModel, SshModel, SshParams, chiral_residual, energies, hopping_amplitudes,
    load_model, parse_real, pauli_decompose, pt_classify, ssh_bloch,
)


@pytest.mark.parametrize("theta, expected", [
    (0.0, (1.5, 0.5)),
    (math.pi / 2, (1.0, 1.0)),
    (math.pi, (0.5, 1.5)),
])
def test_hopping_amplitudes(theta, expected):
    assert hopping_amplitudes(SshParams(theta=theta)) == pytest.approx(expected, abs=1e-15)


def test_amplitudes_at_0_3pi():
    tp, tm = hopping_amplitudes(SshParams(theta=0.3 * math.pi))
    assert tp == pytest.approx(1.2939, abs=1e-4)
    assert tm == pytest.approx(0.7061, abs=1e-4)


def test_bloch_matrix_examples():
    H0 = ssh_bloch(0.0, SshParams(gamma=1))
    assert np.allclose(H0, [[-0.5j, 2], [2, 0.5j]], atol=1e-15)
    Hpi = ssh_bloch(math.pi, SshParams(gamma=0))
    assert np.allclose(Hpi, [[0, -1], [-1, 0]], atol=1e-15)


@given(st.floats(-10, 10), st.floats(0, 2 * math.pi), st.floats(0, 3))
def test_bloch_symmetries(k, theta, gamma):
    p = SshParams(theta=theta, gamma=gamma)
    H = ssh_bloch(k, p)
    # combined parity-time action sigma1 H* sigma1
    assert np.allclose(models.SIGMA1 @ H.conj() @ models.SIGMA1, H, atol=1e-14)
    assert np.allclose(H.T, ssh_bloch(-k, p), atol=1e-14)
    assert np.allclose(H, ssh_bloch(k + 2 * math.pi, p), atol=1e-13)


@pytest.mark.parametrize("kwargs", [dict(t=0), dict(t=-1), dict(delta=1), dict(delta=-0.1),
                                    dict(gamma=-1), dict(theta=math.inf)])
def test_params_validation(kwargs):
    with pytest.raises(ValidationError):
        SshParams(**kwargs)


class TestPauli:
    def test_sigma1(self):
        c = pauli_decompose(models.SIGMA1)
        assert c.n0 == 0 and c.n == pytest.approx((1, 0, 0))

    def test_identity(self):
        c = pauli_decompose(np.eye(2))
        assert c.n0 == 1 and c.n == pytest.approx((0, 0, 0))

    def test_ssh_point(self):
        c = pauli_decompose(ssh_bloch(math.pi / 2, SshParams(gamma=1)))
        assert np.allclose(c.n, (0.5, -1.5, -0.5j), atol=1e-15)
        assert sorted(energies(c), key=lambda z: z.real) == pytest.approx([-1.5, 1.5])

    def test_energies_examples(self):
        assert energies(models.PauliCoeffs(0, (1, 0, 0))) == pytest.approx((1, -1))
        E = energies(models.PauliCoeffs(0, (0, 0, -0.5j)))
        assert sorted(abs(e) for e in E) == pytest.approx([0.5, 0.5])
        assert all(abs(e.real) < 1e-15 for e in E)

    def test_round_trip(self):
        H = np.random.default_rng(0).normal(size=(2, 2)) + 1j
        assert np.allclose(pauli_decompose(H).matrix(), H)

    def test_rejects_non_2x2(self):
        with pytest.raises(ValueError):
            pauli_decompose(np.eye(3))


class TestPtClassify:
    grid = LoopGrid.brillouin_zone(401)

    def test_unbroken(self):
        assert not pt_classify(SshModel(SshParams(theta=0)), self.grid).broken

    def test_broken(self):
        r = pt_classify(SshModel(SshParams(theta=math.pi / 2)), self.grid)
        assert r.broken and r.status == "broken"
        assert r.max_imag_gap == pytest.approx(0.5)
        assert r.critical_points

    @pytest.mark.parametrize("theta", [0.1, 1.3, math.pi / 2, 2.5])
    def test_hermitian_always_unbroken(self, theta):
        r = pt_classify(SshModel(SshParams(theta=theta, gamma=0)), self.grid)
        assert r.status == "unbroken"


class TestChiral:
    grid = LoopGrid.brillouin_zone(201)

    def test_hermitian_ssh_has_sigma3(self):
        a, res = chiral_residual(SshModel(SshParams(gamma=0)), self.grid)
        assert np.allclose(a, [0, 0, 1])
        assert res <= 1e-12

    def test_gain_loss_breaks_it(self):
        _, res = chiral_residual(SshModel(SshParams(gamma=1)), self.grid)
        assert res > 0.1

    def test_planar_model(self):
        class Planar:
            dim = 2

            def __call__(self, k):
                # n(k) = (cos k + 0.2i, 0, sin k) stays in the plane normal to y
                return (math.cos(k) + 0.2j) * models.SIGMA1 + math.sin(k) * models.SIGMA3

        a, res = chiral_residual(Planar(), self.grid)
        assert np.allclose(a, [0, 1, 0])
        assert res <= 1e-12

    def test_needs_2x2(self):
        with pytest.raises(ValueError):
            chiral_residual(FourierModel(3, ((0, 1, 0, 1.0),)), self.grid)


class TestConfig:
    def test_one_line_ssh(self):
        m = load_model("model=ssh t=1 delta=0.5 gamma=1 theta=0.3pi")
        assert m.params == SshParams(1, 0.5, 1, 0.3 * math.pi)

    def test_multiline_with_comments(self):
        m = load_model("# reference chain\nmodel = ssh\n\ngamma=1  # gain/loss\ntheta = pi\n")
        assert m.params.theta == pytest.approx(math.pi)
        assert m.params.delta == 0.5

    def test_malformed_value(self):
        with pytest.raises(ParseError) as err:
            load_model("model=ssh\ndelta=two")
        assert err.value.line == 2 and err.value.field == "delta"

    @pytest.mark.parametrize("text", ["delta=0.5", "model=ssh foo=1", "model=cube",
                                      "model=ssh justtext", "model=fourier dim=2 entry=0,1,0"])
    def test_parse_errors(self, text):
        with pytest.raises(ParseError):
            load_model(text)

    @pytest.mark.parametrize("text", ["model=ssh delta=1.5", "model=ssh dim=2",
                                      "model=fourier entry=0,1,0,1,0",
                                      "model=fourier dim=2 gamma=1 entry=0,1,0,1,0",
                                      "model=fourier dim=2 entry=0,5,0,1,0",
                                      "model=fourier dim=2"])
    def test_validation_errors(self, text):
        with pytest.raises(ValidationError):
            load_model(text)

    def test_fourier_reproduces_ssh(self):
        p = SshParams(theta=0.3 * math.pi)
        tp, tm = hopping_amplitudes(p)
        text = "\n".join([
            "model=fourier", "dim=2",
            "entry=0,0,0,0,-0.5", "entry=1,1,0,0,0.5",
            f"entry=0,1,0,{tm!r},0", f"entry=0,1,1,{tp!r},0",
            f"entry=1,0,0,{tm!r},0", f"entry=1,0,-1,{tp!r},0",
        ])
        m = load_model(text)
        ks = np.random.default_rng(7).uniform(-math.pi, math.pi, 100)
        for k in ks:
            assert np.allclose(m(k), ssh_bloch(k, p), rtol=0, atol=1e-14)


@pytest.mark.parametrize("text, value", [
    ("0.3pi", 0.3 * math.pi), ("pi", math.pi), ("-pi", -math.pi), ("2*pi", 2 * math.pi),
    ("1.5", 1.5), (" 1e-3 ", 1e-3),
])
def test_parse_real(text, value):
    assert parse_real(text, allow_pi=True) == pytest.approx(value)


def test_parse_real_pi_needs_permission():
    with pytest.raises(ValueError):
        parse_real("0.3pi")
