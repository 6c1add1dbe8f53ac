import numpy as np
import pytest

from hecnet import engine, weights_io
from hecnet.approx import swish_pstar
from hecnet.engine import BatchNormAffine, Conv2d, Dense, NetworkSpec, PolyActivation, ScaledAvgPool
from hecnet.params_io import ParamsError, load_bundled, params_to_text, parse_params_text
from hecnet.weights_io import WeightsError, load_network, save_network


def _full_net(rng):
    return NetworkSpec(
        (1, 6, 6),
        [
            Conv2d(rng.normal(0, 0.5, (2, 1, 3, 3)), rng.normal(0, 0.2, 2), stride=1, padding=1),
            BatchNormAffine(rng.uniform(0.5, 1.5, 2), rng.normal(0, 0.1, 2)),
            PolyActivation(swish_pstar()),
            ScaledAvgPool(2, stride=2),
            Dense(rng.normal(0, 0.5, (3, 18)), rng.normal(0, 0.2, 3)),
        ],
    )


class TestWeightsFile:
    def test_roundtrip_identical_arrays(self, tmp_path, rng):
        net = _full_net(rng)
        path = tmp_path / "m.fcnw"
        save_network(net, path)
        again = load_network(path)
        assert len(again.layers) == len(net.layers)
        assert np.array_equal(again.layers[0].weights, net.layers[0].weights)
        assert np.array_equal(again.layers[0].bias, net.layers[0].bias)
        assert np.array_equal(again.layers[1].scale, net.layers[1].scale)
        assert again.layers[2].poly.pow2_terms == swish_pstar().pow2_terms
        assert again.layers[3].window == 2
        x = rng.uniform(-1, 1, (1, 6, 6))
        assert np.allclose(engine.eval_plain(net, x), engine.eval_plain(again, x))

    def test_mask_survives(self, tmp_path, rng):
        w = rng.normal(0, 1, (3, 4))
        mask = (rng.uniform(size=(3, 4)) > 0.5).astype(float)
        mask[0, 0] = 1.0
        net = NetworkSpec((4,), [Dense(w, None, mask=mask)])
        path = tmp_path / "m.fcnw"
        save_network(net, path)
        again = load_network(path)
        assert np.array_equal(again.layers[0].mask, mask)

    def test_quantized_exports_carry_exponents(self, tmp_path):
        w = np.array([[0.5, -0.25], [0.0, 2.0]])
        net = NetworkSpec((2,), [Dense(w, None)])
        path = tmp_path / "q.fcnw"
        save_network(net, path)
        raw = path.read_bytes()
        again = load_network(path)
        assert np.array_equal(again.layers[0].weights, w)
        # tamper with one exponent: loader must refuse
        bad = bytearray(raw)
        bad[-2] ^= 0x01
        path.write_bytes(bytes(bad))
        with pytest.raises(WeightsError):
            load_network(path)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "x.fcnw"
        path.write_bytes(b"NOPE" + bytes(64))
        with pytest.raises(WeightsError):
            load_network(path)

    def test_truncation_rejected(self, tmp_path, rng):
        net = _full_net(rng)
        path = tmp_path / "m.fcnw"
        save_network(net, path)
        data = path.read_bytes()
        path.write_bytes(data[: len(data) - 9])
        with pytest.raises(WeightsError):
            load_network(path)


class TestParamsFile:
    def test_bundled_sets_load(self):
        for name in ("default", "mnist", "tiny"):
            pf = load_bundled(name)
            assert pf.params.n in (1024, 8192)

    def test_default_matches_reference_figures(self):
        pf = load_bundled("default")
        assert pf.params.n == 8192
        assert len(pf.params.limb_primes) == 4
        assert 218.9 < __import__("math").log2(pf.params.q) < 219.1
        assert pf.params.t_lanes == (1099511922689,)
        assert pf.fixed_point.precision_bits == 15

    def test_mnist_lanes(self):
        pf = load_bundled("mnist")
        assert pf.params.t_lanes == (1099511922689, 1099512004609)

    def test_unknown_key_rejected_with_line(self):
        with pytest.raises(ParamsError, match="line 3"):
            parse_params_text("n = 1024\nlimb_primes = 12289\nwibble = 7\n")

    def test_bad_value_reports_line(self):
        with pytest.raises(ParamsError, match="line 1"):
            parse_params_text("n = twelve\n")

    def test_missing_required(self):
        with pytest.raises(ParamsError, match="t_lanes"):
            parse_params_text("n = 1024\nlimb_primes = 12289\n")

    def test_duplicate_rejected(self):
        with pytest.raises(ParamsError, match="duplicate"):
            parse_params_text("n = 1024\nn = 2048\nlimb_primes = 1\nt_lanes = 1\n")

    def test_invalid_crypto_params_rejected(self):
        text = "n = 1000\nlimb_primes = 12289\nt_lanes = 257\n"
        with pytest.raises(ParamsError, match="invalid parameters"):
            parse_params_text(text)

    def test_digest_stable_and_seed_free(self):
        pf = load_bundled("tiny")
        text = params_to_text(pf) + "seed = 7\n"
        with_seed = parse_params_text(text.replace("seed = 7", "") + "seed = 7\n")
        assert with_seed.digest == pf.digest
        assert with_seed.seed == 7

    def test_roundtrip_text(self):
        pf = load_bundled("tiny")
        again = parse_params_text(params_to_text(pf))
        assert again.params == pf.params
        assert again.digest == pf.digest
