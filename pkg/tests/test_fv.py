import numpy as np
import pytest

from hecnet import fv, ring
from hecnet.fv import Ciphertext, EncryptionParams, FVError, PlainPoly


def _plain(pf, value, lane=0):
    t = int(pf.params.t_lanes[lane])
    return PlainPoly(t, np.array([value % t], dtype=np.uint64))


def _enc(pf, keys, value, seed, lane=0):
    _, pk, _ = keys
    return fv.encrypt(pk, pf.params, _plain(pf, value, lane), lane, 0, seed)


def _dec_value(pf, keys, ct):
    sk = keys[0]
    p = fv.decrypt(sk, ct)
    t = int(pf.params.t_lanes[ct.lane])
    vals = p.centered()
    assert all(v == 0 for v in vals[1:])
    return (vals[0] if vals else 0) % t


class TestKeygen:
    def test_deterministic_under_seed(self, tiny_pf):
        a = fv.keygen(tiny_pf.params, 7)
        b = fv.keygen(tiny_pf.params, 7)
        assert np.array_equal(a[0].s.data, b[0].s.data)
        assert np.array_equal(a[1].p0.data, b[1].p0.data)
        assert np.array_equal(a[1].p1.data, b[1].p1.data)
        for x, y in zip(a[2].g, b[2].g):
            assert np.array_equal(x.data, y.data)

    def test_different_seed_differs(self, tiny_pf):
        a = fv.keygen(tiny_pf.params, 7)
        b = fv.keygen(tiny_pf.params, 8)
        assert not np.array_equal(a[0].s.data, b[0].s.data)

    def test_secret_is_ternary(self, tiny_keys, tiny_pf):
        sk = tiny_keys[0]
        q0 = tiny_pf.params.limb_primes[0]
        vals = set(int(v) for v in sk.s.data[0])
        assert vals <= {0, 1, q0 - 1}

    def test_public_key_invariant(self, tiny_pf, tiny_keys):
        # p1 + s*p0 must equal the (small) keygen noise -e'
        sk, pk, _ = tiny_keys
        resid = ring.poly_add(pk.p1, ring.poly_mul_ntt(pk.p0, sk.s_ntt))
        ints = fv._crt_coeffs(tiny_pf.params, resid)
        q = tiny_pf.params.q
        bound = 6 * tiny_pf.params.noise_stddev
        for w in ints:
            c = w if w <= q // 2 else w - q
            assert abs(c) <= bound

    def test_eval_key_invariant(self, tiny_pf, tiny_keys):
        # g_i + a_i*s - beta^i*s^2 must be keygen noise
        sk, _, ek = tiny_keys
        params = tiny_pf.params
        s_sq = ring.poly_mul_ntt(sk.s_ntt, sk.s_ntt)
        q = params.q
        for i in (0, params.ell):
            target = ring.scalar_mul(s_sq, pow(params.beta, i, q))
            resid = ring.poly_sub(
                ring.poly_add(ek.g[i], ring.poly_mul_ntt(ek.a[i], sk.s_ntt)), target
            )
            for w in fv._crt_coeffs(params, resid):
                c = w if w <= q // 2 else w - q
                assert abs(c) <= 6 * params.noise_stddev

    def test_roundtrip_many(self, tiny_pf, tiny_keys, rng):
        t = int(tiny_pf.params.t_lanes[0])
        for i in range(100):
            v = int(rng.integers(0, t))
            ct = _enc(tiny_pf, tiny_keys, v, int(rng.integers(0, 2**31)))
            assert _dec_value(tiny_pf, tiny_keys, ct) == v


class TestEncryptDecrypt:
    def test_zero(self, tiny_pf, tiny_keys):
        ct = _enc(tiny_pf, tiny_keys, 0, 1)
        assert _dec_value(tiny_pf, tiny_keys, ct) == 0

    def test_five(self, tiny_pf, tiny_keys):
        ct = _enc(tiny_pf, tiny_keys, 5, 2)
        assert _dec_value(tiny_pf, tiny_keys, ct) == 5

    def test_randomized_but_equal_decryption(self, tiny_pf, tiny_keys):
        a = _enc(tiny_pf, tiny_keys, 9, 3)
        b = _enc(tiny_pf, tiny_keys, 9, 4)
        assert not np.array_equal(a.c0.data, b.c0.data)
        assert _dec_value(tiny_pf, tiny_keys, a) == _dec_value(tiny_pf, tiny_keys, b) == 9

    def test_coefficient_out_of_range(self, tiny_pf):
        t = int(tiny_pf.params.t_lanes[0])
        with pytest.raises(FVError):
            PlainPoly(t, np.array([t], dtype=np.uint64))

    def test_wrong_lane_modulus(self, tiny_pf, tiny_keys):
        _, pk, _ = tiny_keys
        with pytest.raises(FVError):
            fv.encrypt(pk, tiny_pf.params, PlainPoly(97, np.array([1], dtype=np.uint64)))

    def test_polynomial_roundtrip(self, tiny_pf, tiny_keys, rng):
        t = int(tiny_pf.params.t_lanes[0])
        sk, pk, _ = tiny_keys
        coeffs = rng.integers(0, t, 50, dtype=np.uint64)
        m = PlainPoly(t, coeffs)
        ct = fv.encrypt(pk, tiny_pf.params, m, rng=9)
        assert fv.decrypt(sk, ct) == m


class TestHomomorphism:
    def test_add(self, tiny_pf, tiny_keys, rng):
        t = int(tiny_pf.params.t_lanes[0])
        for i in range(25):
            a, b = int(rng.integers(0, t)), int(rng.integers(0, t))
            ca = _enc(tiny_pf, tiny_keys, a, 100 + i)
            cb = _enc(tiny_pf, tiny_keys, b, 200 + i)
            assert _dec_value(tiny_pf, tiny_keys, fv.add_ct(ca, cb)) == (a + b) % t

    def test_add_inverse_gives_zero(self, tiny_pf, tiny_keys):
        t = int(tiny_pf.params.t_lanes[0])
        ca = _enc(tiny_pf, tiny_keys, 123, 5)
        cb = _enc(tiny_pf, tiny_keys, t - 123, 6)
        assert _dec_value(tiny_pf, tiny_keys, fv.add_ct(ca, cb)) == 0

    def test_add_zero_neutral(self, tiny_pf, tiny_keys):
        ca = _enc(tiny_pf, tiny_keys, 77, 7)
        cz = _enc(tiny_pf, tiny_keys, 0, 8)
        assert _dec_value(tiny_pf, tiny_keys, fv.add_ct(ca, cz)) == 77

    def test_sub(self, tiny_pf, tiny_keys):
        t = int(tiny_pf.params.t_lanes[0])
        ca = _enc(tiny_pf, tiny_keys, 100, 9)
        cb = _enc(tiny_pf, tiny_keys, 58, 10)
        assert _dec_value(tiny_pf, tiny_keys, fv.sub_ct(ca, cb)) == 42
        assert _dec_value(tiny_pf, tiny_keys, fv.sub_ct(cb, ca)) == (t - 42) % t

    def test_mul(self, tiny_pf, tiny_keys, rng):
        ek = tiny_keys[2]
        t = int(tiny_pf.params.t_lanes[0])
        for i in range(10):
            a, b = int(rng.integers(0, 1 << 19)), int(rng.integers(0, 1 << 19))
            ca = _enc(tiny_pf, tiny_keys, a, 300 + i)
            cb = _enc(tiny_pf, tiny_keys, b, 400 + i)
            assert _dec_value(tiny_pf, tiny_keys, fv.mul_ct(ca, cb, ek)) == (a * b) % t

    def test_mul_identity(self, tiny_pf, tiny_keys):
        ek = tiny_keys[2]
        c1 = _enc(tiny_pf, tiny_keys, 1, 11)
        cm = _enc(tiny_pf, tiny_keys, 424242, 12)
        assert _dec_value(tiny_pf, tiny_keys, fv.mul_ct(c1, cm, ek)) == 424242

    def test_small_product_chain(self, tiny_pf, tiny_keys):
        # 3 * 4 at depth 1 fits the tiny parameter noise budget
        ek = tiny_keys[2]
        c3 = _enc(tiny_pf, tiny_keys, 3, 13)
        c4 = _enc(tiny_pf, tiny_keys, 4, 14)
        c12 = fv.mul_ct(c3, c4, ek)
        assert _dec_value(tiny_pf, tiny_keys, c12) == 12
        assert c12.mul_depth == 1

    def test_scale_mismatch_rejected(self, tiny_pf, tiny_keys):
        _, pk, _ = tiny_keys
        a = fv.encrypt(pk, tiny_pf.params, _plain(tiny_pf, 1), 0, 15, 1)
        b = fv.encrypt(pk, tiny_pf.params, _plain(tiny_pf, 1), 0, 30, 2)
        with pytest.raises(FVError):
            fv.add_ct(a, b)

    def test_mul_scale_adds(self, tiny_pf, tiny_keys):
        _, pk, ek = tiny_keys
        a = fv.encrypt(pk, tiny_pf.params, _plain(tiny_pf, 2), 0, 15, 1)
        b = fv.encrypt(pk, tiny_pf.params, _plain(tiny_pf, 3), 0, 12, 2)
        prod = fv.mul_ct(a, b, ek)
        assert prod.scale_exponent == 27


class TestPlaintextOps:
    def test_add_pt(self, tiny_pf, tiny_keys):
        ct = _enc(tiny_pf, tiny_keys, 5, 21)
        out = fv.add_pt(ct, _plain(tiny_pf, 3))
        assert _dec_value(tiny_pf, tiny_keys, out) == 8

    def test_add_pt_zero_is_noop(self, tiny_pf, tiny_keys):
        ct = _enc(tiny_pf, tiny_keys, 5, 22)
        out = fv.add_pt(ct, PlainPoly.zero(int(tiny_pf.params.t_lanes[0])))
        assert np.array_equal(out.c0.data, ct.c0.data)

    def test_mul_pt_one(self, tiny_pf, tiny_keys):
        ct = _enc(tiny_pf, tiny_keys, 5, 23)
        out = fv.mul_pt(ct, _plain(tiny_pf, 1))
        assert _dec_value(tiny_pf, tiny_keys, out) == 5

    def test_mul_pt_monomial_power_of_two(self, tiny_pf, tiny_keys):
        # multiplying by x^4 multiplies the encoded value by 2^4
        t = int(tiny_pf.params.t_lanes[0])
        ct = _enc(tiny_pf, tiny_keys, 3, 24)
        m = PlainPoly(t, np.array([0, 0, 0, 0, 1], dtype=np.uint64))
        out = fv.mul_pt(ct, m)
        sk = tiny_keys[0]
        dec = fv.decrypt(sk, out)
        value = sum(c << i for i, c in enumerate(dec.centered()))
        assert value == 48

    def test_mul_pt_zero_rejected(self, tiny_pf, tiny_keys):
        ct = _enc(tiny_pf, tiny_keys, 3, 25)
        with pytest.raises(FVError):
            fv.mul_pt(ct, PlainPoly.zero(int(tiny_pf.params.t_lanes[0])))

    def test_monomial_and_general_paths_bit_identical(self, tiny_pf, tiny_keys, rng):
        t = int(tiny_pf.params.t_lanes[0])
        for i in range(15):
            ct = _enc(tiny_pf, tiny_keys, int(rng.integers(0, t)), 500 + i)
            k = int(rng.integers(0, 64))
            coeffs = np.zeros(k + 1, dtype=np.uint64)
            coeffs[k] = rng.integers(1, t)
            m = PlainPoly(t, coeffs)
            assert fv.is_monomial_plain(m)
            fast = fv.mul_pt(ct, m)
            # force the general path by bypassing the dispatch
            m_ring = fv._plain_to_ring(ct.params, m)
            slow0 = ring.poly_mul_ntt(ct.c0, m_ring)
            slow1 = ring.poly_mul_ntt(ct.c1, m_ring)
            assert np.array_equal(fast.c0.data, slow0.data)
            assert np.array_equal(fast.c1.data, slow1.data)

    def test_mul_pt_scale_tracking(self, tiny_pf, tiny_keys):
        ct = _enc(tiny_pf, tiny_keys, 3, 26)
        out = fv.mul_pt(ct, _plain(tiny_pf, 2), plain_scale_exponent=15)
        assert out.scale_exponent == ct.scale_exponent + 15


class TestNoiseBudget:
    def test_fresh_budget_positive(self, tiny_pf, tiny_keys):
        ct = _enc(tiny_pf, tiny_keys, 5, 31)
        assert fv.noise_budget(tiny_keys[0], ct) > 30

    def test_budget_decreases_under_mul(self, tiny_pf, tiny_keys):
        ek = tiny_keys[2]
        a = _enc(tiny_pf, tiny_keys, 3, 32)
        b = _enc(tiny_pf, tiny_keys, 4, 33)
        prod = fv.mul_ct(a, b, ek)
        budget_a = fv.noise_budget(tiny_keys[0], a)
        budget_b = fv.noise_budget(tiny_keys[0], b)
        assert fv.noise_budget(tiny_keys[0], prod) < min(budget_a, budget_b)

    def test_exhausted_budget_reported(self, tiny_pf, tiny_keys):
        # depth 2 at tiny parameters must exhaust the budget; the
        # diagnostic decrypt has to report rather than return garbage
        sk, pk, ek = tiny_keys
        a = _enc(tiny_pf, tiny_keys, 1 << 18, 34)
        b = _enc(tiny_pf, tiny_keys, 1 << 18, 35)
        d1 = fv.mul_ct(a, b, ek)
        d2 = fv.mul_ct(d1, _enc(tiny_pf, tiny_keys, 3, 36), ek)
        assert fv.noise_budget(sk, d2) < 1.0
        with pytest.raises(FVError):
            fv.decrypt(sk, d2, check_budget=True)


class TestSerialization:
    def test_ciphertext_roundtrip_bits(self, tiny_pf, tiny_keys):
        ct = _enc(tiny_pf, tiny_keys, 5, 41)
        blob = fv.ciphertext_to_bytes(ct)
        again = fv.ciphertext_from_bytes(blob, tiny_pf.params)
        assert fv.ciphertext_to_bytes(again) == blob
        assert np.array_equal(again.c0.data, ct.c0.data)
        assert again.lane == ct.lane and again.scale_exponent == ct.scale_exponent

    def test_word_count_formula(self, tiny_pf, tiny_keys):
        ct = _enc(tiny_pf, tiny_keys, 5, 42)
        blob = fv.ciphertext_to_bytes(ct)
        params = tiny_pf.params
        assert len(blob) == 8 * (8 + 2 * len(params.limb_primes) * params.n)
        assert len(blob) // 8 == fv.ciphertext_num_words(params)

    def test_negative_scale_exponent_survives(self, tiny_pf, tiny_keys):
        _, pk, _ = tiny_keys
        ct = fv.encrypt(pk, tiny_pf.params, _plain(tiny_pf, 1), 0, -12, 1)
        again = fv.ciphertext_from_bytes(fv.ciphertext_to_bytes(ct), tiny_pf.params)
        assert again.scale_exponent == -12

    def test_key_roundtrips(self, tiny_pf, tiny_keys):
        sk, pk, ek = tiny_keys
        params = tiny_pf.params
        sk2 = fv.secret_key_from_bytes(fv.secret_key_to_bytes(sk, params), params)
        assert np.array_equal(sk2.s.data, sk.s.data)
        pk2 = fv.public_key_from_bytes(fv.public_key_to_bytes(pk, params), params)
        assert np.array_equal(pk2.p1.data, pk.p1.data)
        ek2 = fv.eval_keys_from_bytes(fv.eval_keys_to_bytes(ek, params), params)
        assert all(np.array_equal(x.data, y.data) for x, y in zip(ek2.a, ek.a))

    def test_kind_confusion_rejected(self, tiny_pf, tiny_keys):
        sk, pk, ek = tiny_keys
        params = tiny_pf.params
        sk_blob = fv.secret_key_to_bytes(sk, params)
        with pytest.raises(FVError, match="secret key"):
            fv.eval_keys_from_bytes(sk_blob, params)
        with pytest.raises(FVError):
            fv.public_key_from_bytes(sk_blob, params)
        with pytest.raises(FVError):
            fv.ciphertext_from_bytes(fv.public_key_to_bytes(pk, params), params)

    def test_corrupt_magic_rejected(self, tiny_pf, tiny_keys):
        ct = _enc(tiny_pf, tiny_keys, 5, 43)
        blob = bytearray(fv.ciphertext_to_bytes(ct))
        blob[0] ^= 0xFF
        with pytest.raises(FVError):
            fv.ciphertext_from_bytes(bytes(blob), tiny_pf.params)


@pytest.mark.slow
class TestDefaultParams:
    def test_fresh_budget_regression_band(self, default_pf, default_keys):
        # measured 167.5 bits with seed 42; wide band guards regressions
        ct = _enc(default_pf, default_keys, 5, 1)
        budget = fv.noise_budget(default_keys[0], ct)
        assert budget > 30
        assert 150 < budget < 180

    def test_depth_three_chain_decrypts(self, default_pf, default_keys):
        sk, pk, ek = default_keys
        values = [2, 3, 5, 7]
        cts = [_enc(default_pf, default_keys, v, 50 + i) for i, v in enumerate(values)]
        acc = fv.mul_ct(cts[0], cts[1], ek)
        acc = fv.mul_ct(acc, cts[2], ek)
        acc = fv.mul_ct(acc, cts[3], ek)
        assert acc.mul_depth == 3
        assert fv.noise_budget(sk, acc) > 0
        assert _dec_value(default_pf, default_keys, acc) == 2 * 3 * 5 * 7
