import math

import mpmath
import pytest

from relquantiles import params as P
from relquantiles.errors import ModeError, ParameterError

mpmath.mp.dps = 50


# Independent high-precision evaluation of the parameter formulas.
def oracle_streaming(eps, delta, n):
    eps, delta = mpmath.mpf(eps), mpmath.mpf(delta)
    raw = mpmath.ceil(4 / eps * mpmath.sqrt(mpmath.log(1 / delta) / mpmath.log(eps * n, 2)))
    k = max(4, 2 * int(raw))
    B = 2 * k * max(1, int(mpmath.ceil(mpmath.log(mpmath.mpf(n) / k, 2))))
    return k, B


def oracle_mergeable(k_hat, N):
    k_hat = mpmath.mpf(k_hat)
    k = 32 * int(mpmath.ceil(k_hat / mpmath.sqrt(mpmath.log(N / k_hat, 2))))
    B = 2 * k * int(mpmath.ceil(mpmath.log(mpmath.mpf(N) / k, 2) + 1))
    return k, B


def oracle_highconf(eps, delta):
    return 16 * int(mpmath.ceil(mpmath.log(mpmath.log(1 / mpmath.mpf(delta)), 2) / mpmath.mpf(eps)))


class TestStreaming:
    def test_worked_example(self):
        p = P.derive_streaming(0.1, math.exp(-1), 655360)
        assert (p.k, p.B) == (20, 600)
        assert (p.k, p.B) == oracle_streaming(0.1, math.exp(-1), 655360)

    def test_tiny_stream_clamps_B_not_k(self):
        # unclamped k is 2*ceil(4*sqrt(ln2/2)) = 6, above the floor of 4
        p = P.derive_streaming(1.0, 0.5, 4)
        assert p.k == 6
        assert p.B == 12
        assert (p.k, p.B) == oracle_streaming(1.0, 0.5, 4)

    def test_k_floor(self):
        p = P.derive_streaming(1.0, 0.5, 2**40)
        assert p.k == 4

    @pytest.mark.parametrize("field,args", [
        ("delta", (0.1, 0.6, 1000)),
        ("delta", (0.1, 0.0, 1000)),
        ("eps", (0.0, 0.1, 1000)),
        ("eps", (1.5, 0.1, 1000)),
        ("n", (0.1, 0.1, 0)),
        ("n", (0.1, 0.1, 10)),
    ])
    def test_rejects(self, field, args):
        with pytest.raises(ParameterError) as exc:
            P.derive_streaming(*args)
        assert exc.value.field == field

    @pytest.mark.parametrize("eps", [0.01, 0.05, 0.1, 0.3, 1.0])
    @pytest.mark.parametrize("delta", [1e-9, 1e-3, 0.05, 0.5])
    @pytest.mark.parametrize("n", [2**10, 2**17, 2**30, 10**12])
    def test_grid_matches_oracle(self, eps, delta, n):
        if eps * n < 2:
            return
        p = P.derive_streaming(eps, delta, n)
        assert (p.k, p.B) == oracle_streaming(eps, delta, n)
        assert p.k % 2 == 0 and p.k >= 4
        assert p.B >= 2 * p.k and (p.B // 2) % p.k == 0
        if delta > math.exp(-eps * n / 64):
            assert p.k * p.B >= 64 / eps**2 * math.log(1 / delta)

    def test_assumption_only_warns(self):
        with pytest.warns(UserWarning):
            P.derive_streaming(1.0, 0.1, 2**130)


class TestMergeable:
    def test_k_hat_ten(self):
        # eps = 0.1 and delta = 1/e give k_hat = 10
        p = P.derive_mergeable(0.1, math.exp(-1))
        assert p.k_hat == 10.0
        assert (p.N, p.k, p.B) == (2560, 128, 1536)
        assert (p.k, p.B) == oracle_mergeable(10, 2560)

    def test_unit_k_hat(self):
        p = P.derive_mergeable(1.0, math.exp(-1))
        assert p.k_hat == 1.0
        assert p.N == 256

    def test_grow(self):
        p = P.grow(P.derive_mergeable(0.1, math.exp(-1)))
        # 2 * 96 * ceil(log2(68266.7) + 1) = 192 * 18
        assert (p.N, p.k, p.B) == (6_553_600, 96, 3456)
        assert (p.k, p.B) == oracle_mergeable(10, 6_553_600)
        assert p.k <= 128

    def test_grow_twice(self):
        p0 = P.derive_mergeable(0.2, 0.01)
        assert P.grow(P.grow(p0)).N == p0.N**4

    def test_grow_needs_mergeable(self):
        with pytest.raises(ModeError):
            P.grow(P.derive_streaming(0.1, 0.1, 10**5))

    def test_rejects_zero_eps(self):
        with pytest.raises(ParameterError):
            P.derive_mergeable(0.0, 0.1)

    @pytest.mark.parametrize("eps", [0.01, 0.05, 0.1, 0.5, 1.0])
    @pytest.mark.parametrize("delta", [1e-12, 1e-4, 0.1, 0.5])
    def test_sequence(self, eps, delta):
        seq = P.mergeable_sequence(eps, delta, 6)
        for a, b in zip(seq, seq[1:]):
            assert b.N == a.N**2
            assert b.k <= a.k
            assert b.B >= a.B
        for p in seq:
            assert (p.k, p.B) == oracle_mergeable(p.k_hat, p.N)
            assert p.k * p.B >= 2**10 / eps**2 * math.log(1 / delta)
            assert (p.B // 2) % p.k == 0

    def test_rederive(self):
        seq = P.mergeable_sequence(0.1, 0.1, 3)
        for p in seq:
            assert P.rederive("mergeable", 0.1, 0.1, p.N) == p
        with pytest.raises(ParameterError):
            P.rederive("mergeable", 0.1, 0.1, seq[0].N + 1)


class TestHighConf:
    def test_examples(self):
        assert P.derive_highconf(0.1, 2.0**-64, 10**6).k == 880
        assert P.derive_highconf(1.0, math.exp(-2), 10**6).k == 16
        assert oracle_highconf(0.1, 2.0**-64) == 880

    def test_rejects_large_delta(self):
        with pytest.raises(ParameterError):
            P.derive_highconf(0.1, 0.2, 1000)

    def test_deterministic_regime(self):
        assert P.derive_highconf(0.5, 1e-300, 100).deterministic
        assert not P.derive_highconf(0.5, 1e-6, 10**6).deterministic


class TestAllQuantiles:
    def test_substitution(self):
        n = 1024 / 0.3
        e, d = P.all_quantiles_adjust(0.3, 0.3, math.ceil(n))
        assert e == pytest.approx(0.1)
        assert d == pytest.approx(0.003, rel=1e-4)

    def test_clamp(self):
        e, d = P.all_quantiles_adjust(0.5, 0.2, 3)
        assert d == pytest.approx(0.2 * 0.5 / 3)
        assert e < 0.5


def test_mode_parse():
    assert P.Mode.parse("high-confidence") is P.Mode.HIGHCONF
    assert P.Mode.parse(1) is P.Mode.MERGEABLE
    with pytest.raises(ParameterError):
        P.Mode.parse("sliding")


def test_params_validation():
    with pytest.raises(ParameterError):
        P.Params(P.Mode.STREAMING, 0.1, 0.1, 100, 5, 20)
    with pytest.raises(ParameterError):
        P.Params(P.Mode.STREAMING, 0.1, 0.1, 100, 4, 12)
