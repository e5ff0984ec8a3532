"""Parameter derivation for the three sketch parameterizations.

Every sketch is driven by a section size ``k`` (even) and a per-level
buffer capacity ``B`` (a multiple of ``2k``), both computed from the
accuracy ``eps``, the failure probability ``delta`` and an upper bound
``N`` on the number of items the sketch will summarize.

* ``STREAMING`` -- ``N`` is the known stream length.
* ``MERGEABLE`` -- ``N`` starts at ``ceil(256 * k_hat)`` and is squared
  whenever the summarized input outgrows it, so no length is needed up
  front and sketches can be merged freely.
* ``HIGHCONF`` -- a known-length setting whose ``k`` depends on
  ``log log(1/delta)`` only, for extremely small ``delta``.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass

from .errors import ModeError, ParameterError

MIN_K = 4


class Mode(enum.IntEnum):
    STREAMING = 0
    MERGEABLE = 1
    HIGHCONF = 2

    @classmethod
    def parse(cls, value):
        if isinstance(value, Mode):
            return value
        if isinstance(value, int):
            return cls(value)
        aliases = {
            "streaming": cls.STREAMING,
            "mergeable": cls.MERGEABLE,
            "highconf": cls.HIGHCONF,
            "high-confidence": cls.HIGHCONF,
        }
        try:
            return aliases[str(value).lower()]
        except KeyError:
            raise ParameterError("mode", f"unknown mode {value!r}") from None


@dataclass(frozen=True)
class Params:
    """Derived sketch parameters.

    ``k_hat`` is only meaningful in ``MERGEABLE`` mode and is ``0.0`` otherwise.
    """

    mode: Mode
    eps: float
    delta: float
    N: int
    k: int
    B: int
    k_hat: float = 0.0

    def __post_init__(self):
        if self.k < MIN_K or self.k % 2:
            raise ParameterError("k", f"must be even and >= {MIN_K}, got {self.k}")
        if self.B < 2 * self.k or self.B % (2 * self.k):
            raise ParameterError("B", f"must be a positive multiple of 2k={2 * self.k}, got {self.B}")
        if self.N < 1:
            raise ParameterError("N", f"must be positive, got {self.N}")

    @property
    def deterministic(self) -> bool:
        """True when the high-confidence guarantee holds for every coin sequence.

        This is the regime ``delta < exp(-eps * N)``.
        """
        return self.mode is Mode.HIGHCONF and math.log(1.0 / self.delta) > self.eps * self.N


def _check_eps_delta(eps, delta):
    if not (isinstance(eps, (int, float)) and math.isfinite(eps) and 0.0 < eps <= 1.0):
        raise ParameterError("eps", f"must lie in (0, 1], got {eps!r}")
    if not (isinstance(delta, (int, float)) and math.isfinite(delta) and 0.0 < delta <= 0.5):
        raise ParameterError("delta", f"must lie in (0, 0.5], got {delta!r}")


def _check_n(n):
    if isinstance(n, bool) or not isinstance(n, int) or n < 1:
        raise ParameterError("n", f"must be a positive integer, got {n!r}")


def _known_length_B(k, n):
    # B = 2k * ceil(log2(n/k)), floored at 2k when n is not much larger than k
    return 2 * k * max(1, math.ceil(_log2_ratio(n, k)))


def _warn_eps_assumption(eps, n):
    if n > 1 and eps > 4.0 / (2.0 * math.log2(n)) ** 0.25:
        warnings.warn(
            f"eps={eps} exceeds 4/(2*log2(n))^(1/4) for n={n}; accuracy guarantee is not covered",
            stacklevel=3,
        )


def derive_streaming(eps, delta, n) -> Params:
    """Parameters for a stream whose length is known to be at most ``n``."""
    _check_eps_delta(eps, delta)
    _check_n(n)
    if eps * n < 2:
        raise ParameterError("n", f"eps*n must be >= 2, got {eps * n}")
    _warn_eps_assumption(eps, n)
    raw = math.ceil(4.0 / eps * math.sqrt(math.log(1.0 / delta) / math.log2(eps * n)))
    k = max(MIN_K, 2 * raw)
    return Params(Mode.STREAMING, float(eps), float(delta), n, k, _known_length_B(k, n))


def k_hat_of(eps, delta) -> float:
    return math.sqrt(math.log(1.0 / delta)) / eps


def initial_N(k_hat) -> int:
    return math.ceil(2**8 * k_hat)


def _log2_ratio(N, d):
    try:
        return math.log2(N / d)
    except OverflowError:
        # N beyond float range after repeated squaring
        return math.log2(N) - math.log2(d)


def mergeable_k(k_hat, N) -> int:
    return 2**5 * math.ceil(k_hat / math.sqrt(_log2_ratio(N, k_hat)))


def mergeable_B(k, N) -> int:
    return 2 * k * math.ceil(_log2_ratio(N, k) + 1)


def _mergeable_at(eps, delta, k_hat, N) -> Params:
    k = mergeable_k(k_hat, N)
    return Params(Mode.MERGEABLE, float(eps), float(delta), N, k, mergeable_B(k, N), k_hat)


def derive_mergeable(eps, delta) -> Params:
    """Parameters for a sketch of unknown final size, starting at ``N0``."""
    _check_eps_delta(eps, delta)
    k_hat = k_hat_of(eps, delta)
    return _mergeable_at(eps, delta, k_hat, initial_N(k_hat))


def grow(p: Params) -> Params:
    """Square the size bound ``N`` and recompute ``k`` and ``B``."""
    if p.mode is not Mode.MERGEABLE:
        raise ModeError(f"grow is only defined in MERGEABLE mode, not {p.mode.name}")
    return _mergeable_at(p.eps, p.delta, p.k_hat, p.N * p.N)


def mergeable_sequence(eps, delta, steps):
    """The first ``steps + 1`` parameter sets ``N0, N0^2, N0^4, ...``."""
    p = derive_mergeable(eps, delta)
    out = [p]
    for _ in range(steps):
        p = grow(p)
        out.append(p)
    return out


def derive_highconf(eps, delta, n) -> Params:
    """Known-length parameters tuned for extremely small ``delta``."""
    _check_eps_delta(eps, delta)
    _check_n(n)
    log_inv = math.log(1.0 / delta)
    if log_inv < 2.0:
        raise ParameterError("delta", f"ln(1/delta) must be >= 2, got {log_inv}")
    k = 2**4 * math.ceil(math.log2(log_inv) / eps)
    return Params(Mode.HIGHCONF, float(eps), float(delta), n, k, _known_length_B(k, n))


def all_quantiles_adjust(eps, delta, n):
    """Tighten ``(eps, delta)`` so the guarantee holds for all queries at once.

    The union bound runs over ``~ 3 * log2(eps*n) / eps`` representative
    queries; the factor 3 is a fixed choice for the unspecified constant.
    """
    _check_eps_delta(eps, delta)
    _check_n(n)
    return eps / 3.0, delta * eps / (3.0 * max(1.0, math.log2(eps * n)))


def derive(mode, eps, delta, n=None) -> Params:
    """Dispatch on ``mode``; ``n`` is required for the known-length modes."""
    mode = Mode.parse(mode)
    if mode is Mode.MERGEABLE:
        return derive_mergeable(eps, delta)
    if n is None:
        raise ParameterError("n", f"{mode.name} mode needs the stream length n")
    if mode is Mode.STREAMING:
        return derive_streaming(eps, delta, n)
    return derive_highconf(eps, delta, n)


def rederive(mode, eps, delta, N) -> Params:
    """Recompute the parameter set a sketch with bound ``N`` must carry.

    Used by the decoder to validate headers. Raises ``ParameterError`` when
    ``N`` is not reachable in ``MERGEABLE`` mode.
    """
    mode = Mode.parse(mode)
    if mode is not Mode.MERGEABLE:
        return derive(mode, eps, delta, N)
    p = derive_mergeable(eps, delta)
    while p.N < N:
        p = grow(p)
    if p.N != N:
        raise ParameterError("N", f"{N} is not in the N0^(2^i) sequence")
    return p
