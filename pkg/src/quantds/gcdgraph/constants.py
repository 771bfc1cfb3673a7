"""Constants C1..C7 of the density-increment argument.

C1..C4 are rational and kept exactly.  C5 and C6 involve a logarithm or a
huge power and are kept as mpmath numbers; C7 = C5^C6 only in log form.

paper:  C1 = 10^4/tau, C2 = 10 M C1^3, C3 = 10^3 C1^3, C4 = 10^10 M^2 C2^2,
        C5 = max(C3, (50 log C4)^3), C6 = max(C4, 10^4 M C2, C2^(10/tau)),
        C7 = C5^C6.
toy:    small hand-picked C1, C2, C3, C6 and a capped C4, so that every branch
        of the iteration can fire on graphs with vertices below 10^7.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import mpmath

from ..errors import ConfigError

DPS = 50


def _mpf(x) -> mpmath.mpf:
    with mpmath.workdps(DPS):
        if isinstance(x, Fraction):
            return mpmath.mpf(x.numerator) / x.denominator
        return mpmath.mpf(x)


@dataclass(frozen=True)
class ConstantProfile:
    mode: str
    tau: Fraction
    M: Fraction
    C1: Fraction
    C2: Fraction
    C3: Fraction
    C4: Fraction
    C5: mpmath.mpf
    C6: object  # Fraction in toy mode, mpf in paper mode
    log_C7: mpmath.mpf
    # cosmetic omega pruning asks t >= exp(exp(c)); c = C6 in paper mode
    omega_c: object = field(default=None)

    def log(self, name: str) -> float:
        with mpmath.workdps(DPS):
            return float(mpmath.log(_mpf(getattr(self, name))))

    def below_C6(self, p: int) -> bool:
        if isinstance(self.C6, Fraction):
            return p <= self.C6
        with mpmath.workdps(DPS):
            return mpmath.mpf(p) <= self.C6

    def describe(self) -> dict:
        with mpmath.workdps(20):
            return {
                "profile": self.mode,
                "tau": f"{self.tau.numerator}/{self.tau.denominator}",
                "M": str(self.M),
                "C1": str(self.C1),
                "C2": str(self.C2),
                "C3": str(self.C3),
                "C4": str(self.C4),
                "C5": mpmath.nstr(self.C5, 12),
                "C6": str(self.C6) if isinstance(self.C6, Fraction) else mpmath.nstr(self.C6, 12),
                "log_C7": mpmath.nstr(self.log_C7, 12),
            }


def _check_tau(tau: Fraction) -> Fraction:
    tau = Fraction(tau)
    if not 0 < tau < Fraction(1, 100):
        raise ConfigError("tau must lie in (0, 1/100)")
    return tau


def paper_profile(tau=Fraction(1, 128), M=2) -> ConstantProfile:
    tau, M = _check_tau(tau), Fraction(M)
    if M < 2:
        raise ConfigError("M must be at least 2")
    C1 = 10**4 / tau
    C2 = 10 * M * C1**3
    C3 = 10**3 * C1**3
    C4 = 10**10 * M**2 * C2**2
    with mpmath.workdps(DPS):
        C5 = max(_mpf(C3), (50 * mpmath.log(_mpf(C4))) ** 3)
        C6 = max(_mpf(C4), _mpf(10**4 * M * C2), mpmath.power(_mpf(C2), _mpf(10 / tau)))
        log_C7 = C6 * mpmath.log(C5)
    return ConstantProfile("paper", tau, M, C1, C2, C3, C4, C5, C6, log_C7, omega_c=C6)


def toy_profile(tau=Fraction(1, 128), M=2, C1=16, C2=320, C3=4096, C4_cap=10**4, C6=10**5,
                omega_c=1) -> ConstantProfile:
    tau, M = _check_tau(tau), Fraction(M)
    C1, C2, C3, C6 = Fraction(C1), Fraction(C2), Fraction(C3), Fraction(C6)
    C4 = min(10**10 * M**2 * C2**2, Fraction(C4_cap))
    if M < 2:
        raise ConfigError("M must be at least 2")
    if not C2 < C4 < C6:
        raise ConfigError("toy profile needs C2 < C4 < C6")
    with mpmath.workdps(DPS):
        C5 = max(_mpf(C3), (50 * mpmath.log(_mpf(C4))) ** 3)
        log_C7 = _mpf(C6) * mpmath.log(C5)
    return ConstantProfile("toy", tau, M, C1, C2, C3, C4, C5, C6, log_C7, omega_c=Fraction(omega_c))


def make_profile(mode: str = "toy", **overrides) -> ConstantProfile:
    if mode == "paper":
        return paper_profile(**overrides)
    if mode == "toy":
        return toy_profile(**overrides)
    raise ConfigError(f"unknown profile {mode!r}")
