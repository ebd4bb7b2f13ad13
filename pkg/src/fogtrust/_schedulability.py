# dbf_i(delta) = max(0, ceil((delta - (D_i - T_i)) / T_i) * C_i), an upper bound
# on the classical synchronous-release demand. Exact with Fraction operands.

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import reduce
from numbers import Real

from ._errors import ParameterError

logger = logging.getLogger(__name__)

DELTA_MAX_CAP = 10_000.0


@dataclass(frozen=True)
class StreamDemand:
    exec_time: Real
    period: Real
    deadline: Real

    def __post_init__(self):
        for name in ("exec_time", "period", "deadline"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be positive, got {getattr(self, name)}")


@dataclass(frozen=True)
class TimingBounds:
    c_gen_block: float
    c_val_block: float
    alpha: float
    beta: float

    @property
    def c_gen_fog(self) -> float:
        return self.alpha * self.c_gen_block

    @property
    def c_val_fog(self) -> float:
        return self.beta * self.c_val_block


def scale_bounds(
    c_gen_block: float, c_val_block: float, alpha: float, beta: float
) -> TimingBounds:
    """
    Scale block generation and validation times to fog realities.

    :raises ParameterError: if any input is not positive
    """
    for name, value in [
        ("c_gen_block", c_gen_block),
        ("c_val_block", c_val_block),
        ("alpha", alpha),
        ("beta", beta),
    ]:
        if not value > 0:
            raise ParameterError(f"{name} must be positive, got {value}")

    return TimingBounds(c_gen_block, c_val_block, alpha, beta)


def dbf(d: StreamDemand, delta: Real) -> Real:
    if delta < 0:
        raise ParameterError(f"delta must be non-negative, got {delta}")

    jobs = math.ceil((delta - (d.deadline - d.period)) / d.period)
    return max(0, jobs * d.exec_time)


def load(demands: list[StreamDemand], delta: Real) -> Real:
    if not delta > 0:
        raise ParameterError(f"delta must be positive, got {delta}")

    return sum((dbf(d, delta) for d in demands), start=0) / delta


def candidate_deltas(demands: list[StreamDemand], delta_max: Real) -> list[Real]:
    """Absolute deadlines k*T_i + D_i within delta_max, plus delta_max itself."""
    points = {delta_max}
    for d in demands:
        k = 0
        while (point := k * d.period + d.deadline) <= delta_max:
            points.add(point)
            k += 1
    return sorted(points)


def max_load(demands: list[StreamDemand], delta_max: Real) -> tuple[Real, Real]:
    """
    Peak load over the test points, with the smallest maximizing delta.

    :return: (load, delta); (0.0, delta_max) for an empty demand set
    """
    if not delta_max > 0:
        raise ParameterError(f"delta_max must be positive, got {delta_max}")
    if not demands:
        return 0.0, delta_max

    best, best_delta = None, delta_max
    for delta in candidate_deltas(demands, delta_max):
        current = load(demands, delta)
        if best is None or current > best:
            best, best_delta = current, delta

    return best, best_delta


def admit(
    node_demands: list[StreamDemand], candidate: StreamDemand, delta_max: Real
) -> bool:
    peak, at = max_load([*node_demands, candidate], delta_max)
    admitted = peak <= 1
    if not admitted:
        logger.debug(f"rejecting {candidate}: load {peak} at delta={at}")
    return admitted


def default_delta_max(demands: list[StreamDemand]) -> float:
    """
    Twice the hyperperiod of the periods, capped at 10^4 seconds.

    Periods are read as fractions with denominators up to 10^6; a hyperperiod
    that is not representable that way, or exceeds the cap, gives the cap.
    """
    if not demands:
        return DELTA_MAX_CAP

    fractions = []
    for d in demands:
        f = Fraction(d.period).limit_denominator(1_000_000)
        if float(f) != float(d.period):
            return DELTA_MAX_CAP
        fractions.append(f)

    numerator = reduce(math.lcm, (f.numerator for f in fractions))
    denominator = reduce(math.gcd, (f.denominator for f in fractions))
    hyperperiod = Fraction(numerator, denominator)

    return float(min(2 * hyperperiod, Fraction(DELTA_MAX_CAP)))
