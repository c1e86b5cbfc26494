import enum
from dataclasses import dataclass

from core.exceptions import BudgetExceededError


class Exactness(enum.Enum):
    EXACT = 'exact'
    STATISTICAL = 'statistical'


@dataclass(frozen=True)
class OracleBudget:
    max_profiles: int = 3 ** 8
    max_nested_m: int = 4
    max_nested_W: int = 12
    max_bruteforce_nodes: int = 6
    max_bruteforce_bins: int = 3
    max_samples: int = 10 ** 7
    tolerance: float = 1e-12
    sigmas: float = 3.0

    def check(self, name, value, limit):
        if value > limit:
            raise BudgetExceededError(f"{name} = {value} exceeds the oracle budget of {limit}")


DEFAULT_BUDGET = OracleBudget()


def oracle(exactness):
    """Tag an oracle with its exactness class."""
    def decorate(func):
        func.exactness = exactness
        return func
    return decorate
