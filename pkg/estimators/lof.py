from dataclasses import dataclass

from core.exceptions import InvalidParameterError

LOF_CONSTANT = 1.2897


@dataclass(frozen=True)
class Bitmap:
    bits: tuple

    def __post_init__(self):
        if not self.bits or set(self.bits) - {0, 1}:
            raise InvalidParameterError(f"a bitmap is a non-empty 0/1 vector, got {self.bits}")

    @classmethod
    def from_string(cls, text):
        return cls(tuple(int(ch) for ch in text))

    @classmethod
    def from_counts(cls, counts):
        return cls(tuple(int(c > 0) for c in counts))

    def __len__(self):
        return len(self.bits)

    def __str__(self):
        return ''.join(map(str, self.bits))


def lof_estimate(bitmap):
    """(rho, n_hat): rho is the first empty slot (len(bitmap) when none is empty)."""
    rho = next((h for h, bit in enumerate(bitmap.bits) if bit == 0), len(bitmap))
    return rho, LOF_CONSTANT * 2 ** rho
