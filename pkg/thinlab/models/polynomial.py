"""Complex polynomial maps."""
import re
from dataclasses import dataclass

import numpy as np


def coefficient_escape_radius(coefficients: tuple[complex, ...]) -> float:
    """R = max(2, (2 + sum_{i<d} |a_i|) / |a_d|) for coefficients a_0..a_d."""
    coeffs = _trim(coefficients)
    degree = len(coeffs) - 1
    if degree < 2:
        raise ValueError(f"polynomial degree must be at least 2, got {degree}")
    lower = sum(abs(a) for a in coeffs[:-1])
    return max(2.0, (2.0 + lower) / abs(coeffs[-1]))


_TERM = re.compile(r"\s*([+-]?)\s*(\([^()]*\)|[0-9.]+(?:[eE][+-]?\d+)?j?)?\s*(\*?\s*z(?:\s*\^\s*(\d+))?)?\s*")


def parse_polynomial(text: str) -> tuple[complex, ...]:
    """Coefficients a_0..a_d of an expression such as "z^2-1" or "2*z^3 + (0.3+0.5j)"."""
    source = text.strip()
    if not source:
        raise ValueError("empty polynomial")
    coeffs: dict[int, complex] = {}
    pos = 0
    while pos < len(source):
        match = _TERM.match(source, pos)
        if match is None or not (match.group(2) or match.group(3)) or (pos > 0 and not match.group(1)):
            raise ValueError(f"cannot parse polynomial '{text}' at position {pos}")
        sign = -1 if match.group(1) == "-" else 1
        coefficient = complex(match.group(2).strip("()").replace(" ", "")) if match.group(2) else 1
        power = int(match.group(4) or 1) if match.group(3) else 0
        coeffs[power] = coeffs.get(power, 0j) + sign * coefficient
        pos = match.end()
    return tuple(coeffs.get(k, 0j) for k in range(max(coeffs) + 1))


def _trim(coefficients: tuple[complex, ...]) -> tuple[complex, ...]:
    coeffs = tuple(complex(a) for a in coefficients)
    while len(coeffs) > 1 and coeffs[-1] == 0:
        coeffs = coeffs[:-1]
    return coeffs


@dataclass(frozen=True)
class PolynomialMap:
    """P(z) = a_0 + a_1 z + ... + a_d z^d with an escape radius and an iteration cap."""
    coefficients: tuple[complex, ...]
    escape_radius: float
    max_iter: int = 256

    def __post_init__(self) -> None:
        coeffs = _trim(self.coefficients)
        object.__setattr__(self, "coefficients", coeffs)
        bound = coefficient_escape_radius(coeffs)
        if self.escape_radius < bound * (1 - 1e-12):
            raise ValueError(
                f"escape radius {self.escape_radius} is below the coefficient bound {bound}"
            )
        if self.max_iter < 1:
            raise ValueError("max_iter must be positive")

    @classmethod
    def from_coefficients(cls, coefficients: tuple[complex, ...] | list[complex], max_iter: int = 256) -> "PolynomialMap":
        coeffs = tuple(complex(a) for a in coefficients)
        return cls(coeffs, coefficient_escape_radius(coeffs), max_iter)

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    def __call__(self, z: np.ndarray | complex) -> np.ndarray:
        """Horner evaluation, vectorized over z."""
        zz = np.asarray(z, dtype=complex)
        result = np.full(zz.shape, self.coefficients[-1], dtype=complex)
        for a in reversed(self.coefficients[:-1]):
            result = result * zz + a
        return result

    def derivative(self, z: np.ndarray | complex) -> np.ndarray:
        zz = np.asarray(z, dtype=complex)
        dcoeffs = [k * a for k, a in enumerate(self.coefficients)][1:]
        result = np.full(zz.shape, dcoeffs[-1], dtype=complex)
        for a in reversed(dcoeffs[:-1]):
            result = result * zz + a
        return result
