import os
from typing import Tuple
from dotenv import load_dotenv

from errors import InvalidInputError

# Load environment variables from .env file
load_dotenv()


def _env_float(name: str, default: float) -> float:
    raw = os.getenv(name)
    return float(raw) if raw not in (None, "") else default


def _env_int(name: str, default: int) -> int:
    raw = os.getenv(name)
    return int(raw) if raw not in (None, "") else default


class Config:
    # Solver defaults, overridable from the environment
    SEED = _env_int("KSW_SEED", 20240611)
    TOL = _env_float("KSW_TOL", 1e-4)
    MAX_ITER = _env_int("KSW_MAX_ITER", 500)
    SCHEDULE_TEXT = os.getenv("KSW_SCHEDULE", "1e-1,1e-2,1e-3,1e-4")
    MIN_P = _env_float("KSW_MIN_P", 1e-8)
    PAD = _env_int("KSW_PAD", 2)
    RESTARTS = _env_int("KSW_RESTARTS", 8)
    N_JOBS = _env_int("KSW_N_JOBS", 1)
    LOG_LEVEL = os.getenv("KSW_LOG_LEVEL", "WARNING").upper()

    # Numerical tolerances
    HERMITIAN_RTOL = 1e-12
    PSD_RTOL = 1e-10
    RANK_TOL = 1e-8
    ENERGY_TOL = 1e-9
    MEMBERSHIP_TOL = 1e-7
    CONTRACTION_TOL = 1e-10
    TRACE_TOL = 1e-10

    # Seeded counter-based generator used for every random instance
    PRNG_NAME = "numpy.random.Philox(SeedSequence([seed, index]))"

    @staticmethod
    def parse_schedule(text: str) -> Tuple[float, ...]:
        """Parse a comma separated smoothing schedule."""
        try:
            values = tuple(float(item) for item in text.split(",") if item.strip())
        except ValueError as e:
            raise InvalidInputError(f"Bad smoothing schedule {text!r}: {e}") from e
        return Config.check_schedule(values)

    @staticmethod
    def check_schedule(values) -> Tuple[float, ...]:
        values = tuple(float(p) for p in values)
        if not values:
            raise InvalidInputError("Smoothing schedule is empty")
        if any(not 0.0 < p < 1.0 for p in values):
            raise InvalidInputError(f"Schedule entries must lie in (0, 1): {values}")
        if any(b >= a for a, b in zip(values, values[1:])):
            raise InvalidInputError(f"Schedule must be strictly decreasing: {values}")
        return values

    @staticmethod
    def schedule() -> Tuple[float, ...]:
        return Config.parse_schedule(Config.SCHEDULE_TEXT)

    @staticmethod
    def validate() -> bool:
        """Check that the loaded settings are usable."""
        try:
            Config.schedule()
        except InvalidInputError:
            return False
        return (
            Config.TOL > 0
            and Config.MAX_ITER >= 1
            and 0 < Config.MIN_P < 1
            and Config.PAD >= 0
            and Config.RESTARTS >= 1
            and Config.N_JOBS != 0
        )
