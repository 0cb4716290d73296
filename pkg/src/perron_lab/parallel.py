"""Thread-count policy shared by the parallel pieces."""
import os


def thread_count() -> int:
    """Worker count: PERRON_LAB_THREADS if set, else the CPU count."""
    env = os.environ.get("PERRON_LAB_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError as err:
            raise ValueError(f"PERRON_LAB_THREADS must be an integer, got {env!r}") from err
        if n < 1:
            raise ValueError("PERRON_LAB_THREADS must be at least 1")
        return n
    return os.cpu_count() or 1
