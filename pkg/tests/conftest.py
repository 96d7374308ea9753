import mpmath
import pytest

mpmath.mp.dps = 30


@pytest.fixture
def report(capsys):
    """Print one line per acceptance criterion, bypassing output capture."""

    def emit(label, measured, tol, ok, extra=""):
        with capsys.disabled():
            status = "PASS" if ok else "FAIL"
            print(f"\n[{status}] {label}: measured={measured:.3e} tol={tol:.1e} {extra}".rstrip())

    return emit
