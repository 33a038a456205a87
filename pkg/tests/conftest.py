import numpy as np
import pytest

from cape_returns.dynamics import published_params


def write_csv(path, rows, header=("Date", "P", "D", "E", "CPI")):
    """rows: iterables of cell values; written as-is."""
    lines = [",".join(header)] + [",".join(str(c) for c in r) for r in rows]
    path.write_text("\n".join(lines) + "\n")
    return path


def monthly_rows(n, start_year=1871, seed=0, cpi_scale=1.0):
    """Random but plausible Shiller-style rows (annualized D and E)."""
    rng = np.random.default_rng(seed)
    P = 5.0 * np.exp(np.cumsum(rng.normal(0.002, 0.04, n)))
    D = 0.25 * np.exp(np.cumsum(rng.normal(0.001, 0.01, n)))
    E = 0.40 * np.exp(np.cumsum(rng.normal(0.001, 0.02, n)))
    cpi = cpi_scale * 12.0 * np.exp(np.cumsum(rng.normal(0.001, 0.005, n)))
    rows = []
    for i in range(n):
        y, m = start_year + i // 12, i % 12 + 1
        rows.append((f"{y}.{m:02d}", repr(float(P[i])), repr(float(D[i])), repr(float(E[i])), repr(float(cpi[i]))))
    return rows


@pytest.fixture
def sp_params():
    return published_params("sp")


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
