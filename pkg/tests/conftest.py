import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_psd(rng, d, rank=None, cond=None):
    """Seeded PSD matrix; ``cond`` fixes the eigenvalue spread when given."""
    q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    if cond is not None:
        vals = np.logspace(0, -np.log10(cond), d)
    else:
        vals = rng.uniform(0.1, 2.0, d)
    if rank is not None:
        vals[rank:] = 0.0
    return (q * vals) @ q.T


# ---------------------------------------------------------------- acceptance report

ACCEPTANCE = {}


def record(criterion, title, ok, detail):
    """Store one check; the summary prints one line per criterion."""
    ACCEPTANCE.setdefault(criterion, {"title": title, "parts": []})["parts"].append((ok, detail))
    line = f"{'PASS' if ok else 'FAIL'} criterion {criterion} ({title}): {detail}"
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for criterion in sorted(ACCEPTANCE):
        entry = ACCEPTANCE[criterion]
        ok = all(p[0] for p in entry["parts"])
        detail = "; ".join(p[1] for p in entry["parts"])
        terminalreporter.write_line(
            f"{'PASS' if ok else 'FAIL'} criterion {criterion} ({entry['title']}): {detail}")
