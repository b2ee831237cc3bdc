import datetime as dt

import numpy as np
import pytest

from brfmob.od_network import centralities, write_edgelist
from brfmob.synthetic import generate_synthetic_day

START = dt.date(2020, 1, 28)
N_DAYS = 6


@pytest.fixture(scope="session")
def synthetic_input(tmp_path_factory):
    """Six synthetic days of 400 nodes spanning a month boundary, plus a covariate file."""
    root = tmp_path_factory.mktemp("synthetic")
    days = root / "in"
    days.mkdir()
    strength_sum = {}
    for i in range(N_DAYS):
        d = START + dt.timedelta(days=i)
        net = generate_synthetic_day(400, seed=100 + i, date=d)
        write_edgelist(net, days / f"{d}.csv")
        c = centralities(net)
        for n, s in zip(c.nodes.tolist(), c.total_strength.tolist()):
            strength_sum[n] = strength_sum.get(n, 0) + s
    rng = np.random.default_rng(0)
    lines = ["ageb,population,marginalization,x,y"]
    levels = ["muy alto", "alto", "medio", "bajo", "muy bajo"]
    for n in sorted(strength_sum):
        s = strength_sum[n]
        pop = int(s * rng.lognormal(0, 0.5)) + 1
        lvl = levels[min(4, int(np.log10(s + 1)))]
        lines.append(f"{n},{pop},{lvl},{rng.uniform(0, 5e4):.1f},{50000 / (1 + s / 500):.1f}")
    lines.append("EXTRA001,10,medio,0,0")
    (root / "cov.csv").write_text("\n".join(lines) + "\n")
    return root


# one (criterion, status, detail) per acceptance criterion, printed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for crit, status, detail in sorted(ACCEPTANCE_LINES, key=lambda t: (int(t[0].rstrip("abcde")), t[0])):
        terminalreporter.write_line(f"{status} criterion {crit}: {detail}")
