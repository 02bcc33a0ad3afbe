import csv
from pathlib import Path

import numpy as np
import pytest

from otcnet.ingest import COLUMNS, AliasTable, load_panel
from otcnet.quarters import quarter_range

DATA = Path(__file__).parent / "data"


def synthetic_rows(n_inst=40, start="1998-Q4", end="2004-Q4", seed=7, top_n=25,
                   null_exposure_rate=0.03):
    """Deterministic top-25 panel rows with exact ETD/OTC and TCE identities."""
    rng = np.random.default_rng(seed)
    quarters = quarter_range(start, end)
    base = rng.normal(9.0, 2.0, n_inst)
    growth = rng.normal(0.03, 0.03, n_inst)
    states = ["NY", "NC", "CA", "OH", "IL", "PA", "GA", "MA"]
    names = [f"BANK {k:02d}" for k in range(n_inst)]
    rows = []
    for t, q in enumerate(quarters):
        level = np.exp(base + growth * t + rng.normal(0, 0.25, n_inst))
        amounts = np.maximum(1, np.round(level * 1000)).astype(np.int64)
        order = sorted(range(n_inst), key=lambda i: (-amounts[i], names[i]))[:top_n]
        for rank, i in enumerate(order, 1):
            total = int(amounts[i])
            etd = int(total * rng.uniform(0.01, 0.12))
            fut = etd // 2
            opt_e = etd - fut
            otc = total - etd
            parts = rng.dirichlet([4, 8, 2, 1]) * otc
            fwd, swp, opt_o = (int(p) for p in parts[:3])
            cred = otc - fwd - swp - opt_o
            cce = int(total * rng.uniform(0.005, 0.02))
            pfe = int(total * rng.uniform(0.005, 0.03))
            exposure = [cce, pfe, cce + pfe]
            if rng.random() < null_exposure_rate:
                exposure = ["", "", ""]
            rows.append([
                q, names[i], rank, states[i % len(states)], total * 3, total,
                fut, opt_e, fwd, swp, opt_o, cred, int(total * 0.1), *exposure,
                round(100 * (cce + pfe) / (total * 0.08), 2),
            ])
    return rows


def write_rows(path, rows, header=COLUMNS):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


@pytest.fixture(scope="session")
def synthetic_csv(tmp_path_factory):
    return write_rows(tmp_path_factory.mktemp("synth") / "panel.csv", synthetic_rows())


@pytest.fixture(scope="session")
def synthetic_panel(synthetic_csv):
    return load_panel(synthetic_csv, AliasTable.default())


@pytest.fixture
def raw_small():
    return DATA / "raw_small.csv"


@pytest.fixture
def aliases():
    return AliasTable.default()


# acceptance criteria report: one line per criterion, printed after the run
ACCEPTANCE: dict[int, str] = {}


def record_criterion(number: int, title: str, status: str, detail: str = "") -> None:
    ACCEPTANCE[number] = f"criterion {number:>2} {status:<7} {title}" + (f" | {detail}" if detail else "")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[number])
