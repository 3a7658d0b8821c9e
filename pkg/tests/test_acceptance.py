"""The eleven acceptance criteria at their stated tolerances and time limits."""
import json

import numpy as np
import pytest

from conestokes.verify import CHECKS, run_check


def _brief(rep):
    keep = {k: v for k, v in rep.items() if k not in ("passed", "criterion", "name", "cases", "pairs", "lattice")}
    return json.dumps(keep, default=lambda o: o.item() if isinstance(o, np.generic) else str(o))[:400]


@pytest.mark.parametrize("number,name", [(n, name) for n, name, _ in CHECKS], ids=[f"c{n}" for n, _, _ in CHECKS])
def test_criterion(number, name, acceptance_log):
    rep = run_check(number)
    line = f"{'PASS' if rep['passed'] else 'FAIL'} criterion {number}: {name} ({rep['runtime']:.1f}s / {rep['limit']:.0f}s)"
    print(line)
    acceptance_log.append(line)
    assert rep["passed"], f"{name}: {_brief(rep)}"
