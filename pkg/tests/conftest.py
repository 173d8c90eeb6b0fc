import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from markov_noise.chain_models import family_size, make_family  # noqa: E402

_RANGES = {
    "complete": [{"n": n} for n in range(2, 65)],
    "cycle": [{"n": n} for n in range(2, 33)],
    "hypercube_walk": [{"n": n} for n in range(1, 7)],
    "hypercube_rerandomize": [{"n": n} for n in range(1, 7)],
    "star": [{"n": n} for n in range(1, 64)],
    "glued_cliques": [{"n": n} for n in range(2, 8)],
    "star_join": [{"n": n} for n in range(1, 4)],
    "regular_glue": [{"n": n} for n in range(2, 6)],
    "slice_exclusion": [{"n": n, "k": k} for n in range(2, 10) for k in range(1, n)],
}


def family_corpus(max_states, names=None):
    """(name, params) for every built family size with at most max_states states."""
    out = []
    for name, plist in _RANGES.items():
        if names is not None and name not in names:
            continue
        for params in plist:
            if family_size(name, **params) <= max_states:
                out.append((name, params))
    return out


def corpus_id(item):
    name, params = item
    return name + "(" + ",".join(f"{v}" for v in params.values()) + ")"


_CACHE = {}


def build(name, **params):
    key = (name, tuple(sorted(params.items())))
    if key not in _CACHE:
        _CACHE[key] = make_family(name, **params)
    return _CACHE[key]


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# -- acceptance reporting ----------------------------------------------------------

ACCEPTANCE_LINES = {}


def record_criterion(number, title, ok, detail=""):
    line = f"ACCEPTANCE {number:>2} {'PASS' if ok else 'FAIL'}: {title}"
    if detail:
        line += f" [{detail}]"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[number])
