import os
from collections import OrderedDict

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from gdmsr.dataset import Dataset, SocialGraph

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.register_profile("thorough", deadline=None, max_examples=300)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def make_dataset(n_users, n_items, train, valid=(), test=()):
    def arr(x):
        return np.asarray(list(x), dtype=np.int64).reshape(-1, 2)

    return Dataset(n_users, n_items, arr(train), arr(valid), arr(test))


def random_fixture(rng, n_users, n_items, p_item=0.4, p_edge=0.35, symmetric=False):
    """Random dataset + graph; every user gets at least one train item."""
    inter = rng.random((n_users, n_items)) < p_item
    for u in range(n_users):
        if not inter[u].any():
            inter[u, rng.integers(n_items)] = True
    adj = rng.random((n_users, n_users)) < p_edge
    np.fill_diagonal(adj, False)
    if symmetric:
        adj = np.triu(adj, 1)
        adj = adj | adj.T
    src, dst = np.nonzero(adj)
    d = make_dataset(n_users, n_items, np.argwhere(inter))
    return d, SocialGraph(n_users, src, dst), inter, adj


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# --------------------------------------------------- acceptance reporting

_RESULTS: "OrderedDict[str, dict]" = OrderedDict()


def _criterion_key(n):
    # "5", "5-synthetic", "10" sort numerically, then by suffix
    head, _, tail = str(n).partition("-")
    return int(head), tail


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion the test belongs to")


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("criterion")
    if mark is None or call.when != "call" and not (call.when == "setup" and call.excinfo is not None):
        return
    n, title = mark.args
    rec = _RESULTS.setdefault(str(n), {"title": title, "ok": True, "notes": []})
    if call.excinfo is not None:
        rec["ok"] = False
        reason = call.excinfo.typename
        if reason == "Failed":
            reason = str(call.excinfo.value).splitlines()[0]
        rec["notes"].append(f"{item.name}: {reason}")
    rec["notes"].extend(str(v) for k, v in item.user_properties if k == "note")


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_RESULTS, key=_criterion_key):
        rec = _RESULTS[n]
        status = "PASS" if rec["ok"] else "FAIL"
        line = f"[{status}] criterion {str(n):<11} {rec['title']}"
        if rec["notes"]:
            line += "  (" + "; ".join(rec["notes"]) + ")"
        tr.write_line(line)
