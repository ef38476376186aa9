import numpy as np
import pytest

from ctcr.state import NodeState

from oracles import random_state


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_state(rng, scale=0.5):
    return NodeState(*random_state(rng, scale))


def perturb(x, d):
    return x.perturbed(d)


def fd_node(f, x, h=1e-6):
    """Central-difference Jacobian of ``f`` w.r.t. an 18-dim node perturbation.

    The pose is perturbed through scipy's matrix exponential, independently
    of the package's own exponential map.
    """
    import oracles as orc

    def pert(d):
        T, e, w = orc.perturb_state((x.T, x.eps, x.varpi), d)
        return NodeState(T, e, w)

    cols = []
    for i in range(18):
        d = np.zeros(18)
        d[i] = h
        cols.append((np.asarray(f(pert(d))) - np.asarray(f(pert(-d)))).ravel() / (2 * h))
    return np.column_stack(cols)


_ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line for an acceptance criterion."""
    store = request.config.stash.setdefault(_ACCEPTANCE, {})

    def record(n, ok, detail):
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
        store[n] = line
        print(line)

    return record


def pytest_terminal_summary(terminalreporter, config):
    store = config.stash.get(_ACCEPTANCE, {})
    if store:
        terminalreporter.write_sep("=", "acceptance criteria")
        for n in sorted(store):
            terminalreporter.write_line(store[n])
