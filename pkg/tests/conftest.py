import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from arpspline.design import assemble_design, drop_incomplete_rows  # noqa: E402
from arpspline.sampler import run_gibbs  # noqa: E402
from arpspline.simulate import simulate  # noqa: E402
from oracles import ns, simulation_spec  # noqa: E402

SIM_SEED = 0
SIM_ROWS = 2400


@pytest.fixture(scope="session")
def sim_fit():
    """The full-length simulation-study fit, shared by the slow checks."""
    data = simulate(SIM_ROWS, SIM_SEED)
    spec = simulation_spec()
    filtered, kept = drop_incomplete_rows(data, spec.lag_set, spec.covariates)
    X, y, ledger = assemble_design(spec, filtered)
    worst = {"sum": 0.0, "fit": 0.0}

    def watch(it, state, info):
        for b in ledger.blocks:
            if b.centered:
                s = abs(float((X[:, b.columns] @ state.beta[b.columns]).sum()))
                worst["sum"] = max(worst["sum"], s)
        shift = np.abs(X @ state.beta - X @ info["beta_raw"]).max()
        worst["fit"] = max(worst["fit"], float(shift))

    draws = run_gibbs(spec, filtered, callback=watch, design=(X, y, ledger))
    return ns(data=data, spec=spec, filtered=filtered, kept=kept, X=X, y=y, ledger=ledger,
              draws=draws, centering=worst)


@pytest.fixture(scope="session")
def short_fit():
    """A short chain on a smaller simulated series for fast structural checks."""
    data = simulate(480, 3)
    spec = simulation_spec(iterations=300, burn_in=100, seed=2)
    filtered, kept = drop_incomplete_rows(data, spec.lag_set, spec.covariates)
    X, y, ledger = assemble_design(spec, filtered)
    draws = run_gibbs(spec, filtered, design=(X, y, ledger))
    return ns(data=data, spec=spec, filtered=filtered, X=X, y=y, ledger=ledger, draws=draws)
