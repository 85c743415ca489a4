import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from viscodamage.material import Penalty, PiecewisePolynomial, coefficient_preset, material_preset
from viscodamage.problems import cosine_profile, healing_problem, standard_problem
from viscodamage.verify import (
    NullPenalty,
    PerturbationSpec,
    PreconditionError,
    beta_sweep,
    complementarity_report,
    continuous_dependence_test,
    dependence_lhs,
    extension_report,
    oracle_agreement,
    parallel_map,
    penalty_axioms,
    scalar_oracle,
    tau_sweep,
)


@settings(deadline=None)
@given(chi_prev=st.floats(0, 1), drive=st.floats(-5, 5), beta=st.floats(1e-4, 0.5), tau=st.floats(1e-3, 0.5))
def test_scalar_oracle_closed_form(chi_prev, drive, beta, tau):
    # rate + max(rate, 0)/beta + drive = 0
    r = -drive if drive >= 0 else -drive * beta / (1 + beta)
    chi = scalar_oracle(chi_prev, tau, Penalty(beta), drive=drive)
    assert chi == pytest.approx(chi_prev + tau * r, abs=1e-10)


def test_null_penalty_has_no_effect():
    assert scalar_oracle(0.5, 0.1, NullPenalty(), drive=-1.0) == pytest.approx(0.6)


@pytest.mark.parametrize("kind", ["moreau_yosida", "smooth_variant"])
def test_penalty_axiom_report(kind):
    rep = penalty_axioms(n=200, seed=3, kind=kind)
    assert all(rep.values())


def test_extension_report_and_invalid_coefficient():
    assert all(extension_report(coefficient_preset("cubic")).values())
    with pytest.raises(ValueError):
        extension_report(PiecewisePolynomial.polynomial([0.0, -1.0]))


def test_oracle_agreement_small():
    P = standard_problem(cells=3)
    assert oracle_agreement(P.disc, n=10, seed=1)["max_error"] <= 1e-9


def test_parallel_map_matches_serial():
    items = [3, -1, 2]
    assert parallel_map(abs, items, 1) == parallel_map(abs, items, 2) == [3, 1, 2]


def test_beta_sweep_on_healing_problem():
    H = healing_problem(cells=4, T=0.2, tau=0.05)
    rep = beta_sweep(H, [1e-1, 1e-2, 1e-3])
    assert rep.passed, rep.checks
    rp = rep.metrics["rate_plus"]
    assert rp[-1] < rp[0]
    csv_text = rep.to_csv()
    assert csv_text.splitlines()[0].startswith("beta,")
    assert json.loads(rep.summary())["passed"]


def test_complementarity_bound_on_healing_problem():
    H = healing_problem(cells=4, T=0.2, tau=0.05)
    for beta in (1e-1, 1e-3):
        rep = complementarity_report(H, H.run(beta), beta)
        assert rep["ok"] and rep["xi_nonnegative"]
        assert rep["max_residual"] <= rep["bound"]


def test_sweep_lists_must_decrease():
    H = healing_problem(cells=2, T=0.1)
    with pytest.raises(ValueError):
        beta_sweep(H, [1e-3, 1e-2])
    with pytest.raises(ValueError):
        tau_sweep(H, [0.05, 0.1], 0.01)


def test_identical_data_gives_zero_lhs():
    P = standard_problem(cells=4, T=0.1, tau=0.02)
    a, b = P.run(0.01), P.run(0.01)
    assert dependence_lhs(P.disc, a, b) == 0.0


def test_continuous_dependence_linear_in_delta():
    P = standard_problem(cells=4, T=0.1, tau=0.02)
    spec = PerturbationSpec("chi0", cosine_profile(P.grid, -1.0, 0.0), [1e-4, 1e-3, 1e-2])
    res = continuous_dependence_test(P, spec, 0.01)
    assert res["passed"] and res["spread"] <= 10.0


def test_continuous_dependence_precondition():
    mat = material_preset("quadratic", d=PiecewisePolynomial.constant(2.0))
    P = standard_problem(cells=3, material=mat)
    spec = PerturbationSpec("chi0", cosine_profile(P.grid, -1.0, 0.0), [1e-3])
    with pytest.raises(PreconditionError, match="precondition"):
        continuous_dependence_test(P, spec, 0.01)


def test_perturbation_spec_validation():
    with pytest.raises(ValueError):
        PerturbationSpec("mass", np.zeros(3), [1e-3])
    with pytest.raises(ValueError):
        PerturbationSpec("chi0", np.zeros(3), [1e-2, 1e-3])
