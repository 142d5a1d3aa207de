import math

import numpy as np
import pytest
from scipy import stats

from bayesalign import dpengine
from bayesalign.alignment import AlignmentPath, GapParams, Step, enumerate_paths, gap_penalty, gap_stats
from bayesalign.geometry import Registration
from bayesalign.posterior import (
    Hyperparams,
    ModelState,
    effective_gap_penalties,
    log_gamma_pdf,
    log_invgamma_pdf,
    log_posterior,
    log_prior,
    match_logweight_exp_cauchy,
    profile_registration,
    seq_loglik,
    struct_loglik,
)
from bayesalign.submodel import SubstitutionModel, pam_model, temper
from oracles import make_chain

LOG_2PI = math.log(2.0 * math.pi)
HP = Hyperparams()


def all_match_state(coords, sigma2=1.0, lam=1.0, gp=GapParams(1.0, 0.1)):
    n = coords.shape[0]
    path = AlignmentPath((Step.MATCH,) * n, n, n)
    return ModelState(path=path, sigma2=sigma2, gp=gp, lam=lam)


def test_struct_loglik_perfect_overlap():
    rng = np.random.default_rng(1)
    coords = rng.normal(size=(4, 3))
    x = make_chain(coords)
    y = make_chain(coords)
    state = all_match_state(coords)
    state.refresh_registration(x, y)
    assert struct_loglik(x, y, state) == pytest.approx(-6.0 * LOG_2PI, rel=1e-9)

    doubled = all_match_state(coords, sigma2=2.0)
    doubled.refresh_registration(x, y)
    drop = struct_loglik(x, y, state) - struct_loglik(x, y, doubled)
    assert drop == pytest.approx(1.5 * 4 * math.log(2.0), rel=1e-9)


def test_struct_loglik_requires_three_matches():
    rng = np.random.default_rng(2)
    x = make_chain(rng.normal(size=(3, 3)))
    y = make_chain(rng.normal(size=(3, 3)))
    path = AlignmentPath((Step.MATCH, Step.MATCH, Step.SKIP_X, Step.SKIP_Y), 3, 3)
    state = ModelState(path=path, sigma2=1.0, gp=GapParams(1.0, 0.1))
    with pytest.raises(ValueError):
        struct_loglik(x, y, state)


def test_struct_loglik_matches_forward_path_weight():
    rng = np.random.default_rng(3)
    x = make_chain(rng.normal(0, 3, size=(4, 3)))
    y = make_chain(rng.normal(0, 3, size=(4, 3)))
    for p in enumerate_paths(4, 4):
        if p.n_matched < 3:
            continue
        state = ModelState(path=p, sigma2=0.8, gp=GapParams(1.3, 0.2), lam=7.6)
        state.refresh_registration(x, y)
        weights = dpengine.build_weights(x, y, state.registration, state)
        lw = dpengine.path_log_weight(p, weights)
        expect = struct_loglik(x, y, state) - gap_penalty(p, state.gp)
        assert lw == pytest.approx(expect, rel=1e-10, abs=1e-10)


def test_seq_loglik_limits_and_identity():
    model = pam_model(150)
    flat = temper(model, 0.0)
    p1 = AlignmentPath((Step.MATCH,), 1, 1)
    assert seq_loglik("A", "C", p1, flat) == pytest.approx(math.log(1.0 / 400.0), rel=1e-12)

    joint = np.zeros((20, 20))
    joint[0, 0] = 0.5
    joint[1:3, 1:3] = 0.125
    toy = SubstitutionModel(100, joint, joint.sum(axis=1))
    assert seq_loglik("A", "A", p1, temper(toy, 1.0)) == pytest.approx(math.log(0.5), rel=1e-12)

    # sufficient-statistics identity on a random path
    from bayesalign.sampler import pair_skip_counts
    from bayesalign.submodel import encode_sequence

    tm = temper(model, 0.6)
    ax, ay = "ACDEX", "WXYVA"
    path = enumerate_paths(5, 5)[123]
    pc, sc = pair_skip_counts(encode_sequence(ax), encode_sequence(ay), path)
    expect = float(tm.match_logprob.ravel() @ pc + tm.skip_logprob @ sc)
    assert seq_loglik(ax, ay, path, tm) == pytest.approx(expect, rel=1e-12)


def test_seq_loglik_eta0_depends_only_on_size():
    flat = temper(pam_model(100), 0.0)
    vals = {}
    for p in enumerate_paths(3, 3):
        vals.setdefault(p.n_matched, set()).add(round(seq_loglik("ACD", "EFG", p, flat), 12))
    for nm, got in vals.items():
        assert len(got) == 1


def test_seq_loglik_length_mismatch():
    with pytest.raises(ValueError):
        seq_loglik("AC", "A", AlignmentPath((Step.MATCH,), 1, 1), temper(pam_model(100), 0.5))


def test_log_prior_matches_scipy_densities():
    rng = np.random.default_rng(4)
    path = enumerate_paths(3, 4)[7]
    for _ in range(5):
        s2 = float(rng.uniform(0.2, 3.0))
        gp = GapParams(float(rng.uniform(0.5, 6.0)), float(rng.uniform(0.05, 0.8)))
        state = ModelState(path=path, sigma2=s2, gp=gp)
        got = log_prior(state, HP)
        expect = (
            -gap_penalty(path, gp)
            - dpengine.gap_prior_log_Z(3, 4, gp)
            + stats.gamma.logpdf(gp.open_pen, HP.a_open, scale=1.0 / HP.b_open)
            + stats.gamma.logpdf(gp.ext_pen, HP.a_ext, scale=1.0 / HP.b_ext)
            + stats.invgamma.logpdf(s2, HP.a_sigma, scale=HP.b_sigma)
        )
        assert got == pytest.approx(expect, rel=1e-10)


def test_log_prior_equal_gap_stats_equal_prior():
    state_a = ModelState(path=AlignmentPath.from_string("MXYM", 3, 3), sigma2=1.0, gp=GapParams(2.0, 0.3))
    state_b = ModelState(path=AlignmentPath.from_string("XYMM", 3, 3), sigma2=1.0, gp=GapParams(2.0, 0.3))
    assert gap_stats(state_a.path) == gap_stats(state_b.path)
    assert log_prior(state_a, HP) == pytest.approx(log_prior(state_b, HP), rel=1e-12)


def test_log_prior_contract_errors():
    path = enumerate_paths(2, 2)[0]
    with pytest.raises(ValueError):
        log_prior(ModelState(path=path, sigma2=-1.0, gp=GapParams(1.0, 0.1)), HP)
    with pytest.raises(ValueError):
        log_prior(ModelState(path=path, sigma2=1.0, gp=GapParams(0.0, 0.1)), HP)


def test_table_prior_means():
    assert HP.a_open / HP.b_open == pytest.approx(4.0)
    assert HP.a_ext / HP.b_ext == pytest.approx(0.1)
    assert HP.a_open / HP.b_open == pytest.approx(40.0 * (HP.a_ext / HP.b_ext))


def test_log_posterior_structure_only_equals_components():
    rng = np.random.default_rng(5)
    coords = rng.normal(size=(4, 3))
    x, y = make_chain(coords), make_chain(coords + rng.normal(0, 0.3, size=(4, 3)))
    state = all_match_state(coords, sigma2=0.9, lam=7.6, gp=GapParams(2.0, 0.2))
    state.refresh_registration(x, y)
    assert log_posterior(x, y, None, None, state, HP) == pytest.approx(
        struct_loglik(x, y, state) + log_prior(state, HP), rel=1e-12
    )
    flat = temper(pam_model(100), 0.0)
    with_seq = log_posterior(x, y, "ACDE", "ACDE", state, HP, flat)
    assert with_seq == pytest.approx(
        struct_loglik(x, y, state) + log_prior(state, HP) + 4 * math.log(1 / 400.0), rel=1e-10
    )


def test_log_posterior_matches_enumeration_at_fixed_params():
    rng = np.random.default_rng(6)
    x = make_chain(rng.normal(0, 2, size=(4, 3)))
    y = make_chain(rng.normal(0, 2, size=(4, 3)))
    sigma2, gp, lam = 0.7, GapParams(1.1, 0.25), 3.0
    logs = {}
    oracle = {}
    for p in enumerate_paths(4, 4):
        if p.n_matched < 3:
            continue
        state = ModelState(path=p, sigma2=sigma2, gp=gp, lam=lam)
        state.refresh_registration(x, y)
        logs[p.to_string()] = log_posterior(x, y, None, None, state, HP)
        reg, dp2 = profile_registration(p, x, y)
        oracle[p.to_string()] = (
            p.n_matched * math.log(lam)
            - 1.5 * p.n_matched * math.log(2 * math.pi * sigma2)
            - dp2 / (2 * sigma2)
            - gap_penalty(p, gp)
        )

    def normalize(d):
        hi = max(d.values())
        z = sum(math.exp(v - hi) for v in d.values())
        return {k: math.exp(v - hi) / z for k, v in d.items()}

    pa, pb = normalize(logs), normalize(oracle)
    tv = 0.5 * sum(abs(pa[k] - pb[k]) for k in pa)
    assert tv < 1e-10


def test_effective_gap_penalties_paper_formulas():
    state = ModelState(path=enumerate_paths(2, 2)[0], sigma2=1.0, gp=GapParams(0.1, 0.3), lam=7.6)
    eff = effective_gap_penalties(state)
    assert eff.paper_g_star == pytest.approx(0.1 + 1.5 * LOG_2PI + math.log(7.6), rel=1e-9)
    assert eff.paper_g_star == pytest.approx(4.885, abs=5e-4)
    state2 = ModelState(path=enumerate_paths(2, 2)[0], sigma2=2.0, gp=GapParams(1.0, 0.3), lam=7.6)
    assert effective_gap_penalties(state2).paper_h_star == pytest.approx(0.6, rel=1e-12)


def test_effective_penalties_reproduce_map_alignment():
    rng = np.random.default_rng(7)
    for trial in range(20):
        n, m = int(rng.integers(3, 6)), int(rng.integers(3, 6))
        x = make_chain(rng.normal(0, 2, size=(n, 3)))
        y = make_chain(rng.normal(0, 2, size=(m, 3)))
        sigma2 = float(rng.uniform(0.3, 2.0))
        gp = GapParams(float(rng.uniform(0.5, 4.0)), float(rng.uniform(0.05, 0.8)))
        lam = float(rng.uniform(2.0, 10.0))
        state = ModelState(path=enumerate_paths(n, m)[0], sigma2=sigma2, gp=gp, lam=lam)
        reg = Registration.identity()
        weights = dpengine.build_weights(x, y, reg, state)
        map_path = dpengine.map_traceback(weights)
        # classical DP oracle: minimize sum d^2 + open* s + ext* L by enumeration
        eff = effective_gap_penalties(state)
        d2 = dpengine.squared_distance_matrix(x.coords, y.coords, reg)

        def classical_cost(p):
            c = sum(d2[i - 1, j - 1] for i, j in p.matched_pairs())
            s, lengths = gap_stats(p)
            return c + eff.open_star * s + eff.ext_star * sum(lengths)

        best = min(enumerate_paths(n, m), key=classical_cost)
        assert classical_cost(map_path) == pytest.approx(classical_cost(best), rel=1e-9, abs=1e-9)


def test_match_logweight_exp_cauchy_values():
    assert match_logweight_exp_cauchy(0.0, 4.0, 5.0) == 4.0
    assert match_logweight_exp_cauchy(5.0, 4.0, 5.0) == pytest.approx(2.0, rel=1e-12)
    with pytest.raises(ValueError):
        match_logweight_exp_cauchy(-1.0, 4.0, 5.0)
    d = np.linspace(0, 10, 50)
    vals = [match_logweight_exp_cauchy(v, 6.0, 3.0) for v in d]
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_exp_cauchy_map_equals_similarity_dp():
    hp = Hyperparams(error_model="expcauchy", cauchy_c=20.0, cauchy_d0=5.0)
    rng = np.random.default_rng(8)
    for _ in range(10):
        n, m = int(rng.integers(3, 6)), int(rng.integers(3, 6))
        x = make_chain(rng.normal(0, 3, size=(n, 3)))
        y = make_chain(rng.normal(0, 3, size=(m, 3)))
        gp = GapParams(float(rng.uniform(1.0, 8.0)), float(rng.uniform(0.1, 1.0)))
        state = ModelState(path=enumerate_paths(n, m)[0], sigma2=1.0, gp=gp)
        reg = Registration.identity()
        weights = dpengine.build_weights(x, y, reg, state, hp)
        map_path = dpengine.map_traceback(weights)
        d = np.sqrt(dpengine.squared_distance_matrix(x.coords, y.coords, reg))

        def similarity_score(p):
            s = sum(match_logweight_exp_cauchy(d[i - 1, j - 1], 20.0, 5.0) for i, j in p.matched_pairs())
            return s - gap_penalty(p, gp)

        best = max(enumerate_paths(n, m), key=similarity_score)
        assert similarity_score(map_path) == pytest.approx(similarity_score(best), rel=1e-9)


def test_pair_removal_threshold_sign():
    # dropping a matched pair changes the fixed-registration target by
    # (gap cost delta) - (match log-weight); signs must agree
    rng = np.random.default_rng(9)
    x = make_chain(rng.normal(0, 2, size=(4, 3)))
    y = make_chain(rng.normal(0, 2, size=(4, 3)))
    state = ModelState(path=enumerate_paths(4, 4)[0], sigma2=1.0, gp=GapParams(1.0, 0.2), lam=4.0)
    reg = Registration.identity()
    weights = dpengine.build_weights(x, y, reg, state)
    for p in enumerate_paths(4, 4):
        steps = list(p.steps)
        for t, s in enumerate(steps):
            if s is not Step.MATCH:
                continue
            removed = steps[:t] + [Step.SKIP_X, Step.SKIP_Y] + steps[t + 1 :]
            try:
                q = AlignmentPath(tuple(removed), 4, 4)
            except ValueError:
                continue
            i, j = [pair for pair in p.matched_pairs()][sum(1 for v in steps[:t] if v is Step.MATCH)]
            dw = dpengine.path_log_weight(q, weights) - dpengine.path_log_weight(p, weights)
            du = gap_penalty(q, state.gp) - gap_penalty(p, state.gp)
            predicted = -(weights.match_logweight[i - 1, j - 1] + du)
            assert dw == pytest.approx(predicted, rel=1e-9, abs=1e-9)


def test_exchange_symmetry():
    rng = np.random.default_rng(10)
    x = make_chain(rng.normal(0, 2, size=(4, 3)))
    y = make_chain(rng.normal(0, 2, size=(3, 3)))
    for p in enumerate_paths(4, 3):
        if p.n_matched < 3:
            continue
        state = ModelState(path=p, sigma2=0.8, gp=GapParams(1.4, 0.3), lam=7.6)
        state.refresh_registration(x, y)
        sw = ModelState(path=p.transposed(), sigma2=0.8, gp=GapParams(1.4, 0.3), lam=7.6)
        sw.refresh_registration(y, x)
        assert log_posterior(y, x, None, None, sw, HP) == pytest.approx(
            log_posterior(x, y, None, None, state, HP), abs=1e-9
        )


def test_translation_invariance():
    rng = np.random.default_rng(11)
    coords = rng.normal(size=(5, 3))
    x = make_chain(coords)
    y1 = make_chain(coords + rng.normal(0, 0.5, size=(5, 3)))
    y2 = make_chain(y1.coords + np.array([100.0, -40.0, 7.0]))
    state1 = all_match_state(coords, sigma2=1.0, lam=7.6, gp=GapParams(1.0, 0.1))
    state1.refresh_registration(x, y1)
    state2 = all_match_state(coords, sigma2=1.0, lam=7.6, gp=GapParams(1.0, 0.1))
    state2.refresh_registration(x, y2)
    assert log_posterior(x, y2, None, None, state2, HP) == pytest.approx(
        log_posterior(x, y1, None, None, state1, HP), abs=1e-9
    )


def test_state_registration_check():
    rng = np.random.default_rng(12)
    coords = rng.normal(size=(4, 3))
    x, y = make_chain(coords), make_chain(coords)
    state = all_match_state(coords)
    assert not state.check_registration(x, y)
    state.refresh_registration(x, y)
    assert state.check_registration(x, y)


def test_log_pdf_helpers_vs_scipy():
    for xval in (0.1, 1.0, 4.2):
        assert log_gamma_pdf(xval, 2.0, 0.5) == pytest.approx(
            stats.gamma.logpdf(xval, 2.0, scale=2.0), rel=1e-12
        )
        assert log_invgamma_pdf(xval, 2.25, 1.5) == pytest.approx(
            stats.invgamma.logpdf(xval, 2.25, scale=1.5), rel=1e-12
        )
    assert log_gamma_pdf(-1.0, 2.0, 0.5) == -math.inf
