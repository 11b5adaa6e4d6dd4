import itertools

import numpy as np
import pytest
from scipy.linalg import expm
from scipy.special import gammaln

from sipsim.exact import (
    StateIndex,
    TupleIndex,
    absorption_solve_single,
    boundary_intertwining_check,
    boundary_stationary_profile,
    build_generator,
    collapse_marginal,
    dual_absorption_solve,
    enumerate_occupations,
    intertwining_check,
    labeled_dual_absorption_solve,
    max_boundary_intertwining_residual,
    max_intertwining_residual,
    stationary_solve,
    transient_expectation,
)
from sipsim.lattice import OccupationConfig, ring, segment
from sipsim.measures import ReservoirParams, duality_fn


def test_enumerate_occupations_shape_and_order():
    occ = enumerate_occupations(3, 2)
    assert occ.shape == (6, 3)
    assert (occ.sum(axis=1) == 2).all()
    # lexicographic: first row puts everything on the last site
    assert occ[0].tolist() == [0, 0, 2]
    assert occ[-1].tolist() == [2, 0, 0]


def test_state_index_round_trip():
    idx = StateIndex(enumerate_occupations(3, 2))
    for i in range(idx.size):
        assert idx.index_of(idx.config(i)) == i
    with pytest.raises(KeyError):
        idx.index_of((9, 9, 9))


def test_tuple_index_round_trip():
    idx = TupleIndex(5, 3)
    assert idx.size == 125
    for i in (0, 17, 124):
        assert idx.index_of(idx.config(i)) == i
    with pytest.raises(KeyError):
        idx.index_of((5, 0, 0))


def test_ring_generator_rows_sum_to_zero():
    Q, idx = build_generator("sip_ring", n_sites=4, n_particles=3, m=1.5)
    assert Q.shape == (idx.size, idx.size)
    assert np.abs(np.asarray(Q.sum(axis=1)).ravel()).max() < 1e-12
    off = Q.copy()
    off.setdiag(0.0)
    assert off.min() >= 0.0


def test_ring_generator_spot_rate():
    # on a 3-ring with m = 2, moving one of two particles onto an occupied
    # neighbor runs at 2 * (1 + 1) = 4
    Q, idx = build_generator("sip_ring", n_sites=3, n_particles=3, m=2.0)
    s = idx.index_of((2, 1, 0))
    t = idx.index_of((1, 2, 0))
    assert Q[s, t] == pytest.approx(2.0 * (1.0 + 1.0), rel=1e-12)


def test_unknown_model_rejected():
    with pytest.raises(ValueError):
        build_generator("sep_ring", n_sites=3, n_particles=1, m=1.0)


def test_ring_stationary_is_conditioned_product_measure():
    m = 1.5
    Q, idx = build_generator("sip_ring", n_sites=3, n_particles=3, m=m)
    pi = stationary_solve(Q)
    # fixed-total stationary weights: prod_i Gamma(m/2 + n_i) / n_i!
    half = 0.5 * m
    logw = (gammaln(half + idx.configs) - gammaln(idx.configs + 1.0)).sum(axis=1)
    want = np.exp(logw - logw.max())
    want /= want.sum()
    assert np.abs(pi - want).max() < 1e-12


def test_ring_stationary_is_reversible():
    Q, _ = build_generator("sip_ring", n_sites=3, n_particles=2, m=0.7)
    pi = stationary_solve(Q)
    Qd = Q.toarray()
    flow = pi[:, None] * Qd
    np.fill_diagonal(flow, 0.0)
    assert np.abs(flow - flow.T).max() < 1e-14


def test_stationary_solve_rejects_absorbing_chains():
    Q, _ = build_generator("dual_absorbing", n_sites=3, n_particles=1, m=2.0)
    with pytest.raises(ValueError):
        stationary_solve(Q)


def test_irw_marginal_is_a_single_walk():
    # dropping one coordinate of the two-walk generator must leave plain
    # rate-m/2 jumps for the other
    m = 1.5
    Q, idx = build_generator("irw", ring_size=4, n_particles=2, m=m)
    marg = collapse_marginal(Q, idx, coords=(0,))
    for src, targets in marg.items():
        p = src[0]
        want = {((p - 1) % 4,): 0.75, ((p + 1) % 4,): 0.75}
        assert targets == pytest.approx(want)


def test_coupled_marginals_recover_both_processes():
    L, n, m = 4, 2, 1.5
    Qc, idxc = build_generator("coupled", ring_size=L, n_particles=n, m=m)
    Qs, idxs = build_generator("sip_labeled_ring", ring_size=L, n_particles=n, m=m)
    Qw, idxw = build_generator("irw", ring_size=L, n_particles=n, m=m)

    def rows_of(Q, idx):
        Q = Q.tocoo()
        out = {}
        for s, t, v in zip(Q.row, Q.col, Q.data):
            if s != t and v != 0.0:
                src = idx.config(s)
                out.setdefault(src, {})
                dst = idx.config(t)
                out[src][dst] = out[src].get(dst, 0.0) + float(v)
        return out

    sip_rows = rows_of(Qs, idxs)
    irw_rows = rows_of(Qw, idxw)
    marg_y = collapse_marginal(Qc, idxc, coords=tuple(range(n)))
    marg_w = collapse_marginal(Qc, idxc, coords=tuple(range(n, 2 * n)))
    for src, targets in marg_y.items():
        assert targets == pytest.approx(sip_rows[src[:n]], rel=1e-12)
    for src, targets in marg_w.items():
        assert targets == pytest.approx(irw_rows[src[n:]], rel=1e-12)


# ---------------------------------------------------------------------------
# duality residuals
# ---------------------------------------------------------------------------


def test_intertwining_residual_single_pair():
    sites = ring(4)
    xi = OccupationConfig(sites, {0: 1, 1: 1})
    eta = OccupationConfig(sites, {0: 2, 2: 1})
    assert intertwining_check(xi, eta, 1.3) < 1e-12


def test_max_residual_dominates_pointwise_checks():
    m = 2.0
    worst = max_intertwining_residual(4, 2, 2, m)
    assert worst < 1e-10
    sites = ring(4)
    for xi_row in enumerate_occupations(4, 2):
        xi = OccupationConfig.from_dense(xi_row, sites)
        for eta_tuple in itertools.product(range(3), repeat=4):
            eta = OccupationConfig(sites, {i: c for i, c in enumerate(eta_tuple) if c})
            assert intertwining_check(xi, eta, m) <= worst + 1e-13


def test_boundary_residual_canonical_and_not():
    sites = segment(3)
    xi = OccupationConfig(sites, {1: 1, 3: 1})
    eta = OccupationConfig(sites, {1: 2, 2: 1})
    for res in (
        ReservoirParams.canonical(1.0, 2.0, 2.0),
        ReservoirParams(alpha=1.0, gamma=2.0, sigma=1.0, beta=3.0),
    ):
        assert boundary_intertwining_check(xi, eta, res, 2.0) < 1e-12


def test_boundary_residual_scan_small():
    res = ReservoirParams(alpha=0.5, gamma=1.5, sigma=1.0, beta=2.5)
    assert max_boundary_intertwining_residual(2, 2, 2, res, 1.0) < 1e-10


# ---------------------------------------------------------------------------
# absorption and transient solves
# ---------------------------------------------------------------------------


def test_single_absorption_linear_under_canonical_rates():
    h = absorption_solve_single(10, 3.0)
    want = np.arange(12) / 11.0
    assert np.abs(h - want).max() < 1e-13


def test_single_absorption_general_rates_against_dense_solve():
    N, m = 6, 2.0
    res = ReservoirParams(alpha=1.0, gamma=2.0, sigma=1.0, beta=3.0)
    h = absorption_solve_single(N, m, res)
    half = 0.5 * m
    left = np.full(N, half)
    right = np.full(N, half)
    left[0] = res.absorb_left
    right[-1] = res.absorb_right
    A = np.zeros((N, N))
    b = np.zeros(N)
    for i in range(N):
        A[i, i] = left[i] + right[i]
        if i > 0:
            A[i, i - 1] = -left[i]
        if i < N - 1:
            A[i, i + 1] = -right[i]
    b[-1] = right[-1]
    want = np.linalg.solve(A, b)
    assert np.abs(h[1:-1] - want).max() < 1e-12
    assert h[0] == 0.0 and h[-1] == 1.0


def test_dual_absorption_single_particle_matches_harmonic():
    N, m = 7, 1.0
    h = absorption_solve_single(N, m)
    for i in (1, 4, 7):
        law = dual_absorption_solve([i], N, m)
        assert law[(0, 1)] == pytest.approx(h[i], abs=1e-12)
        assert law[(1, 0)] == pytest.approx(1.0 - h[i], abs=1e-12)


def test_dual_absorption_law_is_a_probability():
    law = dual_absorption_solve([3, 7], 9, 2.0)
    assert sum(law.values()) == pytest.approx(1.0, abs=1e-10)
    assert all(lc + rc == 2 for lc, rc in law)
    assert all(p >= 0 for p in law.values())


def test_dual_absorption_start_forms_agree():
    N, m = 6, 2.0
    from sipsim.lattice import LabeledPositions

    sites = segment(N)
    a = dual_absorption_solve(LabeledPositions((2, 5)), N, m)
    b = dual_absorption_solve(OccupationConfig(sites, {2: 1, 5: 1}), N, m)
    c = dual_absorption_solve((5, 2), N, m)
    for key in a:
        assert a[key] == pytest.approx(b[key], abs=1e-12)
        assert a[key] == pytest.approx(c[key], abs=1e-12)


def test_labeled_absorption_marginalizes_to_occupation_law():
    N, m = 6, 2.0
    start = (2, 5)
    labeled = labeled_dual_absorption_solve(start, N, m)
    assert sum(labeled.values()) == pytest.approx(1.0, abs=1e-10)
    collapsed: dict[tuple[int, int], float] = {}
    for finals, p in labeled.items():
        assert set(finals) <= {0, N + 1}
        key = (sum(1 for f in finals if f == 0), sum(1 for f in finals if f == N + 1))
        collapsed[key] = collapsed.get(key, 0.0) + p
    law = dual_absorption_solve(start, N, m)
    for key, p in law.items():
        assert collapsed[key] == pytest.approx(p, abs=1e-10)


def test_labeled_absorption_rejects_bad_start():
    with pytest.raises(ValueError):
        labeled_dual_absorption_solve((0, 3), 5, 1.0)


def test_transient_expectation_matches_dense_expm():
    m, t = 1.5, 0.7
    Q, idx = build_generator("sip_ring", n_sites=3, n_particles=2, m=m)
    rng = np.random.default_rng(0)
    f = rng.normal(size=idx.size)
    dense = expm(Q.toarray() * t) @ f
    mine = transient_expectation(Q, f, t)
    assert np.abs(mine - dense).max() < 1e-8
    s0 = idx.index_of((2, 0, 0))
    assert transient_expectation(Q, f, t, start=s0) == pytest.approx(dense[s0], abs=1e-8)


def test_transient_expectation_at_zero_time():
    Q, idx = build_generator("sip_ring", n_sites=3, n_particles=1, m=1.0)
    f = np.arange(idx.size, dtype=float)
    assert np.array_equal(transient_expectation(Q, f, 0.0), f)


@pytest.mark.parametrize("t", [0.1, 0.7, 2.0])
def test_semigroup_duality_on_ring(t):
    # E_eta[D(xi0, eta_t)] must equal E_xi[D(xi_t, eta0)]; both sides run
    # the same ring dynamics, started from the two slots of D.
    L, m = 4, 2.0
    sites = ring(L)
    xi0 = OccupationConfig(sites, {0: 1, 1: 1})
    eta0 = OccupationConfig(sites, {0: 2, 2: 1})

    Qe, idxe = build_generator("sip_ring", n_sites=L, n_particles=eta0.total, m=m)
    fe = np.array(
        [
            duality_fn(xi0, OccupationConfig.from_dense(idxe.config(s), sites), m)
            for s in range(idxe.size)
        ]
    )
    lhs = transient_expectation(Qe, fe, t, start=idxe.index_of(eta0))

    Qx, idxx = build_generator("sip_ring", n_sites=L, n_particles=xi0.total, m=m)
    fx = np.array(
        [
            duality_fn(OccupationConfig.from_dense(idxx.config(s), sites), eta0, m)
            for s in range(idxx.size)
        ]
    )
    rhs = transient_expectation(Qx, fx, t, start=idxx.index_of(xi0))
    assert lhs == pytest.approx(rhs, abs=1e-8)


def test_boundary_stationary_profile_interpolates_reservoirs():
    # dual-moment units: the exact open-segment profile is the harmonic
    # interpolation of the two reservoir scales
    N, m = 3, 2.0
    res = ReservoirParams.canonical(0.15, 0.3, m)
    profile, cap = boundary_stationary_profile(N, res, m, tol=1e-5)
    h = absorption_solve_single(N, m, res)[1:-1]
    want = 0.15 * (1 - h) + 0.3 * h
    assert np.abs(profile - want).max() < 1e-8
    assert cap >= 16
