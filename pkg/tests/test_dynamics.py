import numpy as np
import pytest

from sipsim._kernels import dual_absorbing_kernel, labeled_window_kernel, occupation_kernel
from sipsim.dynamics import (
    EventKind,
    Trajectory,
    labeled_sip_rates,
    sip_bulk_rate,
    simulate_boundary_driven,
    simulate_dual_absorbing,
    simulate_irw,
    simulate_sip,
)
from sipsim.exact import (
    absorption_solve_single,
    build_generator,
    dual_absorption_solve,
    transient_expectation,
)
from sipsim.lattice import LabeledPositions, OccupationConfig, ring, segment, window_for
from sipsim.measures import ReservoirParams
from sipsim.rngs import RngStream


def bernoulli_se(p_hat, n):
    return np.sqrt(max(p_hat * (1 - p_hat), 1e-12) / n)


def test_bulk_rate_formula():
    sites = ring(4)
    eta = OccupationConfig(sites, {0: 2, 1: 3})
    assert sip_bulk_rate(eta, 0, 1, 2.0) == pytest.approx(2 * (1 + 3))
    assert sip_bulk_rate(eta, 1, 2, 2.0) == pytest.approx(3 * (1 + 0))
    assert sip_bulk_rate(eta, 2, 3, 2.0) == 0.0
    with pytest.raises(ValueError):
        sip_bulk_rate(eta, 0, 2, 2.0)


def test_labeled_rate_formula():
    p = LabeledPositions((0, 1, 1))
    # particle 0 hopping right lands on two others
    assert labeled_sip_rates(p, 0, 1, 2.0) == pytest.approx(3.0)
    assert labeled_sip_rates(p, 0, -1, 2.0) == pytest.approx(1.0)
    # a particle does not attract itself
    assert labeled_sip_rates(p, 1, 1, 2.0) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        labeled_sip_rates(p, 0, 2, 2.0)


def replay_labeled(traj: Trajectory):
    pos = list(traj.initial.positions)
    last_t = 0.0
    for e in traj.events:
        assert e.time > last_t
        last_t = e.time
        assert e.time < traj.horizon
        assert abs(e.dst - e.src) == 1
        assert pos[e.label] == e.src
        pos[e.label] = e.dst
    return tuple(pos)


def test_labeled_event_log_replays_to_final():
    traj = simulate_sip(LabeledPositions((0, 0, 5)), 2.0, 3.0, RngStream(3))
    assert traj.event_count > 0
    assert replay_labeled(traj) == traj.final.positions
    kinds = {e.kind for e in traj.events}
    assert kinds <= {EventKind.RW_JUMP, EventKind.INCLUSION_JUMP}


def test_event_rows_shape():
    traj = simulate_sip(LabeledPositions((0, 1)), 1.0, 1.0, RngStream(4))
    for row in traj.to_rows():
        t, kind, src, dst, label = row
        assert isinstance(t, float) and isinstance(kind, str)
        assert label in (0, 1)


def test_fixed_seed_reproduces_event_log():
    a = simulate_sip(LabeledPositions((0, 2)), 1.5, 2.0, RngStream(9).generator())
    b = simulate_sip(LabeledPositions((0, 2)), 1.5, 2.0, RngStream(9).generator())
    assert a.final == b.final
    assert [e.time for e in a.events] == [e.time for e in b.events]


def test_occupation_run_conserves_mass():
    init = OccupationConfig(ring(5), {0: 3, 2: 1})
    traj = simulate_sip(init, 2.0, 2.0, RngStream(5))
    assert traj.final.total == 4
    # replay occupation moves
    counts = dict(init.counts)
    for e in traj.events:
        counts[e.src] -= 1
        counts[e.dst] = counts.get(e.dst, 0) + 1
    assert {k: v for k, v in counts.items() if v} == traj.final.counts


def test_simulate_sip_rejects_reservoir_segments():
    init = OccupationConfig(segment(3), {1: 1})
    with pytest.raises(ValueError):
        simulate_sip(init, 1.0, 1.0, RngStream(0))
    with pytest.raises(TypeError):
        simulate_sip([0, 1], 1.0, 1.0, RngStream(0))


def test_single_particle_msd_is_m_t():
    # one particle never feels inclusion: it jumps at total rate m, so the
    # displacement variance is m*T and the event count is Poisson(m*T)
    m, T, reps = 2.0, 2.0, 4000
    disp = np.empty(reps)
    nev = np.empty(reps)
    master = RngStream(21)
    for r in range(reps):
        traj = simulate_sip(LabeledPositions((0,)), m, T, master.split(r))
        disp[r] = traj.final.positions[0]
        nev[r] = traj.event_count
    se = disp.std(ddof=1) / np.sqrt(reps)
    assert abs(disp.mean()) < 3 * se
    sq = disp**2
    se2 = sq.std(ddof=1) / np.sqrt(reps)
    assert abs(sq.mean() - m * T) < 3 * se2
    se3 = nev.std(ddof=1) / np.sqrt(reps)
    assert abs(nev.mean() - m * T) < 3 * se3
    assert abs(nev.var(ddof=1) - m * T) < 4 * m * T / np.sqrt(reps) * 3


def test_irw_return_probability():
    # a free walker returns to its start with probability e^{-mT} I_0(mT)
    from scipy.special import ive

    m, T, reps = 2.0, 1.0, 5000
    hits = 0
    master = RngStream(22)
    for r in range(reps):
        traj = simulate_irw(LabeledPositions((0, 4)), m, T, master.split(r))
        hits += traj.final.positions[0] == 0
    want = float(ive(0, m * T))
    p_hat = hits / reps
    assert abs(p_hat - want) < 3 * bernoulli_se(p_hat, reps)


def test_occupation_view_matches_exact_ring_law():
    # chance that both particles share a site at time t, against the exact
    # occupation semigroup on the 3-ring
    L, m, t, reps = 3, 2.0, 0.4, 3000
    sites = ring(L)
    Q, idx = build_generator("sip_ring", n_sites=L, n_particles=2, m=m)
    f = np.array([1.0 if (idx.config(s) == 2).any() else 0.0 for s in range(idx.size)])
    want = transient_expectation(Q, f, t, start=idx.index_of((2, 0, 0)))

    hits = 0
    master = RngStream(23)
    for r in range(reps):
        fin = simulate_sip(OccupationConfig(sites, {0: 2}), m, t, master.split(r)).final
        hits += 2 in fin.counts.values()
    p_hat = hits / reps
    assert abs(p_hat - want) < 3 * bernoulli_se(p_hat, reps)


def test_labeled_view_matches_exact_labeled_law():
    # the labeled simulator lives on the integer line; a 15-ring is
    # indistinguishable from it at t = 0.4 to well below Monte Carlo
    # resolution, so the exact labeled ring semigroup serves as the oracle
    L, m, t, reps = 15, 2.0, 0.4, 3000
    Q, idx = build_generator("sip_labeled_ring", ring_size=L, n_particles=2, m=m)
    f = np.array(
        [1.0 if len(set(idx.config(s))) == 1 else 0.0 for s in range(idx.size)]
    )
    want = transient_expectation(Q, f, t, start=idx.index_of((0, 0)))

    hits = 0
    master = RngStream(24)
    for r in range(reps):
        fin = simulate_sip(LabeledPositions((0, 0)), m, t, master.split(r)).final
        hits += fin.positions[0] == fin.positions[1]
    p_hat = hits / reps
    assert abs(p_hat - want) < 3 * bernoulli_se(p_hat, reps)


# ---------------------------------------------------------------------------
# boundary-driven segment
# ---------------------------------------------------------------------------


def dual_mean_profile(N, res, m, T):
    """Exact E[eta_i(T)]/(m/2) from the empty state, site by site.

    A single dual particle started at i contributes rho_L or rho_R once
    absorbed and nothing while still interior.
    """
    Q, idx = build_generator("dual_absorbing", n_sites=N, n_particles=1, m=m, res=res)
    f = np.zeros(idx.size)
    for s in range(idx.size):
        c = idx.config(s)
        if c[0] == 1:
            f[s] = res.rho_left
        elif c[-1] == 1:
            f[s] = res.rho_right
    out = np.empty(N)
    for i in range(1, N + 1):
        vec = np.zeros(N + 2, dtype=np.int64)
        vec[i] = 1
        out[i - 1] = transient_expectation(Q, f, T, start=idx.index_of(vec))
    return out


def test_boundary_driven_mean_matches_dual_oracle():
    N, m, T, reps = 3, 2.0, 1.5, 3000
    res = ReservoirParams.canonical(0.5, 1.0, m)
    want = dual_mean_profile(N, res, m, T)
    sites = segment(N)
    init = OccupationConfig(sites, {})
    occ = np.zeros((reps, N))
    master = RngStream(31)
    for r in range(reps):
        fin = simulate_boundary_driven(init, res, m, T, master.split(r), record=False)
        occ[r] = [fin.final.count(i) for i in range(1, N + 1)]
    est = occ.mean(axis=0) / (0.5 * m)
    se = occ.std(axis=0, ddof=1) / np.sqrt(reps) / (0.5 * m)
    assert (np.abs(est - want) < 3 * se + 1e-12).all()


def test_boundary_driven_event_log_replays():
    N, m = 3, 2.0
    res = ReservoirParams(alpha=1.0, gamma=2.0, sigma=1.0, beta=3.0)
    sites = segment(N)
    init = OccupationConfig(sites, {2: 2})
    traj = simulate_boundary_driven(init, res, m, 2.0, RngStream(32))
    counts = dict(init.counts)
    for e in traj.events:
        if e.kind is EventKind.RESERVOIR_BIRTH:
            assert e.src in (sites.lo, sites.hi)
            counts[e.dst] = counts.get(e.dst, 0) + 1
        elif e.kind is EventKind.RESERVOIR_DEATH:
            assert e.dst in (sites.lo, sites.hi)
            counts[e.src] -= 1
        else:
            counts[e.src] -= 1
            counts[e.dst] = counts.get(e.dst, 0) + 1
    assert {k: v for k, v in counts.items() if v} == traj.final.counts


def test_boundary_driven_validates_initial_state():
    res = ReservoirParams.canonical(1.0, 1.0, 2.0)
    with pytest.raises(ValueError):
        simulate_boundary_driven(
            OccupationConfig(segment(3), {0: 1}), res, 2.0, 1.0, RngStream(0)
        )
    with pytest.raises(ValueError):
        simulate_boundary_driven(
            OccupationConfig(ring(3), {0: 1}), res, 2.0, 1.0, RngStream(0)
        )


# ---------------------------------------------------------------------------
# absorbing dual
# ---------------------------------------------------------------------------


def test_dual_run_absorbs_everything():
    res = simulate_dual_absorbing(LabeledPositions((2, 5, 5)), 6, 2.0, RngStream(41))
    assert set(res.final) <= {0, 7}
    k, l = res.left_right_split(6)
    assert k + l == 3
    assert res.absorption_time > 0
    assert res.event_count >= 3


def test_dual_run_recording():
    res = simulate_dual_absorbing(
        LabeledPositions((3,)), 5, 2.0, RngStream(42), record=True
    )
    traj = res.trajectory
    assert traj is not None
    assert traj.final.positions == res.final
    assert traj.events[-1].kind is EventKind.ABSORPTION
    interior = [e for e in traj.events[:-1]]
    assert all(e.kind is EventKind.RW_JUMP for e in interior[:-1])


def test_dual_run_event_cap():
    with pytest.raises(RuntimeError):
        simulate_dual_absorbing(
            LabeledPositions((5, 5)), 9, 2.0, RngStream(43), event_cap=3
        )


def test_dual_single_particle_law():
    N, m, reps = 7, 1.0, 3000
    h = absorption_solve_single(N, m)
    start = 3
    right = 0
    master = RngStream(44)
    for r in range(reps):
        res = simulate_dual_absorbing(LabeledPositions((start,)), N, m, master.split(r))
        right += res.final[0] == N + 1
    p_hat = right / reps
    assert abs(p_hat - h[start]) < 3 * bernoulli_se(p_hat, reps)


def test_dual_pair_law_matches_exact_solve():
    N, m, reps = 6, 2.0, 3000
    start = (2, 5)
    want = dual_absorption_solve(start, N, m)
    got: dict[tuple[int, int], int] = {}
    master = RngStream(45)
    for r in range(reps):
        res = simulate_dual_absorbing(LabeledPositions(start), N, m, master.split(r))
        got[res.left_right_split(N)] = got.get(res.left_right_split(N), 0) + 1
    for key, p in want.items():
        p_hat = got.get(key, 0) / reps
        assert abs(p_hat - p) < 3 * bernoulli_se(p_hat, reps)


def test_dual_non_canonical_pulls_toward_stickier_edge():
    N, m, reps = 5, 2.0, 2000
    res = ReservoirParams(alpha=0.0, gamma=4.0, sigma=0.0, beta=1.0)
    h = absorption_solve_single(N, m, res)
    start = 3
    right = 0
    master = RngStream(46)
    for r in range(reps):
        out = simulate_dual_absorbing(
            LabeledPositions((start,)), N, m, master.split(r), res=res
        )
        right += out.final[0] == N + 1
    p_hat = right / reps
    assert abs(p_hat - h[start]) < 3 * bernoulli_se(p_hat, reps)


# ---------------------------------------------------------------------------
# compiled kernels against the reference simulators
# ---------------------------------------------------------------------------


def test_labeled_kernel_is_bit_identical_to_reference():
    start = LabeledPositions((0, 0, 4))
    m, T = 1.5, 3.0
    win = window_for(start.positions, m, T)
    ref = simulate_sip(start, m, T, RngStream(51).generator())
    pos = start.array()
    events, aborted = labeled_window_kernel(
        pos, 0.5 * m, np.int64(1), win.lo, win.hi, T, RngStream(51).generator()
    )
    assert aborted == 0
    assert tuple(int(p) for p in pos) == ref.final.positions
    assert events == ref.event_count


def test_irw_kernel_is_bit_identical_to_reference():
    start = LabeledPositions((-2, 3))
    m, T = 2.0, 4.0
    win = window_for(start.positions, m, T)
    ref = simulate_irw(start, m, T, RngStream(52).generator())
    pos = start.array()
    events, aborted = labeled_window_kernel(
        pos, 0.5 * m, np.int64(0), win.lo, win.hi, T, RngStream(52).generator()
    )
    assert aborted == 0
    assert tuple(int(p) for p in pos) == ref.final.positions
    assert events == ref.event_count


def test_dual_kernel_is_bit_identical_to_reference():
    start = LabeledPositions((2, 5, 5))
    N, m = 6, 2.0
    ref = simulate_dual_absorbing(start, N, m, RngStream(53).generator())
    pos = start.array()
    t, events, capped = dual_absorbing_kernel(
        pos, np.int64(N), 0.5 * m, 0.5 * m, 0.5 * m, RngStream(53).generator(), 10**6
    )
    assert capped == 0
    assert tuple(int(p) for p in pos) == ref.final
    assert events == ref.event_count
    assert t == pytest.approx(ref.absorption_time, rel=1e-12)


def test_labeled_kernel_abort_flag():
    pos = np.array([0], dtype=np.int64)
    events, aborted = labeled_window_kernel(
        pos, 1.0, np.int64(0), np.int64(0), np.int64(0), 50.0, RngStream(54).generator()
    )
    assert aborted == 1


def test_occupation_kernel_ring_integral_conserves_mass():
    counts = np.array([3, 0, 1, 0], dtype=np.int64)
    T = 5.0
    acc, events = occupation_kernel(
        counts, 1.0, 0.0, 0.0, 0.0, 0.0, np.int64(1), T, RngStream(55).generator()
    )
    assert counts.sum() == 4
    assert events > 0
    # total occupation is constant, so its time integral is exactly n*T
    assert acc.sum() == pytest.approx(4 * T, abs=1e-9)


def test_occupation_kernel_ring_law_matches_exact():
    L, m, t, reps = 3, 2.0, 0.4, 4000
    Q, idx = build_generator("sip_ring", n_sites=L, n_particles=2, m=m)
    f = np.array([1.0 if (idx.config(s) == 2).any() else 0.0 for s in range(idx.size)])
    want = transient_expectation(Q, f, t, start=idx.index_of((2, 0, 0)))
    hits = 0
    master = RngStream(56)
    for r in range(reps):
        counts = np.array([2, 0, 0], dtype=np.int64)
        occupation_kernel(
            counts, 0.5 * m, 0.0, 0.0, 0.0, 0.0, np.int64(1), t,
            master.split(r).generator(),
        )
        hits += (counts == 2).any()
    p_hat = hits / reps
    assert abs(p_hat - want) < 3 * bernoulli_se(p_hat, reps)


def test_occupation_kernel_segment_mean_matches_dual_oracle():
    N, m, T, reps = 3, 2.0, 1.5, 4000
    res = ReservoirParams.canonical(0.5, 1.0, m)
    want = dual_mean_profile(N, res, m, T)
    occ = np.zeros((reps, N))
    master = RngStream(57)
    for r in range(reps):
        counts = np.zeros(N, dtype=np.int64)
        occupation_kernel(
            counts, 0.5 * m, res.alpha, res.gamma, res.sigma, res.beta,
            np.int64(0), T, master.split(r).generator(),
        )
        occ[r] = counts
    est = occ.mean(axis=0) / (0.5 * m)
    se = occ.std(axis=0, ddof=1) / np.sqrt(reps) / (0.5 * m)
    assert (np.abs(est - want) < 3 * se + 1e-12).all()
