"""Compiled event loops behind the Monte Carlo experiment layer.

Every kernel draws randomness exclusively through rng.random() on the
Generator it is handed, so a replica's path is a pure function of the
generator state: the pure-Python reference simulators in dynamics use the
same draw discipline and the law cross-check tests tie the two together.
Holding times are inverse-sampled as -log1p(-u)/rate.

Counts and positions are int64 arrays mutated in place; diagnostics are
integrated exactly between events (the integrands are piecewise constant).
"""
from __future__ import annotations

import numpy as np
from numba import njit

# Absorbing runs have no horizon; this cap turns a runaway configuration
# into a flagged abort instead of a hang.
EVENT_CAP = 10**9

# Kill accumulated float drift in the Fenwick tree this often.
_REBUILD_EVERY = 131072


@njit(cache=True)
def _fw_add(tree, i, delta):
    i += 1
    n = tree.size - 1
    while i <= n:
        tree[i] += delta
        i += i & (-i)


@njit(cache=True)
def _fw_pick(tree, v):
    """Smallest 0-based index whose prefix sum exceeds v, and the remainder."""
    pos = 0
    bit = (tree.size - 1) >> 1
    while bit > 0:
        nxt = pos + bit
        if nxt <= tree.size - 1 and tree[nxt] <= v:
            v -= tree[nxt]
            pos = nxt
        bit >>= 1
    return pos, v


@njit(cache=True)
def _site_rate(counts, i, W, m_half, is_ring):
    c = counts[i]
    if c == 0:
        return 0.0
    if is_ring == 1:
        left = counts[i - 1] if i > 0 else counts[W - 1]
        right = counts[i + 1] if i < W - 1 else counts[0]
        return c * (2.0 * m_half + left + right)
    r = 0.0
    if i > 0:
        r += c * (m_half + counts[i - 1])
    if i < W - 1:
        r += c * (m_half + counts[i + 1])
    return r


@njit(cache=True)
def _rebuild(tree, rates, counts, W, m_half, is_ring):
    for q in range(tree.size):
        tree[q] = 0.0
    total = 0.0
    for i in range(W):
        r = _site_rate(counts, i, W, m_half, is_ring)
        rates[i] = r
        if r != 0.0:
            _fw_add(tree, i, r)
        total += r
    return total


@njit(cache=True)
def _refresh_around(tree, rates, counts, W, m_half, is_ring, i, j, scratch):
    """Recompute the rates that read counts[i] or counts[j]; return the drift."""
    n = 0
    for q in range(6):
        if q == 0:
            s = i - 1
        elif q == 1:
            s = i
        elif q == 2:
            s = i + 1
        elif q == 3:
            s = j - 1
        elif q == 4:
            s = j
        else:
            s = j + 1
        if is_ring == 1:
            if s < 0:
                s += W
            elif s >= W:
                s -= W
        elif s < 0 or s >= W:
            continue
        seen = False
        for q2 in range(n):
            if scratch[q2] == s:
                seen = True
                break
        if seen:
            continue
        scratch[n] = s
        n += 1
    dtot = 0.0
    for q in range(n):
        s = scratch[q]
        rnew = _site_rate(counts, s, W, m_half, is_ring)
        d = rnew - rates[s]
        if d != 0.0:
            _fw_add(tree, s, d)
            rates[s] = rnew
            dtot += d
    return dtot


@njit(cache=True, nogil=True)
def occupation_kernel(counts, m_half, alpha, gamma, sigma, beta, is_ring, t_max, rng):
    """Occupation-field event loop on W sites: ring, or segment with reservoirs.

    In segment mode (is_ring=0) sites 0 and W-1 exchange particles with
    reservoirs at the usual four birth/death rates. Returns the per-site
    time integral of the counts over [0, t_max] and the event count; the
    counts array holds the final configuration.
    """
    W = counts.size
    P = 1
    while P < W:
        P <<= 1
    tree = np.zeros(P + 1, np.float64)
    rates = np.zeros(W, np.float64)
    scratch = np.empty(6, np.int64)
    total_bulk = _rebuild(tree, rates, counts, W, m_half, is_ring)
    acc = np.zeros(W, np.float64)
    last = np.zeros(W, np.float64)
    t = 0.0
    events = 0
    next_rebuild = _REBUILD_EVERY
    while True:
        ch0 = 0.0
        ch1 = 0.0
        ch2 = 0.0
        ch3 = 0.0
        if is_ring == 0:
            ch0 = alpha * (m_half + counts[0])
            ch1 = gamma * counts[0]
            ch2 = sigma * (m_half + counts[W - 1])
            ch3 = beta * counts[W - 1]
        total = total_bulk + ch0 + ch1 + ch2 + ch3
        if total <= 0.0:
            break
        u = rng.random()
        dt = -np.log1p(-u) / total
        if t + dt >= t_max:
            break
        v = rng.random() * total
        if v < total_bulk:
            i, rem = _fw_pick(tree, v)
            if i >= W or counts[i] == 0:
                # Tree drift selected a dead site; rebuild and redraw.
                total_bulk = _rebuild(tree, rates, counts, W, m_half, is_ring)
                continue
            c = counts[i]
            if is_ring == 1:
                il = i - 1 if i > 0 else W - 1
                ir = i + 1 if i < W - 1 else 0
                left_rate = c * (m_half + counts[il])
            else:
                il = i - 1
                ir = i + 1
                left_rate = c * (m_half + counts[i - 1]) if i > 0 else 0.0
            j = il if rem < left_rate else ir
            t += dt
            acc[i] += counts[i] * (t - last[i])
            last[i] = t
            acc[j] += counts[j] * (t - last[j])
            last[j] = t
            counts[i] -= 1
            counts[j] += 1
            total_bulk += _refresh_around(
                tree, rates, counts, W, m_half, is_ring, i, j, scratch
            )
        else:
            v -= total_bulk
            if v < ch0:
                site = 0
                delta = 1
            elif v < ch0 + ch1:
                site = 0
                delta = -1
            elif v < ch0 + ch1 + ch2:
                site = W - 1
                delta = 1
            else:
                site = W - 1
                delta = -1
            t += dt
            acc[site] += counts[site] * (t - last[site])
            last[site] = t
            counts[site] += delta
            total_bulk += _refresh_around(
                tree, rates, counts, W, m_half, is_ring, site, site, scratch
            )
        events += 1
        if events >= next_rebuild:
            next_rebuild += _REBUILD_EVERY
            total_bulk = _rebuild(tree, rates, counts, W, m_half, is_ring)
    for i in range(W):
        acc[i] += counts[i] * (t_max - last[i])
    return acc, events


@njit(cache=True, nogil=True)
def labeled_window_kernel(pos, m_half, inclusion, lo, hi, t_max, rng):
    """Labeled walkers on a window; inclusion=1 adds the attraction term.

    Returns (events, aborted); aborted=1 means some particle tried to leave
    [lo, hi] and the replica must be discarded.
    """
    n = pos.size
    rates = np.empty((n, 2), np.float64)
    t = 0.0
    events = 0
    while True:
        total = 0.0
        for i in range(n):
            for d in range(2):
                e = -1 if d == 0 else 1
                r = m_half
                if inclusion == 1:
                    tgt = pos[i] + e
                    for k in range(n):
                        if k != i and pos[k] == tgt:
                            r += 1.0
                rates[i, d] = r
                total += r
        u = rng.random()
        dt = -np.log1p(-u) / total
        if t + dt >= t_max:
            return events, 0
        t += dt
        v = rng.random() * total
        sel_i = n - 1
        sel_e = 1
        found = False
        for i in range(n):
            for d in range(2):
                if v < rates[i, d]:
                    sel_i = i
                    sel_e = -1 if d == 0 else 1
                    found = True
                    break
                v -= rates[i, d]
            if found:
                break
        npos = pos[sel_i] + sel_e
        if npos < lo or npos > hi:
            return events, 1
        pos[sel_i] = npos
        events += 1


@njit(cache=True, nogil=True)
def coupled_kernel(y, w, m_half, lo, hi, t_max, rng, A, qv):
    """Basic coupling of labeled inclusion particles y with free walkers w.

    Joint clocks move y_i and w_i together at rate m_half per direction;
    attraction clocks move y_i alone at rate equal to the number of y
    particles on the target site. Accumulates, exactly between events, the
    occupation time of "some pair adjacent" and of "exactly one pair
    adjacent with all other pairs >= 2 apart", the per-pair drift
    integrals A[i, k] = int 1{|y_k-y_i|=1} sign(y_k-y_i) ds, and the
    quadratic-variation clocks qv[i] = sum_k int 1{|y_k-y_i|=1} ds.
    """
    n = y.size
    rates = np.empty((n, 2), np.float64)
    occ_delta = 0.0
    occ_binary = 0.0
    t = 0.0
    events = 0
    while True:
        total_sip = 0.0
        for i in range(n):
            for d in range(2):
                e = -1 if d == 0 else 1
                tgt = y[i] + e
                cnt = 0.0
                for k in range(n):
                    if y[k] == tgt:
                        cnt += 1.0
                rates[i, d] = cnt
                total_sip += cnt
        total = 2.0 * n * m_half + total_sip
        u = rng.random()
        dt = -np.log1p(-u) / total
        seg = dt if t + dt < t_max else t_max - t
        adj = 0
        clean = True
        for a in range(n):
            for b in range(a + 1, n):
                dz = y[b] - y[a]
                if dz < 0:
                    dz = -dz
                if dz == 1:
                    adj += 1
                elif dz < 2:
                    clean = False
        if adj > 0:
            occ_delta += seg
            if adj == 1 and clean:
                occ_binary += seg
        for i in range(n):
            for k in range(n):
                dz = y[k] - y[i]
                if dz == 1:
                    A[i, k] += seg
                    qv[i] += seg
                elif dz == -1:
                    A[i, k] -= seg
                    qv[i] += seg
        if t + dt >= t_max:
            return occ_delta, occ_binary, events, 0
        t += dt
        v = rng.random() * total
        if v < 2.0 * n * m_half:
            lab = int(v // (2.0 * m_half))
            if lab >= n:
                lab = n - 1
            rem = v - lab * 2.0 * m_half
            e = -1 if rem < m_half else 1
            ny = y[lab] + e
            nw = w[lab] + e
            if ny < lo or ny > hi or nw < lo or nw > hi:
                return occ_delta, occ_binary, events, 1
            y[lab] = ny
            w[lab] = nw
        else:
            v -= 2.0 * n * m_half
            sel_i = n - 1
            sel_e = 1
            found = False
            for i in range(n):
                for d in range(2):
                    if v < rates[i, d]:
                        sel_i = i
                        sel_e = -1 if d == 0 else 1
                        found = True
                        break
                    v -= rates[i, d]
                if found:
                    break
            ny = y[sel_i] + sel_e
            if ny < lo or ny > hi:
                return occ_delta, occ_binary, events, 1
            y[sel_i] = ny
        events += 1


@njit(cache=True, nogil=True)
def z_chain_kernel(z0, m_rate, pull, t_max, rng):
    """Difference walk: rate m_rate each way, plus pull from +-1 toward 0.

    Returns (z_final, occupation time of {-1,+1}, int 1{|z|=1} z ds, events).
    """
    z = z0
    t = 0.0
    occ = 0.0
    a_int = 0.0
    events = 0
    while True:
        r_left = m_rate
        r_right = m_rate
        if z == 1:
            r_left += pull
        elif z == -1:
            r_right += pull
        total = r_left + r_right
        u = rng.random()
        dt = -np.log1p(-u) / total
        seg = dt if t + dt < t_max else t_max - t
        if z == 1:
            occ += seg
            a_int += seg
        elif z == -1:
            occ += seg
            a_int -= seg
        if t + dt >= t_max:
            return z, occ, a_int, events
        t += dt
        if rng.random() * total < r_left:
            z -= 1
        else:
            z += 1
        events += 1


@njit(cache=True, nogil=True)
def dual_absorbing_kernel(pos, n_sites, m_half, absorb_l, absorb_r, rng, event_cap):
    """Labeled dual particles on 1..N run until every one sits at 0 or N+1.

    Interior hops are boosted by the unabsorbed particles on the target
    site; hops out of 1 and N absorb at the given edge rates. Returns
    (absorption time, events, capped) with capped=1 if event_cap was hit.
    """
    n = pos.size
    N = n_sites
    rates = np.empty((n, 2), np.float64)
    t = 0.0
    events = 0
    while True:
        total = 0.0
        for i in range(n):
            p = pos[i]
            if p < 1 or p > N:
                rates[i, 0] = 0.0
                rates[i, 1] = 0.0
                continue
            for d in range(2):
                tgt = p + (-1 if d == 0 else 1)
                if tgt == 0:
                    r = absorb_l
                elif tgt == N + 1:
                    r = absorb_r
                else:
                    r = m_half
                    for k in range(n):
                        if k != i and pos[k] == tgt:
                            r += 1.0
                rates[i, d] = r
                total += r
        if total <= 0.0:
            return t, events, 0
        u = rng.random()
        dt = -np.log1p(-u) / total
        t += dt
        v = rng.random() * total
        sel_i = n - 1
        sel_e = 1
        found = False
        for i in range(n):
            for d in range(2):
                if v < rates[i, d]:
                    sel_i = i
                    sel_e = -1 if d == 0 else 1
                    found = True
                    break
                v -= rates[i, d]
            if found:
                break
        pos[sel_i] += sel_e
        events += 1
        if events >= event_cap:
            return t, events, 1


@njit(cache=True, nogil=True)
def absorbing_coupled_kernel(s_pos, w_pos, n_sites, m_half, rng, event_cap):
    """Absorbing coupling on 1..N under canonical rates (edge rate = m_half).

    Per label, two shared clocks of rate m_half move both copies one step
    (each copy only while unabsorbed; a survivor keeps riding the same
    clocks, which is its independent continuation); attraction clocks move
    the inclusion copy alone. Only the embedded jump chain matters for the
    final absorbed configuration, so no holding times are drawn. Returns
    (events, discrepant, capped) where discrepant=1 if any label ends on
    different sides.
    """
    n = s_pos.size
    N = n_sites
    rates = np.empty((n, 2), np.float64)
    events = 0
    while True:
        total_joint = 0.0
        total_sip = 0.0
        for i in range(n):
            s_live = 1 <= s_pos[i] <= N
            if s_live or 1 <= w_pos[i] <= N:
                total_joint += 2.0 * m_half
            for d in range(2):
                r = 0.0
                if s_live:
                    tgt = s_pos[i] + (-1 if d == 0 else 1)
                    if 1 <= tgt <= N:
                        for k in range(n):
                            if k != i and s_pos[k] == tgt:
                                r += 1.0
                rates[i, d] = r
                total_sip += r
        total = total_joint + total_sip
        if total <= 0.0:
            break
        v = rng.random() * total
        if v < total_joint:
            sel_i = n - 1
            sel_e = 1
            for i in range(n):
                if (1 <= s_pos[i] <= N) or (1 <= w_pos[i] <= N):
                    if v < 2.0 * m_half:
                        sel_i = i
                        sel_e = -1 if v < m_half else 1
                        break
                    v -= 2.0 * m_half
            if 1 <= s_pos[sel_i] <= N:
                s_pos[sel_i] += sel_e
            if 1 <= w_pos[sel_i] <= N:
                w_pos[sel_i] += sel_e
        else:
            v -= total_joint
            sel_i = n - 1
            sel_e = 1
            found = False
            for i in range(n):
                for d in range(2):
                    if v < rates[i, d]:
                        sel_i = i
                        sel_e = -1 if d == 0 else 1
                        found = True
                        break
                    v -= rates[i, d]
                if found:
                    break
            s_pos[sel_i] += sel_e
        events += 1
        if events >= event_cap:
            return events, 0, 1
    disc = 0
    for i in range(n):
        if s_pos[i] != w_pos[i]:
            disc = 1
    return events, disc, 0
