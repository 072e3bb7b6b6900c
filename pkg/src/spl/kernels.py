"""Hot loops, each as a numba kernel plus a numpy/Python fallback.

``SPL_NUMBA=0`` selects the fallbacks (see :mod:`spl._accel`).  Every
``*_nb`` / ``*_np`` pair performs the same floating-point operations in the
same order, so both paths make identical decisions; ``benchmarks/`` times
them against each other.
"""

import numpy as np

from ._accel import USE_NUMBA, njit

# ---------------------------------------------------------------------------
# Simplex pricing over GUB groups
#
# Variables are laid out group-major: the options of group g occupy
# g_ptr[g]:g_ptr[g+1].  A variable's priced cost is accumulated as
# ((0 + b_0) + b_1) + ... over its usage entries, then
#     d_v = (w_v - z_g) - cost_v,   z_g = w_key - cost_key.
# ---------------------------------------------------------------------------


@njit
def _var_cost(v, uptr, ures, uval, beta):
    c = 0.0
    for p in range(uptr[v], uptr[v + 1]):
        c += beta[ures[p]] * uval[p]
    return c


@njit
def price_nb(g_ptr, w, uptr, ures, uval, uowner, group, key, basic, beta, start, want, tol, first):
    """Scan groups cyclically from ``start`` for entering candidates.

    Returns ``(var, d, next_start)``; ``var == -1`` when no reduced cost
    exceeds ``tol``.  With ``first`` set the first improving variable in scan
    order is returned (Bland); otherwise the best one among the groups
    scanned until ``want`` candidates have been seen (partial Dantzig).
    """
    n = g_ptr.shape[0] - 1
    best = -1
    best_d = tol
    found = 0
    g = start
    for _ in range(n):
        k = key[g]
        z = w[k] - _var_cost(k, uptr, ures, uval, beta)
        for v in range(g_ptr[g], g_ptr[g + 1]):
            if basic[v]:
                continue
            d = (w[v] - z) - _var_cost(v, uptr, ures, uval, beta)
            if d > tol:
                if first:
                    return v, d, g
                found += 1
                if d > best_d:
                    best_d = d
                    best = v
        g += 1
        if g == n:
            g = 0
        if found >= want:
            break
    return best, best_d, g


def reduced_costs_np(g_ptr, w, uptr, ures, uval, uowner, group, key, basic, beta):
    """All reduced costs at once; basic variables get ``-inf``."""
    nv = w.shape[0]
    cost = np.bincount(uowner, weights=beta[ures] * uval, minlength=nv)
    z = w[key] - cost[key]
    d = (w - z[group]) - cost
    d[basic[:nv]] = -np.inf
    return d


def price_np(g_ptr, w, uptr, ures, uval, uowner, group, key, basic, beta, start, want, tol, first):
    n = g_ptr.shape[0] - 1
    if n == 0:
        return -1, tol, start
    d = reduced_costs_np(g_ptr, w, uptr, ures, uval, uowner, group, key, basic, beta)
    shift = g_ptr[start]
    rolled = np.roll(d, -shift)
    hits = np.flatnonzero(rolled > tol)
    if hits.size == 0:
        return -1, tol, start
    if first:
        v = int((hits[0] + shift) % d.shape[0])
        return v, float(d[v]), int(group[v])
    # groups in scan order; stop after the group where the count reaches `want`
    hit_vars = (hits + shift) % d.shape[0]
    hit_rank = (group[hit_vars] - start) % n
    counts = np.bincount(hit_rank, minlength=n)
    stop = int(np.searchsorted(np.cumsum(counts), min(want, hits.size)))
    cand = hits[hit_rank <= stop]
    j = int(np.argmax(rolled[cand]))
    v = int((cand[j] + shift) % d.shape[0])
    if hits.size < want:
        # the scan went all the way round without filling its quota
        return v, float(d[v]), int(start)
    return v, float(d[v]), int((start + stop + 1) % n)


price = price_nb if USE_NUMBA else price_np


# ---------------------------------------------------------------------------
# Online stream with free disposal
# ---------------------------------------------------------------------------

RULE_GREEDY = 0
RULE_AVG = 1
RULE_EXP = 2
RULE_NAMES = {"greedy": RULE_GREEDY, "pd_avg": RULE_AVG, "pd_exp": RULE_EXP}


@njit
def _kept_dual(rule, buf, off, cnt, n_j, ksum, rho, exp_den):
    if cnt == 0:
        return 0.0
    if rule == 0:
        if cnt < n_j:
            return 0.0
        return buf[off + cnt - 1]
    if rule == 1:
        return ksum / n_j
    s = 0.0
    f = 1.0
    for k in range(cnt):
        s += buf[off + k] * f
        f *= rho
    return s / exp_den


@njit
def stream_nb(
    edge_ptr, edge_adv, edge_weight, demand, order, rule, alpha, fixed_beta,
    offer, buf_off,
):
    """Run impressions in ``order`` through the primal-dual outline.

    The margin of advertiser ``j`` is ``w_ij - (alpha_t * fixed_beta_j +
    (1 - alpha_t) * beta_j)`` where ``beta_j`` follows ``rule`` on the kept
    set.  ``offer[t] == 0`` skips position ``t``.  Kept sets live in
    ``buf`` sorted by non-increasing weight (ties: earlier arrival first);
    a full advertiser evicts its last entry, or drops the newcomer when it
    weighs no more than that entry.  ``buf_off`` gives each
    advertiser room for ``min(n(j), degree)`` entries.

    Returns (assigned, kept impressions, kept weights, kept counts, beta,
    z, evictions); ``assigned[i] == -1`` for unassigned or evicted.
    """
    m = demand.shape[0]
    n = edge_ptr.shape[0] - 1
    total = buf_off[m]
    buf = np.zeros(total)
    bimp = np.full(total, -1, dtype=np.int64)
    cnt = np.zeros(m, dtype=np.int64)
    ksum = np.zeros(m)
    beta = np.zeros(m)
    rho = np.empty(m)
    exp_den = np.empty(m)
    for j in range(m):
        nj = demand[j]
        rho[j] = 1.0 + 1.0 / nj
        exp_den[j] = nj * (np.exp(nj * np.log1p(1.0 / nj)) - 1.0)
    assigned = np.full(n, -1, dtype=np.int64)
    z = np.zeros(n)
    evictions = 0
    for t in range(order.shape[0]):
        i = order[t]
        if offer[t] == 0:
            continue
        a = alpha[t]
        best = -1
        best_m = 0.0
        wbest = 0.0
        for e in range(edge_ptr[i], edge_ptr[i + 1]):
            j = edge_adv[e]
            price_j = beta[j]
            if a != 0.0:
                price_j = a * fixed_beta[j] + (1.0 - a) * beta[j]
            mg = edge_weight[e] - price_j
            if mg < 0.0:
                continue
            if best == -1 or mg > best_m or (mg == best_m and j < best):
                best = j
                best_m = mg
                wbest = edge_weight[e]
        if best == -1:
            continue
        j = best
        z[i] = best_m
        off = buf_off[j]
        c = cnt[j]
        if c == demand[j]:
            if wbest <= buf[off + c - 1]:
                # the newcomer is itself the least valuable: dispose of it
                evictions += 1
                continue
            # evict the least valuable kept impression
            ev = bimp[off + c - 1]
            assigned[ev] = -1
            ksum[j] -= buf[off + c - 1]
            c -= 1
            evictions += 1
        # insertion point after equal weights
        pos = c
        while pos > 0 and buf[off + pos - 1] < wbest:
            buf[off + pos] = buf[off + pos - 1]
            bimp[off + pos] = bimp[off + pos - 1]
            pos -= 1
        buf[off + pos] = wbest
        bimp[off + pos] = i
        c += 1
        cnt[j] = c
        ksum[j] += wbest
        assigned[i] = j
        beta[j] = _kept_dual(rule, buf, off, c, demand[j], ksum[j], rho[j], exp_den[j])
    return assigned, bimp, buf, cnt, beta, z, evictions


# The stream is inherently sequential; without numba it runs as Python.
stream = stream_nb


# ---------------------------------------------------------------------------
# Fair allocation pointer loop
# ---------------------------------------------------------------------------

POLICY_EQUAL = 0
POLICY_PROPORTIONAL = 1
POLICY_STABLE = 2
POLICY_NAMES = {"equal": POLICY_EQUAL, "proportional": POLICY_PROPORTIONAL, "stable_matching": POLICY_STABLE}


@njit
def _share(policy, members, weights, nmem, out):
    if policy == 0:
        for k in range(nmem):
            out[k] = 1.0 / nmem
    elif policy == 1:
        s = 0.0
        for k in range(nmem):
            s += weights[k]
        for k in range(nmem):
            out[k] = weights[k] / s
    else:
        top = 0
        for k in range(1, nmem):
            if weights[k] > weights[top] or (weights[k] == weights[top] and members[k] < members[top]):
                top = k
        for k in range(nmem):
            out[k] = 0.0
        out[top] = 1.0


@njit
def fair_nb(pref_ptr, pref_edge, edge_ptr, edge_adv, edge_weight, edge_imp, demand, policy, proc_order, sat_tol):
    """Advance interest prefixes round-robin until every advertiser is satisfied.

    ``pref_edge[pref_ptr[j]:pref_ptr[j + 1]]`` lists advertiser ``j``'s edges
    by non-increasing weight.  Each pass visits advertisers in
    ``proc_order`` and advances every unsatisfied one by a single
    impression; the loop ends after a pass with no advance.

    Returns (x per edge, prefix lengths, number of advances).
    """
    m = demand.shape[0]
    ne = edge_adv.shape[0]
    x = np.zeros(ne)
    interested = np.zeros(ne, dtype=np.bool_)
    p = np.zeros(m, dtype=np.int64)
    mass = np.zeros(m)
    members = np.empty(m, dtype=np.int64)
    mweights = np.empty(m)
    medges = np.empty(m, dtype=np.int64)
    shares = np.empty(m)
    advances = 0
    progress = True
    while progress:
        progress = False
        for r in range(m):
            j = proc_order[r]
            if p[j] >= pref_ptr[j + 1] - pref_ptr[j] or mass[j] >= demand[j] - sat_tol:
                continue
            e0 = pref_edge[pref_ptr[j] + p[j]]
            p[j] += 1
            advances += 1
            progress = True
            interested[e0] = True
            i = edge_imp[e0]
            nmem = 0
            for e in range(edge_ptr[i], edge_ptr[i + 1]):
                if interested[e]:
                    members[nmem] = edge_adv[e]
                    mweights[nmem] = edge_weight[e]
                    medges[nmem] = e
                    nmem += 1
            _share(policy, members, mweights, nmem, shares)
            for k in range(nmem):
                e = medges[k]
                mass[members[k]] += shares[k] - x[e]
                x[e] = shares[k]
    return x, p, advances


# Pointer advances are sequential; without numba this runs as Python.
fair = fair_nb
