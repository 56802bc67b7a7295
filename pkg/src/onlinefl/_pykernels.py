"""Pure-Python versions of the compiled loops in ``_kernels.pyx``.

Same signatures, same floating-point operations in the same order, so the two
produce bit-identical results from identical inputs.
"""

import math

INFINITY = math.inf


def _prob(d, q, f, piecewise):
    if d == INFINITY:
        return 1.0
    x = d / f
    if piecewise:
        if x <= 1.0:
            return q * x
        return 1.0
    x = q * x
    if x < 1.0:
        return x
    return 1.0


def rofl_matrix(D, seq, u, q, piecewise, f, dist_out, prob_out, opened_out, assign_out):
    L = D.shape[0]
    rows = D.tolist()
    seq = seq.tolist()
    u = u.tolist()
    best = [INFINITY] * L
    n_open = 0
    total = 0.0
    dists, probs, opened, assigned = [], [], [], []
    for t, loc in enumerate(seq):
        d = best[loc]
        p = _prob(d, q, f, piecewise)
        dists.append(d)
        probs.append(p)
        if u[t] < p:
            opened.append(1)
            n_open += 1
            a = 0.0
            row = rows[loc]
            for j in range(L):
                if row[j] < best[j]:
                    best[j] = row[j]
        else:
            opened.append(0)
            a = d
        assigned.append(a)
        total += a
    dist_out[:] = dists
    prob_out[:] = probs
    opened_out[:] = opened
    assign_out[:] = assigned
    return n_open, total


def rofl_hub(w, seq, u, q, piecewise, f, dist_out, prob_out, opened_out, assign_out):
    w = w.tolist()
    seq = seq.tolist()
    u = u.tolist()
    is_open = [False] * len(w)
    minw = INFINITY
    n_open = 0
    total = 0.0
    dists, probs, opened, assigned = [], [], [], []
    for t, loc in enumerate(seq):
        if is_open[loc]:
            d = 0.0
        else:
            d = w[loc] + minw
        p = _prob(d, q, f, piecewise)
        dists.append(d)
        probs.append(p)
        if u[t] < p:
            opened.append(1)
            n_open += 1
            a = 0.0
            is_open[loc] = True
            if w[loc] < minw:
                minw = w[loc]
        else:
            opened.append(0)
            a = d
        assigned.append(a)
        total += a
    dist_out[:] = dists
    prob_out[:] = probs
    opened_out[:] = opened
    assign_out[:] = assigned
    return n_open, total


def rofl_instrumented(D, dem, loc_of, cluster_of, dstar, members, offsets, u, u_ana,
                      q, piecewise, f, T_out, size_out, dvt_out, sum_ct_out,
                      p_before_out, d_before_out):
    L = D.shape[0]
    rows = D.tolist()
    dem = dem.tolist()
    loc_of = loc_of.tolist()
    cluster_of = cluster_of.tolist()
    dstar = dstar.tolist()
    members = members.tolist()
    offsets = offsets.tolist()
    u = u.tolist()
    u_ana = u_ana.tolist()
    n = len(dem)
    C = len(offsets) - 1
    best = [INFINITY] * L
    arrived = [False] * len(cluster_of)
    stopped = [False] * C
    T = [n] * C
    size = [0] * C
    dvt = [0.0] * C
    sum_ct = [0.0] * C
    p_before = [0.0] * C
    d_before = [0.0] * C
    n_open = 0
    total = 0.0
    for t in range(n):
        i = dem[t]
        loc = loc_of[i]
        c = cluster_of[i]
        d = best[loc]
        p = _prob(d, q, f, piecewise)
        if not stopped[c]:
            p_before[c] += p
            d_before[c] += dstar[i]
        if u[t] < p:
            if not stopped[c]:
                pw = p
                for k in range(offsets[c], offsets[c + 1]):
                    m = members[k]
                    if arrived[m] or dstar[m] > dstar[i]:
                        continue
                    pu = _prob(best[loc_of[m]], q, f, piecewise)
                    if pu < pw:
                        pw = pu
                if u_ana[t] < pw / p:
                    stopped[c] = True
                    T[c] = t
                    dvt[c] = dstar[i]
                    s = 0.0
                    for k in range(offsets[c], offsets[c + 1]):
                        m = members[k]
                        if not arrived[m]:
                            size[c] += 1
                            s += dstar[m]
                    sum_ct[c] = s
            n_open += 1
            a = 0.0
            row = rows[loc]
            for j in range(L):
                if row[j] < best[j]:
                    best[j] = row[j]
        else:
            a = d
        total += a
        arrived[i] = True
    T_out[:] = T
    size_out[:] = size
    dvt_out[:] = dvt
    sum_ct_out[:] = sum_ct
    p_before_out[:] = p_before
    d_before_out[:] = d_before
    return n_open, total
