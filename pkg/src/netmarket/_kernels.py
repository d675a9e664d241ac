"""Compiled inner loops for the min-cost flow solver."""

import heapq

import numpy as np
from numba import njit

OK = 0
DISCONNECTED = 1


@njit(inline="always")
def _hpush(hk, hv, size, key, val):
    i = size
    while i > 0:
        p = (i - 1) >> 1
        if hk[p] < key or (hk[p] == key and hv[p] <= val):
            break
        hk[i] = hk[p]
        hv[i] = hv[p]
        i = p
    hk[i] = key
    hv[i] = val
    return size + 1


@njit(inline="always")
def _hpop(hk, hv, size):
    size -= 1
    key = hk[size]
    val = hv[size]
    i = 0
    while True:
        c = 2 * i + 1
        if c >= size:
            break
        if c + 1 < size and (hk[c + 1] < hk[c] or (hk[c + 1] == hk[c] and hv[c + 1] < hv[c])):
            c += 1
        if key < hk[c] or (key == hk[c] and val <= hv[c]):
            break
        hk[i] = hk[c]
        hv[i] = hv[c]
        i = c
    hk[i] = key
    hv[i] = val
    return size

@njit(cache=True, nogil=True)
def ssp(n, tail, head, cost, out_ptr, out_arc, in_ptr, in_arc,
        excess, eps_flow, eps_cost, eps_done):
    """Successive shortest paths for uncapacitated transshipment.

    Works in phases. Each phase runs one Dijkstra on reduced costs seeded
    with every node that still has excess, stopping once the settled deficit
    nodes could absorb all remaining excess. Settled nodes have their
    potential moved by ``dist - reach``, which keeps every residual reduced
    cost nonnegative and makes every search-tree arc tight. Flow is then
    pushed along the tree path from each collected sink back to its root,
    and afterwards by depth-first augmentation over tight residual arcs
    until no surplus node can reach a deficit through them.

    Residual arc keys: ``a`` for arc ``a`` forward, ``m + a`` for its
    reverse. Equal-distance ties keep the smaller key; zero reduced-cost
    relaxations skip the heap.

    ``excess`` is modified in place. Returns ``(flow, potential, status,
    node)``; ``node`` is a stranded source when ``status`` is DISCONNECTED.
    """
    m = tail.shape[0]
    flow = np.zeros(m)
    pi = np.zeros(n)
    dist = np.empty(n)
    seen = np.zeros(n, np.int64)
    done = np.zeros(n, np.int64)
    pred = np.full(n, -1, np.int64)
    root = np.full(n, -1, np.int64)
    settled = np.empty(n, np.int64)
    sinks = np.empty(n, np.int64)
    supply = 0.0
    pnode = np.empty(n, np.int64)
    pkey = np.empty(n, np.int64)
    onst = np.zeros(n, np.int64)
    dead = np.zeros(n, np.int64)
    cstamp = np.zeros(n, np.int64)
    cur = np.zeros(n, np.int64)
    fifo = np.empty(n, np.int64)
    hk = np.empty(2 * m + n)
    hv = np.empty(2 * m + n, np.int64)
    deficit = 0.0
    for v in range(n):
        if excess[v] < 0.0:
            deficit -= excess[v]
        else:
            supply += excess[v]
    it = 0
    while supply > eps_done and deficit > eps_done:
        it += 1
        hs = 0
        for v in range(n):
            if excess[v] > eps_flow:
                seen[v] = it
                dist[v] = 0.0
                pred[v] = -1
                root[v] = v
                hs = _hpush(hk, hv, hs, 0.0, v)
        nsettled = 0
        nsinks = 0
        found = 0.0
        qh = 0
        qt = 0
        while qh < qt or hs > 0:
            if qh < qt:
                u = fifo[qh]
                qh += 1
                d = dist[u]
            else:
                d = hk[0]
                u = hv[0]
                hs = _hpop(hk, hv, hs)
            if done[u] == it:
                continue
            done[u] = it
            settled[nsettled] = u
            nsettled += 1
            if excess[u] < -eps_flow:
                sinks[nsinks] = u
                nsinks += 1
                found -= excess[u]
                if found >= supply - eps_flow:
                    break
            pu = pi[u]
            ru = root[u]
            for k in range(out_ptr[u], out_ptr[u + 1]):
                a = out_arc[k]
                v = head[a]
                if done[v] == it:
                    continue
                rc = cost[a] + pu - pi[v]
                if rc < eps_cost:
                    rc = 0.0
                nd = d + rc
                if seen[v] != it or nd < dist[v]:
                    seen[v] = it
                    dist[v] = nd
                    pred[v] = a
                    root[v] = ru
                    if rc == 0.0:
                        fifo[qt] = v
                        qt += 1
                    else:
                        hs = _hpush(hk, hv, hs, nd, v)
                elif nd == dist[v] and a < pred[v]:
                    pred[v] = a
                    root[v] = ru
            for k in range(in_ptr[u], in_ptr[u + 1]):
                a = in_arc[k]
                if flow[a] <= 0.0:
                    continue
                v = tail[a]
                if done[v] == it:
                    continue
                rc = pu - pi[v] - cost[a]
                if rc < eps_cost:
                    rc = 0.0
                nd = d + rc
                key = m + a
                if seen[v] != it or nd < dist[v]:
                    seen[v] = it
                    dist[v] = nd
                    pred[v] = key
                    root[v] = ru
                    if rc == 0.0:
                        fifo[qt] = v
                        qt += 1
                    else:
                        hs = _hpush(hk, hv, hs, nd, v)
                elif nd == dist[v] and key < pred[v]:
                    pred[v] = key
                    root[v] = ru
        if nsinks == 0:
            for v in range(n):
                if excess[v] > eps_flow:
                    return flow, pi, DISCONNECTED, v
            return flow, pi, OK, -1
        reach = dist[sinks[nsinks - 1]]
        for i in range(nsettled):
            v = settled[i]
            pi[v] += dist[v] - reach
        for i in range(nsinks):
            t = sinks[i]
            s = root[t]
            delta = min(excess[s], -excess[t])
            if delta <= eps_flow:
                continue
            v = t
            while v != s:
                key = pred[v]
                if key >= m:
                    a = key - m
                    if flow[a] < delta:
                        delta = flow[a]
                    v = head[a]
                else:
                    v = tail[key]
            if delta <= 0.0:
                continue
            v = t
            while v != s:
                key = pred[v]
                if key >= m:
                    a = key - m
                    flow[a] -= delta
                    if flow[a] <= eps_flow:
                        flow[a] = 0.0
                    v = head[a]
                else:
                    flow[key] += delta
                    v = tail[key]
            excess[s] -= delta
            excess[t] += delta
            deficit -= delta
            supply -= delta

        # saturate the tight residual subgraph
        for s0 in range(n):
            if excess[s0] <= eps_flow:
                continue
            while excess[s0] > eps_flow:
                depth = 0
                pnode[0] = s0
                onst[s0] = it
                if cstamp[s0] != it:
                    cstamp[s0] = it
                    cur[s0] = 0
                t = -1
                while depth >= 0:
                    u = pnode[depth]
                    if depth > 0 and excess[u] < -eps_flow:
                        t = u
                        break
                    no = out_ptr[u + 1] - out_ptr[u]
                    deg = no + in_ptr[u + 1] - in_ptr[u]
                    adv = False
                    while cur[u] < deg:
                        j = cur[u]
                        if j < no:
                            a = out_arc[out_ptr[u] + j]
                            v = head[a]
                            ok = cost[a] + pi[u] - pi[v] <= eps_cost
                            key = a
                        else:
                            a = in_arc[in_ptr[u] + j - no]
                            v = tail[a]
                            ok = flow[a] > 0.0 and pi[u] - pi[v] - cost[a] <= eps_cost
                            key = m + a
                        if ok and dead[v] != it and onst[v] != it:
                            if cstamp[v] != it:
                                cstamp[v] = it
                                cur[v] = 0
                            depth += 1
                            pnode[depth] = v
                            pkey[depth] = key
                            onst[v] = it
                            adv = True
                            break
                        cur[u] += 1
                    if not adv:
                        dead[u] = it
                        onst[u] = 0
                        depth -= 1
                        if depth >= 0:
                            cur[pnode[depth]] += 1
                if t < 0:
                    break
                delta = min(excess[s0], -excess[t])
                for i in range(1, depth + 1):
                    key = pkey[i]
                    if key >= m and flow[key - m] < delta:
                        delta = flow[key - m]
                for i in range(1, depth + 1):
                    key = pkey[i]
                    if key >= m:
                        a = key - m
                        flow[a] -= delta
                        if flow[a] <= eps_flow:
                            flow[a] = 0.0
                    else:
                        flow[key] += delta
                for i in range(depth + 1):
                    onst[pnode[i]] = 0
                excess[s0] -= delta
                excess[t] += delta
                deficit -= delta
                supply -= delta
    return flow, pi, OK, -1


@njit(cache=True, nogil=True)
def seeded_dijkstra(n, head, cost, out_ptr, out_arc, seeds, labels):
    """Plain multi-source Dijkstra distances: ``min_s labels[s] + d(seeds[s], v)``."""
    dist = np.full(n, np.inf)
    done = np.zeros(n, np.bool_)
    heap = [(0.0, np.int64(0))]
    heap.pop()
    for i in range(seeds.shape[0]):
        v = seeds[i]
        if labels[i] < dist[v]:
            dist[v] = labels[i]
            heapq.heappush(heap, (labels[i], v))
    while len(heap) > 0:
        d, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        for k in range(out_ptr[u], out_ptr[u + 1]):
            a = out_arc[k]
            v = head[a]
            nd = d + cost[a]
            if nd < dist[v]:
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return dist
