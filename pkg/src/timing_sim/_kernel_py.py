"""Pure-Python round loop with the same signature and arithmetic as ``_kernel``.

Every floating-point operation is performed in the same order as the
compiled loop so both backends produce bit-identical accumulators.
"""

from __future__ import annotations

import math

import numpy as np

_INF = math.inf


def _select(a: np.ndarray, r: int) -> float:
    return float(np.partition(a, r)[r])


def run_chunk(
    draws,
    static,
    uniforms,
    round0,
    burn,
    c,
    m,
    tau,
    mu,
    mu0,
    b,
    b0,
    reward_mode,
    target,
    proposal,
    fixed_delay,
    vote_rule,
    coal,
    election,
    rho,
    threshold,
    weights,
    state,
    facc,
    iacc,
    scal,
    viol,
    trace=None,
):
    n = draws.shape[1]
    vote_rule = np.asarray(vote_rule)
    coal = np.asarray(coal)
    honest = vote_rule == 0
    timeout = vote_rule == 2
    grief = vote_rule == 3
    for r in range(len(uniforms)):
        counted = round0 + r >= burn
        pi, ci = (0, 0) if static else (r, r + 1)
        prev, cur = draws[pi], draws[ci]
        u = float(uniforms[r])
        W = 0.0
        for k in range(n):
            W += float(weights[k])
        if election == 0:
            i = min(int(u * n), n - 1)
        else:
            u = u * W
            acc = 0.0
            i = n - 1
            for k in range(n):
                acc += float(weights[k])
                if u < acc:
                    i = k
                    break
        j = int(state[0])

        if j < 0:
            s = 0.0
            d = cur[i, :].copy()
        else:
            q = _select(prev[j, :] + prev[:, i], c - 1)
            l_ji = float(prev[j, i])
            s = q if q > l_ji else l_ji
            d = cur[i, :] - prev[j, :]

        e_c = _select(d, c - 1)
        raw = tau - s - e_c
        if raw < 0:
            viol[0] += 1
            dstar = 0.0
        else:
            dstar = raw

        rule = proposal[i]
        if rule == 0:
            delta = 0.0
        elif rule == 1:
            delta = dstar
        else:
            fd = float(fixed_delay[i])
            delta = fd if fd < dstar else dstar

        base = delta + s
        observed = base + d
        votes = observed.copy()
        same = (coal >= 0) & (coal == coal[i]) & ~honest & ~timeout
        votes[same] = 0.0
        votes[timeout | (grief & ~same)] = _INF
        v = _select(votes, m - 1)

        mev = mu * base + mu0
        if v == _INF:
            br = 0.0
            viol[2] += 1
        else:
            if v < -1e-9 or v > tau + 1e-9:
                viol[1] += 1
            if v < 0:
                viol[3] += 1
            if reward_mode == 1:
                br = b0
            elif v >= tau:
                br = 0.0
            elif reward_mode == 2:
                peak = b * (tau - target)
                br = peak * v / target if v <= target else b * (tau - v)
            else:
                br = b0 - b * v

        iacc[0, i] += 1
        if counted:
            facc[0, i] += mev + br
            facc[1, i] += base
            scal[0] += base
            steps = n / W
            scal[1] += steps
            low = np.asarray(weights) < 1.0
            facc[2, low] += steps
            iacc[1, i] += 1
            if v > threshold:
                iacc[2, i] += 1

        if election == 1:
            if v <= threshold:
                weights[i] = min(weights[i] + rho, 1.0)
            else:
                weights[i] = max(weights[i] - rho, 1.0 - rho)

        if trace is not None:
            trace[r, :] = (i, j, s, dstar, delta, v, mev + br, _select(observed, c - 1))
        state[0] = i
