# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled round loop.  Must stay numerically identical to ``_kernel_py``."""

from libc.math cimport INFINITY
from libc.stdlib cimport malloc, free


cdef inline void _swap(double* a, Py_ssize_t i, Py_ssize_t j) noexcept nogil:
    cdef double t = a[i]
    a[i] = a[j]
    a[j] = t


cdef double _select(double* a, Py_ssize_t n, Py_ssize_t r) noexcept nogil:
    """r-th smallest (0-based) of a[0:n]; reorders a."""
    cdef Py_ssize_t lo = 0, hi = n - 1, i, j, mid
    cdef double pivot
    while hi > lo:
        mid = lo + (hi - lo) // 2
        # median of three
        if a[mid] < a[lo]:
            _swap(a, mid, lo)
        if a[hi] < a[lo]:
            _swap(a, hi, lo)
        if a[hi] < a[mid]:
            _swap(a, hi, mid)
        pivot = a[mid]
        i = lo
        j = hi
        while i <= j:
            while a[i] < pivot:
                i += 1
            while a[j] > pivot:
                j -= 1
            if i <= j:
                _swap(a, i, j)
                i += 1
                j -= 1
        if r <= j:
            hi = j
        elif r >= i:
            lo = i
        else:
            return a[r]
    return a[r]


def run_chunk(
    const double[:, :, ::1] draws,
    bint static,
    const double[::1] uniforms,
    long long round0,
    long long burn,
    int c,
    int m,
    double tau,
    double mu,
    double mu0,
    double b,
    double b0,
    int reward_mode,
    double target,
    const int[::1] proposal,
    const double[::1] fixed_delay,
    const int[::1] vote_rule,
    const int[::1] coal,
    int election,
    double rho,
    double threshold,
    double[::1] weights,
    long long[::1] state,
    double[:, ::1] facc,
    long long[:, ::1] iacc,
    double[::1] scal,
    long long[::1] viol,
    double[:, ::1] trace=None,
):
    cdef Py_ssize_t n = draws.shape[1]
    cdef Py_ssize_t count = uniforms.shape[0]
    cdef Py_ssize_t r, k, i, jprev, pi, ci
    cdef double s, q, e_c, raw, dstar, delta, v, mev, br, base, u, W, acc, steps, cth
    cdef double peak
    cdef bint have_trace = trace is not None
    cdef bint counted
    cdef double* d = <double*> malloc(n * sizeof(double))
    cdef double* buf = <double*> malloc(n * sizeof(double))
    cdef double* votes = <double*> malloc(n * sizeof(double))
    if d == NULL or buf == NULL or votes == NULL:
        free(d); free(buf); free(votes)
        raise MemoryError()
    try:
        with nogil:
            for r in range(count):
                counted = round0 + r >= burn
                if static:
                    pi = 0
                    ci = 0
                else:
                    pi = r
                    ci = r + 1
                u = uniforms[r]
                W = 0.0
                for k in range(n):
                    W += weights[k]
                if election == 0:
                    i = <Py_ssize_t>(u * n)
                    if i >= n:
                        i = n - 1
                else:
                    u = u * W
                    acc = 0.0
                    i = n - 1
                    for k in range(n):
                        acc += weights[k]
                        if u < acc:
                            i = k
                            break
                jprev = state[0]

                if jprev < 0:
                    s = 0.0
                    for k in range(n):
                        d[k] = draws[ci, i, k]
                else:
                    for k in range(n):
                        buf[k] = draws[pi, jprev, k] + draws[pi, k, i]
                    q = _select(buf, n, c - 1)
                    s = q if q > draws[pi, jprev, i] else draws[pi, jprev, i]
                    for k in range(n):
                        d[k] = draws[ci, i, k] - draws[pi, jprev, k]

                for k in range(n):
                    buf[k] = d[k]
                e_c = _select(buf, n, c - 1)
                raw = tau - s - e_c
                if raw < 0:
                    viol[0] += 1
                    dstar = 0.0
                else:
                    dstar = raw

                if proposal[i] == 0:
                    delta = 0.0
                elif proposal[i] == 1:
                    delta = dstar
                else:
                    delta = fixed_delay[i] if fixed_delay[i] < dstar else dstar

                base = delta + s
                for k in range(n):
                    if vote_rule[k] == 0:
                        votes[k] = base + d[k]
                    elif vote_rule[k] == 2:
                        votes[k] = INFINITY
                    elif coal[k] >= 0 and coal[k] == coal[i]:
                        votes[k] = 0.0
                    elif vote_rule[k] == 3:
                        votes[k] = INFINITY
                    else:
                        votes[k] = base + d[k]
                v = _select(votes, n, m - 1)

                mev = mu * base + mu0
                if v == INFINITY:
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
                        if v <= target:
                            br = peak * v / target
                        else:
                            br = b * (tau - v)
                    else:
                        br = b0 - b * v

                iacc[0, i] += 1
                if counted:
                    facc[0, i] += mev + br
                    facc[1, i] += base
                    scal[0] += base
                    steps = n / W
                    scal[1] += steps
                    for k in range(n):
                        if weights[k] < 1.0:
                            facc[2, k] += steps
                    iacc[1, i] += 1
                    if v > threshold:
                        iacc[2, i] += 1

                if election == 1:
                    if v <= threshold:
                        weights[i] = weights[i] + rho
                        if weights[i] > 1.0:
                            weights[i] = 1.0
                    else:
                        weights[i] = weights[i] - rho
                        if weights[i] < 1.0 - rho:
                            weights[i] = 1.0 - rho

                if have_trace:
                    for k in range(n):
                        buf[k] = base + d[k]
                    cth = _select(buf, n, c - 1)
                    trace[r, 0] = i
                    trace[r, 1] = jprev
                    trace[r, 2] = s
                    trace[r, 3] = dstar
                    trace[r, 4] = delta
                    trace[r, 5] = v
                    trace[r, 6] = mev + br
                    trace[r, 7] = cth
                state[0] = i
    finally:
        free(d)
        free(buf)
        free(votes)
