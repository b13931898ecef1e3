# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: backward induction, policy evaluation, rollouts.

Call-compatible with ``_kernels_py``.
"""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def backward_induction(P, R, bonus, double cap):
    cdef const double[:, :, :, ::1] Pv = np.ascontiguousarray(P, dtype=np.float64)
    cdef const double[:, :, ::1] Rv = np.ascontiguousarray(R, dtype=np.float64)
    cdef Py_ssize_t H = Rv.shape[0], S = Rv.shape[1], A = Rv.shape[2]
    cdef bint has_bonus = bonus is not None
    cdef const double[:, :, ::1] Bv
    if has_bonus:
        Bv = np.ascontiguousarray(bonus, dtype=np.float64)
    Q = np.empty((H, S, A))
    V = np.zeros((H + 1, S))
    greedy = np.empty((H, S), dtype=np.int64)
    cdef double[:, :, ::1] Qv = Q
    cdef double[:, ::1] Vv = V
    cdef long long[:, ::1] Gv = greedy
    cdef Py_ssize_t h, s, a, t
    cdef double acc, best
    cdef long long arg
    for h in range(H - 1, -1, -1):
        for s in range(S):
            best = 0.0
            arg = -1
            for a in range(A):
                acc = 0.0
                for t in range(S):
                    acc += Pv[h, s, a, t] * Vv[h + 1, t]
                acc = Rv[h, s, a] + acc
                if has_bonus:
                    acc = acc + Bv[h, s, a]
                if acc > cap:
                    acc = cap
                Qv[h, s, a] = acc
                if arg < 0 or acc > best:
                    best = acc
                    arg = a
            Gv[h, s] = arg
            Vv[h, s] = best
    return Q, V, greedy


def evaluate_policy(P, R, pi):
    cdef const double[:, :, :, ::1] Pv = np.ascontiguousarray(P, dtype=np.float64)
    cdef const double[:, :, ::1] Rv = np.ascontiguousarray(R, dtype=np.float64)
    cdef const double[:, :, ::1] piv = np.ascontiguousarray(pi, dtype=np.float64)
    cdef Py_ssize_t H = Rv.shape[0], S = Rv.shape[1], A = Rv.shape[2]
    Q = np.empty((H, S, A))
    V = np.zeros((H + 1, S))
    cdef double[:, :, ::1] Qv = Q
    cdef double[:, ::1] Vv = V
    cdef Py_ssize_t h, s, a, t
    cdef double acc, v
    for h in range(H - 1, -1, -1):
        for s in range(S):
            v = 0.0
            for a in range(A):
                acc = 0.0
                for t in range(S):
                    acc += Pv[h, s, a, t] * Vv[h + 1, t]
                acc = Rv[h, s, a] + acc
                Qv[h, s, a] = acc
                v += acc * piv[h, s, a]
            Vv[h, s] = v
    return Q, V


cdef inline Py_ssize_t _categorical(const double[:] p, double u) nogil:
    cdef Py_ssize_t i, n = p.shape[0], last = n - 1
    cdef double c = 0.0
    cdef bint seen = False
    for i in range(n):
        c = c + p[i]
        if p[i] > 0:
            last = i
            seen = True
        if u < c:
            return i
    return last if seen else n - 1


def rollout(P, pi, s1, u):
    cdef const double[:, :, :, ::1] Pv = np.ascontiguousarray(P, dtype=np.float64)
    cdef const double[:, :, ::1] piv = np.ascontiguousarray(pi, dtype=np.float64)
    cdef const double[:, ::1] uv = np.ascontiguousarray(u, dtype=np.float64)
    cdef Py_ssize_t n = uv.shape[0], steps = uv.shape[1] // 2
    states = np.empty((n, steps + 1), dtype=np.int64)
    actions = np.empty((n, steps), dtype=np.int64)
    cdef long long[:, ::1] sv = states
    cdef long long[:, ::1] av = actions
    cdef Py_ssize_t r, h, s, a
    cdef long long start = s1
    with nogil:
        for r in range(n):
            s = start
            sv[r, 0] = s
            for h in range(steps):
                a = _categorical(piv[h, s], uv[r, 2 * h])
                av[r, h] = a
                s = _categorical(Pv[h, s, a], uv[r, 2 * h + 1])
                sv[r, h + 1] = s
    return states, actions
