"""Compiled Metropolis-within-Gibbs blocks.

All times are centred on the grid mean. State scalars live in a length-3
array ``st = [alpha, beta0, gamma]`` so the blocks can update them in place.
Caches kept consistent with the state: break-point columns ``B``, Poisson
weights ``w``, information ``G = B' W B`` and linear predictor ``eta``.

Break-point columns are built from the equivalent form
``B(t) = 1 + u (t - tau) + v (t - tau)^+`` whose two moment conditions are
solved in closed form; `basis.solve_breakpoint` is the reference route.
"""
import math

import numpy as np
from numba import njit

LOG_MEAN_GUARD = 700.0
LOG_2PI = math.log(2.0 * math.pi)

# acceptance ledger slots
TAU_RW, TAU_SLICE, ALPHA_BETA0, BETA_RW = 0, 1, 2, 3
N_BLOCKS = 4


@njit(cache=True)
def breakpoint_column(tc, tau, out):
    n = tc.shape[0]
    s1 = 0.0
    s2 = 0.0
    q1 = 0.0
    q2 = 0.0
    st = 0.0
    for i in range(n):
        d = tc[i] - tau
        p = d if d > 0.0 else 0.0
        s1 += d
        s2 += p
        q1 += tc[i] * d
        q2 += tc[i] * p
        st += tc[i]
    det = s1 * q2 - s2 * q1
    if abs(det) <= 1e-12 * (abs(s1) + abs(s2)) * (abs(q1) + abs(q2)) or s2 == 0.0:
        return False
    # [s1 s2; q1 q2] [u; v] = [-n; -sum(tc)]
    u = (-n * q2 + st * s2) / det
    v = (-s1 * st + n * q1) / det
    for i in range(n):
        d = tc[i] - tau
        out[i] = 1.0 + u * d + (v * d if d > 0.0 else 0.0)
    return True


@njit(cache=True)
def poisson_loglik(eta, y, logfact):
    s = 0.0
    for i in range(eta.shape[0]):
        e = eta[i]
        if abs(e) > LOG_MEAN_GUARD:
            return -np.inf
        s += y[i] * e - math.exp(e) - logfact[i]
    return s


@njit(cache=True)
def fill_weights(st, tc, logp, w):
    for i in range(tc.shape[0]):
        w[i] = math.exp(logp[i] + st[0] + st[1] * tc[i])


@njit(cache=True)
def fill_information(B, w, G):
    n, J = B.shape
    for a in range(J):
        for b in range(a, J):
            s = 0.0
            for i in range(n):
                s += w[i] * B[i, a] * B[i, b]
            G[a, b] = s
            G[b, a] = s


@njit(cache=True)
def fill_eta(st, beta, delta, B, tc, logp, eta):
    n, J = B.shape
    for i in range(n):
        e = logp[i] + st[0] + st[1] * tc[i]
        for j in range(J):
            if delta[j] == 1:
                e += beta[j] * B[i, j]
        eta[i] = e


@njit(cache=True)
def log_prior_beta(beta, delta, G, gamma, n):
    """Normal(0, gamma * n * M^-1) log-density, M the masked information."""
    J = beta.shape[0]
    idx = np.empty(J, dtype=np.int64)
    k = 0
    logdet = 0.0
    quad = 0.0
    for j in range(J):
        if delta[j] == 1:
            idx[k] = j
            k += 1
        else:
            g = G[j, j]
            if not g > 0.0:
                return -np.inf
            logdet += math.log(g)
            quad += g * beta[j] * beta[j]
    if k > 0:
        L = np.zeros((k, k))
        for a in range(k):
            for b in range(a + 1):
                s = G[idx[a], idx[b]]
                for c in range(b):
                    s -= L[a, c] * L[b, c]
                if a == b:
                    if not s > 0.0:
                        return -np.inf
                    L[a, a] = math.sqrt(s)
                else:
                    L[a, b] = s / L[b, b]
        for a in range(k):
            logdet += 2.0 * math.log(L[a, a])
            # (L' beta_active)_a
            s = 0.0
            for b in range(a, k):
                s += L[b, a] * beta[idx[b]]
            quad += s * s
    scale = gamma * n
    return -0.5 * J * (LOG_2PI + math.log(scale)) + 0.5 * logdet - 0.5 * quad / scale


@njit(cache=True)
def masked_quadratic(beta, delta, G):
    J = beta.shape[0]
    q = 0.0
    for a in range(J):
        for b in range(J):
            if a == b or (delta[a] == 1 and delta[b] == 1):
                q += beta[a] * G[a, b] * beta[b]
    return q


@njit(cache=True)
def refresh(st, beta, tau, delta, tc, logp, B, w, G, eta):
    """Rebuild every cache from the state; False if a column is singular."""
    col = np.empty(tc.shape[0])
    for j in range(tau.shape[0]):
        if not breakpoint_column(tc, tau[j], col):
            return False
        B[:, j] = col
    fill_weights(st, tc, logp, w)
    fill_information(B, w, G)
    fill_eta(st, beta, delta, B, tc, logp, eta)
    return True


@njit(cache=True)
def log_target(st, beta, delta, G, eta, y, logfact, logpm, use_lik, n):
    k = 0
    for j in range(delta.shape[0]):
        k += delta[j]
    lp = log_prior_beta(beta, delta, G, st[2], n) + logpm[k]
    g = st[2]
    lp += 0.5 * math.log(0.5) - math.lgamma(0.5) - 1.5 * math.log(g) - 0.5 / g
    if use_lik:
        lp += poisson_loglik(eta, y, logfact)
    return lp


@njit(cache=True)
def gamma_block(st, beta, delta, G, n, std_gamma_draw):
    """Exact draw from InvGamma((1 + J*)/2, (1 + beta' Sigma^-1 beta)/2)."""
    rate = 0.5 * (1.0 + masked_quadratic(beta, delta, G) / n)
    st[2] = rate / std_gamma_draw


@njit(cache=True)
def delta_block(st, beta, delta, B, G, eta, y, logfact, logpm, use_lik, n, u):
    """Gibbs update of each indicator from its two-point full conditional."""
    N, J = B.shape
    eta_alt = np.empty(N)
    k = 0
    for j in range(J):
        k += delta[j]
    for j in range(J):
        cur = delta[j]
        sign = 1.0 - 2.0 * cur
        for i in range(N):
            eta_alt[i] = eta[i] + sign * beta[j] * B[i, j]
        lp_cur = log_prior_beta(beta, delta, G, st[2], n) + logpm[k]
        delta[j] = 1 - cur
        k_alt = k + (1 - 2 * cur)
        lp_alt = log_prior_beta(beta, delta, G, st[2], n) + logpm[k_alt]
        if use_lik:
            lp_cur += poisson_loglik(eta, y, logfact)
            lp_alt += poisson_loglik(eta_alt, y, logfact)
        # P(switch) = 1 / (1 + exp(lp_cur - lp_alt))
        diff = lp_cur - lp_alt
        if diff > 700.0:
            p_switch = 0.0
        elif np.isinf(lp_alt) and lp_alt < 0:
            p_switch = 0.0
        else:
            p_switch = 1.0 / (1.0 + math.exp(diff))
        if u[j] < p_switch:
            k = k_alt
            for i in range(N):
                eta[i] = eta_alt[i]
        else:
            delta[j] = cur


@njit(cache=True)
def _try_tau(j, prop, st, beta, tau, delta, B, w, G, eta, tc, y, logfact,
             use_lik, n, lp_cur, u_accept, col, Gcol, eta_new):
    """Metropolis test for moving tau_j to `prop`; returns (accepted, new lp)."""
    N, J = B.shape
    if not breakpoint_column(tc, prop, col):
        return False, lp_cur
    for b in range(J):
        if b == j:
            continue
        s = 0.0
        for i in range(N):
            s += w[i] * col[i] * B[i, b]
        Gcol[b] = s
    s = 0.0
    for i in range(N):
        s += w[i] * col[i] * col[i]
    Gcol[j] = s
    old_row = G[j].copy()
    for b in range(J):
        G[j, b] = Gcol[b]
        G[b, j] = Gcol[b]
    lp_new = log_prior_beta(beta, delta, G, st[2], n)
    if use_lik:
        if delta[j] == 1:
            for i in range(N):
                eta_new[i] = eta[i] + beta[j] * (col[i] - B[i, j])
            lp_new += poisson_loglik(eta_new, y, logfact)
        else:
            lp_new += poisson_loglik(eta, y, logfact)
    if math.log(u_accept) < lp_new - lp_cur:
        tau[j] = prop
        for i in range(N):
            B[i, j] = col[i]
        if use_lik and delta[j] == 1:
            for i in range(N):
                eta[i] = eta_new[i]
        return True, lp_new
    for b in range(J):
        G[j, b] = old_row[b]
        G[b, j] = old_row[b]
    return False, lp_cur


@njit(cache=True)
def _partial_lp(st, beta, delta, G, eta, y, logfact, use_lik, n):
    lp = log_prior_beta(beta, delta, G, st[2], n)
    if use_lik:
        lp += poisson_loglik(eta, y, logfact)
    return lp


@njit(cache=True)
def tau_block(st, beta, tau, delta, B, w, G, eta, tc, y, logfact, use_lik, n,
              t_first, t_last, gap, log_scale, gain, z, u_rw, u_pos, u_slice,
              acc, prop_count):
    """Random-walk then interval-uniform Metropolis moves for each tau_j.

    Moves that leave Omega are rejected outright. The interval-uniform
    proposal draws from the open slice of Omega left by the neighbours;
    it is symmetric because the slice does not depend on tau_j itself.
    """
    N, J = B.shape
    col = np.empty(N)
    Gcol = np.empty(J)
    eta_new = np.empty(N)
    lp = _partial_lp(st, beta, delta, G, eta, y, logfact, use_lik, n)
    for j in range(J):
        lo = (tau[j - 1] if j > 0 else t_first) + gap
        hi = (tau[j + 1] if j < J - 1 else t_last) - gap

        prop = tau[j] + math.exp(log_scale[j]) * z[j]
        ok = False
        if lo < prop < hi:
            ok, lp = _try_tau(j, prop, st, beta, tau, delta, B, w, G, eta, tc,
                              y, logfact, use_lik, n, lp, u_rw[j], col, Gcol, eta_new)
        acc[TAU_RW] += ok
        prop_count[TAU_RW] += 1
        if gain > 0.0:
            log_scale[j] += gain * ((1.0 if ok else 0.0) - 0.3)

        prop = lo + (hi - lo) * u_pos[j]
        ok = False
        if lo < prop < hi:
            ok, lp = _try_tau(j, prop, st, beta, tau, delta, B, w, G, eta, tc,
                              y, logfact, use_lik, n, lp, u_slice[j], col, Gcol, eta_new)
        acc[TAU_SLICE] += ok
        prop_count[TAU_SLICE] += 1


@njit(cache=True)
def alpha_beta0_block(st, beta, delta, B, w, G, eta, tc, logp, y, logfact,
                      use_lik, n, base_scale, log_scale, gain, z, u, acc, prop_count):
    """Joint random-walk Metropolis on (alpha, beta0).

    The beta-prior ratio enters because the weights, hence G, move with them.
    """
    N, J = B.shape
    lp_cur = _partial_lp(st, beta, delta, G, eta, y, logfact, use_lik, n)
    mult = math.exp(log_scale[0])
    old_a, old_b0 = st[0], st[1]
    da = mult * base_scale[0] * z[0]
    db = mult * base_scale[1] * z[1]
    st[0] = old_a + da
    st[1] = old_b0 + db
    w_old = w.copy()
    G_old = G.copy()
    eta_old = eta.copy()
    fill_weights(st, tc, logp, w)
    fill_information(B, w, G)
    for i in range(N):
        eta[i] = eta_old[i] + da + db * tc[i]
    lp_new = _partial_lp(st, beta, delta, G, eta, y, logfact, use_lik, n)
    ok = math.log(u) < lp_new - lp_cur
    if not ok:
        st[0] = old_a
        st[1] = old_b0
        w[:] = w_old
        G[:, :] = G_old
        eta[:] = eta_old
    acc[ALPHA_BETA0] += ok
    prop_count[ALPHA_BETA0] += 1
    if gain > 0.0:
        log_scale[0] += gain * ((1.0 if ok else 0.0) - 0.3)


@njit(cache=True)
def beta_block(st, beta, delta, B, G, eta, y, logfact, use_lik, n,
               log_scale, gain, z, u, acc, prop_count):
    """Inactive beta_j: exact pseudoprior draw. Active beta_j: random walk."""
    N, J = B.shape
    eta_new = np.empty(N)
    for j in range(J):
        if delta[j] == 0:
            beta[j] = z[j] * math.sqrt(st[2] * n / G[j, j])
            continue
        lp_cur = _partial_lp(st, beta, delta, G, eta, y, logfact, use_lik, n)
        old = beta[j]
        step = math.exp(log_scale[j]) * z[J + j]
        beta[j] = old + step
        for i in range(N):
            eta_new[i] = eta[i] + step * B[i, j]
        lp_new = log_prior_beta(beta, delta, G, st[2], n)
        if use_lik:
            lp_new += poisson_loglik(eta_new, y, logfact)
        ok = math.log(u[j]) < lp_new - lp_cur
        if ok:
            for i in range(N):
                eta[i] = eta_new[i]
        else:
            beta[j] = old
        acc[BETA_RW] += ok
        prop_count[BETA_RW] += 1
        if gain > 0.0:
            log_scale[j] += gain * ((1.0 if ok else 0.0) - 0.3)


# random numbers consumed per sweep, laid out per block
def n_uniforms(J):
    return J + 3 * J + 1 + J


def n_normals(J):
    return J + 2 + 2 * J


@njit(cache=True)
def run_iterations(it0, st, beta, tau, delta, B, w, G, eta,
                   tc, logp, y, logfact, logpm, use_lik, update_ab, n,
                   t_first, t_last, gap,
                   base_scale, ls_tau, ls_ab, ls_beta,
                   adapt_window, burn_in, thin,
                   U, Z, GS,
                   out_scal, out_beta, out_tau, out_delta, out_iter,
                   acc, prop_count):
    """Run ``U.shape[0]`` sweeps starting at global iteration `it0`.

    Sweep order: gamma, delta, tau, (alpha, beta0), beta. Proposal scales
    adapt by Robbins-Monro only while ``it < adapt_window``. Post burn-in
    acceptance counts go to `acc` / `prop_count`; every `thin`-th post
    burn-in state goes to the ``out_*`` arrays.
    """
    K = U.shape[0]
    J = beta.shape[0]
    acc_tmp = np.zeros(N_BLOCKS, dtype=np.int64)
    prop_tmp = np.zeros(N_BLOCKS, dtype=np.int64)
    for k in range(K):
        it = it0 + k
        gain = 1.0 / (it + 1.0) ** 0.6 if it < adapt_window else 0.0
        acc_tmp[:] = 0
        prop_tmp[:] = 0
        u = U[k]
        z = Z[k]

        gamma_block(st, beta, delta, G, n, GS[k])
        delta_block(st, beta, delta, B, G, eta, y, logfact, logpm, use_lik, n, u[0:J])
        tau_block(st, beta, tau, delta, B, w, G, eta, tc, y, logfact, use_lik, n,
                  t_first, t_last, gap, ls_tau, gain, z[0:J],
                  u[J:2 * J], u[2 * J:3 * J], u[3 * J:4 * J], acc_tmp, prop_tmp)
        if update_ab:
            alpha_beta0_block(st, beta, delta, B, w, G, eta, tc, logp, y, logfact,
                              use_lik, n, base_scale, ls_ab, gain, z[J:J + 2],
                              u[4 * J], acc_tmp, prop_tmp)
        beta_block(st, beta, delta, B, G, eta, y, logfact, use_lik, n,
                   ls_beta, gain, z[J + 2:3 * J + 2], u[4 * J + 1:5 * J + 1],
                   acc_tmp, prop_tmp)

        if it >= burn_in:
            for b in range(N_BLOCKS):
                acc[b] += acc_tmp[b]
                prop_count[b] += prop_tmp[b]
            if (it - burn_in) % thin == 0:
                d = (it - burn_in) // thin
                out_scal[d, 0] = st[0]
                out_scal[d, 1] = st[1]
                out_scal[d, 2] = st[2]
                out_iter[d] = it
                for j in range(J):
                    out_beta[d, j] = beta[j]
                    out_tau[d, j] = tau[j]
                    out_delta[d, j] = delta[j]
