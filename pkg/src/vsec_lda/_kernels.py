"""Compiled inner loops for the collapsed Gibbs sampler.

Random numbers are drawn outside (one uniform per token) so the chain is a
pure function of the numpy Generator stream and checkpoints can store it.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def primary_logweights(out, m_dk, m_kc_col, m_k, n_dk, alpha, beta, C, eps):
    """Log of the unnormalised primary-token conditional, counts excluding the token.

    ``out[k] = log(M_dk + a) + log(M_kc + b) - log(M_k + C b)
    + N_dk * log((M_dk + 1) / max(M_dk, eps))``
    """
    K = out.shape[0]
    for k in range(K):
        lw = np.log(m_dk[k] + alpha) + np.log(m_kc_col[k] + beta) - np.log(m_k[k] + C * beta)
        if n_dk[k] > 0:
            base = m_dk[k] if m_dk[k] > 0 else eps
            lw += n_dk[k] * (np.log(m_dk[k] + 1.0) - np.log(base))
        out[k] = lw


@njit(cache=True)
def conditioned_logweights(out, m_dk, m_d, n_kt_col, n_k, gamma, T, eps):
    K = out.shape[0]
    for k in range(K):
        base = m_dk[k] if m_dk[k] > 0 else eps
        out[k] = np.log(base) - np.log(m_d) + np.log(n_kt_col[k] + gamma) - np.log(n_k[k] + T * gamma)


@njit(cache=True)
def _draw(lw, u):
    K = lw.shape[0]
    mx = lw[0]
    for k in range(1, K):
        if lw[k] > mx:
            mx = lw[k]
    total = 0.0
    for k in range(K):
        lw[k] = np.exp(lw[k] - mx)
        total += lw[k]
    target = u * total
    acc = 0.0
    for k in range(K):
        acc += lw[k]
        if target < acc:
            return k
    return K - 1


@njit(cache=True)
def primary_probs(out, m_dk, m_kc_col, m_k, n_dk, alpha, beta, Cbeta, eps):
    """Same distribution as ``primary_logweights``, unnormalised, linear domain.

    Only topics with conditioned counts need the power term; it is scaled by
    its maximum so large exponents cannot overflow.
    """
    K = out.shape[0]
    top = 0.0
    for k in range(K):
        if n_dk[k] > 0:
            base = m_dk[k] if m_dk[k] > 0 else eps
            out[k] = n_dk[k] * (np.log(m_dk[k] + 1.0) - np.log(base))
            if out[k] > top:
                top = out[k]
        else:
            out[k] = 0.0
    scale = np.exp(-top)
    for k in range(K):
        w = (m_dk[k] + alpha) * (m_kc_col[k] + beta) / (m_k[k] + Cbeta)
        if n_dk[k] > 0:
            out[k] = w * np.exp(out[k] - top)
        else:
            out[k] = w * scale


@njit(cache=True)
def _pick(w, u):
    K = w.shape[0]
    total = 0.0
    for k in range(K):
        total += w[k]
    target = u * total
    acc = 0.0
    for k in range(K):
        acc += w[k]
        if target < acc:
            return k
    return K - 1


@njit(cache=True)
def sweep(
    ptr_p, wp, z, ptr_c, wc, y,
    M_dk, N_dk, M_kc, N_kt, M_k, N_k, M_d,
    alpha, beta, gamma, eps, C, T,
    u_p, u_c,
):
    """One full sweep, documents in order, primary tokens before conditioned."""
    D, K = M_dk.shape
    w = np.empty(K)
    Cbeta = C * beta
    Tgamma = T * gamma
    for d in range(D):
        m_dk = M_dk[d]
        n_dk = N_dk[d]
        for i in range(ptr_p[d], ptr_p[d + 1]):
            c = wp[i]
            old = z[i]
            m_dk[old] -= 1
            M_kc[old, c] -= 1
            M_k[old] -= 1
            primary_probs(w, m_dk, M_kc[:, c], M_k, n_dk, alpha, beta, Cbeta, eps)
            new = _pick(w, u_p[i])
            z[i] = new
            m_dk[new] += 1
            M_kc[new, c] += 1
            M_k[new] += 1
        if M_d[d] == 0:
            continue
        for j in range(ptr_c[d], ptr_c[d + 1]):
            t = wc[j]
            old = y[j]
            n_dk[old] -= 1
            N_kt[old, t] -= 1
            N_k[old] -= 1
            for k in range(K):
                base = m_dk[k] if m_dk[k] > 0 else eps
                w[k] = base * (N_kt[k, t] + gamma) / (N_k[k] + Tgamma)
            new = _pick(w, u_c[j])
            y[j] = new
            n_dk[new] += 1
            N_kt[new, t] += 1
            N_k[new] += 1


@njit(cache=True)
def infer_sweeps(words, z, m_k, log_phi_cols, alpha, u, n_burn, acc):
    """Gibbs over one held-out document's primary tokens with topics frozen.

    ``log_phi_cols[i]`` is log phi[:, words[i]]. After burn-in, each token's
    normalised conditional is added to ``acc`` (Rao-Blackwellised counts).
    """
    n, K = log_phi_cols.shape
    lw = np.empty(K)
    n_sweeps = u.shape[0]
    for s in range(n_sweeps):
        for i in range(n):
            m_k[z[i]] -= 1
            for k in range(K):
                lw[k] = np.log(m_k[k] + alpha) + log_phi_cols[i, k]
            new = _draw(lw, u[s, i])
            if s >= n_burn:
                total = 0.0
                for k in range(K):
                    total += lw[k]
                for k in range(K):
                    acc[k] += lw[k] / total
            z[i] = new
            m_k[new] += 1


@njit(cache=True)
def mixture_sums(indptr, indices, data, theta, topic_word, row_ok, literal):
    """Σ n_dw log(θ_d · tw_w) (or Σ n_dw θ_d · tw_w) and Σ n_dw over CSR counts."""
    D, K = theta.shape
    total = 0.0
    n = 0.0
    for d in range(D):
        if not row_ok[d]:
            continue
        for e in range(indptr[d], indptr[d + 1]):
            w = indices[e]
            p = 0.0
            for k in range(K):
                p += theta[d, k] * topic_word[k, w]
            if literal:
                total += data[e] * p
            else:
                total += data[e] * np.log(p)
            n += data[e]
    return total, n
