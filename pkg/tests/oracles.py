"""Reference computations written independently of the package code paths.

None of these import from cdmbd; they use plain loops, simulation, finite
differences or alternative closed forms so that a shared bug cannot hide.
"""
import math

import numpy as np


def spectral_radius_poly(M):
    """Largest root modulus of the characteristic polynomial."""
    M = np.asarray(M, dtype=float)
    return float(max(abs(r) for r in np.roots(np.poly(M))))


def stationary_mean_neumann(A, C, d, b, n_terms=5000):
    """C (sum_k A^k) b + d by truncated power series."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).reshape(-1)
    x = np.zeros_like(b)
    term = b.copy()
    for _ in range(n_terms):
        x = x + term
        term = A @ term
        if np.max(np.abs(term)) < 1e-300:
            break
    return np.asarray(C, dtype=float).reshape(-1, b.size) @ x + np.asarray(d, dtype=float).reshape(-1)


def simulate_blanket(A, C, d, b, n_steps, noise, rng, burn=2000):
    """Noisy recursion x_t = A x_{t-1} + b + eta_t, y_t = C x_t + d.

    Returns the emitted series after burn-in.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    C = np.asarray(C, dtype=float).reshape(-1, A.shape[0])
    k = A.shape[0]
    x = np.zeros(k)
    out = np.empty((n_steps, C.shape[0]))
    eta = noise * rng.normal(size=(n_steps + burn, k))
    for t in range(n_steps + burn):
        x = A @ x + b + eta[t]
        if t >= burn:
            out[t - burn] = C @ x + d
    return out


def phi_of_A(A, C, d, b, g):
    """g . stationary mean, by direct linear solve (no package code)."""
    A = np.atleast_2d(A)
    x = np.linalg.solve(np.eye(A.shape[0]) - A, b)
    return float(np.asarray(g) @ (np.asarray(C).reshape(-1, A.shape[0]) @ x + d))


def central_difference(A, C, d, b, g, dA, h=1e-6):
    return (phi_of_A(A + h * dA, C, d, b, g) - phi_of_A(A - h * dA, C, d, b, g)) / (2 * h)


def kl_full_cov(mu1, S1, mu2, S2):
    """KL between full-covariance Gaussians via trace and log-determinants."""
    mu1, mu2 = np.asarray(mu1, float), np.asarray(mu2, float)
    S1, S2 = np.asarray(S1, float), np.asarray(S2, float)
    k = mu1.size
    S2inv = np.linalg.inv(S2)
    diff = mu2 - mu1
    _, ld1 = np.linalg.slogdet(S1)
    _, ld2 = np.linalg.slogdet(S2)
    return 0.5 * (np.trace(S2inv @ S1) + diff @ S2inv @ diff - k + ld2 - ld1)


def kl_same_mean_closed_form(d, ratio):
    """(d/2)[(s1/s2)^2 - 1 - ln (s1/s2)^2]."""
    r2 = ratio * ratio
    return 0.5 * d * (r2 - 1.0 - math.log(r2))


def hinge(tau, eps, w, phi):
    return w * max(0.0, abs(phi - tau) - eps)


def brute_violations(reqs, node_means, members):
    """Violations of the mean of `members`, one requirement at a time."""
    out = []
    for (ch, tau, eps, w) in reqs:
        vals = [node_means[m][ch] for m in members]
        out.append(hinge(tau, eps, w, sum(vals) / len(vals)))
    return out


def brute_membership_cost(reqs, lam, node_means, members, i):
    """Cost of i belonging to the blanket, by explicit set edits."""
    members = sorted(members)
    if i in members:
        with_i, without_i = members, [m for m in members if m != i]
    else:
        with_i, without_i = members + [i], members
    if not without_i:
        return 0.0
    a = brute_violations(reqs, node_means, with_i)
    b = brute_violations(reqs, node_means, without_i)
    return sum(l * (x - y) for l, x, y in zip(lam, a, b))


def brute_assign(z_means, raw_means, labels, centroids_z, sigma, reqs, lam):
    """Node-by-node argmax of the penalized score, ties S < B < Z."""
    labels = list(labels)
    members = [i for i, l in enumerate(labels) if l == 1]
    lam_l1 = sum(lam)
    out = []
    for i in range(len(labels)):
        cost = brute_membership_cost(reqs, lam, raw_means, members, i) if members and any(lam) else 0.0
        best, best_role = None, None
        for role in (0, 1, 2):
            d2 = sum((z_means[i][c] - centroids_z[role][c]) ** 2 for c in range(len(z_means[i])))
            s = -d2 / (2 * sigma ** 2)
            if role == 1:
                s -= lam_l1 * max(0.0, cost)
            if best is None or s > best:
                best, best_role = s, role
        out.append(best_role)
    return out


def normalize(Y):
    """Per-channel z-scores over all T*N samples; returns node means and pooled std."""
    T, N, D = Y.shape
    flat = Y.reshape(-1, D)
    mean = flat.mean(axis=0)
    sd = flat.std(axis=0)
    sd[sd <= 0] = 1.0
    Z = (Y - mean) / sd
    var_within = np.mean([[Z[:, i, c].var() for c in range(D)] for i in range(N)])
    return Z.mean(axis=0), Y.mean(axis=0), max(math.sqrt(var_within), 1e-3)


def data_score(z_means, labels):
    """Mean -||z_i - mu||^2/2 over nodes, centroids from plain loops (sigma = 1)."""
    labels = list(labels)
    tot = 0.0
    for i, l in enumerate(labels):
        members = [j for j, m in enumerate(labels) if m == l]
        mu = np.mean([z_means[j] for j in members], axis=0)
        tot += float(np.sum((z_means[i] - mu) ** 2))
    return -tot / (2.0 * len(labels))
