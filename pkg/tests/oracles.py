"""Independent slow reference implementations used by the test suite.

Everything here is written from the definitions with plain loops or dense
matrices, sharing no code with the package beyond data containers.
"""

import math

import numpy as np


def dft(x, n_fft=None):
    x = np.asarray(x, dtype=np.float64)
    n = x.size if n_fft is None else n_fft
    k = np.arange(n)[:, None]
    t = np.arange(x.size)[None, :]
    return np.exp(-2j * np.pi * k * t / n) @ x


def dft_power(x, n_fft):
    X = dft(x, n_fft)
    return np.abs(X[: n_fft // 2 + 1]) ** 2


def inband_bins(n_fft, fs, lo=0.66, hi=3.0):
    return [k for k in range(n_fft // 2 + 1) if lo <= k * fs / n_fft <= hi]


def fd_grad(f, x, h=1e-4):
    """Central finite differences of scalar ``f`` at every entry of ``x``."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2 * h)
    return g


def rel_err(a, b):
    # complex inputs compare in modulus, so imaginary parts count too
    a = np.asarray(a)
    b = np.asarray(b)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-12))


# ------------------------------------------------------------------ losses


def bandwidth(x, fs, n_fft):
    P = dft_power(x, n_fft)
    inb = set(inband_bins(n_fft, fs))
    out = sum(P[k] for k in range(P.size) if k not in inb)
    return out / sum(P)


def sparsity(x, fs, n_fft, delta):
    P = dft_power(x, n_fft)
    bins = inband_bins(n_fft, fs)
    vals = [P[k] for k in bins]
    peak = max(range(len(vals)), key=lambda i: (vals[i], -i))
    far = sum(v for i, v in enumerate(vals) if abs(i - peak) >= delta)
    return far / sum(vals)


def variance(rows, fs, n_fft):
    bins = inband_bins(n_fft, fs)
    d = len(bins)
    S = [0.0] * d
    for x in rows:
        P = dft_power(x, n_fft)
        for i, k in enumerate(bins):
            S[i] += P[k]
    tot = sum(S)
    acc, c = 0.0, 0.0
    for i in range(d):
        c += S[i] / tot
        acc += (c - (i + 1) / d) ** 2
    return acc / d


def periodicity(x, fs, n_fft, n_seg):
    L = len(x) // n_seg
    bins = inband_bins(n_fft, fs)
    specs = []
    for s in range(n_seg):
        P = dft_power(x[s * L : (s + 1) * L], n_fft)
        u = [P[k] for k in bins]
        tot = sum(u)
        specs.append([v / tot for v in u])
    acc = 0.0
    for s in range(n_seg - 1):
        acc += sum((a - b) ** 2 for a, b in zip(specs[s], specs[s + 1]))
    return acc


def contrastive_pretrain(fa, fb):
    N = len(fa)
    sq = lambda u, v: float(np.sum((np.asarray(u) - np.asarray(v)) ** 2))
    pos = 0.0
    for i in range(N):
        for j in range(N):
            if i != j:
                pos += sq(fa[i], fa[j]) + sq(fb[i], fb[j])
    pos /= 2 * N * (N - 1)
    neg = 0.0
    for i in range(N):
        for j in range(N):
            neg += sq(fa[i], fb[j])
    return pos - neg / N**2, pos, -neg / N**2


def supervised_contrastive(f, fp, g, gp):
    N = len(f)
    sq = lambda u, v: float(np.sum((np.asarray(u) - np.asarray(v)) ** 2))
    pos = 0.0
    for i in range(N):
        for j in range(N):
            if i != j:
                pos += sq(f[i], g[j]) + sq(fp[i], gp[j])
    pos /= 2 * N * (N - 1)
    neg = 0.0
    for i in range(N):
        for j in range(N):
            neg += sq(f[i], gp[j]) + sq(fp[i], g[j])
    return pos - neg / N**2, pos, -neg / N**2


def band_filter_circular(x, fs, lo=0.66, hi=3.0):
    """Zero every DFT bin (both sides) whose |frequency| lies outside [lo, hi]."""
    T = len(x)
    X = dft(x)
    for k in range(T):
        f = min(k, T - k) * fs / T
        if not lo <= f <= hi:
            X[k] = 0
    n = np.arange(T)
    return np.array([np.real(np.sum(X * np.exp(2j * np.pi * np.arange(T) * m / T))) / T for m in n])


def mcc(p, g, fs):
    """-max over lags of band-limited circular cross-correlation / (T sigma_p sigma_g)."""
    T = len(p)
    pf = band_filter_circular(p, fs)
    best = -math.inf
    for lag in range(T):
        c = sum(pf[n] * g[(n - lag) % T] for n in range(T))
        best = max(best, c)
    return -best / (T * np.std(p) * np.std(g))


def pearson(p, g):
    p = np.asarray(p, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    a = p - p.mean()
    b = g - g.mean()
    return 1.0 - float(a @ b / math.sqrt((a @ a) * (b @ b)))


# ------------------------------------------------------------------- models


def _ln(v, g, b, eps=1e-5):
    mu = sum(v) / len(v)
    var = sum((e - mu) ** 2 for e in v) / len(v)
    return [(e - mu) / math.sqrt(var + eps) * gg + bb for e, gg, bb in zip(v, g, b)]


def encoder_tokens(tokens, bp, pre_ln=False, ln_bypass=False):
    """One encoder over a list of D-vectors, written token by token."""
    S = len(tokens)
    D = len(tokens[0])
    X = [np.asarray(t, dtype=np.float64) for t in tokens]
    U = [np.asarray(_ln(x, bp["ln0_g"], bp["ln0_b"])) if pre_ln else x for x in X]
    Q = [u @ bp["wq"] for u in U]
    K = [u @ bp["wk"] for u in U]
    V = [u @ bp["wv"] for u in U]
    out = []
    for i in range(S):
        scores = [float(Q[i] @ K[j]) / math.sqrt(D) for j in range(S)]
        m = max(scores)
        w = [math.exp(s - m) for s in scores]
        tot = sum(w)
        z = sum((w[j] / tot) * V[j] for j in range(S)) + X[i]
        h = z if ln_bypass else np.asarray(_ln(z, bp["ln_g"], bp["ln_b"]))
        hid = np.tanh(h @ bp["w1"] + bp["b1"])
        out.append(hid @ bp["w2"] + bp["b2"] + z)
    return out


def spatial_encoder(X, bp, **kw):
    T, N, D = X.shape
    Y = np.zeros_like(X, dtype=np.float64)
    for t in range(T):
        Y[t] = np.stack(encoder_tokens([X[t, n] for n in range(N)], bp, **kw))
    return Y


def temporal_encoder(X, bp, **kw):
    T, N, D = X.shape
    Y = np.zeros_like(X, dtype=np.float64)
    for n in range(N):
        Y[:, n] = np.stack(encoder_tokens([X[t, n] for t in range(T)], bp, **kw))
    return Y


def stformer(params, L, m, pre_ln=False):
    x = np.asarray(m, dtype=np.float64) / 127.5 - 1.0
    T, N, _ = x.shape
    X = np.zeros((T, N, params["embed.w"].shape[1]))
    for t in range(T):
        for n in range(N):
            X[t, n] = x[t, n] @ params["embed.w"] + params["embed.b"]
            X[t, n] += params["pos.spatial"][n] + params["pos.temporal"][t]
    for l in range(L):
        for kind, fn in (("spatial", spatial_encoder), ("temporal", temporal_encoder)):
            pre = f"loop{l}.{kind}."
            bp = {k[len(pre) :]: v for k, v in params.items() if k.startswith(pre)}
            X = fn(X, bp, pre_ln=pre_ln)
    return np.array([X[t].mean(axis=0) @ params["head.w"] + params["head.b"][0] for t in range(T)])


def stencoder(params, stages, S, clip):
    """Loop-based reference of the spatiotemporal encoder."""
    x = np.asarray(clip, dtype=np.float64)
    for k in range(stages):
        w = params[f"stage{k}.w"]
        b = params[f"stage{k}.b"]
        T, H, W, C = x.shape
        a = np.zeros((T, H, W, w.shape[2]))
        for t in range(T):
            for i in range(H):
                for j in range(W):
                    acc = b.copy()
                    for dt, tap in ((-1, 0), (0, 1), (1, 2)):
                        if 0 <= t + dt < T:
                            acc = acc + x[t + dt, i, j] @ w[tap]
                    a[t, i, j] = np.tanh(acc)
        if H % 2 == 0 and W % 2 == 0 and (H // 2) % S == 0 and (W // 2) % S == 0:
            p = np.zeros((T, H // 2, W // 2, a.shape[-1]))
            for i in range(H // 2):
                for j in range(W // 2):
                    p[:, i, j] = a[:, 2 * i : 2 * i + 2, 2 * j : 2 * j + 2].mean(axis=(1, 2))
            a = p
        x = a
    T, H, W, C = x.shape
    out = np.zeros((T, S, S))
    for i in range(S):
        for j in range(S):
            cell = x[:, i * H // S : (i + 1) * H // S, j * W // S : (j + 1) * W // S].mean(axis=(1, 2))
            out[:, i, j] = cell @ params["head.w"] + params["head.b"][0]
    return out
