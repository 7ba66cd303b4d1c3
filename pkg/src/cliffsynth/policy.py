"""Permutation-equivariant policy/value network over tableau block grids.

Pipeline: embed 2x2 blocks through a 32-entry dictionary (4 block bits plus
a diagonal indicator), pool embeddings into per-qubit tokens together with
rank-based count features, run L rounds of edge-conditioned message passing
with residual layer-norm updates, then read out per-qubit action logits, a
symmetric pair logit for each cz, and an invariant value estimate.

Nothing in the computation reads the qubit count from the weights, so one
set of weights serves every n.  All shared maps are two-layer perceptrons
with hidden width 2h and a tanh-form gaussian-error nonlinearity.  The
backward pass is written out by hand and checked against central finite
differences in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, FormatError, InvariantError
from .ioutil import atomic_write_bytes
from .tableau import Tableau, block_codes

LN_EPS = 1e-5
STD_EPS = 1e-6

_GELU_C = float(np.sqrt(2.0 / np.pi))
_GELU_A = 0.044715

_MLP_ORDER = ("node", "msg", "upd", "global", "local", "cz", "value")

# rank of the 2x2 block for each 4-bit code (bits: 8*XX + 4*XZ + 2*ZX + ZZ)
_RANK16 = np.zeros(16, dtype=np.uint8)
for _c in range(16):
    _xx, _xz, _zx, _zz = (_c >> 3) & 1, (_c >> 2) & 1, (_c >> 1) & 1, _c & 1
    if _c:
        _RANK16[_c] = 2 if (_xx * _zz) ^ (_xz * _zx) else 1
del _c, _xx, _xz, _zx, _zz


def mlp_specs(h: int) -> dict[str, tuple[int, int]]:
    """Input/output widths of every shared perceptron."""
    return {
        "node": (5 * h + 11, h),
        "msg": (4 * h + 1, h),
        "upd": (3 * h + 9, h),
        "global": (3 * h + 7, h),
        "local": (3 * h + 13, 1),
        "cz": (6 * h, 1),
        "value": (3 * h + 7, 1),
    }


def tensor_manifest(h: int, L: int) -> list[tuple[str, tuple[int, ...]]]:
    """Canonical (name, shape) list; also the serialization order."""
    out: list[tuple[str, tuple[int, ...]]] = [("embed", (32, h))]
    specs = mlp_specs(h)
    for name in _MLP_ORDER:
        fin, fout = specs[name]
        out += [
            (f"{name}.w1", (fin, 2 * h)),
            (f"{name}.b1", (2 * h,)),
            (f"{name}.w2", (2 * h, fout)),
            (f"{name}.b2", (fout,)),
        ]
    for k in range(L):
        out += [(f"ln{k}.gain", (h,)), (f"ln{k}.bias", (h,))]
    return out


@dataclass
class PolicyWeights:
    """All learned parameters plus the structural hyperparameters (h, L)."""

    h: int
    L: int
    params: dict[str, np.ndarray]

    @property
    def dtype(self) -> np.dtype:
        return self.params["embed"].dtype

    def copy(self) -> "PolicyWeights":
        return PolicyWeights(self.h, self.L, {k: v.copy() for k, v in self.params.items()})

    def astype(self, dtype) -> "PolicyWeights":
        return PolicyWeights(
            self.h, self.L, {k: v.astype(dtype) for k, v in self.params.items()}
        )

    def validate(self) -> None:
        expected = tensor_manifest(self.h, self.L)
        names = [n for n, _ in expected]
        if list(self.params.keys()) != names:
            raise InvariantError("parameter set does not match the manifest")
        for name, shape in expected:
            if self.params[name].shape != shape:
                raise InvariantError(f"tensor {name} has shape {self.params[name].shape}, "
                                     f"expected {shape}")
            if not np.all(np.isfinite(self.params[name])):
                raise InvariantError(f"tensor {name} contains non-finite values")


def init_weights(
    h: int, L: int, rng: np.random.Generator, dtype=np.float32
) -> PolicyWeights:
    """Fan-in-scaled uniform init; embedding rows have unit expected norm.

    The final layers of the action and value heads start small so the
    initial policy is near-uniform.
    """
    if h < 1 or L < 0:
        raise ArgumentError("need h >= 1 and L >= 0")
    params: dict[str, np.ndarray] = {}
    lim = np.sqrt(3.0)
    params["embed"] = (rng.uniform(-lim, lim, (32, h)) / np.sqrt(h)).astype(dtype)
    specs = mlp_specs(h)
    for name in _MLP_ORDER:
        fin, fout = specs[name]
        b1 = np.sqrt(3.0 / fin)
        b2 = np.sqrt(3.0 / (2 * h))
        if name in ("local", "cz", "value"):
            b2 *= 0.01
        params[f"{name}.w1"] = rng.uniform(-b1, b1, (fin, 2 * h)).astype(dtype)
        params[f"{name}.b1"] = np.zeros(2 * h, dtype=dtype)
        params[f"{name}.w2"] = rng.uniform(-b2, b2, (2 * h, fout)).astype(dtype)
        params[f"{name}.b2"] = np.zeros(fout, dtype=dtype)
    for k in range(L):
        params[f"ln{k}.gain"] = np.ones(h, dtype=dtype)
        params[f"ln{k}.bias"] = np.zeros(h, dtype=dtype)
    return PolicyWeights(h, L, params)


@dataclass
class PolicyOutput:
    logits: np.ndarray  # one per action index, length n(n+3)/2
    value: float


@dataclass
class CountFeatures:
    """Per-qubit block statistics: 9 fraction features and a rank one-hot."""

    eta1: np.ndarray  # (n, 9)
    eta2: np.ndarray  # (n, 2)


# -- activation ---------------------------------------------------------------


def _gelu_parts(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(gelu(x), tanh term); the tanh is cached for the backward pass."""
    t = np.tanh(_GELU_C * (x + _GELU_A * (x * x * x)))
    return 0.5 * x * (1.0 + t), t


def _gelu(x: np.ndarray) -> np.ndarray:
    return _gelu_parts(x)[0]


def _gelu_grad(x: np.ndarray, t: np.ndarray | None = None) -> np.ndarray:
    if t is None:
        t = np.tanh(_GELU_C * (x + _GELU_A * (x * x * x)))
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * _GELU_C * (
        1.0 + 3.0 * _GELU_A * (x * x)
    )


def _mlp_fwd(params, name, x, caches):
    w1, b1 = params[f"{name}.w1"], params[f"{name}.b1"]
    w2, b2 = params[f"{name}.w2"], params[f"{name}.b2"]
    lead = x.shape[:-1]
    x2 = np.ascontiguousarray(x.reshape(-1, x.shape[-1]))
    a = x2 @ w1 + b1
    hact, tanh_a = _gelu_parts(a)
    y = hact @ w2 + b2
    if caches is not None:
        caches[name + "." + str(len([k for k in caches if k.startswith(name + ".")]))] = (
            x2,
            a,
            tanh_a,
            hact,
        )
    return y.reshape(lead + (w2.shape[1],))


def _mlp_bwd(params, name, cache, dy, grads):
    x2, a, tanh_a, hact = cache
    w1, w2 = params[f"{name}.w1"], params[f"{name}.w2"]
    dy2 = dy.reshape(-1, dy.shape[-1])
    grads[f"{name}.w2"] += hact.T @ dy2
    grads[f"{name}.b2"] += dy2.sum(axis=0)
    dh = dy2 @ w2.T
    da = dh * _gelu_grad(a, tanh_a)
    grads[f"{name}.w1"] += x2.T @ da
    grads[f"{name}.b1"] += da.sum(axis=0)
    return (da @ w1.T).reshape(dy.shape[:-1] + (w1.shape[0],))


# -- feature extraction --------------------------------------------------------


def _count_features_batch(codes: np.ndarray, dtype) -> tuple[np.ndarray, np.ndarray]:
    """eta1 (B,n,9) and eta2 (B,n,2) from block-code grids (B,n,n)."""
    b, n, _ = codes.shape
    ranks = _RANK16[codes]
    nz = (codes != 0).astype(dtype)
    r1 = (ranks == 1).astype(dtype)
    r2 = (ranks == 2).astype(dtype)
    ar = np.arange(n)
    diag_codes = codes[:, ar, ar]
    d_i = (diag_codes == 9).astype(dtype)  # 2x2 identity block
    if n > 1:
        off = nz.copy()
        off[:, ar, ar] = 0
        offrow = off.sum(axis=2) / (n - 1)
        offcol = off.sum(axis=1) / (n - 1)
    else:
        offrow = np.zeros((b, 1), dtype=dtype)
        offcol = np.zeros((b, 1), dtype=dtype)
    eta1 = np.stack(
        [
            d_i,
            nz.mean(axis=2),
            nz.mean(axis=1),
            r1.mean(axis=2),
            r2.mean(axis=2),
            r1.mean(axis=1),
            r2.mean(axis=1),
            offrow,
            offcol,
        ],
        axis=2,
    ).astype(dtype)
    diag_ranks = ranks[:, ar, ar]
    eta2 = np.stack([(diag_ranks == 1), (diag_ranks == 2)], axis=2).astype(dtype)
    return eta1, eta2


def embedding_keys(codes: np.ndarray) -> np.ndarray:
    """Dictionary keys: diag_indicator*16 + block code (B,n,n) or (n,n)."""
    n = codes.shape[-1]
    eye = np.eye(n, dtype=np.int64)
    return codes.astype(np.int64) + 16 * eye


def _maxpool(x: np.ndarray, axis: int):
    idx = np.argmax(x, axis=axis)
    val = np.take_along_axis(x, np.expand_dims(idx, axis), axis=axis).squeeze(axis)
    return val, idx


def _maxpool_bwd(dval: np.ndarray, idx: np.ndarray, axis: int, shape) -> np.ndarray:
    out = np.zeros(shape, dtype=dval.dtype)
    np.put_along_axis(out, np.expand_dims(idx, axis), np.expand_dims(dval, axis), axis=axis)
    return out


# -- forward -------------------------------------------------------------------


def _check_finite(name: str, *arrays) -> None:
    for arr in arrays:
        if arr.size and not np.all(np.isfinite(arr)):
            raise InvariantError(f"non-finite values produced in stage '{name}'")


def forward_batch(
    w: PolicyWeights, codes: np.ndarray, caches: dict | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Logits (B, n(n+3)/2) and values (B,) for a batch of block-code grids."""
    p = w.params
    dtype = w.dtype
    b, n, _ = codes.shape
    ar = np.arange(n)

    keys = embedding_keys(codes)
    e = p["embed"][keys]  # (B,n,n,h)
    eta1, eta2 = _count_features_batch(codes, dtype)
    eta = np.concatenate([eta1, eta2], axis=2)  # (B,n,11)
    _check_finite("embed", e)

    # aggregation
    row_mean = e.mean(axis=2)
    row_max, row_idx = _maxpool(e, 2)
    col_mean = e.mean(axis=1)
    col_max, col_idx = _maxpool(e, 1)
    e_diag = e[:, ar, ar, :]
    x_node = np.concatenate([row_mean, row_max, col_mean, col_max, e_diag, eta], axis=2)
    q = _mlp_fwd(p, "node", x_node, caches)
    _check_finite("aggregate", q)

    round_caches = []
    neq = (1.0 - np.eye(n, dtype=dtype))[None, :, :, None]
    e_t = e.transpose(0, 2, 1, 3)
    for k in range(w.L):
        qi = np.broadcast_to(q[:, :, None, :], (b, n, n, w.h))
        qj = np.broadcast_to(q[:, None, :, :], (b, n, n, w.h))
        x_msg = np.concatenate(
            [qi, qj, e, e_t, np.broadcast_to(neq, (b, n, n, 1))], axis=3
        )
        msgs = _mlp_fwd(p, "msg", x_msg, caches)
        m_mean = msgs.mean(axis=2)
        m_max, m_idx = _maxpool(msgs, 2)
        x_upd = np.concatenate([q, m_mean, m_max, eta1], axis=2)
        upd = _mlp_fwd(p, "upd", x_upd, caches)
        pre = q + upd
        mu = pre.mean(axis=2, keepdims=True)
        xc = pre - mu
        var = (xc * xc).mean(axis=2, keepdims=True)
        inv = 1.0 / np.sqrt(var + LN_EPS)
        xhat = xc * inv
        q = p[f"ln{k}.gain"] * xhat + p[f"ln{k}.bias"]
        round_caches.append((q, m_idx, xhat, inv))
        _check_finite(f"message round {k}", q)

    # invariant statistics
    mu_q = q.mean(axis=1)
    xc_q = q - mu_q[:, None, :]
    var_q = (xc_q * xc_q).mean(axis=1)
    std_q = np.sqrt(var_q + STD_EPS)
    max_q, maxq_idx = _maxpool(q, 1)
    cbar = np.concatenate(
        [eta1[:, :, [0, 1, 2, 7, 8]].mean(axis=1), eta2.mean(axis=1)], axis=1
    )
    s = np.concatenate([mu_q, max_q, std_q, cbar], axis=1)
    g = _mlp_fwd(p, "global", s, caches)

    # one-qubit heads via an action-type one-hot
    g_b = np.broadcast_to(g[:, None, :], (b, n, w.h))
    base = np.concatenate([q, e_diag, g_b, eta], axis=2)  # (B,n,3h+11)
    tau = np.eye(2, dtype=dtype)
    x_loc = np.concatenate(
        [
            np.broadcast_to(base[:, :, None, :], (b, n, 2, base.shape[-1])),
            np.broadcast_to(tau[None, None, :, :], (b, n, 2, 2)),
        ],
        axis=3,
    )
    loc = _mlp_fwd(p, "local", x_loc, caches)[..., 0]  # (B,n,2)

    # symmetric pair head
    iu, ju = np.triu_indices(n, 1)
    qi_p = q[:, iu, :]
    qj_p = q[:, ju, :]
    e_ij = e[:, iu, ju, :]
    e_ji = e[:, ju, iu, :]
    x_cz = np.concatenate(
        [
            qi_p + qj_p,
            qi_p * qj_p,
            np.abs(qi_p - qj_p),
            e_ij + e_ji,
            e_ij * e_ji,
            np.broadcast_to(g[:, None, :], (b, iu.size, w.h)),
        ],
        axis=2,
    )
    z = _mlp_fwd(p, "cz", x_cz, caches)[..., 0]  # (B,P)

    logits = np.concatenate([loc[:, :, 0], loc[:, :, 1], z], axis=1)
    value = _mlp_fwd(p, "value", s, caches)[..., 0]
    _check_finite("readout", logits, value)

    if caches is not None:
        caches["state"] = {
            "codes": codes,
            "keys": keys,
            "e": e,
            "eta1": eta1,
            "eta2": eta2,
            "row_idx": row_idx,
            "col_idx": col_idx,
            "rounds": round_caches,
            "q_in_rounds": None,
            "q": q,
            "xc_q": xc_q,
            "std_q": std_q,
            "maxq_idx": maxq_idx,
            "qi_p": qi_p,
            "qj_p": qj_p,
            "e_ij": e_ij,
            "e_ji": e_ji,
            "iu": iu,
            "ju": ju,
        }
    return logits, value


def forward_batch_cached(w: PolicyWeights, codes: np.ndarray):
    caches: dict = {}
    logits, value = forward_batch(w, codes, caches)
    return logits, value, caches


def zero_grads(w: PolicyWeights) -> dict[str, np.ndarray]:
    return {k: np.zeros_like(v) for k, v in w.params.items()}


def backward_batch(
    w: PolicyWeights, caches: dict, dlogits: np.ndarray, dvalue: np.ndarray
) -> dict[str, np.ndarray]:
    """Gradients of sum(dlogits * logits) + sum(dvalue * value) w.r.t. params."""
    p = w.params
    st = caches["state"]
    grads = zero_grads(w)
    b, n, _ = st["codes"].shape
    h = w.h
    ar = np.arange(n)
    iu, ju = st["iu"], st["ju"]
    npairs = iu.size
    q = st["q"]
    e = st["e"]

    dq = np.zeros_like(q)
    de = np.zeros_like(e)
    ds = np.zeros((b, 3 * h + 7), dtype=q.dtype)
    dg = np.zeros((b, h), dtype=q.dtype)

    # value head
    ds += _mlp_bwd(p, "value", caches["value.0"], dvalue[:, None], grads)

    # cz head
    if npairs:
        dz = dlogits[:, 2 * n :]
        dx_cz = _mlp_bwd(p, "cz", caches["cz.0"], dz[..., None], grads)
        d_sum = dx_cz[:, :, 0:h]
        d_prod = dx_cz[:, :, h : 2 * h]
        d_abs = dx_cz[:, :, 2 * h : 3 * h]
        d_esum = dx_cz[:, :, 3 * h : 4 * h]
        d_eprod = dx_cz[:, :, 4 * h : 5 * h]
        dg += dx_cz[:, :, 5 * h :].sum(axis=1)
        sgn = np.sign(st["qi_p"] - st["qj_p"])
        dqi = d_sum + d_prod * st["qj_p"] + d_abs * sgn
        dqj = d_sum + d_prod * st["qi_p"] - d_abs * sgn
        de_ij = d_esum + d_eprod * st["e_ji"]
        de_ji = d_esum + d_eprod * st["e_ij"]
        scat_i = np.zeros((n, npairs), dtype=q.dtype)
        scat_j = np.zeros((n, npairs), dtype=q.dtype)
        scat_i[iu, np.arange(npairs)] = 1
        scat_j[ju, np.arange(npairs)] = 1
        dq += scat_i @ dqi
        dq += scat_j @ dqj
        de_flat = de.reshape(b, n * n, h)
        scat_ij = np.zeros((n * n, npairs), dtype=q.dtype)
        scat_ji = np.zeros((n * n, npairs), dtype=q.dtype)
        scat_ij[iu * n + ju, np.arange(npairs)] = 1
        scat_ji[ju * n + iu, np.arange(npairs)] = 1
        de_flat += scat_ij @ de_ij
        de_flat += scat_ji @ de_ji
        de = de_flat.reshape(b, n, n, h)

    # one-qubit heads
    dloc = np.stack([dlogits[:, :n], dlogits[:, n : 2 * n]], axis=2)
    dx_loc = _mlp_bwd(p, "local", caches["local.0"], dloc[..., None], grads)
    d_base = dx_loc[..., : 3 * h + 11].sum(axis=2)  # (B,n,3h+11)
    dq += d_base[:, :, 0:h]
    de[:, ar, ar, :] += d_base[:, :, h : 2 * h]
    dg += d_base[:, :, 2 * h : 3 * h].sum(axis=1)

    # global summary
    ds += _mlp_bwd(p, "global", caches["global.0"], dg, grads)
    d_mu = ds[:, 0:h]
    d_max = ds[:, h : 2 * h]
    d_std = ds[:, 2 * h : 3 * h]
    dq += d_mu[:, None, :] / n
    dq += _maxpool_bwd(d_max, st["maxq_idx"], 1, q.shape)
    dq += d_std[:, None, :] * st["xc_q"] / (n * st["std_q"][:, None, :])

    # message-passing rounds, in reverse
    for k in range(w.L - 1, -1, -1):
        q_out, m_idx, xhat, inv = st["rounds"][k]
        gain = p[f"ln{k}.gain"]
        grads[f"ln{k}.gain"] += (dq * xhat).sum(axis=(0, 1))
        grads[f"ln{k}.bias"] += dq.sum(axis=(0, 1))
        dxhat = dq * gain
        dpre = inv * (
            dxhat
            - dxhat.mean(axis=2, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=2, keepdims=True)
        )
        dx_upd = _mlp_bwd(p, "upd", caches[f"upd.{k}"], dpre, grads)
        dq = dpre + dx_upd[:, :, 0:h]
        dmsgs = np.empty((b, n, n, h), dtype=q.dtype)
        dmsgs[:] = dx_upd[:, :, None, h : 2 * h] / n
        dmsgs += _maxpool_bwd(dx_upd[:, :, 2 * h : 3 * h], m_idx, 2, dmsgs.shape)
        dx_msg = _mlp_bwd(p, "msg", caches[f"msg.{k}"], dmsgs, grads)
        dq += dx_msg[:, :, :, 0:h].sum(axis=2)
        dq += dx_msg[:, :, :, h : 2 * h].sum(axis=1)
        de += dx_msg[:, :, :, 2 * h : 3 * h]
        de += dx_msg[:, :, :, 3 * h : 4 * h].transpose(0, 2, 1, 3)

    # aggregation
    dx_node = _mlp_bwd(p, "node", caches["node.0"], dq, grads)
    de += dx_node[:, :, None, 0:h] / n
    de += _maxpool_bwd(dx_node[:, :, h : 2 * h], st["row_idx"], 2, de.shape)
    de += dx_node[:, None, :, 2 * h : 3 * h] / n
    de += _maxpool_bwd(dx_node[:, :, 3 * h : 4 * h], st["col_idx"], 1, de.shape)
    de[:, ar, ar, :] += dx_node[:, :, 4 * h : 5 * h]

    # embedding table
    np.add.at(grads["embed"], st["keys"].reshape(-1), de.reshape(-1, h))
    return grads


# -- single-instance API ---------------------------------------------------------


def forward(w: PolicyWeights, t: Tableau) -> PolicyOutput:
    """Policy logits and value for one tableau."""
    codes = block_codes(t)[None, :, :]
    logits, value = forward_batch(w, codes)
    return PolicyOutput(logits[0], float(value[0]))


def _view_to_codes(view: np.ndarray) -> np.ndarray:
    v = np.asarray(view, dtype=np.uint8)
    if v.ndim != 3 or v.shape[2] != 4 or v.shape[0] != v.shape[1]:
        raise ArgumentError("block view must have shape (n, n, 4)")
    return 8 * v[:, :, 0] + 4 * v[:, :, 1] + 2 * v[:, :, 2] + v[:, :, 3]


def embed_blocks(w: PolicyWeights, view: np.ndarray) -> np.ndarray:
    """Edge embeddings (n, n, h) for one block view (n, n, 4)."""
    codes = _view_to_codes(view)
    return w.params["embed"][embedding_keys(codes)]


def count_features(view: np.ndarray) -> CountFeatures:
    codes = _view_to_codes(view)
    eta1, eta2 = _count_features_batch(codes[None], np.float64)
    return CountFeatures(eta1[0], eta2[0])


def aggregate(w: PolicyWeights, e: np.ndarray, feats: CountFeatures) -> np.ndarray:
    """Initial per-qubit tokens q0 (n, h) from edge embeddings and counts."""
    n = e.shape[0]
    ar = np.arange(n)
    eta = np.concatenate([feats.eta1, feats.eta2], axis=1).astype(w.dtype)
    x = np.concatenate(
        [e.mean(axis=1), e.max(axis=1), e.mean(axis=0), e.max(axis=0), e[ar, ar], eta],
        axis=1,
    )
    return _mlp_fwd(w.params, "node", x, None)


def message_round(
    w: PolicyWeights, k: int, q: np.ndarray, e: np.ndarray, eta1: np.ndarray
) -> np.ndarray:
    """One round of ordered-pair messages plus a residual layer-norm update."""
    if not 0 <= k < w.L:
        raise ArgumentError(f"round index {k} out of range for L={w.L}")
    n = q.shape[0]
    dtype = w.dtype
    qi = np.broadcast_to(q[:, None, :], (n, n, w.h))
    qj = np.broadcast_to(q[None, :, :], (n, n, w.h))
    neq = (1.0 - np.eye(n, dtype=dtype))[:, :, None]
    x_msg = np.concatenate([qi, qj, e, e.transpose(1, 0, 2), neq], axis=2)
    msgs = _mlp_fwd(w.params, "msg", x_msg, None)
    x_upd = np.concatenate(
        [q, msgs.mean(axis=1), msgs.max(axis=1), eta1.astype(dtype)], axis=1
    )
    pre = q + _mlp_fwd(w.params, "upd", x_upd, None)
    mu = pre.mean(axis=1, keepdims=True)
    xc = pre - mu
    var = (xc * xc).mean(axis=1, keepdims=True)
    xhat = xc / np.sqrt(var + LN_EPS)
    return w.params[f"ln{k}.gain"] * xhat + w.params[f"ln{k}.bias"]


def readout(
    w: PolicyWeights, q: np.ndarray, e: np.ndarray, feats: CountFeatures
) -> PolicyOutput:
    """Equivariant logits and invariant value from final tokens (n, h)."""
    n = q.shape[0]
    dtype = w.dtype
    ar = np.arange(n)
    p = w.params
    mu_q = q.mean(axis=0)
    xc = q - mu_q
    std_q = np.sqrt((xc * xc).mean(axis=0) + STD_EPS)
    eta1 = feats.eta1.astype(dtype)
    eta2 = feats.eta2.astype(dtype)
    cbar = np.concatenate([eta1[:, [0, 1, 2, 7, 8]].mean(axis=0), eta2.mean(axis=0)])
    s = np.concatenate([mu_q, q.max(axis=0), std_q, cbar])[None, :]
    g = _mlp_fwd(p, "global", s, None)[0]
    eta = np.concatenate([eta1, eta2], axis=1)
    base = np.concatenate([q, e[ar, ar], np.broadcast_to(g, (n, w.h)), eta], axis=1)
    tau = np.eye(2, dtype=dtype)
    x_loc = np.concatenate(
        [
            np.broadcast_to(base[:, None, :], (n, 2, base.shape[-1])),
            np.broadcast_to(tau[None, :, :], (n, 2, 2)),
        ],
        axis=2,
    )
    loc = _mlp_fwd(p, "local", x_loc, None)[..., 0]
    iu, ju = np.triu_indices(n, 1)
    qi_p, qj_p = q[iu], q[ju]
    e_ij, e_ji = e[iu, ju], e[ju, iu]
    x_cz = np.concatenate(
        [
            qi_p + qj_p,
            qi_p * qj_p,
            np.abs(qi_p - qj_p),
            e_ij + e_ji,
            e_ij * e_ji,
            np.broadcast_to(g, (iu.size, w.h)),
        ],
        axis=1,
    )
    z = _mlp_fwd(p, "cz", x_cz, None)[..., 0] if iu.size else np.zeros(0, dtype=dtype)
    logits = np.concatenate([loc[:, 0], loc[:, 1], z])
    value = float(_mlp_fwd(p, "value", s, None)[0, 0])
    return PolicyOutput(logits, value)


# -- serialization ---------------------------------------------------------------

_MAGIC = "cliffsynth-weights v1"


def dumps_weights(w: PolicyWeights) -> bytes:
    w.validate()
    lines = [_MAGIC, f"h={w.h}", f"L={w.L}"]
    for name, shape in tensor_manifest(w.h, w.L):
        lines.append(f"tensor {name} {' '.join(str(d) for d in shape)}")
    lines.append("payload")
    header = ("\n".join(lines) + "\n").encode("ascii")
    payload = b"".join(
        np.ascontiguousarray(w.params[name], dtype="<f4").tobytes()
        for name, _ in tensor_manifest(w.h, w.L)
    )
    return header + payload


def loads_weights(data: bytes) -> PolicyWeights:
    marker = b"\npayload\n"
    pos = data.find(marker)
    if pos < 0:
        raise FormatError("weight file has no payload marker")
    header = data[:pos].decode("ascii", errors="replace").splitlines()
    payload = data[pos + len(marker) :]
    if not header or header[0] != _MAGIC:
        raise FormatError("bad weight file magic")
    try:
        h = int(header[1].removeprefix("h="))
        L = int(header[2].removeprefix("L="))
    except (IndexError, ValueError):
        raise FormatError("bad weight file header") from None
    declared: list[tuple[str, tuple[int, ...]]] = []
    for line in header[3:]:
        parts = line.split()
        if len(parts) < 3 or parts[0] != "tensor":
            raise FormatError(f"bad manifest line {line!r}")
        declared.append((parts[1], tuple(int(x) for x in parts[2:])))
    expected = tensor_manifest(h, L)
    if declared != expected:
        raise FormatError("manifest does not match the expected tensor layout")
    total = sum(int(np.prod(shape)) for _, shape in expected) * 4
    if len(payload) != total:
        raise FormatError(
            f"payload has {len(payload)} bytes, expected {total}; file truncated or padded"
        )
    params: dict[str, np.ndarray] = {}
    off = 0
    for name, shape in expected:
        nbytes = int(np.prod(shape)) * 4
        arr = np.frombuffer(payload[off : off + nbytes], dtype="<f4").reshape(shape)
        params[name] = arr.astype(np.float32)
        off += nbytes
    w = PolicyWeights(h, L, params)
    w.validate()
    return w


def save_weights(w: PolicyWeights, path: str) -> None:
    atomic_write_bytes(path, dumps_weights(w))


def load_weights(path: str) -> PolicyWeights:
    with open(path, "rb") as fh:
        return loads_weights(fh.read())
