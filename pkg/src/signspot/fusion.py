"""Double-precision forward and backward passes for the attention, gating and
auxiliary-loss equations, plus a central-difference gradient checker.

Matrices hold one feature vector per row. Every ``*_backward`` takes the
upstream gradient ``G`` of a scalar loss with respect to the forward output.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .core import ValidationError
from .ctc import Posteriorgram, sequence_log_prob

MODALITIES = ("g", "m", "h")


def _as2d(x, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValidationError(f"{name} must be 2-D, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValidationError(f"{name} has non-finite entries")
    return x


def softmax(x: np.ndarray, axis: Optional[int] = -1) -> np.ndarray:
    z = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


# --------------------------------------------------------------------------
# scaled dot-product attention

def attention(Q, K, V) -> np.ndarray:
    Q, K, V = _as2d(Q, "Q"), _as2d(K, "K"), _as2d(V, "V")
    if Q.shape[1] != K.shape[1] or K.shape[0] != V.shape[0]:
        raise ValidationError(f"incompatible shapes Q{Q.shape} K{K.shape} V{V.shape}")
    return softmax(Q @ K.T / np.sqrt(Q.shape[1])) @ V


def attention_backward(Q, K, V, G) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    Q, K, V, G = (np.asarray(a, dtype=np.float64) for a in (Q, K, V, G))
    scale = 1.0 / np.sqrt(Q.shape[1])
    P = softmax(Q @ K.T * scale)
    dV = P.T @ G
    dP = G @ V.T
    dS = P * (dP - np.sum(dP * P, axis=1, keepdims=True))
    return dS @ K * scale, dS.T @ Q * scale, dV


# --------------------------------------------------------------------------
# multi-head attention

@dataclass(frozen=True)
class FusionParams:
    """Per-head projections, output projection, gate weights and loss weights."""

    w_q: tuple[np.ndarray, ...]
    w_k: tuple[np.ndarray, ...]
    w_v: tuple[np.ndarray, ...]
    w_o: np.ndarray
    gate_s: Optional[np.ndarray] = None
    gate_c: Optional[np.ndarray] = None
    gate_b: Optional[np.ndarray] = None
    alpha: float = 1.0
    pose_tau: float = 0.5
    loss_weights: Mapping[str, float] = field(default_factory=lambda: {
        "rec": 1.0, "ler": 1.0, "pose": 1.0, "hand": 1.0, "mouth": 1.0})

    def __post_init__(self):
        h = len(self.w_q)
        if h == 0 or len(self.w_k) != h or len(self.w_v) != h:
            raise ValidationError("need the same positive number of Q/K/V projections")
        dh_qk = {w.shape[1] for w in self.w_q} | {w.shape[1] for w in self.w_k}
        if len(dh_qk) != 1:
            raise ValidationError("query and key projections must share a head width")
        dv = {w.shape[1] for w in self.w_v}
        if len(dv) != 1 or self.w_o.shape[0] != h * dv.pop():
            raise ValidationError("output projection must take the concatenated head outputs")

    @property
    def heads(self) -> int:
        return len(self.w_q)

    @classmethod
    def identity(cls, d: int, d_kv: Optional[int] = None) -> "FusionParams":
        d_kv = d if d_kv is None else d_kv
        return cls((np.eye(d, d_kv),), (np.eye(d_kv),), (np.eye(d_kv),), np.eye(d_kv))

    @classmethod
    def random(cls, d: int, h: int, rng: np.random.Generator, d_kv: Optional[int] = None,
               d_out: Optional[int] = None) -> "FusionParams":
        """Gaussian projections with head width ``d_kv // h``."""
        d_kv = d if d_kv is None else d_kv
        d_out = d_kv if d_out is None else d_out
        if d_kv % h:
            raise ValidationError(f"feature width {d_kv} is not divisible by {h} heads")
        dh = d_kv // h
        s = 1.0 / np.sqrt(d_kv)
        return cls(
            tuple(rng.normal(scale=s, size=(d, dh)) for _ in range(h)),
            tuple(rng.normal(scale=s, size=(d_kv, dh)) for _ in range(h)),
            tuple(rng.normal(scale=s, size=(d_kv, dh)) for _ in range(h)),
            rng.normal(scale=s, size=(h * dh, d_out)),
            rng.normal(scale=s, size=(d_out, d_out)),
            rng.normal(scale=s, size=(d_out, d_out)),
            rng.normal(scale=0.1, size=d_out),
        )


def multihead(Q, K, V, params: FusionParams) -> np.ndarray:
    Q, K, V = _as2d(Q, "Q"), _as2d(K, "K"), _as2d(V, "V")
    heads = [attention(Q @ wq, K @ wk, V @ wv) for wq, wk, wv in zip(params.w_q, params.w_k, params.w_v)]
    return np.concatenate(heads, axis=1) @ params.w_o


def multihead_backward(Q, K, V, params: FusionParams, G) -> dict:
    """Gradients for Q, K, V and every projection (lists indexed by head)."""
    Q, K, V, G = (np.asarray(a, dtype=np.float64) for a in (Q, K, V, G))
    projected = [(Q @ wq, K @ wk, V @ wv) for wq, wk, wv in zip(params.w_q, params.w_k, params.w_v)]
    C = np.concatenate([attention(*p) for p in projected], axis=1)
    dC = G @ params.w_o.T
    grads = {"Q": np.zeros_like(Q), "K": np.zeros_like(K), "V": np.zeros_like(V),
             "w_q": [], "w_k": [], "w_v": [], "w_o": C.T @ G}
    dh = params.w_v[0].shape[1]
    for i, ((q, k, v), wq, wk, wv) in enumerate(zip(projected, params.w_q, params.w_k, params.w_v)):
        dq, dk, dv = attention_backward(q, k, v, dC[:, i * dh:(i + 1) * dh])
        grads["w_q"].append(Q.T @ dq)
        grads["w_k"].append(K.T @ dk)
        grads["w_v"].append(V.T @ dv)
        grads["Q"] += dq @ wq.T
        grads["K"] += dk @ wk.T
        grads["V"] += dv @ wv.T
    return grads


def msa(X, params: FusionParams) -> np.ndarray:
    """Multi-head self attention."""
    return multihead(X, X, X, params)


def mca(X, Y, params: FusionParams) -> np.ndarray:
    """Multi-head cross attention: queries from ``X``, keys and values from ``Y``."""
    return multihead(X, Y, Y, params)


# --------------------------------------------------------------------------
# gating

def gate(Y_s, Y_c, W_s, W_c, b) -> np.ndarray:
    """Elementwise blend ``Y_s * R + Y_c * (1 - R)`` with ``R = sigmoid(Y_s W_s + Y_c W_c + b)``."""
    Y_s, Y_c = _as2d(Y_s, "Y_s"), _as2d(Y_c, "Y_c")
    if Y_s.shape != Y_c.shape:
        raise ValidationError(f"gate inputs differ in shape: {Y_s.shape} vs {Y_c.shape}")
    R = sigmoid(Y_s @ W_s + Y_c @ W_c + b)
    return Y_s * R + Y_c * (1.0 - R)


def gate_backward(Y_s, Y_c, W_s, W_c, b, G) -> dict:
    Y_s, Y_c, W_s, W_c, G = (np.asarray(a, dtype=np.float64) for a in (Y_s, Y_c, W_s, W_c, G))
    R = sigmoid(Y_s @ W_s + Y_c @ W_c + b)
    dZ = G * (Y_s - Y_c) * R * (1.0 - R)
    return {
        "Y_s": G * R + dZ @ W_s.T,
        "Y_c": G * (1.0 - R) + dZ @ W_c.T,
        "W_s": Y_s.T @ dZ,
        "W_c": Y_c.T @ dZ,
        "b": dZ.sum(axis=0),
    }


# --------------------------------------------------------------------------
# prior-weighted spatial attention

def prior_attention(logits, M, alpha: float) -> np.ndarray:
    """Softmax over all cells of ``logits``, reweighted by ``M**alpha`` and renormalized."""
    logits, M = _as2d(logits, "logits"), _as2d(M, "M")
    if logits.shape != M.shape:
        raise ValidationError("attention logits and prior differ in shape")
    if np.any(M < 0):
        raise ValidationError("prior map must be non-negative")
    beta = softmax(logits, axis=None)
    w = beta * M ** alpha
    total = w.sum()
    if total <= 0:
        raise ValidationError("prior-weighted attention has zero mass")
    return w / total


def prior_attention_backward(logits, M, alpha: float, G) -> dict:
    """Gradients for the logits, the prior (where positive) and the exponent."""
    logits, M, G = (np.asarray(a, dtype=np.float64) for a in (logits, M, G))
    beta = softmax(logits, axis=None)
    Ma = M ** alpha
    w = beta * Ma
    total = w.sum()
    A = w / total
    dw = (G - np.sum(G * A)) / total
    dbeta = dw * Ma
    dlogits = beta * (dbeta - np.sum(dbeta * beta))
    with np.errstate(divide="ignore", invalid="ignore"):
        dM = np.where(M > 0, dw * beta * alpha * M ** (alpha - 1.0), 0.0)
        logM = np.where(M > 0, np.log(np.where(M > 0, M, 1.0)), 0.0)
    dalpha = float(np.sum(dw * w * logM))
    return {"logits": dlogits, "M": dM, "alpha": dalpha}


# --------------------------------------------------------------------------
# multi-stream decoding context

def multistream_context(d_n, encodings: Mapping[str, np.ndarray], params: Mapping[str, FusionParams]) -> np.ndarray:
    """Concatenate cross-attention contexts of one decoder state over each modality.

    Modalities are taken in the fixed order global, mouthing, hand.
    """
    d_n = _as2d(np.atleast_2d(d_n), "decoder state")
    present = [m for m in MODALITIES if m in encodings]
    unknown = set(encodings) - set(MODALITIES)
    if unknown:
        raise ValidationError(f"unknown modalities {sorted(unknown)}")
    if not present:
        raise ValidationError("need at least one modality")
    parts = []
    for m in present:
        enc = _as2d(encodings[m], f"encoding {m}")
        if enc.shape[0] == 0:
            raise ValidationError(f"modality {m} is empty")
        parts.append(mca(d_n, enc, params[m]))
    return np.concatenate(parts, axis=1)


# --------------------------------------------------------------------------
# auxiliary losses

def pose_heatmap_loss(pred, pseudo, conf, tau: float = 0.5) -> float:
    """Squared heatmap error summed over frames and keypoints with confidence above ``tau``.

    ``pred`` and ``pseudo`` are ``(T, P, H, W)``; ``conf`` is ``(T, P)``.
    """
    pred, pseudo, conf = (np.asarray(a, dtype=np.float64) for a in (pred, pseudo, conf))
    if pred.shape != pseudo.shape or pred.shape[:2] != conf.shape:
        raise ValidationError("heatmap and confidence shapes disagree")
    mask = (conf > tau).astype(np.float64)
    sq = ((pred - pseudo) ** 2).reshape(conf.shape + (-1,)).sum(axis=-1)
    return float(np.sum(sq * mask))


def pose_heatmap_loss_grad(pred, pseudo, conf, tau: float = 0.5) -> np.ndarray:
    pred, pseudo, conf = (np.asarray(a, dtype=np.float64) for a in (pred, pseudo, conf))
    mask = (conf > tau).astype(np.float64)
    return 2.0 * (pred - pseudo) * mask.reshape(mask.shape + (1,) * (pred.ndim - 2))


def expected_ler_loss(scores, accuracies) -> tuple[float, np.ndarray]:
    """Negative expected letter accuracy under ``p_i = f_i / sum f``.

    Also returns the score-function coefficients ``-p_i * Acc_i`` that weight
    ``grad log p_i`` in the REINFORCE estimate.
    """
    f = np.asarray(scores, dtype=np.float64)
    acc = np.asarray(accuracies, dtype=np.float64)
    if f.shape != acc.shape or f.ndim != 1:
        raise ValidationError("need one accuracy per proposal score")
    if np.any(f < 0) or f.sum() <= 0:
        raise ValidationError("proposal scores must be non-negative with positive sum")
    p = f / f.sum()
    coeffs = -p * acc
    return float(coeffs.sum()), coeffs


def expected_ler_grad(scores, accuracies) -> np.ndarray:
    """REINFORCE gradient with respect to the raw scores.

    With ``grad_j log p_i = [i == j] / f_i - 1 / sum f`` the estimate is exact
    for this loss.
    """
    f = np.asarray(scores, dtype=np.float64)
    _, coeffs = expected_ler_loss(scores, accuracies)
    with np.errstate(divide="ignore", invalid="ignore"):
        own = np.where(f > 0, coeffs / np.where(f > 0, f, 1.0), 0.0)
    return own - coeffs.sum() / f.sum()


def detector_total_loss(det: float, rec: float, ler: float, pose: float, weights: Mapping[str, float]) -> float:
    return det + weights.get("rec", 1.0) * rec + weights.get("ler", 1.0) * ler + weights.get("pose", 1.0) * pose


def multistream_ctc_loss(
    joint: Posteriorgram, hand: Posteriorgram, mouth: Posteriorgram, labels: Sequence[str],
    lambda_hand: float = 1.0, lambda_mouth: float = 1.0,
) -> float:
    """Joint CTC loss plus weighted auxiliary hand and mouth CTC losses."""
    return -(sequence_log_prob(joint, labels) + lambda_hand * sequence_log_prob(hand, labels)
             + lambda_mouth * sequence_log_prob(mouth, labels))


# --------------------------------------------------------------------------
# gradient checking

@dataclass(frozen=True)
class GradCheckReport:
    """``max_rel_error`` is ``|a - n| / max(|a|, |n|)`` over the whole gradient vector.

    ``max_elementwise_error`` is the worst per-coordinate ratio (floored at
    1e-8), kept for diagnosis: coordinates that are nearly zero by chance sit
    at the noise floor of central differences.
    """

    max_rel_error: float
    max_elementwise_error: float
    worst_index: tuple
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-8) -> np.ndarray:
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def finite_diff_check(
    f: Callable[[np.ndarray], float], theta, analytic_grad, eps: float = 1e-6, tol: float = 1e-5,
) -> GradCheckReport:
    """Compare ``analytic_grad`` with central differences of ``f`` at ``theta``."""
    theta = np.array(theta, dtype=np.float64)
    analytic = np.asarray(analytic_grad, dtype=np.float64).reshape(theta.shape)
    numeric = np.zeros_like(theta)
    for idx in np.ndindex(theta.shape):
        orig = theta[idx]
        theta[idx] = orig + eps
        up = f(theta)
        theta[idx] = orig - eps
        down = f(theta)
        theta[idx] = orig
        numeric[idx] = (up - down) / (2 * eps)
    if theta.size == 0:
        return GradCheckReport(0.0, 0.0, (), tol)
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric))
    rel = float(np.linalg.norm(analytic - numeric) / scale) if scale > 0 else 0.0
    err = relative_error(analytic, numeric)
    worst = np.unravel_index(int(np.argmax(err)), err.shape)
    return GradCheckReport(rel, float(err.max()), tuple(int(i) for i in worst), tol)


def _instance_checks(rng: np.random.Generator, eps: float, tol: float) -> dict[str, GradCheckReport]:
    """One random instance per operation; the scalar loss is ``sum(G * output)``."""
    out = {}
    n, m, d = 3, 4, 4
    Q, K, V = rng.normal(size=(n, d)), rng.normal(size=(m, d)), rng.normal(size=(m, d))
    G = rng.normal(size=(n, d))
    dQ, dK, dV = attention_backward(Q, K, V, G)
    theta = np.concatenate([Q.ravel(), K.ravel(), V.ravel()])

    def f_att(t):
        q, k, v = t[:n * d].reshape(n, d), t[n * d:(n + m) * d].reshape(m, d), t[(n + m) * d:].reshape(m, d)
        return float(np.sum(G * attention(q, k, v)))

    out["attention"] = finite_diff_check(
        f_att, theta, np.concatenate([dQ.ravel(), dK.ravel(), dV.ravel()]), eps, tol)

    params = FusionParams.random(d, 2, rng)
    X, Y = rng.normal(size=(n, d)), rng.normal(size=(m, d))
    grads = multihead_backward(X, Y, Y, params, G)
    names = ("w_q", "w_k", "w_v")
    flat = [X.ravel(), Y.ravel()] + [w.ravel() for nm in names for w in getattr(params, nm)] + [params.w_o.ravel()]
    shapes = [a.shape for a in [X, Y]] + [w.shape for nm in names for w in getattr(params, nm)] + [params.w_o.shape]
    theta = np.concatenate(flat)
    analytic = np.concatenate([grads["Q"].ravel(), (grads["K"] + grads["V"]).ravel()]
                              + [g.ravel() for nm in names for g in grads[nm]] + [grads["w_o"].ravel()])

    def unpack(t):
        parts, i = [], 0
        for shp in shapes:
            size = int(np.prod(shp))
            parts.append(t[i:i + size].reshape(shp))
            i += size
        return parts

    def f_mh(t):
        x, y, *ws = unpack(t)
        h = params.heads
        p = FusionParams(tuple(ws[:h]), tuple(ws[h:2 * h]), tuple(ws[2 * h:3 * h]), ws[3 * h])
        return float(np.sum(G * mca(x, y, p)))

    out["multihead"] = finite_diff_check(f_mh, theta, analytic, eps, tol)

    Ys, Yc = rng.normal(size=(n, d)), rng.normal(size=(n, d))
    s = 1.0 / np.sqrt(d)
    Ws, Wc, b = rng.normal(scale=s, size=(d, d)), rng.normal(scale=s, size=(d, d)), rng.normal(scale=0.1, size=d)
    g = gate_backward(Ys, Yc, Ws, Wc, b, G)
    shapes = [Ys.shape, Yc.shape, Ws.shape, Wc.shape, b.shape]
    theta = np.concatenate([a.ravel() for a in (Ys, Yc, Ws, Wc, b)])
    analytic = np.concatenate([g[k].ravel() for k in ("Y_s", "Y_c", "W_s", "W_c", "b")])

    def f_gate(t):
        return float(np.sum(G * gate(*unpack(t))))

    out["gate"] = finite_diff_check(f_gate, theta, analytic, eps, tol)

    logits, M = rng.normal(size=(3, 4)), rng.uniform(0.1, 2.0, size=(3, 4))
    alpha = float(rng.uniform(0.2, 2.0))
    Gm = rng.normal(size=(3, 4))
    g = prior_attention_backward(logits, M, alpha, Gm)
    shapes = [logits.shape, M.shape, (1,)]
    theta = np.concatenate([logits.ravel(), M.ravel(), [alpha]])
    analytic = np.concatenate([g["logits"].ravel(), g["M"].ravel(), [g["alpha"]]])

    def f_prior(t):
        lg, mm, al = unpack(t)
        return float(np.sum(Gm * prior_attention(lg, mm, float(al[0]))))

    out["prior_attention"] = finite_diff_check(f_prior, theta, analytic, eps, tol)

    pred, pseudo = rng.uniform(size=(2, 3, 4, 4)), rng.uniform(size=(2, 3, 4, 4))
    conf = rng.uniform(size=(2, 3))
    out["pose_heatmap_loss"] = finite_diff_check(
        lambda t: pose_heatmap_loss(t, pseudo, conf), pred, pose_heatmap_loss_grad(pred, pseudo, conf), eps, tol)
    return out


def gradient_check_suite(
    seed: int = 0, instances: int = 20, eps: float = 1e-6, tol: float = 1e-5,
    map_fn: Callable = map,
) -> dict[str, GradCheckReport]:
    """Worst report per operation over ``instances`` random instances.

    Each instance draws from its own child of ``seed``, so results do not
    depend on the order in which ``map_fn`` evaluates them.
    """
    children = np.random.SeedSequence(seed).spawn(instances)
    runs = list(map_fn(lambda ss: _instance_checks(np.random.default_rng(ss), eps, tol), children))
    worst: dict[str, GradCheckReport] = {}
    for reports in runs:
        for name, rep in reports.items():
            if name not in worst or rep.max_rel_error > worst[name].max_rel_error:
                worst[name] = rep
    return worst
