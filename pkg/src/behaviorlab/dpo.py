"""Verified toy-scale fine-tuning numerics.

Two losses over small categorical sequence policies, with analytic gradients
that the test suite checks against central finite differences:

* supervised loss: negative sum of sequence log-likelihoods,
  L = -sum_i log p(y_i); gradient at each position is softmax(logits) minus
  the one-hot target, summed over targets.

* preference loss over (chosen, rejected) log-prob quadruples:
  per item  z = beta * ((lp_theta_w - lp_ref_w) - (lp_theta_l - lp_ref_l))
  and       loss = -log sigmoid(z),  averaged over the batch.
  -log sigmoid(z) is computed as log(1 + exp(-z)) via logaddexp, which is
  stable for |z| >> 30. At theta == ref the loss is exactly ln 2 for any
  beta; swapping chosen/rejected maps z to -z.

The preference kernel takes bare log-prob quadruples, decoupled from
ToyPolicy, so externally computed log-probs (from a real fine-tuning stack)
can reuse the same verified math.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class TokenOutOfRange(Exception):
    pass


class ShapeMismatch(Exception):
    pass


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=float)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class ToyPolicy:
    """Categorical sequence policy: independent softmax over each of L
    positions with V-way logits."""

    logits: np.ndarray  # (L, V)

    def __post_init__(self):
        self.logits = np.asarray(self.logits, dtype=float)
        if self.logits.ndim != 2:
            raise ShapeMismatch("logits must be (seq_len, vocab_size)")

    @property
    def seq_len(self) -> int:
        return self.logits.shape[0]

    @property
    def vocab_size(self) -> int:
        return self.logits.shape[1]

    def log_softmax(self) -> np.ndarray:
        z = self.logits - self.logits.max(axis=1, keepdims=True)
        return z - np.log(np.exp(z).sum(axis=1, keepdims=True))

    def softmax(self) -> np.ndarray:
        return np.exp(self.log_softmax())

    def copy(self) -> "ToyPolicy":
        return ToyPolicy(self.logits.copy())

    @classmethod
    def uniform(cls, seq_len: int, vocab_size: int) -> "ToyPolicy":
        return cls(np.zeros((seq_len, vocab_size)))


def _check_tokens(policy: ToyPolicy, tokens) -> np.ndarray:
    arr = np.asarray(tokens, dtype=int)
    if arr.shape != (policy.seq_len,):
        raise ShapeMismatch(f"response must have length {policy.seq_len}")
    if arr.min(initial=0) < 0 or arr.max(initial=-1) >= policy.vocab_size:
        raise TokenOutOfRange(f"tokens must lie in [0, {policy.vocab_size})")
    return arr


def policy_logprob(policy: ToyPolicy, response) -> float:
    """Exact log-probability of a length-L response: sum of position-wise
    log-softmax values. Probabilities over all V^L responses sum to 1."""
    tokens = _check_tokens(policy, response)
    ls = policy.log_softmax()
    return float(ls[np.arange(policy.seq_len), tokens].sum())


def sft_loss(policy: ToyPolicy, targets: list) -> tuple[float, np.ndarray]:
    """Negative sum of target log-probs and its gradient w.r.t. the logits."""
    token_rows = [_check_tokens(policy, t) for t in targets]
    ls = policy.log_softmax()
    probs = np.exp(ls)
    loss = 0.0
    grad = np.zeros_like(policy.logits)
    idx = np.arange(policy.seq_len)
    for tokens in token_rows:
        loss -= float(ls[idx, tokens].sum())
        grad += probs
        grad[idx, tokens] -= 1.0
    return loss, grad


@dataclass
class DpoBatch:
    """Log-prob quadruples, one row per preference pair:
    columns (lp_theta_w, lp_theta_l, lp_ref_w, lp_ref_l)."""

    quadruples: np.ndarray  # (N, 4)
    beta: float

    def __post_init__(self):
        self.quadruples = np.asarray(self.quadruples, dtype=float)
        if self.quadruples.ndim != 2 or self.quadruples.shape[1] != 4:
            raise ShapeMismatch("quadruples must be (N, 4)")
        if self.quadruples.shape[0] < 1:
            raise ShapeMismatch("batch must contain at least one item")
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if (self.quadruples > 0).any():
            raise ValueError("log-probabilities must be <= 0")

    def margins(self) -> np.ndarray:
        tw, tl, rw, rl = self.quadruples.T
        return self.beta * ((tw - rw) - (tl - rl))


def dpo_loss(batch: DpoBatch) -> tuple[float, np.ndarray]:
    """Mean preference loss and its gradient w.r.t. each log-prob input.

    Per item: d/d lp_theta_w = -beta (1 - sigmoid(z)), the theta_l entry gets
    the opposite sign, and the reference entries mirror the theta ones.
    """
    z = batch.margins()
    losses = np.logaddexp(0.0, -z)
    n = len(z)
    coeff = batch.beta * (1.0 - _sigmoid(z)) / n
    grads = np.empty_like(batch.quadruples)
    grads[:, 0] = -coeff  # lp_theta_w
    grads[:, 1] = coeff  # lp_theta_l
    grads[:, 2] = coeff  # lp_ref_w
    grads[:, 3] = -coeff  # lp_ref_l
    return float(losses.mean()), grads


@dataclass(frozen=True)
class TraceRow:
    step: int
    loss: float
    mean_margin: float


def train_toy(
    policy: ToyPolicy,
    ref: ToyPolicy,
    pairs: list[tuple[list, list]],
    beta: float = 0.1,
    lr: float = 0.1,
    steps: int = 100,
) -> tuple[ToyPolicy, list[TraceRow]]:
    """Plain gradient descent of the preference loss through the policy's
    log-probs; the reference stays frozen. Returns the trained policy and a
    per-step (loss, mean margin) trace."""
    if policy.logits.shape != ref.logits.shape:
        raise ShapeMismatch("policy and reference must share shape")
    if lr < 0:
        raise ValueError("lr must be >= 0")
    current = policy.copy()
    wins = [_check_tokens(current, w) for w, _ in pairs]
    loses = [_check_tokens(current, l) for _, l in pairs]
    ref_w = np.array([policy_logprob(ref, w) for w in wins])
    ref_l = np.array([policy_logprob(ref, l) for l in loses])
    idx = np.arange(current.seq_len)

    trace: list[TraceRow] = []
    for step in range(steps):
        ls = current.log_softmax()
        probs = np.exp(ls)
        th_w = np.array([float(ls[idx, w].sum()) for w in wins])
        th_l = np.array([float(ls[idx, l].sum()) for l in loses])
        batch = DpoBatch(np.column_stack([th_w, th_l, ref_w, ref_l]), beta)
        loss, grads = dpo_loss(batch)
        trace.append(TraceRow(step, loss, float(batch.margins().mean())))

        grad_logits = np.zeros_like(current.logits)
        for i, (w, l) in enumerate(zip(wins, loses)):
            # d logp(seq)/d logits[pos, :] = onehot(seq[pos]) - softmax(pos)
            gw, gl = grads[i, 0], grads[i, 1]
            grad_logits[idx, w] += gw
            grad_logits[idx, l] += gl
            grad_logits -= (gw + gl) * probs
        current.logits = current.logits - lr * grad_logits
    return current, trace


def write_trace_csv(trace: list[TraceRow], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "loss", "mean_margin"])
        for row in trace:
            writer.writerow([row.step, f"{row.loss:.12g}", f"{row.mean_margin:.12g}"])


# ---------------------------------------------------------------- self-check


@dataclass(frozen=True)
class CheckResult:
    name: str
    ok: bool
    detail: str


def _grad_rel_err(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(1.0, abs(analytic), abs(numeric))


def run_verification(
    seed: int = 0, batches: int = 1000, fd_step: float = 1e-5, tol: float = 1e-6
) -> list[CheckResult]:
    """Numeric verification suite behind the dpo-check command: fixed-point
    values, finite-difference gradient checks over random batches, a descent
    step, and exhaustive probability-mass enumeration."""
    rng = np.random.default_rng(seed)
    results: list[CheckResult] = []

    worst_ln2 = 0.0
    for beta in (0.01, 0.1, 1.0, 10.0):
        lp = rng.uniform(-5, 0, size=(8, 2))
        quad = np.column_stack([lp[:, 0], lp[:, 1], lp[:, 0], lp[:, 1]])
        loss, _ = dpo_loss(DpoBatch(quad, beta))
        worst_ln2 = max(worst_ln2, abs(loss - np.log(2.0)))
    results.append(
        CheckResult(
            "loss at theta == ref equals ln 2 (beta in {0.01, 0.1, 1, 10})",
            worst_ln2 < 1e-12,
            f"max |loss - ln2| = {worst_ln2:.3e}",
        )
    )

    quad = np.array([[np.log(2.0) - 1.0, np.log(0.5) - 1.0, -1.0, -1.0]])
    loss, _ = dpo_loss(DpoBatch(quad, 1.0))
    err = abs(loss - np.log(1.25))
    results.append(
        CheckResult(
            "closed form: logratios ln2 / ln(1/2), beta=1 -> ln 1.25",
            err < 1e-12,
            f"|loss - ln1.25| = {err:.3e}",
        )
    )

    worst = 0.0
    for _ in range(batches):
        n = int(rng.integers(1, 6))
        quad = rng.uniform(-10, 0, size=(n, 4))
        beta = float(rng.uniform(0.01, 5.0))
        batch = DpoBatch(quad, beta)
        _, grads = dpo_loss(batch)
        for i in range(n):
            for j in range(4):
                bumped = quad.copy()
                bumped[i, j] += fd_step
                up, _ = dpo_loss(DpoBatch(bumped, beta))
                bumped[i, j] -= 2 * fd_step
                down, _ = dpo_loss(DpoBatch(bumped, beta))
                numeric = (up - down) / (2 * fd_step)
                worst = max(worst, _grad_rel_err(grads[i, j], numeric))
    results.append(
        CheckResult(
            f"preference-loss gradients vs central differences ({batches} batches)",
            worst <= tol,
            f"max rel err = {worst:.3e}",
        )
    )

    policy = ToyPolicy(rng.normal(size=(2, 3)))
    loss, grad = sft_loss(policy, [[0, 1], [2, 0]])
    worst_sft = 0.0
    for pos in range(2):
        for v in range(3):
            bumped = policy.copy()
            bumped.logits[pos, v] += fd_step
            up, _ = sft_loss(bumped, [[0, 1], [2, 0]])
            bumped.logits[pos, v] -= 2 * fd_step
            down, _ = sft_loss(bumped, [[0, 1], [2, 0]])
            worst_sft = max(
                worst_sft, _grad_rel_err(grad[pos, v], (up - down) / (2 * fd_step))
            )
    results.append(
        CheckResult(
            "supervised-loss gradient vs central differences",
            worst_sft <= tol,
            f"max rel err = {worst_sft:.3e}",
        )
    )

    ref = ToyPolicy.uniform(1, 2)
    trained, trace = train_toy(ref.copy(), ref, [([0], [1])], beta=0.5, lr=0.1, steps=1)
    ls = trained.log_softmax()
    after = dpo_loss(
        DpoBatch(
            np.array(
                [[ls[0, 0], ls[0, 1], policy_logprob(ref, [0]), policy_logprob(ref, [1])]]
            ),
            0.5,
        )
    )[0]
    results.append(
        CheckResult(
            "one descent step from the reference strictly lowers the loss",
            trace[0].loss == float(np.log(2.0)) and after < trace[0].loss,
            f"ln2 = {trace[0].loss:.6f} -> {after:.6f}",
        )
    )

    policy = ToyPolicy(rng.normal(size=(3, 3)))
    total = 0.0
    for a in range(3):
        for b in range(3):
            for c in range(3):
                total += np.exp(policy_logprob(policy, [a, b, c]))
    results.append(
        CheckResult(
            "exp(logprob) sums to 1 over all V^L responses (V=3, L=3)",
            abs(total - 1.0) < 1e-9,
            f"|sum - 1| = {abs(total - 1.0):.3e}",
        )
    )

    loss_val, _ = sft_loss(ToyPolicy.uniform(1, 4), [[2]])
    err = abs(loss_val - np.log(4.0))
    results.append(
        CheckResult(
            "uniform policy, V=4, L=1: supervised loss equals ln 4",
            err < 1e-12,
            f"|loss - ln4| = {err:.3e}",
        )
    )
    return results
