"""Single-hidden-layer REINFORCE policy with exploration overlays.

Three overlays decide what happens on an exploration step:

* ``EG``: uniform random action.
* ``KGE-UCB``: confidence bonus for actions in the bias set, penalty for the rest.
* ``KGE-UAB``: probability mass shifted toward the bias set.

By default every choice is an argmax (lowest index on ties). With
``sample=True`` the agent draws from the policy outside exploration steps and
from the shifted distribution on KGE-UAB steps; KGE-UCB scores are not a
distribution and stay argmax.
"""
from __future__ import annotations

import hashlib
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

STRATEGIES = ("EG", "KGE-UCB", "KGE-UAB")
HIDDEN = 24
DECAY_RATE = math.log(0.01) / 2000


class DimensionMismatch(ValueError):
    pass


class EmptyBiasSet(ValueError):
    pass


class EmptyBuffer(ValueError):
    pass


class ActionSpaceMismatch(ValueError):
    pass


def normalize_strategy(name: str) -> str:
    key = name.strip().upper()
    if key not in STRATEGIES:
        raise ValueError(f"unknown exploration strategy {name!r}; expected one of {STRATEGIES}")
    return key


@dataclass
class PolicyParams:
    w1: np.ndarray  # hidden x input
    b1: np.ndarray
    w2: np.ndarray  # actions x hidden
    b2: np.ndarray
    alpha: float = 1e-3
    gamma: float = 0.98
    optimizer: str = "sgd"
    decay: float = 0.99
    cache: dict = field(default_factory=dict, repr=False)

    @classmethod
    def init(cls, n_in: int, n_out: int, rng: np.random.Generator, hidden: int = HIDDEN, **kw) -> "PolicyParams":
        return cls(
            rng.uniform(-0.1, 0.1, (hidden, n_in)),
            rng.uniform(-0.1, 0.1, hidden),
            rng.uniform(-0.1, 0.1, (n_out, hidden)),
            rng.uniform(-0.1, 0.1, n_out),
            **kw,
        )

    @classmethod
    def zeros(cls, n_in: int, n_out: int, hidden: int = HIDDEN) -> "PolicyParams":
        return cls(np.zeros((hidden, n_in)), np.zeros(hidden), np.zeros((n_out, hidden)), np.zeros(n_out))

    @property
    def n_in(self) -> int:
        return self.w1.shape[1]

    @property
    def n_out(self) -> int:
        return self.w2.shape[0]

    @property
    def shapes(self) -> list:
        return [list(a.shape) for a in (self.w1, self.b1, self.w2, self.b2)]

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in (self.w1, self.b1, self.w2, self.b2)])

    def with_flat(self, vec: np.ndarray) -> "PolicyParams":
        arrays = (self.w1, self.b1, self.w2, self.b2)
        want = sum(a.size for a in arrays)
        if want != len(vec):
            raise DimensionMismatch(f"expected {want} parameters, got {len(vec)}")
        parts, i = [], 0
        for a in arrays:
            parts.append(np.asarray(vec[i:i + a.size], dtype=float).reshape(a.shape))
            i += a.size
        return PolicyParams(*parts, alpha=self.alpha, gamma=self.gamma, optimizer=self.optimizer, decay=self.decay)

    def copy(self) -> "PolicyParams":
        return self.with_flat(self.flat())


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _forward(params: PolicyParams, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    h = np.tanh(x @ params.w1.T + params.b1)
    return h, _softmax(h @ params.w2.T + params.b2)


def policy_probs(params: PolicyParams, obs) -> np.ndarray:
    """Action distribution for one observation (array or object with ``vector()``)."""
    x = np.asarray(obs.vector() if hasattr(obs, "vector") else obs, dtype=float)
    if x.shape != (params.n_in,):
        raise DimensionMismatch(f"observation has shape {x.shape}, policy expects ({params.n_in},)")
    return _forward(params, x)[1]


def bias_ucb(probs, delta, counts, t: int, c: float) -> np.ndarray:
    """Add ``c*sqrt(ln t / N)`` to bias-set actions and subtract it elsewhere."""
    probs = np.asarray(probs, dtype=float)
    bonus = c * np.sqrt(math.log(t) / np.asarray(counts, dtype=float))
    sign = -np.ones_like(probs)
    sign[list(delta)] = 1.0
    return probs + sign * bonus


def bias_uab(probs, delta, mu: float) -> np.ndarray:
    """Move probability mass toward the bias set; the result stays normalized."""
    probs = np.asarray(probs, dtype=float)
    idx = list(delta)
    mass = float(probs[idx].sum()) if idx else 0.0
    if mass <= 0.0:
        raise EmptyBiasSet("bias set carries no probability mass")
    out = probs / mu
    out[idx] = (mu - 1.0 + mass) * probs[idx] / (mu * mass)
    return out


def decayed(n: int, hi: float, lo: float, rate: float = DECAY_RATE) -> float:
    """Exponential schedule from ``hi`` toward the floor ``lo`` after ``n`` episodes."""
    return lo + (hi - lo) * math.exp(n * rate)


@dataclass
class ExplorationState:
    strategy: str
    delta: tuple
    n_actions: int
    epsilon: float = 0.3
    c: float = 0.0005
    mu: float = 2.0
    t: int = 1
    counts: np.ndarray | None = None

    def __post_init__(self):
        self.strategy = normalize_strategy(self.strategy)
        if self.counts is None:
            self.counts = np.ones(self.n_actions)


def _draw(probs: np.ndarray, rng: np.random.Generator) -> int:
    return int(min(np.searchsorted(np.cumsum(probs), rng.random() * probs.sum(), side="right"), len(probs) - 1))


def select_action(probs, expl: ExplorationState, rng: np.random.Generator, *, sample: bool = False) -> int:
    """Pick an action.

    With ``sample`` the agent draws from ``probs`` off-exploration and from the
    biased distribution on KGE-UAB exploration steps, instead of taking argmaxes.
    """
    probs = np.asarray(probs, dtype=float)
    if rng.random() < expl.epsilon:
        if expl.strategy == "EG":
            a = int(rng.integers(len(probs)))
        elif expl.strategy == "KGE-UCB":
            a = int(np.argmax(bias_ucb(probs, expl.delta, expl.counts, expl.t, expl.c)))
        else:
            biased = bias_uab(probs, expl.delta, expl.mu)
            # the biased vector is a distribution, so sampling keeps the bump proportional
            a = _draw(biased, rng) if sample else int(np.argmax(biased))
    elif sample:
        a = _draw(probs, rng)
    else:
        a = int(np.argmax(probs))
    expl.counts[a] += 1
    expl.t += 1
    return a


@dataclass
class EpisodeBuffer:
    states: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    dones: list = field(default_factory=list)

    def append(self, state, action: int, reward: float, done: bool) -> None:
        self.states.append(np.asarray(state, dtype=float))
        self.actions.append(int(action))
        self.rewards.append(float(reward))
        self.dones.append(bool(done))

    def end_episode(self) -> None:
        if self.dones:
            self.dones[-1] = True

    def __len__(self):
        return len(self.actions)

    def clear(self) -> None:
        self.states.clear()
        self.actions.clear()
        self.rewards.clear()
        self.dones.clear()

    def returns(self, gamma: float) -> np.ndarray:
        """Discounted return-to-go, restarting after every done flag."""
        out = np.zeros(len(self.rewards))
        g = 0.0
        for i in range(len(self.rewards) - 1, -1, -1):
            if self.dones[i]:
                g = 0.0
            g = self.rewards[i] + gamma * g
            out[i] = g
        return out

    def step_index(self) -> np.ndarray:
        """Position of each transition within its episode."""
        out = np.zeros(len(self.dones), dtype=int)
        for i in range(1, len(self.dones)):
            out[i] = 0 if self.dones[i - 1] else out[i - 1] + 1
        return out


def log_prob_gradient(params: PolicyParams, states: np.ndarray, actions: np.ndarray, weights: np.ndarray):
    """Gradient of ``sum_t w_t * log pi(a_t | s_t)`` as (w1, b1, w2, b2)."""
    h, p = _forward(params, states)
    d_logits = -p
    d_logits[np.arange(len(actions)), actions] += 1.0
    d_logits *= weights[:, None]
    g_w2 = d_logits.T @ h
    g_b2 = d_logits.sum(axis=0)
    d_z = (d_logits @ params.w2) * (1.0 - h * h)
    g_w1 = d_z.T @ states
    g_b1 = d_z.sum(axis=0)
    return g_w1, g_b1, g_w2, g_b2


def objective(params: PolicyParams, states, actions, weights) -> float:
    _, p = _forward(params, states)
    return float(np.sum(weights * np.log(p[np.arange(len(actions)), actions])))


BASELINES = ("time", "batch")


def update_network(params: PolicyParams, buffer: EpisodeBuffer, *, normalize: bool = True,
                   baseline: str = "time") -> PolicyParams:
    """One REINFORCE ascent step on the buffered episodes; clears the buffer.

    With ``normalize`` the returns are centred and scaled by their std. The
    ``time`` baseline centres each return on the batch mean at the same step
    index; ``batch`` uses a single mean. Truncated failures all end with
    near-zero return-to-go, so a single mean rewards whatever was done late in
    an episode, while the per-step mean leaves an all-failure batch inert.
    """
    if not len(buffer):
        raise EmptyBuffer("no transitions to learn from")
    if baseline not in BASELINES:
        raise ValueError(f"unknown baseline {baseline!r}")
    states = np.stack(buffer.states)
    actions = np.asarray(buffer.actions)
    g = buffer.returns(params.gamma)
    if normalize and len(g) > 1:
        if baseline == "time":
            idx = buffer.step_index()
            sums = np.bincount(idx, weights=g)
            g = g - (sums / np.bincount(idx))[idx]
        else:
            g = g - g.mean()
        g = g / (g.std() + 1e-8)
    grads = log_prob_gradient(params, states, actions, g)
    buffer.clear()
    new = params.copy()
    new.cache = params.cache
    for name, grad in zip(("w1", "b1", "w2", "b2"), grads):
        if params.optimizer == "rmsprop":
            sq = params.cache.get(name, 0.0)
            sq = params.decay * sq + (1 - params.decay) * grad * grad
            params.cache[name] = sq
            step = grad / (np.sqrt(sq) + 1e-5)
        else:
            step = grad
        setattr(new, name, getattr(params, name) + params.alpha * step)
    return new


def entity_hash(entities) -> str:
    return hashlib.sha256("\0".join(entities).encode()).hexdigest()[:16]


def dump_params(params: PolicyParams, actions, entities) -> bytes:
    """Flat parameter vector behind a JSON header line."""
    header = {
        "format": "rapidlearn-policy v1",
        "shapes": params.shapes,
        "actions": list(actions),
        "entities": entity_hash(entities),
        "alpha": params.alpha,
        "gamma": params.gamma,
    }
    buf = io.BytesIO()
    np.save(buf, params.flat())
    return json.dumps(header).encode() + b"\n" + buf.getvalue()


def load_params(blob: bytes, actions=None, entities=None) -> tuple[PolicyParams, dict]:
    head, _, body = blob.partition(b"\n")
    header = json.loads(head)
    if header.get("format") != "rapidlearn-policy v1":
        raise ValueError("not a rapidlearn policy record")
    if actions is not None and list(actions) != header["actions"]:
        raise ActionSpaceMismatch("stored policy was trained on a different action space")
    if entities is not None and entity_hash(entities) != header["entities"]:
        raise ActionSpaceMismatch("stored policy was trained on a different entity set")
    (hid, n_in), _, (n_out, _), _ = header["shapes"]
    vec = np.load(io.BytesIO(body))
    params = PolicyParams.zeros(n_in, n_out, hid).with_flat(vec)
    params.alpha, params.gamma = header["alpha"], header["gamma"]
    return params, header
