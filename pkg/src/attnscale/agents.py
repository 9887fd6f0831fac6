"""Controllers behind one interface: two recurrent PPO agents, Double DQN, static HPA.

Every agent turns an observation into an :class:`~attnscale.control.ActionVector`;
decoding into cluster settings is shared (:func:`attnscale.control.decode_action`),
so only the policy differs between agents.
"""

import enum

import numpy as np

from . import control
from .neural import layers as L
from .neural import tensor as T
from .neural.distributions import sample_multidiscrete
from .neural.policy import Carry, PolicyArch, forward, init_policy
from .neural.tensor import UsageError

N_JOINT = int(np.prod(control.HEAD_SIZES))


class AgentKind(str, enum.Enum):
    ATTN_DOUBLE_LSTM_PPO = "ATTN_DOUBLE_LSTM_PPO"
    SINGLE_LSTM_PPO = "SINGLE_LSTM_PPO"
    DDQN = "DDQN"
    STATIC_HPA = "STATIC_HPA"

    @property
    def is_ppo(self):
        return self in (AgentKind.ATTN_DOUBLE_LSTM_PPO, AgentKind.SINGLE_LSTM_PPO)


def joint_index(a):
    """Mixed-radix (4, 3, 3, 3) encoding of an action vector."""
    if not isinstance(a, control.ActionVector):
        a = control.ActionVector(*a)
    return ((a.a_targ * 3 + a.a_lr) * 3 + a.a_mult) * 3 + a.a_enh


def from_joint_index(index):
    index = int(index)
    if not 0 <= index < N_JOINT:
        raise control.DecodeError(f"joint index {index} outside [0, {N_JOINT})")
    index, enh = divmod(index, 3)
    index, mult = divmod(index, 3)
    targ, lr = divmod(index, 3)
    return control.ActionVector(targ, lr, mult, enh)


class Agent:
    kind = None

    def begin_episode(self):
        """Reset per-episode internal state."""

    def act(self, obs, rng, explore=True, state=None):
        raise NotImplementedError

    @staticmethod
    def decode(action):
        return control.decode_action(action)


class StaticHPAAgent(Agent):
    """Fixed 50% target, multiplier 1.0, mode OFF; the simulator's HPA scales."""

    kind = AgentKind.STATIC_HPA
    ACTION = control.ActionVector(1, 1, 0, 0)

    def act(self, obs, rng, explore=True, state=None):
        if state is not None:
            raise UsageError("static HPA agent takes no internal state")
        return self.ACTION, {}


class PPOAgent(Agent):
    """Recurrent actor-critic; the architecture decides which PPO variant it is."""

    def __init__(self, kind, arch=None, params=None, rng=None):
        kind = AgentKind(kind)
        if not kind.is_ppo:
            raise ValueError(f"{kind} is not a PPO agent")
        self.kind = kind
        if arch is None:
            arch = PolicyArch()
            if kind is AgentKind.SINGLE_LSTM_PPO:
                arch = arch.single_lstm()
        self.arch = arch
        self.params = params if params is not None else init_policy(arch, rng)
        self.carry = Carry.zeros(arch)

    def begin_episode(self):
        self.carry = Carry.zeros(self.arch)

    def act(self, obs, rng, explore=True, state=None):
        """Returns the action and aux info: log_prob, value, entropy, the carry
        before this step and the attention weights."""
        if state is not None and not isinstance(state, Carry):
            raise UsageError("PPO agents take a recurrent Carry as internal state")
        carry = self.carry if state is None else state
        with T.no_grad():
            out = forward(self.params, self.arch, np.asarray(obs)[None, None, :], carry)
        head_logits = [lg.data[0, 0] for lg in out.logits]
        actions, log_prob, entropy = sample_multidiscrete(head_logits, rng, greedy=not explore)
        aux = {"log_prob": log_prob, "value": float(out.values.data[0, 0]),
               "entropy": entropy, "carry": carry, "attention": out.attention[0, 0],
               "logits": head_logits}
        if state is None:
            self.carry = out.carry
        aux["next_carry"] = out.carry
        return control.ActionVector(*actions), aux

    def value(self, obs, carry=None):
        with T.no_grad():
            out = forward(self.params, self.arch, np.asarray(obs)[None, None, :],
                          self.carry if carry is None else carry)
        return float(out.values.data[0, 0])


# Double DQN ---------------------------------------------------------------

Q_HIDDEN = 128


def init_q_network(rng, obs_dim=control.OBS_DIM, hidden=Q_HIDDEN, n_out=N_JOINT):
    params = {}
    L.init_linear(params, rng, "q0", obs_dim, hidden)
    L.init_linear(params, rng, "q1", hidden, hidden)
    L.init_linear(params, rng, "q2", hidden, n_out)
    return params


def q_values(params, obs):
    """Q-values for a batch of observations (B, obs_dim) -> Tensor (B, 108)."""
    x = T.Tensor(np.atleast_2d(obs))
    x = T.relu(L.linear(params, "q0", x))
    x = T.relu(L.linear(params, "q1", x))
    return L.linear(params, "q2", x)


def q_values_np(params, obs):
    with T.no_grad():
        return q_values(params, obs).data


def copy_params(params):
    return {k: T.Tensor(p.data.copy(), requires_grad=True, name=k) for k, p in params.items()}


def ddqn_target(reward, done, next_obs, online, target, gamma):
    """Double-Q bootstrap target for one transition.

    The online network picks the next action, the target network values it.
    """
    if not 0.0 <= gamma < 1.0:
        raise ValueError("gamma must be in [0, 1)")
    if done:
        return float(reward)
    a_star = int(np.argmax(q_values_np(online, next_obs)[0]))
    return float(reward) + gamma * float(q_values_np(target, next_obs)[0, a_star])


def ddqn_targets(rewards, dones, next_obs, online, target, gamma):
    """Vectorized :func:`ddqn_target` over a batch."""
    q_on = q_values_np(online, next_obs)
    q_tg = q_values_np(target, next_obs)
    a_star = np.argmax(q_on, axis=1)
    boot = q_tg[np.arange(len(a_star)), a_star]
    return np.asarray(rewards, dtype=np.float64) + gamma * (1.0 - np.asarray(dones, float)) * boot


class ReplayBuffer:
    """Fixed-capacity FIFO transition store with uniform sampling."""

    def __init__(self, capacity=50_000, obs_dim=control.OBS_DIM):
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_dim))
        self.next_obs = np.zeros((capacity, obs_dim))
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.dones = np.zeros(capacity)
        self.size = 0
        self._next = 0

    def __len__(self):
        return self.size

    def add(self, obs, action_index, reward, next_obs, done):
        i = self._next
        self.obs[i] = obs
        self.actions[i] = action_index
        self.rewards[i] = reward
        self.next_obs[i] = next_obs
        self.dones[i] = float(done)
        self._next = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, rng, batch):
        idx = rng.integers(0, self.size, size=batch)
        return (self.obs[idx], self.actions[idx], self.rewards[idx], self.next_obs[idx],
                self.dones[idx])


class DDQNAgent(Agent):
    kind = AgentKind.DDQN

    def __init__(self, params=None, rng=None, epsilon=0.0):
        self.params = params if params is not None else init_q_network(rng)
        self.epsilon = epsilon

    def act(self, obs, rng, explore=True, state=None):
        if state is not None:
            raise UsageError("DDQN agent takes no internal state")
        if explore and rng.random() < self.epsilon:
            idx = int(rng.integers(0, N_JOINT))
            return from_joint_index(idx), {"joint": idx}
        q = q_values_np(self.params, obs)[0]
        idx = int(np.argmax(q))
        return from_joint_index(idx), {"joint": idx, "q": q}


def make_agent(kind, rng=None, arch=None):
    kind = AgentKind(kind)
    if kind.is_ppo:
        return PPOAgent(kind, arch=arch, rng=rng)
    if kind is AgentKind.DDQN:
        return DDQNAgent(rng=rng)
    return StaticHPAAgent()
