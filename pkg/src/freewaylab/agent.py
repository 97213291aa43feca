"""Double-DQN agent: epsilon-greedy control with rule-based lane-change
masking, TD-target construction, and the training loop.

The online network both selects actions and picks the next-state argmax for
the targets; the frozen target network evaluates that argmax and is re-synced
from the online network every ``target_sync`` gradient steps.  One gradient
step runs per environment step once the replay memory holds a minibatch.
Exploration follows eps_k = eps_min + (eps_max - eps_min) * exp(-lambda * k),
annealed per gradient step, and training stops when it reaches eps_min
(within 1e-6) or the step budget runs out.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import mlp
from .actions import Action, N_ACTIONS, lane_shift
from .replay import PrioritizedMemory, Transition
from .reward import RewardConfig
from .seeding import stream_rng, stream_seed
from .simulation import (Neighbor, SensedEnvironment, SimConfig,
                         detect_collisions, estimate_velocities,
                         generate_scenario, obstacles_around, sense, step,
                         warm_up)
from .state_codec import encode

EPS_TERMINATION_TOL = 1e-6


@dataclass
class Hyperparams:
    gamma: float = 0.995
    batch_size: int = 64
    target_sync: int = 1000          # gradient steps between target copies
    lam: float = 7.5e-6              # annealing rate
    eps_min: float = 0.01
    eps_max: float = 1.0
    max_steps: int = 2_000_000       # gradient-step budget
    horizon: int = 60                # ego decisions per episode
    lr: float = 0.003
    memory_capacity: int = 2000
    per_alpha: float = 0.6
    per_eps: float = 0.01
    warmup_transitions: int = 64     # no gradient steps before this many

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if self.target_sync < 1:
            raise ValueError("target_sync must be >= 1")


def lambda_for_budget(budget: int, eps_min: float = 0.01,
                      eps_max: float = 1.0) -> float:
    """Annealing rate that reaches the termination criterion at ``budget``."""
    return math.log((eps_max - eps_min) / EPS_TERMINATION_TOL) / budget


def epsilon(k: int, hp: Optional[Hyperparams] = None) -> float:
    """Exploration factor after k training steps."""
    hp = hp or Hyperparams()
    return hp.eps_min + (hp.eps_max - hp.eps_min) * math.exp(-hp.lam * k)


def mask_actions(sensed: SensedEnvironment) -> np.ndarray:
    """Boolean permission vector over the 7 actions.

    Lane changes are removed when the target lane is off the road or some
    vehicle in it would overlap the ego; everything else (KEEP included) is
    always permitted.
    """
    mask = np.ones(N_ACTIONS, dtype=bool)
    for action in (Action.CHANGE_LEFT, Action.CHANGE_RIGHT):
        target = sensed.ego_lane + lane_shift(action)
        if target < 0 or target >= sensed.n_lanes:
            mask[action] = False
            continue
        for n in sensed.neighbors:
            if n.lane == target and n.rel_x < sensed.ego_length \
                    and n.rel_x + n.length > 0:
                mask[action] = False
                break
    return mask


def masked_argmax(qvalues: np.ndarray, mask: np.ndarray) -> Action:
    q = np.where(mask, qvalues, -np.inf)
    return Action(int(np.argmax(q)))


def select_action(qvalues: np.ndarray, mask: np.ndarray, eps: float,
                  rng: np.random.Generator) -> Action:
    """Masked argmax with probability 1-eps, else uniform over permitted."""
    if rng.random() < eps:
        permitted = np.flatnonzero(mask)
        return Action(int(rng.choice(permitted)))
    return masked_argmax(qvalues, mask)


def td_targets(batch, online: mlp.MlpParams, target: mlp.MlpParams,
               gamma: float) -> np.ndarray:
    """y = r for terminal transitions, else r + gamma * Q_target(s', a*) with
    a* = argmax over s'-permitted actions of Q_online(s', .)."""
    next_states = np.stack([tr.s_next for tr in batch])
    q_online = mlp.forward_batch(online, next_states)
    q_target = mlp.forward_batch(target, next_states)
    ys = np.empty(len(batch))
    for i, tr in enumerate(batch):
        if tr.done:
            ys[i] = tr.r
            continue
        mask = tr.next_mask if tr.next_mask is not None \
            else np.ones(N_ACTIONS, dtype=bool)
        a_star = int(np.argmax(np.where(mask, q_online[i], -np.inf)))
        ys[i] = tr.r + gamma * q_target[i, a_star]
    return ys


def train_step(online: mlp.MlpParams, target: mlp.MlpParams,
               opt: mlp.AdamState, memory: PrioritizedMemory,
               hp: Hyperparams, k: int, rng: np.random.Generator):
    """One gradient step: sample, fit TD targets, refresh priorities.

    ``k`` is the 1-based index of this gradient step; the target network is
    re-synced from the online one whenever k is a multiple of target_sync.
    Returns (loss, d_values) with d the absolute TD differences used for the
    priority update.
    """
    idx, batch = memory.sample(hp.batch_size, rng)
    ys = td_targets(batch, online, target, hp.gamma)
    states = np.stack([tr.s for tr in batch])
    acts = np.array([tr.a for tr in batch])
    q_before = mlp.forward_batch(online, states)
    d_values = np.abs(ys - q_before[np.arange(len(batch)), acts])
    grad_w, grad_b, loss = mlp.backward_batch(online, states, acts, ys)
    mlp.adam_step(online, (grad_w, grad_b), opt)
    memory.update_priorities(idx, d_values)
    if k % hp.target_sync == 0:
        synced = mlp.copy_params(online)
        target.weights = synced.weights
        target.biases = synced.biases
    return loss, d_values


@dataclass
class EpisodeRecord:
    episode: int
    steps: int
    ret: float
    collisions: int
    eps: float
    loss: float
    gradient_steps: int = 0


@dataclass
class TrainResult:
    params: mlp.MlpParams
    opt: mlp.AdamState
    episodes: list
    losses: list
    gradient_steps: int


def build_view(prev: Optional[SensedEnvironment],
               cur: SensedEnvironment) -> SensedEnvironment:
    """Replace measured neighbor speeds by two-snapshot estimates.

    This is the scene the policy, the masking, and the shield all consume;
    estimates are clamped at 0 (speeds are nonnegative in this world).
    """
    est = estimate_velocities(prev, cur)
    neighbors = [Neighbor(n.vehicle_id, n.lane, n.rel_x,
                          max(est[n.vehicle_id], 0.0), n.length)
                 for n in cur.neighbors]
    return SensedEnvironment(t=cur.t, ego_id=cur.ego_id, ego_lane=cur.ego_lane,
                             ego_x=cur.ego_x, ego_v=cur.ego_v,
                             ego_length=cur.ego_length, n_lanes=cur.n_lanes,
                             neighbors=neighbors)


def observe(world, config: SimConfig, prev_sensed, rng):
    """sense -> velocity view -> state vector/mask for the world's ego."""
    sensed = sense(world, world.ego_id, config.noise_pct, rng)
    view = build_view(prev_sensed, sensed)
    return sensed, view, encode(view), mask_actions(view)


def train(sim_cfg: SimConfig, hp: Hyperparams, reward_cfg: RewardConfig,
          seed: int, log_cb=None) -> TrainResult:
    """Episode loop over seeded scenarios until the epsilon criterion or the
    step budget halts training.

    Scenarios follow the training recipe: the ego is the ego_entry_index-th
    entrant, acts once per second over the episode horizon, and a counted
    collision ends the episode.  The lane-change masking is always on; no
    other safety mechanism is applied during training.
    """
    rng = stream_rng(seed, "train-actions")
    net_rng = stream_rng(seed, "train-init")
    online = mlp.init_params(net_rng)
    target = mlp.copy_params(online)
    opt = mlp.init_adam(online, lr=hp.lr)
    memory = PrioritizedMemory(hp.memory_capacity, hp.per_alpha, hp.per_eps)

    episodes = []
    losses = []
    k = 0
    episode = 0
    done_training = False
    while not done_training:
        world = generate_scenario(
            sim_cfg, seed=stream_seed(seed, "train-scenario", episode))
        warm_up(world, sim_cfg)
        prev_sensed = None
        sensed, view, state, mask = observe(world, sim_cfg, prev_sensed, rng)
        ep_return = 0.0
        ep_collisions = 0
        ep_loss = math.nan
        steps = 0
        for t in range(hp.horizon):
            eps_k = epsilon(k, hp)
            q = mlp.forward(online, state)
            action = select_action(q, mask, eps_k, rng)
            v_prev, l_prev = world.ego.v, world.ego.lane
            step(world, action, sim_cfg)
            events = detect_collisions(world, reward_cfg)
            ego = world.ego
            br = _reward_for(world, reward_cfg, ego, v_prev, l_prev)
            collided = len(events) > 0
            terminal = collided or t == hp.horizon - 1
            prev_sensed = sensed
            sensed, view, next_state, next_mask = observe(
                world, sim_cfg, prev_sensed, rng)
            memory.push(Transition(state, int(action), br.total, next_state,
                                   terminal, next_mask))
            ep_return += br.total
            steps += 1
            if len(memory) >= hp.warmup_transitions:
                k += 1
                loss, _ = train_step(online, target, opt, memory, hp, k, rng)
                losses.append(loss)
                ep_loss = loss
                if k >= hp.max_steps or \
                        epsilon(k, hp) - hp.eps_min < EPS_TERMINATION_TOL:
                    done_training = True
            state, mask = next_state, next_mask
            if collided:
                ep_collisions = 1
                break
            if done_training:
                break
        rec = EpisodeRecord(episode=episode, steps=steps, ret=ep_return,
                            collisions=ep_collisions, eps=epsilon(k, hp),
                            loss=ep_loss, gradient_steps=k)
        episodes.append(rec)
        if log_cb is not None:
            log_cb(rec)
        episode += 1
    return TrainResult(params=online, opt=opt, episodes=episodes,
                       losses=losses, gradient_steps=k)


def _reward_for(world, reward_cfg, ego, v_prev, l_prev):
    from .reward import total_reward

    obstacles = obstacles_around(world, ego.id)
    return total_reward(obstacles, ego.v, v_prev, ego.lane, l_prev, reward_cfg)


def greedy_policy(params: mlp.MlpParams):
    """Frozen evaluation policy: masked argmax of the Q-network."""
    def act(state: np.ndarray, mask: np.ndarray) -> Action:
        return masked_argmax(mlp.forward(params, state), mask)
    return act
