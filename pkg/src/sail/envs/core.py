"""Environment protocol and the desk-scale control tasks.

All environments are vectorized value objects: ``reset_batch`` and
``step_batch`` act on ``(n, dim)`` arrays so rollouts of many episodes run as
one numpy pass. The single-state ``reset``/``step`` functions wrap them.
The environment reward is returned for metrics only; learners never see it.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)


class EnvError(ValueError):
    pass


@dataclass(frozen=True)
class EnvSpec:
    name: str
    state_dim: int
    action_dim: int
    discrete: bool = False
    n_actions: int = 0
    horizon: int = 100
    action_bound: float = np.inf
    params: dict = field(default_factory=dict, hash=False, compare=False)

    def __post_init__(self):
        if self.horizon < 1 or self.state_dim < 1 or self.action_dim < 1:
            raise EnvError(f"invalid EnvSpec {self.name}: dims and horizon must be >= 1")


@dataclass(frozen=True)
class Transition:
    s: np.ndarray
    a: np.ndarray
    s_next: np.ndarray
    done: bool
    t: int
    # true environment reward, only consumed by metrics
    reward: float = 0.0


def dare(A, B, Q, R, iters: int = 10000, tol: float = 1e-12):
    """Infinite-horizon discrete Riccati solution by fixed-point iteration.

    Returns ``(P, K)`` with the optimal feedback ``u = -K x``.
    """
    P = np.array(Q, dtype=np.float64)
    for _ in range(iters):
        K = np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)
        P_next = Q + A.T @ P @ (A - B @ K)
        if np.max(np.abs(P_next - P)) < tol:
            P = P_next
            break
        P = P_next
    K = np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)
    return P, K


def finite_horizon_cost_matrix(A, B, Q, R, horizon: int) -> np.ndarray:
    """``P_0`` of the finite-horizon LQR recursion (zero terminal cost)."""
    P = np.zeros_like(Q)
    for _ in range(horizon):
        K = np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)
        P = Q + A.T @ P @ (A - B @ K)
    return P


class Env:
    """Base class; subclasses define ``spec`` and the batch methods."""

    spec: EnvSpec

    def reset_batch(self, n: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def step_batch(self, states, actions, t: int, rng: np.random.Generator):
        """Return ``(next_states, rewards, terminal)`` for a batch."""
        raise NotImplementedError

    def expert_batch(self, states) -> np.ndarray:
        raise EnvError(f"{self.spec.name} has no registered expert")

    # documented expected return of the expert under the start distribution
    def expert_return(self) -> float:
        raise EnvError(f"{self.spec.name} has no registered expert")

    def check_actions(self, actions) -> np.ndarray:
        actions = np.asarray(actions, dtype=np.float64)
        if not np.all(np.isfinite(actions)):
            raise EnvError(f"non-finite action passed to {self.spec.name}")
        if self.spec.discrete:
            return actions
        b = self.spec.action_bound
        clipped = np.clip(actions, -b, b)
        if log.isEnabledFor(logging.DEBUG) and np.any(clipped != actions):
            log.debug("%s: clipped %d action entries", self.spec.name, int(np.sum(clipped != actions)))
        return clipped


class LinearQuadraticEnv(Env):
    """``x' = A x + B u`` with reward ``1 - (x'Qx + u'Ru)`` per step.

    The expert is the stationary LQR controller. Optional distractor
    dimensions are appended to the observation: i.i.d. Gaussian noise each
    step, irrelevant to dynamics and reward.
    """

    def __init__(self, name, A, B, Q, R, start_center, start_halfwidth, horizon,
                 action_bound, distractor_dim=0, distractor_std=1.0, distractor_mean=0.0,
                 distractor_loadings=None, distractor_idio=1.0, walls=()):
        self.A, self.B = np.asarray(A, float), np.asarray(B, float)
        self.Q, self.R = np.asarray(Q, float), np.asarray(R, float)
        self.start_center = np.asarray(start_center, float)
        self.start_halfwidth = np.broadcast_to(np.asarray(start_halfwidth, float), self.start_center.shape).copy()
        self.n_ctrl = self.A.shape[0]
        # (position index, velocity index, bound): inelastic walls at +-bound
        self.walls = tuple((int(p), int(v), float(b)) for p, v, b in walls)
        for p_i, _, b in self.walls:
            if abs(self.start_center[p_i]) + self.start_halfwidth[p_i] > b:
                raise EnvError(f"{name}: start distribution crosses the wall on dimension {p_i}")
        self.distractor_dim = distractor_dim
        self.distractor_std = distractor_std
        self.distractor_mean = distractor_mean
        # noise = mean + std * (L xi + idio * e) / rownorm, xi and e standard normal
        L = np.zeros((distractor_dim, 0)) if distractor_loadings is None else np.asarray(distractor_loadings, float)
        self.distractor_loadings = L
        self.distractor_idio = float(distractor_idio)
        self._distractor_norm = np.sqrt(np.sum(L**2, axis=1) + self.distractor_idio**2)
        self.spec = EnvSpec(
            name=name,
            state_dim=self.n_ctrl + distractor_dim,
            action_dim=self.B.shape[1],
            horizon=horizon,
            action_bound=action_bound,
            params={"start_center": self.start_center.tolist(),
                    "start_halfwidth": self.start_halfwidth.tolist()},
        )
        self.P, self.K = dare(self.A, self.B, self.Q, self.R)

    def _observe(self, x, rng):
        if self.distractor_dim == 0:
            return x
        n = x.shape[0]
        L = self.distractor_loadings
        raw = self.distractor_idio * rng.standard_normal((n, self.distractor_dim))
        if L.shape[1]:
            raw = rng.standard_normal((n, L.shape[1])) @ L.T + raw
        noise = self.distractor_mean + self.distractor_std * raw / self._distractor_norm
        return np.concatenate([x, noise], axis=1)

    def reset_batch(self, n, rng):
        u = rng.uniform(-1.0, 1.0, size=(n, self.n_ctrl))
        x = self.start_center + self.start_halfwidth * u
        return self._observe(x, rng)

    def step_batch(self, states, actions, t, rng):
        u = self.check_actions(actions)
        x = states[:, : self.n_ctrl]
        cost = np.einsum("ni,ij,nj->n", x, self.Q, x) + np.einsum("ni,ij,nj->n", u, self.R, u)
        x_next = x @ self.A.T + u @ self.B.T
        for p_i, v_i, b in self.walls:
            hit = np.abs(x_next[:, p_i]) > b
            if hit.any():
                x_next[hit, p_i] = np.clip(x_next[hit, p_i], -b, b)
                x_next[hit, v_i] = 0.0
        return self._observe(x_next, rng), 1.0 - cost, np.zeros(len(x), dtype=bool)

    def expert_batch(self, states):
        return -states[:, : self.n_ctrl] @ self.K.T

    def optimal_return(self) -> float:
        """Exact optimum of the expected finite-horizon return (time-varying LQR)."""
        P0 = finite_horizon_cost_matrix(self.A, self.B, self.Q, self.R, self.spec.horizon)
        return self.spec.horizon - self._expected_quadratic(P0)

    def expert_return(self) -> float:
        """Expected return of the stationary expert, from the closed-loop Lyapunov sum."""
        Acl = self.A - self.B @ self.K
        M = self.Q + self.K.T @ self.R @ self.K
        S = np.zeros_like(M)
        Ak = np.eye(len(M))
        for _ in range(self.spec.horizon):
            S += Ak.T @ M @ Ak
            Ak = Acl @ Ak
        return self.spec.horizon - self._expected_quadratic(S)

    def _expected_quadratic(self, P) -> float:
        # x0 ~ U(center +- halfwidth): E[x'Px] = mu'P mu + tr(P Sigma), Sigma = diag(h^2/3)
        mu = self.start_center
        cov = np.diag(self.start_halfwidth**2 / 3.0)
        return float(mu @ P @ mu + np.trace(P @ cov))


def point_mass_2d(dt: float = 0.05, start=(1.0, 1.0), start_halfwidth: float = 0.1,
                  horizon: int = 100, wall: float = 3.0) -> LinearQuadraticEnv:
    """Planar double integrator, state (x, y, vx, vy), target at the origin.

    The arena is the square ``|x|, |y| <= wall``; hitting a wall stops the
    motion across it. The expert never gets near the walls, so its return
    is the unconstrained LQR value.
    """
    I2, Z2 = np.eye(2), np.zeros((2, 2))
    A = np.block([[I2, dt * I2], [Z2, I2]])
    B = np.vstack([0.5 * dt * dt * I2, dt * I2])
    center = np.array([start[0], start[1], 0.0, 0.0])
    half = np.array([start_halfwidth, start_halfwidth, 0.0, 0.0])
    return LinearQuadraticEnv(
        "PointMass2D", A, B, np.diag([1.0, 1.0, 0.1, 0.1]), 0.01 * np.eye(2),
        center, half, horizon, action_bound=10.0, walls=((0, 2, wall), (1, 3, wall)),
    )


def noisy_linear_5(dt: float = 0.1, horizon: int = 100, distractor_std: float = 1.2,
                   distractor_mean: float = 3.0, distractor_idio: float = 0.2) -> LinearQuadraticEnv:
    """Five coupled controllable dimensions plus six distractor dimensions.

    The controllable part is a chain of two damped oscillators and one
    integrator driven by two inputs, so trajectories occupy a thin,
    strongly correlated region of state space. Distractors are i.i.d. over
    time but share two latent factors across dimensions (a biased sensor
    bank), so each step's distractor vector also lies near a low-dimensional
    subspace.
    """
    A = np.eye(5)
    # oscillator 1: (x0, x1), oscillator 2: (x2, x3), x4 integrates x0 + x2
    A[0, 1], A[1, 0], A[1, 1] = dt, -dt, 1.0 - 0.2 * dt
    A[2, 3], A[3, 2], A[3, 3] = dt, -dt, 1.0 - 0.2 * dt
    A[4, 0], A[4, 2] = 0.5 * dt, 0.5 * dt
    B = np.zeros((5, 2))
    B[1, 0] = dt
    B[3, 1] = dt
    center = np.array([6.0, 0.0, -6.0, 0.0, 3.0])
    half = np.full(5, 1.5)
    theta = np.arange(6) * np.pi / 6.0
    loadings = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    return LinearQuadraticEnv(
        "NoisyLinear5", A, B, np.eye(5) * 0.1, 0.01 * np.eye(2),
        center, half, horizon, action_bound=10.0,
        distractor_dim=6, distractor_std=distractor_std, distractor_mean=distractor_mean,
        distractor_loadings=loadings, distractor_idio=distractor_idio,
    )


class Reacher1D(Env):
    """Single damped joint: state (angle error, angular velocity), torque input.

    Expert is a fixed PD controller; it is near-optimal, not exactly optimal,
    so its documented return is estimated by Monte Carlo.
    """

    def __init__(self, dt=0.05, damping=0.5, horizon=100, kp=6.0, kd=3.0):
        self.dt, self.damping, self.kp, self.kd = dt, damping, kp, kd
        self.spec = EnvSpec("Reacher1D", 2, 1, horizon=horizon, action_bound=5.0,
                            params={"dt": dt, "damping": damping})

    def reset_batch(self, n, rng):
        return np.stack([rng.uniform(0.5, 1.5, size=n), np.zeros(n)], axis=1)

    def step_batch(self, states, actions, t, rng):
        u = self.check_actions(actions)[:, 0]
        th, om = states[:, 0], states[:, 1]
        cost = th**2 + 0.1 * om**2 + 0.01 * u**2
        om2 = om + self.dt * (u - self.damping * om)
        th2 = th + self.dt * om2
        return np.stack([th2, om2], axis=1), 1.0 - cost, np.zeros(len(th), dtype=bool)

    def expert_batch(self, states):
        return (-self.kp * states[:, 0] - self.kd * states[:, 1])[:, None]

    def expert_return(self) -> float:
        rng = np.random.default_rng(12345)
        return float(np.mean(rollout_returns(self, self.expert_batch, 1000, rng)))


class GridWorldRam(Env):
    """16x16 grid; the observation is the 8-bit binary code of (x, y) like a RAM dump.

    Actions: 0 right (+x), 1 up (+y), 2 left (-x), 3 down (-y). Reaching the
    goal pays 1 and ends the episode; every other step costs 0.01.
    """

    ACTIONS = np.array([[1, 0], [0, 1], [-1, 0], [0, -1]])

    def __init__(self, size=16, goal=(10, 10), horizon=60):
        self.size, self.goal = size, np.array(goal)
        self.spec = EnvSpec("GridWorldRam", 8, 1, discrete=True, n_actions=4, horizon=horizon,
                            params={"size": size, "goal": list(goal)})

    @staticmethod
    def encode(cells) -> np.ndarray:
        cells = np.asarray(cells, dtype=np.int64)
        bits = [(cells[:, 0] >> b) & 1 for b in range(4)] + [(cells[:, 1] >> b) & 1 for b in range(4)]
        return np.stack(bits, axis=1).astype(np.float64)

    @staticmethod
    def decode(states) -> np.ndarray:
        s = np.rint(np.asarray(states)).astype(np.int64)
        w = 1 << np.arange(4)
        return np.stack([s[:, :4] @ w, s[:, 4:] @ w], axis=1)

    def reset_batch(self, n, rng):
        return self.encode(np.zeros((n, 2), dtype=np.int64))

    def step_batch(self, states, actions, t, rng):
        a = self.check_actions(actions).reshape(-1)
        if np.any((a < 0) | (a >= 4) | (a != np.rint(a))):
            raise EnvError("GridWorldRam actions must be integers in [0, 4)")
        cells = self.decode(states) + self.ACTIONS[a.astype(np.int64)]
        cells = np.clip(cells, 0, self.size - 1)
        at_goal = np.all(cells == self.goal, axis=1)
        reward = np.where(at_goal, 1.0, -0.01)
        return self.encode(cells), reward, at_goal

    def expert_batch(self, states):
        d = self.goal - self.decode(states)
        # close the larger gap first; ties move along x
        act = np.where(np.abs(d[:, 0]) >= np.abs(d[:, 1]),
                       np.where(d[:, 0] > 0, 0, 2), np.where(d[:, 1] > 0, 1, 3))
        return act[:, None].astype(np.float64)

    def expert_return(self) -> float:
        steps = int(np.sum(self.goal))
        return 1.0 - 0.01 * (steps - 1)


REGISTRY = {
    "PointMass2D": point_mass_2d,
    "Reacher1D": Reacher1D,
    "NoisyLinear5": noisy_linear_5,
    "GridWorldRam": GridWorldRam,
}


def make_env(name: str, **kwargs) -> Env:
    try:
        return REGISTRY[name](**kwargs)
    except KeyError:
        raise EnvError(f"unknown environment {name!r}; known: {sorted(REGISTRY)}") from None


# --------------------------------------------------------------------------
# single-state wrappers


def reset(env: Env, rng: np.random.Generator) -> np.ndarray:
    return env.reset_batch(1, rng)[0]


def step(env: Env, state, action, rng: np.random.Generator, t: int = 0) -> Transition:
    s = np.asarray(state, dtype=np.float64)
    a = np.atleast_1d(np.asarray(action, dtype=np.float64))
    if not np.all(np.isfinite(a)):
        raise EnvError("non-finite action")
    s2, r, term = env.step_batch(s[None], a[None], t, rng)
    done = bool(term[0]) or t + 1 >= env.spec.horizon
    return Transition(s, env.check_actions(a), s2[0], done, t, float(r[0]))


def expert_policy(env: Env, state) -> np.ndarray:
    return env.expert_batch(np.asarray(state, dtype=np.float64)[None])[0]


def rollout_returns(env: Env, policy_batch, episodes: int, rng: np.random.Generator) -> np.ndarray:
    """Run ``episodes`` parallel episodes with a deterministic batch policy; return their returns."""
    s = env.reset_batch(episodes, rng)
    alive = np.ones(episodes, dtype=bool)
    ret = np.zeros(episodes)
    for t in range(env.spec.horizon):
        a = policy_batch(s)
        s2, r, term = env.step_batch(s, a, t, rng)
        ret += np.where(alive, r, 0.0)
        alive &= ~term
        s = s2
        if not alive.any():
            break
    return ret
