"""Independent brute-force reference computations for the test suite.

These deliberately take the dumbest possible route (materialize the full joint
table, loop over hidden states) so they stay independent of the vectorized
implementation paths they check.
"""

import numpy as np

from pixelcause import DiscreteWorld


def joint_table(world: DiscreteWorld) -> np.ndarray:
    """J[t, h, i] = P(T=t, H=h, I=i), built cell by cell."""
    K, N = world.alpha.shape
    J = np.zeros((2, K, N))
    for h in range(K):
        for i in range(N):
            base = world.beta[i, h] * world.gamma[h]
            J[0, h, i] = world.alpha[h, i] * base
            J[1, h, i] = (1.0 - world.alpha[h, i]) * base
    return J


def obs_posterior_ref(world: DiscreteWorld, i: int) -> float:
    """Condition the full joint on I=i."""
    J = joint_table(world)
    p_i = float(J[:, :, i].sum())
    return float(J[1, :, i].sum()) / p_i


def do_posterior_ref(world: DiscreteWorld, i: int) -> float:
    """Enumerate the manipulated model: hidden state keeps its prior, the
    image is forced to i, T follows its structural conditional."""
    total = 0.0
    for h in range(world.num_h_states):
        p_t1_given_h_i = 1.0 - world.alpha[h, i]
        total += world.gamma[h] * p_t1_given_h_i
    return total


def make_w0() -> DiscreteWorld:
    """Two hidden states, two images, deterministic image channel
    (image index = hidden index), behavior depending only on the hidden
    state: while observation separates the images, manipulation does not."""
    alpha = np.array([[0.9, 0.9], [0.3, 0.3]])
    beta = np.eye(2)
    gamma = np.array([0.5, 0.5])
    return DiscreteWorld(alpha=alpha, beta=beta, gamma=gamma)
