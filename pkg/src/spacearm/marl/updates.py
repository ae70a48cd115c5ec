"""Single-minibatch parameter updates for actors and critics."""

from __future__ import annotations

import numpy as np

from ..errors import TrainingError
from ..nn import Adam, GaussianPolicy, Mlp


def clip_ratio(ratio, eps: float):
    return np.clip(ratio, 1.0 - eps, 1.0 + eps)


def ppo_actor_update(actor: GaussianPolicy, opt: Adam, obs, z, old_logp,
                     advantages, clip_eps: float,
                     entropy_coef: float) -> float:
    """One ascent step on the clipped surrogate plus entropy bonus.

    obs/z/old_logp come from the rollout; advantages must already be
    normalized. Returns the objective value before the step.
    """
    logp, aux = actor.log_prob(obs, z)
    ratio = np.exp(logp - old_logp)
    if not np.all(np.isfinite(ratio)):
        raise TrainingError("non-finite probability ratio")
    clipped = clip_ratio(ratio, clip_eps)
    full = ratio * advantages
    capped = clipped * advantages
    surrogate = np.minimum(full, capped)
    objective = float(surrogate.mean()
                      + entropy_coef * actor.entropy_estimate(z))
    # gradient flows only where the unclipped branch is active; ties keep it
    coeffs = np.where(full <= capped, full, 0.0) / len(full)
    net_grads, d_log_std = actor.backward_objective(aux, z, coeffs,
                                                    entropy_coef)
    grads = [-g for g in net_grads]
    grads.append(-d_log_std)
    opt.step(grads)
    actor.clamp_log_std()
    return objective


def critic_update(critic: Mlp, opt: Adam, states, targets) -> float:
    """One descent step on the mean-squared value error."""
    v, cache = critic.forward(states)
    err = v[:, 0] - targets
    loss = float(np.mean(err * err))
    if not np.isfinite(loss):
        raise TrainingError("non-finite value loss")
    grads, _ = critic.backward(cache, (2.0 / len(err)) * err[:, None])
    opt.step(grads)
    return loss
