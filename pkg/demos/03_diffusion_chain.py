"""
Inside the reverse chain
========================

The actor turns Gaussian noise into a K x N matrix of server logits in T
denoising steps. With an all-zero denoiser every step just rescales by
1/sqrt(alpha_t), so the chain telescopes to x_T / sqrt(alpha_bar_T).
"""

import numpy as np

from dcnplace import make_schedule, sample_action
from dcnplace.diffusion import forward_noise, init_policy, logits_to_placement, zero_policy

s = make_schedule(5, 0.1, 0.5)
print("betas      ", s.betas)
print("alpha_bars ", np.round(s.alpha_bars, 4))
print("sigmas     ", np.round(s.posterior_sigmas, 4))

# Forward noising: variance of x_t from x_0 = 0 approaches 1 - alpha_bar_t.
rng = np.random.default_rng(0)
for t in (1, 3, 5):
    x = forward_noise(np.zeros(100_000), t, s, rng)
    print(f"t={t}: sample var {x.var():.4f}  vs  1 - alpha_bar = {1 - s.alpha_bars[t - 1]:.4f}")

# Zero denoiser: the closed form holds to rounding.
p0 = zero_policy(3, 4, state_dim=5)
x0 = sample_action(np.zeros(5), p0, s, np.random.default_rng(7))
x_T = np.random.default_rng(7).standard_normal((3, 4))
print("\ntelescoping error:", np.abs(x0 - x_T / np.sqrt(s.alpha_bars[-1])).max())

# A randomly initialised denoiser conditioned on a state, then discretised.
p = init_policy(3, 4, 5, np.random.default_rng(1), hidden=(32, 32))
logits = sample_action(np.linspace(-1, 1, 5), p, s, np.random.default_rng(2), stochastic=True)
print("\nlogits:\n", np.round(logits, 2))
print("argmax placement :", logits_to_placement(logits).assignment)
print("softmax sample   :", logits_to_placement(logits, "softmax_sample", np.random.default_rng(3)).assignment)
