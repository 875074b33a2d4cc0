"""
A short actor-critic run
========================

Train the diffusion policy for 1500 episodes on a small instance and
compare it with the two baselines on the identical scenario stream. The full
experiment (8 servers, 16 chunks, 5000 episodes) is ``dcnplace eval``; this
keeps to well under a minute.

With only six chunks the servers are lightly loaded, so congestion matters
little and greedy is hard to beat. Expect the learner to sit between random
and greedy here; its advantage shows up at the full scale.
"""

import dataclasses

from dcnplace import ExperimentConfig, train

cfg = ExperimentConfig()
cfg = dataclasses.replace(
    cfg,
    scenario=dataclasses.replace(cfg.scenario, n_servers=4, n_chunks=6),
    run=dataclasses.replace(cfg.run, episodes=1500),
)


def progress(ep, rewards):
    if (ep + 1) % 300 == 0:
        print(f"episode {ep + 1:5d}  diffusion {rewards['diffusion'][ep]:.5f}  greedy {rewards['greedy'][ep]:.5f}")


report = train(cfg, seed=0, progress=progress)

print()
for name, (mean, std) in report.final_stats(100).items():
    print(f"{name:18s} final-100 reward {mean:.5f} +- {std:.5f}")
print(f"wall clock {report.wall_clock_s:.1f}s")
