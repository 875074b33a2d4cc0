"""Knowledge-chunk placement on simulated data-center networks, solved with a diffusion actor-critic."""

from .config import ConfigError, ExperimentConfig, load_config
from .diffusion import (NoiseSchedule, PolicyParams, denoise_step, forward_noise, load_policy, logits_to_placement,
                        make_schedule, sample_action, save_policy)
from .env import (EnvState, Placement, PlacementOutcome, ScenarioConfig, ServerProfile, brute_force_optimal,
                  evaluate_placement, greedy_placement, random_placement, sample_scenario)
from .knowledge import (Chunk, ChunkStore, FormulationRequest, FormulationResult, chunk_document, embed, formulate,
                        retrieval_latency_ms, retrieve_top_k, route, semantic_distance)
from .topology import Topology, TopologySpec, build_topology, path_latency_ms, shortest_hops
from .trainer import CriticParams, TrainingReport, actor_update, critic_eval, critic_update, finite_diff_check, train

__version__ = "0.1.0"
