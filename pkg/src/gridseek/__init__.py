"""Cost-aware active search on noisy grids: beliefs, baselines, and a
gradient-guided diffusion lookahead planner."""

from .belief import (BeliefState, RecoveryConfig, RecoveryResult, entropy,
                     expected_information_gain, expected_onestep_reward,
                     init_belief, quantize, recovery_check, state_image,
                     thompson_sample, update_belief)
from .datagen import (Dataset, DatasetConfig, EpisodeRecord, TrainingSet,
                      chunk_episodes, generate_dataset, load_dataset,
                      save_dataset)
from .diffusion import (CdasResult, ModelBundle, NetConfig, NoiseSchedule,
                        SamplerConfig, binarize_trajectory, cdas_sample,
                        cosine_schedule, das_plan_step, forward_noise,
                        load_models, save_models, train_distance_model,
                        train_return_model, train_trajectory_model)
from .env import (CostModel, CustomFov, Environment, Observation,
                  SensingAction, cell_coords, cell_distance, enumerate_actions,
                  env_from_json, env_to_json, episode_cost, new_environment,
                  observe, travel_cost)
from .mcts import MctsConfig, mcts_plan
from .multiagent import (AgentState, ChannelConfig, MeasurementRecord, RunLog,
                         replay_belief, run_multiagent)
from .myopic import eig_select, ts_select
from .planners import DiffusionPlanner, EigPlanner, MctsPlanner, TsPlanner

__version__ = "0.1.0"
