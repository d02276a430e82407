"""Reference-game agents that learn a language from oracle speakers and
listeners, from each other, and from almost no supervision at all."""

from .agent import Agent, PolicyOutput, load_checkpoint, save_checkpoint
from .data import (Dataset, Item, generate_shapes, load_concepts,
                   load_dataset, save_dataset, synth_concepts)
from .errors import (ConfigError, DataParseError, NumericError, ProtocolError,
                     RefplayError, SchemaError, TrainingDivergence)
from .evaluation import (AccuracyReport, LexiconCounts, build_lexicon,
                         diagonal_dominance, dump_dialogs, matrix_cosine,
                         measure_accuracy, message_correlation)
from .game import (Context, GameConfig, Round, compute_reward, pair_accuracy,
                   play_batch, play_round, sample_context, sample_context_batch)
from .oracle import (RsaOracle, ShapesOracle, build_rsa_oracle,
                     load_rsa_oracle, oracle_for, save_rsa_oracle)
from .optim import PlateauSchedule, RMSProp
from .training import (BaselineBank, LossConfig, RunRecord, TeacherCache,
                       TrainSchedule, hyperparameter_sweep, reinforce_loss,
                       selfplay_step, teacher_loss, train_emergent,
                       train_limited, train_oracle)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
