"""Performance test generation with a conditional GAN trained by active learning.

The network, optimizer, codec, simulator, drivers and training loops are
plain numpy.  Typical use::

    from perftestgen import CGANModel, default_benchmark, train_active
"""
from .active import (ActiveState, ALConfig, IterationLog, IterationRecord, eval_generator_accuracy,
                     fjd, least_confidence_rank, train_active, uncertainty)
from .cgan import CGANModel, Discriminator, Generator
from .checkpoint import CheckpointError, load, save
from .codec import (DomainError, InputSpace, InputVariableSpec, decode, decode_indices,
                    default_space, encode, encode_indices)
from .config import ConfigError, ExperimentConfig, epoch_size, load_config
from .devops import ExecutionHistory, detect_change, devops_update
from .drivers import (ExecutionError, HttpDriver, HttpDriverConfig, SimulatorDriver,
                      execute_http, oracle_label)
from .nn import Adam, ConditionalMLP, Dense, Embedding, ShapeError, UsageError, bce_loss
from .simulator import (BottleneckCluster, ExecutedTest, SimulatorConfig, default_benchmark,
                        execute_sim, positive_count, remove_clusters)
from .testgen import generate_suite, random_suite

__version__ = "0.1.0"
