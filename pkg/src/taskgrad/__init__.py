"""Continual-learning optimizers driven by task-based gradient accumulation."""

from .net import (MultiHeadNet, TaskBatch, central_difference, finite_diff_grad,
                  loss, loss_and_grad)
from .optim import (Adagrad, Adam, KnowledgeBase, OptimConfig, RMSProp, SGD,
                    TagAdagrad, TagAdam, TagRMSProp, load_knowledge_base,
                    make_optimizer, save_knowledge_base, sgd_step, tag_alpha,
                    tag_alphas, tag_weighted_second_moment,
                    weighted_second_moment)
from .methods import (AGEMMethod, EpisodicMemory, ERMethod, EWCMethod,
                      FisherAnchor, NaiveMethod, StableSgdSchedule,
                      StableSGDMethod, agem_project, er_combined_grad,
                      ewc_penalized_grad, fisher_estimate, hybrid_step,
                      memory_gradient, stable_sgd_lr)
from .data import (LabeledDataset, SyntheticStreamSpec, Task, TaskStream,
                   benchmark_stream, class_split, load_flat_dataset,
                   make_synthetic_stream, normalize_task, save_dataset_csv,
                   split_train_validation, with_validation_split)
from .stream import (AlphaTrace, GridRow, MultitaskResult, RunConfig, RunResult,
                     accuracy_at, evaluate_accuracy, forgetting_at, grid_search,
                     learning_accuracy_at, multitask_upper_bound, parse_method,
                     run_stream)

__version__ = "0.1.0"
