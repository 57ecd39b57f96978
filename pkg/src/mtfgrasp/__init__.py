"""Multi-tier federated learning simulator with data-quality/quantity robot ranking."""

from .aggregation import WeightedModel, aggregate_server, aggregate_tier, fedavg, fednova
from .data import (
    ClientDataset,
    GlobalDataset,
    PartitionPlan,
    Scheme,
    generate_synthetic,
    load_csv,
    partition_class_skew,
    partition_iid,
    partition_quantity_skew,
    skew_report,
)
from .model import Hyperparams, LearnerKind, LearnerSpec, evaluate, init_model, local_update, loss_and_grad
from .netledger import CommLedger, Message, PayloadKind
from .orchestrator import Algorithm, ExperimentConfig, RoundRecord, compare_arms, run_mtf_grasp, run_vanilla
from .ranking import compute_dds, compute_dqs, compute_is, rank_robots, select_tiers

__version__ = "0.1.0"
