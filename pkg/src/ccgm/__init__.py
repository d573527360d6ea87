"""Causally transparent concept-based classification.

Learns a sparse acyclic dependency graph over interpretable binary
variables, performs inference by message passing on that graph, and exposes
ground-truth interventions, do-interventions, counterfactual queries,
blocking verification, and causal-effect metrics.
"""

# The models are tiny; threaded BLAS kernels cost more in sync overhead than
# they save, and single-threaded math keeps runs bit-reproducible.
try:
    import threadpoolctl as _threadpoolctl

    _BLAS_LIMIT = _threadpoolctl.threadpool_limits(limits=1)
except Exception:  # pragma: no cover
    _BLAS_LIMIT = None

from .data import (ConceptDataset, GroundTruthScm, ScmEquation, dsprites_lite,
                   gen_checkmark, gen_incompleteness, gen_scm_dataset,
                   perturb_features, split_dataset)
from .graphs import (AdjacencyState, Dag, acyclicity_penalty, apply_sparsity_mask,
                     entropy_init, extract_dag, reachability, topological_order)
from .model import CgmConfig, CgmModel, train, training_step
from .baselines import BaselineModel, train_baseline
from .engine import (Action, cace, counterfactual_query, ground_truth_intervene,
                     intervention_curve, merge_models, pns_bounds, residual_cace,
                     unfold_batch, unfold_predict)
from .rules import extract_logic_rules
from .checkpoint import load_model, save_model

__version__ = "0.1.0"
