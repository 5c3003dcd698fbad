"""Power allocation for D2D interference networks.

Generates interference channel instances, trains a quantum graph neural
network and a classical GCN baseline unsupervised on the weighted sum rate,
and benchmarks both against WMMSE and a brute-force grid oracle.
"""

from .channels import (
    ChannelRealization,
    Scenario,
    generate_scenario,
    load_dataset,
    realize_channels,
    save_dataset,
    sinr,
    sum_rate,
    weighted_sum_rate,
)
from .gcn import GcnModel, GcnParams, gcn_forward, gcn_gradient
from .graph import (
    FeatureScaler,
    InterferenceGraph,
    StarSubgraph,
    build_graph,
    decompose_stars,
    fit_feature_scaler,
)
from .qgnn import (
    QgnnModel,
    QgnnParams,
    build_qgcl_circuit,
    qgcl_forward,
    qgcl_message,
    qgnn_forward,
    qgnn_gradient,
)
from .qsim import (
    CircuitSpec,
    Gate,
    Observable,
    StateVector,
    expectation,
    param_shift_grad,
    run_circuit,
)
from .trainer import (
    AdamConfig,
    Instance,
    NonFiniteLossError,
    SeedConfig,
    TrainConfig,
    TrainReport,
    adam_step,
    train,
    unsupervised_loss,
)
from .wmmse import WmmseConfig, WmmseResult, grid_search_oracle, wmmse_allocate

__version__ = "0.1.0"
