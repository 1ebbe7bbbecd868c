"""End-to-end semi-supervised anomaly detection on tabular data.

The pipeline encodes an input, reconstructs it, and re-encodes the
reconstruction; training shapes all three stages jointly so that normal
samples reconstruct well and land near the latent origin while labeled
anomalies are pushed away. Test-time anomaly scores combine reconstruction
error with the re-encoded latent norm. A two-stage distance-to-center
baseline and a seeded benchmark harness round out the package.
"""

from .data import (
    BENCHMARK_STATS,
    RawDataset,
    ScenarioConfig,
    SemiDataset,
    load_benchmark,
    load_csv,
    load_manifest,
    make_scenario,
    split_60_40,
    standardize,
    synth_gaussians,
)
from .harness import (
    ExperimentConfig,
    Method,
    RunReport,
    load_config,
    run_experiment,
    sweep_lambda1,
    sweep_pollution,
    train_esad,
    train_sad_baseline,
)
from .losses import (
    LossBreakdown,
    PhiConfig,
    PhiKind,
    SemiLabel,
    SvddState,
    loss_ass,
    loss_norm_semi,
    loss_rec_semi,
    loss_sad_rec,
    loss_svdd,
    loss_total,
    phi_apply,
)
from .model import (
    EsadModel,
    backward_pipeline,
    forward_pipeline,
    load_model,
    new_model,
    save_model,
)
from .ndcore import Activation, DenseLayer, MlpStack, SgdConfig, grad_check
from .scoring import (
    AucResult,
    anomaly_score,
    auc,
    auc_pairwise,
    export_scores_csv,
    gaussian_entropy,
    gaussian_entropy_quadrature,
    score_dataset,
)

__version__ = "0.1.0"
