"""Semi-supervised reconstruction-based anomaly detection for rail images.

Train an encoder/decoder pair on normal track images with an adversarial
discriminator, score test images by encoded-feature reconstruction error,
and localize anomalies through error-map-subtracted difference maps.
"""

from .checkpoint import Checkpoint, CheckpointError, CheckpointVersionError, load_checkpoint, save_checkpoint
from .config import ConfigError, DatagenConfig, LocalizationConfig, RunConfig, load_run_config
from .datagen import AnomalySpec, Manifest, ManifestRow, SceneParams, build_dataset, composite_anomaly, generate_normal, read_manifest
from .inference import (
    Box,
    Detection,
    ImageResult,
    QuantileThreshold,
    anomaly_score,
    difference_map,
    localize,
    min_max_scale,
    normal_saliency_pool,
    per_image_scores,
    saliency,
    score_dataset,
)
from .losses import LossConfig, discriminator_loss, generator_loss, latent_loss, perceptual_loss, pixel_loss
from .metrics import (
    CurvePoints,
    EvalReport,
    PRF,
    auprc,
    auroc,
    eer,
    eer_threshold,
    evaluate_scores,
    kde,
    pr_curve,
    prf_at_threshold,
    roc_curve,
)
from .model import (
    FEATURE_SHAPES,
    IMAGE_CHANNELS,
    IMAGE_SIZE,
    LATENT_DIM,
    LayerSpec,
    NetworkSpec,
    ShapeError,
    build_networks,
    decode,
    discriminate,
    encode,
    layer_output_shapes,
    reconstruct,
)
from .training import (
    EpochStats,
    TrainConfig,
    TrainLog,
    TrainingDiverged,
    compute_error_map,
    error_map_from_residuals,
    train,
    write_train_log,
)

__version__ = "0.1.0"
