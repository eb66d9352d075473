"""Policy-gradient hyperparameter search over integer grids, with the
dense encoder-decoder decoding, reward brokering, and segmentation
metrics that surround it."""

from .architecture import (
    ArchDescriptor,
    DenseBlockSpec,
    HeadSpec,
    LayerSpec,
    ShapeRow,
    count_parameters,
    decode_architecture,
    encode_architecture,
    expert_densecnn_descriptor,
    expert_densecnn_policy,
    parse_architecture,
    propagate_shapes,
    render_architecture,
    render_architecture_text,
)
from .errors import (
    CheckpointError,
    ConfigError,
    EpochError,
    GridPGError,
    LayoutError,
    ShapeError,
    SpaceError,
    UndefinedDistanceError,
)
from .evaluation import (
    BatchEvaluator,
    CommandEvaluator,
    EvaluationRequest,
    EvaluationResult,
    OracleEvaluator,
    OracleKind,
    OracleSpec,
    Status,
    derive_trainer_seed,
    evaluate_batch,
    evaluator_from_uri,
    make_oracle_spec,
    oracle_reward,
    trainer_evaluate,
)
from .metrics import (
    LabelMask,
    dice,
    hausdorff,
    last_k_mean,
    mean_class_dice,
    read_mask,
    write_mask,
)
from .optimizer import (
    CategoryAverages,
    EvalRecord,
    MoveRecord,
    PerturbationBatch,
    SearchConfig,
    SearchState,
    category_averages,
    generate_perturbations,
    history_to_csv,
    initial_policy,
    load_checkpoint,
    run_epoch,
    run_search,
    save_checkpoint,
    update_policy,
)
from .search_space import (
    DimensionKind,
    DimensionSpec,
    PolicyVector,
    Pooling,
    SearchSpace,
    clamp_policy,
    default_paper_space,
    space_from_config,
    space_to_config,
)

__version__ = "0.1.0"
