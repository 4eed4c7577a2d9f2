"""Desk-scale undesired-content detection pipeline.

Submodules cover the stages of the pipeline: taxonomy (the category
scheme and label algebra), corpus (samples, JSONL storage, PII masking,
consolidation), features (hashed n-gram vectors), net (the classifier
and domain critic), train (supervised and domain-adversarial descent),
select (active-learning batch construction and the iterative loop),
quality (audits, cross-validated label flags, relabeling triggers),
probe (input reduction and red-team capture), synthgen (template and
counterfactual synthesis), evalx (precision metrics and external-set
adaptation), config/service/cli (artifact plumbing).
"""

from .taxonomy import (
    CATEGORIES,
    Category,
    Label,
    LabelVector,
    MappingError,
    PARENT,
    TaxonomyError,
    TaxonomyMapping,
    UnknownCategoryError,
    is_undesired,
    map_external,
    normalize,
    normalize_with_notes,
    parse_category,
    parse_label,
)
from .corpus import (
    CorpusError,
    Dataset,
    LabelRecord,
    Sample,
    consolidate,
    export_jsonl,
    import_jsonl,
    mask_pii,
    split_half,
)
from .features import Featurizer, FeaturizerConfig, SparseVector, featurize, matrix, shared_featurizer
from .net import (
    CheckpointError,
    Model,
    NetError,
    NetworkConfig,
    load,
    new_model,
    save_model,
)
from .train import TrainConfig, TrainError, TrainResult, classification_loss, critic_loss, masked_bce, train
from .select import (
    DatasetOracle,
    LoopConfig,
    OracleError,
    SelectError,
    SelectionBatch,
    StrategyMix,
    allocate,
    metadata_reweight,
    run_iteration,
    run_loop,
    score_pool,
    select_batch,
    select_random,
    select_threshold,
    select_uncertainty,
)
from .quality import (
    AuditReport,
    QualityError,
    RelabelDecision,
    audit_f1,
    audit_select,
    crossval_flag,
    relabel_trigger,
)
from .probe import (
    KeyTokenReport,
    KeyTokenResult,
    ProbeError,
    RedTeamStore,
    input_reduce,
    keytoken_report,
    load_lexicon,
    record_redteam_case,
)
from .synthgen import SynthError, Template, build_counterfactual, expand_template, load_templates
from .evalx import (
    EvalError,
    EvalTable,
    LabelFieldSpec,
    UndefinedMetricError,
    adapt_external,
    average_precision,
    evaluate,
    regression_section,
    write_table,
)
from .config import Config, ConfigError, load_config, write_default
from .service import LabelQueue, LabelStore, ModerationService, ServiceConfig, make_server

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
