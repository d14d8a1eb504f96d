"""Complaint mining toolkit: keyword filtering, cause/effect span tagging,
and taxonomy reporting over vehicle driver-assistance complaint narratives.
"""

from .classifier import (
    ClassifierError,
    LabeledExample,
    LinearClassifier,
    cross_validate,
    load_classifier,
    predict,
    save_classifier,
    stratified_kfold,
    subsample_negatives,
    train_classifier,
)
from .corpus import (
    AnnotatedSentence,
    CorpusError,
    CorpusFormatError,
    TagDistribution,
    inter_rater_agreement,
    load_annotations,
    merge_corpora,
    pairwise_agreement,
    read_annotation_file,
    tag_distribution,
    tokenize,
    write_annotation_file,
)
from .ingest import (
    ColumnMapping,
    ComplaintRecord,
    DateRange,
    IngestError,
    RowError,
    dedup_complaints,
    filter_by_date,
    parse_complaints,
    read_records,
    split_results,
    write_records,
)
from .lexicon import (
    ADAS_CATEGORIES,
    KeywordGroup,
    LexiconError,
    MatchResult,
    assign_adas_category,
    default_lexicon,
    keyword_distribution,
    match_complaint,
    match_keywords,
    match_stream,
)
from .metrics import (
    ConfusionCounts,
    MetricReport,
    MetricsError,
    confusion_from_pairs,
    evaluate_binary,
    macro_average,
    per_label_reports,
    pool_counts,
    report_from_counts,
)
from .pipeline import PipelineConfig, PipelineError, run_pipeline
from .protocol import (
    AdapterClient,
    ProtocolError,
    RetryableProtocolError,
    external_classify,
    external_tag,
    open_adapter,
)
from .tagger import (
    CauseEffectInstance,
    CrfModel,
    Span,
    TaggerError,
    decode_spans,
    evaluate_tagging,
    forward_backward,
    load_tagger,
    nll_and_gradient,
    save_tagger,
    score_sequence,
    spans_to_tags,
    tag,
    tag_text,
    token_features,
    train_tagger,
    viterbi,
)
from .taxonomy import (
    CategorizedInstance,
    CategoryLexicon,
    CauseRule,
    EffectRule,
    TaxonomyError,
    TaxonomyReport,
    aggregate,
    categorize_cause,
    categorize_effect,
    categorize_instance,
    default_category_lexicon,
    percentage,
    render_report,
    report_from_dict,
    truncate_report,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
