"""Syntax-aware local attention: tree-distance masks, a gated local/global
transformer encoder, and analysis tooling for gates and attention maps."""

from .attention import (
    LayerParams,
    aggregate,
    attention_logits,
    gate,
    gate_parameter_count,
    masked_softmax,
    sla_layer_forward,
)
from .conllu import (
    UNREACHABLE,
    DependencySentence,
    DistanceMatrix,
    all_pairs_distance,
    parse_conllu,
    read_conllu_file,
    render_conllu,
)
from .errors import ConlluParseError, DataError, NumericError
from .masks import (
    MASK_NEG,
    AdditiveMask,
    NeighborDistance,
    build_padding_mask,
    build_pair_mask,
    build_sla_mask,
    build_window_mask,
    neighbor_min_distance,
)
from .model import (
    AttentionTrace,
    LabeledExample,
    ModelParams,
    SLAConfig,
    attention_heatmap,
    encode,
    evaluate,
    gate_statistics,
    init_params,
    load_checkpoint,
    load_dataset_jsonl,
    preprocess,
    save_checkpoint,
    train,
)
from .wordpiece import (
    SubwordAlignment,
    Vocabulary,
    build_alignment,
    pad_alignment,
    wordpiece_tokenize,
)

__all__ = [name for name in dir() if not name.startswith("_")]
