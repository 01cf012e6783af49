"""Action classification from depth or gray-level videos.

Dodecahedral HOG3D block descriptors are encoded against a k-means
dictionary with sparse coding or locality-constrained linear coding,
max-pooled per spatial location, turned into class probabilities by
per-location logistic regressors and classified by a linear SVM.
"""
from .classify import (
    LogRegModel,
    SvmModel,
    assemble_sequence_descriptor,
    logreg_predict_proba,
    logreg_train,
    svm_predict,
    svm_train,
)
from .coding import CodeMatrix, SubsequenceDescriptor, llc_encode, llc_weights, max_pool, sc_encode
from .dictionary import Dictionary, kmeans_fit, load_dictionary, save_dictionary
from .hog3d import (
    BlockMatrix,
    DecompositionConfig,
    ProjectionBasis,
    block_descriptor,
    cell_histogram,
    decompose,
    dodecahedron_basis,
    gradient,
    project_and_quantize,
)
from .kernels import BACKEND
from .pipeline import (
    EvaluationReport,
    PipelineConfig,
    TrainedModel,
    evaluate,
    load_model,
    predict,
    save_model,
    train,
)
from .sequence_io import (
    ManifestEntry,
    Roi,
    ScalarSequence,
    extract_roi,
    read_manifest,
    read_sequence,
    resize_sequence,
    synth_generate,
    write_manifest,
    write_sequence,
)

__version__ = "0.1.0"
