"""Dataset-shift detection toolkit.

Reduce high-dimensional samples to low-dimensional representations, apply
statistical two-sample tests to decide whether source and target data come
from the same distribution, simulate shifts, and benchmark the detectors.
"""

from .data import (
    DataSplit,
    TensorDataset,
    flatten,
    load_csv,
    load_idx,
    random_split,
    unflatten,
    write_csv,
    write_idx,
)
from .dimred import (
    DrKind,
    PcaModel,
    Representation,
    SrpMatrix,
    build_srp,
    fit_pca,
    load_reducer,
    pca_project,
    pca_reconstruct,
    reduce,
    save_reducer,
    srp_project,
)
from .harness import (
    DomainCheck,
    ExemplarReport,
    ExperimentConfig,
    ExperimentResult,
    MethodSpec,
    NamedShift,
    Record,
    detection_accuracy,
    original_split_check,
    pvalue_evolution,
    run_domain_classifier_test,
    run_experiment,
    top_exemplars,
)
from .nets import (
    Autoencoder,
    NetParams,
    SoftmaxClassifier,
    TrainConfig,
    domain_scores,
    encode,
    grad_check,
    hard_predictions,
    init_network,
    load_net,
    save_net,
    softmax_outputs,
    train_autoencoder,
    train_domain_classifier,
    train_label_classifier,
)
from .shifts import (
    ShiftSpec,
    apply_adversarial,
    apply_gaussian_noise,
    apply_image_shift,
    apply_knockout,
    apply_only_zero,
    apply_shift,
    preset,
)
from .stattest import (
    TestMode,
    TestOutcome,
    TestTag,
    binomial_two_sided,
    bonferroni_aggregate,
    chi2_independence,
    dispatch_test,
    ks_two_sample,
    mmd2_unbiased,
    mmd_permutation_test,
    rbf_kernel,
)

__version__ = "0.1.0"
