"""
Train-then-evaluate pipelines: a single experiment, the lambda sweep and
the ablation of the two loss terms. Every run goes through the trainer
unchanged, so trainer determinism carries over to the tables.
"""
import logging
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from ..codebook import Codebook
from ..model import HashNetwork, NetworkSpec
from ..preprocessing import FeatureSet, LabelSet, Split
from ..retrieval import BinaryCodeSet, EvalReport, encode, evaluate
from ..training import VARIANTS, TrainConfig, TrainHistory, train

logger = logging.getLogger(__name__)

DEFAULT_LAMBDAS = (0.0, 0.01, 0.05, 0.1, 0.5, 1.0, 5.0, 10.0)


@dataclass
class Experiment:
    """
    Everything a run needs besides the optimization protocol.

    Parameters:
    - features, labels, split, codebook: The data and the class codewords.
    - net_spec (NetworkSpec): Hidden layers of the feature path.
    - cutoff (int): R of mAP@R, None for the whole database.
    - denominator (str): AP normalization.
    - mode (str): Binarization of the hash outputs.
    - threads (int): Search fan-out.
    """
    features: FeatureSet
    labels: LabelSet
    split: Split
    codebook: Codebook
    net_spec: NetworkSpec = field(default_factory=NetworkSpec)
    cutoff: int = None
    denominator: str = 'min'
    mode: str = 'sign'
    threads: int = 1


@dataclass
class ExperimentResult:
    net: HashNetwork
    history: TrainHistory
    codes: BinaryCodeSet
    activations: np.ndarray
    report: EvalReport


def output_stem(prefix, code_length: int, lambda_: float, seed: int) -> str:
    return f"{prefix}_K{code_length}_lambda{lambda_:g}_seed{seed}"


def evaluate_network(net: HashNetwork, experiment: Experiment):
    split, labels = experiment.split, experiment.labels
    codes, u = encode(net, experiment.features, experiment.mode, reference_rows=split.database)
    report = evaluate(codes.subset(split.query), codes.subset(split.database),
                      labels.values[split.query], labels.values[split.database],
                      experiment.cutoff, experiment.denominator, experiment.threads)
    return codes, u, report


def run_experiment(config: TrainConfig, experiment: Experiment) -> ExperimentResult:
    net, history = train(config, experiment.features, experiment.labels, experiment.split,
                         experiment.codebook, experiment.net_spec)
    codes, u, report = evaluate_network(net, experiment)
    return ExperimentResult(net, history, codes, u, report)


def _summary_row(result: ExperimentResult, **keys) -> dict:
    last = result.history.records[-1].losses.total if result.history.records else float('nan')
    return {**keys, 'mAP': result.report.mean_average_precision, 'final_total_loss': last}


def _run_all(configs: list, experiment: Experiment, threads: int) -> list:
    if threads <= 1 or len(configs) < 2:
        return [run_experiment(c, experiment) for c in configs]
    return Parallel(n_jobs=threads, prefer='threads')(delayed(run_experiment)(c, experiment) for c in configs)


def lambda_sweep(base_config: TrainConfig, experiment: Experiment, lambdas=DEFAULT_LAMBDAS,
                 threads: int = 1) -> pd.DataFrame:
    """One full train + evaluate per lambda with shared seeds; columns lambda, mAP, final_total_loss."""
    configs = [replace(base_config, lambda_=float(lam), variant='full') for lam in lambdas]
    results = _run_all(configs, experiment, threads)
    rows = [_summary_row(r, **{'lambda': c.lambda_}) for c, r in zip(configs, results)]
    for row in rows:
        logger.info("lambda=%g: mAP %.4f", row['lambda'], row['mAP'])
    return pd.DataFrame(rows)


def ablate(config: TrainConfig, experiment: Experiment, threads: int = 1) -> pd.DataFrame:
    """
    Train the joint objective and the two single-term variants with identical
    seeds and architecture; columns variant, lambda, mAP, final_total_loss.
    """
    configs = [replace(config, variant=variant) for variant in VARIANTS]
    results = _run_all(configs, experiment, threads)
    rows = [_summary_row(r, variant=c.variant, **{'lambda': c.effective_lambda}) for c, r in zip(configs, results)]
    for row in rows:
        logger.info("variant=%s: mAP %.4f", row['variant'], row['mAP'])
    return pd.DataFrame(rows)
