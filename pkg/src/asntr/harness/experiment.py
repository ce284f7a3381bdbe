"""Problem construction from a validated config, and test-set evaluation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..finite_sum import (
    HALF_MSE,
    SOFTMAX_CE,
    Dataset,
    DenseMlp,
    MlpProblem,
    default_architecture,
    generate_synthetic,
    glorot_init,
    load_csv,
    load_idx_pair,
    normalize,
    train_test_split,
)

DEFAULT_THRESHOLD = 10.0
DEFAULT_NORMALIZATION = {
    "blobs-classification": "z-score",
    "rotation-regression": "zero-one",
    "idx": "zero-one",
    "csv": "z-score",
}


@dataclass
class Experiment:
    problem: object
    task: str  # classification | regression | quadratic
    train: Dataset | None = None
    test: Dataset | None = None
    net: DenseMlp | None = None
    threshold: float = DEFAULT_THRESHOLD

    def initial_point(self, seed):
        if self.net is not None:
            return glorot_init(self.net, seed)
        return np.random.default_rng(seed).normal(size=self.problem.dim)


def build_experiment(pcfg: dict) -> Experiment:
    kind = pcfg["kind"]
    seed = pcfg.get("data_seed", 0)
    if kind == "quadratic":
        opts = {k: pcfg[k] for k in ("indefinite", "cond", "spread") if k in pcfg}
        _, problem = generate_synthetic("quadratic", pcfg["n_samples"], pcfg["dim"], seed, **opts)
        return Experiment(problem, "quadratic")

    if kind == "blobs-classification":
        opts = {k: pcfg[k] for k in ("n_classes", "separation", "sigma") if k in pcfg}
        ds, _ = generate_synthetic(kind, pcfg["n_samples"], pcfg["dim"], seed, **opts)
        train, test = train_test_split(ds, pcfg["n_test"], seed)
        task = "classification"
    elif kind == "rotation-regression":
        opts = {"noise": pcfg["noise"]} if "noise" in pcfg else {}
        ds, _ = generate_synthetic(kind, pcfg["n_samples"], pcfg["dim"], seed, **opts)
        train, test = train_test_split(ds, pcfg["n_test"], seed)
        task = "regression"
    elif kind == "idx":
        n_classes = pcfg.get("n_classes", 10)
        train = load_idx_pair(pcfg["train_images"], pcfg["train_labels"], n_classes)
        test = load_idx_pair(pcfg["test_images"], pcfg["test_labels"], n_classes)
        task = "classification"
    elif kind == "csv":
        task = pcfg["task"]
        onehot = task == "classification"
        n_classes = pcfg.get("n_classes")
        train = load_csv(pcfg["train_csv"], onehot, n_classes)
        test = load_csv(pcfg["test_csv"], onehot, train.targets.shape[1] if onehot else None)
    else:
        raise ValueError(f"unknown problem kind {kind!r}")

    train, test = normalize(pcfg.get("normalization", DEFAULT_NORMALIZATION[kind]), train, test)
    d, c = train.features.shape[1], train.targets.shape[1]
    arch = tuple(pcfg["architecture"]) if "architecture" in pcfg else default_architecture(d, c, task)
    if arch[0] != d or arch[-1] != c:
        raise ValueError(f"architecture {list(arch)} does not fit data with {d} features "
                         f"and {c} outputs")
    net = DenseMlp(arch, SOFTMAX_CE if task == "classification" else HALF_MSE)
    return Experiment(MlpProblem(net, train), task, train, test, net,
                      pcfg.get("threshold", DEFAULT_THRESHOLD))


def prediction_accuracy(outputs, targets, task, threshold=DEFAULT_THRESHOLD) -> float:
    """Percentage of correct predictions.

    Classification compares argmaxes; ties go to the lowest index. Regression
    counts predictions with absolute error below ``threshold`` in every output.
    """
    if task == "classification":
        hits = np.argmax(outputs, axis=1) == np.argmax(targets, axis=1)
    else:
        hits = np.all(np.abs(outputs - targets) < threshold, axis=1)
    return 100.0 * float(np.mean(hits))


def evaluate_test(problem, w, test_dataset, task, threshold=DEFAULT_THRESHOLD):
    """Mean test loss and accuracy in percent.

    For a quadratic problem there is no test split: the loss is the full
    objective and the accuracy is nan.
    """
    if task == "quadratic":
        return problem.full_value(w), float("nan")
    net = problem.net
    out = net.forward(w, test_dataset.features)
    loss = float(np.mean(net.batch_loss(w, test_dataset.features, test_dataset.targets)))
    return loss, prediction_accuracy(out, test_dataset.targets, task, threshold)


def batch_accuracy(exp: Experiment, w, batch) -> float:
    if exp.task == "quadratic":
        return float("nan")
    idx = batch.indices
    out = exp.net.forward(w, exp.train.features[idx])
    return prediction_accuracy(out, exp.train.targets[idx], exp.task, exp.threshold)
