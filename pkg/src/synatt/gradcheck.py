"""Finite-difference verification of the analytic gradients.

Central differences at eps on a small two-layer model, swept over every
parameter group (projections, gate, feed-forward, layer norms, embeddings,
head). The comparison uses the guarded relative error
|a - fd| / max(|a|, |fd|, guard) so that coordinates whose true gradient
vanishes are judged on the absolute scale of the guard instead of dividing
by noise.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ad
from .model import (
    LabeledExample,
    SLAConfig,
    batch_logits,
    batch_loss,
    init_params,
    make_rng,
    preprocess,
)
from .conllu import parse_conllu
from .synth import make_example, synth_vocabulary


@dataclass
class GradCheckResult:
    max_rel_error: float
    worst_param: str
    per_group: dict[str, float]
    n_coordinates: int


def verification_config(seed: int = 7, mode: str = "sla") -> SLAConfig:
    return SLAConfig(
        n_layers=2,
        hidden=16,
        n_heads=2,
        m=2,
        mode=mode,
        max_len=16,
        seed=seed,
        batch_size=4,
        task="token-labeling",
    )


def _verification_batch(config: SLAConfig, n_examples: int = 3):
    rng = make_rng(config.seed, "gradcheck-data")
    rows = [make_example(rng, i, radius=config.m, n_min=4, n_max=7) for i in range(n_examples)]
    examples = [
        LabeledExample(sentences=tuple(parse_conllu(r["conllu"])), label=r["label"])
        for r in rows
    ]
    vocab = synth_vocabulary()
    return preprocess(examples, vocab, config), vocab


def finite_difference_check(
    seed: int = 7,
    eps: float = 1e-5,
    sample: int | None = None,
    config: SLAConfig | None = None,
    guard: float = 1e-5,
) -> GradCheckResult:
    """Compare analytic and central finite-difference gradients.

    ``sample`` limits the sweep to that many coordinates per parameter group
    (None checks every coordinate).
    """
    if config is None:
        config = verification_config(seed)
    config = replace(config, n_classes=2)
    prepped, vocab = _verification_batch(config)
    params = init_params(config, len(vocab), 2, make_rng(seed, "gradcheck-init"))
    index = np.arange(len(prepped))

    def loss():
        logits = batch_logits(params, config, prepped, index)
        return batch_loss(logits, prepped.token_labels[index], prepped.word_weight[index])

    root = loss()
    for _, t in params.named():
        t.zero_grad()
    root.backward()

    sample_rng = make_rng(seed, "gradcheck-sample")
    per_group: dict[str, float] = {}
    worst = ("", 0.0)
    checked = 0
    for name, t in params.named():
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        size = t.data.size
        if sample is not None and size > sample:
            coords = np.sort(sample_rng.choice(size, size=sample, replace=False))
        else:
            coords = np.arange(size)
        group_worst = 0.0
        flat = t.data.reshape(-1)
        for c in coords:
            original = flat[c]
            with ad.no_grad():
                flat[c] = original + eps
                f_plus = loss().item()
                flat[c] = original - eps
                f_minus = loss().item()
            flat[c] = original
            fd = (f_plus - f_minus) / (2 * eps)
            a = float(analytic.reshape(-1)[c])
            rel = abs(a - fd) / max(abs(a), abs(fd), guard)
            checked += 1
            if rel > group_worst:
                group_worst = rel
            if rel > worst[1]:
                worst = (f"{name}[{c}]", rel)
        per_group[name] = group_worst

    return GradCheckResult(
        max_rel_error=worst[1],
        worst_param=worst[0],
        per_group=per_group,
        n_coordinates=checked,
    )
