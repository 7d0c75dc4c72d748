"""
Zero-shot cross-lingual classification
======================================

After contrastive pretraining, a softmax head on top of the document
embedding is fine-tuned on first-language pages only. Early stopping
watches the validation loss; the parameters of the best epoch are kept.
The fine-tuned classifier is then applied to second-language pages it has
never seen a label for.
"""

import numpy as np

from hmde.corpus import build_vocab, mine_triples
from hmde.model import HmdeConfig, HmdeModel
from hmde.pipeline import ClassifierHead, EarlyStopping, FinetuneConfig, PretrainConfig, evaluate_accuracy, finetune_classifier, pretrain
from hmde.synthetic import CorpusSpec, classification_split, generate_synthetic_corpus
from hmde.transformer import TransformerConfig

# the stopping rule on a hand-written trace: the best loss comes at epoch 2,
# seven epochs without a strictly lower loss end the run after epoch 9
stopper = EarlyStopping(patience=7)
for loss in [1.0, 0.9, 0.95, 0.96, 0.97, 0.98, 0.99, 1.00, 1.01]:
    stopper.update(loss)
print("stops after", stopper.epoch, "epochs, keeps epoch", stopper.best_epoch)

spec = CorpusSpec(num_concepts=120, mixture=(0.2, 0.2, 0.6), seed=0)
docs = generate_synthetic_corpus(spec)
train, val, test = classification_split(docs, *spec.languages, val_fraction=0.2)
labels = lambda ds: [d.label for d in ds]  # noqa: E731

config = HmdeConfig(
    lower=TransformerConfig(hidden_size=32, num_layers=2, num_heads=4, ff_size=64, init_std=0.3),
    upper=TransformerConfig(hidden_size=32, num_layers=2, num_heads=4, ff_size=64, max_positions=40),
)
model = HmdeModel(config, build_vocab(docs))
pretrain(model, mine_triples(docs, spec.languages, 0), docs,
         PretrainConfig(batch_size=2, grad_accumulation=1, epochs=4, base_lr=3e-3, warmup_steps=20))

head = ClassifierHead.init(4, 32)
cfg = FinetuneConfig(lr=1e-3, batch_size=4, grad_accumulation=1, max_epochs=30, warmup_steps=10, patience=7)
result = finetune_classifier(model, head, train, labels(train), val, labels(val), cfg)
print(f"ran {result.epochs_run} epochs, best validation loss at epoch {result.best_epoch}")
print("validation losses:", np.round(result.val_losses, 3).tolist())
print(f"accuracy  {spec.languages[0]} val {evaluate_accuracy(model, head, val, labels(val)):.2f}"
      f"  {spec.languages[1]} test {evaluate_accuracy(model, head, test, labels(test)):.2f}  (chance 0.25)")
