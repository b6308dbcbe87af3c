"""Adversarial-ensemble debiasing of classifiers over fixed representations.

Subpackages/modules:
  numkit      dense layers, softmax cross-entropy, AdamW, gradient checking
  fairmodel   main model, discriminator ensemble, adversarial training
  inlp        iterative null-space projection baseline
  fairmetrics TPR/TNR gaps and linear leakage probes
  datagen     synthetic skewed datasets and embedding-file I/O
  cli         experiment harness (train / sweep / gen-data / probe)
"""

from .numkit import KERNEL_BACKEND

__version__ = "0.1.0"
__all__ = ["KERNEL_BACKEND", "__version__"]
