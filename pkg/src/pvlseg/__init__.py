"""Text-conditioned segmentation with probabilistic cross-modal adapters.

Library layout:
  tensor       reverse-mode autodiff engine and deterministic RNG
  attention    probabilistic cross-attention primitive
  adapter      per-layer bidirectional fusion adapters
  encoders     toy vision/text transformer encoders and tokenizer
  seghead      patch-to-pixel segmentation head
  losses       Dice+BCE and soft contrastive objectives
  model        full trainable model assembly
  uncertainty  Monte-Carlo inference and entropy maps
  metrics      DSC / NSD / Brier / Spearman and reporting
  data         synthetic prompt-conditioned corpus generator
  train        Adam training loop and checkpoints
  config       key=value run configuration
  cli          command-line entry points
"""

__version__ = "0.1.0"
