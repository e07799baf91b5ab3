"""Segmentation toolkit for optical micrographs of exfoliated 2D-material flakes.

Modules: ``imagecore`` (images, masks, manifests), ``enhance`` (adaptive gamma
correction), ``quality`` (noise-aware quality score), ``pso`` (particle swarm
optimizer), ``grouping`` (chroma k-means), ``datasetops`` (statistics,
stratification, augmentation), ``ocr``/``loss``/``classifier`` (context head,
weighted loss, per-pixel model, weak learning), ``metrics``, ``synth``
(synthetic corpora), ``config``/``pipeline``/``cli`` (orchestration).
"""
__version__ = "0.1.0"
