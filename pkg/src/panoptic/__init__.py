"""Bottom-up panoptic segmentation pipeline without the neural backbone.

Modules:
    core         raster conventions, dataset spec, panoptic id encoding
    targets      ground-truth center heatmaps and offset fields
    losses       the three training objectives with analytic gradients
    postprocess  center extraction, pixel grouping, fusion, area filter
    metrics      PQ / mIoU / mask AP with mergeable accumulators
    harness      synthetic scenes, noise, tensor files and the CLI
"""

__version__ = "0.1.0"
