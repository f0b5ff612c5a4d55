"""Pixel-level crack detection toolkit.

Subpackages and modules:

- ``geometry``  : spatial-resolution model for vehicle camera mounts
- ``connmaps``  : binary mask <-> 8-channel connectivity map codec + content loss
- ``nn``        : minimal deterministic tensor/layer engine with exact gradients
- ``models``    : generator (dense-block encoder + deconvolution head) and critic
- ``training``  : alternating Wasserstein adversarial training loop
- ``pipeline``  : tile / stitch / decode / component-filter inference
- ``metrics``   : tolerance-based precision/recall/F1, region grids, edge baselines
- ``data``      : manifests, image codecs, synthetic crack dataset

This module intentionally imports nothing heavy so that the CLI can pin BLAS
thread counts before numpy is first loaded.
"""

__version__ = "0.1.0"
