"""trapkit: an RGB-D camera-trap toolkit.

Subpackages cover the trap's day/night schedule (:mod:`trapkit.solar`),
motion triggering (:mod:`trapkit.motion`), stereo depth (:mod:`trapkit.stereo`),
synthetic RGB-D scene generation (:mod:`trapkit.synthgen`), the depth-fusion
segmentation network (:mod:`trapkit.fusenet`), COCO-style evaluation
(:mod:`trapkit.cocoeval`) and the recording pipeline (:mod:`trapkit.trapd`).
"""

__version__ = "0.1.0"
