"""rfcnet: temporal filtering for fully convolutional DenseNets.

Single-frame and recurrent segmentation models, a synthetic perturbed-video
benchmark (bouncing digit-marked squares with noise/occlusion/intensity
failures), a sharded dataset store, and a training/evaluation harness.
"""

__version__ = "0.1.0"

CLASS_BACKGROUND = 0
CLASS_WALL = 1
CLASS_STATIC_SQUARE = 2
CLASS_CIRCLE = 3
CLASS_DIGIT_BASE = 4  # dynamic square with digit d -> class 4 + d
N_CLASSES = 14
