"""stimlab: measuring how much each visual stimulus (shape, colour, texture)
drives a category label, via dense descriptors, encoders and linear SVMs."""

from .classifier import TrainConfig, predict, train_binary, train_ova
from .color import dense_color, rgb_to_cn
from .descriptors import DescriptorSet
from .encoding import (bow_encode, gmm_train, histogram_encode, ifv_encode, kmeans_train,
                       rcc_encode)
from .evaluation import (EncoderPipeline, SplitSpec, fraction_sweep, make_split, rank_stimuli,
                         read_manifest)
from .imaging import build_grid, load_image, load_mask, resize_to_height, to_grayscale
from .shape import dense_sift
from .texture import lbp_histogram, mslbp, prico_lbp

__version__ = "0.1.0"
