from .layers import conv2d, pixel_shuffle, pixel_unshuffle, context_mask
from .networks import (
    analysis_forward,
    attention_forward,
    context_forward,
    context_full,
    fusion_forward,
    fusion_raw,
    hyper_analysis_forward,
    hyper_synthesis_forward,
    synthesis_forward,
)
from .weights import NetworkWeights, init_random, load_weights, manifest, save_weights
