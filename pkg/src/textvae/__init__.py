"""Desk-scale latent-variable transformer language model.

A transformer encoder and causal transformer decoder joined by a Gaussian
latent bottleneck, trained with AE/VAE objectives under a cyclical beta
schedule with a free-bits KL floor, and evaluated with importance-weighted
perplexity, mutual information, and active units.
"""

from .autodiff import (AdamHyper, AdamState, NumericError, ShapeError, Tape,
                       Tensor, adam_step, backward)
from .model import (LatentInjection, ModelConfig, PosteriorParams,
                    build_injection, decode_greedy, decode_sample,
                    decoder_forward, encode, init_params)
from .objective import (BetaSchedule, DivergenceError, LossBreakdown,
                        TrainConfig, beta_at, compute_loss, gaussian_kl,
                        hinged_kl, reparameterize, train)
from .rng import RngState
from .tokenizer import (EncodedSentence, Vocabulary, build_vocab,
                        encode_sentence, load_corpus, synth_corpus)

__version__ = "0.1.0"
