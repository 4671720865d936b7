"""gel: glyph embedding lab.

Learns per-character latent embeddings from rasterized glyph images with a
convolutional variational autoencoder, augments them in embedding space,
and trains a character-level convolutional text classifier on top.
"""

__version__ = "0.1.0"
