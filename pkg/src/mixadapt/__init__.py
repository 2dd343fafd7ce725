"""Domain adaptation into a shared Gaussian-mixture embedding.

Source and target samples are encoded into a latent space whose prior is a
mixture of Gaussians, one component per class. The source model is fit
variationally; the target encoder is then aligned to the same components by
alternating a class-aware discriminator with variational and adversarial
target objectives, exploiting however many target labels exist.
"""

__version__ = "0.1.0"
