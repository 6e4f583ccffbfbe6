"""PathoGAN: weakly-supervised pathology segmentation, inpainting and sampling."""

__version__ = "1.0.0"
