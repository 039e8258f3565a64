"""docforge: synthetic document-tampering engine.

Converts document images plus character-level OCR into tampered documents
with pixel-exact ground-truth masks, and mines the contrastive-pair and
crop-quality datasets used to train the optional similarity/quality models.
"""

__version__ = "0.1.0"
