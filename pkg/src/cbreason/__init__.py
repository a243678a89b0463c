"""Guideline-conditioned concept models for interpretable image diagnosis.

The pipeline: corpora with binary concept annotations are enriched into
guideline-conformant reports through a pluggable generation client; a
dual-encoder concept model is trained with contrastive, diagnostic, and
concept supervision; reasoning prompts turn its predictions into validated,
grounded explanations; and the evaluation suite covers classification,
per-concept, and reviewer-rubric metrics.
"""

__version__ = "0.1.0"
