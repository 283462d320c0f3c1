"""Speech-emotion-recognition pipeline: DSP frontend, co-attention fusion of
frequency-domain features with frozen pretrained embeddings, multitask
training, and a speaker-disjoint cross-validation harness."""

__version__ = "0.1.0"
