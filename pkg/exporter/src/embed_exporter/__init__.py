"""Export frozen pretrained speech-encoder hidden states as CMLT tensors."""

from .export import ExportJob, run_export
from .models import MODEL_TAGS, load_encoder
from .tensorfile import read_tensor, write_tensor

__all__ = ["ExportJob", "run_export", "MODEL_TAGS", "load_encoder",
           "read_tensor", "write_tensor"]
