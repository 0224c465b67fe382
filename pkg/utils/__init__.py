"""
MOP Utilities
=============
Descriptor sources, evaluation metrics and report writing.
"""

from .descriptors import ActivationStore, DescriptorSource, ImageRef, ToyEmbedder
from .metrics import EvaluationMetrics
from .report_generator import ReportGenerator

__all__ = ['ActivationStore', 'DescriptorSource', 'ImageRef', 'ToyEmbedder',
           'EvaluationMetrics', 'ReportGenerator']
