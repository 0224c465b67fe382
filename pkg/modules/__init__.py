"""
MOP Modules
===========
Pooling pipeline, evaluation protocols and the desk-scale study.
"""

from .pipeline import MopEncoder, MopPipelineModel, PipelineSettings, fit_pipeline, encode_image
from .evaluation import RetrievalResult, retrieve, invariance_sweep, best_window, ten_crop_predict

__all__ = ['MopEncoder', 'MopPipelineModel', 'PipelineSettings', 'fit_pipeline', 'encode_image',
           'RetrievalResult', 'retrieve', 'invariance_sweep', 'best_window', 'ten_crop_predict']
