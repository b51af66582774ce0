"""Text-guided ROI localization, region-aware mask planning, and a toy
sparse masked-reconstruction engine with occlusion metrics."""

__version__ = "0.1.0"
