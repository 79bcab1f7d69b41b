"""Resampling heatmaps and a-contrario tamper scoring for images."""

__version__ = "0.1.0"

from .acontrario import (AcontrarioConfig, AContrarioDetector, binom_tail_exact, binom_tail_hoeffding,
                         detect_channel, estimate_p, nfa, threshold_heatmap)
from .core import (CHANNELS, BinaryMask, ChannelResult, FusionResult, Heatmap, HeatmapGeometry, NfaRecord,
                   Region, cell_to_patch, geometry_for)
from .evaluation import EvalPair, roc_auc
from .exceptions import (ConfigError, DegenerateEval, DomainError, FormatError, ImageTooSmall, ShapeError,
                         TamperError)
from .features import (BlockinessClassifier, HeatmapTransformer, PatchClassifier, PeriodicityClassifier,
                       baseline_jpeg_score, baseline_periodicity_score, build_heatmap, laplacian_residual,
                       radon_transform, spectral_features)
from .fusion import channel_score, fuse_scores, union_mask
from .pipeline import AnalysisReport, TamperDetector, analyze, run_analysis
from .proposals import (LevelSetProposer, ProposalConfig, RegionProposalSet, collect_proposals,
                        level_set_components, load_external_proposals, rasterize_region)

__all__ = [name for name in dir() if not name.startswith("_")]
