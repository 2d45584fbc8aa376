"""Infrared small-object segmentation with central-difference and fast-Fourier convolutions."""
from .autograd import GradientTape, Parameter, Tensor, backward, precision
from .cdc import CdcLayer, cdc_brute, cdc_forward
from .checkpoint import load_checkpoint, save_checkpoint
from .config import ConfigError, RunConfig, config_from_dict, load_config
from .data import SynthConfig, load_dataset, split, synth_generate
from .ffc import FfcLayer, FfcResidualBlock, FourierUnit, ffc_forward, fourier_unit_forward
from .gradcheck import CheckReport, finite_diff_check
from .losses import LossConfig, bce_loss, soft_iou_loss, total_loss
from .metrics import MetricReport, curve_and_auc, evaluate, iou_dataset, niou_dataset, pd_fa
from .model import UcfConfig, UcfModel, build, parameter_count
from .optim import AdamW, OptimConfig, cosine_lr, optimizer_step

__version__ = "0.1.0"
