from .autograd import Tensor, as_tensor, conv1d_causal, parameter, prelu
from .checkpoint import CheckpointError, ModelCheckpoint
from .network import MaskNetwork, NetworkConfig, features, forward
from .optim import AdamState, PlateauSchedule, adam_step, clip_grad_norm
