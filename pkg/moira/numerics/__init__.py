from .tape import Tape, Var, backward, cosine_sim, dropout, leaky_relu, matmul, row_softmax
from .adam import AdamState, adam_step
