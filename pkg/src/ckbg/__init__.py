"""Kernel bypass grafting for low-latency online video super-resolution.

The package covers the full pipeline: a small tape-based autodiff engine over
dense 4-D tensors (:mod:`ckbg.tensor`), exact and entropic optimal transport on
grids (:mod:`ckbg.transport`), Wasserstein K-Means over teacher kernel banks
plus PCA-based graft construction (:mod:`ckbg.kernel_prior`), structural
re-parameterization of multi-branch blocks into single convolutions
(:mod:`ckbg.reparam`), the recurrent network itself (:mod:`ckbg.vsr_net`),
training and evaluation loops (:mod:`ckbg.train_eval`), and the command line
front end (:mod:`ckbg.cli`).
"""

__version__ = "0.1.0"
