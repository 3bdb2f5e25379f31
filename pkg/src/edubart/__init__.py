"""Early-warning models for LMS usage data.

Pieces: an entity schema with cleaning rules and a monthly-cumulative
feature pipeline; a synthetic data generator with known ground truth; an
additive-tree classifier (probit link, school random intercepts) fitted by
MCMC; a random-forest baseline; metrics and the headline analyses; and a
CLI wiring it all together. Hot tree kernels run compiled when the
extension is built, with a numpy fallback selected at import.
"""

from ._kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = ["KERNEL_BACKEND", "__version__"]
