"""Data-dependent random projections.

Preprocess two sets of vectors with a linear map ``A`` (and ``A^{-T}`` on the
other side) before an oblivious random projection so that projected inner
products have lower variance. Modules:

``linalg``      Jacobi eigen/SVD and covariance factors
``moments``     second-moment estimation (batch and streaming)
``rp``          seeded sign/Gaussian projections and variance formulas
``preprocess``  identity, quick (diagonal) and optimal (CCA) preprocessors
``fmm``         approximate matrix products and the benchmark driver
``synth``       synthetic matrices and learning tasks
``learn``       lambda-scaled projected regression and classification
``io``          CSV/libsvm readers and the JSON results document
``cli``         the ``ddrp`` command
"""

__version__ = "0.1.0"

from .errors import DdrpError  # noqa: E402

__all__ = ["DdrpError", "__version__"]
