"""projcond: conditional moments of high-dimensional vectors under
low-dimensional projections.

Subpackages cover Haar/Stiefel sampling and triangular frames (linalg),
synthetic standardized laws (distributions), rotational-clone densities
(clones), the polynomial density-ratio expansion (expansion), moment
condition estimation (moments), conditional-moment Monte Carlo
(conditional), and closed-form error bounds (bounds).
"""

__version__ = "0.1.0"
