"""Semi-supervised outlier detection for functional data.

Curves are projected on the Haar basis or on principal components fitted to
half of a clean reference set; coefficient levels whose distribution differs
between the reference and test sets are kept under Benjamini-Hochberg control
and the test curves are scored with the Local Outlier Factor.
"""

__version__ = "0.1.0"
