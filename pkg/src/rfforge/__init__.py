"""Recovery-factor estimation toolkit.

Tabular data handling, windowed mode imputation, rank-Gauss scaling, three
from-scratch regressors (boosted trees, epsilon-SVR, stepwise linear), cross-
validated tuning, Shapley attribution, and distribution-shift auditing.
"""

__version__ = "0.1.0"
