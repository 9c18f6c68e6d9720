"""Checks shared across test modules."""

import numpy as np

from kenvreg.data import DataSet
from kenvreg.krr import krr_fit, krr_predict

# every model that passes through check_projection_identity is counted here,
# so the acceptance summary can report how many fitted models were verified
PROJECTION_CHECKS = {"models": 0, "worst": 0.0, "failures": 0}


def check_projection_identity(model, data: DataSet, X_new=None, center=True, tol=1e-9):
    """KENV prediction minus mean equals G G^T (KRR prediction minus mean)."""
    X_new = data.X if X_new is None else X_new
    krr = krr_fit(data, model.kernel, model.lam, center=center)
    lhs = model.predict(X_new) - model.y_mean
    rhs = (krr_predict(krr, X_new) - krr.y_mean) @ model.basis.projection
    gap = float(np.max(np.abs(lhs - rhs))) if lhs.size else 0.0
    PROJECTION_CHECKS["models"] += 1
    PROJECTION_CHECKS["worst"] = max(PROJECTION_CHECKS["worst"], gap)
    assert gap <= tol, f"projection identity off by {gap:g}"
    return gap
