from .certificate import (
    CertificateViolation,
    CostDominationReport,
    LyapunovCertificate,
    LyapunovTerms,
    certify,
    certify_problem,
    check_cost_domination,
    evaluate_LV,
    fit_envelope,
    lyapunov_terms,
)

__all__ = [
    "CertificateViolation",
    "CostDominationReport",
    "LyapunovCertificate",
    "LyapunovTerms",
    "certify",
    "certify_problem",
    "check_cost_domination",
    "evaluate_LV",
    "fit_envelope",
    "lyapunov_terms",
]
