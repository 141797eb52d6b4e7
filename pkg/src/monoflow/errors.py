"""Exception hierarchy.  Every error carries a ``details`` dict for JSON diagnostics."""


class MonoflowError(Exception):
    code = "error"

    def __init__(self, message: str, **details):
        super().__init__(message)
        self.details = details

    def to_dict(self) -> dict:
        return {"error": self.code, "message": str(self), **self.details}


class SpecError(MonoflowError):
    code = "malformed_spec"


class DomainError(MonoflowError):
    code = "outside_domain"


class UnitarityError(MonoflowError):
    code = "unitarity_failure"


class NotMonotone(MonoflowError):
    code = "not_monotone"


class MatchingAmbiguous(MonoflowError):
    code = "matching_ambiguous"


class BracketMissed(MonoflowError):
    code = "bracket_missed"


class QuadratureError(MonoflowError):
    code = "quadrature_nonconvergence"


class WindowTooLong(MonoflowError):
    code = "window_too_long"


class EigenvalueOnCircle(MonoflowError):
    code = "eigenvalue_on_circle"


class DegenerateAcrossCircle(MonoflowError):
    code = "degenerate_across_circle"


class LadderInfeasible(MonoflowError):
    code = "ladder_infeasible"


class HypothesisViolated(MonoflowError):
    code = "hypothesis_violated"


class PrecheckFailed(MonoflowError):
    code = "precheck_failed"


class StepFailure(MonoflowError):
    code = "step_failure"


class SchurSingular(MonoflowError):
    code = "schur_singular"


class CurveMatchingAmbiguous(MonoflowError):
    code = "curve_matching_ambiguous"


class ExtrapolationUnstable(MonoflowError):
    code = "extrapolation_unstable"
