#include "gsrecon/error.hpp"

namespace gsr {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Domain: return "domain error";
    case ErrorKind::Argument: return "argument error";
    case ErrorKind::Parse: return "parse error";
    case ErrorKind::Validation: return "validation error";
    case ErrorKind::State: return "state error";
    case ErrorKind::Factorization: return "factorization error";
    case ErrorKind::NoPlasma: return "no plasma";
    case ErrorKind::DegeneratePlasma: return "degenerate plasma";
    case ErrorKind::EmptySource: return "empty source";
    case ErrorKind::DivergentLambda: return "divergent lambda";
    case ErrorKind::Convergence: return "convergence error";
    case ErrorKind::Regularization: return "regularization error";
    case ErrorKind::OpenContour: return "open contour";
    case ErrorKind::DegenerateSurface: return "degenerate surface";
    case ErrorKind::NonphysicalProfile: return "nonphysical profile";
    case ErrorKind::EmptyStats: return "empty statistics";
    case ErrorKind::Io: return "i/o error";
  }
  return "error";
}

}  // namespace gsr
