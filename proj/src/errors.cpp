#include "swt/errors.hpp"

namespace swt {

const char* errc_name(Errc c) {
    switch (c) {
        case Errc::NonConvergence: return "NonConvergence";
        case Errc::GridTooCoarse: return "GridTooCoarse";
        case Errc::OutOfRange: return "OutOfRange";
        case Errc::AssumptionViolated: return "AssumptionViolated";
        case Errc::ProfileRangeExceeded: return "ProfileRangeExceeded";
        case Errc::ResonantWeight: return "ResonantWeight";
        case Errc::DegenerateKernel: return "DegenerateKernel";
        case Errc::ZeroMode: return "ZeroMode";
        case Errc::TruncationTooSmall: return "TruncationTooSmall";
        case Errc::ContractionFailure: return "ContractionFailure";
        case Errc::MissingArtifact: return "MissingArtifact";
        case Errc::BadConfig: return "BadConfig";
    }
    return "Unknown";
}

}  // namespace swt
