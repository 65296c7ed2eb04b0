#pragma once

#include <stdexcept>
#include <string>

namespace swt {

enum class Errc {
    NonConvergence,
    GridTooCoarse,
    OutOfRange,
    AssumptionViolated,
    ProfileRangeExceeded,
    ResonantWeight,
    DegenerateKernel,
    ZeroMode,
    TruncationTooSmall,
    ContractionFailure,
    MissingArtifact,
    BadConfig,
};

const char* errc_name(Errc c);

class Error : public std::runtime_error {
public:
    Error(Errc c, const std::string& what) : std::runtime_error(std::string(errc_name(c)) + ": " + what), code_(c) {}
    Errc code() const { return code_; }

private:
    Errc code_;
};

}  // namespace swt
