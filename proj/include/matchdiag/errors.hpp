#pragma once

#include <stdexcept>
#include <string>

namespace matchdiag {

// Base class for everything this library throws on bad input or a
// numeric failure. The CLI maps InvalidInput to exit code 2 and the
// numeric failures below to exit code 3.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InvalidInput : Error {
    using Error::Error;
};

struct SingularMatrix : Error {
    double offending_eigenvalue;
    explicit SingularMatrix(const std::string& msg, double eig = 0.0)
        : Error(msg), offending_eigenvalue(eig) {}
};

// Raised when a metric matrix annihilates every within-set difference,
// so the dissimilar-pair term of the learning objective is log(0).
struct DegenerateMetric : Error {
    using Error::Error;
};

// CSV / matched-sample validation failures, with enough context to name
// the violated invariant in the CLI error message.
struct ParseError : InvalidInput {
    enum class Kind {
        BadFile,
        MissingColumn,
        NonFiniteCovariate,
        SetSizeMismatch,
        TreatedCountViolation,
        InconsistentK,
        MissingOutcome,
    };
    Kind kind;
    ParseError(Kind k, const std::string& msg) : InvalidInput(msg), kind(k) {}
};

}  // namespace matchdiag
