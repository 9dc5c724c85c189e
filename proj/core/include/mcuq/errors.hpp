#pragma once

#include <stdexcept>
#include <string>

namespace mcuq {

// Base class for every failure this library raises deliberately.  Callers
// that want a single catch site can catch Error; the concrete subclasses
// distinguish model defects from numerical trouble.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// ---- model validation ---------------------------------------------------

// Malformed input: non-square kernel, rows not summing to one, negative
// probabilities, rewards outside [0,1], feature rows longer than unit norm,
// discount outside [0,1), mismatched dimensions.
class InvalidModel : public Error {
public:
    using Error::Error;
};

// The transition kernel's positive-entry digraph is not strongly connected.
class NotIrreducible : public Error {
public:
    using Error::Error;
};

// The chain is irreducible but has period > 1.
class Periodic : public Error {
public:
    using Error::Error;
};

// The initial distribution puts mass where the stationary law has none.
class AbsoluteContinuityViolation : public Error {
public:
    using Error::Error;
};

// Feature second-moment matrix is numerically rank deficient.
class DegenerateFeatures : public Error {
public:
    using Error::Error;
};

// The steady-state TD matrix could not be inverted reliably.
class SingularA : public Error {
public:
    using Error::Error;
};

// Asymptotic noise covariance is rank deficient where positive definiteness
// is required (confidence ellipsoids, normalized completions).
class DegenerateGamma : public Error {
public:
    using Error::Error;
};

class SingularCovariance : public Error {
public:
    using Error::Error;
};

// ---- numerical / iteration failures -------------------------------------

// An iterative routine ran out of its iteration budget before reaching
// its residual tolerance.
class NoConvergence : public Error {
public:
    using Error::Error;
};

// Estimated contraction factor reached 1 (no usable spectral gap).
class SpectralGapViolation : public Error {
public:
    using Error::Error;
};

// A search (e.g. for a mixing time) exceeded its step cap.
class HorizonExceeded : public Error {
public:
    using Error::Error;
};

// Series truncation could not reach the requested tolerance under the cap.
class TruncationFailure : public Error {
public:
    using Error::Error;
};

// Iterate norm blew past the divergence guard (stepsize misconfiguration).
class NumericalOverflow : public Error {
public:
    using Error::Error;
};

// Linear system condition number too large to trust the solve.
class IllConditioned : public Error {
public:
    using Error::Error;
};

// (I - P + 1 mu^T) could not be inverted.
class SingularFundamentalMatrix : public Error {
public:
    using Error::Error;
};

// Remaining quadratic-variation budget failed its positive-semidefinite check.
class DeficitNotPSD : public Error {
public:
    using Error::Error;
};

// ---- experiment configuration --------------------------------------------

class InvalidDelta : public Error {
public:
    using Error::Error;
};

class DegenerateGrid : public Error {
public:
    using Error::Error;
};

// Random model generation hit its retry cap without an admissible draw.
class GenerationExhausted : public Error {
public:
    using Error::Error;
};

// A routine was asked to materialize more state than its memory budget.
class BudgetExceeded : public Error {
public:
    using Error::Error;
};

} // namespace mcuq
