#pragma once

#include <stdexcept>
#include <string>

namespace kinmo {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define KINMO_DEFINE_ERROR(Name)                      \
  class Name : public Error {                         \
   public:                                            \
    explicit Name(const std::string& what)            \
        : Error(std::string(#Name ": ") + what) {}    \
  }

// motion representation
KINMO_DEFINE_ERROR(InvalidMotion);
KINMO_DEFINE_ERROR(DegenerateRotation);
KINMO_DEFINE_ERROR(IncompleteDecomposition);
KINMO_DEFINE_ERROR(FormatError);

// annotation
KINMO_DEFINE_ERROR(InvalidEmbedding);
KINMO_DEFINE_ERROR(InvalidWindow);
KINMO_DEFINE_ERROR(InvalidAnnotation);

// alignment
KINMO_DEFINE_ERROR(EmptyContext);
KINMO_DEFINE_ERROR(DimError);
KINMO_DEFINE_ERROR(ZeroNormEmbedding);
KINMO_DEFINE_ERROR(InvalidTemperature);
KINMO_DEFINE_ERROR(InvalidLevel);

// generation / control
KINMO_DEFINE_ERROR(NotFitted);
KINMO_DEFINE_ERROR(EmptyMask);
KINMO_DEFINE_ERROR(FrozenWeightMutation);
KINMO_DEFINE_ERROR(ReasonerError);

// evaluation
KINMO_DEFINE_ERROR(InvalidCovariance);
KINMO_DEFINE_ERROR(InsufficientSamples);

// orchestration
KINMO_DEFINE_ERROR(ConfigError);
KINMO_DEFINE_ERROR(IngestError);
KINMO_DEFINE_ERROR(CheckpointError);

#undef KINMO_DEFINE_ERROR

class AnnotationBackendError : public Error {
 public:
  AnnotationBackendError(const std::string& what, int retries)
      : Error("AnnotationBackendError: " + what + " (after " +
              std::to_string(retries) + " retries)"),
        retries_(retries) {}
  int retries() const { return retries_; }

 private:
  int retries_;
};

class TrainingDiverged : public Error {
 public:
  TrainingDiverged(const std::string& stage, int epoch)
      : Error("TrainingDiverged: non-finite loss in " + stage + " at epoch " +
              std::to_string(epoch)),
        epoch_(epoch) {}
  int epoch() const { return epoch_; }

 private:
  int epoch_;
};

}  // namespace kinmo
