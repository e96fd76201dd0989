#pragma once

#include <stdexcept>
#include <string>

namespace dyck {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

#define DYCK_ERROR_TYPE(Name) \
  struct Name : Error {       \
    using Error::Error;       \
  }

// dyck-core
DYCK_ERROR_TYPE(InvalidWord);
DYCK_ERROR_TYPE(StackUnderflow);
DYCK_ERROR_TYPE(NotACloser);
DYCK_ERROR_TYPE(UnknownToken);

// dataset
DYCK_ERROR_TYPE(SamplingStalled);
DYCK_ERROR_TYPE(HashMismatch);
DYCK_ERROR_TYPE(TargetMismatch);
DYCK_ERROR_TYPE(ParseError);

// tensor / autodiff
DYCK_ERROR_TYPE(ShapeMismatch);
DYCK_ERROR_TYPE(FullyMaskedRow);
DYCK_ERROR_TYPE(NonScalarLoss);
DYCK_ERROR_TYPE(ConsumedTape);

// models
DYCK_ERROR_TYPE(EmptyInput);

// optim / train
DYCK_ERROR_TYPE(NonPositiveIteration);
DYCK_ERROR_TYPE(AllMasked);
DYCK_ERROR_TYPE(Diverged);
DYCK_ERROR_TYPE(VersionMismatch);
DYCK_ERROR_TYPE(CorruptPayload);

// eval / compat / interp
DYCK_ERROR_TYPE(VocabMismatch);
DYCK_ERROR_TYPE(NotAttentionModel);
DYCK_ERROR_TYPE(MissingTrace);
DYCK_ERROR_TYPE(DegenerateSeries);
DYCK_ERROR_TYPE(ZeroVector);
DYCK_ERROR_TYPE(WriteError);

#undef DYCK_ERROR_TYPE

}  // namespace dyck
