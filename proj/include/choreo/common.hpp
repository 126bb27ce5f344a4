#pragma once

#include <stdexcept>
#include <string>

namespace choreo {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

#define CHOREO_DEFINE_ERROR(Name)                       \
    struct Name : Error {                               \
        explicit Name(const std::string& msg)           \
            : Error(std::string(#Name) + ": " + msg) {} \
    }

// posemath
CHOREO_DEFINE_ERROR(DegenerateRotation);
CHOREO_DEFINE_ERROR(NotARotation);
CHOREO_DEFINE_ERROR(BadLength);

// gradkernels
CHOREO_DEFINE_ERROR(ShapeMismatch);
CHOREO_DEFINE_ERROR(GraphConsumed);

// diffusion
CHOREO_DEFINE_ERROR(StepOutOfRange);
CHOREO_DEFINE_ERROR(BadOverlap);
CHOREO_DEFINE_ERROR(BadSchedule);

// losses / encoders
CHOREO_DEFINE_ERROR(TooShort);
CHOREO_DEFINE_ERROR(BadBatch);
CHOREO_DEFINE_ERROR(TauNonPositive);
CHOREO_DEFINE_ERROR(BadCorpus);
CHOREO_DEFINE_ERROR(EmptyStyle);

// shapealign / stage1
CHOREO_DEFINE_ERROR(Diverged);
CHOREO_DEFINE_ERROR(InsufficientKeypoints);

// metrics
CHOREO_DEFINE_ERROR(TooFew);
CHOREO_DEFINE_ERROR(NoBeats);
CHOREO_DEFINE_ERROR(BadDistribution);
CHOREO_DEFINE_ERROR(UnknownStyle);
CHOREO_DEFINE_ERROR(BadAlpha);

// io
CHOREO_DEFINE_ERROR(BadMagic);
CHOREO_DEFINE_ERROR(Truncated);
CHOREO_DEFINE_ERROR(IoError);

#undef CHOREO_DEFINE_ERROR

}  // namespace choreo
