#pragma once

#include <stdexcept>
#include <string>

namespace mmloc {

struct InvalidGeometryError : std::runtime_error {
    explicit InvalidGeometryError(const std::string& msg) : std::runtime_error(msg) {}
};

struct InvalidSceneError : std::runtime_error {
    explicit InvalidSceneError(const std::string& msg) : std::runtime_error(msg) {}
};

struct InvalidQueryError : std::runtime_error {
    explicit InvalidQueryError(const std::string& msg) : std::runtime_error(msg) {}
};

struct InsufficientMeasurementsError : std::runtime_error {
    explicit InsufficientMeasurementsError(const std::string& msg) : std::runtime_error(msg) {}
};

struct InvalidTrackError : std::runtime_error {
    explicit InvalidTrackError(const std::string& msg) : std::runtime_error(msg) {}
};

struct InsufficientDataError : std::runtime_error {
    explicit InsufficientDataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct BootstrapFailureError : std::runtime_error {
    explicit BootstrapFailureError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

struct TrainingDivergedError : std::runtime_error {
    TrainingDivergedError(const std::string& msg, int epoch)
        : std::runtime_error(msg), epoch_(epoch) {}
    int epoch() const { return epoch_; }

  private:
    int epoch_;
};

struct FilterDegenerateError : std::runtime_error {
    explicit FilterDegenerateError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct StageDependencyError : std::runtime_error {
    explicit StageDependencyError(const std::string& msg) : std::runtime_error(msg) {}
};

struct StageFailureError : std::runtime_error {
    StageFailureError(const std::string& stage, const std::string& msg)
        : std::runtime_error("stage '" + stage + "' failed: " + msg), stage_(stage) {}
    const std::string& stage() const { return stage_; }

  private:
    std::string stage_;
};

}  // namespace mmloc
