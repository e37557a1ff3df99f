#pragma once

#include <stdexcept>
#include <string>

namespace slipfuse {

// Base for every domain error the library raises. Callers that do not care
// about the precise failure can catch this one type.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// --- dataset ---
struct MissingManifest : Error {
    explicit MissingManifest(const std::string& path)
        : Error("manifest not found: " + path) {}
};
struct SchemaMismatch : Error {
    explicit SchemaMismatch(const std::string& version)
        : Error("unknown manifest schema_version: " + version) {}
};
struct TrialValidationError : Error {
    explicit TrialValidationError(const std::string& details)
        : Error("trial validation failed:\n" + details) {}
};
struct InsufficientFrames : Error {
    explicit InsufficientFrames(const std::string& msg) : Error(msg) {}
};
struct AlreadyDifference : Error {
    AlreadyDifference() : Error("sample is already in difference format") {}
};
struct EmptyDataset : Error {
    EmptyDataset() : Error("dataset contains no trials") {}
};

// --- synthgrasp ---
struct InvalidParams : Error {
    explicit InvalidParams(const std::string& msg) : Error(msg) {}
};

// --- io / usage ---
struct IoError : Error {
    explicit IoError(const std::string& msg) : Error(msg) {}
};
struct UsageError : Error {
    explicit UsageError(const std::string& msg) : Error(msg) {}
};
struct UnsupportedImage : Error {
    explicit UnsupportedImage(const std::string& msg) : Error(msg) {}
};

// --- features ---
struct BackendUnavailable : Error {
    explicit BackendUnavailable(const std::string& name)
        : Error("backbone adapter not installed: " + name) {}
};
struct CacheCorrupt : Error {
    explicit CacheCorrupt(const std::string& path)
        : Error("feature cache entry corrupt: " + path) {}
};

// --- model / training ---
struct InvalidConfig : Error {
    explicit InvalidConfig(const std::string& msg) : Error(msg) {}
};
struct ShapeMismatch : Error {
    explicit ShapeMismatch(const std::string& msg) : Error(msg) {}
};
struct DivergenceError : Error {
    explicit DivergenceError(long step)
        : Error("loss became non-finite at optimizer step " + std::to_string(step)),
          step(step) {}
    long step;
};
struct ClassImbalanceError : Error {
    explicit ClassImbalanceError(const std::string& msg) : Error(msg) {}
};
struct CorruptCheckpoint : Error {
    explicit CorruptCheckpoint(const std::string& msg) : Error(msg) {}
};

// --- evaluation ---
struct LeakageError : Error {
    explicit LeakageError(const std::string& trial_id)
        : Error("trial appears in both train and test splits: " + trial_id) {}
};
struct MissingCells : Error {
    explicit MissingCells(const std::string& cells)
        : Error("report is missing grid cells: " + cells) {}
};

// --- baseline ---
struct NoMarkersFound : Error {
    NoMarkersFound() : Error("no markers detected in frame") {}
};
struct TrackingLost : Error {
    explicit TrackingLost(int frame, double matched_fraction)
        : Error("marker tracking lost at frame " + std::to_string(frame) +
                " (matched fraction " + std::to_string(matched_fraction) + ")"),
          frame(frame) {}
    int frame;
};

}  // namespace slipfuse
