#pragma once

#include <stdexcept>
#include <string>

namespace kinseq {

// Error categories map 1:1 onto CLI exit codes (1/2/3).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

enum class Task { Recognition, GesturePrediction, TrajectoryPrediction };

enum class Arm { MTM, PSM };

const char* to_string(Task t);
const char* to_string(Arm a);
Task task_from_string(const std::string& s);
Arm arm_from_string(const std::string& s);

inline constexpr int kGestureClasses = 16;  // G1..G15 plus class 0 for unannotated samples

}  // namespace kinseq
