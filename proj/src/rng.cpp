#include "kinseq/rng.hpp"

#include <cmath>

#include "kinseq/common.hpp"

namespace kinseq {

double Rng::normal(double mean, double sigma) {
    // Box-Muller, one value per call; the discarded sine branch keeps the
    // stream layout independent of call parity.
    double u1 = next_double();
    double u2 = next_double();
    while (u1 <= 0.0) u1 = next_double();
    double r = std::sqrt(-2.0 * std::log(u1));
    return mean + sigma * r * std::cos(2.0 * M_PI * u2);
}

namespace {
std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}
}  // namespace

std::uint64_t derive_seed(std::uint64_t root, std::string_view tag) {
    Rng mix(root ^ fnv1a(tag));
    return mix.next_u64();
}

std::uint64_t derive_seed(std::uint64_t root, std::string_view tag, std::uint64_t index) {
    Rng mix(derive_seed(root, tag) + 0x9e3779b97f4a7c15ULL * (index + 1));
    return mix.next_u64();
}

const char* to_string(Task t) {
    switch (t) {
        case Task::Recognition: return "recognition";
        case Task::GesturePrediction: return "gesture_prediction";
        case Task::TrajectoryPrediction: return "trajectory_prediction";
    }
    return "?";
}

const char* to_string(Arm a) { return a == Arm::MTM ? "MTM" : "PSM"; }

Task task_from_string(const std::string& s) {
    if (s == "recognition") return Task::Recognition;
    if (s == "gesture_prediction") return Task::GesturePrediction;
    if (s == "trajectory_prediction") return Task::TrajectoryPrediction;
    throw ConfigError("unknown task '" + s +
                      "' (expected recognition|gesture_prediction|trajectory_prediction)");
}

Arm arm_from_string(const std::string& s) {
    if (s == "MTM" || s == "mtm") return Arm::MTM;
    if (s == "PSM" || s == "psm") return Arm::PSM;
    throw ConfigError("unknown arm '" + s + "' (expected MTM|PSM)");
}

}  // namespace kinseq
