#include "hadit/schedule.hpp"

#include <cmath>
#include <stdexcept>

namespace hadit {

namespace {
constexpr double kPi = 3.14159265358979323846;

double lambda_at_fraction(const ScheduleSpec& spec, double frac) {
    switch (spec.kind) {
        case ScheduleKind::Cos:
            return spec.lambda_base * 0.5 * (1.0 - std::cos(kPi * frac));
        case ScheduleKind::Sin:
            return spec.lambda_base * std::sin(kPi * frac);
        case ScheduleKind::CosInv:
            return spec.lambda_base * 0.5 * (1.0 + std::cos(kPi * frac));
        case ScheduleKind::Constant:
            return spec.lambda_base;
    }
    throw std::logic_error("unknown schedule kind");
}
}  // namespace

ScheduleKind parse_schedule_kind(const std::string& name) {
    if (name == "cos") return ScheduleKind::Cos;
    if (name == "sin") return ScheduleKind::Sin;
    if (name == "cosinv") return ScheduleKind::CosInv;
    if (name == "const") return ScheduleKind::Constant;
    throw std::invalid_argument("unknown schedule '" + name + "' (want cos|sin|cosinv|const)");
}

const char* schedule_kind_name(ScheduleKind k) {
    switch (k) {
        case ScheduleKind::Cos: return "cos";
        case ScheduleKind::Sin: return "sin";
        case ScheduleKind::CosInv: return "cosinv";
        case ScheduleKind::Constant: return "const";
    }
    return "?";
}

double lambda_at(const ScheduleSpec& spec, int t) {
    if (spec.total_steps < 1) throw std::invalid_argument("schedule: T must be >= 1");
    if (t < 0 || t > spec.total_steps)
        throw std::out_of_range("schedule: t " + std::to_string(t) + " outside [0, " +
                                std::to_string(spec.total_steps) + "]");
    return lambda_at_fraction(spec, static_cast<double>(t) / spec.total_steps);
}

double lambda_at_sigma(const ScheduleSpec& spec, double sigma) {
    if (sigma < 0.0 || sigma > 1.0)
        throw std::out_of_range("schedule: sigma outside [0, 1]");
    return lambda_at_fraction(spec, sigma);
}

std::vector<std::pair<int, double>> schedule_table(const ScheduleSpec& spec) {
    std::vector<std::pair<int, double>> table;
    table.reserve(spec.total_steps + 1);
    for (int t = 0; t <= spec.total_steps; ++t) table.emplace_back(t, lambda_at(spec, t));
    return table;
}

}  // namespace hadit
