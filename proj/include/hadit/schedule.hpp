#pragma once

#include <string>
#include <utility>
#include <vector>

namespace hadit {

enum class ScheduleKind { Cos, Sin, CosInv, Constant };

// Named lambda(t) schedule for the context-attention blend weight.
// Convention: large t = high noise = early denoising, so Cos ramps the
// coarse-context weight up toward the start of sampling and down to zero as
// refinement finishes.
struct ScheduleSpec {
    ScheduleKind kind = ScheduleKind::Cos;
    double lambda_base = 0.1;
    int total_steps = 1000;  // T
};

ScheduleKind parse_schedule_kind(const std::string& name);
const char* schedule_kind_name(ScheduleKind k);

// lambda at integer step t in [0, T].
double lambda_at(const ScheduleSpec& spec, int t);

// lambda at continuous noise level sigma in [0, 1], evaluated at t = sigma*T.
double lambda_at_sigma(const ScheduleSpec& spec, double sigma);

// lambda at every integer step 0..T, for plots and logs.
std::vector<std::pair<int, double>> schedule_table(const ScheduleSpec& spec);

}  // namespace hadit
